/**
 * Client-side editor state: the project document plus UI-only state
 * (selection, recycle bin, canvas transform).
 *
 * Every edit is a pure transformation of the document (the previous value
 * is snapshotted for undo), and serializing always yields exactly the
 * document — UI-only state lives outside it, so any canvas arrangement
 * round-trips to an identical chain.
 */

import type { ProjectDoc, UnitDoc, WorkerDoc } from './types.js'

export interface CanvasTransform {
  x: number
  y: number
  zoom: number
}

/** Address of a unit list inside the document. */
export interface SlotRef {
  parentId: string | null // null + slot 'chain' is the top level
  slot: 'chain' | 'preworkers' | 'preunits' | 'units' | 'then' | 'else' | 'body'
}

const MAX_RECYCLE = 50
const MAX_UNDO = 100

export function freshId(): string {
  return Array.from({ length: 12 }, () => '0123456789abcdef'[Math.floor(Math.random() * 16)]).join('')
}

function clone<T>(value: T): T {
  return structuredClone(value)
}

function listOf(unit: UnitDoc, slot: SlotRef['slot']): UnitDoc[] | null {
  switch (slot) {
    case 'preunits':
      return unit.kind === 'container' ? unit.preunits : null
    case 'units':
      return unit.kind === 'container' ? unit.units : null
    case 'then':
      return unit.kind === 'if' ? unit.then : null
    case 'else':
      return unit.kind === 'if' ? unit.else : null
    case 'body':
      return unit.kind === 'while' || unit.kind === 'for' ? unit.body : null
    case 'preworkers':
      // workers also appear in preworker slots; only worker entries count as units
      return null
    default:
      return null
  }
}

function childLists(unit: UnitDoc): UnitDoc[][] {
  switch (unit.kind) {
    case 'container':
      return [unit.preunits, unit.units]
    case 'if':
      return [unit.then, unit.else]
    case 'while':
    case 'for':
      return [unit.body]
    case 'output':
      return [[unit.worker]]
    case 'worker':
      return [unit.preworkers.filter((p): p is WorkerDoc => p.kind === 'worker')]
    default:
      return []
  }
}

export function* walkUnits(units: UnitDoc[]): Generator<UnitDoc> {
  for (const unit of units) {
    yield unit
    for (const list of childLists(unit)) yield* walkUnits(list)
  }
}

export function findUnit(doc: ProjectDoc, id: string): UnitDoc | null {
  for (const unit of walkUnits(doc.chain)) if (unit.id === id) return unit
  return null
}

/** Re-id a subtree so duplicates never collide with their source. */
export function reidentify(unit: UnitDoc): UnitDoc {
  const copy = clone(unit)
  for (const node of walkUnits([copy])) node.id = freshId()
  return copy
}

function resolveSlot(doc: ProjectDoc, ref: SlotRef): UnitDoc[] | null {
  if (ref.parentId === null) return ref.slot === 'chain' ? doc.chain : null
  const parent = findUnit(doc, ref.parentId)
  if (parent === null) return null
  return listOf(parent, ref.slot)
}

function detach(doc: ProjectDoc, id: string): UnitDoc | null {
  const fromList = (units: UnitDoc[]): UnitDoc | null => {
    const index = units.findIndex(u => u.id === id)
    if (index >= 0) return units.splice(index, 1)[0]
    for (const unit of units) {
      const found = fromWithin(unit)
      if (found) return found
    }
    return null
  }
  const fromWithin = (unit: UnitDoc): UnitDoc | null => {
    switch (unit.kind) {
      case 'container':
        return fromList(unit.preunits) ?? fromList(unit.units)
      case 'if':
        return fromList(unit.then) ?? fromList(unit.else)
      case 'while':
      case 'for':
        return fromList(unit.body)
      case 'output':
        // the wrapped worker itself is mandatory, but its subtree is reachable
        return fromWithin(unit.worker)
      case 'worker': {
        const index = unit.preworkers.findIndex(p => p.kind === 'worker' && p.id === id)
        if (index >= 0) return unit.preworkers.splice(index, 1)[0] as UnitDoc
        for (const pre of unit.preworkers) {
          if (pre.kind === 'worker') {
            const found = fromWithin(pre)
            if (found) return found
          }
        }
        return null
      }
      default:
        return null
    }
  }
  return fromList(doc.chain)
}

function insertAfterSibling(doc: ProjectDoc, id: string, unit: UnitDoc): boolean {
  const inList = (units: UnitDoc[]): boolean => {
    const index = units.findIndex(u => u.id === id)
    if (index >= 0) {
      units.splice(index + 1, 0, unit)
      return true
    }
    return units.some(inWithin)
  }
  const inWithin = (host: UnitDoc): boolean => {
    switch (host.kind) {
      case 'container':
        return inList(host.preunits) || inList(host.units)
      case 'if':
        return inList(host.then) || inList(host.else)
      case 'while':
      case 'for':
        return inList(host.body)
      case 'output':
        return inWithin(host.worker)
      case 'worker': {
        const index = host.preworkers.findIndex(p => p.kind === 'worker' && p.id === id)
        if (index >= 0) {
          if (unit.kind !== 'worker') return false
          host.preworkers.splice(index + 1, 0, unit)
          return true
        }
        return host.preworkers.some(p => p.kind === 'worker' && inWithin(p))
      }
      default:
        return false
    }
  }
  return inList(doc.chain)
}

export class EditorDocument {
  doc: ProjectDoc
  selection: string | null = null
  recycleBin: UnitDoc[] = []
  canvas: CanvasTransform = { x: 0, y: 0, zoom: 1 }
  private undoStack: ProjectDoc[] = []

  constructor(doc: ProjectDoc) {
    this.doc = clone(doc)
  }

  /** The document exactly as the service stores it; UI state never leaks. */
  serialize(): ProjectDoc {
    return clone(this.doc)
  }

  canUndo(): boolean {
    return this.undoStack.length > 0
  }

  undo(): boolean {
    const previous = this.undoStack.pop()
    if (previous === undefined) return false
    this.doc = previous
    return true
  }

  private transform(mutate: (doc: ProjectDoc) => boolean): boolean {
    const before = clone(this.doc)
    const changed = mutate(this.doc)
    if (changed) {
      this.undoStack.push(before)
      if (this.undoStack.length > MAX_UNDO) this.undoStack.shift()
    } else {
      this.doc = before
    }
    return changed
  }

  addUnit(ref: SlotRef, index: number, unit: UnitDoc): boolean {
    return this.transform(doc => {
      const list = resolveSlot(doc, ref)
      if (list === null) return false
      list.splice(Math.max(0, Math.min(index, list.length)), 0, clone(unit))
      return true
    })
  }

  /** Delete into the recycle bin (bounded, UI-session only). */
  deleteUnit(id: string): boolean {
    let removed: UnitDoc | null = null
    const changed = this.transform(doc => {
      removed = detach(doc, id)
      return removed !== null
    })
    if (changed && removed) {
      this.recycleBin.push(removed)
      if (this.recycleBin.length > MAX_RECYCLE) this.recycleBin.shift()
      if (this.selection === id) this.selection = null
    }
    return changed
  }

  restoreFromBin(binIndex: number, ref: SlotRef, index: number): boolean {
    const unit = this.recycleBin[binIndex]
    if (unit === undefined) return false
    const restored = this.addUnit(ref, index, unit)
    if (restored) this.recycleBin.splice(binIndex, 1)
    return restored
  }

  moveUnit(id: string, ref: SlotRef, index: number): boolean {
    return this.transform(doc => {
      const unit = detach(doc, id)
      if (unit === null) return false
      // a slot inside the detached subtree is gone from the doc now, so a
      // self-nesting move naturally fails and the transform reverts
      const list = resolveSlot(doc, ref)
      if (list === null) return false
      list.splice(Math.max(0, Math.min(index, list.length)), 0, unit)
      return true
    })
  }

  duplicateUnit(id: string): UnitDoc | null {
    let copy: UnitDoc | null = null
    this.transform(doc => {
      const source = findUnit(doc, id)
      if (source === null) return false
      copy = reidentify(source)
      if (source.kind === 'worker') {
        // step names are identity; a duplicate must not collide
        const names = new Set(
          Array.from(walkUnits(doc.chain))
            .filter((u): u is WorkerDoc => u.kind === 'worker')
            .map(u => u.name),
        )
        let candidate = `${source.name}_copy`
        let counter = 2
        while (names.has(candidate)) candidate = `${source.name}_copy${counter++}`
        ;(copy as WorkerDoc).name = candidate
      }
      return insertAfterSibling(doc, id, copy)
    })
    return copy
  }

  setEnabled(id: string, enabled: boolean): boolean {
    return this.patchMeta(id, meta => {
      if (enabled) delete meta.enabled
      else meta.enabled = false
    })
  }

  setCollapsed(id: string, collapsed: boolean): boolean {
    return this.patchMeta(id, meta => {
      if (collapsed) meta.collapsed = true
      else delete meta.collapsed
    })
  }

  setComment(id: string, comment: string | null): boolean {
    return this.patchMeta(id, meta => {
      if (comment === null || comment === '') delete meta.comment
      else meta.comment = comment
    })
  }

  private patchMeta(id: string, patch: (meta: Record<string, unknown>) => void): boolean {
    return this.transform(doc => {
      const unit = findUnit(doc, id)
      if (unit === null) return false
      const meta = { ...(unit.meta ?? {}) }
      patch(meta)
      if (Object.keys(meta).length === 0) delete unit.meta
      else unit.meta = meta
      return true
    })
  }

  renameWorker(id: string, name: string): boolean {
    return this.transform(doc => {
      const unit = findUnit(doc, id)
      if (unit === null || unit.kind !== 'worker') return false
      unit.name = name
      return true
    })
  }

  setWorkerRefs(id: string, refs: { prompt?: string; engine?: string }): boolean {
    return this.transform(doc => {
      const unit = findUnit(doc, id)
      if (unit === null || unit.kind !== 'worker') return false
      if (refs.prompt !== undefined) unit.prompt = refs.prompt
      if (refs.engine !== undefined) unit.engine = refs.engine
      return true
    })
  }

  setVariable(name: string, value: ProjectDoc['variables'][number]['value']): boolean {
    return this.transform(doc => {
      const existing = doc.variables.find(v => v.name === name)
      if (existing) existing.value = clone(value)
      else doc.variables.push({ name, value: clone(value) })
      return true
    })
  }

  removeVariable(name: string): boolean {
    return this.transform(doc => {
      const index = doc.variables.findIndex(v => v.name === name)
      if (index < 0) return false
      doc.variables.splice(index, 1)
      return true
    })
  }
}
