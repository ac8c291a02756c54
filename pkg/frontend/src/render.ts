/**
 * DOM layer: paints AppState and forwards user intent to the controller.
 *
 * Blocks render as nested cards (slots are nested lists), which mirrors the
 * worker/container hierarchy without free-form 2D wiring.  Drag-and-drop
 * carries either a palette block type or an existing unit id.
 */

import type { AppController } from './app.js'
import type { AppState } from './app.js'
import { freshId } from './document.js'
import type { SlotRef } from './document.js'
import type { EngineDoc, UnitDoc, WorkerDoc } from './types.js'

type Child = Node | string | null | undefined

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | ((event: Event) => void)> = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag)
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === 'function') node.addEventListener(key, value)
    else if (key === 'class') node.className = value
    else node.setAttribute(key, value)
  }
  for (const child of children) {
    if (child === null || child === undefined) continue
    node.append(child instanceof Node ? child : document.createTextNode(child))
  }
  return node
}

const PALETTE: { type: string; label: string; group: string }[] = [
  { type: 'worker', label: 'Worker', group: 'Units' },
  { type: 'container', label: 'Container', group: 'Units' },
  { type: 'output', label: 'Output', group: 'Units' },
  { type: 'console_input', label: 'Input', group: 'Code' },
  { type: 'console_output', label: 'Console out', group: 'Code' },
  { type: 'assign', label: 'Assign', group: 'Code' },
  { type: 'if', label: 'If', group: 'Code' },
  { type: 'while', label: 'While', group: 'Code' },
  { type: 'for', label: 'For', group: 'Code' },
]

function paletteUnit(type: string, doc: { prompts: { name: string }[]; engines: { name: string }[] }): UnitDoc | null {
  const id = freshId()
  const prompt = doc.prompts[0]?.name ?? ''
  const engine = doc.engines[0]?.name ?? ''
  switch (type) {
    case 'worker':
      return { kind: 'worker', id, name: `Step_${id.slice(0, 4)}`, preworkers: [], prompt, engine }
    case 'container':
      return {
        kind: 'container', id, name: `Group_${id.slice(0, 4)}`, preunits: [],
        units: [{ kind: 'worker', id: freshId(), name: `Step_${id.slice(0, 4)}`, preworkers: [], prompt, engine }],
      }
    case 'output':
      return {
        kind: 'output', id,
        worker: { kind: 'worker', id: freshId(), name: `Step_${id.slice(0, 4)}`, preworkers: [], prompt, engine },
      }
    case 'console_output':
      return { kind: 'console_output', id, expr: { kind: 'literal', value: { tag: 'text', payload: '' } } }
    case 'assign':
      return { kind: 'assign', id, var: 'x', expr: { kind: 'literal', value: { tag: 'text', payload: '' } } }
    case 'if':
      return { kind: 'if', id, cond: { kind: 'literal', value: { tag: 'boolean', payload: true } }, then: [], else: [] }
    case 'while':
      return { kind: 'while', id, cond: { kind: 'literal', value: { tag: 'boolean', payload: false } }, body: [] }
    case 'for':
      return {
        kind: 'for', id, var: 'i',
        from: { kind: 'literal', value: { tag: 'number', payload: 1 } },
        to: { kind: 'literal', value: { tag: 'number', payload: 1 } },
        body: [],
      }
    default:
      return null
  }
}

export class Renderer {
  constructor(
    private readonly root: HTMLElement,
    private readonly app: AppController,
  ) {}

  private mutated(state: AppState): void {
    this.app.markDirty()
    this.render(state)
  }

  render(state: AppState): void {
    const panels = [
      this.nav(state),
      state.view === 'design' ? this.designView(state) : null,
      state.view === 'blocks' ? this.blockView(state) : null,
      state.view === 'hub' ? this.hubView() : null,
      state.view === 'engines' ? this.enginesView() : null,
      this.toasts(state),
    ]
    this.root.replaceChildren(...panels.filter((panel): panel is HTMLElement => panel !== null))
  }

  private nav(state: AppState): HTMLElement {
    const tab = (view: AppState['view'], label: string) =>
      el('button', {
        class: state.view === view ? 'tab active' : 'tab',
        click: () => this.app.setView(view),
      }, label)
    return el('nav', {},
      el('strong', {}, 'aichain studio'),
      tab('design', 'Design View'),
      tab('blocks', 'Block View'),
      tab('hub', 'Prompt Hub'),
      tab('engines', 'Engines'),
    )
  }

  private toasts(state: AppState): HTMLElement {
    return el('div', { class: 'toasts' },
      ...state.toasts.slice(-3).map(text => el('div', { class: 'toast' }, text)))
  }

  // -- design view ------------------------------------------------------------

  private designView(state: AppState): HTMLElement {
    const chatLog = el('div', { class: 'chat-log' },
      ...state.chat.map(turn =>
        el('div', { class: `turn ${turn.role}` }, `${turn.role === 'user' ? 'You' : 'Co-pilot'}: ${turn.text}`)))
    const chatInput = el('input', { placeholder: 'Describe your task or answer the question…' })
    const chatForm = el('form', {
      class: 'chat-form',
      submit: event => {
        event.preventDefault()
        if (chatInput.value.trim()) void this.app.sendChat(chatInput.value.trim())
        chatInput.value = ''
      },
    }, chatInput, el('button', { type: 'submit' }, 'Send'))

    const taskBox = el('textarea', {
      class: 'task-description',
      input: event => this.app.setTaskDescription((event.target as HTMLTextAreaElement).value),
    }) as HTMLTextAreaElement
    taskBox.value = state.taskDescription

    return el('main', { class: 'design' },
      el('section', { class: 'chat-panel' }, el('h2', {}, 'Requirement chat'), chatLog, chatForm),
      el('section', { class: 'td-panel' },
        el('h2', {}, 'Task Description'),
        taskBox,
        el('button', { class: 'primary', click: () => void this.app.generateSkeleton() }, 'Generate AI Chain Skeleton'),
      ),
      this.skeletonPanel(state),
    )
  }

  private skeletonPanel(state: AppState): HTMLElement {
    const skeleton = state.skeleton
    const steps = skeleton === null ? [] : skeleton.steps.map((step, index) => {
      const picker = el('div', { class: 'candidates' },
        ...step.candidate_prompts.map((prompt, candidate) =>
          el('label', { class: state.chosenCandidates[index] === candidate ? 'candidate chosen' : 'candidate' },
            el('input', {
              type: 'radio', name: `cand-${index}`,
              ...(state.chosenCandidates[index] === candidate ? { checked: '' } : {}),
              change: () => this.app.pickCandidate(index, candidate),
            }),
            el('textarea', {
              input: event => {
                step.candidate_prompts[candidate] = (event.target as HTMLTextAreaElement).value
              },
            }, prompt),
          )))
      const nameInput = el('input', {
        value: step.name,
        input: event => this.app.editStep(index, { name: (event.target as HTMLInputElement).value }),
      })
      const inputsInput = el('input', {
        value: step.input_refs.join(', '),
        placeholder: 'inputs (comma separated)',
        input: event =>
          this.app.editStep(index, {
            input_refs: (event.target as HTMLInputElement).value.split(',').map(s => s.trim()).filter(Boolean),
          }),
      })
      const engineInput = el('input', {
        value: step.engine_ref ?? '',
        placeholder: 'engine',
        input: event => this.app.editStep(index, { engine_ref: (event.target as HTMLInputElement).value || null }),
      })
      return el('div', { class: 'step-card' },
        el('header', {},
          el('span', { class: 'step-index' }, String(index + 1)),
          nameInput,
          el('button', { click: () => this.app.moveStep(index, -1) }, '↑'),
          el('button', { click: () => this.app.moveStep(index, 1) }, '↓'),
          el('button', { click: () => this.app.removeStep(index) }, '✕'),
        ),
        el('p', { class: 'step-desc' }, step.description),
        inputsInput, engineInput, picker,
      )
    })
    return el('section', { class: 'skeleton-panel' },
      el('h2', {}, 'AI Chain Skeleton'),
      ...steps,
      el('div', { class: 'skeleton-actions' },
        el('button', { click: () => this.app.addStep() }, 'Add step'),
        skeleton !== null
          ? el('button', { class: 'primary', click: () => void this.app.generateChain() }, 'Generate AI Chain')
          : null,
      ),
    )
  }

  // -- block view ---------------------------------------------------------------

  private blockView(state: AppState): HTMLElement {
    const editor = state.editor
    if (editor === null) return el('main', {}, el('p', {}, 'No project open. Generate a chain or load a project.'))
    const zoom = editor.canvas.zoom
    const canvas = el('div', { class: 'canvas', style: `transform: scale(${zoom})` },
      this.unitList(state, editor.doc.chain, { parentId: null, slot: 'chain' }))
    return el('main', { class: 'blocks' },
      el('aside', { class: 'toolbox' },
        el('h2', {}, 'Toolbox'),
        ...['Units', 'Code'].map(group =>
          el('div', { class: 'tool-group' },
            el('h3', {}, group),
            ...PALETTE.filter(p => p.group === group).map(item =>
              el('div', {
                class: 'tool', draggable: 'true',
                dragstart: event => {
                  ;(event as DragEvent).dataTransfer?.setData('text/aichain', JSON.stringify({ source: 'palette', blockType: item.type }))
                },
              }, item.label)))),
        el('h3', {}, 'Recycle Bin'),
        el('div', { class: 'bin' },
          ...editor.recycleBin.map((unit, index) =>
            el('div', { class: 'tool' },
              `${unit.kind} ${'name' in unit ? (unit as WorkerDoc).name : ''}`,
              el('button', {
                click: () => {
                  editor.restoreFromBin(index, { parentId: null, slot: 'chain' }, editor.doc.chain.length)
                  this.mutated(state)
                },
              }, 'restore')))),
        el('div', { class: 'zoom' },
          el('button', { click: () => { editor.canvas.zoom = Math.min(2, zoom + 0.1); this.render(state) } }, '+'),
          el('button', { click: () => { editor.canvas.zoom = Math.max(0.4, zoom - 0.1); this.render(state) } }, '−'),
          el('button', { click: () => { editor.canvas.zoom = 1; this.render(state) } }, 'aim'),
        ),
      ),
      el('section', { class: 'editor-pane' },
        el('div', { class: 'run-bar' },
          el('button', { class: 'primary', click: () => void this.app.startSession('run') }, 'Run'),
          el('button', { click: () => void this.app.startSession('debug') }, 'Debug'),
          ...(state.sessionMode === 'debug' && state.sessionStatus === 'suspended'
            ? [
                el('button', { click: () => void this.app.debug('step') }, 'Step'),
                el('button', { click: () => void this.app.debug('continue') }, 'Continue'),
                el('button', {
                  click: () => {
                    const current = state.currentWorkerId
                    if (current === null) return
                    const text = window.prompt('Replacement prompt text for the current worker:')
                    if (text !== null) void this.app.debug('edit_prompt', { worker_id: current, text })
                  },
                }, 'Edit prompt'),
                el('button', { click: () => void this.app.debug('rerun') }, 'Rerun'),
                el('button', { click: () => void this.app.abortSession() }, 'Abort'),
              ]
            : []),
          el('button', { click: () => { editor.undo(); this.mutated(state) } }, 'Undo'),
          el('button', { click: () => void this.app.saveProject() }, 'Save'),
          el('span', { class: 'status' }, state.sessionStatus ?? ''),
        ),
        canvas,
      ),
      el('section', { class: 'consoles' },
        el('div', { class: 'block-console' },
          el('h2', {}, 'Block Console'),
          el('div', { class: 'log' }, ...state.blockConsole.map(entry => this.consoleLine(entry))),
          this.consoleInput(state),
        ),
        el('div', { class: 'output-window' },
          el('h2', {}, 'Output'),
          el('div', { class: 'log' }, ...state.outputWindow.map(line => el('div', { class: 'out-line' }, line))),
        ),
      ),
    )
  }

  private consoleLine(entry: { event: { kind: string; payload: string; attempt: number }; workerName: string | null }): HTMLElement {
    const { event, workerName } = entry
    const prefix = workerName ? `[${workerName}] ` : ''
    return el('div', { class: `console-line ${event.kind}` }, `${prefix}${event.kind}: ${event.payload}`)
  }

  private consoleInput(state: AppState): HTMLElement | null {
    if (state.awaitingPrompt === null) return null
    const input = el('input', { class: 'needs-input', placeholder: state.awaitingPrompt, autofocus: '' })
    return el('form', {
      submit: event => {
        event.preventDefault()
        void this.app.sendConsoleInput(input.value)
      },
    }, input)
  }

  private unitList(state: AppState, units: UnitDoc[], ref: SlotRef): HTMLElement {
    const editor = state.editor!
    const host = el('div', {
      class: 'unit-list',
      dragover: event => event.preventDefault(),
      drop: event => {
        const dragEvent = event as DragEvent
        dragEvent.stopPropagation()
        dragEvent.preventDefault()
        const raw = dragEvent.dataTransfer?.getData('text/aichain')
        if (!raw) return
        const data = JSON.parse(raw)
        if (data.source === 'palette') {
          const unit = paletteUnit(data.blockType, editor.doc)
          if (unit) editor.addUnit(ref, units.length, unit)
        } else if (data.source === 'block') {
          editor.moveUnit(data.unitId, ref, units.length)
        }
        this.mutated(state)
      },
    }, ...units.map(unit => this.unitCard(state, unit)))
    return host
  }

  private unitCard(state: AppState, unit: UnitDoc): HTMLElement {
    const editor = state.editor!
    const meta = unit.meta ?? {}
    const disabled = meta.enabled === false
    const collapsed = meta.collapsed === true
    const running = state.runningWorkerId === unit.id
    const title =
      unit.kind === 'worker' || unit.kind === 'container'
        ? `${unit.kind}: ${unit.name}`
        : unit.kind
    const card = el('div', {
      class: `card ${unit.kind}${disabled ? ' disabled' : ''}${running ? ' running' : ''}`,
      draggable: 'true',
      dragstart: event => {
        ;(event as DragEvent).dataTransfer?.setData('text/aichain', JSON.stringify({ source: 'block', unitId: unit.id }))
        event.stopPropagation()
      },
      contextmenu: event => {
        event.preventDefault()
        this.contextMenu(state, unit, event as MouseEvent)
      },
    },
      el('header', {},
        running ? el('span', { class: 'bug-signal' }, '●') : null,
        meta.comment ? el('span', { class: 'comment-marker', title: String(meta.comment) }, '?') : null,
        el('span', { class: 'card-title' }, title),
        el('button', { class: 'mini', click: () => { editor.setCollapsed(unit.id, !collapsed); this.mutated(state) } },
          collapsed ? '▸' : '▾'),
      ),
    )
    if (collapsed) return card
    if (unit.kind === 'worker') card.append(this.workerBody(state, unit))
    if (unit.kind === 'container')
      card.append(
        this.slot(state, 'preunits', unit.preunits, { parentId: unit.id, slot: 'preunits' }),
        this.slot(state, 'units', unit.units, { parentId: unit.id, slot: 'units' }),
      )
    if (unit.kind === 'if')
      card.append(
        this.slot(state, 'then', unit.then, { parentId: unit.id, slot: 'then' }),
        this.slot(state, 'else', unit.else, { parentId: unit.id, slot: 'else' }),
      )
    if (unit.kind === 'while' || unit.kind === 'for')
      card.append(this.slot(state, 'body', unit.body, { parentId: unit.id, slot: 'body' }))
    if (unit.kind === 'output') card.append(this.unitCard(state, unit.worker))
    return card
  }

  private workerBody(state: AppState, worker: WorkerDoc): HTMLElement {
    const editor = state.editor!
    const prompts = editor.doc.prompts.map(p => p.name)
    const engines = editor.doc.engines.map(e => e.name)
    const select = (options: string[], value: string, apply: (next: string) => void) => {
      const node = el('select', {
        change: event => {
          apply((event.target as HTMLSelectElement).value)
          this.mutated(state)
        },
      }, ...options.map(option => el('option', option === value ? { selected: '' } : {}, option)))
      return node
    }
    return el('div', { class: 'worker-body' },
      el('div', { class: 'slot-label' }, 'preworkers'),
      el('ul', { class: 'preworkers' },
        ...worker.preworkers.map(pre =>
          el('li', {},
            pre.kind === 'console_input' ? `input: ${pre.prompt}` :
            pre.kind === 'variable_ref' ? `var: ${pre.name}` :
            this.unitCard(state, pre)))),
      el('div', { class: 'slot-label' }, 'prompt'),
      select(prompts, worker.prompt, next => editor.setWorkerRefs(worker.id, { prompt: next })),
      el('div', { class: 'slot-label' }, 'engine'),
      select(engines, worker.engine, next => editor.setWorkerRefs(worker.id, { engine: next })),
    )
  }

  private slot(state: AppState, label: string, units: UnitDoc[], ref: SlotRef): HTMLElement {
    return el('div', { class: 'sub-slot' },
      el('div', { class: 'slot-label' }, label),
      this.unitList(state, units, ref))
  }

  private contextMenu(state: AppState, unit: UnitDoc, event: MouseEvent): void {
    const editor = state.editor!
    document.querySelectorAll('.context-menu').forEach(node => node.remove())
    const item = (label: string, action: () => void) =>
      el('button', { click: () => { action(); menu.remove(); this.mutated(state) } }, label)
    const disabled = (unit.meta ?? {}).enabled === false
    const menu = el('div', { class: 'context-menu', style: `left:${event.pageX}px;top:${event.pageY}px` },
      item('Duplicate', () => editor.duplicateUnit(unit.id)),
      item('Delete', () => editor.deleteUnit(unit.id)),
      item((unit.meta ?? {}).collapsed ? 'Expand' : 'Collapse',
        () => editor.setCollapsed(unit.id, !(unit.meta ?? {}).collapsed)),
      item(disabled ? 'Enable' : 'Disable', () => editor.setEnabled(unit.id, disabled)),
      item('Comment…', () => {
        const text = window.prompt('Comment for this block:', String((unit.meta ?? {}).comment ?? ''))
        if (text !== null) editor.setComment(unit.id, text)
      }),
      ...(state.sessionMode === 'debug' && state.currentWorkerId === unit.id
        ? [item('Edit prompt…', () => {
            const text = window.prompt('Replacement prompt text:')
            if (text !== null) void this.app.debug('edit_prompt', { worker_id: unit.id, text })
          })]
        : []),
    )
    document.body.append(menu)
    document.addEventListener('click', () => menu.remove(), { once: true })
  }

  // -- hub and engines -----------------------------------------------------------

  private hubView(): HTMLElement {
    const listing = el('div', { class: 'hub-list' }, 'loading…')
    void this.app.api.hubPrompts().then(prompts => {
      listing.replaceChildren(
        ...prompts.map(prompt =>
          el('div', { class: 'hub-card' },
            el('strong', {}, prompt.name),
            el('pre', {}, prompt.instruction),
            this.app.state.editor
              ? el('button', {
                  click: () =>
                    void this.app.api
                      .importArtifact(this.app.state.editor!.doc.name, 'prompt', prompt.name)
                      .then(doc => this.app.openProject(doc))
                      .catch(error => this.app.toast(String(error))),
                }, 'Import into project')
              : null)))
    })
    return el('main', { class: 'hub' }, el('h2', {}, 'Prompt Hub'), listing)
  }

  private enginesView(): HTMLElement {
    const listing = el('div', { class: 'hub-list' }, 'loading…')
    void this.app.api.hubEngines().then((engines: EngineDoc[]) => {
      listing.replaceChildren(
        ...engines.map(engine =>
          el('div', { class: 'hub-card' },
            el('strong', {}, engine.name),
            el('span', {}, ` ${engine.kind} ${engine.model_id ?? ''}`),
            el('button', { click: () => this.app.setCopilotEngine(engine.name) }, 'Use for co-pilots'),
            this.app.state.editor
              ? el('button', {
                  click: () =>
                    void this.app.api
                      .importArtifact(this.app.state.editor!.doc.name, 'engine', engine.name)
                      .then(doc => this.app.openProject(doc))
                      .catch(error => this.app.toast(String(error))),
                }, 'Import into project')
              : null)))
    })
    return el('main', { class: 'hub' }, el('h2', {}, 'Engine Management'), listing)
  }
}
