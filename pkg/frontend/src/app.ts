/**
 * Application controller: all view behavior without the DOM.
 *
 * The render layer subscribes via `onChange` and paints `state`; tests
 * drive the controller directly against a live service.  Execution state
 * is owned by the server — the controller only mirrors transcripts into
 * the Block Console and Output Window.
 */

import { ApiClient, TranscriptStream } from './api.js'
import { EditorDocument } from './document.js'
import type {
  ChatTurn,
  DebugCommandName,
  EngineDoc,
  ProjectDoc,
  SessionStatus,
  SkeletonDoc,
  TranscriptEvent,
} from './types.js'

export type ViewName = 'design' | 'blocks' | 'hub' | 'engines'

export interface ConsoleEntry {
  event: TranscriptEvent
  workerName: string | null
}

export interface AppState {
  view: ViewName
  // design view
  taskDescription: string
  chat: ChatTurn[]
  pendingQuestion: string | null
  skeleton: SkeletonDoc | null
  chosenCandidates: number[]
  copilotEngine: string | EngineDoc | null
  // block view
  editor: EditorDocument | null
  // execution
  sessionId: string | null
  sessionStatus: SessionStatus | null
  sessionMode: 'run' | 'debug' | null
  blockConsole: ConsoleEntry[]
  outputWindow: string[]
  awaitingPrompt: string | null
  currentWorkerId: string | null
  runningWorkerId: string | null
  // misc
  toasts: string[]
}

const BLOCK_CONSOLE_KINDS = new Set([
  'worker_started',
  'prompt_rendered',
  'engine_output',
  'console_output',
  'needs_input',
  'input_received',
  'suspended',
  'rerun_marker',
  'error',
  'finished',
])

export class AppController {
  state: AppState
  private stream: TranscriptStream | null = null
  private streamDone: Promise<void> | null = null
  private saveTimer: ReturnType<typeof setTimeout> | null = null

  constructor(
    readonly api: ApiClient,
    private readonly onChange: (state: AppState) => void = () => {},
  ) {
    this.state = {
      view: 'design',
      taskDescription: '',
      chat: [],
      pendingQuestion: null,
      skeleton: null,
      chosenCandidates: [],
      copilotEngine: null,
      editor: null,
      sessionId: null,
      sessionStatus: null,
      sessionMode: null,
      blockConsole: [],
      outputWindow: [],
      awaitingPrompt: null,
      currentWorkerId: null,
      runningWorkerId: null,
      toasts: [],
    }
  }

  private changed(): void {
    this.onChange(this.state)
  }

  toast(message: string): void {
    this.state.toasts.push(message)
    this.changed()
  }

  private async guarded<T>(action: () => Promise<T>): Promise<T | null> {
    try {
      return await action()
    } catch (error) {
      this.toast(error instanceof Error ? error.message : String(error))
      return null
    }
  }

  setView(view: ViewName): void {
    this.state.view = view
    this.changed()
  }

  // -- design view -------------------------------------------------------------

  setCopilotEngine(engine: string | EngineDoc): void {
    this.state.copilotEngine = engine
    this.changed()
  }

  /** The task description box is directly editable at any time. */
  setTaskDescription(text: string): void {
    this.state.taskDescription = text
    this.changed()
  }

  /**
   * One chat round: the first message seeds the task description, later
   * messages answer the pending question and are incorporated into it;
   * afterwards the co-pilot asks the next question.
   */
  async sendChat(message: string): Promise<void> {
    const engine = this.state.copilotEngine
    if (engine === null) {
      this.toast('pick a co-pilot engine first')
      return
    }
    this.state.chat.push({ role: 'user', text: message })
    this.changed()
    await this.guarded(async () => {
      if (this.state.pendingQuestion !== null && this.state.taskDescription !== '') {
        const updated = await this.api.incorporate(
          this.state.taskDescription,
          this.state.pendingQuestion,
          message,
          engine,
        )
        this.state.taskDescription = updated.task_description
      } else {
        this.state.taskDescription = message
      }
      const reply = await this.api.clarify(this.state.taskDescription, this.state.chat, engine)
      this.state.pendingQuestion = reply.question
      this.state.chat.push({ role: 'copilot', text: reply.question })
      this.changed()
    })
  }

  async generateSkeleton(): Promise<void> {
    const engine = this.state.copilotEngine
    if (engine === null || this.state.taskDescription === '') {
      this.toast('need a task description and a co-pilot engine')
      return
    }
    await this.guarded(async () => {
      const skeleton = await this.api.skeleton(this.state.taskDescription, engine)
      this.state.skeleton = skeleton
      this.state.chosenCandidates = skeleton.steps.map(() => 0)
      this.changed()
    })
  }

  // skeleton editing: steps can be renamed, reordered, added and removed,
  // and each step offers a three-way candidate prompt picker

  pickCandidate(stepIndex: number, candidate: number): void {
    if (this.state.skeleton === null) return
    this.state.chosenCandidates[stepIndex] = candidate
    this.changed()
  }

  editStep(stepIndex: number, patch: Partial<SkeletonDoc['steps'][number]>): void {
    const skeleton = this.state.skeleton
    if (skeleton === null) return
    Object.assign(skeleton.steps[stepIndex], patch)
    this.changed()
  }

  moveStep(stepIndex: number, delta: -1 | 1): void {
    const skeleton = this.state.skeleton
    if (skeleton === null) return
    const target = stepIndex + delta
    if (target < 0 || target >= skeleton.steps.length) return
    const [step] = skeleton.steps.splice(stepIndex, 1)
    skeleton.steps.splice(target, 0, step)
    const [chosen] = this.state.chosenCandidates.splice(stepIndex, 1)
    this.state.chosenCandidates.splice(target, 0, chosen)
    this.changed()
  }

  addStep(): void {
    const skeleton = this.state.skeleton ?? { task_description: this.state.taskDescription, steps: [] }
    skeleton.steps.push({
      name: `Step_${skeleton.steps.length + 1}`,
      description: '',
      candidate_prompts: ['', '', ''],
      input_refs: [],
      engine_ref: null,
    })
    this.state.skeleton = skeleton
    this.state.chosenCandidates.push(0)
    this.changed()
  }

  removeStep(stepIndex: number): void {
    if (this.state.skeleton === null) return
    this.state.skeleton.steps.splice(stepIndex, 1)
    this.state.chosenCandidates.splice(stepIndex, 1)
    this.changed()
  }

  /** Assemble the skeleton into blocks and open the Block View. */
  async generateChain(defaultEngine?: string): Promise<void> {
    const skeleton = this.state.skeleton
    if (skeleton === null) {
      this.toast('generate a skeleton first')
      return
    }
    const ordered: SkeletonDoc = {
      task_description: skeleton.task_description || this.state.taskDescription,
      steps: skeleton.steps.map((step, index) => {
        const chosen = this.state.chosenCandidates[index] ?? 0
        const prompts = [...step.candidate_prompts]
        if (chosen > 0) {
          const [picked] = prompts.splice(chosen, 1)
          prompts.unshift(picked)
        }
        return { ...step, candidate_prompts: prompts }
      }),
    }
    await this.guarded(async () => {
      const doc = await this.api.assemble(ordered, defaultEngine)
      this.openProject(doc)
    })
  }

  // -- block view ---------------------------------------------------------------

  openProject(doc: ProjectDoc): void {
    this.state.editor = new EditorDocument(doc)
    this.state.view = 'blocks'
    this.changed()
  }

  async loadProject(name: string): Promise<void> {
    await this.guarded(async () => {
      this.openProject(await this.api.getProject(name))
    })
  }

  async saveProject(): Promise<void> {
    const editor = this.state.editor
    if (editor === null) return
    if (this.saveTimer !== null) {
      clearTimeout(this.saveTimer)
      this.saveTimer = null
    }
    await this.guarded(async () => {
      const doc = editor.serialize()
      const existing = await this.api.listProjects()
      if (existing.projects.includes(doc.name)) await this.api.putProject(doc)
      else await this.api.createProject(doc)
      this.toast(`saved ${doc.name}`)
    })
  }

  /** Optimistic local edits persist on idle; call after each editor mutation. */
  markDirty(idleMs = 1500): void {
    if (this.saveTimer !== null) clearTimeout(this.saveTimer)
    this.saveTimer = setTimeout(() => {
      this.saveTimer = null
      void this.saveProject()
    }, idleMs)
    this.changed()
  }

  // -- execution ------------------------------------------------------------------

  private routeEvent(event: TranscriptEvent): void {
    if (event.kind === 'worker_started') this.state.runningWorkerId = event.unit_id
    if (event.kind === 'suspended') {
      this.state.currentWorkerId = event.unit_id
      this.state.runningWorkerId = null
    }
    if (event.kind === 'finished' || event.kind === 'error') this.state.runningWorkerId = null
    if (event.kind === 'needs_input') this.state.awaitingPrompt = event.payload
    if (event.kind === 'input_received') this.state.awaitingPrompt = null
    if (event.kind === 'output_window') {
      this.state.outputWindow.push(event.payload)
    }
    if (BLOCK_CONSOLE_KINDS.has(event.kind)) {
      this.state.blockConsole.push({ event, workerName: this.workerName(event.unit_id) })
    }
    this.changed()
  }

  private workerName(unitId: string | null): string | null {
    if (unitId === null || this.state.editor === null) return null
    for (const unit of walk(this.state.editor.doc.chain)) {
      if (unit.id === unitId) return unit.kind === 'worker' ? unit.name : unit.kind
    }
    return null
  }

  /** Run or debug the current project; the transcript streams in live. */
  async startSession(mode: 'run' | 'debug'): Promise<void> {
    const editor = this.state.editor
    if (editor === null) {
      this.toast('open a project first')
      return
    }
    await this.saveProject()
    await this.guarded(async () => {
      const info = await this.api.openSession(editor.doc.name, mode)
      this.state.sessionId = info.session_id
      this.state.sessionMode = mode
      this.state.sessionStatus = info.status
      this.state.blockConsole = []
      this.state.outputWindow = []
      this.state.awaitingPrompt = null
      this.state.currentWorkerId = null
      this.changed()
      this.attachStream()
    })
  }

  /**
   * (Re)attach to the live event stream.  Reattaching to the same session
   * resumes after the last seen seq; a different session starts fresh.
   */
  attachStream(): void {
    const sessionId = this.state.sessionId
    if (sessionId === null) return
    const previous = this.stream
    this.stream = new TranscriptStream(this.api, sessionId)
    if (previous) {
      if (previous.sessionId === sessionId) this.stream.lastSeq = previous.lastSeq
      previous.stop()
    }
    this.streamDone = this.stream.consume({
      onEvent: event => this.routeEvent(event),
      onEnd: status => {
        this.state.sessionStatus = status as SessionStatus
        this.changed()
      },
      onError: error => this.toast(`event stream failed: ${error}`),
    })
  }

  /** Resolves when the stream has delivered everything and closed. */
  async streamFinished(): Promise<void> {
    await this.streamDone
  }

  async sendConsoleInput(value: string): Promise<void> {
    const sessionId = this.state.sessionId
    if (sessionId === null) return
    await this.guarded(async () => {
      const result = await this.api.sendInput(sessionId, value)
      this.state.sessionStatus = result.status
      this.state.awaitingPrompt = null
      this.changed()
    })
  }

  async debug(command: DebugCommandName, extra: { worker_id?: string; text?: string } = {}): Promise<void> {
    const sessionId = this.state.sessionId
    if (sessionId === null) return
    await this.guarded(async () => {
      const result = await this.api.debugCommand(sessionId, command, extra)
      this.state.sessionStatus = result.status
      this.changed()
    })
  }

  async abortSession(): Promise<void> {
    const sessionId = this.state.sessionId
    if (sessionId === null) return
    await this.guarded(() => this.api.closeSession(sessionId))
    this.state.sessionStatus = 'failed'
    this.changed()
  }
}

function* walk(units: ProjectDoc['chain']): Generator<ProjectDoc['chain'][number]> {
  for (const unit of units) {
    yield unit
    switch (unit.kind) {
      case 'container':
        yield* walk(unit.preunits)
        yield* walk(unit.units)
        break
      case 'if':
        yield* walk(unit.then)
        yield* walk(unit.else)
        break
      case 'while':
      case 'for':
        yield* walk(unit.body)
        break
      case 'output':
        yield* walk([unit.worker])
        break
      case 'worker':
        yield* walk(unit.preworkers.filter(p => p.kind === 'worker') as ProjectDoc['chain'])
        break
      default:
        break
    }
  }
}
