/**
 * Wire types for the aichain service.
 *
 * These mirror the project document and session payloads exactly; the
 * editor keeps its own UI-only state elsewhere so that serializing a
 * document back to the service never leaks view concerns.
 */

export interface ValueDoc {
  tag: 'text' | 'number' | 'boolean' | 'image-ref'
  payload: string | number | boolean
}

export type ExprDoc =
  | { kind: 'literal'; value: ValueDoc }
  | { kind: 'var'; name: string }
  | { kind: 'binary'; op: string; lhs: ExprDoc; rhs: ExprDoc }
  | { kind: 'not'; expr: ExprDoc }

export interface BlockMetaDoc {
  enabled?: boolean
  collapsed?: boolean
  comment?: string
  [extra: string]: unknown
}

export type PreworkerDoc =
  | { kind: 'console_input'; prompt: string }
  | { kind: 'variable_ref'; name: string }
  | WorkerDoc

export interface WorkerDoc {
  kind: 'worker'
  id: string
  name: string
  preworkers: PreworkerDoc[]
  prompt: string
  engine: string
  meta?: BlockMetaDoc
  [extra: string]: unknown
}

export interface ContainerDoc {
  kind: 'container'
  id: string
  name: string
  preunits: UnitDoc[]
  units: UnitDoc[]
  meta?: BlockMetaDoc
  [extra: string]: unknown
}

export interface ConsoleOutputDoc {
  kind: 'console_output'
  id: string
  expr: ExprDoc
  meta?: BlockMetaDoc
  [extra: string]: unknown
}

export interface AssignDoc {
  kind: 'assign'
  id: string
  var: string
  expr: ExprDoc
  meta?: BlockMetaDoc
  [extra: string]: unknown
}

export interface IfDoc {
  kind: 'if'
  id: string
  cond: ExprDoc
  then: UnitDoc[]
  else: UnitDoc[]
  meta?: BlockMetaDoc
  [extra: string]: unknown
}

export interface WhileDoc {
  kind: 'while'
  id: string
  cond: ExprDoc
  body: UnitDoc[]
  meta?: BlockMetaDoc
  [extra: string]: unknown
}

export interface ForDoc {
  kind: 'for'
  id: string
  var: string
  from: ExprDoc
  to: ExprDoc
  body: UnitDoc[]
  meta?: BlockMetaDoc
  [extra: string]: unknown
}

export interface OutputDoc {
  kind: 'output'
  id: string
  worker: WorkerDoc
  meta?: BlockMetaDoc
  [extra: string]: unknown
}

export type UnitDoc =
  | WorkerDoc
  | ContainerDoc
  | ConsoleOutputDoc
  | AssignDoc
  | IfDoc
  | WhileDoc
  | ForDoc
  | OutputDoc

export interface PromptDoc {
  name: string
  instruction: string
  context?: string | null
  examples?: string | null
  output_formatter?: string | null
  [extra: string]: unknown
}

export interface EngineDoc {
  name: string
  kind: 'chat' | 'completion' | 'image' | 'code-exec' | 'mock'
  model_id?: string
  endpoint?: string | null
  params?: Record<string, number>
  mock_script_ref?: string | null
  api_key_env?: string | null
  [extra: string]: unknown
}

export interface ProjectDoc {
  version: 1
  name: string
  variables: { name: string; value: ValueDoc }[]
  prompts: PromptDoc[]
  engines: EngineDoc[]
  chain: UnitDoc[]
  [extra: string]: unknown
}

export type EventKind =
  | 'worker_started'
  | 'prompt_rendered'
  | 'engine_output'
  | 'console_output'
  | 'output_window'
  | 'needs_input'
  | 'input_received'
  | 'suspended'
  | 'rerun_marker'
  | 'error'
  | 'finished'

export interface TranscriptEvent {
  kind: EventKind
  unit_id: string | null
  payload: string
  attempt: number
  seq: number
}

export type SessionStatus = 'running' | 'suspended' | 'awaiting_input' | 'finished' | 'failed'

export interface SessionInfo {
  session_id: string
  status: SessionStatus
}

export interface SkeletonStepDoc {
  name: string
  description: string
  candidate_prompts: string[]
  input_refs: string[]
  engine_ref?: string | null
}

export interface SkeletonDoc {
  task_description: string
  steps: SkeletonStepDoc[]
}

export type DebugCommandName = 'step' | 'continue' | 'edit_prompt' | 'rerun' | 'abort'

export interface ChatTurn {
  role: 'user' | 'copilot'
  text: string
}
