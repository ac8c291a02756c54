/**
 * Typed HTTP client for the aichain service, plus an SSE transcript reader.
 *
 * The reader is built on fetch streaming (not EventSource) so the same code
 * runs in browsers and in Node for tests, and it tracks the last seen `seq`
 * so a reconnect resumes without replaying or reordering events.
 */

import type {
  ChatTurn,
  DebugCommandName,
  EngineDoc,
  ProjectDoc,
  PromptDoc,
  SessionInfo,
  SessionStatus,
  SkeletonDoc,
  TranscriptEvent,
} from './types.js'

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message)
  }
}

async function jsonOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText
    try {
      const body = await response.json()
      detail = typeof body.detail === 'string' ? body.detail : JSON.stringify(body.detail ?? body)
    } catch {
      /* keep statusText */
    }
    throw new ApiError(response.status, detail)
  }
  if (response.status === 204) return undefined as T
  return (await response.json()) as T
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, '') + path
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.url(path), {
      method,
      headers: body === undefined ? {} : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    })
    return jsonOrThrow<T>(response)
  }

  // -- projects -------------------------------------------------------------

  listProjects(): Promise<{ projects: string[] }> {
    return this.request('GET', '/projects')
  }

  getProject(name: string): Promise<ProjectDoc> {
    return this.request('GET', `/projects/${encodeURIComponent(name)}`)
  }

  createProject(doc: ProjectDoc): Promise<{ name: string }> {
    return this.request('POST', '/projects', doc)
  }

  putProject(doc: ProjectDoc): Promise<{ name: string }> {
    return this.request('PUT', `/projects/${encodeURIComponent(doc.name)}`, doc)
  }

  deleteProject(name: string): Promise<void> {
    return this.request('DELETE', `/projects/${encodeURIComponent(name)}`)
  }

  // -- co-pilots ---------------------------------------------------------------

  clarify(taskDescription: string, conversation: ChatTurn[], engine: EngineDoc | string): Promise<{ question: string }> {
    return this.request('POST', '/copilot/clarify', {
      task_description: taskDescription,
      conversation,
      engine,
    })
  }

  incorporate(
    taskDescription: string,
    question: string,
    answer: string,
    engine: EngineDoc | string,
  ): Promise<{ task_description: string }> {
    return this.request('POST', '/copilot/incorporate', {
      task_description: taskDescription,
      question,
      answer,
      engine,
    })
  }

  skeleton(taskDescription: string, engine: EngineDoc | string): Promise<SkeletonDoc> {
    return this.request('POST', '/copilot/skeleton', { task_description: taskDescription, engine })
  }

  assemble(skeleton: SkeletonDoc, defaultEngine?: string): Promise<ProjectDoc> {
    return this.request('POST', '/copilot/assemble', {
      skeleton,
      default_engine: defaultEngine ?? '',
    })
  }

  // -- sessions -----------------------------------------------------------------

  openSession(project: string, mode: 'run' | 'debug'): Promise<SessionInfo> {
    return this.request('POST', `/projects/${encodeURIComponent(project)}/sessions`, { mode })
  }

  sendInput(sessionId: string, value: string): Promise<{ status: SessionStatus }> {
    return this.request('POST', `/sessions/${sessionId}/input`, { value })
  }

  debugCommand(
    sessionId: string,
    command: DebugCommandName,
    extra: { worker_id?: string; text?: string } = {},
  ): Promise<{ status: SessionStatus }> {
    return this.request('POST', `/sessions/${sessionId}/debug`, { command, ...extra })
  }

  closeSession(sessionId: string): Promise<void> {
    return this.request('DELETE', `/sessions/${sessionId}`)
  }

  transcript(sessionId: string, after = -1): Promise<{ status: SessionStatus; events: TranscriptEvent[] }> {
    return this.request('GET', `/sessions/${sessionId}/transcript?after=${after}`)
  }

  sessionInfo(sessionId: string): Promise<{ status: SessionStatus }> {
    return this.request('GET', `/sessions/${sessionId}`)
  }

  // -- hub ---------------------------------------------------------------------------

  hubPrompts(): Promise<PromptDoc[]> {
    return this.request('GET', '/hub/prompts')
  }

  putHubPrompts(prompts: PromptDoc[]): Promise<{ count: number }> {
    return this.request('PUT', '/hub/prompts', prompts)
  }

  hubEngines(): Promise<EngineDoc[]> {
    return this.request('GET', '/hub/engines')
  }

  putHubEngines(engines: EngineDoc[]): Promise<{ count: number }> {
    return this.request('PUT', '/hub/engines', engines)
  }

  importArtifact(project: string, kind: 'prompt' | 'engine', name: string, overwrite = false): Promise<ProjectDoc> {
    return this.request('POST', `/projects/${encodeURIComponent(project)}/import`, {
      kind,
      name,
      overwrite,
    })
  }
}

/** Parse one SSE frame block into (event, data). */
function parseFrame(block: string): { event: string; data: string } | null {
  let event = 'message'
  const data: string[] = []
  for (const line of block.split('\n')) {
    if (line.startsWith('event: ')) event = line.slice(7)
    else if (line.startsWith('data: ')) data.push(line.slice(6))
  }
  if (data.length === 0 && event === 'message') return null
  return { event, data: data.join('\n') }
}

export interface StreamHandlers {
  onEvent: (event: TranscriptEvent) => void
  onEnd?: (status: string) => void
  onError?: (error: unknown) => void
}

/**
 * Transcript stream with replay protection: events at or below the last
 * seen seq are dropped, so reloading a page and reattaching to a live
 * session never replays or reorders.
 */
export class TranscriptStream {
  lastSeq = -1
  private stopped = false

  constructor(
    private readonly api: ApiClient,
    readonly sessionId: string,
  ) {}

  stop(): void {
    this.stopped = true
  }

  async consume(handlers: StreamHandlers): Promise<void> {
    try {
      const response = await fetch(
        this.api.baseUrl.replace(/\/$/, '') + `/sessions/${this.sessionId}/events?after=${this.lastSeq}`,
        { headers: { Accept: 'text/event-stream' } },
      )
      if (!response.ok || response.body === null) {
        throw new ApiError(response.status, 'event stream unavailable')
      }
      const reader = response.body.getReader()
      const decoder = new TextDecoder()
      let buffer = ''
      for (;;) {
        const { done, value } = await reader.read()
        if (this.stopped) {
          await reader.cancel()
          return
        }
        if (done) break
        buffer += decoder.decode(value, { stream: true })
        let split
        while ((split = buffer.indexOf('\n\n')) >= 0) {
          const frame = parseFrame(buffer.slice(0, split))
          buffer = buffer.slice(split + 2)
          if (frame === null) continue
          if (frame.event === 'transcript') {
            const event = JSON.parse(frame.data) as TranscriptEvent
            if (event.seq <= this.lastSeq) continue
            this.lastSeq = event.seq
            handlers.onEvent(event)
          } else if (frame.event === 'end') {
            handlers.onEnd?.(frame.data)
          }
        }
      }
    } catch (error) {
      if (!this.stopped) handlers.onError?.(error)
    }
  }
}
