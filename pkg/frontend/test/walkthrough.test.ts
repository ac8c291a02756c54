/**
 * Scripted walkthrough against a live service (spawned here), mirroring the
 * browser flow headlessly: the controller is exactly what the views drive.
 *
 * Covers: the requirement-chat dialogue filling the Task Description box,
 * skeleton generation with three steps, chain assembly opening the Block
 * View, a run surfacing the final answer in the Output Window and prompts /
 * outputs in the Block Console, and the debug toolbar (three suspensions,
 * edit-prompt + rerun touching only the current worker).
 */

import assert from 'node:assert/strict'
import { spawn, type ChildProcess } from 'node:child_process'
import { mkdtempSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { after, before, test } from 'node:test'

import { ApiClient } from '../src/api.js'
import { AppController } from '../src/app.js'

// assigned by the OS (--port 0) and parsed from the startup banner, so
// stale processes from aborted runs can never shadow this service
let BASE = ''

const TASK_V0 = 'Automatically generate questions'
const Q1 = 'What type of questions should be generated?'
const Q2 = 'Should the user control the difficulty level?'
const A1 = 'multiple-choice math questions'
const A2 = 'let the user input the difficulty level'
const TD_INTERMEDIATE =
  'The system should allow the user to generate multiple-choice math questions of varying difficulty levels.'
const TD_FINAL =
  'The system should allow the user to generate multiple-choice math questions of varying difficulty levels. ' +
  'The user should be able to input the difficulty level of the questions.'

const PROMPT_1 =
  'Generate multiple-choice math questions for a {{Difficulty_Level}} level student. ' +
  'Include questions from topics such as algebra, geometry, calculus, etc. ' +
  'Include the correct answer and three incorrect answers for each question.'
const PROMPT_2 = 'Generate answer options for the math questions: {{Math_Questions}}'
const PROMPT_3 = 'Generate the correct answer for each of the math questions: {{Answer_Options}}'

const SKELETON_REPLY = JSON.stringify({
  steps: [
    {
      name: 'Math_Questions',
      description: 'Generate multiple-choice math questions according to the difficulty level',
      prompts: [PROMPT_1, 'alternative b', 'alternative c'],
      inputs: ['Difficulty_Level'],
      engine: 'mock1',
    },
    {
      name: 'Answer_Options',
      description: 'Generate answer options for the math questions',
      prompts: [PROMPT_2, 'alternative b', 'alternative c'],
      inputs: ['Math_Questions'],
      engine: 'mock1',
    },
    {
      name: 'Correct_Answer',
      description: 'Generate the correct answer for the math questions',
      prompts: [PROMPT_3, 'alternative b', 'alternative c'],
      inputs: ['Answer_Options'],
      engine: 'mock1',
    },
  ],
})

// One script serves both the co-pilot calls and the chain workers; matchers
// key on text unique to each call's rendered prompt, first match wins.
const MOCK_SCRIPT = {
  rules: [
    { match: 'Return strict JSON', response: SKELETON_REPLY },
    { match: `Answer: ${A2}`, response: TD_FINAL },
    { match: `Answer: ${A1}`, response: TD_INTERMEDIATE },
    { match: `User: ${A2}`, response: 'Anything else the system should do?' },
    { match: `User: ${A1}`, response: Q2 },
    { match: TASK_V0, response: Q1 },
    { match: 'beginner level student', response: 'Q1. What is 2 + 2?' },
    { match: 'EDITED PROMPT', response: 'Q1. What is 5 + 5?' },
    { match: 'Generate the correct answer', response: 'Q1: (b) 4' },
    { match: 'Generate answer options', response: 'Q1 options: (a) 3 (b) 4 (c) 5 (d) 6' },
  ],
  default: 'UNEXPECTED PROMPT',
}

let service: ChildProcess

async function startService(storeRoot: string): Promise<void> {
  service = spawn('aichain', ['serve', '--port', '0', '--store-root', storeRoot], {
    stdio: ['ignore', 'pipe', 'pipe'],
  })
  const port = await new Promise<number>((resolve, reject) => {
    let banner = ''
    const watch = (chunk: Buffer) => {
      banner += String(chunk)
      const match = banner.match(/Uvicorn running on http:\/\/127\.0\.0\.1:(\d+)/)
      if (match) resolve(Number(match[1]))
    }
    service.stdout?.on('data', watch)
    service.stderr?.on('data', watch)
    service.on('exit', code => reject(new Error(`service exited early (${code}): ${banner}`)))
    setTimeout(() => reject(new Error(`service never came up: ${banner}`)), 20000).unref()
  })
  BASE = `http://127.0.0.1:${port}`
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const response = await fetch(`${BASE}/projects`)
      if (response.ok) return
    } catch {
      /* not up yet */
    }
    await new Promise(resolve => setTimeout(resolve, 150))
  }
  throw new Error('service did not answer')
}

async function waitFor(predicate: () => boolean, what: string, app?: AppController, ms = 15000): Promise<void> {
  const deadline = Date.now() + ms
  while (Date.now() < deadline) {
    if (predicate()) return
    await new Promise(resolve => setTimeout(resolve, 40))
  }
  const toasts = app ? ` (toasts: ${JSON.stringify(app.state.toasts)})` : ''
  throw new Error(`timed out waiting for ${what}${toasts}`)
}

/** Non-informational toasts; save confirmations are expected noise. */
function errorToasts(app: AppController): string[] {
  return app.state.toasts.filter(text => !text.startsWith('saved '))
}

before(async () => {
  const storeRoot = mkdtempSync(join(tmpdir(), 'aichain-ui-'))
  writeFileSync(join(storeRoot, 'walkthrough_mock.json'), JSON.stringify(MOCK_SCRIPT))
  await startService(storeRoot)
  const api = new ApiClient(BASE)
  await api.putHubEngines([
    { name: 'copilot', kind: 'mock', mock_script_ref: 'walkthrough_mock.json' },
    { name: 'mock1', kind: 'mock', mock_script_ref: 'walkthrough_mock.json' },
  ])
})

after(() => {
  // SIGKILL: a suspended session can hold its event stream open, and a
  // graceful uvicorn shutdown would wait for it forever
  service?.kill('SIGKILL')
})

test('design-view dialogue fills the Task Description box verbatim', async () => {
  const app = new AppController(new ApiClient(BASE))
  app.setCopilotEngine('copilot')

  await app.sendChat(TASK_V0)
  assert.equal(app.state.chat.at(-1)?.text, Q1)
  assert.equal(app.state.taskDescription, TASK_V0)

  await app.sendChat(A1)
  assert.equal(app.state.taskDescription, TD_INTERMEDIATE)
  assert.equal(app.state.chat.at(-1)?.text, Q2)

  await app.sendChat(A2)
  assert.equal(app.state.taskDescription, TD_FINAL)
  assert.deepEqual(errorToasts(app), [])
})

test('skeleton, assembly, run: three steps, Block View, Output Window', async () => {
  const app = new AppController(new ApiClient(BASE))
  app.setCopilotEngine('copilot')
  app.setTaskDescription(TD_FINAL)

  await app.generateSkeleton()
  assert.ok(app.state.skeleton)
  assert.equal(app.state.skeleton.steps.length, 3)
  assert.deepEqual(
    app.state.skeleton.steps.map(step => step.name),
    ['Math_Questions', 'Answer_Options', 'Correct_Answer'],
  )
  assert.equal(app.state.skeleton.steps[0].candidate_prompts.length, 3)

  await app.generateChain()
  assert.equal(app.state.view, 'blocks')
  assert.ok(app.state.editor)
  const chain = app.state.editor.doc.chain
  assert.equal(chain.length, 3)
  assert.equal(chain[2].kind, 'output')

  await app.startSession('run')
  assert.equal(app.state.sessionStatus, 'awaiting_input')
  await waitFor(() => app.state.awaitingPrompt === 'Difficulty_Level', 'input prompt', app)
  await app.sendConsoleInput('beginner')
  await app.streamFinished()

  assert.deepEqual(app.state.outputWindow, ['Q1: (b) 4'])
  const consoleKinds = app.state.blockConsole.map(entry => entry.event.kind)
  assert.equal(consoleKinds.filter(kind => kind === 'prompt_rendered').length, 3)
  assert.equal(consoleKinds.filter(kind => kind === 'engine_output').length, 3)
  assert.equal(consoleKinds.at(-1), 'finished')
  assert.deepEqual(errorToasts(app), [])
})

test('debug toolbar: three suspensions, edit-prompt + rerun touch only the current worker', async () => {
  const app = new AppController(new ApiClient(BASE))
  app.setCopilotEngine('copilot')
  app.setTaskDescription(TD_FINAL)
  await app.generateSkeleton()
  await app.generateChain()

  await app.startSession('debug')
  await waitFor(() => app.state.awaitingPrompt !== null, 'input prompt', app)
  await app.sendConsoleInput('beginner')
  await waitFor(() => app.state.sessionStatus === 'suspended', 'first suspension', app)

  // Step x3 -> three suspensions, then finished
  await app.debug('step')
  await waitFor(() => app.state.blockConsole.filter(e => e.event.kind === 'suspended').length >= 2, 'second suspension', app)
  await app.debug('step')
  await waitFor(() => app.state.blockConsole.filter(e => e.event.kind === 'suspended').length >= 3, 'third suspension', app)
  await app.debug('step')
  await app.streamFinished()
  assert.equal(app.state.sessionStatus, 'finished')
  const suspensions = app.state.blockConsole.filter(entry => entry.event.kind === 'suspended')
  assert.equal(suspensions.length, 3)

  // fresh debug session: edit the current worker's prompt and rerun
  await app.startSession('debug')
  await waitFor(() => app.state.awaitingPrompt !== null, 'input prompt', app)
  await app.sendConsoleInput('beginner')
  await waitFor(() => app.state.currentWorkerId !== null, 'current worker from the stream', app)
  const current = app.state.currentWorkerId
  assert.ok(current)

  await app.debug('edit_prompt', { worker_id: current, text: 'EDITED PROMPT {{Difficulty_Level}}' })
  await app.debug('rerun')
  await waitFor(
    () => app.state.blockConsole.some(entry => entry.event.kind === 'engine_output' && entry.event.attempt === 2),
    'rerun output',
    app,
  )
  assert.ok(app.state.blockConsole.some(entry => entry.event.kind === 'rerun_marker'))
  const attempt2 = app.state.blockConsole.filter(entry => entry.event.attempt === 2)
  assert.ok(attempt2.length >= 2) // rerun marker + fresh prompt/output
  assert.ok(attempt2.every(entry => entry.event.unit_id === current))
  const editedPrompt = app.state.blockConsole.find(
    entry => entry.event.kind === 'prompt_rendered' && entry.event.attempt === 2,
  )
  assert.ok(editedPrompt?.event.payload.startsWith('EDITED PROMPT beginner'))
  const rerunOutput = app.state.blockConsole.find(
    entry => entry.event.kind === 'engine_output' && entry.event.attempt === 2,
  )
  assert.equal(rerunOutput?.event.payload, 'Q1. What is 5 + 5?')

  await app.debug('continue')
  await app.streamFinished()
  assert.equal(app.state.sessionStatus, 'finished')
})
