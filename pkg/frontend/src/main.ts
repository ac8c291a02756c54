import { ApiClient } from './api.js'
import { AppController } from './app.js'
import { Renderer } from './render.js'

declare global {
  interface Window {
    app?: AppController
  }
}

document.addEventListener('DOMContentLoaded', () => {
  const params = new URLSearchParams(window.location.search)
  const base = params.get('api') ?? 'http://127.0.0.1:8000'
  const root = document.getElementById('app')!
  const api = new ApiClient(base)
  const app = new AppController(api, state => renderer.render(state))
  const renderer = new Renderer(root, app)
  window.app = app
  renderer.render(app.state)
})
