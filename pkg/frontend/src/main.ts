/**
 * Browser entry point: one store, one stream connection, render loop.
 * All mutations go through the service API; the view is re-rendered
 * from the projected model whenever records or action states change.
 */

import { ActionTracker, NeedsConfirmation } from './actions.js';
import { ApiClient, StreamClient } from './client.js';
import { renderApp } from './panels.js';
import { applyRecord, emptyViewModel } from './store.js';
import type { JournalRecord } from './types.js';

const httpBase = window.location.origin;
const wsBase = httpBase.replace(/^http/, 'ws');
const token = new URLSearchParams(window.location.search).get('token') ?? undefined;

const api = new ApiClient(httpBase, token);
const tracker = new ActionTracker(api);
const vm = emptyViewModel();
let connection = 'connecting';
let renderQueued = false;

const root = document.getElementById('app')!;

function render(): void {
  renderQueued = false;
  root.innerHTML = renderApp(vm, connection, tracker.pending);
}

function scheduleRender(): void {
  if (renderQueued) return;
  renderQueued = true;
  requestAnimationFrame(render);
}

tracker.onChange = scheduleRender;

const stream = new StreamClient({
  baseUrl: wsBase,
  token,
  socketFactory: (url) => new WebSocket(url) as any,
});
stream.onRecord = (record: JournalRecord) => {
  applyRecord(vm, record);
  if (record.kind === 'wf_event') {
    tracker.observe({ seq: record.seq, ...record.body.event });
  }
  scheduleRender();
};
stream.onStateChange = (state) => {
  connection = state;
  scheduleRender();
};
stream.connect();

async function send(command: Record<string, any>, destructive = false): Promise<void> {
  try {
    const confirmed = destructive
      ? window.confirm(`Confirm: ${tracker.summarize(command)}?`)
      : false;
    if (destructive && !confirmed) return;
    await tracker.submit(command, { confirmed });
  } catch (error) {
    if (!(error instanceof NeedsConfirmation)) throw error;
  }
}

root.addEventListener('click', (event) => {
  const target = event.target as HTMLElement;
  if (target.classList.contains('stop-ensemble')) {
    void send({ command: 'stop_ensemble',
                ensemble_id: target.dataset.ensemble }, true);
  } else if (target.classList.contains('ack-alert')) {
    void send({ command: 'ack_alert',
                alert_index: Number(target.dataset.index) });
  }
});

root.addEventListener('change', (event) => {
  const target = event.target as HTMLSelectElement;
  if (target.classList.contains('wind-dial')) {
    const ensembleId = target.dataset.ensemble!;
    const ensemble = vm.ensembles[ensembleId];
    void send({
      command: 'steer',
      incident_id: ensemble.incident_id,
      region: ensemble.region,
      selector: { ensemble: ensembleId },
      payload: { wind_direction: target.value },
    });
  }
});

// what-if launcher form
const form = document.getElementById('what-if') as HTMLFormElement | null;
form?.addEventListener('submit', (event) => {
  event.preventDefault();
  const data = new FormData(form);
  const sweepRaw = String(data.get('sweep') ?? '').trim();
  const command: Record<string, any> = {
    command: 'spawn_ensemble',
    template: String(data.get('template') || 'wildfire'),
    incident_id: String(data.get('incident') || ''),
    region: String(data.get('region') || '') || undefined,
  };
  if (sweepRaw) command.sweep = JSON.parse(sweepRaw);
  void send(command);
});

render();
