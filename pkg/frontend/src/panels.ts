/**
 * Panel renderers: pure functions from the view model to HTML strings.
 * Every datum renders with a `data-seq` staleness marker so nothing on
 * screen hides how old it is.
 */

import type {
  EnsemblePanel, MemberPanel, PendingAction, ViewModel,
} from './types.js';

const CELL_COLORS: Record<number, string> = {
  0: '#2c4a2e', // unburnt
  1: '#ff7b29', // burning
  2: '#4a4a4a', // burnt
  3: '#1b2c4a', // unburnable
};

export function escapeHtml(text: string): string {
  return text.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function renderFleetPanel(vm: ViewModel): string {
  const rows = Object.entries(vm.machines).sort().map(([id, machine]) => {
    const status = machine.last_status;
    const used = status ? status.total_nodes - status.free_nodes : 0;
    const total = status ? status.total_nodes : 0;
    const pct = total > 0 ? Math.round((used / total) * 100) : 0;
    const depths = status
      ? Object.entries(status.queued).map(([cls, n]) => `${cls}:${n}`).join(' ')
      : 'no snapshot';
    return `
      <div class="machine ${machine.health}" data-seq="${machine.seq}">
        <span class="name">${escapeHtml(id)}</span>
        <span class="health">${machine.health}</span>
        <div class="bar"><div class="fill" style="width:${pct}%"></div></div>
        <span class="util">${used}/${total} nodes</span>
        <span class="queues">${escapeHtml(depths)}</span>
        <span class="seq">#${machine.seq}</span>
      </div>`;
  });
  return `<div class="panel fleet"><h2>Fleet</h2>${rows.join('') ||
    '<p class="empty">no machines registered</p>'}</div>`;
}

export function renderIncidentPanel(vm: ViewModel): string {
  const blocks = Object.entries(vm.incidents).map(([id, incident]) => {
    const { initial, spent } = incident.tokens;
    const pct = initial > 0 ? Math.min(100, Math.round((spent / initial) * 100)) : 0;
    const jobs = Object.entries(vm.jobs)
      .filter(([, job]) => job.incident_id === id);
    const live = jobs.filter(([, job]) =>
      !['completed', 'abandoned', 'failed_rescheduling'].includes(job.federated_state));
    const atRisk = jobs.filter(([, job]) => job.at_risk);
    const riskFlags = atRisk.map(([rid]) =>
      `<span class="flag at-risk" data-request="${escapeHtml(rid)}">${escapeHtml(rid)}</span>`);
    return `
      <div class="incident" data-seq="${incident.seq}">
        <span class="name">${escapeHtml(incident.label)} (${escapeHtml(id)})</span>
        <div class="gauge"><div class="fill" style="width:${pct}%"></div></div>
        <span class="tokens">${spent.toFixed(0)} / ${initial.toFixed(0)} tokens</span>
        <span class="jobs">${live.length} live / ${jobs.length} jobs</span>
        ${riskFlags.join('')}
        <span class="seq">#${incident.seq}</span>
      </div>`;
  });
  return `<div class="panel incidents"><h2>Incidents</h2>${blocks.join('') ||
    '<p class="empty">no incidents</p>'}</div>`;
}

export function renderThumbnail(member: MemberPanel): string {
  const grid = member.last_frame?.outputs?.grid;
  if (!grid) return '<div class="thumb empty-thumb">no frames</div>';
  const cells = grid.cells.map((value: number) =>
    `<i style="background:${CELL_COLORS[value] ?? '#888'}"></i>`).join('');
  return `<div class="thumb" data-frame-seq="${member.last_frame!.seq}"
    style="grid-template-columns:repeat(${grid.width},1fr)">${cells}</div>`;
}

function renderMember(memberId: string, member: MemberPanel): string {
  const params = Object.entries(member.params)
    .filter(([name]) => !['grid', 'steps', 'step_duration'].includes(name))
    .map(([name, value]) => `${name}=${JSON.stringify(value)}`).join(' ');
  const burning = member.last_frame?.outputs?.burning;
  return `
    <div class="member ${member.state}" data-member="${escapeHtml(memberId)}"
         data-seq="${member.seq}">
      ${renderThumbnail(member)}
      <span class="name">${escapeHtml(memberId)}</span>
      <span class="state">${member.state}</span>
      ${burning !== undefined ? `<span class="burning">${burning} burning</span>` : ''}
      <span class="params">${escapeHtml(params)}</span>
      <span class="seq">#${member.seq} f${member.last_frame_seq}</span>
    </div>`;
}

export function renderEnsemblePanel(vm: ViewModel): string {
  const blocks = Object.entries(vm.ensembles).map(([id, ens]: [string, EnsemblePanel]) => {
    const members = ens.members
      .map((memberId) => renderMember(memberId, vm.members[memberId])).join('');
    return `
      <div class="ensemble ${ens.state}" data-ensemble="${escapeHtml(id)}"
           data-seq="${ens.seq}">
        <h3>${escapeHtml(id)} · ${escapeHtml(ens.template)}
            · ${escapeHtml(ens.region ?? '')} · ${ens.state}</h3>
        <div class="controls" data-ensemble="${escapeHtml(id)}">
          <label>wind
            <select class="wind-dial" data-ensemble="${escapeHtml(id)}">
              ${['calm', 'N', 'E', 'S', 'W'].map((d) =>
                `<option${d === ens.params.wind_direction ? ' selected' : ''}>${d}</option>`)
                .join('')}
            </select>
          </label>
          <button class="stop-ensemble" data-ensemble="${escapeHtml(id)}">stop</button>
        </div>
        <div class="members">${members}</div>
      </div>`;
  });
  return `<div class="panel ensembles"><h2>Ensembles</h2>${blocks.join('') ||
    '<p class="empty">no ensembles</p>'}</div>`;
}

export function renderTimelinePanel(vm: ViewModel, limit = 40): string {
  const rows = vm.events.slice(-limit).reverse().map((event) => {
    const chain = event.provenance
      .map((id) => `<a class="prov" href="#${escapeHtml(id)}">${escapeHtml(id)}</a>`)
      .join(' › ');
    return `
      <div class="event kind-${escapeHtml(event.kind)}" id="${escapeHtml(event.event_id)}"
           data-seq="${event.seq}">
        <span class="time">t=${event.timestamp}</span>
        <span class="kind">${escapeHtml(event.kind)}</span>
        <span class="id">${escapeHtml(event.event_id)}</span>
        ${chain ? `<span class="chain">${chain}</span>` : '<span class="chain root">root</span>'}
      </div>`;
  });
  return `<div class="panel timeline"><h2>Timeline</h2>${rows.join('') ||
    '<p class="empty">no events yet</p>'}</div>`;
}

export function renderAlerts(vm: ViewModel): string {
  const rows = vm.alerts.map((alert, index) => `
    <div class="alert ${alert.acked ? 'acked' : 'open'}" data-index="${index}"
         data-seq="${alert.seq}">
      <span class="kind">${escapeHtml(alert.kind)}</span>
      <span class="detail">${escapeHtml(JSON.stringify(alert.details))}</span>
      ${alert.acked ? '<span class="ack">acked</span>'
                    : `<button class="ack-alert" data-index="${index}">ack</button>`}
    </div>`);
  return `<div class="panel alerts"><h2>Alerts</h2>${rows.join('') ||
    '<p class="empty">all clear</p>'}</div>`;
}

export function renderPendingActions(pending: PendingAction[]): string {
  const rows = pending.map((entry) => `
    <div class="pending ${entry.state}" data-action="${entry.id}">
      <span>${escapeHtml(entry.summary)}</span>
      <span class="state">${entry.state}</span>
      ${entry.error ? `<span class="error">${escapeHtml(entry.error)}</span>` : ''}
    </div>`);
  return `<div class="pending-actions">${rows.join('')}</div>`;
}

export function renderBanner(state: string): string {
  if (state === 'live') return '';
  const text = state === 'connecting' ? 'connecting…'
    : 'stream disconnected, reconnecting…';
  return `<div class="banner ${state}">${text}</div>`;
}

export function renderApp(vm: ViewModel, connection: string,
                          pending: PendingAction[]): string {
  return [
    renderBanner(connection),
    renderPendingActions(pending),
    '<div class="grid">',
    renderFleetPanel(vm),
    renderIncidentPanel(vm),
    renderEnsemblePanel(vm),
    renderAlerts(vm),
    renderTimelinePanel(vm),
    '</div>',
  ].join('\n');
}
