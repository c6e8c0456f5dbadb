/**
 * View model as a pure projection of the server's record stream.
 *
 * applyRecord mirrors, field for field, the server's own fold over its
 * journal, so the state rendered from a live stream is identical to the
 * state a full refresh reconstructs from the GET endpoints; the
 * projection-equality test holds the two against each other. Every
 * entity carries the sequence number of the record that last touched
 * it, so stale panels are visibly stale rather than silently wrong.
 */

import type {
  AlertEntry, EnsemblePanel, IncidentPanel, JobPanel, JournalRecord,
  MachinePanel, MemberPanel, TimelineEvent, ViewModel,
} from './types.js';

export function emptyViewModel(): ViewModel {
  return {
    seq: 0,
    machines: {},
    incidents: {},
    jobs: {},
    ensembles: {},
    members: {},
    events: [],
    alerts: [],
  };
}

export function applyRecord(vm: ViewModel, record: JournalRecord): void {
  const { seq, t, kind, body } = record;
  vm.seq = Math.max(vm.seq, seq);
  switch (kind) {
    case 'machine_registered':
      vm.machines[body.machine_id] = {
        seq,
        endpoint: body.endpoint,
        credential_label: body.credential_label ?? '',
        health: 'healthy',
        suspect_count: 0,
        last_status: null,
      };
      break;
    case 'machine_marked': {
      const machine = vm.machines[body.machine_id];
      machine.health = body.health;
      machine.suspect_count = body.suspect_count ?? 0;
      machine.seq = seq;
      break;
    }
    case 'poll_observed': {
      const machine = vm.machines[body.machine_id];
      machine.last_status = body.summary;
      machine.health = 'healthy';
      machine.suspect_count = 0;
      machine.seq = seq;
      break;
    }
    case 'incident_created':
      vm.incidents[body.incident_id] = {
        seq,
        label: body.label,
        ruleset: body.ruleset ?? null,
        active: true,
        tokens: { initial: body.tokens, spent: 0 },
        created_at: t,
      };
      break;
    case 'tokens_changed': {
      const incident = vm.incidents[body.incident_id];
      incident.tokens.spent += body.delta;
      incident.seq = seq;
      break;
    }
    case 'request_submitted': {
      let job = vm.jobs[body.request_id];
      if (job === undefined) {
        job = vm.jobs[body.request_id] = {
          seq,
          incident_id: body.incident_id,
          origin: body.origin ?? { kind: 'external' },
          nodes: body.nodes,
          walltime: body.walltime,
          deadline: body.deadline,
          max_priority: body.max_priority,
          speculation: body.speculation,
          submitted_at: t,
          placements: [],
          chosen_placement: null,
          federated_state: 'pending',
          at_risk: Boolean(body.at_risk),
          alerted_deadline: false,
        };
      }
      job.at_risk = Boolean(body.at_risk ?? job.at_risk);
      for (const placement of body.placements) {
        job.placements.push({
          machine_id: placement.machine_id,
          machine_job_id: placement.machine_job_id,
          priority_class: placement.priority_class,
          debit: placement.debit,
          state: 'queued',
        });
      }
      if (job.placements.length > 0 && job.federated_state === 'pending') {
        job.federated_state = 'placed';
      }
      job.seq = seq;
      break;
    }
    case 'placement_changed': {
      const job = vm.jobs[body.request_id];
      const placement = job.placements[body.index];
      placement.state = body.state;
      if (body.note) placement.note = body.note;
      job.seq = seq;
      break;
    }
    case 'request_state': {
      const job = vm.jobs[body.request_id];
      job.federated_state = body.federated_state;
      if ('chosen_placement' in body) job.chosen_placement = body.chosen_placement;
      if (body.alerted_deadline) job.alerted_deadline = true;
      job.seq = seq;
      break;
    }
    case 'ensemble_spawned':
      vm.ensembles[body.ensemble_id] = {
        seq,
        incident_id: body.incident_id,
        region: body.region ?? null,
        template: body.template,
        params: body.params,
        steerable: body.steerable,
        pipeline: body.pipeline,
        workload: body.workload,
        job: body.job,
        state: 'active',
        members: [],
        provenance: body.provenance ?? [],
        spawned_at: t,
      };
      break;
    case 'member_added':
      vm.ensembles[body.ensemble_id].members.push(body.member_id);
      vm.members[body.member_id] = {
        seq,
        ensemble_id: body.ensemble_id,
        request_id: body.request_id,
        params: body.params,
        seed: body.seed,
        state: 'live',
        last_frame_seq: 0,
        last_frame: null,
        outbox: [],
        applied_messages: [],
        dropped_frames: 0,
      };
      break;
    case 'ensemble_state': {
      const ens = vm.ensembles[body.ensemble_id];
      ens.state = body.state;
      ens.seq = seq;
      break;
    }
    case 'member_state': {
      const member = vm.members[body.member_id];
      member.state = body.state;
      member.seq = seq;
      break;
    }
    case 'steering_issued':
      for (const memberId of body.targets) {
        const member = vm.members[memberId];
        member.outbox.push({
          message_id: body.message_id,
          payload: body.payload,
          issued_at: t,
          provenance: body.provenance ?? [],
          state: 'pending',
        });
        member.seq = seq;
      }
      break;
    case 'steering_applied': {
      const member = vm.members[body.member_id];
      if (member.applied_messages.includes(body.message_id)) break;
      member.applied_messages.push(body.message_id);
      for (const entry of member.outbox) {
        if (entry.message_id === body.message_id) {
          entry.state = 'applied';
          entry.applied_at_step = body.step;
        }
      }
      member.params = { ...member.params, ...body.effective_params };
      member.seq = seq;
      break;
    }
    case 'frame_reduced': {
      const member = vm.members[body.member_id];
      if (body.seq > member.last_frame_seq) {
        member.last_frame_seq = body.seq;
        member.last_frame = {
          seq: body.seq, sim_time: body.sim_time, outputs: body.outputs,
        };
      }
      member.seq = seq;
      break;
    }
    case 'frame_dropped': {
      const member = vm.members[body.member_id];
      if (member !== undefined) {
        member.dropped_frames += 1;
        member.seq = seq;
      }
      break;
    }
    case 'alert':
      vm.alerts.push({
        seq,
        at: t,
        kind: body.alert_kind,
        details: body.details ?? {},
        acked: false,
      });
      break;
    case 'alert_acked': {
      const alert = vm.alerts[body.index];
      if (alert !== undefined) {
        alert.acked = true;
        alert.seq = seq;
      }
      break;
    }
    case 'wf_event':
      vm.events.push({ seq, ...body.event } as TimelineEvent);
      break;
    default:
      break; // decision / rule_fired / defs_loaded etc. carry no panel state
  }
}

export function applyAll(vm: ViewModel, records: JournalRecord[]): ViewModel {
  for (const record of records) applyRecord(vm, record);
  return vm;
}

/** Rebuild the same view model from the GET endpoints (full refresh). */
export function fromRest(rest: {
  machines: any[]; incidents: any[]; jobs: any[]; ensembles: any[];
  events: TimelineEvent[]; alerts: any[]; last_seq: number;
}): ViewModel {
  const vm = emptyViewModel();
  vm.seq = rest.last_seq;
  for (const machine of rest.machines) {
    const { machine_id, ...fields } = machine;
    vm.machines[machine_id] = { seq: rest.last_seq, ...fields } as MachinePanel;
  }
  for (const incident of rest.incidents) {
    const { incident_id, ...fields } = incident;
    vm.incidents[incident_id] = { seq: rest.last_seq, ...fields } as IncidentPanel;
  }
  for (const job of rest.jobs) {
    const { request_id, ...fields } = job;
    vm.jobs[request_id] = { seq: rest.last_seq, ...fields } as JobPanel;
  }
  for (const ensemble of rest.ensembles) {
    const { ensemble_id, members, ...fields } = ensemble;
    const ids: string[] = [];
    for (const member of members) {
      const { member_id, ...memberFields } = member;
      ids.push(member_id);
      vm.members[member_id] = { seq: rest.last_seq, ...memberFields } as MemberPanel;
    }
    vm.ensembles[ensemble_id] = {
      seq: rest.last_seq, members: ids, ...fields,
    } as EnsemblePanel;
  }
  vm.events = rest.events.slice();
  vm.alerts = rest.alerts.map((alert: any) => {
    const { index, ...fields } = alert;
    return { seq: rest.last_seq, ...fields } as AlertEntry;
  });
  return vm;
}

/** Comparable form: drop per-entity staleness markers (REST snapshots
 * stamp everything with the fetch seq), keep timeline seqs which both
 * paths carry exactly. */
export function comparable(vm: ViewModel): unknown {
  const strip = (obj: Record<string, any>): Record<string, any> => {
    const { seq: _seq, ...rest } = obj;
    return rest;
  };
  const mapValues = (table: Record<string, any>) =>
    Object.fromEntries(Object.entries(table)
      .map(([key, value]) => [key, strip(value)])
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0)));
  return {
    machines: mapValues(vm.machines),
    incidents: mapValues(vm.incidents),
    jobs: mapValues(vm.jobs),
    ensembles: mapValues(vm.ensembles),
    members: mapValues(vm.members),
    events: vm.events,
    alerts: vm.alerts.map(strip),
  };
}
