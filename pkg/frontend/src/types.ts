/** Wire and view-model types for the operator console. */

export interface JournalRecord {
  seq: number;
  t: number;
  kind: string;
  body: Record<string, any>;
}

export interface TimelineEvent {
  seq: number;
  event_id: string;
  kind: string;
  timestamp: number;
  payload: Record<string, any>;
  provenance: string[];
}

export interface MachinePanel {
  seq: number;
  endpoint: string;
  credential_label: string;
  health: 'healthy' | 'suspect' | 'failed';
  suspect_count: number;
  last_status: {
    free_nodes: number;
    total_nodes: number;
    running: number;
    queued: Record<string, number>;
    sample_time: number;
  } | null;
}

export interface Placement {
  machine_id: string;
  machine_job_id: string;
  priority_class: string;
  debit: number;
  state: string;
  note?: string;
}

export interface JobPanel {
  seq: number;
  incident_id: string;
  origin: Record<string, any>;
  nodes: number;
  walltime: number;
  deadline: number;
  max_priority: string;
  speculation: number;
  submitted_at: number;
  placements: Placement[];
  chosen_placement: number | null;
  federated_state: string;
  at_risk: boolean;
  alerted_deadline: boolean;
}

export interface IncidentPanel {
  seq: number;
  label: string;
  ruleset: string | null;
  active: boolean;
  tokens: { initial: number; spent: number };
  created_at: number;
}

export interface OutboxEntry {
  message_id: string;
  payload: Record<string, any>;
  issued_at: number;
  provenance: string[];
  state: 'pending' | 'applied';
  applied_at_step?: number;
}

export interface ReducedFrame {
  seq: number;
  sim_time: number;
  outputs: Record<string, any>;
}

export interface MemberPanel {
  seq: number;
  ensemble_id: string;
  request_id: string;
  params: Record<string, any>;
  seed: number;
  state: 'live' | 'finished' | 'stopped';
  last_frame_seq: number;
  last_frame: ReducedFrame | null;
  outbox: OutboxEntry[];
  applied_messages: string[];
  dropped_frames: number;
}

export interface EnsemblePanel {
  seq: number;
  incident_id: string;
  region: string | null;
  template: string;
  params: Record<string, any>;
  steerable: string[];
  pipeline: any[];
  workload: string;
  job: Record<string, any>;
  state: 'active' | 'stopping' | 'stopped';
  members: string[];
  provenance: string[];
  spawned_at: number;
}

export interface AlertEntry {
  seq: number;
  at: number;
  kind: string;
  details: Record<string, any>;
  acked: boolean;
}

export interface ViewModel {
  seq: number;
  machines: Record<string, MachinePanel>;
  incidents: Record<string, IncidentPanel>;
  jobs: Record<string, JobPanel>;
  ensembles: Record<string, EnsemblePanel>;
  members: Record<string, MemberPanel>;
  events: TimelineEvent[];
  alerts: AlertEntry[];
}

export type ConnectionState = 'connecting' | 'live' | 'disconnected';

export interface PendingAction {
  id: number;
  command: string;
  summary: string;
  state: 'pending' | 'accepted' | 'confirmed' | 'rejected';
  eventId?: string;
  error?: string;
}
