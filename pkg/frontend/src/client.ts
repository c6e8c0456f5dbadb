/**
 * Server connection: REST fetches plus the /stream websocket.
 *
 * The stream client remembers the last record sequence it has seen and
 * reconnects with ?after=<seq>, so a dropped connection resumes with no
 * gaps and no duplicates; a disconnect banner state is exposed while
 * the socket is down.
 */

import type { ConnectionState, JournalRecord, TimelineEvent } from './types.js';

export interface SocketLike {
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onopen: (() => void) | null;
  close(): void;
  send(data: string): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface StreamOptions {
  baseUrl: string;          // e.g. ws://host:port
  token?: string;
  after?: number;
  reconnectDelayMs?: number;
  socketFactory?: SocketFactory;
  setTimer?: (fn: () => void, ms: number) => void;
}

export class StreamClient {
  lastSeq: number;
  state: ConnectionState = 'connecting';
  onRecord: (record: JournalRecord) => void = () => {};
  onStateChange: (state: ConnectionState) => void = () => {};
  private readonly options: StreamOptions;
  private readonly factory: SocketFactory;
  private readonly setTimer: (fn: () => void, ms: number) => void;
  private socket: SocketLike | null = null;
  private stopped = false;

  constructor(options: StreamOptions) {
    this.options = options;
    this.lastSeq = options.after ?? 0;
    this.factory = options.socketFactory
      ?? ((url: string) => new WebSocket(url) as unknown as SocketLike);
    this.setTimer = options.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
  }

  url(): string {
    const token = this.options.token ? `&token=${this.options.token}` : '';
    return `${this.options.baseUrl}/stream?after=${this.lastSeq}${token}`;
  }

  connect(): void {
    if (this.stopped) return;
    this.setState('connecting');
    const socket = this.factory(this.url());
    this.socket = socket;
    socket.onopen = () => this.setState('live');
    socket.onmessage = (event) => {
      const record = JSON.parse(event.data);
      if (record.seq === undefined) return; // pong or other control frame
      if (record.seq <= this.lastSeq) return; // duplicate across reconnect
      this.lastSeq = record.seq;
      this.onRecord(record as JournalRecord);
    };
    socket.onclose = () => {
      if (this.stopped) return;
      this.setState('disconnected');
      this.setTimer(() => this.connect(), this.options.reconnectDelayMs ?? 1000);
    };
  }

  stop(): void {
    this.stopped = true;
    this.socket?.close();
  }

  private setState(state: ConnectionState): void {
    this.state = state;
    this.onStateChange(state);
  }
}

export class ApiClient {
  constructor(private readonly baseUrl: string,
              private readonly token?: string,
              private readonly fetcher: typeof fetch = fetch) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.token) headers.Authorization = `Bearer ${this.token}`;
    return headers;
  }

  async get(path: string): Promise<any> {
    const response = await this.fetcher(`${this.baseUrl}${path}`,
                                        { headers: this.headers() });
    if (!response.ok) throw new Error(`${response.status}: ${await response.text()}`);
    return response.json();
  }

  async post(path: string, body: unknown): Promise<any> {
    const response = await this.fetcher(`${this.baseUrl}${path}`, {
      method: 'POST', headers: this.headers(), body: JSON.stringify(body),
    });
    if (!response.ok) {
      const detail = await response.text();
      throw new Error(detail || `${response.status}`);
    }
    return response.json();
  }

  async fetchAllEvents(): Promise<TimelineEvent[]> {
    const events: TimelineEvent[] = [];
    let after = 0;
    for (;;) {
      const page = await this.get(`/events?after=${after}&limit=200`);
      events.push(...page.events);
      if (page.events.length < 200) return events;
      after = page.next_after;
    }
  }

  /** Everything a full refresh needs to rebuild the view model. */
  async fetchSnapshot(): Promise<any> {
    const [machines, incidents, jobs, ensembles, events, alerts, health] =
      await Promise.all([
        this.get('/machines'), this.get('/incidents'), this.get('/jobs'),
        this.get('/ensembles'), this.fetchAllEvents(), this.get('/alerts'),
        this.get('/health'),
      ]);
    return {
      machines: machines.machines,
      incidents: incidents.incidents,
      jobs: jobs.jobs,
      ensembles: ensembles.ensembles,
      events,
      alerts: alerts.alerts,
      last_seq: health.records,
    };
  }
}
