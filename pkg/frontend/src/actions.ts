/**
 * Operator actions with optimistic rendering.
 *
 * Each action posts to /commands and shows up immediately as pending;
 * it is confirmed when its operator_command event comes back over the
 * stream (the round trip proves the server journaled it). Destructive
 * actions (stopping work, cancelling jobs) must be explicitly confirmed
 * by the operator before they are sent at all.
 */

import type { ApiClient } from './client.js';
import type { PendingAction, TimelineEvent } from './types.js';

const DESTRUCTIVE = new Set(['stop_ensemble', 'stop_members', 'cancel_job']);

export class NeedsConfirmation extends Error {
  constructor(command: string) {
    super(`${command} is destructive and needs operator confirmation`);
  }
}

export class ActionTracker {
  pending: PendingAction[] = [];
  onChange: () => void = () => {};
  private nextId = 1;

  constructor(private readonly api: ApiClient) {}

  summarize(command: Record<string, any>): string {
    switch (command.command) {
      case 'steer':
        return `steer ${JSON.stringify(command.payload)}`;
      case 'spawn_ensemble':
        return `what-if ${command.template}`;
      case 'stop_ensemble':
        return `stop ${command.ensemble_id}`;
      case 'cancel_job':
        return `cancel ${command.request_id}`;
      case 'ack_alert':
        return `ack alert #${command.alert_index}`;
      default:
        return command.command;
    }
  }

  async submit(command: Record<string, any>,
               options: { confirmed?: boolean } = {}): Promise<PendingAction> {
    if (DESTRUCTIVE.has(command.command) && !options.confirmed) {
      throw new NeedsConfirmation(command.command);
    }
    const entry: PendingAction = {
      id: this.nextId++,
      command: command.command,
      summary: this.summarize(command),
      state: 'pending',
    };
    this.pending.push(entry);
    this.onChange();
    try {
      const result = await this.api.post('/commands', command);
      entry.state = 'accepted';
      entry.eventId = result.event_id;
    } catch (error) {
      entry.state = 'rejected';
      entry.error = error instanceof Error ? error.message : String(error);
    }
    this.onChange();
    return entry;
  }

  /** Feed timeline events through; pending entries confirm when their
   * command event arrives on the stream. */
  observe(event: TimelineEvent): void {
    if (event.kind !== 'operator_command') return;
    let changed = false;
    for (const entry of this.pending) {
      if (entry.state === 'accepted' && entry.eventId === event.event_id) {
        entry.state = 'confirmed';
        changed = true;
      }
    }
    if (changed) this.onChange();
  }

  /** Drop confirmed entries (rejected ones stay until dismissed). */
  sweep(): void {
    const before = this.pending.length;
    this.pending = this.pending.filter((entry) => entry.state !== 'confirmed');
    if (this.pending.length !== before) this.onChange();
  }

  dismiss(id: number): void {
    this.pending = this.pending.filter((entry) => entry.id !== id);
    this.onChange();
  }
}
