import { describe, expect, it } from 'vitest';

import { ActionTracker, NeedsConfirmation } from '../src/actions.js';
import { ApiClient } from '../src/client.js';

function apiWith(handler: (path: string, body: any) => any) {
  const fetcher = (async (url: any, init?: any) => {
    const path = String(url).replace('http://test', '');
    try {
      const result = handler(path, init?.body ? JSON.parse(init.body) : undefined);
      return {
        ok: true, status: 200,
        json: async () => result,
        text: async () => JSON.stringify(result),
      } as Response;
    } catch (error: any) {
      return {
        ok: false, status: error.status ?? 500,
        json: async () => ({ detail: error.message }),
        text: async () => error.message,
      } as Response;
    }
  }) as typeof fetch;
  return new ApiClient('http://test', undefined, fetcher);
}

describe('operator actions', () => {
  it('optimistic pending until the confirming event arrives', async () => {
    const tracker = new ActionTracker(apiWith(() => ({ status: 'accepted',
                                                       event_id: 'evt-000009' })));
    const changes: string[] = [];
    tracker.onChange = () => changes.push(tracker.pending.map(p => p.state).join(','));
    const entry = await tracker.submit({
      command: 'steer', incident_id: 'inc-1',
      selector: { ensemble: 'ens-001' }, payload: { wind_direction: 'E' },
    });
    expect(entry.state).toBe('accepted');
    expect(entry.eventId).toBe('evt-000009');
    // the round trip: the command's own event comes back on the stream
    tracker.observe({ seq: 10, event_id: 'evt-000009', kind: 'operator_command',
                      timestamp: 1, payload: {}, provenance: [] });
    expect(entry.state).toBe('confirmed');
    expect(changes).toContain('pending');
    tracker.sweep();
    expect(tracker.pending).toHaveLength(0);
  });

  it('unrelated events do not confirm', async () => {
    const tracker = new ActionTracker(apiWith(() => ({ event_id: 'evt-000001' })));
    const entry = await tracker.submit({ command: 'steer', payload: {} });
    tracker.observe({ seq: 1, event_id: 'evt-000777', kind: 'operator_command',
                      timestamp: 1, payload: {}, provenance: [] });
    tracker.observe({ seq: 2, event_id: 'evt-000001', kind: 'steering_applied',
                      timestamp: 1, payload: {}, provenance: [] });
    expect(entry.state).toBe('accepted');
  });

  it('destructive actions demand confirmation', async () => {
    const tracker = new ActionTracker(apiWith(() => ({ event_id: 'e' })));
    await expect(tracker.submit({ command: 'stop_ensemble', ensemble_id: 'ens-001' }))
      .rejects.toBeInstanceOf(NeedsConfirmation);
    expect(tracker.pending).toHaveLength(0);
    const entry = await tracker.submit(
      { command: 'stop_ensemble', ensemble_id: 'ens-001' }, { confirmed: true });
    expect(entry.state).toBe('accepted');
  });

  it('rejected commands surface the server message inline', async () => {
    const tracker = new ActionTracker(apiWith(() => {
      const error: any = new Error('parameter steps is not steerable');
      error.status = 409;
      throw error;
    }));
    const entry = await tracker.submit({ command: 'steer', payload: { steps: 1 } });
    expect(entry.state).toBe('rejected');
    expect(entry.error).toContain('not steerable');
  });
});
