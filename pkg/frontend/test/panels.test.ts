import { readFileSync } from 'node:fs';
import { describe, expect, it } from 'vitest';

import { renderApp, renderEnsemblePanel, renderFleetPanel,
         renderTimelinePanel } from '../src/panels.js';
import { applyAll, emptyViewModel, fromRest } from '../src/store.js';
import type { JournalRecord } from '../src/types.js';

const fixture = JSON.parse(
  readFileSync(new URL('./fixtures/golden_run.json', import.meta.url), 'utf-8'));
const records: JournalRecord[] = fixture.records;
const vm = applyAll(emptyViewModel(), records);

/** Entity staleness badges differ between a live stream and a refresh
 * snapshot by design; strip them to compare rendered substance. */
function normalize(html: string): string {
  return html.replace(/ data-seq="\d+"/g, '')
             .replace(/<span class="seq">[^<]*<\/span>/g, '');
}

describe('panel rendering', () => {
  it('fleet panel shows health and utilization per machine', () => {
    const html = renderFleetPanel(vm);
    expect(html).toContain('archer');
    expect(html).toContain('cirrus');
    expect(html).toContain('class="machine failed"');
    expect(html).toMatch(/\d+\/\d+ nodes/);
  });

  it('ensemble members render grid thumbnails from reduced frames', () => {
    const html = renderEnsemblePanel(vm);
    expect(html).toContain('data-frame-seq=');
    expect(html).toContain('class="thumb"');
    expect(html).toContain('wind-dial');
    expect(html).toContain('stop-ensemble');
  });

  it('timeline rows link their provenance chains', () => {
    const html = renderTimelinePanel(vm);
    expect(html).toContain('sensor_data_arrived');
    expect(html).toContain('class="prov"');
    // derived events link back to the perimeter arrival that caused them
    expect(html).toContain('href="#evt-000002"');
  });

  it('full refresh renders the same panels as the live stream', () => {
    const streamHtml = renderApp(vm, 'live', []);
    const restHtml = renderApp(fromRest(fixture.rest), 'live', []);
    expect(normalize(restHtml)).toBe(normalize(streamHtml));
  });

  it('disconnection shows the banner; pending actions render states', () => {
    const html = renderApp(vm, 'disconnected', [
      { id: 1, command: 'steer', summary: 'steer {"wind_direction":"E"}',
        state: 'pending' },
    ]);
    expect(html).toContain('stream disconnected');
    expect(html).toContain('class="pending pending"');
  });

  it('escapes data-derived text', () => {
    const poisoned = applyAll(emptyViewModel(), [{
      seq: 1, t: 0, kind: 'incident_created',
      body: { incident_id: 'inc-1', label: '<script>alert(1)</script>',
              tokens: 10 },
    }]);
    const html = renderApp(poisoned, 'live', []);
    expect(html).not.toContain('<script>alert');
    expect(html).toContain('&lt;script&gt;');
  });
});
