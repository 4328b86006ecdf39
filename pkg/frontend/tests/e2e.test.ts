/**
 * End-to-end: the console against a live service.
 *
 * Spawns the real HTTP server on a synthetic dataset, renders the
 * console into a DOM, and performs ten select -> verify -> update cycles
 * by clicking cards, checking after every cycle that the step counter,
 * parked counter, and milestone chart mirror GET /metrics exactly, and
 * that no label submission can succeed twice for one probe.
 */

import { ChildProcess, spawn } from 'node:child_process';
import { fileURLToPath } from 'node:url';
import path from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { AnnotationApi } from '../src/api.js';
import type { MetricsResponse } from '../src/api.js';
import { AnnotationController } from '../src/controller.js';
import type { ConsoleState, Phase } from '../src/controller.js';
import { render } from '../src/render.js';

const repoRoot = path.resolve(path.dirname(fileURLToPath(import.meta.url)), '..', '..');
const port = 18000 + Math.floor(Math.random() * 20000);
const baseUrl = `http://127.0.0.1:${port}`;

let server: ChildProcess;

async function rawJson(method: string, pathname: string, body?: unknown) {
  const response = await fetch(baseUrl + pathname, {
    method,
    headers: body === undefined ? undefined : { 'content-type': 'application/json' },
    body: body === undefined ? undefined : JSON.stringify(body),
  });
  return { status: response.status, body: (await response.json()) as Record<string, unknown> };
}

beforeAll(async () => {
  server = spawn(
    'python3',
    ['-m', 'her_reid.cli', 'serve', '--listen', `127.0.0.1:${port}`],
    { cwd: repoRoot, stdio: 'ignore' },
  );
  // make console requests same-origin for the simulated browser
  (window as unknown as { happyDOM?: { setURL?: (u: string) => void } }).happyDOM?.setURL?.(
    baseUrl,
  );
  const deadline = Date.now() + 45_000;
  for (;;) {
    try {
      const probe = await fetch(`${baseUrl}/healthz`);
      if (probe.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error('service did not come up');
    await new Promise((r) => setTimeout(r, 200));
  }
});

afterAll(() => {
  server?.kill();
});

function waitForPhase(
  controller: AnnotationController,
  phases: Phase[],
  timeoutMs = 20_000,
): Promise<ConsoleState> {
  return new Promise((resolve, reject) => {
    const settle = (state: ConsoleState) => {
      if (phases.includes(state.phase)) {
        unsubscribe();
        clearTimeout(timer);
        resolve(state);
      }
    };
    const timer = setTimeout(() => {
      unsubscribe();
      reject(new Error(`timed out waiting for ${phases.join('/')}`));
    }, timeoutMs);
    const unsubscribe = controller.subscribe(settle);
    settle(controller.getState());
  });
}

const testid = (root: Element, id: string) => root.querySelector(`[data-testid="${id}"]`);

describe('console against a live service', () => {
  it(
    'ten annotation cycles mirror the service metrics exactly',
    async () => {
      const root = document.createElement('div');
      document.body.appendChild(root);

      const api = new AnnotationApi(baseUrl);
      const controller = new AnnotationController(api);
      const actions = {
        onPick: (galleryId: number) => void controller.submit(galleryId),
        onNoMatch: () => void controller.submit(null),
        onLoadMore: () => void controller.loadMore(),
        onRetry: () => void controller.retry(),
      };
      controller.subscribe((state) => render(root, state, actions));

      const started = waitForPhase(controller, ['offer']);
      await controller.start({
        dataset: {
          kind: 'synthetic',
          spec: { identities: 24, dim: 8, noise: 0.4, seed: 11 },
        },
        policy: 'joint-e2',
        lambda: 0.5,
        budget_fraction: 1.0,
        seed: 3,
        split: { protocol: 'half-split' },
      });
      await started;
      const sessionId = controller.getState().sessionId!;

      // capture the first offer so the double-label check below can
      // replay it after it has been consumed
      const firstOffer = {
        probe_id: controller.getState().probe!.sampleId,
        gallery_id: controller.getState().candidates[0]!.sampleId,
      };

      for (let cycle = 0; cycle < 10; cycle++) {
        const parkThisOne = cycle === 3 || cycle === 7;
        if (parkThisOne) {
          (testid(root, 'no-match-button') as HTMLButtonElement).click();
        } else {
          const card = root.querySelector('[data-testid="gallery-card"]') as HTMLButtonElement;
          card.click();
          if (cycle === 0) {
            // double-click protection: this second click lands while the
            // first submission is in flight and must be swallowed
            card.click();
          }
        }
        // the click handler flips the phase to submitting synchronously,
        // so waiting from here observes the round trip back to offer
        await waitForPhase(controller, ['offer', 'exhausted']);

        const metrics = (await rawJson('GET', `/sessions/${sessionId}/metrics`))
          .body as unknown as MetricsResponse;
        expect(metrics.selections).toBe(cycle + 1); // the double click did not count
        expect(testid(root, 'step-counter')?.textContent).toBe(String(metrics.step));
        expect(testid(root, 'parked-counter')?.textContent).toBe(String(metrics.parked));
        expect(testid(root, 'labeled-counter')?.textContent).toBe(String(metrics.labeled));
        expect(testid(root, 'classes-counter')?.textContent).toBe(String(metrics.classes));
      }

      // ten interactions: eight matches, two parked
      const final = (await rawJson('GET', `/sessions/${sessionId}/metrics`))
        .body as unknown as MetricsResponse;
      expect(final.selections).toBe(10);
      expect(final.step).toBe(8);
      expect(final.parked).toBe(2);

      // milestone chart values echo the metrics payload verbatim
      expect(final.milestones.length).toBeGreaterThan(0);
      const chart = testid(root, 'milestone-chart')!;
      for (const series of ['rank1', 'rank5'] as const) {
        const dots = [...chart.querySelectorAll(`circle[data-series="${series}"]`)];
        expect(dots).toHaveLength(final.milestones.length);
        dots.forEach((dot, i) => {
          const milestone = final.milestones[i]!;
          expect(Number(dot.getAttribute('data-fraction'))).toBe(milestone.fraction);
          expect(Number(dot.getAttribute('data-step'))).toBe(milestone.step);
          expect(Number(dot.getAttribute('data-value'))).toBe(milestone[series]);
        });
      }

      // replaying the already-consumed first offer must be rejected
      const replay = await rawJson('POST', `/sessions/${sessionId}/labels`, firstOffer);
      expect(replay.status).toBe(409);
      const after = (await rawJson('GET', `/sessions/${sessionId}/metrics`))
        .body as unknown as MetricsResponse;
      expect(after.selections).toBe(10); // nothing slipped through

      // raw concurrent double-submit for one offered probe: exactly one wins
      const offer = (await rawJson('GET', `/sessions/${sessionId}/next-probe`)).body as {
        probe_id: number;
        ranking: Array<{ gallery_id: number }>;
      };
      const attempts = await Promise.all([
        rawJson('POST', `/sessions/${sessionId}/labels`, {
          probe_id: offer.probe_id,
          gallery_id: offer.ranking[0]!.gallery_id,
        }),
        rawJson('POST', `/sessions/${sessionId}/labels`, {
          probe_id: offer.probe_id,
          gallery_id: offer.ranking[1]!.gallery_id,
        }),
      ]);
      expect(attempts.filter((a) => a.status === 200)).toHaveLength(1);
      expect(attempts.filter((a) => a.status === 409)).toHaveLength(1);

      document.body.removeChild(root);
    },
    120_000,
  );

  it('an unreachable service raises the retry banner without corrupting state', async () => {
    const root = document.createElement('div');
    const api = new AnnotationApi('http://127.0.0.1:9'); // nothing listens here
    const controller = new AnnotationController(api);
    controller.subscribe((state) => render(root, state));
    await controller.start({ dataset: { kind: 'synthetic', spec: { identities: 4, dim: 2 } } });
    const state = controller.getState();
    expect(state.phase).toBe('error');
    expect(state.retryBanner).not.toBeNull();
    expect(testid(root, 'retry-banner')).not.toBeNull();
  });
});
