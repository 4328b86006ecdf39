import { describe, expect, it } from 'vitest';

import { AnnotationApi } from '../src/api.js';
import type { FetchLike } from '../src/api.js';
import { AnnotationController } from '../src/controller.js';

/**
 * In-memory stand-in for the service, faithful to its wire contract:
 * stable pending offer, 409 on stale/absent offers, counters in
 * /metrics. Knobs let tests inject failures or hold a request open.
 */
class FakeService {
  step = 0;
  selections = 0;
  labeled = 0;
  parked = 0;
  classes = 0;
  offers: number[];
  pending: number | null = null;
  candidates = [10, 11, 12, 13, 14];
  budget = 10;
  calls: string[] = [];
  failNext: { status: number; detail: string } | 'network' | null = null;
  private gate: Promise<void> | null = null;
  private gateRelease: (() => void) | null = null;

  constructor(offers: number[]) {
    this.offers = [...offers];
  }

  /** Make the next matching request wait until release() is called. */
  hold(): () => void {
    this.gate = new Promise((resolve) => {
      this.gateRelease = resolve;
    });
    return () => this.gateRelease?.();
  }

  fetch: FetchLike = async (input, init) => {
    const method = init?.method ?? 'GET';
    const url = new URL(input, 'http://fake');
    this.calls.push(`${method} ${url.pathname}`);
    if (this.gate) {
      const gate = this.gate;
      this.gate = null;
      await gate;
    }
    if (this.failNext === 'network') {
      this.failNext = null;
      throw new TypeError('fetch failed');
    }
    if (this.failNext) {
      const { status, detail } = this.failNext;
      this.failNext = null;
      return json({ detail }, status);
    }

    if (method === 'POST' && url.pathname === '/sessions') {
      return json(
        {
          session_id: 'fake',
          policy: 'joint-e2',
          budget: this.budget,
          probe_count: this.offers.length,
          gallery_count: this.candidates.length,
          feature_dim: 8,
          step: 0,
        },
        201,
      );
    }
    if (method === 'GET' && url.pathname.endsWith('/next-probe')) {
      if (this.pending === null) {
        if (!this.offers.length || this.selections >= this.budget) {
          return json({ detail: `${this.selections} of ${this.budget} interactions used` }, 409);
        }
        this.pending = this.offers.shift()!;
      }
      const offset = Number(url.searchParams.get('offset') ?? '0');
      const limit = Number(url.searchParams.get('limit') ?? '50');
      const page = this.candidates.slice(offset, offset + limit);
      return json({
        session_id: 'fake',
        probe_id: this.pending,
        step: this.step,
        selections: this.selections,
        scores: null,
        ranking: page.map((g, i) => ({
          gallery_id: g,
          distance: 0.1 * (offset + i + 1),
          rank: offset + i + 1,
        })),
        total_candidates: this.candidates.length,
        offset,
        returned: page.length,
      });
    }
    if (method === 'POST' && url.pathname.endsWith('/labels')) {
      const body = JSON.parse(String(init?.body)) as {
        probe_id: number;
        gallery_id?: number;
        no_match?: boolean;
      };
      if (this.pending === null) {
        return json({ detail: 'no probe is currently offered' }, 409);
      }
      if (body.probe_id !== this.pending) {
        return json({ detail: `probe ${body.probe_id} is not the offered probe` }, 409);
      }
      if (!body.no_match && !this.candidates.includes(body.gallery_id!)) {
        return json({ detail: `gallery image ${body.gallery_id} is not in the offered ranking` }, 422);
      }
      this.pending = null;
      this.selections += 1;
      let matched = false;
      if (body.no_match) {
        this.parked += 1;
      } else {
        this.step += 1;
        this.labeled += 1;
        this.classes += 1;
        matched = true;
      }
      return json({
        session_id: 'fake',
        step: this.step,
        selections: this.selections,
        matched,
        identity: matched ? this.classes : null,
        probe_id: body.probe_id,
        gallery_id: body.no_match ? null : body.gallery_id,
        report: null,
        milestones_recorded: [],
        exhausted: this.selections >= this.budget,
      });
    }
    if (method === 'GET' && url.pathname.endsWith('/metrics')) {
      return json({
        session_id: 'fake',
        policy: 'joint-e2',
        step: this.step,
        selections: this.selections,
        budget: this.budget,
        labeled: this.labeled,
        parked: this.parked,
        unlabeled_probes: this.offers.length,
        unlabeled_gallery: this.candidates.length - this.labeled,
        classes: this.classes,
        exhausted: this.selections >= this.budget,
        milestones: [],
        last_update: null,
      });
    }
    return json({ detail: `unhandled ${method} ${url.pathname}` }, 500);
  };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

function setup(offers: number[], pageSize = 50) {
  const service = new FakeService(offers);
  const api = new AnnotationApi('http://fake', service.fetch);
  const controller = new AnnotationController(api, { pageSize });
  return { service, controller };
}

const SESSION = {
  dataset: { kind: 'synthetic' as const, spec: { identities: 8, dim: 4 } },
};

describe('annotation controller', () => {
  it('start() lands on the first offer with mirrored metrics', async () => {
    const { controller } = setup([5, 6]);
    await controller.start(SESSION);
    const state = controller.getState();
    expect(state.phase).toBe('offer');
    expect(state.probe?.handle).toBe('P-005');
    expect(state.candidates.map((c) => c.rank)).toEqual([1, 2, 3, 4, 5]);
    expect(state.view?.step).toBe(0);
    expect(state.view?.budget).toBe(10);
  });

  it('a confirmed match refreshes the mirror and auto-fetches the next probe', async () => {
    const { controller } = setup([5, 6]);
    await controller.start(SESSION);
    const reply = await controller.submit(10);
    expect(reply?.matched).toBe(true);
    const state = controller.getState();
    expect(state.view?.step).toBe(1);
    expect(state.view?.labeled).toBe(1);
    expect(state.probe?.sampleId).toBe(6);
    expect(state.phase).toBe('offer');
  });

  it('no-match parks without advancing the step', async () => {
    const { controller } = setup([5, 6]);
    await controller.start(SESSION);
    const reply = await controller.submit(null);
    expect(reply?.matched).toBe(false);
    expect(controller.getState().view?.step).toBe(0);
    expect(controller.getState().view?.parked).toBe(1);
  });

  it('a second click during an in-flight submission is a no-op', async () => {
    const { service, controller } = setup([5, 6]);
    await controller.start(SESSION);
    const release = service.hold();
    const first = controller.submit(10);
    const second = await controller.submit(11); // while the first is held open
    expect(second).toBeNull();
    release();
    const reply = await first;
    expect(reply?.matched).toBe(true);
    const labelPosts = service.calls.filter((c) => c.includes('/labels'));
    expect(labelPosts).toHaveLength(1);
  });

  it('a stale-offer conflict silently refetches the current offer', async () => {
    const { service, controller } = setup([5, 6]);
    await controller.start(SESSION);
    service.failNext = { status: 409, detail: 'probe 5 is not the offered probe 6' };
    const reply = await controller.submit(10);
    expect(reply).toBeNull();
    const state = controller.getState();
    expect(state.phase).toBe('offer');
    expect(state.validationError).toBeNull();
    // the label bounced, then the offer was refetched
    expect(service.calls.filter((c) => c.includes('/labels'))).toHaveLength(1);
    expect(service.calls.filter((c) => c.includes('/next-probe')).length).toBeGreaterThan(1);
  });

  it('validation errors surface inline and keep the offer', async () => {
    const { controller } = setup([5, 6]);
    await controller.start(SESSION);
    const reply = await controller.submit(999); // not a real candidate
    expect(reply).toBeNull();
    const state = controller.getState();
    expect(state.phase).toBe('offer');
    expect(state.validationError).toContain('999');
    expect(state.probe?.sampleId).toBe(5);
  });

  it('a transport failure shows the retry banner and mutates nothing', async () => {
    const { service, controller } = setup([5, 6]);
    await controller.start(SESSION);
    service.failNext = 'network';
    const reply = await controller.submit(10);
    expect(reply).toBeNull();
    let state = controller.getState();
    expect(state.phase).toBe('error');
    expect(state.retryBanner).toContain('fetch failed');
    expect(state.probe?.sampleId).toBe(5);
    expect(service.step).toBe(0); // nothing happened server-side

    await controller.retry();
    state = controller.getState();
    expect(state.retryBanner).toBeNull();
    expect(state.view?.step).toBe(1);
    expect(state.probe?.sampleId).toBe(6);
  });

  it('budget exhaustion ends on the terminal summary with final metrics', async () => {
    const { service, controller } = setup([5, 6]);
    service.budget = 2;
    await controller.start(SESSION);
    await controller.submit(10);
    const reply = await controller.submit(11);
    expect(reply?.exhausted).toBe(true);
    const state = controller.getState();
    expect(state.phase).toBe('exhausted');
    expect(state.probe).toBeNull();
    expect(state.view?.step).toBe(2);
  });

  it('an exhausted pool at fetch time also reaches the terminal state', async () => {
    const { controller } = setup([5]);
    await controller.start(SESSION);
    await controller.submit(10); // pool now empty: auto-fetch hits 409
    expect(controller.getState().phase).toBe('exhausted');
  });

  it('load more appends pages in rank order and stops at the end', async () => {
    const { service, controller } = setup([5], 2);
    await controller.start(SESSION);
    expect(controller.getState().candidates.map((c) => c.rank)).toEqual([1, 2]);
    await controller.loadMore();
    expect(controller.getState().candidates.map((c) => c.rank)).toEqual([1, 2, 3, 4]);
    await controller.loadMore();
    expect(controller.getState().candidates.map((c) => c.rank)).toEqual([1, 2, 3, 4, 5]);
    const before = service.calls.length;
    await controller.loadMore(); // everything loaded: no request
    expect(service.calls.length).toBe(before);
  });
});
