/**
 * The select -> verify -> update loop as a small state machine.
 *
 * One service request is in flight per session at any moment. Label
 * submission is never rendered optimistically: the controller blocks in
 * "submitting" until the service acknowledges the update, then refreshes
 * the metrics mirror and fetches the next offer, so the operator watches
 * the loop's real causality. A stale-offer conflict silently refetches;
 * a transport failure parks the machine in "error" with whatever state
 * it had, ready to retry.
 */

import { AnnotationApi, ApiError } from './api.js';
import type { LabelBody, LabelResponse, NextProbeResponse, SessionRequest } from './api.js';
import { galleryCards, probeCard, sessionView } from './cards.js';
import type { GalleryCard, ProbeCard, SessionView } from './cards.js';

export type Phase =
  | 'idle' // no session yet
  | 'loading' // a fetch (offer, page, metrics) is in flight
  | 'offer' // a probe is offered and awaiting the operator
  | 'submitting' // label sent, awaiting acknowledgment
  | 'exhausted' // budget spent or pool empty: terminal summary
  | 'error'; // transport failure; retry() continues

export interface ConsoleState {
  phase: Phase;
  sessionId: string | null;
  probe: ProbeCard | null;
  candidates: GalleryCard[];
  totalCandidates: number;
  view: SessionView | null;
  /** Inline message for a 422 rejection; cleared on the next transition. */
  validationError: string | null;
  /** Transport-failure banner text; state below it is untouched. */
  retryBanner: string | null;
}

type Listener = (state: ConsoleState) => void;

export class AnnotationController {
  private state: ConsoleState = {
    phase: 'idle',
    sessionId: null,
    probe: null,
    candidates: [],
    totalCandidates: 0,
    view: null,
    validationError: null,
    retryBanner: null,
  };

  private listeners: Listener[] = [];
  private inFlight = false;
  private pageSize: number;
  /** What to re-run when retry() is pressed after a transport failure. */
  private retryAction: (() => Promise<void>) | null = null;

  constructor(
    private readonly api: AnnotationApi,
    options: { pageSize?: number } = {},
  ) {
    this.pageSize = options.pageSize ?? 50;
  }

  getState(): ConsoleState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private setState(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  /** Create the session, mirror its metrics, and fetch the first offer. */
  async start(request: SessionRequest): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    this.setState({ phase: 'loading', validationError: null, retryBanner: null });
    try {
      const created = await this.api.createSession(request);
      this.setState({ sessionId: created.session_id });
      await this.refreshView(created.session_id);
      await this.fetchOffer(created.session_id);
    } catch (err) {
      this.fail(err, () => this.start(request), 'idle');
    } finally {
      this.inFlight = false;
    }
  }

  /** Fetch (or re-fetch) the current offer; the service keeps it stable. */
  async fetchNext(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!sessionId || this.inFlight) return;
    this.inFlight = true;
    this.setState({ phase: 'loading', validationError: null, retryBanner: null });
    try {
      await this.fetchOffer(sessionId);
    } catch (err) {
      this.fail(err, () => this.fetchNext(), 'offer');
    } finally {
      this.inFlight = false;
    }
  }

  /** Append the next page of ranked candidates to the open offer. */
  async loadMore(): Promise<void> {
    const { sessionId, probe, candidates } = this.state;
    if (!sessionId || !probe || this.inFlight) return;
    if (candidates.length >= this.state.totalCandidates) return;
    this.inFlight = true;
    try {
      const page = await this.api.nextProbe(sessionId, candidates.length, this.pageSize);
      if (page.probe_id !== probe.sampleId) {
        // the offer changed under us (another client): adopt it instead
        this.adoptOffer(page);
        return;
      }
      this.setState({ candidates: [...candidates, ...galleryCards(page)] });
    } catch (err) {
      this.fail(err, () => this.loadMore(), 'offer');
    } finally {
      this.inFlight = false;
    }
  }

  /** Confirm a gallery match, or park the probe with `null`. */
  async submit(galleryId: number | null): Promise<LabelResponse | null> {
    const { sessionId, probe, phase } = this.state;
    // double-click protection: a second call while one is in flight is a no-op
    if (!sessionId || !probe || phase !== 'offer' || this.inFlight) return null;
    this.inFlight = true;
    this.setState({ phase: 'submitting', validationError: null, retryBanner: null });
    const body: LabelBody =
      galleryId === null
        ? { probe_id: probe.sampleId, no_match: true }
        : { probe_id: probe.sampleId, gallery_id: galleryId };
    try {
      const reply = await this.api.submitLabel(sessionId, body);
      await this.refreshView(sessionId);
      if (reply.exhausted) {
        this.setState({ phase: 'exhausted', probe: null, candidates: [] });
      } else {
        await this.fetchOffer(sessionId);
      }
      return reply;
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        // someone labeled the offered probe first: silently refetch
        this.inFlight = false;
        await this.fetchNext();
        return null;
      }
      if (err instanceof ApiError && err.isValidation) {
        this.setState({ phase: 'offer', validationError: err.detail });
        return null;
      }
      this.fail(err, () => this.submit(galleryId), 'offer');
      return null;
    } finally {
      this.inFlight = false;
    }
  }

  /** Re-run the request that hit a transport failure. */
  async retry(): Promise<void> {
    const action = this.retryAction;
    this.retryAction = null;
    // leave the error phase so the retried call passes its own guards
    this.setState({
      retryBanner: null,
      phase: this.state.probe ? 'offer' : 'idle',
    });
    if (action) await action();
  }

  /** Pull /metrics and mirror it verbatim into the view. */
  async refreshView(sessionId?: string): Promise<void> {
    const sid = sessionId ?? this.state.sessionId;
    if (!sid) return;
    this.setState({ view: sessionView(await this.api.metrics(sid)) });
  }

  private async fetchOffer(sessionId: string): Promise<void> {
    try {
      this.adoptOffer(await this.api.nextProbe(sessionId, 0, this.pageSize));
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        // budget spent or no probes left: terminal summary
        await this.refreshView(sessionId);
        this.setState({ phase: 'exhausted', probe: null, candidates: [] });
        return;
      }
      throw err;
    }
  }

  private adoptOffer(offer: NextProbeResponse): void {
    this.setState({
      phase: 'offer',
      probe: probeCard(offer),
      candidates: galleryCards(offer),
      totalCandidates: offer.total_candidates,
    });
  }

  private fail(err: unknown, retryAction: () => Promise<unknown> | void, fallback: Phase): void {
    if (err instanceof ApiError && err.isNetwork) {
      // transport failure: banner only, nothing else mutates
      this.retryAction = async () => {
        await retryAction();
      };
      this.setState({ phase: 'error', retryBanner: err.detail });
      return;
    }
    const detail = err instanceof ApiError ? err.detail : String(err);
    this.setState({
      phase: this.state.probe ? fallback : 'idle',
      validationError: detail,
    });
  }
}
