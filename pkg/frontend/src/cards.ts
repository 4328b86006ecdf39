/**
 * View models built 1:1 from service payloads.
 *
 * Cards add nothing the service did not say: the display handle and the
 * glyph URL are derived from the sample id alone, and the rank positions
 * are the service's, checked for page contiguity rather than recomputed.
 */

import type { Milestone, MetricsResponse, NextProbeResponse, UpdateReport } from './api.js';
import { glyphUri } from './identicon.js';

export interface ProbeCard {
  sampleId: number;
  handle: string;
  thumbnailUrl: string;
  /** Selection score breakdown when the service provided one. */
  scores: Record<string, number | null> | null;
}

export interface GalleryCard {
  sampleId: number;
  handle: string;
  thumbnailUrl: string;
  distance: number;
  rank: number;
}

/** Everything the header and the chart display; mirrors /metrics exactly. */
export interface SessionView {
  sessionId: string;
  policy: string;
  step: number;
  selections: number;
  budget: number;
  labeled: number;
  parked: number;
  classes: number;
  exhausted: boolean;
  milestones: Milestone[];
  lastUpdate: UpdateReport | null;
}

const pad = (n: number) => String(n).padStart(3, '0');

export function probeCard(offer: NextProbeResponse): ProbeCard {
  return {
    sampleId: offer.probe_id,
    handle: `P-${pad(offer.probe_id)}`,
    thumbnailUrl: glyphUri('probe', offer.probe_id),
    scores: offer.scores,
  };
}

/**
 * One card per ranked candidate, in service order.
 *
 * Throws when the page's ranks are not contiguous starting at offset+1 —
 * that would mean the pass-through contract broke somewhere.
 */
export function galleryCards(offer: NextProbeResponse): GalleryCard[] {
  return offer.ranking.map((entry, i) => {
    const expected = offer.offset + i + 1;
    if (entry.rank !== expected) {
      throw new Error(`rank gap in page: got ${entry.rank}, expected ${expected}`);
    }
    return {
      sampleId: entry.gallery_id,
      handle: `G-${pad(entry.gallery_id)}`,
      thumbnailUrl: glyphUri('gallery', entry.gallery_id),
      distance: entry.distance,
      rank: entry.rank,
    };
  });
}

export function sessionView(metrics: MetricsResponse): SessionView {
  return {
    sessionId: metrics.session_id,
    policy: metrics.policy,
    step: metrics.step,
    selections: metrics.selections,
    budget: metrics.budget,
    labeled: metrics.labeled,
    parked: metrics.parked,
    classes: metrics.classes,
    exhausted: metrics.exhausted,
    milestones: metrics.milestones,
    lastUpdate: metrics.last_update,
  };
}
