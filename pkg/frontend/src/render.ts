/**
 * DOM rendering, no framework.
 *
 * Every number on screen is copied from a service response field; the
 * elements carry data-testid hooks and exact values in data-* attributes
 * so automated tests can check the mirror without scraping formatted
 * text. render() is idempotent over (root, state).
 */

import type { ConsoleState } from './controller.js';
import type { GalleryCard, SessionView } from './cards.js';
import type { Milestone } from './api.js';

const SVG_NS = 'http://www.w3.org/2000/svg';

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

function counter(doc: Document, label: string, testId: string, value: string): HTMLElement {
  const box = el(doc, 'div', { class: 'counter' });
  box.appendChild(el(doc, 'span', { class: 'counter-label' }, label));
  box.appendChild(el(doc, 'span', { class: 'counter-value', 'data-testid': testId }, value));
  return box;
}

/** The header strip: step/budget, labeled, parked, classes, last latency. */
export function renderStatus(doc: Document, view: SessionView | null): HTMLElement {
  const bar = el(doc, 'div', { class: 'status-bar', 'data-testid': 'status-bar' });
  if (!view) {
    bar.appendChild(el(doc, 'span', { class: 'muted' }, 'no session'));
    return bar;
  }
  bar.appendChild(counter(doc, 'step', 'step-counter', String(view.step)));
  bar.appendChild(counter(doc, 'budget', 'budget-counter', String(view.budget)));
  bar.appendChild(counter(doc, 'used', 'selections-counter', String(view.selections)));
  bar.appendChild(counter(doc, 'labeled', 'labeled-counter', String(view.labeled)));
  bar.appendChild(counter(doc, 'parked', 'parked-counter', String(view.parked)));
  bar.appendChild(counter(doc, 'classes', 'classes-counter', String(view.classes)));
  const latency = view.lastUpdate ? `${(view.lastUpdate.elapsed * 1000).toFixed(1)} ms` : '-';
  bar.appendChild(counter(doc, 'last update', 'latency', latency));
  return bar;
}

/**
 * Milestone chart: rank-1 and rank-5 against labeled fraction.
 *
 * Axes are always drawn, even with no milestones yet. Every point
 * carries its exact payload values in data-* attributes; the polyline is
 * only the visual connecting them.
 */
export function renderChart(doc: Document, milestones: Milestone[]): SVGSVGElement {
  const width = 320;
  const height = 160;
  const margin = { left: 34, right: 10, top: 10, bottom: 22 };
  const innerW = width - margin.left - margin.right;
  const innerH = height - margin.top - margin.bottom;

  const svg = doc.createElementNS(SVG_NS, 'svg') as SVGSVGElement;
  svg.setAttribute('viewBox', `0 0 ${width} ${height}`);
  svg.setAttribute('width', String(width));
  svg.setAttribute('height', String(height));
  svg.setAttribute('data-testid', 'milestone-chart');
  svg.setAttribute('role', 'img');

  const axis = (x1: number, y1: number, x2: number, y2: number) => {
    const line = doc.createElementNS(SVG_NS, 'line');
    line.setAttribute('x1', String(x1));
    line.setAttribute('y1', String(y1));
    line.setAttribute('x2', String(x2));
    line.setAttribute('y2', String(y2));
    line.setAttribute('class', 'axis');
    line.setAttribute('stroke', '#555');
    svg.appendChild(line);
  };
  // y axis (match rate 0..1), x axis (labeled fraction 0..1)
  axis(margin.left, margin.top, margin.left, margin.top + innerH);
  axis(margin.left, margin.top + innerH, margin.left + innerW, margin.top + innerH);

  const px = (fraction: number) => margin.left + fraction * innerW;
  const py = (rate: number) => margin.top + (1 - rate) * innerH;

  const series: Array<{ key: 'rank1' | 'rank5'; color: string }> = [
    { key: 'rank1', color: '#0b6e99' },
    { key: 'rank5', color: '#a5632d' },
  ];
  const ordered = [...milestones].sort((a, b) => a.fraction - b.fraction);

  for (const { key, color } of series) {
    if (ordered.length > 1) {
      const line = doc.createElementNS(SVG_NS, 'polyline');
      line.setAttribute(
        'points',
        ordered.map((m) => `${px(m.fraction)},${py(m[key])}`).join(' '),
      );
      line.setAttribute('fill', 'none');
      line.setAttribute('stroke', color);
      line.setAttribute('data-series', key);
      svg.appendChild(line);
    }
    for (const m of ordered) {
      const dot = doc.createElementNS(SVG_NS, 'circle');
      dot.setAttribute('cx', String(px(m.fraction)));
      dot.setAttribute('cy', String(py(m[key])));
      dot.setAttribute('r', '3');
      dot.setAttribute('fill', color);
      dot.setAttribute('data-series', key);
      dot.setAttribute('data-fraction', String(m.fraction));
      dot.setAttribute('data-value', String(m[key]));
      dot.setAttribute('data-step', String(m.step));
      svg.appendChild(dot);
    }
  }
  return svg;
}

function cardNode(doc: Document, card: GalleryCard): HTMLElement {
  const node = el(doc, 'button', {
    class: 'card gallery-card',
    'data-testid': 'gallery-card',
    'data-sample-id': String(card.sampleId),
    'data-rank': String(card.rank),
    type: 'button',
  });
  const img = el(doc, 'img', { alt: card.handle, width: '48', height: '48' });
  img.setAttribute('src', card.thumbnailUrl);
  node.appendChild(img);
  node.appendChild(el(doc, 'span', { class: 'handle' }, card.handle));
  node.appendChild(el(doc, 'span', { class: 'rank' }, `#${card.rank}`));
  node.appendChild(el(doc, 'span', { class: 'distance' }, card.distance.toFixed(4)));
  return node;
}

export interface RenderActions {
  onPick?: (galleryId: number) => void;
  onNoMatch?: () => void;
  onLoadMore?: () => void;
  onRetry?: () => void;
}

/** Paint the whole console into `root` from one state snapshot. */
export function render(root: HTMLElement, state: ConsoleState, actions: RenderActions = {}): void {
  const doc = root.ownerDocument;
  root.textContent = '';
  root.appendChild(renderStatus(doc, state.view));

  if (state.retryBanner !== null) {
    const banner = el(doc, 'div', { class: 'banner', 'data-testid': 'retry-banner' });
    banner.appendChild(el(doc, 'span', {}, `connection lost: ${state.retryBanner}`));
    const btn = el(doc, 'button', { 'data-testid': 'retry-button', type: 'button' }, 'retry');
    btn.addEventListener('click', () => actions.onRetry?.());
    banner.appendChild(btn);
    root.appendChild(banner);
  }
  if (state.validationError !== null) {
    root.appendChild(
      el(doc, 'div', { class: 'inline-error', 'data-testid': 'validation-error' }, state.validationError),
    );
  }

  const chartBox = el(doc, 'div', { class: 'chart-box' });
  chartBox.appendChild(renderChart(doc, state.view?.milestones ?? []));
  root.appendChild(chartBox);

  if (state.phase === 'exhausted') {
    const summary = el(doc, 'div', { class: 'summary', 'data-testid': 'terminal-summary' });
    summary.appendChild(el(doc, 'h2', {}, 'budget spent'));
    if (state.view) {
      summary.appendChild(
        el(
          doc,
          'p',
          {},
          `${state.view.labeled} matches confirmed, ${state.view.parked} probes parked, ` +
            `${state.view.classes} identities learned.`,
        ),
      );
    }
    root.appendChild(summary);
    return;
  }

  if (state.probe) {
    const probeBox = el(doc, 'div', { class: 'probe-box', 'data-testid': 'probe-card' });
    probeBox.setAttribute('data-sample-id', String(state.probe.sampleId));
    const img = el(doc, 'img', { alt: state.probe.handle, width: '64', height: '64' });
    img.setAttribute('src', state.probe.thumbnailUrl);
    probeBox.appendChild(img);
    probeBox.appendChild(el(doc, 'h2', {}, state.probe.handle));
    const noMatch = el(
      doc,
      'button',
      { 'data-testid': 'no-match-button', type: 'button' },
      'no match in gallery',
    );
    noMatch.addEventListener('click', () => actions.onNoMatch?.());
    probeBox.appendChild(noMatch);
    root.appendChild(probeBox);

    const grid = el(doc, 'div', { class: 'gallery-grid', 'data-testid': 'gallery-grid' });
    for (const card of state.candidates) {
      const node = cardNode(doc, card);
      node.addEventListener('click', () => actions.onPick?.(card.sampleId));
      grid.appendChild(node);
    }
    root.appendChild(grid);

    if (state.candidates.length < state.totalCandidates) {
      const more = el(
        doc,
        'button',
        { 'data-testid': 'load-more', type: 'button' },
        `load more (${state.candidates.length}/${state.totalCandidates})`,
      );
      more.addEventListener('click', () => actions.onLoadMore?.());
      root.appendChild(more);
    }
  }

  if (state.phase === 'submitting' || state.phase === 'loading') {
    root.appendChild(el(doc, 'div', { class: 'busy', 'data-testid': 'busy' }, 'waiting for service'));
  }
}
