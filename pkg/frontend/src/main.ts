/**
 * Browser bootstrap: a session form, then the annotation loop.
 *
 * Served as static assets next to the API (same origin), so the base URL
 * is empty by default; set window.HER_BASE_URL before loading to point
 * the console at a remote service.
 */

import { AnnotationApi } from './api.js';
import { AnnotationController } from './controller.js';
import { render } from './render.js';

declare global {
  interface Window {
    HER_BASE_URL?: string;
  }
}

function readForm(form: HTMLFormElement): Record<string, string> {
  const data = new FormData(form);
  const out: Record<string, string> = {};
  data.forEach((value, key) => {
    out[key] = String(value);
  });
  return out;
}

export function boot(doc: Document): void {
  const api = new AnnotationApi(window.HER_BASE_URL ?? '');
  const controller = new AnnotationController(api);

  const form = doc.getElementById('session-form') as HTMLFormElement;
  const stage = doc.getElementById('stage') as HTMLElement;

  const actions = {
    onPick: (galleryId: number) => void controller.submit(galleryId),
    onNoMatch: () => void controller.submit(null),
    onLoadMore: () => void controller.loadMore(),
    onRetry: () => void controller.retry(),
  };
  controller.subscribe((state) => render(stage, state, actions));

  form.addEventListener('submit', (ev) => {
    ev.preventDefault();
    const fields = readForm(form);
    void controller.start({
      dataset: {
        kind: 'synthetic',
        spec: {
          identities: Number(fields['identities'] ?? 40),
          dim: Number(fields['dim'] ?? 16),
          noise: Number(fields['noise'] ?? 0.4),
          seed: Number(fields['data_seed'] ?? 0),
        },
      },
      policy: fields['policy'] ?? 'joint-e2',
      lambda: Number(fields['lambda'] ?? 0.5),
      budget_fraction: Number(fields['budget_fraction'] ?? 0.5),
      seed: Number(fields['seed'] ?? 0),
      split: { protocol: 'half-split' },
    });
  });
}

// only self-start in a real browser; tests import boot() explicitly
if (typeof document !== 'undefined' && document.getElementById('session-form')) {
  boot(document);
}
