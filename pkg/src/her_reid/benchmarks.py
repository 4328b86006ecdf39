"""Timing of incremental updates against full batch refits.

The interesting comparison for an interactive annotation loop is the cost
of absorbing one confirmed probe-gallery pair versus refitting the model
from scratch on all data seen so far. The refit is timed as a plain batch
solve without inverse tracking, the cheapest retraining alternative, so
the reported speedups are conservative.
"""

import time
from dataclasses import dataclass

import numpy as np

from .core import FeatureMatrix, fit_her_primal
from .errors import InvalidParameterError
from .incremental import UpdateBatch, apply_update_policy


@dataclass
class BenchmarkRow:
    feature_dim: int
    sample_count: int
    update_median: float
    refit_median: float

    @property
    def speedup(self):
        return self.refit_median / self.update_median


def _median_time(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def benchmark_update_vs_refit(
    grid=((512, 2000), (1024, 5000)),
    lam=1.0,
    seed=0,
    update_reps=9,
    refit_reps=5,
):
    """Median seconds for a single-pair update and for a full refit.

    Each grid entry (d, n) builds a base model over n samples (two per
    identity), then times absorbing one brand-new pair through the scalar
    update path versus refitting on the n + 2 samples.
    """
    if update_reps < 1 or refit_reps < 1:
        raise InvalidParameterError("repetition counts must be >= 1")
    rows = []
    rng = np.random.default_rng(seed)
    for d, n in grid:
        if n % 2:
            raise InvalidParameterError("sample counts must be even (two per identity)")
        X = rng.standard_normal((d, n))
        labels = np.repeat(np.arange(1, n // 2 + 1), 2)
        views = np.tile([0, 1], n // 2)
        base = FeatureMatrix(X, labels, views)
        model = fit_her_primal(base, lam, incremental=True)

        pair = rng.standard_normal((d, 2))
        new_id = n // 2 + 1
        update_median = _median_time(
            lambda: apply_update_policy(model, UpdateBatch(pair, [new_id, new_id])),
            update_reps,
        )

        full = FeatureMatrix(
            np.concatenate([X, pair], axis=1),
            np.concatenate([labels, [new_id, new_id]]),
            np.concatenate([views, [0, 1]]),
        )
        refit_median = _median_time(lambda: fit_her_primal(full, lam), refit_reps)
        rows.append(
            BenchmarkRow(
                feature_dim=d,
                sample_count=n,
                update_median=update_median,
                refit_median=refit_median,
            )
        )
    return rows
