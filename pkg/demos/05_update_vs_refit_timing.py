"""
What one annotation costs: update vs refit
==========================================

Every confirmed pair could be absorbed by refitting from scratch, at the
price of a d x d factorization, or through the tracked-inverse update,
which is two matrix-vector products per sample. This script times both
on growing problem sizes and prints the ratio. Sizes here are kept small
enough to finish in a few seconds; the gap widens with dimension.
"""

import numpy as np

from her_reid import FeatureMatrix, UpdateBatch, apply_update_policy, fit_her_primal
from her_reid.benchmarks import benchmark_update_vs_refit

rows = benchmark_update_vs_refit(
    grid=((64, 400), (128, 800), (256, 1600), (512, 2000)),
    lam=1.0,
    seed=2,
    update_reps=9,
    refit_reps=5,
)

print("   dim  samples   update (ms)   refit (ms)   speedup")
for r in rows:
    print("  %4d  %7d   %11.3f  %11.3f   %6.1fx"
          % (r.feature_dim, r.sample_count,
             1e3 * r.update_median, 1e3 * r.refit_median, r.speedup))

# the same comparison by hand, for one size, to show what is being timed
rng = np.random.default_rng(7)
d, n = 256, 1000
base = FeatureMatrix(
    rng.standard_normal((d, n)),
    np.repeat(np.arange(1, n // 2 + 1), 2),
    np.tile([0, 1], n // 2),
)
model = fit_her_primal(base, lam=1.0, incremental=True)
pair = UpdateBatch(rng.standard_normal((d, 2)), [n // 2 + 1] * 2)
_, report = apply_update_policy(model, pair)
print()
print("one %dx%d pair update: %.3f ms on the %r path"
      % (d, n, 1e3 * report.elapsed, report.path))
print("drift estimate after the update: %.2e" % report.drift_estimate)
