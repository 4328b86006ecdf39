"""
Driving annotation with joint selection scores
==============================================

With a labeling budget far below the pool size, which probe should a
human look at next? This script walks two selection rounds by hand, then
lets the simulator run full budget sweeps for the three built-in
policies and prints the rank-1 trajectory of each.
"""

import numpy as np

from her_reid import (
    ActiveConfig,
    SplitSpec,
    SyntheticSpec,
    apply_annotation,
    build_active_pool,
    empty_incremental_model,
    generate_synthetic,
    make_split,
    oracle_annotator,
    rank_gallery,
    select_next_probe,
    simulate_active_run,
    split_views,
)

data = generate_synthetic(
    SyntheticSpec(identities=60, dim=24, images_per_view=2, noise=0.4, seed=5)
)
split = make_split(data, SplitSpec(seed=5))
config = ActiveConfig(policy="joint-e2", lam=0.5, budget_fraction=0.4, seed=11)

probes, _ = split_views(split.train)
pool = build_active_pool(split.train, config.resolve_budget(probes.sample_count))
print("pool: %d probes, %d gallery images, budget %d"
      % (pool.probe.sample_count, pool.gallery.sample_count, pool.budget))

rng = np.random.default_rng(11)
model = empty_incremental_model(pool.probe.feature_dim, config.lam)
annotate = oracle_annotator(pool.probe.labels, pool.gallery.labels)

# round 1: no trained class yet, so the opening pick is a uniform seeded
# draw and no score breakdown exists
probe_id, scores = select_next_probe(pool, model, config, rng)
ranked, dists = rank_gallery(pool, model, probe_id)
answer = annotate(probe_id, ranked, dists)
model, event, report = apply_annotation(pool, model, probe_id, answer, config)
print("bootstrap pick: probe %d, scores attached: %s, matched: %s"
      % (probe_id, scores is not None, event.matched))

# round 2: the model exists, so every unlabeled probe gets a full score
# breakdown; peek at the winner's components
probe_id, scores = select_next_probe(pool, model, config, rng)
row = scores.for_probe(probe_id)
print("next probe %d  joint=%.3f" % (probe_id, row["joint"]))
print("  diversity(norm)=%.3f  matching(norm)=%.3f  entropy(norm)=%.3f"
      % (row["diversity_norm"], row["matching_norm"], row["entropy_norm"]))

ranked, dists = rank_gallery(pool, model, probe_id)
model, event, report = apply_annotation(
    pool, model, probe_id, annotate(probe_id, ranked, dists), config
)
print("matched: %s, model now has %d classes" % (event.matched, model.class_count))

# full sweeps: same data, same seeds, three policies; each trial
# annotates the train half and scores rank-1 on the held-out half
checkpoints = (0.2, 0.4, 0.7, 1.0)
print()
print("policy    " + "".join("  %4.0f%%" % (100 * f) for f in checkpoints))
for policy in ("joint-e2", "density", "random"):
    cfg = ActiveConfig(
        policy=policy, lam=0.5, budget_fraction=1.0, seed=11,
        milestones=checkpoints,
    )
    run = simulate_active_run(data, cfg, trials=5)
    cells = "".join("  %.3f" % run.mean_rank(1, f) for f in checkpoints)
    print("%-10s%s" % (policy, cells))
