"""Splits, cumulative match curves, and score fusion."""

import numpy as np
import pytest

from her_reid import (
    CmcCurve,
    FeatureMatrix,
    InvalidInputError,
    InvalidParameterError,
    SplitSpec,
    SyntheticSpec,
    compute_cmc,
    fit_her_primal,
    fuse_scores,
    generate_synthetic,
    make_split,
    model_distance,
    pairwise_distances,
)


def two_view(identities, dim, images=1, seed=0, noise=0.3):
    return generate_synthetic(
        SyntheticSpec(
            identities=identities, dim=dim, images_per_view=images,
            noise=noise, seed=seed,
        )
    )


# ---------------------------------------------------------------- splits


def test_half_split_is_identity_disjoint():
    data = two_view(10, 4)
    split = make_split(data.merged(), SplitSpec(seed=1))
    train_ids = set(split.train.labels.tolist())
    test_ids = set(split.test_probe.labels.tolist())
    assert len(train_ids) == 5 and len(test_ids) == 5
    assert train_ids.isdisjoint(test_ids)
    assert set(split.test_gallery.labels.tolist()) == test_ids


def test_split_is_deterministic_per_seed():
    data = two_view(12, 4)
    a = make_split(data.merged(), SplitSpec(seed=5))
    b = make_split(data.merged(), SplitSpec(seed=5))
    np.testing.assert_array_equal(a.train.labels, b.train.labels)
    np.testing.assert_array_equal(a.test_gallery.values, b.test_gallery.values)
    c = make_split(data.merged(), SplitSpec(seed=6))
    assert set(a.train.labels.tolist()) != set(c.train.labels.tolist())


def test_fractional_split_counts():
    data = two_view(10, 3)
    split = make_split(data.merged(), SplitSpec(train_fraction=0.3, seed=0))
    assert len(set(split.train.labels.tolist())) == 3
    # fraction never empties either side
    split = make_split(data.merged(), SplitSpec(train_fraction=0.999, seed=0))
    assert len(set(split.test_probe.labels.tolist())) >= 1


def test_single_shot_keeps_one_gallery_image_per_identity():
    data = two_view(8, 4, images=3, seed=2)
    split = make_split(data.merged(), SplitSpec(seed=3, single_shot=True))
    labels = split.test_gallery.labels
    ids, counts = np.unique(labels, return_counts=True)
    assert np.all(counts == 1)
    multi = make_split(data.merged(), SplitSpec(seed=3, single_shot=False))
    ids, counts = np.unique(multi.test_gallery.labels, return_counts=True)
    assert np.all(counts == 3)


def test_explicit_identity_lists():
    data = two_view(6, 3)
    spec = SplitSpec(train_identities=[1, 2, 3], test_identities=[4, 5, 6], seed=0)
    split = make_split(data.merged(), spec)
    assert set(split.train.labels.tolist()) == {1, 2, 3}
    with pytest.raises(InvalidInputError):
        make_split(
            data.merged(),
            SplitSpec(train_identities=[1, 2], test_identities=[2, 3], seed=0),
        )
    with pytest.raises(InvalidInputError):
        make_split(
            data.merged(),
            SplitSpec(train_identities=[1], test_identities=[99], seed=0),
        )


def test_split_requires_two_identities():
    data = two_view(1, 3)
    with pytest.raises(InvalidInputError):
        make_split(data.merged(), SplitSpec(seed=0))


# ------------------------------------------------------------------ CMC


def fit_on(data, lam=0.1):
    return fit_her_primal(data.merged(), lam)


def test_perfect_separation_gives_rank_one():
    data = two_view(10, 16, seed=7, noise=0.01)
    model = fit_on(data)
    curve = compute_cmc(model, data.probe, data.gallery)
    assert curve.rank(1) == 1.0
    assert curve.probe_count == 10


def test_adversarial_ranking_hits_only_at_gallery_size():
    # put every probe's true match as far as possible: identity projection,
    # true gallery item at distance 10, decoys at distance 1
    g = 6
    gallery_values = np.zeros((2, g))
    gallery_values[0, :] = np.arange(g) * 0.1 + 1.0
    probe_values = np.zeros((2, 1))
    probe_values[0, 0] = -9.0  # closest decoy wins, true match is farthest
    gallery_values[0, 0] = 10.0  # true match for identity 1
    gallery = FeatureMatrix(
        gallery_values, np.arange(1, g + 1), np.ones(g, dtype=np.uint8)
    )
    probe = FeatureMatrix(probe_values, np.array([1]), np.zeros(1, dtype=np.uint8))
    train = two_view(5, 2, seed=1)
    model = fit_on(train)
    curve = compute_cmc(model, probe, gallery)
    assert curve.rank_rates[-1] == 1.0
    assert np.all(curve.rank_rates[:-1] == 0.0)


def test_cmc_matches_brute_force_recount():
    rng = np.random.default_rng(8)
    for trial in range(10):
        data = two_view(20, 8, seed=100 + trial, noise=1.0)
        model = fit_on(data, lam=0.5)
        curve = compute_cmc(model, data.probe, data.gallery)

        # independent recount from raw pairwise distances
        g = data.gallery.sample_count
        hits = np.zeros(g)
        for i in range(data.probe.sample_count):
            dists = np.array(
                [
                    model_distance(model, data.probe.values[:, i], data.gallery.values[:, j])
                    for j in range(g)
                ]
            )
            order = np.argsort(dists, kind="stable")
            true_positions = [
                int(np.flatnonzero(order == j)[0])
                for j in np.flatnonzero(data.gallery.labels == data.probe.labels[i])
            ]
            hits[min(true_positions)] += 1
        expected = np.cumsum(hits) / data.probe.sample_count
        np.testing.assert_allclose(curve.rank_rates, expected, atol=1e-12)


def test_cmc_tie_break_prefers_lower_gallery_index():
    # two gallery items at identical distance from the probe; the true
    # match sits at the higher index, so the tie costs it rank 1
    gallery = FeatureMatrix(
        np.array([[1.0, 1.0]]), np.array([5, 9]), np.ones(2, dtype=np.uint8)
    )
    probe = FeatureMatrix(np.array([[0.0]]), np.array([9]), np.zeros(1, dtype=np.uint8))
    train = two_view(4, 1, seed=0)
    model = fit_on(train)
    curve = compute_cmc(model, probe, gallery)
    assert curve.rank(1) == 0.0
    assert curve.rank(2) == 1.0


def test_multi_shot_uses_best_ranked_true_image():
    data = two_view(6, 5, images=3, seed=4, noise=0.2)
    model = fit_on(data)
    curve = compute_cmc(model, data.probe, data.gallery)
    assert np.all(np.diff(curve.rank_rates) >= 0)
    assert curve.rank_rates[-1] == 1.0


def test_probe_identity_missing_from_gallery_is_rejected():
    data = two_view(5, 3, seed=5)
    model = fit_on(data)
    keep = np.flatnonzero(data.gallery.labels != 3)
    clipped = data.gallery.take(keep)
    with pytest.raises(InvalidInputError):
        compute_cmc(model, data.probe, clipped)


def test_curve_rank_accessor():
    curve = CmcCurve(rank_rates=np.array([0.5, 0.75, 1.0]), probe_count=4)
    assert curve.rank(1) == 0.5
    assert curve.rank(3) == 1.0
    assert curve.rank(50) == 1.0  # saturates past the gallery size
    with pytest.raises(InvalidParameterError):
        curve.rank(0)


# --------------------------------------------------------------- fusion


def test_single_model_fusion_preserves_ranking():
    data = two_view(8, 6, seed=6)
    model = fit_on(data)
    z = data.probe.values[:, 0]
    raw = pairwise_distances(model, z[:, None], data.gallery.values)[0]
    fused = fuse_scores([model], z, data.gallery.values)
    np.testing.assert_array_equal(np.argsort(fused, kind="stable"),
                                  np.argsort(raw, kind="stable"))


def test_identical_models_fuse_to_same_ranking():
    data = two_view(8, 6, seed=6)
    model = fit_on(data)
    z = data.probe.values[:, 1]
    one = fuse_scores([model], z, data.gallery.values)
    two = fuse_scores([model, model], z, data.gallery.values)
    np.testing.assert_allclose(two, 2 * one, rtol=1e-12)


def test_opposite_preferences_fuse_to_tie():
    class Stub:
        def __init__(self, dists):
            self.dists = np.asarray(dists, dtype=np.float64)

    def fake_distances(model, a, b):
        return model.dists[None, :]

    # monkeypatching by hand: fuse through the public API with two real
    # models built to disagree is brittle; instead verify the arithmetic
    # directly on normalized scores
    from her_reid.core import min_max_normalize

    a = min_max_normalize(np.array([0.0, 1.0]))
    b = min_max_normalize(np.array([1.0, 0.0]))
    fused = a + b
    assert fused[0] == fused[1]


def test_fusion_weights_and_validation():
    data = two_view(6, 5, seed=9)
    m1 = fit_on(data, lam=0.1)
    m2 = fit_on(data, lam=10.0)
    z = data.probe.values[:, 2]
    fused = fuse_scores([m1, m2], z, data.gallery.values, weights=[2.0, 0.0])
    only_first = fuse_scores([m1], z, data.gallery.values)
    np.testing.assert_allclose(fused, 2.0 * only_first, rtol=1e-12)
    with pytest.raises(InvalidInputError):
        fuse_scores([], z, data.gallery.values)
    with pytest.raises(InvalidInputError):
        fuse_scores([m1], z, data.gallery.values, weights=[1.0, 2.0])
    with pytest.raises(InvalidParameterError):
        fuse_scores([m1], z, data.gallery.values, weights=[-1.0])
