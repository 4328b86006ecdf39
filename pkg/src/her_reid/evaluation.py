"""Identity-disjoint splits, cumulative match curves, and score fusion.

Evaluation follows the standard cross-view matching protocol: identities
are split into disjoint train and test sets, each test probe is ranked
against the test gallery by model distance, and the cumulative match
curve (CMC) reports the fraction of probes whose true identity appears
within the top k for every k.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import (
    GALLERY,
    PROBE,
    FeatureMatrix,
    min_max_normalize,
    pairwise_distances,
)
from .errors import InvalidInputError, InvalidParameterError


@dataclass
class SplitSpec:
    """How to carve a labeled dataset into train and test halves.

    protocol "half-split" puts half the identities in each side;
    "fraction" uses train_fraction instead. With single_shot the test
    gallery keeps exactly one image per identity, chosen uniformly from
    the available gallery images. Explicit identity lists override the
    seeded shuffle entirely.
    """

    protocol: str = None
    train_fraction: float = 0.5
    single_shot: bool = True
    seed: int = 0
    train_identities: list = None
    test_identities: list = None

    def __post_init__(self):
        if self.protocol is None:
            self.protocol = "half-split" if self.train_fraction == 0.5 else "fraction"
        if self.protocol not in ("half-split", "fraction"):
            raise InvalidParameterError(f"unknown split protocol {self.protocol!r}")
        if self.protocol == "half-split":
            self.train_fraction = 0.5
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidParameterError("train_fraction must lie strictly inside (0, 1)")


@dataclass
class SplitResult:
    train: FeatureMatrix
    test_probe: FeatureMatrix
    test_gallery: FeatureMatrix
    train_identities: list
    test_identities: list


def _as_merged(data):
    if isinstance(data, FeatureMatrix):
        return data
    merged = getattr(data, "merged", None)
    if callable(merged):
        return merged()
    raise InvalidInputError("expected a FeatureMatrix or a two-view dataset")


def make_split(data, spec):
    """Split by identity so train and test share no person."""
    data = _as_merged(data)
    identities = np.unique(data.labels)
    if identities.size < 2:
        raise InvalidInputError("need at least two identities to split")

    if spec.train_identities is not None or spec.test_identities is not None:
        if spec.train_identities is None or spec.test_identities is None:
            raise InvalidInputError("explicit splits need both identity lists")
        train_ids = np.asarray(sorted(spec.train_identities), dtype=np.int64)
        test_ids = np.asarray(sorted(spec.test_identities), dtype=np.int64)
        if np.intersect1d(train_ids, test_ids).size:
            raise InvalidInputError("train and test identity sets overlap")
        known = set(identities.tolist())
        for i in np.concatenate([train_ids, test_ids]).tolist():
            if i not in known:
                raise InvalidInputError(f"identity {i} not present in the dataset")
    else:
        rng = np.random.default_rng(spec.seed)
        perm = rng.permutation(identities)
        n_train = int(round(spec.train_fraction * identities.size))
        n_train = min(max(n_train, 1), identities.size - 1)
        train_ids = np.sort(perm[:n_train])
        test_ids = np.sort(perm[n_train:])

    rng = np.random.default_rng(spec.seed + 1)
    train_mask = np.isin(data.labels, train_ids)
    test_mask = np.isin(data.labels, test_ids)

    train = data.take(np.flatnonzero(train_mask))
    test_probe_idx = np.flatnonzero(test_mask & (data.views == PROBE))
    test_gallery_idx = np.flatnonzero(test_mask & (data.views == GALLERY))

    for cid in test_ids.tolist():
        if not np.any(data.labels[test_probe_idx] == cid):
            raise InvalidInputError(f"test identity {cid} has no probe image")
        if not np.any(data.labels[test_gallery_idx] == cid):
            raise InvalidInputError(f"test identity {cid} has no gallery image")

    if spec.single_shot:
        keep = []
        for cid in test_ids.tolist():
            candidates = test_gallery_idx[data.labels[test_gallery_idx] == cid]
            keep.append(int(rng.choice(candidates)))
        test_gallery_idx = np.array(sorted(keep), dtype=np.int64)

    return SplitResult(
        train=train,
        test_probe=data.take(test_probe_idx),
        test_gallery=data.take(test_gallery_idx),
        train_identities=[int(i) for i in train_ids],
        test_identities=[int(i) for i in test_ids],
    )


@dataclass
class CmcCurve:
    """Cumulative match curve: rank_rates[k-1] is the top-k match rate."""

    rank_rates: np.ndarray
    probe_count: int

    def rank(self, k):
        """Top-k rate; k beyond the gallery size saturates at the last entry."""
        if k < 1:
            raise InvalidParameterError("rank index must be >= 1")
        k = min(int(k), self.rank_rates.size)
        return float(self.rank_rates[k - 1])


def compute_cmc(model, probes, gallery):
    """Rank every probe against the gallery and accumulate match rates.

    Distance ties are broken toward the lower gallery index. With several
    gallery images of the true identity, the best-ranked one counts.
    """
    present = set(np.unique(gallery.labels).tolist())
    for cid in np.unique(probes.labels).tolist():
        if cid not in present:
            raise InvalidInputError(f"probe identity {cid} missing from the gallery")

    dists = pairwise_distances(model, probes.values, gallery.values)
    g = gallery.labels
    counts = np.zeros(gallery.sample_count, dtype=np.int64)
    for i in range(probes.sample_count):
        order = np.argsort(dists[i], kind="stable")
        hits = np.flatnonzero(g[order] == probes.labels[i])
        counts[int(hits[0])] += 1
    rates = np.cumsum(counts) / probes.sample_count
    return CmcCurve(rank_rates=rates, probe_count=int(probes.sample_count))


def fuse_scores(models, probe, gallery_values, weights=None):
    """Score-level fusion of several models over a shared gallery.

    Each model's distance vector for the probe is min-max normalized over
    the gallery and the normalized scores are combined by a weighted sum
    (unit weights by default). Returns the fused distance vector; lower
    still means a better match.
    """
    models = list(models)
    if not models:
        raise InvalidInputError("fusion needs at least one model")
    if weights is None:
        weights = [1.0] * len(models)
    weights = [float(w) for w in weights]
    if len(weights) != len(models):
        raise InvalidInputError(
            f"expected {len(models)} weights, got {len(weights)}"
        )
    if any(not np.isfinite(w) or w < 0 for w in weights):
        raise InvalidParameterError("fusion weights must be finite and non-negative")

    probe = np.asarray(probe, dtype=np.float64).ravel()
    fused = None
    for model, w in zip(models, weights):
        d = pairwise_distances(model, probe[:, None], gallery_values)[0]
        part = w * min_max_normalize(d)
        fused = part if fused is None else fused + part
    return fused
