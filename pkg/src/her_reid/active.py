"""Joint exploration-exploitation selection of probes for annotation.

Each round scores every unlabeled probe with three criteria measured in
the current model's projected space:

  diversity    min distance to any probe a human has already looked at,
               so selection spreads across the probe population;
  matching     min distance to the gallery, large when the model cannot
               place the probe near any candidate;
  entropy      Shannon entropy of the softmax distribution over negated
               gallery distances, large when the ranking is ambiguous.

Scores are min-max normalized over the unlabeled pool and summed; the
arg-max probe (ties to the lowest sample id) is shown to the annotator
with a ranked gallery list. A confirmed match becomes a brand-new
two-sample identity and is absorbed into the model incrementally; a
no-match answer parks the probe without touching the model.

Before the first confirmed pair there is no model: the very first probe
is drawn uniformly at random and rankings fall back to raw feature
distances (identity projection).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    MAX_INCREMENTAL_DIM,
    PROBE,
    FeatureMatrix,
    HerModel,
    min_max_normalize,
    pairwise_distances,
    split_views,
)
from .errors import (
    InvalidInputError,
    InvalidParameterError,
    InvalidStateError,
    PoolExhaustedError,
)
from .evaluation import SplitSpec, compute_cmc, make_split
from .incremental import UpdateBatch, apply_update_policy

POLICIES = ("joint-e2", "random", "density")


@dataclass
class ActiveConfig:
    """Knobs for one annotation run.

    budget counts annotator interactions (matched or parked); exactly one
    of budget / budget_fraction must be provided, the fraction being
    relative to the probe-pool size. gallery_mode picks the candidate set
    the matching and entropy criteria range over: "full" uses the whole
    gallery (the literal scoring rule), "unlabeled" restricts to the
    still-unmatched remainder.
    """

    policy: str = "joint-e2"
    lam: float = 0.1
    budget: int = None
    budget_fraction: float = None
    seed: int = 0
    gallery_mode: str = "full"
    scalar_threshold: int = None
    milestones: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)
    allow_large_inverse: bool = False

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise InvalidParameterError(
                f"unknown policy {self.policy!r}; expected one of {POLICIES}"
            )
        if self.gallery_mode not in ("full", "unlabeled"):
            raise InvalidParameterError(
                f"gallery_mode must be 'full' or 'unlabeled', got {self.gallery_mode!r}"
            )
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise InvalidParameterError("ridge weight must be positive")
        if self.budget is None and self.budget_fraction is None:
            raise InvalidParameterError("provide budget or budget_fraction")
        if self.budget is not None and self.budget < 1:
            raise InvalidParameterError("budget must be a positive integer")
        if self.budget_fraction is not None and not 0.0 < self.budget_fraction <= 1.0:
            raise InvalidParameterError("budget_fraction must lie in (0, 1]")

    def resolve_budget(self, probe_count):
        if self.budget is not None:
            return int(self.budget)
        return max(1, math.ceil(self.budget_fraction * probe_count))


@dataclass
class ActivePool:
    """Mutable annotation state over fixed probe and gallery stores.

    Sample ids are column indices into the respective FeatureMatrix.
    Probes are partitioned into unlabeled, labeled (matched) and parked
    (examined, no match found); the three sets always cover the original
    probe set exactly. step counts matched annotations, selections counts
    every annotator interaction.
    """

    probe: FeatureMatrix
    gallery: FeatureMatrix
    budget: int
    unlabeled_probe_ids: set = None
    labeled_probe_ids: list = field(default_factory=list)
    parked_probe_ids: list = field(default_factory=list)
    unlabeled_gallery_ids: set = None
    matched_gallery_ids: list = field(default_factory=list)
    step: int = 0
    selections: int = 0
    next_identity: int = 1

    def __post_init__(self):
        if self.budget < 1:
            raise InvalidParameterError("budget must be a positive integer")
        if self.unlabeled_probe_ids is None:
            self.unlabeled_probe_ids = set(range(self.probe.sample_count))
        if self.unlabeled_gallery_ids is None:
            self.unlabeled_gallery_ids = set(range(self.gallery.sample_count))

    @property
    def examined_probe_ids(self):
        return self.labeled_probe_ids + self.parked_probe_ids

    def exhausted(self):
        return self.selections >= self.budget or not self.unlabeled_probe_ids


@dataclass
class SelectionScores:
    """Per-probe criterion values for one selection round.

    Arrays are parallel to probe_ids (ascending). diversity is None while
    no probe has been examined yet; normalized columns are on [0, 1] and
    joint is their sum.
    """

    probe_ids: np.ndarray
    matching: np.ndarray
    entropy: np.ndarray
    diversity: np.ndarray = None
    matching_norm: np.ndarray = None
    entropy_norm: np.ndarray = None
    diversity_norm: np.ndarray = None
    joint: np.ndarray = None

    def for_probe(self, probe_id):
        """Scalar score snapshot of one probe, for reporting."""
        i = int(np.flatnonzero(self.probe_ids == probe_id)[0])
        pick = lambda arr: None if arr is None else float(arr[i])
        return {
            "diversity": pick(self.diversity),
            "matching": pick(self.matching),
            "entropy": pick(self.entropy),
            "diversity_norm": pick(self.diversity_norm),
            "matching_norm": pick(self.matching_norm),
            "entropy_norm": pick(self.entropy_norm),
            "joint": pick(self.joint),
        }


@dataclass
class AnnotationEvent:
    """One annotator interaction: either a confirmed pair or a no-match."""

    step: int
    probe_id: int
    gallery_id: int = None
    identity: int = None

    @property
    def matched(self):
        return self.gallery_id is not None


def ranking_model(model):
    """The model used for scoring, or None (raw features) before any pair."""
    if model is None or model.class_count == 0:
        return None
    return model


def _sorted_ids(ids):
    return np.array(sorted(ids), dtype=np.int64)


def _candidate_gallery_ids(pool, config):
    if config.gallery_mode == "unlabeled":
        return _sorted_ids(pool.unlabeled_gallery_ids)
    return np.arange(pool.gallery.sample_count, dtype=np.int64)


def diversity_score(pool, model):
    """Distance from each unlabeled probe to its nearest examined probe.

    Returns (probe_ids, scores); scores is None when nothing has been
    examined yet, in which case the criterion is left out of the joint
    score entirely.
    """
    ids = _sorted_ids(pool.unlabeled_probe_ids)
    examined = pool.examined_probe_ids
    if not examined:
        return ids, None
    ref = np.asarray(examined, dtype=np.int64)
    d = pairwise_distances(
        ranking_model(model), pool.probe.values[:, ids], pool.probe.values[:, ref]
    )
    return ids, d.min(axis=1)


def matching_uncertainty_score(pool, model, config=None):
    """Distance from each unlabeled probe to its nearest gallery sample."""
    config = config or _SCORING_DEFAULTS
    ids = _sorted_ids(pool.unlabeled_probe_ids)
    cand = _candidate_gallery_ids(pool, config)
    if cand.size == 0:
        raise InvalidInputError("no gallery candidates to score against")
    d = pairwise_distances(
        ranking_model(model), pool.probe.values[:, ids], pool.gallery.values[:, cand]
    )
    return ids, d.min(axis=1)


def ranking_distribution(distances):
    """Softmax over negated distances, computed with a max shift."""
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim == 1:
        d = d[None, :]
    if d.size == 0:
        raise InvalidInputError("ranking distribution needs at least one candidate")
    z = -d
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    return p


def entropy_of(p):
    """Shannon entropy in nats per row, with 0 log 0 taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


def ranking_entropy_score(pool, model, config=None):
    """Entropy of each unlabeled probe's gallery ranking distribution."""
    config = config or _SCORING_DEFAULTS
    ids = _sorted_ids(pool.unlabeled_probe_ids)
    cand = _candidate_gallery_ids(pool, config)
    if cand.size == 0:
        raise InvalidInputError("no gallery candidates to score against")
    d = pairwise_distances(
        ranking_model(model), pool.probe.values[:, ids], pool.gallery.values[:, cand]
    )
    return ids, entropy_of(ranking_distribution(d))


def normalize_scores(values):
    """Min-max rescale onto [0, 1]; degenerate spreads map to 0.5."""
    return min_max_normalize(values)


def joint_scores(pool, model, config=None):
    """All selection criteria for the unlabeled pool, normalized and summed."""
    config = config or _SCORING_DEFAULTS
    # matching and entropy read the same probe-to-gallery distances, so
    # compute that matrix once per selection round
    ids = _sorted_ids(pool.unlabeled_probe_ids)
    cand = _candidate_gallery_ids(pool, config)
    if cand.size == 0:
        raise InvalidInputError("no gallery candidates to score against")
    d = pairwise_distances(
        ranking_model(model), pool.probe.values[:, ids], pool.gallery.values[:, cand]
    )
    matching = d.min(axis=1)
    entropy = entropy_of(ranking_distribution(d))
    _, diversity = diversity_score(pool, model)
    scores = SelectionScores(probe_ids=ids, matching=matching, entropy=entropy)
    scores.matching_norm = normalize_scores(matching)
    scores.entropy_norm = normalize_scores(entropy)
    joint = scores.matching_norm + scores.entropy_norm
    if diversity is not None:
        scores.diversity = diversity
        scores.diversity_norm = normalize_scores(diversity)
        joint = joint + scores.diversity_norm
    scores.joint = joint
    return scores


def _argmax_lowest_id(ids, values):
    # ids are ascending, so the first strict maximum wins ties by id.
    return int(ids[int(np.argmax(values))])


def density_scores(pool, model):
    """Neighbor counts within the median pairwise distance radius."""
    ids = _sorted_ids(pool.unlabeled_probe_ids)
    d = pairwise_distances(
        ranking_model(model), pool.probe.values[:, ids], pool.probe.values[:, ids]
    )
    if ids.size == 1:
        return ids, np.zeros(1)
    iu = np.triu_indices(ids.size, k=1)
    radius = float(np.median(d[iu]))
    counts = np.sum(d <= radius, axis=1).astype(np.float64)
    return ids, counts


def select_next_probe(pool, model, config, rng):
    """Pick the next probe id to show the annotator.

    Returns (probe_id, SelectionScores or None). Raises PoolExhaustedError
    when the budget is spent or no unlabeled probe remains.
    """
    if pool.exhausted():
        raise PoolExhaustedError(
            f"{pool.selections} of {pool.budget} interactions used, "
            f"{len(pool.unlabeled_probe_ids)} probes left"
        )
    ids = _sorted_ids(pool.unlabeled_probe_ids)

    if config.policy == "random":
        return int(rng.choice(ids)), None

    if config.policy == "density":
        ids, counts = density_scores(pool, model)
        return _argmax_lowest_id(ids, counts), None

    # joint-e2: the opening pick has no examined probes and no model to
    # score with, so it falls back to a uniform seeded draw.
    if ranking_model(model) is None and not pool.examined_probe_ids:
        return int(rng.choice(ids)), None
    scores = joint_scores(pool, model, config)
    return _argmax_lowest_id(scores.probe_ids, scores.joint), scores


def rank_gallery(pool, model, probe_id):
    """Unlabeled gallery ids sorted by distance to the probe, ties by id."""
    cand = _sorted_ids(pool.unlabeled_gallery_ids)
    if cand.size == 0:
        raise PoolExhaustedError("no unlabeled gallery images remain")
    d = pairwise_distances(
        ranking_model(model),
        pool.probe.values[:, [probe_id]],
        pool.gallery.values[:, cand],
    )[0]
    order = np.argsort(d, kind="stable")
    return cand[order], d[order]


def empty_incremental_model(feature_dim, lam, allow_large_inverse=False):
    """A zero-class model ready for its first incremental pair.

    Its tracked inverse is (lam I)^(-1), so absorbing batches through the
    usual update path reproduces the batch solution exactly.
    """
    if not np.isfinite(lam) or lam <= 0:
        raise InvalidParameterError("ridge weight must be positive")
    if feature_dim > MAX_INCREMENTAL_DIM and not allow_large_inverse:
        raise InvalidParameterError(
            f"feature dimension {feature_dim} exceeds the dense-inverse cap "
            f"{MAX_INCREMENTAL_DIM}; set allow_large_inverse to override"
        )
    return HerModel(
        projection=np.zeros((feature_dim, 0)),
        lam=float(lam),
        class_ids=[],
        class_counts=[],
        t_inverse=np.eye(feature_dim) / lam,
        t_matrix=np.eye(feature_dim) * lam,
    )


def apply_annotation(pool, model, probe_id, gallery_id, config):
    """Record one annotator answer and update the model on a match.

    gallery_id None means "no match": the probe is parked and the model
    is untouched. Otherwise the pair becomes a new identity and both
    samples are absorbed incrementally. Returns (model, event, report).
    The pool is updated in place under the single-writer contract.
    """
    probe_id = int(probe_id)
    if probe_id not in pool.unlabeled_probe_ids:
        raise InvalidStateError(f"probe {probe_id} is not awaiting annotation")

    if gallery_id is None:
        pool.unlabeled_probe_ids.discard(probe_id)
        pool.parked_probe_ids.append(probe_id)
        pool.selections += 1
        return model, AnnotationEvent(step=pool.step, probe_id=probe_id), None

    gallery_id = int(gallery_id)
    if gallery_id not in pool.unlabeled_gallery_ids:
        raise InvalidInputError(f"gallery image {gallery_id} is not available")

    identity = pool.next_identity
    batch = UpdateBatch(
        np.column_stack(
            [pool.probe.values[:, probe_id], pool.gallery.values[:, gallery_id]]
        ),
        [identity, identity],
    )
    model, report = apply_update_policy(model, batch, config.scalar_threshold)

    pool.next_identity += 1
    pool.unlabeled_probe_ids.discard(probe_id)
    pool.labeled_probe_ids.append(probe_id)
    pool.unlabeled_gallery_ids.discard(gallery_id)
    pool.matched_gallery_ids.append(gallery_id)
    pool.step += 1
    pool.selections += 1
    event = AnnotationEvent(
        step=pool.step, probe_id=probe_id, gallery_id=gallery_id, identity=identity
    )
    return model, event, report


def active_step(pool, model, annotator, config, rng):
    """One full round: select, show the ranking, apply the answer.

    annotator is called with (probe_id, ranked_gallery_ids, distances)
    and returns a gallery id from the list or None for no-match.
    """
    probe_id, _ = select_next_probe(pool, model, config, rng)
    ranked_ids, dists = rank_gallery(pool, model, probe_id)
    answer = annotator(probe_id, ranked_ids, dists)
    return (pool,) + apply_annotation(pool, model, probe_id, answer, config)


def oracle_annotator(probe_labels, gallery_labels):
    """Simulated human that confirms the best-ranked true match."""
    probe_labels = np.asarray(probe_labels)
    gallery_labels = np.asarray(gallery_labels)

    def annotate(probe_id, ranked_gallery_ids, _distances):
        truth = probe_labels[probe_id]
        for gid in ranked_gallery_ids.tolist():
            if gallery_labels[gid] == truth:
                return int(gid)
        return None

    return annotate


def milestone_steps(fractions, probe_count):
    """Map budget fractions to the annotation step that completes them."""
    out = {}
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise InvalidParameterError("milestone fractions must lie in (0, 1]")
        out[float(f)] = max(1, math.ceil(f * probe_count))
    return out


def derive_trial_streams(seed, trial):
    """Per-trial (split seed, selection rng); shared by offline and service
    runs so the two produce identical annotation sequences."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial),))
    split_seed, rng_seed = (int(s) for s in ss.generate_state(2))
    return split_seed, np.random.default_rng(rng_seed)


@dataclass
class TrialRun:
    """One simulated annotation session and its milestone snapshots."""

    trial: int
    milestones: list
    final_model: HerModel
    events: list
    pool: ActivePool
    split: object


@dataclass
class ActiveRunResult:
    policy: str
    trials: list

    def milestone_fractions(self):
        return [m["fraction"] for m in self.trials[0].milestones]

    def rank_values(self, k, fraction):
        """Per-trial top-k rate at the given budget fraction."""
        out = []
        for t in self.trials:
            hit = [m for m in t.milestones if m["fraction"] == fraction]
            if not hit:
                raise InvalidInputError(f"no milestone at fraction {fraction}")
            out.append(hit[0]["curve"].rank(k))
        return np.array(out)

    def mean_rank(self, k, fraction):
        return float(self.rank_values(k, fraction).mean())


def build_active_pool(train, budget):
    """Probe/gallery pools from a merged training FeatureMatrix."""
    probe, gallery = split_views(train)
    if probe.sample_count == 0 or gallery.sample_count == 0:
        raise InvalidInputError("the annotation pool needs both views populated")
    return ActivePool(probe=probe, gallery=gallery, budget=budget)


def simulate_active_run(dataset, config, trials=1, split=None):
    """Run seeded oracle-annotated sessions and collect milestone curves.

    dataset carries ground-truth identities (a TwoViewData or a merged
    FeatureMatrix). Each trial re-splits identities (train half drives
    annotation, test half is scored), runs the selection policy to its
    budget, and evaluates the model on the test split at every milestone.
    """
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    if split is None:
        split = SplitSpec()

    runs = []
    for trial in range(trials):
        split_seed, rng = derive_trial_streams(config.seed, trial)
        trial_split = SplitSpec(
            protocol=split.protocol,
            train_fraction=split.train_fraction,
            single_shot=split.single_shot,
            seed=split_seed,
            train_identities=split.train_identities,
            test_identities=split.test_identities,
        )
        result = make_split(dataset, trial_split)
        budget = config.resolve_budget(int(np.sum(result.train.views == PROBE)))
        pool = build_active_pool(result.train, budget)
        model = empty_incremental_model(
            pool.probe.feature_dim, config.lam, config.allow_large_inverse
        )
        annotator = oracle_annotator(pool.probe.labels, pool.gallery.labels)
        steps_by_fraction = milestone_steps(config.milestones, pool.probe.sample_count)

        events = []
        milestones = []
        while not pool.exhausted():
            pool, model, event, _report = active_step(
                pool, model, annotator, config, rng
            )
            events.append(event)
            if event.matched:
                for fraction, at_step in steps_by_fraction.items():
                    if pool.step == at_step:
                        curve = compute_cmc(model, result.test_probe, result.test_gallery)
                        milestones.append(
                            {"fraction": fraction, "step": at_step, "curve": curve}
                        )
        milestones.sort(key=lambda m: m["fraction"])
        runs.append(
            TrialRun(
                trial=trial,
                milestones=milestones,
                final_model=model,
                events=events,
                pool=pool,
                split=result,
            )
        )
    return ActiveRunResult(policy=config.policy, trials=runs)


_SCORING_DEFAULTS = ActiveConfig(budget=1)
