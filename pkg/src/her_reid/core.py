"""Closed-form discriminative regression for cross-view identity matching.

The model regresses feature vectors onto a class-indicator target whose
columns are scaled to unit norm. For features X (d x n), labels with c
classes and ridge weight lam > 0, the fitted projection is

    P = (X X^T + lam I)^(-1) X Y

which is the unique minimizer of  0.5 * ||X^T P - Y||_F^2
+ (lam / 2) * ||P||_F^2.  Matching between two samples is scored by the
squared Euclidean distance of their projections, so P acts as a learned
metric. A kernelized dual form is available for nonlinear lifts.

All operations here are pure functions over value types; nothing mutates
its inputs.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, InvalidParameterError

PROBE = 0
GALLERY = 1

_VIEW_NAMES = {"probe": PROBE, "gallery": GALLERY, "0": PROBE, "1": GALLERY}


def _as_float64(values, name):
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


@dataclass
class FeatureMatrix:
    """Column-wise feature store: values[:, i] is sample i.

    labels holds one integer identity id per column; views tags each
    column as probe (0) or gallery (1). Treated as immutable.
    """

    values: np.ndarray
    labels: np.ndarray
    views: np.ndarray

    def __post_init__(self):
        self.values = _as_float64(self.values, "features")
        if self.values.ndim != 2:
            raise InvalidInputError("features must be a 2-d array (d x n)")
        d, n = self.values.shape
        if d < 1 or n < 1:
            raise InvalidInputError("features must be non-empty in both dimensions")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (n,):
            raise InvalidInputError(
                f"labels must have one entry per sample: expected {n}, got {self.labels.shape}"
            )
        views = np.asarray(
            [_VIEW_NAMES.get(str(v).lower(), v) for v in np.asarray(self.views).ravel()]
        )
        views = views.astype(np.uint8)
        if views.shape != (n,):
            raise InvalidInputError("views must have one entry per sample")
        if not np.all((views == PROBE) | (views == GALLERY)):
            raise InvalidInputError("views must be 0 (probe) or 1 (gallery)")
        self.views = views

    @property
    def feature_dim(self):
        return self.values.shape[0]

    @property
    def sample_count(self):
        return self.values.shape[1]

    @property
    def class_count(self):
        return int(np.unique(self.labels).size)

    def take(self, indices):
        """New FeatureMatrix holding the given sample columns, in order."""
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureMatrix(self.values[:, idx], self.labels[idx], self.views[idx])


def merge_views(probe, gallery):
    """Concatenate a probe-view and a gallery-view matrix into one store."""
    if probe.feature_dim != gallery.feature_dim:
        raise InvalidInputError("probe and gallery feature dimensions differ")
    return FeatureMatrix(
        np.concatenate([probe.values, gallery.values], axis=1),
        np.concatenate([probe.labels, gallery.labels]),
        np.concatenate([probe.views, gallery.views]),
    )


def split_views(data):
    """Inverse of merge_views: (probe-only, gallery-only) sample subsets."""
    return (
        data.take(np.flatnonzero(data.views == PROBE)),
        data.take(np.flatnonzero(data.views == GALLERY)),
    )


@dataclass
class IndicatorMatrix:
    """Class-indicator target with unit-norm columns.

    values[i, j] = 1 / sqrt(n_j) when sample i belongs to class j, else 0,
    where n_j is the class size. Column order follows first appearance of
    each class id in the label sequence.
    """

    values: np.ndarray
    class_ids: list
    class_sizes: np.ndarray


def build_indicator(labels):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.size == 0:
        raise InvalidInputError("labels must be a non-empty 1-d sequence")
    class_ids = []
    column = {}
    for l in labels.tolist():
        if l not in column:
            column[l] = len(class_ids)
            class_ids.append(l)
    c = len(class_ids)
    cols = np.array([column[l] for l in labels.tolist()], dtype=np.int64)
    sizes = np.bincount(cols, minlength=c)
    values = np.zeros((labels.size, c))
    values[np.arange(labels.size), cols] = 1.0 / np.sqrt(sizes[cols])
    return IndicatorMatrix(values=values, class_ids=class_ids, class_sizes=sizes)


@dataclass
class KernelSpec:
    """Kernel choice for the dual form.

    kind is "linear" or "rbf". For rbf, sigma_sq is the squared bandwidth
    of exp(-||a - b||^2 / (2 sigma_sq)); leave it None to resolve it from
    the training features by the median heuristic (median of squared
    pairwise distances).
    """

    kind: str = "linear"
    sigma_sq: float = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise InvalidParameterError(f"unknown kernel kind: {self.kind!r}")
        if self.sigma_sq is not None and self.sigma_sq <= 0:
            raise InvalidParameterError("kernel bandwidth must be positive")


def median_squared_distance(points):
    """Median of squared pairwise distances among the columns of points.

    Only distinct pairs (i < j) participate; self-distances are excluded.
    """
    points = _as_float64(points, "points")
    if points.ndim == 1:
        points = points[None, :]
    n = points.shape[1]
    if n < 2:
        raise InvalidInputError("median heuristic needs at least two points")
    diffs = points[:, :, None] - points[:, None, :]
    sq = np.sum(diffs * diffs, axis=0)
    iu = np.triu_indices(n, k=1)
    return float(np.median(sq[iu]))


def rbf_kernel(a, b, sigma_sq=None):
    """Gaussian kernel matrix between columns of a and columns of b.

    When sigma_sq is None it is resolved by the median heuristic on a.
    """
    a = _as_float64(a, "a")
    b = _as_float64(b, "b")
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] != b.shape[0]:
        raise InvalidInputError("kernel operands must share the feature dimension")
    if sigma_sq is None:
        sigma_sq = median_squared_distance(a)
    if sigma_sq <= 0:
        raise InvalidParameterError("kernel bandwidth must be positive")
    sq = (
        np.sum(a * a, axis=0)[:, None]
        + np.sum(b * b, axis=0)[None, :]
        - 2.0 * (a.T @ b)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma_sq))


def linear_kernel(a, b):
    a = _as_float64(a, "a")
    b = _as_float64(b, "b")
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] != b.shape[0]:
        raise InvalidInputError("kernel operands must share the feature dimension")
    return a.T @ b


def kernel_matrix(spec, a, b):
    if spec.kind == "linear":
        return linear_kernel(a, b)
    return rbf_kernel(a, b, sigma_sq=spec.sigma_sq)


@dataclass
class HerModel:
    """Fitted linear projection plus the bookkeeping updates need.

    projection has one column per registered class, in registry order.
    t_inverse is (X X^T + lam I)^(-1), kept only when the model was fitted
    for incremental use; t_matrix mirrors the un-inverted accumulator so
    inversion drift can be estimated. class_counts tracks how many samples
    each class has absorbed (0 means unknown, e.g. after deserialization).
    stale_classes collects ids whose absorbed target rows could not be
    renormalized when the class later grew, because the absorbed size was
    unknown at that point; a refresh from retained data clears it.
    """

    projection: np.ndarray
    lam: float
    class_ids: list
    class_counts: list
    t_inverse: np.ndarray = None
    t_matrix: np.ndarray = None
    stale_classes: set = field(default_factory=set)

    def __post_init__(self):
        # one canonical memory layout so identical values multiply to
        # identical results regardless of where the model came from
        self.projection = np.ascontiguousarray(self.projection, dtype=np.float64)
        if self.t_inverse is not None:
            self.t_inverse = np.ascontiguousarray(self.t_inverse, dtype=np.float64)
        if self.t_matrix is not None:
            self.t_matrix = np.ascontiguousarray(self.t_matrix, dtype=np.float64)

    @property
    def feature_dim(self):
        return self.projection.shape[0]

    @property
    def class_count(self):
        return self.projection.shape[1]

    @property
    def is_incremental(self):
        return self.t_inverse is not None


@dataclass
class KernelModel:
    """Dual-form model: one coefficient column per class.

    support_features are the training samples the kernel is evaluated
    against at projection time. The kernel spec is stored with its
    bandwidth resolved so test-time evaluations reuse the training value.
    """

    dual_coefficients: np.ndarray
    support_features: np.ndarray
    kernel: KernelSpec
    lam: float
    class_ids: list = field(default_factory=list)


# Refusing to build a dense d x d inverse above this width guards against
# accidental multi-gigabyte allocations; callers can override explicitly.
MAX_INCREMENTAL_DIM = 4096


def _check_lam(lam):
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise InvalidParameterError(f"ridge weight must be positive, got {lam}")
    return lam


def fit_her_primal(features, lam, incremental=False, allow_large_inverse=False):
    """Fit the linear projection P = (X X^T + lam I)^(-1) X Y.

    With incremental=True the d x d inverse (and its un-inverted mirror)
    is computed and stored so the model accepts later updates; this is
    rejected above MAX_INCREMENTAL_DIM unless allow_large_inverse is set.
    Without it, the solve is routed through the n x n Gram system when
    d > n, which is cheaper and numerically equivalent.
    """
    lam = _check_lam(lam)
    X = features.values
    d, n = X.shape
    indicator = build_indicator(features.labels)
    Y = indicator.values

    if incremental:
        if d > MAX_INCREMENTAL_DIM and not allow_large_inverse:
            raise InvalidParameterError(
                f"feature dimension {d} exceeds the dense-inverse cap "
                f"{MAX_INCREMENTAL_DIM}; pass allow_large_inverse=True to override"
            )
        T = X @ X.T
        T[np.diag_indices(d)] += lam
        factor = scipy.linalg.cho_factor(T)
        P = scipy.linalg.cho_solve(factor, X @ Y)
        t_inverse = scipy.linalg.cho_solve(factor, np.eye(d))
        t_inverse = 0.5 * (t_inverse + t_inverse.T)
        t_matrix = 0.5 * (T + T.T)
    else:
        t_inverse = None
        t_matrix = None
        if d <= n:
            T = X @ X.T
            T[np.diag_indices(d)] += lam
            P = scipy.linalg.cho_solve(scipy.linalg.cho_factor(T), X @ Y)
        else:
            # Push-through identity: (X X^T + lam I)^(-1) X = X (X^T X + lam I)^(-1),
            # so the factorization stays n x n when d > n.
            G = X.T @ X
            G[np.diag_indices(n)] += lam
            P = X @ scipy.linalg.cho_solve(scipy.linalg.cho_factor(G), Y)

    return HerModel(
        projection=P,
        lam=lam,
        class_ids=list(indicator.class_ids),
        class_counts=[int(s) for s in indicator.class_sizes],
        t_inverse=t_inverse,
        t_matrix=t_matrix,
    )


def fit_her_dual(features, lam, kernel=None):
    """Fit the dual coefficients Q solving (K K^T + lam K) Q = K Y.

    The system is normally solved by factorizing K (K + lam I); when that
    factorization fails because K is numerically singular, an eigenvalue
    pseudo-inverse is used with eigenvalues below 1e-12 of the largest
    cut to zero.
    """
    lam = _check_lam(lam)
    kernel = kernel or KernelSpec("linear")
    X = features.values
    indicator = build_indicator(features.labels)
    Y = indicator.values

    if kernel.kind == "rbf" and kernel.sigma_sq is None:
        kernel = KernelSpec("rbf", sigma_sq=median_squared_distance(X))
    K = kernel_matrix(kernel, X, X)
    K = 0.5 * (K + K.T)
    n = K.shape[0]

    A = K @ K
    A += lam * K
    A = 0.5 * (A + A.T)
    try:
        Q = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), K @ Y)
    except scipy.linalg.LinAlgError:
        w, V = scipy.linalg.eigh(K)
        keep = w > 1e-12 * np.max(np.abs(w))
        # On K's column space the pseudo-solution collapses to
        # V diag(1/(w + lam)) V^T Y; null-space components are dropped.
        coeffs = np.zeros_like(w)
        coeffs[keep] = 1.0 / (w[keep] + lam)
        Q = V @ (coeffs[:, None] * (V.T @ Y))

    return KernelModel(
        dual_coefficients=Q,
        support_features=X.copy(),
        kernel=kernel,
        lam=lam,
        class_ids=list(indicator.class_ids),
    )


def project(model, z):
    """Map feature vectors into the class-score space.

    Accepts a single vector (d,) or column-stacked vectors (d, m) and
    returns (c,) or (m, c) respectively.
    """
    z = _as_float64(z, "z")
    single = z.ndim == 1
    if single:
        z = z[:, None]
    if isinstance(model, HerModel):
        if z.shape[0] != model.feature_dim:
            raise InvalidInputError(
                f"expected feature dimension {model.feature_dim}, got {z.shape[0]}"
            )
        out = z.T @ model.projection
    elif isinstance(model, KernelModel):
        if z.shape[0] != model.support_features.shape[0]:
            raise InvalidInputError(
                f"expected feature dimension {model.support_features.shape[0]}, "
                f"got {z.shape[0]}"
            )
        k = kernel_matrix(model.kernel, model.support_features, z)
        out = k.T @ model.dual_coefficients
    else:
        raise InvalidInputError(f"unsupported model type: {type(model).__name__}")
    return out[0] if single else out


def model_distance(model, x1, x2):
    """Squared distance between two samples in the projected space.

    For the linear model this equals ||P^T (x1 - x2)||^2, the learned
    matching score: small means same identity.
    """
    r = project(model, x1) - project(model, x2)
    return float(r @ r)


def pairwise_distances(model, a, b):
    """Matrix D with D[i, j] = model_distance(model, a[:, i], b[:, j]).

    Computed from the projected coordinates in row blocks so memory stays
    bounded for large sample sets. A model of None scores raw feature
    geometry (identity projection), which the annotation loop uses before
    the first labeled pair exists.
    """
    if model is None:
        pa = _as_float64(a, "a").T
        pb = _as_float64(b, "b").T
    else:
        pa = project(model, _as_float64(a, "a"))
        pb = project(model, _as_float64(b, "b"))
    if pa.ndim == 1:
        pa = pa[None, :]
    if pb.ndim == 1:
        pb = pb[None, :]
    m = pa.shape[0]
    out = np.empty((m, pb.shape[0]))
    block = max(1, int(4e6 // max(pb.size, 1)))
    for start in range(0, m, block):
        stop = min(start + block, m)
        diff = pa[start:stop, None, :] - pb[None, :, :]
        out[start:stop] = np.sum(diff * diff, axis=2)
    return out


def normal_equation_residual(model, features):
    """Relative residual ||(X X^T + lam I) P - X Y||_F / (||X Y||_F + 1)."""
    X = features.values
    Y = build_indicator(features.labels).values
    P = model.projection
    XY = X @ Y
    lhs = X @ (X.T @ P) + model.lam * P
    return float(np.linalg.norm(lhs - XY) / (np.linalg.norm(XY) + 1.0))


@dataclass
class ScatterStats:
    """Within-class and between-class scatter of a labeled sample set."""

    within: np.ndarray
    between: np.ndarray
    class_means: np.ndarray
    global_mean: np.ndarray


def scatter_stats(features):
    """Scatter matrices: within is sample-averaged, between is size-weighted.

    within  = (1/n) sum_j sum_{i in j} (x_i - u_j)(x_i - u_j)^T
    between = sum_j n_j (u_j - u)(u_j - u)^T
    """
    X = features.values
    d, n = X.shape
    indicator = build_indicator(features.labels)
    cols = {cid: j for j, cid in enumerate(indicator.class_ids)}
    assign = np.array([cols[int(l)] for l in features.labels], dtype=np.int64)
    c = len(indicator.class_ids)

    means = np.zeros((d, c))
    for j in range(c):
        means[:, j] = X[:, assign == j].mean(axis=1)
    centered = X - means[:, assign]
    within = (centered @ centered.T) / n
    u = X.mean(axis=1)
    dev = means - u[:, None]
    between = (dev * indicator.class_sizes[None, :]) @ dev.T
    return ScatterStats(
        within=0.5 * (within + within.T),
        between=0.5 * (between + between.T),
        class_means=means,
        global_mean=u,
    )


def fisher_trace(stats, projection):
    """Exploratory class-separation diagnostic for a candidate projection.

    Returns trace(pinv(P^T S_w P) @ (P^T S_b P)); larger means the
    projected space separates classes more relative to within-class
    spread. Offered for inspection only, nothing in the library asserts
    on it.
    """
    P = _as_float64(projection, "projection")
    if P.ndim == 1:
        P = P[:, None]
    sw = P.T @ stats.within @ P
    sb = P.T @ stats.between @ P
    return float(np.trace(np.linalg.pinv(sw) @ sb))


def min_max_normalize(values):
    """Affine rescale of a score vector onto [0, 1].

    A degenerate vector (all entries equal, including length one) maps to
    all 0.5 so downstream sums stay well defined.
    """
    v = _as_float64(values, "values")
    if v.ndim != 1:
        raise InvalidInputError("scores must be 1-d")
    if v.size == 0:
        return v.copy()
    lo = float(np.min(v))
    hi = float(np.max(v))
    if hi == lo:
        return np.full(v.shape, 0.5)
    return (v - lo) / (hi - lo)
