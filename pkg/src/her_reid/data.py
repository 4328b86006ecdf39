"""Feature and model serialization plus synthetic two-view data.

Binary feature files ("HERF"):

    magic   4 bytes   b"HERF"
    version u32       1
    dtype   u32       0 = float32, 1 = float64
    d       u64       feature dimension
    n       u64       sample count
    payload d*n items column-major in the stated dtype
    labels  n  u32
    views   n  u8     0 = probe, 1 = gallery

Binary model files ("HERM"):

    magic   4 bytes   b"HERM"
    version u32       1
    d       u64
    c       u64
    lambda  f64
    has_t_inverse u8
    registry c u32    class ids in column order
    P       d*c f64   column-major
    T^-1    d*d f64   column-major, only when has_t_inverse = 1

Both formats are little-endian throughout. Loaders fail with a
FormatError carrying the byte offset of the first inconsistency.
"""

import io
from dataclasses import dataclass

import numpy as np

from .core import GALLERY, PROBE, FeatureMatrix, HerModel
from .errors import FormatError, InvalidInputError, InvalidParameterError

FEATURE_MAGIC = b"HERF"
MODEL_MAGIC = b"HERM"
FORMAT_VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class _Reader:
    """Byte cursor that reports the offset of any short read."""

    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, count, what):
        end = self.offset + count
        if end > len(self.data):
            raise FormatError(
                f"truncated file: expected {count} more bytes for {what}, "
                f"found {len(self.data) - self.offset}",
                offset=self.offset,
            )
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self, what):
        return int(np.frombuffer(self.take(4, what), dtype="<u4")[0])

    def u64(self, what):
        return int(np.frombuffer(self.take(8, what), dtype="<u8")[0])

    def f64(self, what):
        return float(np.frombuffer(self.take(8, what), dtype="<f8")[0])

    def u8(self, what):
        return int(self.take(1, what)[0])

    def done(self):
        if self.offset != len(self.data):
            raise FormatError(
                f"{len(self.data) - self.offset} unexpected trailing bytes",
                offset=self.offset,
            )


def _check_u32_ids(ids, what):
    arr = np.asarray(ids, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() > 0xFFFFFFFF):
        raise InvalidInputError(f"{what} must fit in an unsigned 32-bit integer")
    return arr


def save_features(data, path, dtype="f64"):
    """Write a FeatureMatrix to a HERF file; dtype is "f32" or "f64"."""
    code = {"f32": 0, "f64": 1}.get(dtype)
    if code is None:
        raise InvalidParameterError(f"unsupported dtype {dtype!r}")
    labels = _check_u32_ids(data.labels, "labels")
    d, n = data.values.shape
    buf = io.BytesIO()
    buf.write(FEATURE_MAGIC)
    buf.write(np.uint32(FORMAT_VERSION).tobytes())
    buf.write(np.uint32(code).tobytes())
    buf.write(np.uint64(d).tobytes())
    buf.write(np.uint64(n).tobytes())
    buf.write(data.values.astype(_DTYPE_CODES[code]).tobytes(order="F"))
    buf.write(labels.astype("<u4").tobytes())
    buf.write(data.views.astype("<u1").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_features(path):
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    magic = r.take(4, "magic")
    if magic != FEATURE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {FEATURE_MAGIC!r}", offset=0)
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    code = r.u32("dtype code")
    if code not in _DTYPE_CODES:
        raise FormatError(f"unknown dtype code {code}", offset=8)
    d = r.u64("feature dimension")
    n = r.u64("sample count")
    if d < 1 or n < 1:
        raise FormatError(f"degenerate shape d={d}, n={n}", offset=12)
    item = _DTYPE_CODES[code]
    payload = r.take(d * n * item.itemsize, "feature payload")
    values = np.frombuffer(payload, dtype=item).reshape((d, n), order="F")
    labels = np.frombuffer(r.take(4 * n, "labels"), dtype="<u4").astype(np.int64)
    views = np.frombuffer(r.take(n, "views"), dtype="<u1")
    r.done()
    bad = np.flatnonzero((views != PROBE) & (views != GALLERY))
    if bad.size:
        raise FormatError(
            f"view byte {views[bad[0]]} is neither probe nor gallery",
            offset=28 + d * n * item.itemsize + 4 * n + int(bad[0]),
        )
    return FeatureMatrix(values.astype(np.float64), labels, views.copy())


def save_model(model, path):
    """Write a HerModel to a HERM file.

    Class ids travel with the file; absorbed-sample counts do not, so a
    reloaded model treats per-class history as unknown.
    """
    ids = _check_u32_ids(model.class_ids, "class ids")
    d, c = model.projection.shape
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(np.uint32(FORMAT_VERSION).tobytes())
    buf.write(np.uint64(d).tobytes())
    buf.write(np.uint64(c).tobytes())
    buf.write(np.float64(model.lam).tobytes())
    buf.write(np.uint8(1 if model.is_incremental else 0).tobytes())
    buf.write(ids.astype("<u4").tobytes())
    buf.write(model.projection.astype("<f8").tobytes(order="F"))
    if model.is_incremental:
        buf.write(model.t_inverse.astype("<f8").tobytes(order="F"))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path):
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    magic = r.take(4, "magic")
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}", offset=0)
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    d = r.u64("feature dimension")
    c = r.u64("class count")
    lam = r.f64("ridge weight")
    has_inverse = r.u8("inverse flag")
    if has_inverse not in (0, 1):
        raise FormatError(f"inverse flag must be 0 or 1, got {has_inverse}", offset=32)
    if d < 1 or c < 1:
        raise FormatError(f"degenerate shape d={d}, c={c}", offset=8)
    if not np.isfinite(lam) or lam <= 0:
        raise FormatError(f"ridge weight must be positive, got {lam}", offset=24)
    registry_at = r.offset
    ids = np.frombuffer(r.take(4 * c, "class registry"), dtype="<u4")
    if np.unique(ids).size != c:
        raise FormatError("class registry contains duplicate ids", offset=registry_at)
    P = np.frombuffer(r.take(8 * d * c, "projection"), dtype="<f8")
    P = P.reshape((d, c), order="F").copy()
    t_inverse = None
    if has_inverse:
        t_at = r.offset
        t_inverse = np.frombuffer(r.take(8 * d * d, "inverse matrix"), dtype="<f8")
        t_inverse = t_inverse.reshape((d, d), order="F").copy()
        scale = float(np.max(np.abs(t_inverse))) or 1.0
        asym = float(np.max(np.abs(t_inverse - t_inverse.T)))
        if asym > 1e-10 * scale:
            raise FormatError(
                f"stored inverse is asymmetric (relative gap {asym / scale:.3e})",
                offset=t_at,
            )
    r.done()
    return HerModel(
        projection=P,
        lam=lam,
        class_ids=[int(i) for i in ids],
        class_counts=[0] * int(c),
        t_inverse=t_inverse,
        t_matrix=None,
    )


def import_text(path):
    """Read the plain-text exchange format.

    One sample per line: identity id, view (0/1 or probe/gallery), then
    the feature values, all whitespace separated. Blank lines and lines
    starting with '#' are skipped.
    """
    rows = []
    labels = []
    views = []
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) < 3:
                raise FormatError(f"line {lineno}: expected label, view and features")
            try:
                label = int(parts[0])
            except ValueError:
                raise FormatError(f"line {lineno}: bad identity id {parts[0]!r}") from None
            view = parts[1].lower()
            if view not in ("0", "1", "probe", "gallery"):
                raise FormatError(f"line {lineno}: bad view tag {parts[1]!r}")
            try:
                feats = [float(p) for p in parts[2:]]
            except ValueError:
                raise FormatError(f"line {lineno}: non-numeric feature value") from None
            if dim is None:
                dim = len(feats)
            elif len(feats) != dim:
                raise FormatError(
                    f"line {lineno}: expected {dim} feature values, got {len(feats)}"
                )
            rows.append(feats)
            labels.append(label)
            views.append(PROBE if view in ("0", "probe") else GALLERY)
    if not rows:
        raise FormatError("no samples found")
    return FeatureMatrix(np.array(rows).T, np.array(labels), np.array(views))


def reindex_labels(data):
    """Map identity ids onto 1..c by first appearance.

    Returns the relabeled FeatureMatrix and the id mapping {old: new}.
    """
    mapping = {}
    for l in data.labels.tolist():
        if l not in mapping:
            mapping[l] = len(mapping) + 1
    labels = np.array([mapping[l] for l in data.labels.tolist()], dtype=np.int64)
    return FeatureMatrix(data.values.copy(), labels, data.views.copy()), mapping


@dataclass
class TwoViewData:
    """A probe-view and gallery-view pair over the same identities."""

    probe: FeatureMatrix
    gallery: FeatureMatrix

    def merged(self):
        from .core import merge_views

        return merge_views(self.probe, self.gallery)


@dataclass
class SyntheticSpec:
    """Recipe for a synthetic cross-view identity dataset.

    Each identity gets a latent center; probe images are the center plus
    isotropic noise, gallery images additionally receive one global
    cross-view shift shared by every identity. With appearance_clusters
    of at least 2 the centers themselves are drawn around a few cluster
    anchors with power-law cluster sizes, which mimics populations whose
    appearance concentrates in a handful of common styles.
    """

    identities: int
    dim: int
    images_per_view: int = 1
    center_spread: float = 1.0
    shift_magnitude: float = 1.0
    noise: float = 0.1
    appearance_clusters: int = 0
    cluster_spread: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.identities < 1 or self.dim < 1 or self.images_per_view < 1:
            raise InvalidParameterError("identities, dim and images_per_view must be >= 1")
        for name in ("center_spread", "shift_magnitude", "noise", "cluster_spread"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0")
        if self.appearance_clusters < 0:
            raise InvalidParameterError("appearance_clusters must be >= 0")


def generate_synthetic(spec):
    """Draw a TwoViewData instance deterministically from spec.seed."""
    rng = np.random.default_rng(spec.seed)
    c, d, s = spec.identities, spec.dim, spec.images_per_view

    if spec.appearance_clusters >= 2:
        k = spec.appearance_clusters
        anchors = rng.normal(0.0, spec.center_spread, size=(d, k))
        weights = 1.0 / np.arange(1, k + 1)
        weights /= weights.sum()
        assignment = rng.choice(k, size=c, p=weights)
        centers = anchors[:, assignment] + rng.normal(
            0.0, spec.center_spread * spec.cluster_spread, size=(d, c)
        )
    else:
        centers = rng.normal(0.0, spec.center_spread, size=(d, c))

    shift = rng.normal(0.0, 1.0, size=d)
    norm = np.linalg.norm(shift)
    if norm > 0 and spec.shift_magnitude > 0:
        shift *= spec.shift_magnitude / norm
    else:
        shift = np.zeros(d)

    labels = np.repeat(np.arange(1, c + 1), s)
    probe = np.repeat(centers, s, axis=1) + rng.normal(0.0, spec.noise, size=(d, c * s))
    gallery = (
        np.repeat(centers, s, axis=1)
        + shift[:, None]
        + rng.normal(0.0, spec.noise, size=(d, c * s))
    )
    return TwoViewData(
        probe=FeatureMatrix(probe, labels, np.full(c * s, PROBE, dtype=np.uint8)),
        gallery=FeatureMatrix(gallery, labels, np.full(c * s, GALLERY, dtype=np.uint8)),
    )
