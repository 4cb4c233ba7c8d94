"""Pair mixing augmentations: random/kNN cutmix, assignment mixup, rigid subset mix.

All mixes take two equally sized labeled clouds and return exactly n points
with a soft label that sums to one.  The mixing weight is fixed at 0.5 by
default; a Beta(alpha, alpha) draw can be switched on per MixSpec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _rng
from .geometry import PointCloud, nearest_indices

EXACT_ASSIGN_LIMIT = 256


def one_hot(class_index: int, n_classes: int) -> np.ndarray:
    if not 0 <= class_index < n_classes:
        raise ValueError(f"class index {class_index} out of range 0..{n_classes - 1}")
    label = np.zeros(n_classes)
    label[class_index] = 1.0
    return label


@dataclass(frozen=True)
class LabeledCloud:
    cloud: PointCloud
    label: np.ndarray

    def __post_init__(self):
        label = np.asarray(self.label, dtype=np.float64).reshape(-1)
        if (label < 0).any():
            raise ValueError("soft label entries must be >= 0")
        if abs(label.sum() - 1.0) > 1e-9:
            raise ValueError(f"soft label must sum to 1, got {label.sum()!r}")
        label = label.copy()
        label.flags.writeable = False
        object.__setattr__(self, "label", label)

    @classmethod
    def from_class(cls, cloud: PointCloud, class_index: int, n_classes: int):
        return cls(cloud, one_hot(class_index, n_classes))

    @property
    def n_classes(self) -> int:
        return len(self.label)


@dataclass(frozen=True)
class MixSpec:
    """lam is the weight of the first cloud; beta_alpha switches on a
    Beta(alpha, alpha) draw of lam per call (off by default)."""

    lam: float = 0.5
    seed: int = 0
    beta_alpha: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.beta_alpha is not None and self.beta_alpha <= 0:
            raise ValueError("beta_alpha must be > 0")

    def resolve_lambda(self, rng: np.random.Generator) -> float:
        if self.beta_alpha is None:
            return self.lam
        return float(rng.beta(self.beta_alpha, self.beta_alpha))


@dataclass(frozen=True)
class Permutation:
    indices: np.ndarray

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if not np.array_equal(np.sort(indices), np.arange(len(indices))):
            raise ValueError("not a bijection on 0..n-1")
        indices = indices.copy()
        indices.flags.writeable = False
        object.__setattr__(self, "indices", indices)

    def __len__(self):
        return len(self.indices)


def mix_labels(y_a: np.ndarray, y_b: np.ndarray, lam: float) -> np.ndarray:
    y_a = np.asarray(y_a, dtype=np.float64)
    y_b = np.asarray(y_b, dtype=np.float64)
    if y_a.shape != y_b.shape:
        raise ValueError(f"label shapes differ: {y_a.shape} vs {y_b.shape}")
    return lam * y_a + (1.0 - lam) * y_b


def _check_pair(a: LabeledCloud, b: LabeledCloud):
    if a.cloud.count != b.cloud.count:
        raise ValueError(
            f"cloud sizes differ: {a.cloud.count} vs {b.cloud.count}"
        )
    if a.n_classes != b.n_classes:
        raise ValueError("label dimensions differ")


def _resolve_rng(spec: MixSpec, rng: np.random.Generator | None):
    return rng if rng is not None else _rng.stream(spec.seed)


def cutmix_r(
    a: LabeledCloud, b: LabeledCloud, spec: MixSpec, rng: np.random.Generator | None = None
) -> LabeledCloud:
    """Union of floor(lam*n) random points of a and the remainder from b."""
    _check_pair(a, b)
    rng = _resolve_rng(spec, rng)
    lam = spec.resolve_lambda(rng)
    n = a.cloud.count
    n_a = int(lam * n)
    idx_a = rng.choice(n, size=n_a, replace=False)
    idx_b = rng.choice(n, size=n - n_a, replace=False)
    points = np.concatenate([a.cloud.points[idx_a], b.cloud.points[idx_b]], axis=0)
    label = mix_labels(a.label, b.label, n_a / n)
    return LabeledCloud(PointCloud(points), label)


def cutmix_k(
    a: LabeledCloud, b: LabeledCloud, spec: MixSpec, rng: np.random.Generator | None = None
) -> LabeledCloud:
    """kNN-region variant: a contributes the floor(lam*n) nearest points to a
    random anchor of a; b fills the rest with its own points ranked by
    distance to that same anchor, skipping the first floor(lam*n) ranks."""
    _check_pair(a, b)
    rng = _resolve_rng(spec, rng)
    lam = spec.resolve_lambda(rng)
    n = a.cloud.count
    n_a = int(lam * n)
    anchor = a.cloud.points[int(rng.integers(0, n))]
    part_a = nearest_indices(a.cloud.points, anchor, n_a)
    rank_b = nearest_indices(b.cloud.points, anchor, n)
    part_b = rank_b[n_a:]
    points = np.concatenate(
        [a.cloud.points[part_a], b.cloud.points[part_b]], axis=0
    )
    label = mix_labels(a.label, b.label, n_a / n)
    return LabeledCloud(PointCloud(points), label)


def _cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, computed by direct subtraction."""
    n = len(a)
    cost = np.empty((n, n))
    # row blocks keep the (block, n, 3) temporary small for big clouds
    step = 256
    for start in range(0, n, step):
        stop = min(start + step, n)
        diff = a[start:stop, None, :] - b[None, :, :]
        cost[start:stop] = (diff * diff).sum(axis=2)
    return cost


def assignment_cost(a: PointCloud, b: PointCloud, perm: Permutation) -> float:
    diff = a.points - b.points[perm.indices]
    return float((diff * diff).sum())


def emd_assign(a: PointCloud, b: PointCloud) -> Permutation:
    """Minimum squared-distance one-to-one matching from a's points to b's.

    Exact (Hungarian) up to EXACT_ASSIGN_LIMIT points; beyond that a greedy
    nearest-available assignment followed by one 2-swap improvement sweep is
    used.  Identical clouds always map to the identity permutation.
    """
    if a.count != b.count:
        raise ValueError(f"cloud sizes differ: {a.count} vs {b.count}")
    n = a.count
    identity_diff = a.points - b.points
    if not identity_diff.any():
        return Permutation(np.arange(n))
    cost = _cost_matrix(a.points, b.points)
    if n <= EXACT_ASSIGN_LIMIT:
        _rows, cols = linear_sum_assignment(cost)
        return Permutation(cols)

    # greedy nearest-available, then one pass of pairwise swap improvements
    perm = np.full(n, -1, dtype=np.int64)
    taken = np.zeros(n, dtype=bool)
    for i in range(n):
        row = np.where(taken, np.inf, cost[i])
        j = int(np.argmin(row))
        perm[i] = j
        taken[j] = True
    own = cost[np.arange(n), perm]
    for i in range(n - 1):
        js = np.arange(i + 1, n)
        delta = (cost[i, perm[js]] + cost[js, perm[i]]) - (own[i] + own[js])
        k = int(np.argmin(delta))
        if delta[k] < 0:
            j = int(js[k])
            perm[i], perm[j] = perm[j], perm[i]
            own[i] = cost[i, perm[i]]
            own[j] = cost[j, perm[j]]
    # the heuristic must never lose to the trivial assignment
    if own.sum() > cost.trace():
        perm = np.arange(n)
    return Permutation(perm)


def mixup_emd(
    a: LabeledCloud, b: LabeledCloud, spec: MixSpec, rng: np.random.Generator | None = None
) -> LabeledCloud:
    """Pointwise interpolation along the minimum-cost matching of the pair."""
    _check_pair(a, b)
    rng = _resolve_rng(spec, rng)
    lam = spec.resolve_lambda(rng)
    perm = emd_assign(a.cloud, b.cloud)
    points = lam * a.cloud.points + (1.0 - lam) * b.cloud.points[perm.indices]
    label = mix_labels(a.label, b.label, lam)
    return LabeledCloud(PointCloud(points), label)


def rsmix(
    a: LabeledCloud, b: LabeledCloud, spec: MixSpec, rng: np.random.Generator | None = None
) -> LabeledCloud:
    """Carve out a kNN ball of a and insert b's kNN ball, rigidly translated.

    lam sets the region size floor(lam*n).  b's patch is shifted so its
    anchor lands on a's anchor; no scaling or per-point blending, so the
    patch keeps its internal shape.  The label weight of a is the surviving
    fraction (n - floor(lam*n)) / n.
    """
    _check_pair(a, b)
    rng = _resolve_rng(spec, rng)
    lam = spec.resolve_lambda(rng)
    n = a.cloud.count
    n_region = int(lam * n)
    if n_region == 0:
        return LabeledCloud(a.cloud, a.label)
    anchor_a = a.cloud.points[int(rng.integers(0, n))]
    anchor_b = b.cloud.points[int(rng.integers(0, n))]
    removed = nearest_indices(a.cloud.points, anchor_a, n_region)
    keep = np.ones(n, dtype=bool)
    keep[removed] = False
    patch = b.cloud.points[nearest_indices(b.cloud.points, anchor_b, n_region)]
    patch = patch + (anchor_a - anchor_b)
    points = np.concatenate([a.cloud.points[keep], patch], axis=0)
    label = mix_labels(a.label, b.label, (n - n_region) / n)
    return LabeledCloud(PointCloud(points), label)


MIXERS = {
    "cutmix_r": cutmix_r,
    "cutmix_k": cutmix_k,
    "mixup": mixup_emd,
    "rsmix": rsmix,
}


def apply_mix(
    name: str,
    a: LabeledCloud,
    b: LabeledCloud,
    spec: MixSpec,
    rng: np.random.Generator | None = None,
) -> LabeledCloud:
    if name == "none":
        return a
    if name not in MIXERS:
        raise ValueError(f"unknown mix {name!r}; choose from {sorted(MIXERS)} or 'none'")
    return MIXERS[name](a, b, spec, rng=rng)
