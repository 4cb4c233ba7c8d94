"""Non-linear deformations: Bernstein free-form deformation and RBF warps.

FFD displaces points by Bernstein-weighted control-lattice displacements.
The RBF warp prescribes displacements at scattered centers, solves the
dense interpolation system for kernel weights, and evaluates the
interpolant at the cloud points.  Supported kernels are the multiquadric
sqrt(d^2 + r^2) and its inverse 1/sqrt(d^2 + r^2).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.lapack import dgecon

from .geometry import Aabb, PointCloud

MULTIQUADRIC = "multiquadric"
INVERSE_MULTIQUADRIC = "inverse_multiquadric"

# 1-norm condition numbers above this are reported, never regularized away.
CONDITION_LIMIT = 1e12


class IllConditionedError(RuntimeError):
    """The RBF interpolation system is singular or near-singular."""


@dataclass(frozen=True)
class RbfKernel:
    variant: str
    r: float

    def __post_init__(self):
        if self.variant not in (MULTIQUADRIC, INVERSE_MULTIQUADRIC):
            raise ValueError(f"unknown RBF variant {self.variant!r}")
        if not self.r > 0:
            raise ValueError("kernel shape parameter r must be > 0")

    def __call__(self, d):
        d = np.asarray(d, dtype=np.float64)
        base = np.sqrt(d * d + self.r * self.r)
        if self.variant == MULTIQUADRIC:
            return base
        return 1.0 / base


@dataclass(frozen=True)
class FfdLattice:
    """Regular control-point grid over `bounds` with per-point displacements."""

    bounds: Aabb
    resolution: int
    displacements: np.ndarray  # (res, res, res, 3)

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("lattice resolution must be >= 2")
        disp = np.asarray(self.displacements, dtype=np.float64)
        res = self.resolution
        if disp.shape != (res, res, res, 3):
            raise ValueError(
                f"displacements must have shape {(res, res, res, 3)}, "
                f"got {disp.shape}"
            )
        disp = np.ascontiguousarray(disp)
        disp.setflags(write=False)
        object.__setattr__(self, "displacements", disp)

    @property
    def rest_positions(self) -> np.ndarray:
        """Control-point rest coordinates, shape (res, res, res, 3)."""
        res = self.resolution
        axes = [
            np.linspace(self.bounds.lo[a], self.bounds.hi[a], res) for a in range(3)
        ]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return grid

    @property
    def spacing(self) -> np.ndarray:
        return (self.bounds.hi - self.bounds.lo) / (self.resolution - 1)


def make_ffd_lattice(bounds: Aabb, resolution: int = 5) -> FfdLattice:
    """Identity lattice (zero displacements) over the given box."""
    if resolution < 2:
        raise ValueError("lattice resolution must be >= 2")
    extent = bounds.hi - bounds.lo
    if not (extent > 0).all():
        raise ValueError("degenerate lattice bounds (zero extent on some axis)")
    zeros = np.zeros((resolution, resolution, resolution, 3))
    return FfdLattice(bounds, resolution, zeros)


def random_unit_vectors(n: int, rng: np.random.Generator) -> np.ndarray:
    """n isotropic unit vectors (normalized Gaussian draws)."""
    v = rng.standard_normal((n, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # a zero draw is astronomically unlikely; redraw defensively anyway
    while (norms == 0.0).any():
        bad = norms[:, 0] == 0.0
        v[bad] = rng.standard_normal((int(bad.sum()), 3))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / norms


def perturb_lattice(
    lattice: FfdLattice, distance: float, rng: np.random.Generator
) -> FfdLattice:
    """Displace every control point by `distance` in a random direction."""
    if distance < 0:
        raise ValueError("distance must be >= 0")
    res = lattice.resolution
    if distance == 0.0:
        disp = np.zeros((res, res, res, 3))
    else:
        disp = distance * random_unit_vectors(res**3, rng).reshape(res, res, res, 3)
    return FfdLattice(lattice.bounds, res, disp)


def bernstein_basis(degree: int, t: np.ndarray) -> np.ndarray:
    """All Bernstein polynomials B_i^degree evaluated at t; shape (len(t), degree+1)."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty(t.shape + (degree + 1,))
    for i in range(degree + 1):
        out[..., i] = comb(degree, i) * t**i * (1.0 - t) ** (degree - i)
    return out


def apply_ffd(cloud: PointCloud, lattice: FfdLattice) -> PointCloud:
    """Displace cloud points by the Bernstein blend of control displacements.

    Points outside the lattice box have their normalized coordinates
    clamped to [0, 1].
    """
    extent = lattice.bounds.hi - lattice.bounds.lo
    uvw = np.clip((cloud.points - lattice.bounds.lo) / extent, 0.0, 1.0)
    degree = lattice.resolution - 1
    bx = bernstein_basis(degree, uvw[:, 0])
    by = bernstein_basis(degree, uvw[:, 1])
    bz = bernstein_basis(degree, uvw[:, 2])
    # contract one lattice axis at a time: (n,i)(i,j,k,c) -> ... -> (n,c)
    tmp = np.einsum("ni,ijkc->njkc", bx, lattice.displacements)
    tmp = np.einsum("nj,njkc->nkc", by, tmp)
    delta = np.einsum("nk,nkc->nc", bz, tmp)
    return PointCloud(cloud.points + delta)


@dataclass(frozen=True)
class RbfDeformation:
    """Solved RBF interpolant: evaluating at center a returns displacement a."""

    kernel: RbfKernel
    centers: np.ndarray
    displacements: np.ndarray
    weights: np.ndarray


def solve_rbf(centers, displacements, kernel: RbfKernel) -> RbfDeformation:
    """Solve the dense interpolation system Phi w = d per axis.

    Uses LU with partial pivoting plus a LAPACK 1-norm condition estimate;
    systems with condition above CONDITION_LIMIT raise IllConditionedError
    rather than being regularized.
    """
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    displacements = np.asarray(displacements, dtype=np.float64).reshape(-1, 3)
    if len(centers) < 1:
        raise ValueError("need at least one center")
    if len(centers) != len(displacements):
        raise ValueError("centers and displacements must have equal length")

    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    off_diag = dist + np.diag(np.full(len(centers), np.inf))
    if len(centers) > 1 and off_diag.min() == 0.0:
        raise ValueError("centers must be pairwise distinct")

    phi = kernel(dist)
    anorm = np.abs(phi).sum(axis=0).max()
    try:
        lu, piv = lu_factor(phi)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"singular RBF system: {exc}") from None
    rcond, info = dgecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0.0 or 1.0 / rcond > CONDITION_LIMIT:
        cond = np.inf if rcond == 0.0 else 1.0 / rcond
        raise IllConditionedError(
            f"RBF system condition estimate {cond:.3e} exceeds {CONDITION_LIMIT:.0e}"
        )
    weights = lu_solve((lu, piv), displacements)

    residual = np.abs(phi @ weights - displacements).max()
    if residual > 1e-8:
        raise IllConditionedError(
            f"RBF interpolation residual {residual:.3e} exceeds 1e-8"
        )
    return RbfDeformation(kernel, centers, displacements, weights)


def apply_rbf(cloud: PointCloud, deformation: RbfDeformation) -> PointCloud:
    """p -> p + sum_a w_a phi(|p - c_a|), per axis."""
    diff = cloud.points[:, None, :] - deformation.centers[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    delta = deformation.kernel(dist) @ deformation.weights
    return PointCloud(cloud.points + delta)
