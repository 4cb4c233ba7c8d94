"""The fifteen corruption operators and their severity-driven dispatcher.

Each operator is a plain function taking explicit parameters plus a
numpy Generator, so tests can drive them directly.  apply_corruption()
routes a (kind, severity) pair through the severity table and derives
the random stream from (seed, kind ordinal, severity, sample key), which
makes every sample's corruption independent of processing order.
"""

from __future__ import annotations

import numpy as np

from . import _rng
from .geometry import Aabb, PointCloud, TriangleMesh, nearest_indices
from .deformation import (
    INVERSE_MULTIQUADRIC,
    MULTIQUADRIC,
    RbfKernel,
    apply_ffd,
    apply_rbf,
    make_ffd_lattice,
    perturb_lattice,
    random_unit_vectors,
    solve_rbf,
)
from .occlusion import lidar_cloud, occlusion_cloud, view_pose
from .severity import CorruptionKind, CorruptionSpec, SeverityTable

_UNIT_CUBE = Aabb(np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]))


# ---------------------------------------------------------------------------
# noise family


def uniform_noise(cloud: PointCloud, scale: float, rng: np.random.Generator) -> PointCloud:
    """Add U(-scale, scale) independently to every coordinate."""
    jitter = rng.uniform(-scale, scale, size=cloud.points.shape)
    return PointCloud(cloud.points + jitter)


def gaussian_noise(cloud: PointCloud, sigma: float, rng: np.random.Generator) -> PointCloud:
    jitter = rng.normal(0.0, sigma, size=cloud.points.shape)
    return PointCloud(cloud.points + jitter)


def impulse_noise(
    cloud: PointCloud, count: int, magnitude: float, rng: np.random.Generator
) -> PointCloud:
    """Kick `count` distinct points by +-magnitude per coordinate; the rest
    are carried over bit-for-bit."""
    n = cloud.count
    if count > n:
        raise ValueError(f"cannot pick {count} distinct points out of {n}")
    points = cloud.points.copy()
    idx = rng.choice(n, size=count, replace=False)
    signs = rng.integers(0, 2, size=(count, 3)) * 2 - 1
    points[idx] += magnitude * signs
    return PointCloud(points)


def upsampling_noise(
    cloud: PointCloud, count: int, bound: float, rng: np.random.Generator
) -> PointCloud:
    """Append `count` near-duplicates of randomly chosen anchor points.

    Anchors are drawn with replacement; each copy is offset by
    U(-bound, bound) per coordinate.  Originals come first in the output.
    """
    anchors = rng.integers(0, cloud.count, size=count)
    offsets = rng.uniform(-bound, bound, size=(count, 3))
    extra = cloud.points[anchors] + offsets
    return PointCloud(np.concatenate([cloud.points, extra], axis=0))


def background_noise(cloud: PointCloud, count: int, rng: np.random.Generator) -> PointCloud:
    """Append `count` clutter points drawn uniformly from the [-1, 1]^3 cube."""
    extra = rng.uniform(-1.0, 1.0, size=(count, 3))
    return PointCloud(np.concatenate([cloud.points, extra], axis=0))


# ---------------------------------------------------------------------------
# density family (the view-based members live in occlusion.py)


def local_density_increase(
    cloud: PointCloud, n_clusters: int, cluster_size: int, rng: np.random.Generator
) -> PointCloud:
    """Densify n_clusters neighbourhoods by duplicating-with-jitter.

    For each cluster an anchor is drawn uniformly from the original points,
    floor(0.75 * cluster_size) of its cluster_size nearest originals are
    picked and re-added with N(0, 0.01^2) jitter.  Adds exactly
    n_clusters * floor(0.75 * cluster_size) points.
    """
    if cluster_size > cloud.count:
        raise ValueError("cluster_size exceeds the cloud size")
    added = []
    n_new = int(0.75 * cluster_size)
    for _ in range(n_clusters):
        anchor = int(rng.integers(0, cloud.count))
        hood = nearest_indices(cloud.points, cloud.points[anchor], cluster_size)
        picked = rng.choice(hood, size=n_new, replace=False)
        jitter = rng.normal(0.0, 0.01, size=(n_new, 3))
        added.append(cloud.points[picked] + jitter)
    return PointCloud(np.concatenate([cloud.points] + added, axis=0))


def local_density_decrease(
    cloud: PointCloud, n_clusters: int, cluster_size: int, rng: np.random.Generator
) -> PointCloud:
    """Thin out n_clusters neighbourhoods, one after another.

    Each round works on the surviving points only: an anchor is drawn,
    its cluster_size nearest survivors are found and floor(0.75 *
    cluster_size) of them are dropped.  Removes exactly n_clusters *
    floor(0.75 * cluster_size) points overall.
    """
    points = cloud.points
    n_drop = int(0.75 * cluster_size)
    for _ in range(n_clusters):
        if cluster_size > len(points):
            raise ValueError("not enough surviving points for another cluster")
        if len(points) - n_drop < 1:
            raise ValueError("density decrease would empty the cloud")
        anchor = int(rng.integers(0, len(points)))
        hood = nearest_indices(points, points[anchor], cluster_size)
        dropped = rng.choice(hood, size=n_drop, replace=False)
        keep = np.ones(len(points), dtype=bool)
        keep[dropped] = False
        points = points[keep]
    return PointCloud(points)


def cutout(
    cloud: PointCloud, n_clusters: int, k: int, rng: np.random.Generator
) -> PointCloud:
    """Remove n_clusters whole kNN patches, one after another.

    Each round draws an anchor among the survivors and deletes the
    anchor's k nearest survivors (the anchor itself included), so exactly
    n_clusters * k points disappear.
    """
    points = cloud.points
    for _ in range(n_clusters):
        if k >= len(points):
            raise ValueError("cutout would remove the whole cloud")
        anchor = int(rng.integers(0, len(points)))
        hood = nearest_indices(points, points[anchor], k)
        keep = np.ones(len(points), dtype=bool)
        keep[hood] = False
        points = points[keep]
    return PointCloud(points)


# ---------------------------------------------------------------------------
# transformation family


def rotation_matrix_xyz(angles_rad: np.ndarray) -> np.ndarray:
    """R = Rz @ Ry @ Rx for per-axis angles (ax, ay, az)."""
    ax, ay, az = angles_rad
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def random_rotation(
    cloud: PointCloud,
    max_angle_deg: float,
    rng: np.random.Generator,
    info: dict | None = None,
) -> PointCloud:
    """Rotate by independent U(-max, max) degree angles about x, then y, then z."""
    angles = np.radians(rng.uniform(-max_angle_deg, max_angle_deg, size=3))
    rot = rotation_matrix_xyz(angles)
    if info is not None:
        info["angles_deg"] = np.degrees(angles).tolist()
        info["rotation_matrix"] = rot.tolist()
    return PointCloud(cloud.points @ rot.T)


def random_shear(
    cloud: PointCloud,
    max_coeff: float,
    rng: np.random.Generator,
    info: dict | None = None,
) -> PointCloud:
    """Shear x and y by the z coordinate: x += a*z, y += b*z, z untouched."""
    a, b = rng.uniform(-max_coeff, max_coeff, size=2)
    points = cloud.points.copy()
    points[:, 0] += a * points[:, 2]
    points[:, 1] += b * points[:, 2]
    if info is not None:
        info["shear_coeffs"] = [float(a), float(b)]
    return PointCloud(points)


def _deformation_lattice(cloud: PointCloud):
    bounds = Aabb.of_points(cloud.points).union(_UNIT_CUBE)
    return make_ffd_lattice(bounds, resolution=5)


def ffd_corrupt(
    cloud: PointCloud,
    distance: float,
    rng: np.random.Generator,
    info: dict | None = None,
) -> PointCloud:
    """Free-form deformation: 5x5x5 control lattice, each control point
    shifted by `distance` along its own random unit direction."""
    lattice = perturb_lattice(_deformation_lattice(cloud), distance, rng)
    if info is not None:
        info["lattice_displacements"] = lattice.displacements.tolist()
    return apply_ffd(cloud, lattice)


def rbf_corrupt(
    cloud: PointCloud,
    distance: float,
    rng: np.random.Generator,
    variant: str = MULTIQUADRIC,
    info: dict | None = None,
) -> PointCloud:
    """Radial-basis deformation anchored at the 5x5x5 lattice rest positions."""
    lattice = _deformation_lattice(cloud)
    centers = lattice.rest_positions.reshape(-1, 3)
    displacements = distance * random_unit_vectors(len(centers), rng)
    kernel = RbfKernel(variant, float(np.mean(lattice.spacing)))
    deformation = solve_rbf(centers, displacements, kernel)
    if info is not None:
        info["displacements"] = displacements.tolist()
        info["kernel"] = {"variant": variant, "r": kernel.r}
    return apply_rbf(cloud, deformation)


# ---------------------------------------------------------------------------
# dispatch

_CLOUD_KINDS = frozenset(CorruptionKind) - {CorruptionKind.OCCLUSION, CorruptionKind.LIDAR}


def apply_corruption(
    data: PointCloud | TriangleMesh,
    spec: CorruptionSpec,
    table: SeverityTable | None = None,
    sample_key: int = 0,
    info: dict | None = None,
) -> PointCloud:
    """Corrupt one sample according to spec, deterministically.

    View-based kinds (occlusion, lidar) need a TriangleMesh; every other
    kind needs a PointCloud.  `sample_key` decorrelates samples processed
    under the same seed -- pass a stable per-sample hash.
    """
    table = table if table is not None else SeverityTable.default()
    kind, severity = spec.kind, spec.severity
    params = table.params(kind, severity)
    rng = _rng.stream(spec.seed, kind.ordinal, severity, sample_key)
    if info is not None:
        info["kind"] = kind.value
        info["severity"] = severity
        info["params"] = dict(params)

    if kind in (CorruptionKind.OCCLUSION, CorruptionKind.LIDAR):
        if not isinstance(data, TriangleMesh):
            raise TypeError(f"{kind.value} corruption needs a TriangleMesh input")
        pose = view_pose(params["view_index"], rng)
        if info is not None:
            info["pose"] = {
                "azimuth_deg": pose.azimuth_deg,
                "elevation_deg": pose.elevation_deg,
                "distance": pose.distance,
            }
        if kind is CorruptionKind.OCCLUSION:
            return occlusion_cloud(data, pose)
        return lidar_cloud(data, pose, rng)

    if not isinstance(data, PointCloud):
        raise TypeError(f"{kind.value} corruption needs a PointCloud input")
    cloud = data
    n = cloud.count

    if kind is CorruptionKind.UNIFORM:
        return uniform_noise(cloud, params["scale"], rng)
    if kind is CorruptionKind.GAUSSIAN:
        return gaussian_noise(cloud, params["sigma"], rng)
    if kind is CorruptionKind.IMPULSE:
        count = (n // params["count_div"]) * params["count_mul"]
        return impulse_noise(cloud, count, params["magnitude"], rng)
    if kind is CorruptionKind.UPSAMPLING:
        count = (n * params["count_mul"]) // params["count_div"]
        return upsampling_noise(cloud, count, params["bound"], rng)
    if kind is CorruptionKind.BACKGROUND:
        return background_noise(cloud, params["count"], rng)
    if kind is CorruptionKind.LOCAL_DENSITY_INC:
        return local_density_increase(
            cloud, params["n_clusters"], params["cluster_size"], rng
        )
    if kind is CorruptionKind.LOCAL_DENSITY_DEC:
        return local_density_decrease(
            cloud, params["n_clusters"], params["cluster_size"], rng
        )
    if kind is CorruptionKind.CUTOUT:
        return cutout(cloud, params["n_clusters"], params["k"], rng)
    if kind is CorruptionKind.ROTATION:
        return random_rotation(cloud, params["max_angle_deg"], rng, info=info)
    if kind is CorruptionKind.SHEAR:
        return random_shear(cloud, params["max_coeff"], rng, info=info)
    if kind is CorruptionKind.FFD:
        return ffd_corrupt(cloud, params["distance"], rng, info=info)
    if kind is CorruptionKind.RBF:
        return rbf_corrupt(cloud, params["distance"], rng, MULTIQUADRIC, info=info)
    if kind is CorruptionKind.INV_RBF:
        return rbf_corrupt(cloud, params["distance"], rng, INVERSE_MULTIQUADRIC, info=info)
    raise ValueError(f"unhandled corruption kind {kind!r}")
