"""Small deterministic meshes and labelled toy datasets shared across tests."""

import math

import numpy as np

from pccorrupt import (
    LabeledCloud,
    PointCloud,
    TriangleMesh,
    normalize_unit_sphere,
    sample_surface,
)


def box_mesh(half=1.0):
    """Axis-aligned cube, 8 vertices / 12 triangles."""
    h = float(half)
    verts = np.array(
        [
            [-h, -h, -h],
            [h, -h, -h],
            [h, h, -h],
            [-h, h, -h],
            [-h, -h, h],
            [h, -h, h],
            [h, h, h],
            [-h, h, h],
        ]
    )
    faces = np.array(
        [
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [2, 3, 7],
            [2, 7, 6],
            [1, 2, 6],
            [1, 6, 5],
            [3, 0, 4],
            [3, 4, 7],
        ],
        dtype=np.int64,
    )
    return TriangleMesh(verts, faces)


def uv_sphere(n_lat=9, n_lon=12, radius=1.0):
    """Latitude/longitude sphere triangulation (192 faces by default)."""
    verts = [(0.0, 0.0, radius)]
    for i in range(1, n_lat):
        theta = math.pi * i / n_lat
        for j in range(n_lon):
            phi = 2.0 * math.pi * j / n_lon
            verts.append(
                (
                    radius * math.sin(theta) * math.cos(phi),
                    radius * math.sin(theta) * math.sin(phi),
                    radius * math.cos(theta),
                )
            )
    verts.append((0.0, 0.0, -radius))
    last = len(verts) - 1

    faces = []
    for j in range(n_lon):
        faces.append((0, 1 + j, 1 + (j + 1) % n_lon))
    for i in range(n_lat - 2):
        a = 1 + i * n_lon
        b = 1 + (i + 1) * n_lon
        for j in range(n_lon):
            j2 = (j + 1) % n_lon
            faces.append((a + j, b + j, b + j2))
            faces.append((a + j, b + j2, a + j2))
    base = 1 + (n_lat - 2) * n_lon
    for j in range(n_lon):
        faces.append((last, base + (j + 1) % n_lon, base + j))
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))


def pyramid_mesh():
    """Square base with an apex: 6 triangles."""
    verts = np.array(
        [
            [-1.0, -1.0, -0.6],
            [1.0, -1.0, -0.6],
            [1.0, 1.0, -0.6],
            [-1.0, 1.0, -0.6],
            [0.0, 0.0, 1.0],
        ]
    )
    faces = np.array(
        [
            [0, 2, 1],
            [0, 3, 2],
            [0, 1, 4],
            [1, 2, 4],
            [2, 3, 4],
            [3, 0, 4],
        ],
        dtype=np.int64,
    )
    return TriangleMesh(verts, faces)


def prism_mesh(n_side=14, radius=0.6, half_height=1.0):
    """Closed cylinder approximation: n_side wall quads plus two cap fans."""
    ring = [
        (radius * math.cos(2 * math.pi * j / n_side),
         radius * math.sin(2 * math.pi * j / n_side))
        for j in range(n_side)
    ]
    verts = [(x, y, -half_height) for x, y in ring]
    verts += [(x, y, half_height) for x, y in ring]
    verts += [(0.0, 0.0, -half_height), (0.0, 0.0, half_height)]
    c_lo, c_hi = 2 * n_side, 2 * n_side + 1

    faces = []
    for j in range(n_side):
        j2 = (j + 1) % n_side
        faces.append((j, j2, n_side + j))
        faces.append((j2, n_side + j2, n_side + j))
        faces.append((c_lo, j2, j))
        faces.append((c_hi, n_side + j, n_side + j2))
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))


SHAPE_BUILDERS = (uv_sphere, box_mesh, pyramid_mesh, prism_mesh)
SHAPE_NAMES = ("sphere", "box", "pyramid", "prism")


def shape_cloud(class_index, n_points, seed, jitter=0.1):
    """One normalized cloud sampled from the class mesh, mildly distorted.

    Each sample gets its own anisotropic vertex scaling so the classes form
    distributions rather than four fixed clouds.
    """
    mesh = SHAPE_BUILDERS[class_index]()
    rng = np.random.default_rng(int(seed))
    scale = 1.0 + rng.uniform(-jitter, jitter, size=3)
    mesh = TriangleMesh(mesh.vertices * scale, mesh.faces)
    cloud = sample_surface(mesh, n_points, seed=int(rng.integers(1 << 62)))
    return normalize_unit_sphere(cloud)


def labelled_clouds(n_per_class, n_points, seed, n_classes=4, jitter=0.1):
    """Balanced labelled dataset over the synthetic shape classes."""
    out = []
    for c in range(n_classes):
        for i in range(n_per_class):
            sample_seed = (int(seed) * 1_000_003 + c * 10_007 + i) & ((1 << 62) - 1)
            cloud = shape_cloud(c, n_points, sample_seed, jitter=jitter)
            out.append(LabeledCloud.from_class(cloud, c, n_classes))
    return out


def write_shape_dataset(root, n_per_class=2, seed=0):
    """Write a tiny OFF dataset tree (class dirs) for pipeline/CLI tests."""
    from pccorrupt import write_off

    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for c, name in enumerate(SHAPE_NAMES):
        class_dir = root / name
        class_dir.mkdir(exist_ok=True)
        for i in range(n_per_class):
            mesh = SHAPE_BUILDERS[c]()
            rng = np.random.default_rng(int(seed) + 100 * c + i)
            scale = 1.0 + rng.uniform(-0.1, 0.1, size=3)
            mesh = TriangleMesh(mesh.vertices * scale, mesh.faces)
            path = class_dir / f"{name}_{i:04d}.off"
            path.write_text(write_off(mesh))
            paths.append(path)
    return paths


def random_cloud(n, seed, scale=1.0):
    rng = np.random.default_rng(int(seed))
    return PointCloud(rng.uniform(-scale, scale, size=(n, 3)))
