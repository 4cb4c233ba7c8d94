"""Corruption identities and per-severity parameter tables.

The default table is embedded below; any part of it can be overridden by
a JSON document keyed by canonical corruption name whose values are
5-element parameter arrays (severities 1..5).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum


class CorruptionKind(Enum):
    """The 15 corruption types, with stable canonical names."""

    OCCLUSION = "occlusion"
    LIDAR = "lidar"
    LOCAL_DENSITY_INC = "local_density_inc"
    LOCAL_DENSITY_DEC = "local_density_dec"
    CUTOUT = "cutout"
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"
    IMPULSE = "impulse"
    UPSAMPLING = "upsampling"
    BACKGROUND = "background"
    ROTATION = "rotation"
    SHEAR = "shear"
    FFD = "ffd"
    RBF = "rbf"
    INV_RBF = "inv_rbf"

    @property
    def ordinal(self) -> int:
        """Stable position in declaration order, used for RNG stream keys."""
        return _ORDINALS[self]

    @classmethod
    def from_name(cls, name: str) -> "CorruptionKind":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown corruption name {name!r}") from None


_ORDINALS = {kind: i for i, kind in enumerate(CorruptionKind)}

# Kinds that consume a mesh (view-based) rather than a point cloud.
MESH_KINDS = frozenset({CorruptionKind.OCCLUSION, CorruptionKind.LIDAR})

DENSITY_KINDS = (
    CorruptionKind.OCCLUSION,
    CorruptionKind.LIDAR,
    CorruptionKind.LOCAL_DENSITY_INC,
    CorruptionKind.LOCAL_DENSITY_DEC,
    CorruptionKind.CUTOUT,
)
NOISE_KINDS = (
    CorruptionKind.UNIFORM,
    CorruptionKind.GAUSSIAN,
    CorruptionKind.IMPULSE,
    CorruptionKind.UPSAMPLING,
    CorruptionKind.BACKGROUND,
)
TRANSFORM_KINDS = (
    CorruptionKind.ROTATION,
    CorruptionKind.SHEAR,
    CorruptionKind.FFD,
    CorruptionKind.RBF,
    CorruptionKind.INV_RBF,
)


@dataclass(frozen=True)
class CorruptionSpec:
    """One corruption request: kind, severity 1..5, and a base seed."""

    kind: CorruptionKind
    severity: int
    seed: int = 0

    def __post_init__(self):
        if self.severity not in (1, 2, 3, 4, 5):
            raise ValueError(f"severity must be in 1..5, got {self.severity}")


# Per-kind parameter records for severities 1..5.  Counts that scale with
# the cloud size N are stored as a rational rule: count = (N // div) * mul
# for impulse, count = (N * mul) // div for upsampling.
DEFAULT_TABLE_DATA = {
    "occlusion": [{"view_index": s} for s in range(1, 6)],
    "lidar": [{"view_index": s} for s in range(1, 6)],
    "local_density_inc": [
        {"n_clusters": s, "cluster_size": 100} for s in range(1, 6)
    ],
    "local_density_dec": [
        {"n_clusters": s, "cluster_size": 100} for s in range(1, 6)
    ],
    "cutout": [{"n_clusters": s, "k": 50} for s in range(1, 6)],
    "uniform": [{"scale": 0.01 * s} for s in range(1, 6)],
    "gaussian": [{"sigma": 0.01 + 0.005 * (s - 1)} for s in range(1, 6)],
    "impulse": [
        {"count_div": 40, "count_mul": s, "magnitude": 0.05} for s in range(1, 6)
    ],
    "upsampling": [
        {"count_div": 10, "count_mul": s, "bound": 0.05} for s in range(1, 6)
    ],
    "background": [{"count": 20 * s} for s in range(1, 6)],
    "rotation": [{"max_angle_deg": 3.0 * s} for s in range(1, 6)],
    "shear": [{"max_coeff": 0.05 * s} for s in range(1, 6)],
    "ffd": [{"distance": 0.1 * s} for s in range(1, 6)],
    "rbf": [{"distance": 0.1 * s} for s in range(1, 6)],
    "inv_rbf": [{"distance": 0.1 * s} for s in range(1, 6)],
}

# Parameter whose magnitude must be non-decreasing in severity.
_DOMINANT = {
    "occlusion": "view_index",
    "lidar": "view_index",
    "local_density_inc": "n_clusters",
    "local_density_dec": "n_clusters",
    "cutout": "n_clusters",
    "uniform": "scale",
    "gaussian": "sigma",
    "impulse": "count_mul",
    "upsampling": "count_mul",
    "background": "count",
    "rotation": "max_angle_deg",
    "shear": "max_coeff",
    "ffd": "distance",
    "rbf": "distance",
    "inv_rbf": "distance",
}


class SeverityTable:
    """Mapping kind -> 5 parameter records, validated on construction."""

    def __init__(self, data=None):
        merged = {k: [dict(r) for r in v] for k, v in DEFAULT_TABLE_DATA.items()}
        if data:
            for name, entries in data.items():
                CorruptionKind.from_name(name)
                merged[name] = [dict(r) for r in entries]
        for name, entries in merged.items():
            if len(entries) != 5:
                raise ValueError(
                    f"severity table for {name!r} must have 5 entries, "
                    f"got {len(entries)}"
                )
            dominant = _DOMINANT[name]
            values = []
            for entry in entries:
                if dominant not in entry:
                    raise ValueError(
                        f"severity entry for {name!r} missing {dominant!r}"
                    )
                values.append(float(entry[dominant]))
            if any(b < a for a, b in zip(values, values[1:])):
                raise ValueError(
                    f"{dominant!r} must be non-decreasing in severity for {name!r}"
                )
        self._data = merged

    def params(self, kind: CorruptionKind, severity: int) -> dict:
        if severity not in (1, 2, 3, 4, 5):
            raise ValueError(f"severity must be in 1..5, got {severity}")
        return dict(self._data[kind.value][severity - 1])

    def as_dict(self) -> dict:
        return {k: [dict(r) for r in v] for k, v in self._data.items()}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return "sha256:" + hashlib.sha256(canonical.encode()).hexdigest()

    @classmethod
    def from_json(cls, text: str) -> "SeverityTable":
        return cls(json.loads(text))

    @classmethod
    def default(cls) -> "SeverityTable":
        return cls()
