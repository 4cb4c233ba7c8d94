"""Dataset generation and benchmark orchestration.

run_generate walks an input directory of meshes or clouds, writes a clean
normalized cloud per sample plus one corrupted cloud per selected
(corruption, severity), each with a provenance sidecar, and finally a
manifest tying everything together with content digests.  Nothing in the
outputs depends on wall-clock time or worker scheduling: every task derives
its randomness from (seed, kind, severity, sample id), so a rerun is
byte-identical no matter how many workers ran it.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _rng
from ._version import __version__
from .geometry import (
    PointCloud,
    TriangleMesh,
    normalize_mesh,
    normalize_unit_sphere,
    sample_surface,
)
from .io_formats import (
    CLOUD_SUFFIXES,
    MESH_SUFFIXES,
    load_cloud,
    load_mesh,
    write_ply,
)
from .corruptions import apply_corruption
from .severity import CorruptionKind, CorruptionSpec, MESH_KINDS, SeverityTable

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


class DataError(Exception):
    """Input data failed validation (maps to CLI exit code 2)."""


@dataclass(frozen=True)
class RunConfig:
    input_dir: str
    output_dir: str
    kinds: tuple[str, ...] = tuple(k.value for k in CorruptionKind)
    severities: tuple[int, ...] = (1, 2, 3, 4, 5)
    point_budget: int = 1024
    seed: int = 0
    workers: int = 1
    table: SeverityTable | None = None

    def __post_init__(self):
        if not self.kinds:
            raise ValueError("kind selection is empty")
        if not self.severities:
            raise ValueError("severity selection is empty")
        for name in self.kinds:
            CorruptionKind.from_name(name)  # raises on unknown
        for s in self.severities:
            if s not in (1, 2, 3, 4, 5):
                raise ValueError(f"severity {s} outside 1..5")
        if self.point_budget < 64:
            raise ValueError("point budget must be >= 64")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def _sha256(path: Path) -> str:
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


def _sample_id(rel: Path) -> str:
    return "_".join(rel.with_suffix("").parts)


def _class_name(rel: Path) -> str:
    return rel.parts[0] if len(rel.parts) > 1 else "unknown"


def discover_samples(input_dir: str | Path):
    """Sorted (relative path, is_mesh) pairs for every recognized file."""
    root = Path(input_dir)
    if not root.is_dir():
        raise DataError(f"input directory not found: {root}")
    found = []
    for path in sorted(root.rglob("*")):
        if path.suffix.lower() in MESH_SUFFIXES:
            found.append((path.relative_to(root), True))
        elif path.suffix.lower() in CLOUD_SUFFIXES:
            found.append((path.relative_to(root), False))
    if not found:
        raise DataError(f"no mesh or cloud files under {root}")
    return found


@dataclass
class DatasetManifest:
    seed: int
    point_budget: int
    table_digest: str
    samples: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    tool_version: str = __version__
    manifest_version: int = MANIFEST_VERSION

    def to_json(self) -> str:
        payload = {
            "manifest_version": self.manifest_version,
            "tool_version": self.tool_version,
            "seed": self.seed,
            "point_budget": self.point_budget,
            "severity_table_digest": self.table_digest,
            "samples": self.samples,
            "failures": self.failures,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        raw = json.loads(text)
        if raw.get("manifest_version") != MANIFEST_VERSION:
            raise DataError(
                f"unsupported manifest_version {raw.get('manifest_version')!r}"
            )
        return cls(
            seed=raw["seed"],
            point_budget=raw["point_budget"],
            table_digest=raw["severity_table_digest"],
            samples=raw["samples"],
            failures=raw.get("failures", []),
            tool_version=raw.get("tool_version", "unknown"),
        )

    def sample_ids(self) -> list[str]:
        return [s["sample_id"] for s in self.samples]

    def class_names(self) -> list[str]:
        return sorted({s["class_name"] for s in self.samples})


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    return DatasetManifest.from_json(path.read_text())


def verify_manifest(manifest: DatasetManifest, root: str | Path) -> list[str]:
    """Existence + digest check for every file the manifest names."""
    root = Path(root)
    problems = []

    def check(entry: dict, what: str):
        path = root / entry["path"]
        if not path.is_file():
            problems.append(f"{what}: missing file {entry['path']}")
        elif _sha256(path) != entry["sha256"]:
            problems.append(f"{what}: digest mismatch for {entry['path']}")

    for sample in manifest.samples:
        check(sample["clean"], f"{sample['sample_id']} clean")
        for kind, by_sev in sample["corrupted"].items():
            for sev, entry in by_sev.items():
                check(entry, f"{sample['sample_id']} {kind} s={sev}")
                sidecar = root / entry["sidecar"]
                if not sidecar.is_file():
                    problems.append(
                        f"{sample['sample_id']} {kind} s={sev}: missing sidecar"
                    )
    return problems


def _prepare_sample(root: Path, rel: Path, is_mesh: bool, config: RunConfig):
    """Load, normalize and (for meshes) sample the clean cloud."""
    sid = _sample_id(rel)
    sample_hash = _rng.hash_sample_id(sid)
    mesh = None
    if is_mesh:
        mesh = normalize_mesh(load_mesh(root / rel))
        cloud = sample_surface(
            mesh, config.point_budget, _rng.mix_keys(config.seed, 0x73616D70, sample_hash)
        )
    else:
        cloud = load_cloud(root / rel)
        if cloud.count > config.point_budget:
            rng = _rng.stream(config.seed, 0x73756273, sample_hash)
            keep = np.sort(rng.choice(cloud.count, config.point_budget, replace=False))
            cloud = PointCloud(cloud.points[keep])
    cloud = normalize_unit_sphere(cloud)
    return sid, sample_hash, mesh, cloud


def _corrupt_task(out_root, sid, sample_hash, mesh, cloud, kind, severity, config, table):
    """One (sample, kind, severity) unit of work; returns a manifest entry."""
    spec = CorruptionSpec(CorruptionKind.from_name(kind), severity, seed=config.seed)
    info: dict = {}
    source = mesh if spec.kind in MESH_KINDS else cloud
    corrupted = apply_corruption(source, spec, table, sample_key=sample_hash, info=info)
    rel_ply = Path(kind) / f"s{severity}" / f"{sid}.ply"
    rel_sidecar = rel_ply.with_suffix(".json")
    out_path = out_root / rel_ply
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(write_ply(corrupted))
    sidecar = {
        "sample_id": sid,
        "seed": config.seed,
        "table_digest": table.digest(),
        **info,
    }
    (out_root / rel_sidecar).write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return {
        "path": rel_ply.as_posix(),
        "sidecar": rel_sidecar.as_posix(),
        "sha256": _sha256(out_path),
        "n_points": corrupted.count,
    }


def run_generate(config: RunConfig, log=None) -> DatasetManifest:
    """Generate the corrupted dataset; see the module docstring.

    `log` is an optional callable receiving event dicts.  Per-task failures
    are recorded in the manifest's `failures` list and do not stop the run.
    """
    log = log or (lambda event: None)
    table = config.table if config.table is not None else SeverityTable.default()
    in_root = Path(config.input_dir)
    out_root = Path(config.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    found = discover_samples(in_root)
    mesh_kind_names = {k.value for k in MESH_KINDS}
    selected_mesh_kinds = sorted(set(config.kinds) & mesh_kind_names)
    if selected_mesh_kinds and any(not is_mesh for _, is_mesh in found):
        raise DataError(
            f"corruptions {selected_mesh_kinds} need mesh input, but the input "
            "directory contains point-cloud files"
        )

    prepared = []
    failures = []
    for rel, is_mesh in found:
        try:
            prepared.append((rel, *_prepare_sample(in_root, rel, is_mesh, config)))
        except Exception as exc:  # noqa: BLE001 - per-sample isolation
            failures.append({"sample": rel.as_posix(), "stage": "load", "error": str(exc)})
            log({"event": "sample_failed", "sample": rel.as_posix(), "error": str(exc)})
    if not prepared and failures:
        raise DataError("every input sample failed to load")

    samples: dict[str, dict] = {}
    for rel, sid, sample_hash, mesh, cloud in prepared:
        rel_clean = Path("clean") / f"{sid}.ply"
        clean_path = out_root / rel_clean
        clean_path.parent.mkdir(parents=True, exist_ok=True)
        clean_path.write_bytes(write_ply(cloud))
        samples[sid] = {
            "sample_id": sid,
            "class_name": _class_name(rel),
            "source": rel.as_posix(),
            "clean": {
                "path": rel_clean.as_posix(),
                "sha256": _sha256(clean_path),
                "n_points": cloud.count,
            },
            "corrupted": {},
        }
        log({"event": "clean_written", "sample": sid})

    tasks = [
        (sid, sample_hash, mesh, cloud, kind, severity)
        for _, sid, sample_hash, mesh, cloud in prepared
        for kind in config.kinds
        for severity in config.severities
    ]

    def run_task(task):
        sid, sample_hash, mesh, cloud, kind, severity = task
        try:
            entry = _corrupt_task(
                out_root, sid, sample_hash, mesh, cloud, kind, severity, config, table
            )
            return sid, kind, severity, entry, None
        except Exception as exc:  # noqa: BLE001 - per-task isolation
            return sid, kind, severity, None, str(exc)

    if config.workers == 1:
        results = [run_task(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run_task, tasks))

    for sid, kind, severity, entry, error in results:
        if error is not None:
            failures.append(
                {"sample": sid, "kind": kind, "severity": severity, "error": error}
            )
            log({"event": "task_failed", "sample": sid, "kind": kind, "error": error})
            continue
        samples[sid]["corrupted"].setdefault(kind, {})[str(severity)] = entry

    manifest = DatasetManifest(
        seed=config.seed,
        point_budget=config.point_budget,
        table_digest=table.digest(),
        samples=[samples[sid] for sid in sorted(samples)],
        failures=sorted(failures, key=lambda f: json.dumps(f, sort_keys=True)),
    )
    (out_root / MANIFEST_NAME).write_text(manifest.to_json())
    log({
        "event": "manifest_written",
        "samples": len(manifest.samples),
        "failures": len(manifest.failures),
    })
    return manifest


# ---------------------------------------------------------------------------
# benchmark


def expected_cells(manifest: DatasetManifest) -> set[tuple[str, int]]:
    cells = set()
    for sample in manifest.samples:
        if sample["clean"]:
            cells.add(("clean", 0))
        for kind, by_sev in sample["corrupted"].items():
            for sev in by_sev:
                cells.add((kind, int(sev)))
    return cells


def run_benchmark(
    predictions_path, manifest_path, report_path=None, fmt: str = "json"
):
    """Cross-check predictions against a manifest and build the report.

    Returns (report, coverage) where coverage lists the (kind, severity)
    cells the manifest provides but the predictions never mention.
    """
    from . import metrics

    records = metrics.ingest_predictions(predictions_path)
    manifest = load_manifest(manifest_path)
    known_ids = set(manifest.sample_ids())
    orphans = sorted({r.sample_id for r in records} - known_ids)
    if orphans:
        raise DataError(
            f"predictions reference {len(orphans)} unknown sample ids, "
            f"e.g. {orphans[:3]}"
        )
    have = {(r.corruption, r.severity) for r in records}
    missing = sorted(expected_cells(manifest) - have)
    report = metrics.aggregate(records)
    text = metrics.render_report(report, fmt)
    if report_path is not None:
        Path(report_path).write_text(text)
    coverage = {
        "missing_cells": [list(c) for c in missing],
        "present_cells": sorted([list(c) for c in have]),
    }
    return report, coverage


# ---------------------------------------------------------------------------
# dataset access for train / eval / attack


def load_labeled_clean(manifest: DatasetManifest, root, class_names=None):
    """Clean clouds as (LabeledCloud list, class name list)."""
    from .augmentation import LabeledCloud

    root = Path(root)
    names = list(class_names) if class_names else manifest.class_names()
    index = {name: i for i, name in enumerate(names)}
    out = []
    for sample in manifest.samples:
        cls = sample["class_name"]
        if cls not in index:
            raise DataError(f"sample {sample['sample_id']} has unknown class {cls!r}")
        cloud = load_cloud(root / sample["clean"]["path"])
        out.append(LabeledCloud.from_class(cloud, index[cls], len(names)))
    return out, names


def iter_cells(manifest: DatasetManifest, root):
    """Yield (corruption, severity, [(sample_id, class_name, cloud), ...])
    for the clean cell and every corrupted cell in the manifest."""
    root = Path(root)
    clean = [
        (s["sample_id"], s["class_name"], load_cloud(root / s["clean"]["path"]))
        for s in manifest.samples
    ]
    yield "clean", 0, clean
    kinds = sorted({k for s in manifest.samples for k in s["corrupted"]})
    for kind in kinds:
        severities = sorted(
            {
                int(sev)
                for s in manifest.samples
                for sev in s["corrupted"].get(kind, {})
            }
        )
        for sev in severities:
            batch = []
            for s in manifest.samples:
                entry = s["corrupted"].get(kind, {}).get(str(sev))
                if entry is not None:
                    batch.append(
                        (s["sample_id"], s["class_name"], load_cloud(root / entry["path"]))
                    )
            if batch:
                yield kind, sev, batch
