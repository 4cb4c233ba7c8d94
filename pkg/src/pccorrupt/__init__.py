"""Point-cloud corruption toolkit: benchmark generation, a small
trainable point classifier, attacks, test-time adaptation, and metrics."""

from ._version import __version__
from .geometry import (
    Aabb,
    DegenerateGeometryError,
    KnnIndex,
    OffParseError,
    PointCloud,
    TriangleMesh,
    knn_query,
    nearest_indices,
    normalize_mesh,
    normalize_unit_sphere,
    parse_off,
    sample_surface,
    write_off,
)
from .io_formats import (
    PlyParseError,
    RawFormatError,
    load_cloud,
    load_mesh,
    read_ply,
    read_raw,
    save_cloud,
    write_ply,
    write_raw,
)
from .severity import (
    DENSITY_KINDS,
    MESH_KINDS,
    NOISE_KINDS,
    TRANSFORM_KINDS,
    CorruptionKind,
    CorruptionSpec,
    SeverityTable,
)
from .corruptions import (
    apply_corruption,
    background_noise,
    cutout,
    gaussian_noise,
    impulse_noise,
    local_density_decrease,
    local_density_increase,
    random_rotation,
    random_shear,
    rotation_matrix_xyz,
    uniform_noise,
    upsampling_noise,
)
from .deformation import (
    CONDITION_LIMIT,
    INVERSE_MULTIQUADRIC,
    MULTIQUADRIC,
    FfdLattice,
    IllConditionedError,
    RbfDeformation,
    RbfKernel,
    apply_ffd,
    apply_rbf,
    bernstein_basis,
    make_ffd_lattice,
    perturb_lattice,
    random_unit_vectors,
    solve_rbf,
)
from .occlusion import (
    CANONICAL_AZIMUTHS,
    Bvh,
    DegenerateViewError,
    Ray,
    ViewPose,
    lidar_cloud,
    lidar_scan,
    occlusion_cloud,
    raycast_visible,
    sensor_frame_elevation,
    view_pose,
)
from .augmentation import (
    LabeledCloud,
    MixSpec,
    Permutation,
    apply_mix,
    assignment_cost,
    cutmix_k,
    cutmix_r,
    emd_assign,
    mix_labels,
    mixup_emd,
    one_hot,
    rsmix,
)
from .network import (
    AdamState,
    NetworkState,
    PgdConfig,
    StaleCacheError,
    TentConfig,
    TrainConfig,
    backward,
    bn_adapt,
    forward,
    load_checkpoint,
    loss_entropy,
    loss_smoothed_ce,
    pgd_attack,
    predict,
    save_checkpoint,
    smooth_targets,
    tent_adapt,
    train,
)
from .metrics import (
    CountTable,
    MetricsReport,
    PredictionFormatError,
    PredictionRecord,
    aggregate,
    class_mean_error_rate,
    confusion,
    count_records,
    error_rate,
    ingest_predictions,
    merge_tables,
    render_markdown,
    render_report,
    report_from_json,
    report_from_table,
    report_to_json,
    write_predictions,
)
from .pipeline import (
    DataError,
    DatasetManifest,
    RunConfig,
    discover_samples,
    expected_cells,
    iter_cells,
    load_labeled_clean,
    load_manifest,
    run_benchmark,
    run_generate,
    verify_manifest,
)

__all__ = [
    "__version__",
    "Aabb",
    "AdamState",
    "Bvh",
    "CANONICAL_AZIMUTHS",
    "CONDITION_LIMIT",
    "CorruptionKind",
    "CorruptionSpec",
    "CountTable",
    "DENSITY_KINDS",
    "DataError",
    "DatasetManifest",
    "DegenerateGeometryError",
    "DegenerateViewError",
    "FfdLattice",
    "INVERSE_MULTIQUADRIC",
    "IllConditionedError",
    "KnnIndex",
    "LabeledCloud",
    "MESH_KINDS",
    "MULTIQUADRIC",
    "MetricsReport",
    "MixSpec",
    "NOISE_KINDS",
    "NetworkState",
    "OffParseError",
    "Permutation",
    "PgdConfig",
    "PlyParseError",
    "PointCloud",
    "PredictionFormatError",
    "PredictionRecord",
    "RawFormatError",
    "Ray",
    "RbfDeformation",
    "RbfKernel",
    "RunConfig",
    "SeverityTable",
    "StaleCacheError",
    "TRANSFORM_KINDS",
    "TentConfig",
    "TrainConfig",
    "TriangleMesh",
    "ViewPose",
    "aggregate",
    "apply_corruption",
    "apply_ffd",
    "apply_mix",
    "apply_rbf",
    "assignment_cost",
    "background_noise",
    "backward",
    "bernstein_basis",
    "bn_adapt",
    "class_mean_error_rate",
    "confusion",
    "count_records",
    "cutmix_k",
    "cutmix_r",
    "cutout",
    "discover_samples",
    "emd_assign",
    "error_rate",
    "expected_cells",
    "forward",
    "gaussian_noise",
    "impulse_noise",
    "ingest_predictions",
    "iter_cells",
    "knn_query",
    "lidar_cloud",
    "lidar_scan",
    "load_checkpoint",
    "load_cloud",
    "load_labeled_clean",
    "load_manifest",
    "load_mesh",
    "local_density_decrease",
    "local_density_increase",
    "loss_entropy",
    "loss_smoothed_ce",
    "make_ffd_lattice",
    "merge_tables",
    "mix_labels",
    "mixup_emd",
    "nearest_indices",
    "normalize_mesh",
    "normalize_unit_sphere",
    "occlusion_cloud",
    "one_hot",
    "parse_off",
    "perturb_lattice",
    "pgd_attack",
    "predict",
    "random_rotation",
    "random_shear",
    "random_unit_vectors",
    "raycast_visible",
    "read_ply",
    "read_raw",
    "render_markdown",
    "render_report",
    "report_from_json",
    "report_from_table",
    "report_to_json",
    "rotation_matrix_xyz",
    "rsmix",
    "run_benchmark",
    "run_generate",
    "sample_surface",
    "save_cloud",
    "save_checkpoint",
    "sensor_frame_elevation",
    "smooth_targets",
    "solve_rbf",
    "tent_adapt",
    "train",
    "uniform_noise",
    "upsampling_noise",
    "verify_manifest",
    "view_pose",
    "write_off",
    "write_ply",
    "write_predictions",
    "write_raw",
]
