"""Semi-direct odometry for marine radar images.

A rotation is estimated densely from a radial-integration descriptor and
refined by robust registration of sparse coastline features.
"""
from .geometry import (
    PointCloud2D,
    Pose2,
    RadarFrame,
    Trajectory,
    image_to_cloud,
    transform_cloud,
    wrap_angle,
)
from .descriptor import (
    LodeStarDescriptor,
    RotationEstimate,
    circular_correlate,
    circular_correlate_naive,
    compute_descriptor,
    estimate_rotation,
)
from .features import (
    ContourMask,
    FeatureCloud,
    OverlapReport,
    apply_overlap_dropout,
    eliminate_overlap,
    eliminate_overlap_by_time,
    extract_contour,
    select_k_nearest,
)
from .registration import (
    RegistrationParams,
    RegistrationResult,
    SurfaceFeature,
    Surfaces,
    build_surfaces,
    objective,
    objective_gradient,
    register,
    residual,
)
from .pipeline import OdometryStep, PipelineConfig, parse_config, process_pair, run_sequence
from .synth import FrameSpec, ScanSchedule, Scene, generate_sequence, load_scene, render_frame
from .evaluation import ApeResult, compute_ape, read_trajectory, write_trajectory
from .dataset import DatasetManifest, load_manifest, write_dataset

__version__ = "0.1.0"
