"""Depth-aware pose-motion descriptors and a from-scratch volumetric CNN.

The pipeline turns per-frame 3D human-joint trajectories into fixed-size
voxel descriptors whose channels encode time as color, and classifies them
with a shallow 3D convolutional network trained from scratch.  Late fusion
combines the resulting per-class scores with scores from other models.
"""

from . import classifier, descriptor_io, encoder, fusion, pose_io, synth
from .encoder import (
    DAPotion,
    EncoderConfig,
    aggregate_sum,
    collapse_depth,
    color_code,
    colorize,
    encode_clip,
    encode_pose_sequence,
    intensity,
    intensity_normalize,
    max_normalize,
    rasterize_heatmap,
    resample,
)
from .pose_io import (
    BBoxSequence,
    GridPoseSequence,
    GridSpec,
    PoseSequence,
    bbox_to_image_frame,
    normalize_to_grid,
    parse_pose_sequence,
    serialize_pose_sequence,
)
from .synth import SynthSpec, generate_clip, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "BBoxSequence",
    "DAPotion",
    "EncoderConfig",
    "GridPoseSequence",
    "GridSpec",
    "PoseSequence",
    "SynthSpec",
    "aggregate_sum",
    "bbox_to_image_frame",
    "classifier",
    "collapse_depth",
    "color_code",
    "colorize",
    "descriptor_io",
    "encode_clip",
    "encode_pose_sequence",
    "encoder",
    "fusion",
    "generate_clip",
    "generate_dataset",
    "intensity",
    "intensity_normalize",
    "max_normalize",
    "normalize_to_grid",
    "parse_pose_sequence",
    "pose_io",
    "rasterize_heatmap",
    "resample",
    "serialize_pose_sequence",
    "synth",
]
