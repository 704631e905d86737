"""Pose sequence files, coordinate frames, and the descriptor voxel grid.

A pose clip is one JSON document per file:

    {
      "frames": 24,
      "joints": 4,
      "image_size": [320, 240],
      "positions": [[[x, y, z], ...J], ...T],
      "bboxes": [[x_ul, y_ul, width, height], ...T],   # optional
      "label": "circle_xy",                            # optional
      "joint_names": ["wrist_L", "wrist_R", ...]       # optional
    }

``x`` and ``y`` are the pose regressor's discretized bounding-box
coordinates and ``z`` is discretized absolute camera depth; all three lie
in ``[0, 256)``.  When ``bboxes`` is present the clip is in the bounding-box
frame and must go through :func:`bbox_to_image_frame` before gridding;
without boxes the coordinates are taken to be image pixels already.
Unknown keys are ignored.

A dataset manifest is a plain text file with one ``path<TAB>label`` record
per line; paths are resolved relative to the manifest's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

COORD_RANGE = 256.0  # regressor coordinates are discretized into 256 bins

# Coordinate frames a PoseSequence can be in.
FRAME_BBOX = "bbox"
FRAME_IMAGE = "image"


def _as_float_array(obj, name: str) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed pose file: {name} is not a numeric array ({exc})") from None
    return arr


@dataclass(frozen=True, eq=False)
class PoseSequence:
    """Per-frame 3D joint positions for one clip.

    ``positions`` has shape (T, J, 3) with columns (x, y, z).  The
    ``[0, 256)`` bound applies to x and y only while ``frame`` is
    ``"bbox"``; z is absolute camera depth and stays in ``[0, 256)``
    in every frame of reference.
    """

    positions: np.ndarray
    image_size: tuple[int, int]
    frame: str = FRAME_BBOX
    label: str | None = None
    joint_names: tuple[str, ...] | None = None
    bboxes: "BBoxSequence | None" = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise ValueError(f"positions must have shape (T, J, 3), got {pos.shape}")
        if pos.shape[0] < 2:
            raise ValueError("too few frames: a clip needs at least 2 frames")
        if pos.shape[1] < 1:
            raise ValueError("a clip needs at least one joint")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions contain non-finite values")
        if self.frame == FRAME_BBOX:
            bounded = pos
        else:
            bounded = pos[:, :, 2]  # depth keeps the regressor range
        if np.any(bounded < 0.0) or np.any(bounded >= COORD_RANGE):
            raise ValueError("coordinate out of [0, 256)")
        if self.frame not in (FRAME_BBOX, FRAME_IMAGE):
            raise ValueError(f"unknown coordinate frame {self.frame!r}")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError("image_size entries must be positive")
        if self.joint_names is not None and len(self.joint_names) != pos.shape[1]:
            raise ValueError("joint_names length does not match joint count")
        if self.bboxes is not None and self.bboxes.num_frames != pos.shape[0]:
            raise ValueError("bounding boxes and positions disagree on frame count")
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "image_size", (int(w), int(h)))
        if self.joint_names is not None:
            object.__setattr__(self, "joint_names", tuple(self.joint_names))

    @property
    def num_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def num_joints(self) -> int:
        return self.positions.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PoseSequence):
            return NotImplemented
        return (
            np.array_equal(self.positions, other.positions)
            and self.image_size == other.image_size
            and self.frame == other.frame
            and self.label == other.label
            and self.joint_names == other.joint_names
            and self.bboxes == other.bboxes
        )


@dataclass(frozen=True, eq=False)
class BBoxSequence:
    """Per-frame subject bounding boxes, (x_ul, y_ul, width, height) in pixels."""

    boxes: np.ndarray

    def __post_init__(self):
        boxes = np.asarray(self.boxes, dtype=np.float64)
        if boxes.ndim != 2 or boxes.shape[1] != 4:
            raise ValueError(f"bboxes must have shape (T, 4), got {boxes.shape}")
        if not np.all(np.isfinite(boxes)):
            raise ValueError("bboxes contain non-finite values")
        if np.any(boxes[:, 2] <= 0.0) or np.any(boxes[:, 3] <= 0.0):
            raise ValueError("bounding boxes must have positive width and height")
        boxes.flags.writeable = False
        object.__setattr__(self, "boxes", boxes)

    @property
    def num_frames(self) -> int:
        return self.boxes.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BBoxSequence):
            return NotImplemented
        return np.array_equal(self.boxes, other.boxes)


@dataclass(frozen=True)
class GridSpec:
    """Voxel grid dimensions plus the per-axis affine map into voxel space.

    ``voxel = coord * scale + offset`` per axis.  The default map places the
    image extent onto [0, W-1] x [0, H-1] and the depth range [0, 256) onto
    [0, D-1].
    """

    dims: tuple[int, int, int]
    scale: tuple[float, float, float]
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 4 for d in dims):
            raise ValueError("grid dims must be three values >= 4")
        if len(self.scale) != 3 or any(s <= 0 for s in self.scale):
            raise ValueError("grid scales must be three positive values")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "scale", tuple(float(s) for s in self.scale))
        object.__setattr__(self, "offset", tuple(float(o) for o in self.offset))

    @classmethod
    def for_image(cls, dims, image_size, depth_extent: float = COORD_RANGE) -> "GridSpec":
        w, h = image_size
        if w <= 0 or h <= 0:
            raise ValueError("degenerate image_size: width and height must be positive")
        dims = tuple(int(d) for d in dims)
        scale = (
            (dims[0] - 1) / float(w),
            (dims[1] - 1) / float(h),
            (dims[2] - 1) / float(depth_extent),
        )
        return cls(dims=dims, scale=scale)

    def to_voxels(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points * np.asarray(self.scale) + np.asarray(self.offset)

    def from_voxels(self, voxels: np.ndarray) -> np.ndarray:
        voxels = np.asarray(voxels, dtype=np.float64)
        return (voxels - np.asarray(self.offset)) / np.asarray(self.scale)


@dataclass(frozen=True, eq=False)
class GridPoseSequence:
    """Joint trajectories in continuous voxel coordinates, clamped to the grid."""

    positions: np.ndarray  # (T, J, 3), every axis within [0, dim-1]
    grid: GridSpec
    label: str | None = None
    joint_names: tuple[str, ...] | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise ValueError(f"positions must have shape (T, J, 3), got {pos.shape}")
        upper = np.asarray(self.grid.dims, dtype=np.float64) - 1.0
        if np.any(pos < 0.0) or np.any(pos > upper):
            raise ValueError("grid positions must lie within [0, dim-1] per axis")
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @property
    def num_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def num_joints(self) -> int:
        return self.positions.shape[1]


def parse_pose_sequence(stream) -> PoseSequence:
    """Parse one clip from a file object, ``bytes``, or JSON string."""
    if hasattr(stream, "read"):
        raw = stream.read()
    else:
        raw = stream
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed pose file: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError("malformed pose file: top-level value must be an object")

    for key in ("frames", "joints", "image_size", "positions"):
        if key not in doc:
            raise ValueError(f"malformed pose file: missing field {key!r}")

    frames = doc["frames"]
    joints = doc["joints"]
    if not isinstance(frames, int) or not isinstance(joints, int):
        raise ValueError("malformed pose file: frames and joints must be integers")
    if frames < 2:
        raise ValueError("too few frames: a clip needs at least 2 frames")

    positions = doc["positions"]
    if not isinstance(positions, list) or len(positions) != frames:
        raise ValueError("frames field does not match positions length")
    for row in positions:
        if not isinstance(row, list) or len(row) != joints:
            raise ValueError("inconsistent row lengths in positions")
        for triple in row:
            if not isinstance(triple, list) or len(triple) != 3:
                raise ValueError("each position must be an [x, y, z] triple")
    pos = _as_float_array(positions, "positions")

    image_size = doc["image_size"]
    if not isinstance(image_size, list) or len(image_size) != 2:
        raise ValueError("image_size must be [width, height]")

    bboxes = None
    if doc.get("bboxes") is not None:
        arr = _as_float_array(doc["bboxes"], "bboxes")
        if arr.ndim != 2 or arr.shape[0] != frames:
            raise ValueError("bboxes must provide one [x_ul, y_ul, w, h] entry per frame")
        bboxes = BBoxSequence(arr)

    label = doc.get("label")
    if label is not None and not isinstance(label, str):
        raise ValueError("label must be a string")
    joint_names = doc.get("joint_names")
    if joint_names is not None:
        if not isinstance(joint_names, list) or not all(isinstance(n, str) for n in joint_names):
            raise ValueError("joint_names must be a list of strings")
        joint_names = tuple(joint_names)

    frame = FRAME_BBOX if bboxes is not None else FRAME_IMAGE
    # Image-frame coordinates with no boxes still come from the regressor's
    # [0, 256) discretization; enforce the bound for x and y in both cases.
    if np.any(pos < 0.0) or np.any(pos >= COORD_RANGE):
        raise ValueError("coordinate out of [0, 256)")
    return PoseSequence(
        positions=pos,
        image_size=(image_size[0], image_size[1]),
        frame=frame,
        label=label,
        joint_names=joint_names,
        bboxes=bboxes,
    )


def serialize_pose_sequence(seq: PoseSequence) -> str:
    """Inverse of :func:`parse_pose_sequence`; round-trips exactly."""
    doc: dict = {
        "frames": seq.num_frames,
        "joints": seq.num_joints,
        "image_size": list(seq.image_size),
        "positions": seq.positions.tolist(),
    }
    if seq.bboxes is not None:
        doc["bboxes"] = seq.bboxes.boxes.tolist()
    if seq.label is not None:
        doc["label"] = seq.label
    if seq.joint_names is not None:
        doc["joint_names"] = list(seq.joint_names)
    return json.dumps(doc, indent=1)


def read_pose_file(path) -> PoseSequence:
    with open(path, "rb") as fh:
        return parse_pose_sequence(fh)


def write_pose_file(path, seq: PoseSequence) -> None:
    atomic_write_text(path, serialize_pose_sequence(seq) + "\n")


def bbox_to_image_frame(poses: PoseSequence, boxes: BBoxSequence) -> PoseSequence:
    """Rescale bounding-box x/y onto the image and add the box corner.

    x_img = x_ul + (x / 256) * width, likewise for y; depth is untouched so
    the clip keeps encoding motion relative to the whole camera frame.
    """
    if poses.frame != FRAME_BBOX:
        raise ValueError("poses are already in the image frame")
    if boxes.num_frames != poses.num_frames:
        raise ValueError(
            f"frame-count mismatch: {poses.num_frames} pose frames vs {boxes.num_frames} boxes"
        )
    corners = boxes.boxes[:, None, 0:2]  # (T, 1, 2)
    sizes = boxes.boxes[:, None, 2:4]
    out = poses.positions.copy()
    out[:, :, 0:2] = corners + (poses.positions[:, :, 0:2] / COORD_RANGE) * sizes
    return replace(poses, positions=out, frame=FRAME_IMAGE, bboxes=None)


def to_image_frame(poses: PoseSequence) -> PoseSequence:
    """Apply the attached boxes when present; otherwise the clip is image-frame already."""
    if poses.frame == FRAME_BBOX and poses.bboxes is not None:
        return bbox_to_image_frame(poses, poses.bboxes)
    if poses.frame == FRAME_BBOX:
        return replace(poses, frame=FRAME_IMAGE)
    return poses


def normalize_to_grid(poses: PoseSequence, grid: GridSpec) -> GridPoseSequence:
    """Map image/camera coordinates onto the voxel grid and clamp to its bounds."""
    if poses.frame != FRAME_IMAGE:
        raise ValueError("normalize_to_grid expects image-frame poses; apply bbox_to_image_frame first")
    w, h = poses.image_size
    if w <= 0 or h <= 0:
        raise ValueError("degenerate image_size: width and height must be positive")
    voxels = grid.to_voxels(poses.positions)
    upper = np.asarray(grid.dims, dtype=np.float64) - 1.0
    voxels = np.clip(voxels, 0.0, upper)
    return GridPoseSequence(
        positions=voxels, grid=grid, label=poses.label, joint_names=poses.joint_names
    )


def mirror_pairs(joint_names) -> list[tuple[int, int]]:
    """Pair joint indices whose names differ only by a trailing _L/_R suffix."""
    if not joint_names:
        return []
    by_root: dict[str, dict[str, int]] = {}
    for idx, name in enumerate(joint_names):
        for suffix in ("_L", "_R"):
            if name.endswith(suffix):
                by_root.setdefault(name[: -len(suffix)], {})[suffix] = idx
    pairs = []
    for _, sides in sorted(by_root.items()):
        if "_L" in sides and "_R" in sides:
            pairs.append((sides["_L"], sides["_R"]))
    return pairs


# ---------------------------------------------------------------------------
# manifests and atomic writes
# ---------------------------------------------------------------------------


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the target directory plus rename."""
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_manifest(path, records: list[tuple[str, str]]) -> None:
    """Records are (relative path, label) pairs, one per line."""
    lines = [f"{rel}\t{label}\n" for rel, label in records]
    atomic_write_text(path, "".join(lines))


def read_manifest(path) -> list[tuple[str, str]]:
    """Return (absolute path, label) pairs; paths resolve against the manifest dir."""
    base = os.path.dirname(os.path.abspath(os.fspath(path)))
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: manifest lines must be 'path<TAB>label'")
            rel, label = parts
            records.append((os.path.join(base, rel), label))
    return records
