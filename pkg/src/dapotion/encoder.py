"""Depth-aware pose-motion (DA-PoTion) descriptor encoding.

One joint's descriptor is built in four steps:

1. every frame's 3D joint position becomes a truncated isotropic Gaussian
   heatmap on a W x H x D voxel grid (peak 1 at the joint);
2. each frame's heatmap is weighted by a C-channel temporal color code
   o(t) that encodes the frame's relative time in the clip;
3. the colorized heatmaps are summed over time into a C-channel volume S
   whose size no longer depends on clip length;
4. S is reduced by an aggregation scheme:

   * ``u`` - each channel divided by its own max over all voxels,
   * ``i`` - the channel-sum of ``u`` (trajectory intensity, 1 channel),
   * ``n`` - ``u / (epsilon + i)``, weighting every trajectory position
     equally regardless of dwell time,
   * ``nui`` - the per-joint stack [n, u, i] with 2C+1 channels.

The per-joint volumes are stacked over joints (joint-major channel order)
into one fixed-size descriptor suitable for a 3D CNN.

Multi-channel volumes are channel-major ``float32`` arrays of shape
(C, W, H, D); single-channel heatmaps drop the leading axis.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .pose_io import GridPoseSequence, GridSpec, PoseSequence, normalize_to_grid, to_image_frame

SCHEMES = ("u", "i", "n", "nui")

# channels contributed by one joint under each scheme
def channels_per_joint(scheme: str, channels: int) -> int:
    if scheme in ("u", "n"):
        return channels
    if scheme == "i":
        return 1
    if scheme == "nui":
        return 2 * channels + 1
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def color_code(t: int, num_frames: int, channels: int = 2) -> np.ndarray:
    """C-channel temporal weight vector for frame t of a clip.

    The clip's normalized time s = (t-1)/(T-1) is split into C-1 equal
    intervals with a two-channel linear ramp on each, which is the same as
    evaluating piecewise-linear hat functions with channel c peaking at
    s = (C-c)/(C-1).  For C=2 this is exactly (s, 1-s): the first channel
    fades in over the clip while the second fades out.

    At most two adjacent channels are nonzero and the channels always sum
    to 1.
    """
    T, C = num_frames, channels
    if T < 2:
        raise ValueError("num_frames must be >= 2")
    if C < 2:
        raise ValueError("channels must be >= 2")
    if not 1 <= t <= T:
        raise ValueError(f"frame index {t} out of range 1..{T}")
    s = (t - 1) / (T - 1)
    scaled = s * (C - 1)
    k = min(int(scaled), C - 2)  # interval index, nodes k and k+1
    u = scaled - k
    code = np.zeros(C, dtype=np.float64)
    code[C - k - 2] = u        # channel peaking at the interval's late node
    code[C - k - 1] = 1.0 - u  # channel peaking at the early node
    return code


def rasterize_heatmap(
    center,
    grid,
    sigma: float,
    truncation_radius: float = 3.0,
) -> np.ndarray:
    """Truncated isotropic Gaussian volume centered at a voxel-space point.

    Voxel v holds exp(-||v - center||^2 / (2 sigma^2)) inside the ball
    ||v - center|| <= truncation_radius * sigma and 0 outside, so the peak
    is 1 when the center sits on a voxel.  ``grid`` may be a GridSpec or a
    plain (W, H, D) tuple.
    """
    dims = grid.dims if isinstance(grid, GridSpec) else tuple(int(d) for d in grid)
    volume = np.zeros(dims, dtype=np.float32)
    slices, values = _gaussian_patch(np.asarray(center, dtype=np.float64), dims, sigma, truncation_radius)
    if slices is not None:
        volume[slices] = values
    return volume


def _gaussian_patch(center, dims, sigma, truncation_radius):
    """Nonzero bounding box of the truncated Gaussian as (slices, float32 values)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if truncation_radius < 1:
        raise ValueError("truncation_radius must be >= 1")
    radius = truncation_radius * sigma
    lo = np.maximum(np.ceil(center - radius).astype(int), 0)
    hi = np.minimum(np.floor(center + radius).astype(int), np.asarray(dims) - 1)
    if np.any(lo > hi):
        return None, None
    axes = [np.arange(lo[a], hi[a] + 1, dtype=np.float64) - center[a] for a in range(3)]
    d2 = (
        axes[0][:, None, None] ** 2
        + axes[1][None, :, None] ** 2
        + axes[2][None, None, :] ** 2
    )
    values = np.exp(d2 / (-2.0 * sigma * sigma))
    values[d2 > radius * radius] = 0.0
    slices = tuple(slice(int(lo[a]), int(hi[a]) + 1) for a in range(3))
    return slices, values.astype(np.float32)


def colorize(heatmap: np.ndarray, code: np.ndarray) -> np.ndarray:
    """Weight a single-channel heatmap by a color code: out[c] = heatmap * code[c]."""
    heatmap = np.asarray(heatmap)
    code = np.asarray(code)
    if heatmap.ndim != 3:
        raise ValueError("heatmap must be a (W, H, D) volume")
    return (code[:, None, None, None] * heatmap[None]).astype(np.float32)


def aggregate_sum(colorized) -> np.ndarray:
    """Elementwise sum of per-frame colorized volumes over time."""
    volumes = list(colorized)
    if not volumes:
        raise ValueError("empty sequence of colorized volumes")
    shape = volumes[0].shape
    out = np.zeros(shape, dtype=np.float32)
    for v in volumes:
        if v.shape != shape:
            raise ValueError(f"shape mismatch: {v.shape} vs {shape}")
        out += v
    return out


def max_normalize(summed: np.ndarray) -> np.ndarray:
    """Scheme ``u``: divide each channel by its own max; all-zero channels stay zero."""
    summed = np.asarray(summed)
    peaks = summed.reshape(summed.shape[0], -1).max(axis=1)
    safe = np.where(peaks > 0, peaks, 1.0).astype(summed.dtype)
    return (summed / safe[:, None, None, None]).astype(np.float32)


def intensity(u: np.ndarray) -> np.ndarray:
    """Scheme ``i``: per-voxel channel sum of a max-normalized volume."""
    return np.asarray(u).sum(axis=0, dtype=np.float32)


def intensity_normalize(u: np.ndarray, i: np.ndarray, epsilon: float = 1.0) -> np.ndarray:
    """Scheme ``n``: u / (epsilon + i); with epsilon = 1 values stay in [0, 1)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return (np.asarray(u) / (epsilon + np.asarray(i))[None]).astype(np.float32)


@dataclass(frozen=True)
class EncoderConfig:
    """Descriptor shape parameters.

    ``sigma`` is in voxels; when omitted it defaults to 4 * W / 64, keeping
    the Gaussian footprint proportional to the grid (4 voxels at a 64-grid
    is the smoothness/sparsity sweet spot).
    """

    grid: GridSpec
    sigma: float | None = None
    channels: int = 3
    scheme: str = "nui"
    truncation_radius: float = 3.0
    epsilon: float = 1.0

    def __post_init__(self):
        if self.sigma is None:
            object.__setattr__(self, "sigma", 4.0 * self.grid.dims[0] / 64.0)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.channels < 2:
            raise ValueError("channels must be >= 2")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.truncation_radius < 1:
            raise ValueError("truncation_radius must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def config_hash(self) -> str:
        doc = {
            "dims": list(self.grid.dims),
            "scale": list(self.grid.scale),
            "offset": list(self.grid.offset),
            "sigma": self.sigma,
            "channels": self.channels,
            "scheme": self.scheme,
            "truncation_radius": self.truncation_radius,
            "epsilon": self.epsilon,
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.blake2b(blob, digest_size=8).hexdigest()


@dataclass(frozen=True, eq=False)
class DAPotion:
    """Stacked fixed-size descriptor over all joints.

    ``data`` is channel-major float32 of shape (channel_count, W, H, D) with
    joint-major channel order; under ``nui`` each joint contributes the
    blocks [n (C ch), u (C ch), i (1 ch)] in that order.
    """

    scheme: str
    num_joints: int
    channels: int
    dims: tuple[int, int, int]
    data: np.ndarray
    clip_id: str | None = None
    config_hash: str | None = None
    joint_names: tuple[str, ...] | None = None

    def __post_init__(self):
        expected = self.num_joints * channels_per_joint(self.scheme, self.channels)
        data = np.asarray(self.data)
        if data.shape != (expected,) + tuple(self.dims):
            raise ValueError(
                f"descriptor data shape {data.shape} does not match "
                f"{expected} channels over dims {self.dims}"
            )
        if data.dtype != np.float32:
            data = data.astype(np.float32)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.joint_names is not None:
            if len(self.joint_names) != self.num_joints:
                raise ValueError("joint_names length does not match num_joints")
            object.__setattr__(self, "joint_names", tuple(self.joint_names))

    @property
    def channel_count(self) -> int:
        return self.data.shape[0]

    def joint_block(self, j: int) -> np.ndarray:
        m = channels_per_joint(self.scheme, self.channels)
        return self.data[j * m : (j + 1) * m]


def encode_joint(track: np.ndarray, config: EncoderConfig) -> np.ndarray:
    """Aggregation volume(s) for one joint's (T, 3) voxel-space trajectory."""
    T = track.shape[0]
    C = config.channels
    dims = config.grid.dims
    summed = np.zeros((C,) + dims, dtype=np.float32)
    for t in range(T):
        slices, values = _gaussian_patch(track[t], dims, config.sigma, config.truncation_radius)
        if slices is None:
            continue
        code = color_code(t + 1, T, C)
        for c in np.nonzero(code)[0]:
            summed[c][slices] += np.float32(code[c]) * values

    u = max_normalize(summed)
    if config.scheme == "u":
        return u
    i = intensity(u)
    if config.scheme == "i":
        return i[None]
    n = intensity_normalize(u, i, config.epsilon)
    if config.scheme == "n":
        return n
    return np.concatenate([n, u, i[None]], axis=0)


def encode_clip(poses: GridPoseSequence, config: EncoderConfig, clip_id: str | None = None) -> DAPotion:
    """Encode a gridded clip into the stacked multi-joint descriptor."""
    if tuple(poses.grid.dims) != tuple(config.grid.dims):
        raise ValueError(
            f"pose grid dims {poses.grid.dims} do not match encoder dims {config.grid.dims}"
        )
    blocks = [encode_joint(poses.positions[:, j, :], config) for j in range(poses.num_joints)]
    data = np.concatenate(blocks, axis=0)
    return DAPotion(
        scheme=config.scheme,
        num_joints=poses.num_joints,
        channels=config.channels,
        dims=config.grid.dims,
        data=data,
        clip_id=clip_id,
        config_hash=config.config_hash(),
        joint_names=poses.joint_names,
    )


def encode_pose_sequence(seq: PoseSequence, config: EncoderConfig, clip_id: str | None = None) -> DAPotion:
    """Full path from a parsed clip: bbox transform (if boxed), grid, encode.

    The grid's affine map is rebuilt from the clip's own image size so that
    clips of different resolutions land on the same voxel dims.
    """
    image_seq = to_image_frame(seq)
    grid = GridSpec.for_image(config.grid.dims, image_seq.image_size)
    gridded = normalize_to_grid(image_seq, grid)
    return encode_clip(gridded, config, clip_id=clip_id)


def resample(volume: np.ndarray, target_dims) -> np.ndarray:
    """Channelwise corner-aligned trilinear resize of a (C, W, H, D) volume."""
    volume = np.asarray(volume)
    if volume.ndim != 4:
        raise ValueError("expected a channel-major (C, W, H, D) volume")
    target = tuple(int(d) for d in target_dims)
    if len(target) != 3 or any(d < 2 for d in target):
        raise ValueError("target dims must be three values >= 2")
    if target == volume.shape[1:]:
        return volume.copy()
    out = volume.astype(np.float32)
    for axis, m in enumerate(target, start=1):
        out = _resample_axis(out, axis, m)
    return out


def _resample_axis(arr: np.ndarray, axis: int, m: int) -> np.ndarray:
    n = arr.shape[axis]
    if n == m:
        return arr
    pos = np.linspace(0.0, n - 1.0, m)  # corner-aligned sample points
    lo = np.floor(pos).astype(int)
    lo = np.minimum(lo, n - 2) if n > 1 else np.zeros_like(lo)
    frac = (pos - lo).astype(np.float32)
    left = np.take(arr, lo, axis=axis)
    right = np.take(arr, np.minimum(lo + 1, n - 1), axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = m
    frac = frac.reshape(shape)
    return left * (1.0 - frac) + right * frac


def collapse_depth(data: np.ndarray) -> np.ndarray:
    """Marginalize the depth axis (sum over z), emulating a 2D pose-motion pipeline."""
    data = np.asarray(data)
    if data.ndim < 2:
        raise ValueError("expected an array with a trailing depth axis")
    return data.sum(axis=-1, dtype=np.float32)
