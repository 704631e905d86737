"""Training-time augmentation of descriptor volumes.

Each sample gets a random affine warp (rotation about the volume center
plus a continuous translation, trilinearly resampled with zero padding),
then independent flips along the y and z axes.  When the descriptor carries
joint mirror-pair metadata, a y-axis flip also swaps the paired joints'
channel blocks so left/right semantics follow the geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..encoder import DAPotion, channels_per_joint
from ..pose_io import mirror_pairs


@dataclass(frozen=True)
class AugmentConfig:
    """Magnitudes for the random affine and flips.

    Translation is in voxels and should scale with the grid; ``for_grid``
    applies the 4-voxels-per-64 default.
    """

    max_rotation_deg: float = 15.0
    max_translation: float = 4.0
    flip_prob_y: float = 0.5
    flip_prob_z: float = 0.5

    def __post_init__(self):
        if self.max_rotation_deg < 0 or self.max_translation < 0:
            raise ValueError("augmentation magnitudes must be nonnegative")
        for p in (self.flip_prob_y, self.flip_prob_z):
            if not 0.0 <= p <= 1.0:
                raise ValueError("flip probabilities must lie in [0, 1]")

    @classmethod
    def for_grid(cls, dims, max_rotation_deg: float = 15.0, flip_prob_y: float = 0.5, flip_prob_z: float = 0.5):
        return cls(
            max_rotation_deg=max_rotation_deg,
            max_translation=4.0 * dims[0] / 64.0,
            flip_prob_y=flip_prob_y,
            flip_prob_z=flip_prob_z,
        )


def _rotation_matrix(angles_rad: np.ndarray, ndim: int) -> np.ndarray:
    if ndim == 2:
        c, s = np.cos(angles_rad[0]), np.sin(angles_rad[0])
        return np.array([[c, -s], [s, c]])
    ax, ay, az = angles_rad
    rx = np.array([[1, 0, 0], [0, np.cos(ax), -np.sin(ax)], [0, np.sin(ax), np.cos(ax)]])
    ry = np.array([[np.cos(ay), 0, np.sin(ay)], [0, 1, 0], [-np.sin(ay), 0, np.cos(ay)]])
    rz = np.array([[np.cos(az), -np.sin(az), 0], [np.sin(az), np.cos(az), 0], [0, 0, 1]])
    return rx @ ry @ rz


def augment_volume(
    data: np.ndarray,
    aug: AugmentConfig,
    rng: np.random.Generator,
    flip_channel_perm: np.ndarray | None = None,
    channel_upper: np.ndarray | None = None,
) -> np.ndarray:
    """Augment one channel-major (C, *spatial) sample with 2 or 3 spatial axes.

    The rng is consumed in a fixed order (angles, translation, two flip
    draws) regardless of the magnitudes, so training streams stay aligned
    across configuration changes.
    """
    data = np.asarray(data)
    ndim = data.ndim - 1
    if ndim not in (2, 3):
        raise ValueError("expected (C, W, H) or (C, W, H, D) data")
    n_angles = 1 if ndim == 2 else 3
    angles = rng.uniform(-1.0, 1.0, size=n_angles) * np.deg2rad(aug.max_rotation_deg)
    translation = rng.uniform(-1.0, 1.0, size=ndim) * aug.max_translation
    flip_draws = rng.random(2)
    flip_y = flip_draws[0] < aug.flip_prob_y
    flip_z = ndim == 3 and flip_draws[1] < aug.flip_prob_z

    out = data
    if np.any(angles != 0.0) or np.any(translation != 0.0):
        rot = _rotation_matrix(angles, ndim)
        center = (np.asarray(data.shape[1:], dtype=np.float64) - 1.0) / 2.0
        # ndimage maps output voxel o to input matrix @ o + offset
        matrix = rot.T
        offset = center - matrix @ (center + translation)
        out = np.empty_like(data)
        for c in range(data.shape[0]):
            ndimage.affine_transform(
                data[c], matrix, offset=offset, output=out[c], order=1, mode="constant", cval=0.0
            )
    if flip_y:
        out = out[:, :, ::-1]
        if flip_channel_perm is not None:
            out = out[flip_channel_perm]
    if flip_z:
        out = out[:, :, :, ::-1]
    out = np.ascontiguousarray(out)
    if channel_upper is not None:
        shape = (data.shape[0],) + (1,) * ndim
        np.clip(out, 0.0, channel_upper.reshape(shape).astype(out.dtype), out=out)
    else:
        np.clip(out, 0.0, None, out=out)
    return out


def flip_channel_permutation(potion_or_names, scheme: str | None = None, channels: int | None = None) -> np.ndarray | None:
    """Channel permutation applied on a y-axis flip, or None when no pairs exist.

    Accepts a DAPotion, or explicit joint names plus scheme and channel
    count.  Paired joints swap whole per-joint channel blocks.
    """
    if isinstance(potion_or_names, DAPotion):
        names = potion_or_names.joint_names
        scheme = potion_or_names.scheme
        channels = potion_or_names.channels
        num_joints = potion_or_names.num_joints
    else:
        names = tuple(potion_or_names) if potion_or_names else None
        num_joints = len(names) if names else 0
    if not names:
        return None
    pairs = mirror_pairs(names)
    if not pairs:
        return None
    block = channels_per_joint(scheme, channels)
    joint_order = np.arange(num_joints)
    for a, b in pairs:
        joint_order[a], joint_order[b] = joint_order[b], joint_order[a]
    perm = (joint_order[:, None] * block + np.arange(block)[None, :]).reshape(-1)
    return perm


def channel_upper_bounds(scheme: str, channels: int, num_joints: int) -> np.ndarray:
    """Legal per-channel maxima: 1 for u/n channels, C for intensity channels."""
    per_joint = {
        "u": [1.0] * channels,
        "n": [1.0] * channels,
        "i": [float(channels)],
        "nui": [1.0] * (2 * channels) + [float(channels)],
    }[scheme]
    return np.asarray(per_joint * num_joints, dtype=np.float64)


def augment(potion: DAPotion, aug: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Augment a descriptor, honoring its mirror metadata and value ranges."""
    return augment_volume(
        potion.data,
        aug,
        rng,
        flip_channel_perm=flip_channel_permutation(potion),
        channel_upper=channel_upper_bounds(potion.scheme, potion.channels, potion.num_joints),
    )
