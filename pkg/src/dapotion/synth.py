"""Synthetic labeled pose clips for desk-scale benchmarking.

Six classes of joint trajectories, built so that two of the class pairs,
(circle_xy, circle_xz) and (zigzag_xy, zigzag_xz), share the same x/y
trajectory and differ only in depth.  A classifier that collapses the depth
axis cannot tell the members of a pair apart, while a depth-aware one can;
that is exactly the contrast the benchmark is meant to expose.

All randomness flows from the spec seed through ``numpy`` SeedSequences, so
clips, datasets, and manifests are byte-reproducible.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .pose_io import COORD_RANGE, PoseSequence, write_manifest, write_pose_file

CLASS_IDS = ("circle_xy", "circle_xz", "line_x", "line_z", "zigzag_xy", "zigzag_xz")

# Classes whose x/y trajectories coincide and only depth separates them.
DEPTH_PAIRS = (("circle_xy", "circle_xz"), ("zigzag_xy", "zigzag_xz"))

_CENTER = COORD_RANGE / 2.0


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic clip."""

    class_id: str
    num_frames: int = 24
    num_joints: int = 4
    amplitude: float = 60.0
    noise_std: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.class_id not in CLASS_IDS:
            raise ValueError(f"unknown class_id {self.class_id!r}; expected one of {CLASS_IDS}")
        if self.num_frames < 2:
            raise ValueError("num_frames must be >= 2")
        if self.num_joints < 1:
            raise ValueError("num_joints must be >= 1")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")


def _base_waveforms(class_id: str, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-scale (u, v) path for parameter t in [0, 1)."""
    if class_id.startswith("circle"):
        theta = 2.0 * np.pi * t
        return np.cos(theta), np.sin(theta)
    if class_id.startswith("line"):
        return 2.0 * t - 1.0, np.zeros_like(t)
    # zigzag: steady advance in u, triangle wave in v (three full teeth)
    tri = 2.0 * np.abs(2.0 * ((3.0 * t) % 1.0) - 1.0) - 1.0
    return 2.0 * t - 1.0, tri


def generate_clip(spec: SynthSpec) -> PoseSequence:
    """Deterministically generate one labeled clip in the image frame.

    Joints trace the class path with evenly staggered phase offsets; the RNG
    is consumed identically for every class so that equal seeds give the
    depth-pair classes bit-identical x/y coordinates.
    """
    T, J = spec.num_frames, spec.num_joints
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))

    t = np.arange(T, dtype=np.float64) / T  # (T,)
    phases = np.arange(J, dtype=np.float64) / (2.0 * J)  # stagger joints along the path
    tj = (t[:, None] + phases[None, :]) % 1.0  # (T, J)

    u, v = _base_waveforms(spec.class_id, tj)
    x = _CENTER + spec.amplitude * u
    y = _CENTER + spec.amplitude * v

    if spec.class_id == "line_z":
        # motion along depth only: park x at the center
        x = np.full_like(x, _CENTER)
        z = _CENTER + spec.amplitude * (2.0 * tj - 1.0)
    elif spec.class_id.endswith("_xz"):
        # depth copies the in-plane waveform, x/y match the _xy partner
        z = _CENTER + spec.amplitude * v
    else:
        z = np.full_like(x, _CENTER)

    positions = np.stack([x, y, z], axis=-1)  # (T, J, 3)
    positions += rng.normal(0.0, 1.0, size=positions.shape) * spec.noise_std
    np.clip(positions, 0.0, np.nextafter(COORD_RANGE, 0.0), out=positions)

    return PoseSequence(
        positions=positions,
        image_size=(int(COORD_RANGE), int(COORD_RANGE)),
        frame="image",
        label=spec.class_id,
    )


def generate_dataset(
    classes,
    n_per_class: int,
    split: float,
    seed: int,
    out_dir,
) -> tuple[str, str]:
    """Write clip files plus train/test manifests; returns the manifest paths.

    ``classes`` is a list of SynthSpec templates (their seeds are ignored;
    per-clip seeds are derived from ``seed`` and the clip index).  The split
    is exact per class and train/test are disjoint.
    """
    classes = list(classes)
    if not classes:
        raise ValueError("empty class list")
    if len({t.class_id for t in classes}) != len(classes):
        raise ValueError("duplicate class_id among templates")
    if n_per_class < 2:
        raise ValueError("n_per_class must be >= 2")
    if not (0.0 < split < 1.0):
        raise ValueError("split must lie strictly between 0 and 1")

    os.makedirs(out_dir, exist_ok=True)
    n_train = int(round(n_per_class * split))
    n_train = min(max(n_train, 1), n_per_class - 1)

    split_rng = np.random.default_rng(np.random.SeedSequence([seed, len(classes)]))
    train_records: list[tuple[str, str]] = []
    test_records: list[tuple[str, str]] = []
    clip_index = 0
    for template in classes:
        train_ids = set(split_rng.permutation(n_per_class)[:n_train].tolist())
        for local_idx in range(n_per_class):
            spec = SynthSpec(
                class_id=template.class_id,
                num_frames=template.num_frames,
                num_joints=template.num_joints,
                amplitude=template.amplitude,
                noise_std=template.noise_std,
                seed=_derive_seed(seed, clip_index),
            )
            clip = generate_clip(spec)
            name = f"{spec.class_id}_{local_idx:04d}.json"
            write_pose_file(os.path.join(out_dir, name), clip)
            record = (name, spec.class_id)
            if local_idx in train_ids:
                train_records.append(record)
            else:
                test_records.append(record)
            clip_index += 1

    train_path = os.path.join(out_dir, "train.tsv")
    test_path = os.path.join(out_dir, "test.tsv")
    write_manifest(train_path, train_records)
    write_manifest(test_path, test_records)
    return train_path, test_path


def _derive_seed(seed: int, clip_index: int) -> int:
    # one entropy stream per clip so clips can be generated concurrently
    return int(np.random.SeedSequence([seed, clip_index]).generate_state(1)[0])
