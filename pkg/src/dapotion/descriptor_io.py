"""Binary descriptor files and depth-slice renders.

Descriptor layout (all integers little-endian):

    magic    4 bytes  b"DAPT"
    version  u16      currently 1
    scheme   u8       1=u 2=i 3=n 4=nui
    J        u16      joint count
    C        u8       color channels
    W, H, D  u16 x 3  voxel dims
    channels u32      total channel count (must match scheme * J)
    data     channels * W * H * D float32, channel-major C order
    checksum 8 bytes  blake2b-8 digest of every preceding byte

Slice renders are binary portable graymap (P5) for one channel or portable
pixmap (P6) for exactly three channels, with values scaled from [0, 1] to
[0, 255] (clipped above 1, as intensity channels may exceed it).  Raster
rows run along y and columns along x.
"""

from __future__ import annotations

import hashlib
import os
import struct

import numpy as np

from .encoder import DAPotion, channels_per_joint
from .pose_io import atomic_write_bytes

MAGIC = b"DAPT"
FORMAT_VERSION = 1
_SCHEME_TAGS = {"u": 1, "i": 2, "n": 3, "nui": 4}
_TAG_SCHEMES = {v: k for k, v in _SCHEME_TAGS.items()}

_HEADER = struct.Struct("<HBHBHHHI")  # version, scheme, J, C, W, H, D, channels


def descriptor_bytes(potion: DAPotion) -> bytes:
    head = MAGIC + _HEADER.pack(
        FORMAT_VERSION,
        _SCHEME_TAGS[potion.scheme],
        potion.num_joints,
        potion.channels,
        *potion.dims,
        potion.channel_count,
    )
    payload = head + np.ascontiguousarray(potion.data, dtype="<f4").tobytes()
    return payload + hashlib.blake2b(payload, digest_size=8).digest()


def write_descriptor(path, potion: DAPotion) -> None:
    atomic_write_bytes(path, descriptor_bytes(potion))


def read_descriptor(path) -> DAPotion:
    with open(path, "rb") as fh:
        blob = fh.read()
    return descriptor_from_bytes(blob, name=os.fspath(path))


def descriptor_from_bytes(blob: bytes, name: str = "<bytes>") -> DAPotion:
    if len(blob) < len(MAGIC) + _HEADER.size + 8:
        raise ValueError(f"{name}: truncated descriptor file")
    if blob[:4] != MAGIC:
        raise ValueError(f"{name}: bad magic, not a descriptor file")
    payload, checksum = blob[:-8], blob[-8:]
    if hashlib.blake2b(payload, digest_size=8).digest() != checksum:
        raise ValueError(f"{name}: checksum mismatch, file is corrupt")
    version, tag, J, C, W, H, D, channels = _HEADER.unpack_from(blob, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{name}: unsupported descriptor version {version}")
    if tag not in _TAG_SCHEMES:
        raise ValueError(f"{name}: unknown scheme tag {tag}")
    scheme = _TAG_SCHEMES[tag]
    if channels != J * channels_per_joint(scheme, C):
        raise ValueError(f"{name}: channel count {channels} inconsistent with scheme")
    expected = channels * W * H * D * 4
    data_bytes = blob[4 + _HEADER.size : -8]
    if len(data_bytes) != expected:
        raise ValueError(f"{name}: voxel payload has {len(data_bytes)} bytes, expected {expected}")
    data = np.frombuffer(data_bytes, dtype="<f4").reshape(channels, W, H, D)
    return DAPotion(
        scheme=scheme,
        num_joints=J,
        channels=C,
        dims=(W, H, D),
        data=data.copy(),
    )


# ---------------------------------------------------------------------------
# depth-slice rendering
# ---------------------------------------------------------------------------


def render_slice(block: np.ndarray, depth_index: int) -> bytes:
    """Render channels x W x H x D at one depth index to PGM (1 ch) or PPM (3 ch)."""
    block = np.asarray(block)
    if block.ndim != 4:
        raise ValueError("expected a channel-major (C, W, H, D) block")
    channels, width, height, depth = block.shape
    if not 0 <= depth_index < depth:
        raise ValueError(f"depth index {depth_index} out of range 0..{depth - 1}")
    if channels not in (1, 3):
        raise ValueError("renderable blocks have 1 (graymap) or 3 (pixmap) channels")
    plane = block[:, :, :, depth_index]  # (C, W, H)
    pixels = np.clip(plane, 0.0, 1.0) * 255.0
    pixels = np.rint(pixels).astype(np.uint8)
    pixels = pixels.transpose(2, 1, 0)  # rows=y, cols=x, then channel
    kind = b"P5" if channels == 1 else b"P6"
    header = kind + f"\n{width} {height}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def render_block_for(potion: DAPotion, joint: int = 0) -> np.ndarray:
    """Pick the renderable channel block of one joint.

    Scheme ``i`` renders as a graymap; ``u``/``n`` need C == 3 to map onto
    RGB; ``nui`` renders its normalized (n) sub-block.
    """
    if not 0 <= joint < potion.num_joints:
        raise ValueError(f"joint {joint} out of range 0..{potion.num_joints - 1}")
    block = potion.joint_block(joint)
    if potion.scheme == "i":
        return block
    if potion.scheme == "nui":
        block = block[: potion.channels]
    if block.shape[0] != 3:
        raise ValueError(
            f"scheme {potion.scheme!r} with C={potion.channels} is not renderable; "
            "color renders need C=3"
        )
    return block


def write_slice_files(potion: DAPotion, depth_indices, out_dir, joint: int = 0, stem: str | None = None) -> list[str]:
    """One image file per requested depth index; returns the written paths."""
    block = render_block_for(potion, joint=joint)
    ext = "pgm" if block.shape[0] == 1 else "ppm"
    os.makedirs(out_dir, exist_ok=True)
    stem = stem or potion.clip_id or "descriptor"
    paths = []
    for d in depth_indices:
        path = os.path.join(out_dir, f"{stem}_j{joint}_z{int(d):03d}.{ext}")
        atomic_write_bytes(path, render_slice(block, int(d)))
        paths.append(path)
    return paths
