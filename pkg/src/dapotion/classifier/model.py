"""The shallow volumetric CNN and its checkpoint format.

Architecture: ``blocks`` convolutional blocks, each a pair of convolutions
(kernel 3 per axis, first stride 1, second stride 2) where every
convolution is followed by dropout, batch normalization, and ReLU in that
order; then global average pooling and a dense softmax head.  Stride-2
steps halve each spatial extent, so inputs must be divisible by
2**blocks per axis.

Checkpoint layout (little-endian):

    magic     4 bytes  b"DAPM"
    version   u16
    cfg_len   u32      followed by that many bytes of canonical config JSON
    n_entries u32
    manifest  per entry: u16 name length, utf-8 name, u8 ndim, u32 dims...
    blobs     float32 arrays concatenated in manifest order
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from ..pose_io import atomic_write_bytes
from .layers import (
    BatchNorm,
    Conv,
    Dense,
    Dropout,
    GlobalAvgPool,
    ReLU,
    softmax,
    softmax_cross_entropy,
)

CHECKPOINT_MAGIC = b"DAPM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ClassifierConfig:
    input_channels: int
    num_classes: int
    spatial_ndim: int = 3
    blocks: int = 3
    convs_per_block: int = 2
    kernel_size: int = 3
    block_strides: tuple[int, ...] = (1, 2)
    filters: tuple[int, ...] = (32, 64, 128)
    dropout_p: float = 0.25
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    epochs: int = 100
    batch_size: int = 8
    lr_init: float = 1e-3
    lr_decay: float = 0.97
    seed: int = 0
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.input_channels < 1 or self.num_classes < 2:
            raise ValueError("need at least one input channel and two classes")
        if self.spatial_ndim not in (2, 3):
            raise ValueError("spatial_ndim must be 2 or 3")
        if len(self.filters) != self.blocks:
            raise ValueError("filters must list one width per block")
        if len(self.block_strides) != self.convs_per_block:
            raise ValueError("block_strides must list one stride per conv in a block")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.lr_init <= 0 or not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_init must be positive and lr_decay in (0, 1]")
        if self.class_names is not None:
            if len(self.class_names) != self.num_classes:
                raise ValueError("class_names length must equal num_classes")
            object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))
        object.__setattr__(self, "block_strides", tuple(int(s) for s in self.block_strides))

    def to_json(self) -> str:
        doc = asdict(self)
        doc["class_names"] = list(self.class_names) if self.class_names else None
        doc["filters"] = list(self.filters)
        doc["block_strides"] = list(self.block_strides)
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ClassifierConfig":
        doc = json.loads(text)
        doc["filters"] = tuple(doc["filters"])
        doc["block_strides"] = tuple(doc["block_strides"])
        if doc.get("class_names") is not None:
            doc["class_names"] = tuple(doc["class_names"])
        return cls(**doc)


class ShallowConvNet:
    """From-scratch CNN over channel-major volumes (or planes for 2D)."""

    def __init__(self, config: ClassifierConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.debug_finite = False
        self.layers: list[tuple[str, object]] = []
        in_ch = config.input_channels
        for b in range(config.blocks):
            out_ch = config.filters[b]
            for k, stride in enumerate(config.block_strides, start=1):
                prefix = f"block{b + 1}.conv{k}"
                self.layers.append(
                    (
                        prefix,
                        Conv(in_ch, out_ch, config.kernel_size, stride, config.spatial_ndim, rng, self.dtype),
                    )
                )
                self.layers.append((f"block{b + 1}.drop{k}", Dropout(config.dropout_p)))
                self.layers.append(
                    (f"block{b + 1}.bn{k}", BatchNorm(out_ch, config.bn_momentum, config.bn_eps, self.dtype))
                )
                self.layers.append((f"block{b + 1}.relu{k}", ReLU()))
                in_ch = out_ch
        self.layers.append(("pool", GlobalAvgPool()))
        self.layers.append(("head", Dense(in_ch, config.num_classes, rng, self.dtype)))
        self.layers[0][1].input_grad = False  # nothing consumes the input's gradient

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers:
            for pname, arr in layer.params().items():
                out[f"{name}.{pname}"] = arr
        return out

    def gradients(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers:
            for pname, arr in layer.grads().items():
                out[f"{name}.{pname}"] = arr
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers:
            for bname, arr in layer.buffers().items():
                out[f"{name}.{bname}"] = arr
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {**self.parameters(), **self.buffers()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        own = self.state()
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, arr in own.items():
            src = np.asarray(state[name], dtype=arr.dtype)
            if src.shape != arr.shape:
                raise ValueError(f"{name}: shape {src.shape} does not match {arr.shape}")
            arr[...] = src

    # -- passes ---------------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        cfg = self.config
        if x.ndim != cfg.spatial_ndim + 2:
            raise ValueError(f"expected (batch, channels, {cfg.spatial_ndim} spatial axes), got {x.shape}")
        if x.shape[1] != cfg.input_channels:
            raise ValueError(f"expected {cfg.input_channels} input channels, got {x.shape[1]}")
        factor = int(np.prod([s for s in cfg.block_strides if s > 1])) ** cfg.blocks
        if factor > 1 and any(n % factor != 0 for n in x.shape[2:]):
            raise ValueError(f"spatial dims {x.shape[2:]} must be divisible by {factor}")
        return np.asarray(x, dtype=self.dtype)

    def forward_logits(self, x: np.ndarray, train: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        out = self._check_input(x)
        for name, layer in self.layers:
            out = layer.forward(out, train, rng)
            if self.debug_finite and not np.all(np.isfinite(out)):
                raise FloatingPointError(f"non-finite activation after {name}")
        return out

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        """Per-sample class probabilities."""
        return softmax(self.forward_logits(x, train, rng))

    def backward_from_logits(self, dlogits: np.ndarray) -> None:
        grad = dlogits
        for _, layer in reversed(self.layers):
            grad = layer.backward(grad)

    def loss_and_gradients(
        self, x: np.ndarray, labels: np.ndarray, rng: np.random.Generator | None = None, train: bool = True
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean cross-entropy plus gradients for every parameter."""
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.shape[0] != x.shape[0]:
            raise ValueError("labels must be one class id per sample")
        if np.any(labels < 0) or np.any(labels >= self.config.num_classes):
            raise ValueError("label out of range")
        logits = self.forward_logits(x, train=train, rng=rng)
        loss, dlogits = softmax_cross_entropy(logits, labels)
        self.backward_from_logits(dlogits)
        return loss, self.gradients()


def init_model(config: ClassifierConfig, seed: int | None = None, dtype=np.float32) -> ShallowConvNet:
    """Xavier-initialized model; deterministic for a given seed."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed if seed is None else seed))
    return ShallowConvNet(config, rng, dtype=dtype)


def predict(model: ShallowConvNet, descriptor: np.ndarray) -> np.ndarray:
    """Eval-mode class probabilities for a single descriptor volume."""
    return model.forward(descriptor[None], train=False)[0]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def checkpoint_bytes(model: ShallowConvNet) -> bytes:
    cfg = model.config.to_json().encode("utf-8")
    state = model.state()
    parts = [CHECKPOINT_MAGIC, struct.pack("<HI", CHECKPOINT_VERSION, len(cfg)), cfg]
    parts.append(struct.pack("<I", len(state)))
    blobs = []
    for name, arr in state.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        blobs.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts + blobs)


def write_checkpoint(path, model: ShallowConvNet) -> None:
    atomic_write_bytes(path, checkpoint_bytes(model))


def read_checkpoint(path, dtype=np.float32) -> ShallowConvNet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad magic, not a checkpoint file")
    version, cfg_len = struct.unpack_from("<HI", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 10
    config = ClassifierConfig.from_json(blob[pos : pos + cfg_len].decode("utf-8"))
    pos += cfg_len
    (n_entries,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    manifest = []
    for _ in range(n_entries):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        manifest.append((name, shape))
    state = {}
    for name, shape in manifest:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(shape)
        state[name] = arr.copy()
        pos += 4 * count
    if pos != len(blob):
        raise ValueError(f"{path}: {len(blob) - pos} trailing bytes after parameter blobs")
    model = init_model(config, dtype=dtype)
    model.load_state(state)
    return model
