"""Training loop: shuffled mini-batches, augmentation, Adam, decaying LR.

All randomness (shuffling, augmentation, dropout) flows from one seeded
generator consumed in a fixed order, so equal seeds give bit-identical
checkpoints and histories.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .augment import AugmentConfig, augment_volume
from .model import ClassifierConfig, ShallowConvNet, init_model
from .optim import Adam, exponential_lr


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_accuracy: float | None


def _stack_dataset(dataset) -> tuple[np.ndarray, np.ndarray]:
    volumes, labels = zip(*dataset)
    x = np.stack([np.asarray(v, dtype=np.float32) for v in volumes])
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty dataset")
    return x, y


def evaluate_accuracy(model: ShallowConvNet, dataset, batch_size: int = 16) -> float:
    """Fraction of samples whose argmax probability matches the label."""
    x, y = _stack_dataset(dataset)
    hits = 0
    for start in range(0, x.shape[0], batch_size):
        probs = model.forward(x[start : start + batch_size], train=False)
        hits += int((probs.argmax(axis=1) == y[start : start + batch_size]).sum())
    return hits / x.shape[0]


def train(
    train_set,
    val_set=None,
    config: ClassifierConfig | None = None,
    augment_config: AugmentConfig | None = None,
    flip_channel_perm: np.ndarray | None = None,
    channel_upper: np.ndarray | None = None,
    dtype=np.float32,
) -> tuple[ShallowConvNet, list[EpochStats]]:
    """Train a fresh model on (volume, label) pairs; returns model + history.

    ``augment_config=None`` disables augmentation.  Descriptors must all
    share one shape; labels are integer class ids in [0, num_classes).
    """
    if config is None:
        raise ValueError("a ClassifierConfig is required")
    x, y = _stack_dataset(train_set)
    if x.shape[1] != config.input_channels:
        raise ValueError(f"descriptors have {x.shape[1]} channels, config expects {config.input_channels}")

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7261696E]))
    model = init_model(config, dtype=dtype)
    optimizer = Adam(model.parameters())
    history: list[EpochStats] = []

    n = x.shape[0]
    batch = max(1, config.batch_size)
    for epoch in range(config.epochs):
        lr = exponential_lr(config.lr_init, config.lr_decay, epoch)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            xb = x[idx]
            if augment_config is not None:
                xb = np.stack(
                    [
                        augment_volume(
                            sample,
                            augment_config,
                            rng,
                            flip_channel_perm=flip_channel_perm,
                            channel_upper=channel_upper,
                        )
                        for sample in xb
                    ]
                )
            loss, grads = model.loss_and_gradients(xb, y[idx], rng=rng)
            optimizer.step(grads, lr)
            losses.append(loss)
        val_acc = evaluate_accuracy(model, val_set) if val_set else None
        history.append(EpochStats(epoch=epoch, lr=lr, train_loss=float(np.mean(losses)), val_accuracy=val_acc))
    return model, history


def history_csv(history) -> str:
    """Comma-separated history rows: epoch, lr, train_loss, val_accuracy."""
    buf = io.StringIO()
    buf.write("epoch,lr,train_loss,val_accuracy\n")
    for row in history:
        val = "" if row.val_accuracy is None else repr(row.val_accuracy)
        buf.write(f"{row.epoch},{row.lr!r},{row.train_loss!r},{val}\n")
    return buf.getvalue()
