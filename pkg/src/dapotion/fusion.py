"""Late fusion of per-class score vectors from independently trained models.

A score file is plain text: a header line declaring the class order, then
one record per clip:

    classes<TAB>catch<TAB>throw<TAB>swing
    clip_0001<TAB>0.91<TAB>0.05<TAB>0.04

Class lists must match byte-for-byte across files fused together.  All
vectors are post-softmax probabilities; averaging probabilities keeps
equal-weight fusion well-posed across heterogeneous models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pose_io import atomic_write_text

_SUM_TOL = 1e-6


def _check_probs(vec: np.ndarray, where: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError(f"{where}: score vector must be one-dimensional")
    if np.any(vec < 0) or not np.all(np.isfinite(vec)):
        raise ValueError(f"{where}: probabilities must be finite and nonnegative")
    if abs(vec.sum() - 1.0) > _SUM_TOL:
        raise ValueError(f"{where}: probabilities sum to {vec.sum():.8f}, not 1")
    return vec


@dataclass(frozen=True)
class ScoreSet:
    """Per-clip class probability vectors from one model."""

    name: str
    class_names: tuple[str, ...]
    scores: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if len(self.class_names) < 2:
            raise ValueError("a score set needs at least two classes")
        checked = {}
        for clip_id, vec in self.scores.items():
            vec = _check_probs(vec, f"{self.name}/{clip_id}")
            if vec.shape[0] != len(self.class_names):
                raise ValueError(f"{self.name}/{clip_id}: expected {len(self.class_names)} scores")
            vec.flags.writeable = False
            checked[clip_id] = vec
        object.__setattr__(self, "scores", checked)

    @property
    def clip_ids(self) -> set[str]:
        return set(self.scores)


def fuse_scores(sets, weights=None) -> ScoreSet:
    """Weighted average of score sets over their common clips.

    Weights are renormalized to sum 1 (default equal); clips missing from
    any set are excluded.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("need at least one score set to fuse")
    classes = sets[0].class_names
    for s in sets[1:]:
        if s.class_names != classes:
            raise ValueError(f"class-list mismatch between {sets[0].name!r} and {s.name!r}")
    if weights is None:
        weights = np.ones(len(sets))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(sets),):
        raise ValueError("weights length must match the number of score sets")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    total = weights.sum()
    if total <= 0:
        raise ValueError("weights must not all be zero")
    weights = weights / total

    common = set.intersection(*(s.clip_ids for s in sets))
    if not common:
        raise ValueError("no clip appears in every score set")
    fused = {}
    for clip_id in sorted(common):
        fused[clip_id] = sum(w * s.scores[clip_id] for w, s in zip(weights, sets))
    return ScoreSet(name="fused", class_names=classes, scores=fused)


def evaluate(scores: ScoreSet, labels: dict[str, str]) -> tuple[float, np.ndarray]:
    """Accuracy and a row-normalized confusion matrix (rows true, cols predicted).

    Argmax ties break toward the lowest class index.  Every scored clip
    must have a label.
    """
    missing = [c for c in scores.scores if c not in labels]
    if missing:
        raise ValueError(f"missing labels for clips: {sorted(missing)[:5]}")
    class_index = {name: i for i, name in enumerate(scores.class_names)}
    n = len(scores.class_names)
    counts = np.zeros((n, n), dtype=np.int64)
    for clip_id, vec in scores.scores.items():
        label = labels[clip_id]
        if label not in class_index:
            raise ValueError(f"label {label!r} for clip {clip_id!r} is not in the class list")
        counts[class_index[label], int(np.argmax(vec))] += 1
    total = counts.sum()
    accuracy = float(np.trace(counts) / total) if total else 0.0
    row_sums = counts.sum(axis=1, keepdims=True)
    confusion = np.divide(counts, row_sums, out=np.zeros((n, n)), where=row_sums > 0)
    return accuracy, confusion


# ---------------------------------------------------------------------------
# score files
# ---------------------------------------------------------------------------


def score_file_text(scores: ScoreSet) -> str:
    lines = ["classes\t" + "\t".join(scores.class_names) + "\n"]
    for clip_id in sorted(scores.scores):
        vec = scores.scores[clip_id]
        lines.append(clip_id + "\t" + "\t".join(f"{p:.9g}" for p in vec) + "\n")
    return "".join(lines)


def write_score_file(path, scores: ScoreSet) -> None:
    atomic_write_text(path, score_file_text(scores))


def read_score_file(path, name: str | None = None) -> ScoreSet:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or not lines[0].startswith("classes\t"):
        raise ValueError(f"{path}: first line must declare 'classes<TAB>...'")
    class_names = tuple(lines[0].split("\t")[1:])
    scores = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != len(class_names) + 1:
            raise ValueError(f"{path}:{lineno}: expected clip id plus {len(class_names)} scores")
        try:
            vec = np.array([float(p) for p in parts[1:]])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: unparsable score value") from None
        scores[parts[0]] = vec
    return ScoreSet(name=name or str(path), class_names=class_names, scores=scores)


def labels_from_manifest(records) -> dict[str, str]:
    """Map clip ids (file stems) to labels from manifest records."""
    import os

    labels = {}
    for path, label in records:
        stem = os.path.splitext(os.path.basename(path))[0]
        labels[stem] = label
    return labels
