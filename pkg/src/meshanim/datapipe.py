"""Preprocessing of raw animations into training-ready clips and signals.

Clips are standardized to a fixed frame count, their expression progression
is measured from per-frame deformation magnitude, apex extremeness is
measured at landmark vertices and normalized per class over the corpus, and
those pieces combine into the per-frame conditioning signal.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .errors import DataError
from .mesh import AnimationClip, DeformationField

__all__ = [
    "ExpressionSignal",
    "ExtremenessFactor",
    "DatasetSplit",
    "standardize_frames",
    "standardize_clip",
    "progression_signal",
    "extremeness_factor",
    "corpus_extremeness",
    "make_expression_signal",
    "split_subjectwise",
    "save_signal",
    "load_signal",
    "load_landmarks",
    "save_landmarks",
]

_MODES = ("global", "local", "varying")


@dataclass(frozen=True)
class ExpressionSignal:
    """K conditioning rows; row i is ``p_i * onehot(expression_class)``."""

    rows: np.ndarray
    expression_class: int
    mode: str

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DataError("signal rows must be K x M")
        if self.mode not in _MODES:
            raise DataError(f"mode must be one of {_MODES}")
        if not 0 <= self.expression_class < rows.shape[1]:
            raise DataError("expression class out of range")
        off_channel = np.delete(rows, self.expression_class, axis=1)
        if np.any(off_channel != 0.0):
            raise DataError("signal rows must be zero outside the class channel")
        if np.any(rows < 0.0) or np.any(rows > 1.0):
            raise DataError("signal values must lie in [0, 1]")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def num_frames(self) -> int:
        return self.rows.shape[0]

    @property
    def n_classes(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class ExtremenessFactor:
    """Apex landmark deformation, raw and normalized by the class maximum."""

    raw: float
    normalized: float

    def __post_init__(self):
        if self.raw < 0:
            raise DataError("raw extremeness must be >= 0")
        if not 0.0 < self.normalized <= 1.0:
            raise DataError("normalized extremeness must lie in (0, 1]")


@dataclass(frozen=True)
class DatasetSplit:
    train_subjects: tuple
    test_subjects: tuple

    def __post_init__(self):
        overlap = set(self.train_subjects) & set(self.test_subjects)
        if overlap:
            raise DataError(f"subjects in both splits: {sorted(overlap)}")


# ---------------------------------------------------------------------------
# frame-count standardization


def _gap(a: DeformationField, b: DeformationField) -> float:
    """Mean per-vertex L2 distance between two frames."""
    return float(np.linalg.norm(a.offsets - b.offsets, axis=1).mean())


def standardize_frames(frames, k_target: int) -> list:
    """Resample a frame list to exactly ``k_target`` frames.

    Long clips greedily drop the interior frame whose removal loses the
    least consecutive-difference mass; short clips repeatedly insert the
    linear midpoint into the widest consecutive gap. First and last frames
    are always preserved exactly.
    """
    if k_target < 2:
        raise DataError("k_target must be >= 2")
    frames = list(frames)
    if len(frames) < 2:
        raise DataError("need at least 2 frames")

    while len(frames) > k_target:
        gaps = [_gap(frames[j], frames[j + 1]) for j in range(len(frames) - 1)]
        # removal cost of interior frame j: mass lost when its two gaps fuse
        best_j, best_cost = None, None
        for j in range(1, len(frames) - 1):
            fused = _gap(frames[j - 1], frames[j + 1])
            cost = gaps[j - 1] + gaps[j] - fused
            if best_cost is None or cost < best_cost:
                best_j, best_cost = j, cost
        frames.pop(best_j)

    while len(frames) < k_target:
        gaps = [_gap(frames[j], frames[j + 1]) for j in range(len(frames) - 1)]
        j = int(np.argmax(gaps))
        mid = DeformationField(
            0.5 * (frames[j].offsets + frames[j + 1].offsets), frames[j].topology_id
        )
        frames.insert(j + 1, mid)
    return frames


def standardize_clip(clip: AnimationClip, k_target: int) -> AnimationClip:
    return AnimationClip(
        neutral=clip.neutral,
        frames=tuple(standardize_frames(clip.frames, k_target)),
        expression_class=clip.expression_class,
        subject_id=clip.subject_id,
    )


# ---------------------------------------------------------------------------
# progression and extremeness


def progression_signal(clip: AnimationClip) -> np.ndarray:
    """Per-frame expression progression p with p_0 = 0, p_{K-1} = 1.

    Raw magnitude is the mean per-vertex offset norm. Smoothing averages
    over a centered window of up to 5 frames, shrunk symmetrically near the
    ends (so already-linear progressions pass through unchanged), then the
    curve is shifted/scaled onto [0, 1] and clamped to be non-decreasing.
    """
    k = clip.num_frames
    raw = np.array([np.linalg.norm(f.offsets, axis=1).mean() for f in clip.frames])
    if raw.max() <= 0.0:
        raise DataError("degenerate clip: no deformation anywhere")

    smoothed = np.empty(k)
    for i in range(k):
        half = min(2, i, k - 1 - i)
        smoothed[i] = raw[i - half : i + half + 1].mean()

    span = smoothed[-1] - smoothed[0]
    if span <= 0.0:
        raise DataError("degenerate clip: no progression from first to last frame")
    p = (smoothed - smoothed[0]) / span
    p = np.maximum.accumulate(p)
    return np.clip(p, 0.0, 1.0)


def extremeness_factor(
    clip: AnimationClip, landmarks, corpus_max_by_class: dict
) -> ExtremenessFactor:
    """Apex landmark deformation normalized by the class maximum."""
    raw = landmark_extremeness(clip, landmarks)
    if clip.expression_class not in corpus_max_by_class:
        raise DataError(
            f"class {clip.expression_class} missing from the corpus maxima"
        )
    top = corpus_max_by_class[clip.expression_class]
    if top <= 0:
        raise DataError(f"non-positive corpus maximum for class {clip.expression_class}")
    return ExtremenessFactor(raw=raw, normalized=raw / top)


def landmark_extremeness(clip: AnimationClip, landmarks) -> float:
    """Mean landmark offset norm at the apex (last) frame."""
    idx = np.asarray(landmarks, dtype=np.int64)
    if idx.size == 0:
        raise DataError("landmark set is empty")
    if idx.min() < 0 or idx.max() >= clip.neutral.n_vertices:
        raise DataError("landmark index out of range")
    apex = clip.frames[-1].offsets
    return float(np.linalg.norm(apex[idx], axis=1).mean())


def corpus_extremeness(clips, landmarks) -> dict:
    """Per-class maximum apex landmark deformation over a training corpus."""
    maxima: dict[int, float] = {}
    for clip in clips:
        raw = landmark_extremeness(clip, landmarks)
        c = clip.expression_class
        maxima[c] = max(maxima.get(c, 0.0), raw)
    return maxima


# ---------------------------------------------------------------------------
# signals and splits


def make_expression_signal(
    expression_class: int,
    p: np.ndarray,
    g: ExtremenessFactor | None,
    mode: str,
    n_classes: int,
    intensity: float | None = None,
    seed: int | None = None,
) -> ExpressionSignal:
    """Combine progression, intensity and class into conditioning rows.

    ``global`` scales the progression by the clip's normalized extremeness;
    ``local`` uses the progression alone; ``varying`` (generation only)
    scales by a caller-supplied intensity, or draws one uniformly from
    (0, 1] when given a seed instead.
    """
    if mode not in _MODES:
        raise DataError(f"mode must be one of {_MODES}")
    if not 0 <= expression_class < n_classes:
        raise DataError(f"class {expression_class} out of range [0, {n_classes})")
    p = np.asarray(p, dtype=np.float64)
    if mode == "global":
        if g is None:
            raise DataError("global mode needs an extremeness factor")
        scale = g.normalized
    elif mode == "local":
        scale = 1.0
    else:
        if intensity is None:
            if seed is None:
                raise DataError("varying mode needs an intensity or a seed")
            intensity = float(1.0 - rng.uniform(seed, "intensity"))
        if not 0.0 < intensity <= 1.0:
            raise DataError("intensity must lie in (0, 1]")
        scale = intensity
    rows = np.zeros((p.shape[0], n_classes))
    rows[:, expression_class] = scale * p
    return ExpressionSignal(rows=rows, expression_class=expression_class, mode=mode)


def split_subjectwise(subject_ids, n_train: int, seed: int) -> DatasetSplit:
    """Deterministic subject-level split into n_train train + rest test."""
    subjects = sorted(set(subject_ids))
    if n_train >= len(subjects):
        raise DataError(f"n_train={n_train} must be < {len(subjects)} subjects")
    if n_train < 1:
        raise DataError("n_train must be >= 1")
    order = rng.permutation(seed, "split", n=len(subjects))
    shuffled = [subjects[i] for i in order]
    return DatasetSplit(
        train_subjects=tuple(sorted(shuffled[:n_train])),
        test_subjects=tuple(sorted(shuffled[n_train:])),
    )


# ---------------------------------------------------------------------------
# text formats


def save_signal(signal: ExpressionSignal, path) -> None:
    """K rows by M columns, space-separated."""
    lines = [" ".join(f"{x:.9f}" for x in row) for row in signal.rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_signal(path, mode: str = "global") -> ExpressionSignal:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            rows.append([float(t) for t in line.split()])
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise DataError(f"malformed signal file: {path}")
    nonzero_cols = np.flatnonzero(np.any(arr != 0.0, axis=0))
    if nonzero_cols.size != 1:
        raise DataError(f"signal must use exactly one class channel: {path}")
    return ExpressionSignal(
        rows=arr, expression_class=int(nonzero_cols[0]), mode=mode
    )


def save_landmarks(indices, path) -> None:
    Path(path).write_text(
        "\n".join(str(int(i)) for i in indices) + "\n", encoding="utf-8"
    )


def load_landmarks(path) -> list[int]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            out.append(int(line))
    if not out:
        raise DataError(f"empty landmark file: {path}")
    return out
