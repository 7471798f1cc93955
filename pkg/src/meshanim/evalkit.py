"""Quantitative evaluation: specificity, PCA codes, sequence classification.

The classifier follows the two-stage protocol: deformations are reduced by a
PCA basis fitted on training data, the per-frame codes run through an LSTM,
and the last hidden state passes through two fully connected layers into a
softmax over expression classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import DataError, TopologyError
from .mesh import AnimationClip, TriangleMesh, apply_deformation
from .training import OptimizerState, adam_step

__all__ = [
    "PcaEncoder",
    "SpecificityReport",
    "SequenceClassifier",
    "specificity",
    "error_map",
    "fit_pca",
    "encode_pca",
    "decode_pca",
    "choose_components",
    "clip_codes",
    "train_classifier",
    "classify",
    "evaluate_accuracy",
]


# ---------------------------------------------------------------------------
# specificity


@dataclass(frozen=True)
class SpecificityReport:
    per_frame: np.ndarray  # mm, length K
    average: float  # mm

    def __post_init__(self):
        arr = np.asarray(self.per_frame, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "per_frame", arr)


def error_map(generated: TriangleMesh, reference: TriangleMesh) -> np.ndarray:
    """Per-vertex Euclidean distance (mm) between two frames."""
    if generated.topology_id != reference.topology_id:
        raise TopologyError("frames have different topology")
    return np.linalg.norm(generated.vertices - reference.vertices, axis=1)


def specificity(generated: AnimationClip, reference: AnimationClip) -> SpecificityReport:
    """Per-frame mean vertex distance between two clips of equal length."""
    if generated.num_frames != reference.num_frames:
        raise DataError(
            f"clips have {generated.num_frames} vs {reference.num_frames} frames"
        )
    if generated.neutral.topology_id != reference.neutral.topology_id:
        raise TopologyError("clips have different topology")
    per_frame = np.array(
        [
            error_map(
                apply_deformation(generated.neutral, generated.frames[i]),
                apply_deformation(reference.neutral, reference.frames[i]),
            ).mean()
            for i in range(generated.num_frames)
        ]
    )
    return SpecificityReport(per_frame=per_frame, average=float(per_frame.mean()))


# ---------------------------------------------------------------------------
# PCA over flattened deformations


@dataclass(frozen=True)
class PcaEncoder:
    mean: np.ndarray  # (3N,)
    basis: np.ndarray  # (m, 3N), orthonormal rows
    explained_variance: np.ndarray  # (m,)

    @property
    def m(self) -> int:
        return self.basis.shape[0]


def fit_pca(deformations: np.ndarray, m: int) -> PcaEncoder:
    """Top-m principal directions of flattened deformation samples.

    Rows are samples. The sign of each basis row is fixed by making its
    largest-magnitude coordinate positive, so two fits of the same data are
    identical arrays.
    """
    X = np.asarray(deformations, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("need a (samples, features) matrix with >= 2 samples")
    if not 1 <= m <= min(X.shape):
        raise DataError(f"m={m} out of range [1, {min(X.shape)}]")
    mean = X.mean(axis=0)
    centered = X - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt[:m].copy()
    for row in basis:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    var = (svals[:m] ** 2) / (X.shape[0] - 1)
    return PcaEncoder(mean=mean, basis=basis, explained_variance=var)


def choose_components(deformations: np.ndarray, variance_fraction: float = 0.99) -> int:
    """Smallest component count explaining the requested variance fraction."""
    X = np.asarray(deformations, dtype=np.float64)
    centered = X - X.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    var = svals**2
    total = var.sum()
    if total <= 0:
        raise DataError("data has no variance")
    cum = np.cumsum(var) / total
    return int(np.searchsorted(cum, variance_fraction) + 1)


def _flat(d) -> np.ndarray:
    offsets = d.offsets if hasattr(d, "offsets") else np.asarray(d)
    return np.asarray(offsets, dtype=np.float64).reshape(-1)


def encode_pca(d, enc: PcaEncoder) -> np.ndarray:
    flat = _flat(d)
    if flat.shape[0] != enc.mean.shape[0]:
        raise DataError(
            f"deformation has {flat.shape[0]} values, encoder expects {enc.mean.shape[0]}"
        )
    return enc.basis @ (flat - enc.mean)


def decode_pca(code: np.ndarray, enc: PcaEncoder) -> np.ndarray:
    code = np.asarray(code, dtype=np.float64)
    if code.shape != (enc.m,):
        raise DataError(f"code must have length {enc.m}")
    return enc.mean + code @ enc.basis


def clip_codes(clip: AnimationClip, enc: PcaEncoder) -> np.ndarray:
    """PCA codes of every frame, (K, m)."""
    return np.stack([encode_pca(f, enc) for f in clip.frames])


# ---------------------------------------------------------------------------
# LSTM sequence classifier


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60, 60)))


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class SequenceClassifier:
    """LSTM over per-frame codes, two dense layers, softmax class output."""

    def __init__(self, input_dim: int, n_classes: int, hidden: int = 64, seed: int = 0):
        if n_classes < 2:
            raise DataError("classifier needs at least 2 classes")
        self.input_dim = int(input_dim)
        self.n_classes = int(n_classes)
        self.hidden = int(hidden)
        h = self.hidden
        half = max(1, h // 2)

        def glorot(name, fan_in, fan_out, shape):
            s = rng.stream(seed, "clf-init:" + name)
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return s.uniform(-limit, limit, size=shape)

        b_lstm = np.zeros(4 * h)
        b_lstm[h : 2 * h] = 1.0  # forget-gate bias starts open
        self.params = {
            "Wx": glorot("Wx", input_dim, 4 * h, (input_dim, 4 * h)),
            "Wh": glorot("Wh", h, 4 * h, (h, 4 * h)),
            "b": b_lstm,
            "fc1.W": glorot("fc1.W", h, half, (h, half)),
            "fc1.b": np.zeros(half),
            "fc2.W": glorot("fc2.W", half, n_classes, (half, n_classes)),
            "fc2.b": np.zeros(n_classes),
        }

    def forward_batch(self, seqs: np.ndarray):
        """seqs (B, K, input_dim) -> probabilities (B, n_classes)."""
        p = self.params
        b, k, _ = seqs.shape
        h = self.hidden
        ht = np.zeros((b, h))
        ct = np.zeros((b, h))
        steps = []
        for t in range(k):
            xt = seqs[:, t, :]
            a = xt @ p["Wx"] + ht @ p["Wh"] + p["b"]
            i = _sigmoid(a[:, :h])
            f = _sigmoid(a[:, h : 2 * h])
            g = np.tanh(a[:, 2 * h : 3 * h])
            o = _sigmoid(a[:, 3 * h :])
            c_prev = ct
            h_prev = ht
            ct = f * c_prev + i * g
            ht = o * np.tanh(ct)
            steps.append((xt, h_prev, c_prev, i, f, g, o, ct))
        z1 = ht @ p["fc1.W"] + p["fc1.b"]
        r = np.maximum(z1, 0.0)
        z2 = r @ p["fc2.W"] + p["fc2.b"]
        probs = _softmax(z2)
        return probs, (steps, ht, z1, r)

    def loss_and_gradients(self, seqs: np.ndarray, labels: np.ndarray):
        """Mean cross-entropy over the batch plus exact parameter gradients."""
        p = self.params
        b = seqs.shape[0]
        h = self.hidden
        probs, (steps, h_last, z1, r) = self.forward_batch(seqs)
        picked = probs[np.arange(b), labels]
        loss = float(-np.log(np.maximum(picked, 1e-300)).mean())

        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dz2 = probs.copy()
        dz2[np.arange(b), labels] -= 1.0
        dz2 /= b
        grads["fc2.W"] += r.T @ dz2
        grads["fc2.b"] += dz2.sum(axis=0)
        dr = dz2 @ p["fc2.W"].T
        dz1 = dr * (z1 > 0)
        grads["fc1.W"] += h_last.T @ dz1
        grads["fc1.b"] += dz1.sum(axis=0)
        dh = dz1 @ p["fc1.W"].T
        dc = np.zeros((b, h))
        for xt, h_prev, c_prev, i, f, g, o, ct in reversed(steps):
            tc = np.tanh(ct)
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc**2)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            da = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            grads["Wx"] += xt.T @ da
            grads["Wh"] += h_prev.T @ da
            grads["b"] += da.sum(axis=0)
            dh = da @ p["Wh"].T
            dc = dc * f
        return loss, grads


def train_classifier(
    clips,
    enc: PcaEncoder,
    epochs: int,
    seed: int,
    labels=None,
    hidden: int = 64,
    lr: float = 1e-3,
    batch_size: int = 16,
) -> SequenceClassifier:
    """Fit the sequence classifier on PCA-encoded clips.

    Labels default to each clip's ``expression_class``. Training is plain
    Adam on mean cross-entropy with keyed batch draws, so a (data, seed)
    pair always yields the same parameters.
    """
    clips = list(clips)
    if labels is None:
        labels = [c.expression_class for c in clips]
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    if classes.size < 2:
        raise DataError("training data covers a single class")
    seqs = np.stack([clip_codes(c, enc) for c in clips])
    n_classes = int(labels.max()) + 1

    clf = SequenceClassifier(enc.m, n_classes, hidden=hidden, seed=seed)
    state = OptimizerState.for_params(clf.params)
    n = len(clips)
    batch_size = min(batch_size, n)
    for epoch in range(epochs):
        order = rng.permutation(seed, "clf-epoch", epoch, n=n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            _, grads = clf.loss_and_gradients(seqs[idx], labels[idx])
            adam_step(clf.params, grads, state, lr)
    return clf


def classify(clip: AnimationClip, enc: PcaEncoder, clf: SequenceClassifier):
    """Predicted class index and the full probability vector."""
    codes = clip_codes(clip, enc)
    probs, _ = clf.forward_batch(codes[None])
    return int(np.argmax(probs[0])), probs[0]


def evaluate_accuracy(clips, enc: PcaEncoder, clf: SequenceClassifier, labels=None) -> float:
    clips = list(clips)
    if labels is None:
        labels = [c.expression_class for c in clips]
    hits = sum(
        1 for clip, want in zip(clips, labels) if classify(clip, enc, clf)[0] == want
    )
    return hits / len(clips)
