"""Noise-prediction training: loss, exact gradients, Adam, the frame-level loop.

Training draws individual frames, never whole clips: each batch element is an
independent (clip, frame, timestep, noise) draw, all taken from streams keyed
by the global step number, so an interrupted run resumed from a checkpoint
reproduces the uninterrupted parameter trajectory bitwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DataError, NumericError
from .network import DenoiserNetwork, IdentityEncoder
from .schedule import NoiseSchedule, forward_sample

logger = logging.getLogger(__name__)

__all__ = [
    "ParameterSet",
    "OptimizerState",
    "TrainConfig",
    "TrainResult",
    "DiffusionBatchLoss",
    "training_loss",
    "compute_gradients",
    "adam_step",
    "lr_at",
    "train",
]

# A parameter set is an ordered name -> float64 array mapping; networks own
# the arrays and the optimizer updates them in place.
ParameterSet = dict


def training_loss(
    d0, t: int, eps, condition, net: DenoiserNetwork, sched: NoiseSchedule | None = None
) -> float:
    """Squared-error noise-prediction objective for one sample.

    Noises ``d0`` to timestep ``t`` with ``eps``, asks the network for its
    noise estimate and returns the sum over vertices of the squared L2
    difference between the true and estimated noise. When ``sched`` is None
    the schedule previously attached to the network (``net.schedule``) is
    used.
    """
    d0 = np.asarray(d0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if sched is None:
        sched = getattr(net, "schedule", None)
        if sched is None:
            raise DataError("no schedule given and none attached to the network")
    noisy = forward_sample(d0, t, eps, sched)
    eps_hat = net.predict(noisy, t, condition)
    return float(np.sum((eps - eps_hat) ** 2))


class DiffusionBatchLoss:
    """Batch noise-prediction loss with exact reverse-mode gradients.

    The batch is fixed at construction; ``value`` recomputes the loss from
    the network's current parameters (which is what finite-difference
    checking needs) and ``value_and_gradients`` also returns d(loss)/d(param)
    for every parameter, encoder included, averaged over the batch.
    """

    def __init__(self, net: DenoiserNetwork, sched: NoiseSchedule, d0, ts, expr, eps,
                 neutral_coords=None):
        self.net = net
        self.sched = sched
        self.d0 = np.asarray(d0, dtype=np.float64)
        self.ts = np.asarray(ts, dtype=np.int64)
        self.expr = np.asarray(expr, dtype=np.float64)
        self.eps = np.asarray(eps, dtype=np.float64)
        if self.d0.ndim != 3 or self.d0.shape != self.eps.shape:
            raise DataError("d0 and eps must both be (B, N, 3)")
        if net.encoder is not None and neutral_coords is None:
            raise DataError("identity-conditioned network needs neutral coordinates")
        self.neutral_coords = (
            None if neutral_coords is None else np.asarray(neutral_coords, dtype=np.float64)
        )

    def _forward(self):
        ab = self.sched.alpha_bar[self.ts - 1][:, None, None]
        noisy = np.sqrt(ab) * self.d0 + np.sqrt(1.0 - ab) * self.eps
        enc_cache = None
        id_lat = None
        if self.net.encoder is not None:
            id_lat, enc_cache = self.net.encoder.forward_batch(self.neutral_coords)
        cond = self.net.assemble_condition(self.ts, self.expr, id_lat)
        out, cache = self.net.forward_batch(noisy, self.ts, cond)
        return out, cache, enc_cache

    def value(self, params: ParameterSet | None = None) -> float:
        out, _, _ = self._forward()
        b = out.shape[0]
        return float(np.sum((self.eps - out) ** 2) / b)

    def value_and_gradients(self, params: ParameterSet | None = None):
        out, cache, enc_cache = self._forward()
        b = out.shape[0]
        value = float(np.sum((self.eps - out) ** 2) / b)
        dout = 2.0 * (out - self.eps) / b
        grads, dcond = self.net.backward_batch(cache, dout)
        if self.net.encoder is not None:
            d_id = dcond[:, self.net.cfg.n_classes + self.net.cfg.d_t :]
            enc_grads = self.net.encoder.backward_batch(enc_cache, d_id)
            for k, v in enc_grads.items():
                grads[f"enc.{k}"] = v
        self.last_value = value
        return value, grads


def compute_gradients(loss, params: ParameterSet) -> ParameterSet:
    """Exact gradients of a differentiable loss at the current parameters.

    ``loss`` must expose ``value_and_gradients(params)``; the returned dict
    covers exactly the keys of ``params``.
    """
    value, grads = loss.value_and_gradients(params)
    if not np.isfinite(value):
        raise NumericError(f"loss is not finite: {value}")
    missing = set(params) - set(grads)
    if missing:
        raise DataError(f"gradients missing for: {sorted(missing)}")
    for name in params:
        if grads[name].shape != params[name].shape:
            raise DataError(f"gradient shape mismatch for '{name}'")
    return {name: grads[name] for name in params}


@dataclass
class OptimizerState:
    """Adam moments mirroring a parameter set."""

    m: ParameterSet
    v: ParameterSet
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ParameterSet) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: ParameterSet, grads: ParameterSet, state: OptimizerState, lr: float):
    """One bias-corrected Adam update, in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DataError(f"gradient shape mismatch for '{name}'")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 32
    lr_initial: float = 1e-3
    lr_final: float = 1e-4
    seed: int = 0
    t_sampling: str = "uniform"
    steps_per_epoch: int | None = None  # default: ceil(total frames / batch)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise DataError("epochs and batch_size must be positive")
        if self.lr_final > self.lr_initial:
            raise DataError("lr_final must not exceed lr_initial")
        if self.t_sampling != "uniform":
            raise DataError("only uniform timestep sampling is supported")


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Geometric decay from lr_initial (epoch 0) to lr_final (last epoch)."""
    if not 0 <= epoch < cfg.epochs:
        raise DataError(f"epoch {epoch} out of range [0, {cfg.epochs})")
    if cfg.epochs == 1:
        return cfg.lr_initial
    frac = epoch / (cfg.epochs - 1)
    return float(cfg.lr_initial * (cfg.lr_final / cfg.lr_initial) ** frac)


@dataclass
class TrainResult:
    params: ParameterSet
    epoch_losses: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    state: OptimizerState | None = None


class _TrainData:
    """Clips and signals flattened into sampling-ready arrays."""

    def __init__(self, clips, signals, net: DenoiserNetwork):
        if not clips:
            raise DataError("empty dataset")
        if len(clips) != len(signals):
            raise DataError("need one signal per clip")
        self.offsets = []
        self.rows = []
        self.neutral_coords = []
        for clip, sig in zip(clips, signals):
            if clip.neutral.topology_id != net.topology_id:
                raise DataError(f"clip {clip.subject_id} topology does not match network")
            rows = np.asarray(sig.rows, dtype=np.float64)
            if rows.shape[0] != clip.num_frames:
                raise DataError("signal length does not match clip frames")
            self.offsets.append(np.stack([f.offsets for f in clip.frames]))
            self.rows.append(rows)
            self.neutral_coords.append(IdentityEncoder.normalize(clip.neutral.vertices))
        self.n_clips = len(clips)
        self.n_vertices = clips[0].neutral.n_vertices
        self.total_frames = int(sum(o.shape[0] for o in self.offsets))

    def draw_batch(self, seed: int, step: int, batch: int, T: int):
        g = rng.stream(seed, "draw", step)
        clip_ids = g.integers(0, self.n_clips, size=batch)
        frame_ids = np.array(
            [g.integers(0, self.offsets[c].shape[0]) for c in clip_ids]
        )
        ts = g.integers(1, T + 1, size=batch)
        eps = rng.normal(seed, "noise", step, shape=(batch, self.n_vertices, 3))
        d0 = np.stack([self.offsets[c][f] for c, f in zip(clip_ids, frame_ids)])
        expr = np.stack([self.rows[c][f] for c, f in zip(clip_ids, frame_ids)])
        neutral = np.stack([self.neutral_coords[c] for c in clip_ids])
        return d0, ts, expr, eps, neutral


def train(
    clips,
    signals,
    cfg: TrainConfig,
    net: DenoiserNetwork,
    sched: NoiseSchedule,
    state: OptimizerState | None = None,
    start_epoch: int = 0,
    stop_epoch: int | None = None,
    on_epoch=None,
) -> TrainResult:
    """Optimize the network on per-frame draws; deterministic per config.

    Interrupt/resume is exact as long as both runs share one ``cfg`` (the
    learning-rate decay spans ``cfg.epochs``): stop early with
    ``stop_epoch``, checkpoint, then resume with the loaded optimizer
    ``state`` and ``start_epoch``; the parameter trajectory matches an
    uninterrupted run bitwise.
    """
    data = _TrainData(clips, signals, net)
    if state is None:
        state = OptimizerState.for_params(net.params)
    steps_per_epoch = cfg.steps_per_epoch or max(
        1, -(-data.total_frames // cfg.batch_size)
    )
    net.schedule = sched

    result = TrainResult(params=net.params, state=state)
    use_enc = net.encoder is not None
    end_epoch = cfg.epochs if stop_epoch is None else min(stop_epoch, cfg.epochs)
    for epoch in range(start_epoch, end_epoch):
        lr = lr_at(epoch, cfg)
        epoch_losses = []
        for k in range(steps_per_epoch):
            step = epoch * steps_per_epoch + k
            d0, ts, expr, eps, neutral = data.draw_batch(
                cfg.seed, step, cfg.batch_size, sched.T
            )
            loss = DiffusionBatchLoss(
                net, sched, d0, ts, expr, eps, neutral if use_enc else None
            )
            grads = compute_gradients(loss, net.params)
            value = loss.last_value
            adam_step(net.params, grads, state, lr)
            epoch_losses.append(value)
            result.step_losses.append(value)
        result.epoch_losses.append(float(np.mean(epoch_losses)))
        if on_epoch is not None:
            on_epoch(epoch, result.epoch_losses[-1])
        if epoch % 50 == 0 or epoch == cfg.epochs - 1:
            logger.debug("epoch %d: loss %.6g lr %.3g", epoch, result.epoch_losses[-1], lr)
    return result
