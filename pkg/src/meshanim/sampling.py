"""Reverse-process sampling of whole animations.

One animation uses one noise realization: a single starting noise and a
single reverse-step noise sequence shared by every frame, so frames differ
only through their conditioning rows. The first frame is denoised over the
full range t = T..1; its intermediate state at the late-start step t_s seeds
all frames, which then run only t = t_s..1 and may do so in parallel. Total
denoiser evaluations are therefore (T - t_s) + K * t_s.

``independent`` mode (fresh reverse-step noise per frame) exists only as the
ablation baseline for the temporal-smoothness tests.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DataError, NumericError, TopologyError
from .mesh import AnimationClip, DeformationField, TriangleMesh
from .network import ConditioningVector, DenoiserNetwork
from .schedule import NoiseSchedule

__all__ = [
    "NoiseBundle",
    "SamplerConfig",
    "SampleStats",
    "sample_noise_bundle",
    "ddpm_step",
    "generate_animation",
]

_MODES = ("shared", "independent")


class NoiseBundle:
    """Noise for one sampling run: starting eps and one z per step t = T..2.

    ``z(1)`` is always the zero array. Arrays may be materialized up front
    or generated on demand from the keyed streams; both views agree bitwise.
    """

    def __init__(self, n_vertices: int, T: int, seed: int, materialize: bool = True):
        if T < 2:
            raise DataError("bundle needs T >= 2")
        self.n_vertices = int(n_vertices)
        self.T = int(T)
        self.seed = int(seed)
        self._zero = np.zeros((self.n_vertices, 3))
        self._zero.setflags(write=False)
        self.epsilon = rng.normal(seed, "eps", shape=(self.n_vertices, 3))
        self.epsilon.setflags(write=False)
        self._z: dict[int, np.ndarray] | None = None
        if materialize:
            self._z = {t: self._draw_z(t) for t in range(2, self.T + 1)}
            for arr in self._z.values():
                arr.setflags(write=False)

    def _draw_z(self, t: int) -> np.ndarray:
        return rng.normal(self.seed, "z", t, shape=(self.n_vertices, 3))

    def z(self, t: int) -> np.ndarray:
        """Shared reverse-step noise for step t; zeros at t = 1."""
        if not 1 <= t <= self.T:
            raise DataError(f"timestep {t} out of range [1, {self.T}]")
        if t == 1:
            return self._zero
        if self._z is not None:
            return self._z[t]
        return self._draw_z(t)

    def frame_z(self, t: int, frame: int) -> np.ndarray:
        """Per-frame reverse-step noise for the independent-mode baseline."""
        if not 1 <= t <= self.T:
            raise DataError(f"timestep {t} out of range [1, {self.T}]")
        if t == 1:
            return self._zero
        return rng.normal(self.seed, "z-indep", frame, t, shape=(self.n_vertices, 3))


def sample_noise_bundle(N: int, T: int, seed: int, materialize: bool = True) -> NoiseBundle:
    """Draw the noise bundle for one animation from keyed streams."""
    return NoiseBundle(N, T, seed, materialize=materialize)


@dataclass(frozen=True)
class SamplerConfig:
    t_s: int
    K: int
    noise_mode: str = "shared"

    def __post_init__(self):
        if self.noise_mode not in _MODES:
            raise DataError(f"noise_mode must be one of {_MODES}")
        if self.K < 1:
            raise DataError("K must be >= 1")
        if self.t_s < 1:
            raise DataError("t_s must be >= 1")


@dataclass
class SampleStats:
    denoiser_evals: int = 0
    per_frame_evals: list = field(default_factory=list)


def ddpm_step(
    d_t: np.ndarray, t: int, eps_hat: np.ndarray, z_t: np.ndarray, sched: NoiseSchedule
) -> np.ndarray:
    """One reverse step from t to t-1.

    ``(d_t - (1 - a_t) / sqrt(1 - abar_t) * eps_hat) / sqrt(a_t) + sigma_t z``.
    The final step (t = 1) must receive zero z.
    """
    d_t = np.asarray(d_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    z_t = np.asarray(z_t, dtype=np.float64)
    if d_t.shape != eps_hat.shape or d_t.shape != z_t.shape:
        raise DataError("d_t, eps_hat and z_t must share one shape")
    a = sched.alpha_at(t)
    ab = sched.alpha_bar_at(t)
    if t == 1 and np.any(z_t != 0.0):
        raise DataError("the final reverse step (t=1) requires zero z")
    out = (d_t - ((1.0 - a) / np.sqrt(1.0 - ab)) * eps_hat) / np.sqrt(a)
    out += sched.sigma_at(t) * z_t
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite reverse step at t={t}")
    return out


def _frame_trajectory(start, t_s, cond, net, sched, noise_of):
    d = start
    evals = 0
    for t in range(t_s, 0, -1):
        eps_hat = net.predict(d, t, cond)
        d = ddpm_step(d, t, eps_hat, noise_of(t), sched)
        evals += 1
    return d, evals


def generate_animation(
    neutral: TriangleMesh,
    E,
    net: DenoiserNetwork,
    sched: NoiseSchedule,
    cfg: SamplerConfig,
    bundle: NoiseBundle,
    threads: int = 1,
    subject_id: str = "generated",
    stats: SampleStats | None = None,
) -> AnimationClip:
    """Denoise one animation of ``cfg.K`` frames conditioned on signal ``E``.

    ``E`` provides ``rows`` (K x n_classes) and ``expression_class``. Frames
    beyond the warm-up share the cached late-start state and are computed in
    a thread pool when ``threads > 1``; results are identical for any thread
    count. The internal evaluation counter is checked against the closed
    form (T - t_s) + K * t_s.
    """
    rows = np.asarray(E.rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] != cfg.K:
        raise DataError(f"signal must have {cfg.K} rows, got {rows.shape}")
    if rows.shape[1] != net.cfg.n_classes:
        raise DataError(
            f"signal has {rows.shape[1]} channels, network expects {net.cfg.n_classes}"
        )
    if neutral.topology_id != net.topology_id:
        raise TopologyError("neutral mesh topology does not match the network")
    if neutral.n_vertices != bundle.n_vertices:
        raise DataError("noise bundle does not match the mesh size")
    if sched.T != net.cfg.T or sched.T != bundle.T:
        raise DataError("schedule, network and bundle disagree on T")
    if not cfg.t_s < sched.T:
        raise DataError(f"t_s={cfg.t_s} must be smaller than T={sched.T}")

    id_lat = net.encoder.encode(neutral) if net.encoder is not None else None
    conds = [
        ConditioningVector(expression_stage=rows[k], identity_latent=id_lat)
        for k in range(cfg.K)
    ]

    # Warm-up: full-range denoising of frame 0 down to the late-start state.
    d = np.array(bundle.epsilon)
    warm_evals = 0
    for t in range(sched.T, cfg.t_s, -1):
        eps_hat = net.predict(d, t, conds[0])
        d = ddpm_step(d, t, eps_hat, bundle.z(t), sched)
        warm_evals += 1
    cached = d
    cached.setflags(write=False)

    shared = cfg.noise_mode == "shared"

    def run_frame(k: int):
        noise_of = bundle.z if shared else (lambda t: bundle.frame_z(t, k))
        return _frame_trajectory(np.array(cached), cfg.t_s, conds[k], net, sched, noise_of)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_frame, range(cfg.K)))
    else:
        results = [run_frame(k) for k in range(cfg.K)]

    total = warm_evals + sum(e for _, e in results)
    expected = (sched.T - cfg.t_s) + cfg.K * cfg.t_s
    if total != expected:
        raise NumericError(
            f"denoiser evaluation count {total} != expected {expected}"
        )
    if stats is not None:
        stats.denoiser_evals = total
        stats.per_frame_evals = [e for _, e in results]

    frames = tuple(DeformationField(dk, neutral.topology_id) for dk, _ in results)
    return AnimationClip(
        neutral=neutral,
        frames=frames,
        expression_class=int(E.expression_class),
        subject_id=subject_id,
    )
