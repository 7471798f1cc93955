import numpy as np
import pytest

from meshanim.datapipe import make_expression_signal
from meshanim.errors import DataError
from meshanim.network import DenoiserConfig, DenoiserNetwork
from meshanim.sampling import (
    SamplerConfig,
    SampleStats,
    generate_animation,
    sample_noise_bundle,
)
from meshanim.schedule import linear_schedule
from meshanim.synth import icosphere

from helpers import max_consecutive_displacement


def _setup(T=30, K=4, t_s=10, n_classes=3, seed=0, level=0):
    mesh = icosphere(level, 100.0)
    cfg = DenoiserConfig(
        widths=(4, 6), lengths=(3, 4), d_idx=2, d_t=6, n_classes=n_classes, T=T
    )
    net = DenoiserNetwork(mesh.faces, mesh.n_vertices, cfg, seed=seed)
    sched = linear_schedule(T, 1e-4, 0.2)
    signal = make_expression_signal(1, np.linspace(0, 1, K), None, "local", n_classes)
    bundle = sample_noise_bundle(mesh.n_vertices, T, seed=seed)
    return mesh, net, sched, signal, bundle


class _CountingNet:
    """Wraps a network and counts predict calls (independent of the
    sampler's internal accounting)."""

    def __init__(self, net):
        self._net = net
        self.calls = 0

    def __getattr__(self, name):
        return getattr(self._net, name)

    def predict(self, noisy, t, condition):
        self.calls += 1
        return self._net.predict(noisy, t, condition)


class TestEvalCounting:
    def test_formula_holds(self):
        T, K, t_s = 30, 4, 10
        mesh, net, sched, signal, bundle = _setup(T, K, t_s)
        counting = _CountingNet(net)
        stats = SampleStats()
        generate_animation(
            mesh, signal, counting, sched, SamplerConfig(t_s, K), bundle, stats=stats
        )
        want = (T - t_s) + K * t_s
        assert counting.calls == want
        assert stats.denoiser_evals == want

    @pytest.mark.parametrize("T,t_s,K", [(20, 5, 2), (25, 24, 3), (40, 1, 7)])
    def test_formula_for_varied_triples(self, T, t_s, K):
        mesh, net, sched, signal, bundle = _setup(T, K, t_s)
        counting = _CountingNet(net)
        generate_animation(mesh, signal, counting, sched, SamplerConfig(t_s, K), bundle)
        assert counting.calls == (T - t_s) + K * t_s


class TestDeterminism:
    def test_pure_function_of_inputs(self):
        mesh, net, sched, signal, bundle = _setup()
        cfg = SamplerConfig(10, 4)
        a = generate_animation(mesh, signal, net, sched, cfg, bundle)
        b = generate_animation(mesh, signal, net, sched, cfg, bundle)
        for fa, fb in zip(a.frames, b.frames):
            assert fa.offsets.tobytes() == fb.offsets.tobytes()

    def test_identical_condition_rows_identical_frames(self):
        mesh, net, sched, _, bundle = _setup(K=3)
        rows = np.zeros((3, 3))
        rows[:, 1] = 0.6  # all frames share one conditioning row

        class Signal:
            pass

        sig = Signal()
        sig.rows = rows
        sig.expression_class = 1
        clip = generate_animation(
            mesh, sig, net, sched, SamplerConfig(10, 3), bundle
        )
        for f in clip.frames[1:]:
            assert f.offsets.tobytes() == clip.frames[0].offsets.tobytes()

    def test_serial_vs_concurrent_bitwise(self):
        for seed in (0, 1, 2):
            mesh, net, sched, signal, bundle = _setup(seed=seed)
            cfg = SamplerConfig(10, 4)
            serial = generate_animation(mesh, signal, net, sched, cfg, bundle, threads=1)
            threaded = generate_animation(mesh, signal, net, sched, cfg, bundle, threads=4)
            for fa, fb in zip(serial.frames, threaded.frames):
                assert fa.offsets.tobytes() == fb.offsets.tobytes()

    def test_different_bundle_seeds_differ(self):
        mesh, net, sched, signal, _ = _setup()
        cfg = SamplerConfig(10, 4)
        a = generate_animation(
            mesh, signal, net, sched, cfg, sample_noise_bundle(12, 30, seed=1)
        )
        b = generate_animation(
            mesh, signal, net, sched, cfg, sample_noise_bundle(12, 30, seed=2)
        )
        assert not np.array_equal(a.frames[-1].offsets, b.frames[-1].offsets)


class TestNoiseModes:
    def test_shared_noise_smoother_than_independent(self):
        # near-zero denoiser: frame differences come from reverse-step noise
        # alone, so shared z collapses them and independent z does not
        mesh, net, sched, signal, bundle = _setup(T=30, K=4, t_s=10)
        shared = generate_animation(
            mesh, signal, net, sched, SamplerConfig(10, 4, "shared"), bundle
        )
        indep = generate_animation(
            mesh, signal, net, sched, SamplerConfig(10, 4, "independent"), bundle
        )
        assert max_consecutive_displacement(shared) < max_consecutive_displacement(indep)

    def test_invalid_mode_rejected(self):
        with pytest.raises(DataError):
            SamplerConfig(10, 4, "both")


class TestValidation:
    def test_t_s_must_be_below_t(self):
        mesh, net, sched, signal, bundle = _setup()
        with pytest.raises(DataError, match="t_s"):
            generate_animation(mesh, signal, net, sched, SamplerConfig(30, 4), bundle)

    def test_signal_length_must_match_k(self):
        mesh, net, sched, signal, bundle = _setup(K=4)
        with pytest.raises(DataError, match="rows"):
            generate_animation(mesh, signal, net, sched, SamplerConfig(10, 5), bundle)

    def test_topology_mismatch(self):
        mesh, net, sched, signal, bundle = _setup()
        other = icosphere(1, 100.0)
        other_bundle = sample_noise_bundle(other.n_vertices, 30, seed=0)
        with pytest.raises(DataError):
            generate_animation(
                other, signal, net, sched, SamplerConfig(10, 4), other_bundle
            )
