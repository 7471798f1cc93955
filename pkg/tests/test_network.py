import numpy as np
import pytest

from meshanim.errors import DataError, TopologyError
from meshanim.network import (
    ConditioningVector,
    DenoiserConfig,
    DenoiserNetwork,
    IdentityEncoder,
    SpiralConvWeights,
    denoise,
    encode_identity,
    spiral_conv,
)
from meshanim.spirals import build_spirals
from meshanim.synth import icosphere, synth_dataset


def _zero_weights(l, c_in, c_out, d):
    return SpiralConvWeights(
        W=np.zeros((l * c_in, c_out)),
        b=np.zeros(c_out),
        Wg=np.zeros((d, c_out)),
        bg=np.zeros(c_out),
        Wb=np.zeros((d, c_out)),
        bb=np.zeros(c_out),
    )


def _tiny_net(mesh, seed=0, d_id=0, T=10):
    cfg = DenoiserConfig(
        widths=(4, 6), lengths=(3, 4), d_idx=2, d_t=5, n_classes=3, T=T, d_id=d_id
    )
    return DenoiserNetwork(mesh.faces, mesh.n_vertices, cfg, seed=seed)


class TestSpiralConvOp:
    def test_zero_everything_gives_zero(self, fan):
        table = build_spirals(fan.faces, 6, 4)
        w = _zero_weights(4, 1, 2, 3)
        out = spiral_conv(np.ones((6, 1)), table, w, np.ones(3), activate=False)
        assert np.all(out == 0.0)

    def test_no_condition_equals_zero_gate(self, fan):
        table = build_spirals(fan.faces, 6, 4)
        g = np.random.default_rng(0)
        w = _zero_weights(4, 2, 3, 5)
        w.W = g.standard_normal(w.W.shape)
        w.b = g.standard_normal(3)
        feats = g.standard_normal((6, 2))
        plain = spiral_conv(feats, table, w, None)
        gated = spiral_conv(feats, table, w, g.standard_normal(5))  # Wg=Wb=0
        assert np.array_equal(plain, gated)

    def test_hand_computed_fan(self, fan):
        # C_in = C_out = 1, L = 6: out[v] = sum_j W[j] * feats[spiral[v][j]]
        table = build_spirals(fan.faces, 6, 6)
        w = _zero_weights(6, 1, 1, 1)
        w.W = np.arange(1.0, 7.0).reshape(6, 1)
        feats = np.array([[10.0], [1.0], [2.0], [3.0], [4.0], [5.0]])
        out = spiral_conv(feats, table, w, None, activate=False)
        # row 0 spiral is [0,1,2,3,4,5]
        want0 = 1 * 10 + 2 * 1 + 3 * 2 + 4 * 3 + 5 * 4 + 6 * 5
        assert out[0, 0] == pytest.approx(want0)
        # row 2 spiral: [2, 1, 0, 3, 5, 4] (ring walk from min neighbor 1)
        seq = table.sequences[2]
        want2 = sum(w.W[j, 0] * feats[seq[j], 0] for j in range(6))
        assert out[2, 0] == pytest.approx(want2)

    def test_gate_and_bias_modulate(self, fan):
        table = build_spirals(fan.faces, 6, 3)
        g = np.random.default_rng(1)
        w = _zero_weights(3, 1, 2, 2)
        w.W = g.standard_normal(w.W.shape)
        w.Wg = g.standard_normal(w.Wg.shape)
        w.Wb = g.standard_normal(w.Wb.shape)
        feats = g.standard_normal((6, 1))
        c = g.standard_normal(2)
        plain = spiral_conv(feats, table, w, None, activate=False)
        gam = c @ w.Wg
        bet = c @ w.Wb
        got = spiral_conv(feats, table, w, c, activate=False)
        assert np.allclose(got, plain * (1 + gam) + bet)


class TestDenoiserNetwork:
    def test_monotonicity_enforced(self):
        with pytest.raises(DataError, match="widths"):
            DenoiserConfig(widths=(8, 4), lengths=(3, 3))
        with pytest.raises(DataError, match="lengths"):
            DenoiserConfig(widths=(4, 8), lengths=(4, 3))

    def test_deterministic_output(self, ico1):
        net = _tiny_net(ico1)
        g = np.random.default_rng(0)
        x = g.standard_normal((ico1.n_vertices, 3))
        cond = ConditioningVector(expression_stage=np.array([1.0, 0.0, 0.0]))
        a = denoise(x, 3, cond, net)
        b = denoise(x, 3, cond, net)
        assert np.array_equal(a, b)

    def test_different_timesteps_differ(self, ico1):
        net = _tiny_net(ico1)
        g = np.random.default_rng(0)
        x = g.standard_normal((ico1.n_vertices, 3))
        cond = ConditioningVector(expression_stage=np.array([0.0, 1.0, 0.0]))
        assert not np.array_equal(denoise(x, 2, cond, net), denoise(x, 9, cond, net))

    @pytest.mark.parametrize("level,n", [(0, 12), (1, 42), (2, 162)])
    def test_output_shape_matches_input(self, level, n):
        mesh = icosphere(level)
        net = _tiny_net(mesh)
        x = np.random.default_rng(1).standard_normal((n, 3))
        cond = ConditioningVector(expression_stage=np.zeros(3))
        assert denoise(x, 1, cond, net).shape == (n, 3)

    def test_t_out_of_range(self, ico1):
        net = _tiny_net(ico1)
        x = np.zeros((ico1.n_vertices, 3))
        cond = ConditioningVector(expression_stage=np.zeros(3))
        with pytest.raises(DataError, match="out of range"):
            denoise(x, 0, cond, net)
        with pytest.raises(DataError, match="out of range"):
            denoise(x, 11, cond, net)

    def test_same_seed_same_parameters(self, ico1):
        a = _tiny_net(ico1, seed=7)
        b = _tiny_net(ico1, seed=7)
        for name in a.params:
            assert np.array_equal(a.params[name], b.params[name])

    def test_finite_outputs_over_many_random_evaluations(self, ico1):
        # bounded-domain robustness: no NaN/Inf across 1000 evaluations
        net = _tiny_net(ico1, T=1000)
        g = np.random.default_rng(5)
        b = 1000
        x = g.standard_normal((b, ico1.n_vertices, 3)) * g.uniform(0.1, 50.0, (b, 1, 1))
        ts = g.integers(1, 1001, b)
        expr = g.random((b, 3))
        cond = net.assemble_condition(ts, expr)
        out, _ = net.forward_batch(x, ts, cond)
        assert np.all(np.isfinite(out))

    def test_relabeling_equivariance(self, ico1):
        # permute vertex labels; relabel table, embeddings and inputs to match
        net = _tiny_net(ico1)
        n = ico1.n_vertices
        g = np.random.default_rng(3)
        perm = g.permutation(n)  # new_index = perm[old_index]
        inv = np.argsort(perm)

        x = g.standard_normal((n, 3))
        cond_vec = ConditioningVector(expression_stage=np.array([0.3, 0.0, 0.7]))
        base = denoise(x, 4, cond_vec, net)

        relabeled = _tiny_net(ico1)  # same seed: same weights
        for i, table in enumerate(net.tables):
            seq = table.sequences.copy()
            live = seq != table.pad_sentinel
            seq[live] = perm[seq[live]]
            seq[~live] = n
            relabeled.tables[i] = type(table)(seq[inv], n)
        relabeled.params["idx_emb"][...] = net.params["idx_emb"][inv]

        out = denoise(x[inv], 4, cond_vec, relabeled)
        assert np.allclose(out, base[inv], atol=1e-12)


class TestIdentityEncoder:
    def test_deterministic_and_fixed_length(self, ico1):
        enc = IdentityEncoder(ico1.faces, ico1.n_vertices, d_id=5, seed=1)
        a = encode_identity(ico1, enc)
        b = encode_identity(ico1, enc)
        assert a.shape == (5,)
        assert np.array_equal(a, b)

    def test_output_length_independent_of_mesh_size(self):
        for level in (0, 1):
            mesh = icosphere(level)
            enc = IdentityEncoder(mesh.faces, mesh.n_vertices, d_id=7, seed=0)
            assert encode_identity(mesh, enc).shape == (7,)

    def test_distinct_subjects_distinct_latents(self):
        clips = synth_dataset(2, 2, 3, 42, seed=9)
        s0 = clips[0].neutral
        s1 = clips[2].neutral
        enc = IdentityEncoder(s0.faces, s0.n_vertices, d_id=6, seed=0)
        d = np.linalg.norm(encode_identity(s0, enc) - encode_identity(s1, enc))
        assert d > 0.0

    def test_topology_mismatch(self, ico1, fan):
        enc = IdentityEncoder(ico1.faces, ico1.n_vertices, d_id=4, seed=0)
        with pytest.raises(TopologyError):
            encode_identity(fan, enc)
