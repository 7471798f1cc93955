import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshanim.errors import DataError
from meshanim.schedule import alpha_bar_recompute, forward_sample, linear_schedule

# Cumulative product of (1 - beta_t) for the default schedule
# (T=1000, 1e-4 .. 0.02), evaluated with 60-digit arithmetic via mpmath.
ALPHA_BAR_1000 = 4.0358297653756833148e-05
ALPHA_BAR_500 = 7.8587242881778237343e-02


def test_default_schedule_endpoints():
    s = linear_schedule(1000, 1e-4, 0.02)
    assert s.beta_at(1) == 1e-4
    assert s.beta_at(1000) == 0.02


def test_alpha_bar_first_step_single_factor():
    s = linear_schedule(1000, 1e-4, 0.02)
    assert s.alpha_bar_at(1) == pytest.approx(0.9999, abs=0)


def test_alpha_bar_matches_high_precision_oracle():
    s = linear_schedule(1000, 1e-4, 0.02)
    assert s.alpha_bar_at(1000) == pytest.approx(ALPHA_BAR_1000, rel=1e-10)
    assert s.alpha_bar_at(500) == pytest.approx(ALPHA_BAR_500, rel=1e-10)


def test_oracle_constant_reproducible_with_mpmath():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 60
    b1, bT = mpmath.mpf("1e-4"), mpmath.mpf("0.02")
    prod = mpmath.mpf(1)
    for t in range(1000):
        prod *= 1 - (b1 + (bT - b1) * t / 999)
    assert float(prod) == pytest.approx(ALPHA_BAR_1000, rel=1e-15)


def test_compensated_recomputation_agrees():
    s = linear_schedule(1000, 1e-4, 0.02)
    again = alpha_bar_recompute(s)
    rel = np.abs(again - s.alpha_bar) / s.alpha_bar
    assert rel.max() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(
    st.integers(2, 400),
    st.floats(1e-6, 1e-3),
    st.floats(2e-3, 0.5),
)
def test_monotonicity_properties(T, b1, bT):
    s = linear_schedule(T, b1, bT)
    assert np.all(np.diff(s.beta) > 0)
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert s.alpha_bar_at(T) < s.alpha_bar_at(1)
    rel = np.abs(alpha_bar_recompute(s) - s.alpha_bar) / s.alpha_bar
    assert rel.max() <= 1e-12


def test_invalid_ranges():
    with pytest.raises(DataError):
        linear_schedule(1, 1e-4, 0.02)
    with pytest.raises(DataError):
        linear_schedule(10, 0.0, 0.02)
    with pytest.raises(DataError):
        linear_schedule(10, 0.03, 0.02)
    with pytest.raises(DataError):
        linear_schedule(10, 0.1, 1.0)


class TestForwardSample:
    def setup_method(self):
        self.sched = linear_schedule(100, 1e-4, 0.2)

    def test_no_noise_branch(self):
        d0 = np.random.default_rng(0).standard_normal((5, 3))
        got = forward_sample(d0, 40, np.zeros_like(d0), self.sched)
        assert np.allclose(got, np.sqrt(self.sched.alpha_bar_at(40)) * d0)

    def test_pure_noise_branch(self):
        eps = np.random.default_rng(1).standard_normal((5, 3))
        got = forward_sample(np.zeros_like(eps), 70, eps, self.sched)
        assert np.allclose(got, np.sqrt(1 - self.sched.alpha_bar_at(70)) * eps)

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            forward_sample(np.zeros((4, 3)), 5, np.zeros((5, 3)), self.sched)

    def test_marginal_statistics(self):
        # standardized residuals of the closed-form marginal are N(0, 1)
        g = np.random.default_rng(7)
        d0 = g.standard_normal((1, 3))
        t = self.sched.T
        n = 20000
        eps = g.standard_normal((n, 1, 3))
        ab = self.sched.alpha_bar_at(t)
        samples = np.array([forward_sample(d0, t, e, self.sched) for e in eps])
        mean = samples.mean(axis=0)[0]
        var = samples.var(axis=0, ddof=1)[0]
        se_mean = np.sqrt((1 - ab) / n)
        se_var = (1 - ab) * np.sqrt(2.0 / (n - 1))
        assert np.all(np.abs(mean - np.sqrt(ab) * d0[0]) <= 3 * se_mean)
        assert np.all(np.abs(var - (1 - ab)) <= 3 * se_var)
