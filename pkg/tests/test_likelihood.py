import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgm.errors import NonPositiveShape, NonPositiveTime
from lgm.likelihood import (
    bernoulli_logit_terms,
    pc_prior_alpha_logdensity,
    weibull_hazard,
    weibull_shape_distance,
    weibull_shape_kld,
    weibull_terms,
)
from reference import kld_bruteforce, kld_closed_form

STEP = 1e-5
ETAS = np.linspace(-6.0, 6.0, 49)
ALPHAS = (0.5, 1.0, 1.5, 2.0)
TIMES = (0.1, 0.5, 1.0)


def _rel(num, an):
    return np.abs(num - an) / np.maximum(np.abs(an), 1e-3)


def fd_errors(f):
    """Relative errors of d1 against FD of ll, and of d2 against FD of d1."""
    lp, lm = f(ETAS + STEP), f(ETAS - STEP)
    t = f(ETAS)
    e1 = _rel((lp.ll - lm.ll) / (2 * STEP), t.d1)
    e2 = _rel((lp.d1 - lm.d1) / (2 * STEP), t.d2)
    return max(e1.max(), e2.max())


class TestBernoulliLogit:
    def test_symmetry_point(self):
        t = bernoulli_logit_terms(0.0, 1)
        assert t.ll == pytest.approx(-math.log(2.0), abs=1e-15)
        assert t.d1 == 0.5
        assert t.d2 == -0.25

    def test_saturation_without_overflow(self):
        t = bernoulli_logit_terms(30.0, 1)
        assert t.ll == pytest.approx(-9.357622968839299e-14, rel=1e-10)
        assert t.d1 == pytest.approx(9.357622968839299e-14, rel=1e-10)
        big = bernoulli_logit_terms(800.0, 0)
        assert big.ll == -800.0 and np.isfinite(big.d1) and np.isfinite(big.d2)

    def test_single_point_finite_differences(self):
        f = lambda e: bernoulli_logit_terms(e, 0)
        num = (f(-1.3 + STEP).ll - f(-1.3 - STEP).ll) / (2 * STEP)
        assert abs(num - f(-1.3).d1) / abs(f(-1.3).d1) < 1e-6

    @pytest.mark.parametrize("y", [0, 1])
    def test_derivatives_on_grid(self, y):
        assert fd_errors(lambda e: bernoulli_logit_terms(e, y)) < 1e-6

    @given(st.floats(-50, 50, allow_nan=False))
    def test_label_flip(self, eta):
        a = bernoulli_logit_terms(eta, 1).ll
        b = bernoulli_logit_terms(-eta, 0).ll
        assert abs(a - b) <= 1e-12

    @given(st.floats(-700, 700, allow_nan=False), st.sampled_from([0, 1]))
    def test_log_concave(self, eta, y):
        t = bernoulli_logit_terms(eta, y)
        assert t.d2 <= 0 and np.isfinite(t.ll) and np.isfinite(t.d1)


class TestWeibull:
    def test_unit_exponential(self):
        t = weibull_terms(0.0, 1.0, 1.0, 1)
        assert (t.ll, t.d1, t.d2) == (-1.0, 0.0, -1.0)

    def test_censored_exponential(self):
        assert weibull_terms(0.0, 1.0, 2.0, 0).ll == -2.0

    def test_shape_two(self):
        assert weibull_terms(0.0, 2.0, 1.0, 1).ll == pytest.approx(math.log(2.0) - 1.0, abs=1e-15)

    @pytest.mark.parametrize("alpha", ALPHAS)
    @pytest.mark.parametrize("t", TIMES)
    @pytest.mark.parametrize("event", [0, 1])
    def test_derivatives_on_grid(self, alpha, t, event):
        assert fd_errors(lambda e: weibull_terms(e, alpha, t, event)) < 1e-6

    @given(
        st.floats(-6, 6, allow_nan=False),
        st.floats(0.01, 5, allow_nan=False),
        st.sampled_from([0, 1]),
    )
    def test_alpha_one_is_exponential(self, eta, t, event):
        ll = weibull_terms(eta, 1.0, t, event).ll
        # same exp routine on both sides; math.exp and numpy can differ by one ulp
        assert ll == event * eta - np.exp(np.float64(eta)) * t

    def test_hazard_monotone_in_t(self):
        t = np.linspace(0.05, 3.0, 200)
        assert np.all(np.diff(weibull_hazard(t, 0.2, 1.5)) > 0)
        assert np.all(np.diff(weibull_hazard(t, 0.2, 0.7)) < 0)
        assert np.allclose(np.diff(weibull_hazard(t, 0.2, 1.0)), 0.0)

    def test_argument_errors(self):
        with pytest.raises(NonPositiveTime):
            weibull_terms(0.0, 1.0, 0.0, 1)
        with pytest.raises(NonPositiveShape):
            weibull_terms(0.0, -1.0, 1.0, 1)
        with pytest.raises(NonPositiveShape):
            weibull_shape_kld(0.0)


class TestPCPrior:
    def test_zero_distance_at_base_model(self):
        assert weibull_shape_kld(1.0) == 0.0
        assert weibull_shape_distance(1.0) == 0.0
        # density is highest at the base model
        assert pc_prior_alpha_logdensity(0.0) > pc_prior_alpha_logdensity(0.5)
        assert pc_prior_alpha_logdensity(0.0) > pc_prior_alpha_logdensity(-0.5)

    def test_distance_at_two_against_bruteforce(self):
        ref = math.sqrt(2.0 * kld_bruteforce(2.0, nodes=1_000_000))
        assert weibull_shape_distance(2.0) == pytest.approx(ref, rel=1e-8)

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 0.9, 1.1, 2.0, 7.0])
    def test_kld_closed_form(self, alpha):
        assert weibull_shape_kld(alpha) == pytest.approx(kld_closed_form(alpha), rel=1e-9)

    def test_total_mass(self):
        xs = np.linspace(-30.0, 30.0, 6001)
        dens = np.exp([pc_prior_alpha_logdensity(float(x), 5.0) for x in xs])
        assert abs(np.trapezoid(dens, xs) - 1.0) < 1e-3

    def test_rate_must_be_positive(self):
        with pytest.raises(ValueError):
            pc_prior_alpha_logdensity(0.0, 0.0)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.05, 10.0))
    def test_density_decreases_away_from_base(self, r):
        near = pc_prior_alpha_logdensity(0.1 * r)
        far = pc_prior_alpha_logdensity(0.1 * r + 2.0)
        assert far < near
