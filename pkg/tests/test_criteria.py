import dataclasses
import math

import numpy as np
import pytest

from lgm.criteria import MIN_DRAWS, compute_dic, compute_scores, compute_waic, split_mcse
from lgm.domain import ModelSpec, validate_dataset
from lgm.errors import InsufficientDraws
from lgm.graph import parse_adjacency
from lgm.laplace import fit
from lgm.oracle import mcmc_sample
from reference import logit_loglik
from synth import dataset, simulated

ONE = parse_adjacency("r:")
BALANCED = [1, 0] * 500


def intercept_fit(y):
    spec = ModelSpec("logit")
    data = validate_dataset({"region": ["r"] * len(y), "y": y}, spec, ONE)
    return spec, data, fit(spec, data, ONE)


def frozen(res):
    """The same fit with every Gaussian collapsed onto its mode."""
    out = dataclasses.replace(res)
    out.components = [dataclasses.replace(ga, factor=None, _var=None) for ga in res.components]
    return out


class TestIntercept:
    def test_effective_parameters_near_one(self):
        spec, data, res = intercept_fit(BALANCED)
        dic, waic = compute_scores(res, spec, data, ONE, 2000, 0)
        assert 0.7 <= dic.effective_params <= 1.3
        assert abs(waic.score - dic.score) < 2.0

    def test_against_mcmc_dic(self):
        spec, data, res = intercept_fit(BALANCED)
        chain = mcmc_sample(spec, data, ONE, iters=40_000, seed=2)
        b = chain.column("(Intercept)")
        y = np.array(BALANCED, dtype=float)
        dev = -2.0 * logit_loglik(b[:, None], y)
        p_d = dev.mean() + 2.0 * logit_loglik(np.array([b.mean()]), y)
        dic = compute_dic(res, spec, data, ONE)
        assert abs(dic.effective_params - p_d) < 0.25
        assert abs(dic.score - (dev.mean() + p_d)) < 0.5

    def test_zero_variance_fit(self):
        spec, data, res = intercept_fit(BALANCED)
        dic, waic = compute_scores(frozen(res), spec, data, ONE, MIN_DRAWS, 0)
        assert abs(dic.effective_params) < 1e-9
        assert abs(waic.effective_params) < 1e-9
        plug = -2.0 * float(logit_loglik(res.latent_mean[:1], np.array(BALANCED, dtype=float)))
        assert waic.score == pytest.approx(plug, abs=1e-8)

    def test_too_few_draws(self):
        spec, data, res = intercept_fit(BALANCED)
        with pytest.raises(InsufficientDraws):
            compute_waic(res, spec, data, ONE, draws=MIN_DRAWS - 1)

    def test_reproducible_given_seed(self):
        spec, data, res = intercept_fit([1, 0, 0, 1, 1, 0, 0, 0] * 20)
        a = compute_scores(res, spec, data, ONE, 600, 5)
        b = compute_scores(res, spec, data, ONE, 600, 5)
        assert a == b
        assert a[0].mc_draws == 600 and a[0].seed == 5


@pytest.fixture(scope="module")
def fits():
    sim = simulated(J=30, n=3000, seed=21, tau=2.0)
    out = {}
    for effect in ("none", "iid", "leroux"):
        spec, data = dataset(sim, "logit", effect)
        out[effect] = (spec, data, fit(spec, data, sim.graph), sim.graph)
    return out


class TestSpatial:
    def test_spatial_beats_none(self, fits):
        s = {k: compute_scores(r, sp, d, g, 2000, 0) for k, (sp, d, r, g) in fits.items()}
        assert s["leroux"][0].score < s["none"][0].score
        assert s["leroux"][1].score < s["none"][1].score
        for dic, waic in s.values():
            assert waic.effective_params >= 0 and math.isfinite(dic.effective_params)

    def test_seed_invariance(self, fits):
        sp, d, r, g = fits["leroux"]
        a = compute_scores(r, sp, d, g, 1000, 0)
        b = compute_scores(r, sp, d, g, 1000, 99)
        se_dic, se_waic = split_mcse(r, sp, d, g, 1000, 0)
        # the difference of two independent estimates has sqrt(2) times the error
        assert abs(a[0].score - b[0].score) < 3 * math.sqrt(2) * se_dic
        assert abs(a[1].score - b[1].score) < 3 * math.sqrt(2) * se_waic


def test_superfluous_effect_adds_parameters():
    sim = simulated(effect="iid", J=20, n=3000, seed=22, tau=1e6)
    scores = {}
    for effect in ("none", "iid"):
        spec, data = dataset(sim, "logit", effect)
        res = fit(spec, data, sim.graph)
        scores[effect] = (compute_scores(res, spec, data, sim.graph, 1000, 0), split_mcse(res, spec, data, sim.graph, 1000, 0))
    (dn, wn), (en, _) = scores["none"]
    (di, wi), (ei, _) = scores["iid"]
    assert di.effective_params >= dn.effective_params - 3 * math.hypot(en, ei)
    assert wi.effective_params >= wn.effective_params - 0.5
