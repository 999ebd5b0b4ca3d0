import math

import numpy as np
import pytest
from scipy.special import digamma

from lgm.domain import ModelSpec, PriorSet, validate_dataset
from lgm.errors import DegenerateProposal, GuardRailExceeded
from lgm.graph import lattice_graph, parse_adjacency
from lgm.oracle import batch_means_mcse, mcmc_sample, natural_hyper_draws
from reference import intercept_logit_quadrature

ONE = parse_adjacency("r:")


def intercept_data(y, spec):
    return validate_dataset({"region": ["r"] * len(y), "y": list(y)}, spec, ONE)


def test_logit_intercept_against_quadrature():
    spec = ModelSpec("logit", priors=PriorSet(intercept_precision=0.01))
    data = intercept_data([1, 0], spec)
    chain = mcmc_sample(spec, data, ONE, iters=100_000, seed=3)
    b = chain.column("(Intercept)")
    ref = intercept_logit_quadrature([1, 0], intercept_precision=0.01)
    assert abs(b.mean() - ref) < 3 * batch_means_mcse(b)
    for rate in chain.acceptance_rates.values():
        assert 0 < rate < 1


def test_exponential_intercept_concentrates():
    spec = ModelSpec("weibull", fixed={"alpha": 1.0})
    rng = np.random.default_rng(1)
    t = rng.exponential(1 / 0.5, size=400)
    event = (t < 3.0).astype(int)
    t = np.minimum(t, 3.0)
    data = validate_dataset({"region": ["r"] * t.size, "time": t, "event": event}, spec, ONE)
    chain = mcmc_sample(spec, data, ONE, iters=40_000, seed=4)
    b = chain.column("(Intercept)")
    d, S = event.sum(), data.time.sum()
    # exact posterior of log rate under a flat prior: log Gamma(d, S)
    assert abs(b.mean() - (digamma(d) - math.log(S))) < 3 * batch_means_mcse(b) + 1e-3
    assert abs(b.mean() - math.log(d / S)) < 0.01


def test_same_seed_same_chain():
    spec = ModelSpec("logit", effect="iid")
    g = parse_adjacency("a: b\nb: a")
    data = validate_dataset({"region": ["a", "a", "b", "b", "b"], "y": [1, 0, 1, 1, 0]}, spec, g)
    a = mcmc_sample(spec, data, g, iters=5000, seed=7, burn_in=2000)
    b = mcmc_sample(spec, data, g, iters=5000, seed=7, burn_in=2000)
    assert np.array_equal(a.draws, b.draws)
    assert a.names == ("(Intercept)", "gamma[a]", "gamma[b]", "theta[tau]")


def test_prior_only_moments():
    g = lattice_graph(2, 3)
    spec = ModelSpec("logit", ("x",), "leroux", fixed={"tau": 2.0},
                     priors=PriorSet(beta_precision=1.0, intercept_precision=4.0))
    rows = {"region": list(g.ids), "x": [0.0] * 6, "y": [0, 1] * 3}
    data = validate_dataset(rows, spec, g)
    chain = mcmc_sample(spec, data, g, iters=1_000_000, seed=0, likelihood=False)
    b0, b1, lphi = chain.column("(Intercept)"), chain.column("x"), chain.column("theta[phi]")
    for x, mean, var in ((b0, 0.0, 0.25), (b1, 0.0, 1.0), (lphi, 0.0, 10.0)):
        assert abs(x.mean() - mean) < 3 * batch_means_mcse(x)
        assert x.var() == pytest.approx(var, rel=0.1)
    phi = natural_hyper_draws(chain, ("phi",))["phi"]
    assert np.all((phi > 0) & (phi < 1))


def test_guard_rails_and_degenerate_settings():
    spec = ModelSpec("logit")
    data = intercept_data([1, 0, 1], spec)
    with pytest.raises(GuardRailExceeded):
        mcmc_sample(spec, data, ONE, iters=1000, seed=0, max_n=2)
    with pytest.raises(DegenerateProposal):
        mcmc_sample(spec, data, ONE, iters=5, seed=0, thin=10)
    with pytest.raises(DegenerateProposal):
        mcmc_sample(spec, data, ONE, iters=4000, seed=0, burn_in=10)


def test_chain_csv(tmp_path):
    spec = ModelSpec("logit")
    chain = mcmc_sample(spec, intercept_data([1, 0, 0], spec), ONE, iters=3000, seed=1, burn_in=2000)
    path = tmp_path / "chain.csv"
    chain.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "(Intercept)"
    assert len(lines) == 1 + chain.draws.shape[0]
    assert float(lines[1]) == chain.draws[0, 0]
    s = chain.summaries()["(Intercept)"]
    assert s["sd"] > 0 and s["mcse"] > 0
