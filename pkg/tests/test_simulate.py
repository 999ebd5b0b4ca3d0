import math

import numpy as np
import pytest

from lgm.errors import BadConfig
from lgm.graph import lattice_graph
from lgm.simulate import TABLE2_LOGIT_SPATIAL, SimulationConfig, simulate


def test_infinite_precision_iid_effects_vanish():
    sim = simulate(SimulationConfig(effect="iid", regions=50, n=500, tau=1e12, covariates=(),
                                    beta={"(Intercept)": 0.0}), seed=0)
    assert np.max(np.abs(sim.gamma)) < 1e-4


def test_unit_exponential_times():
    n = 40_000
    sim = simulate(SimulationConfig(family="weibull", effect="none", regions=4, n=n, covariates=(),
                                    beta={"(Intercept)": 0.0}, alpha=1.0), seed=1)
    t = np.asarray(sim.columns["time"])
    assert np.all(sim.columns["event"] == 1)
    # unit exponential: mean 1, sd 1
    assert abs(t.mean() - 1.0) < 3.0 / math.sqrt(n)


def test_default_truth_values():
    cfg = SimulationConfig(regions=20, n=200)
    assert cfg.beta["Woman"] == -0.216
    assert cfg.beta["Age3"] == 1.728
    assert TABLE2_LOGIT_SPATIAL["(Intercept)"] == -5.912
    sim = simulate(cfg, seed=2)
    assert sim.truth["Woman"] == -0.216 and sim.truth["phi"] == 0.866


def test_event_fraction_sets_horizon():
    sim = simulate(SimulationConfig(family="weibull", effect="iid", regions=10, n=5000, event_fraction=0.3), seed=3)
    ev = np.asarray(sim.columns["event"])
    assert ev.mean() == pytest.approx(0.3, abs=0.01)
    assert np.max(sim.columns["time"]) == pytest.approx(sim.horizon)


def test_icar_effect_sums_to_zero_and_is_reproducible():
    g = lattice_graph(5, 5)
    cfg = SimulationConfig(effect="icar", regions=25, n=100)
    a = simulate(cfg, seed=4, graph=g)
    b = simulate(cfg, seed=4, graph=g)
    assert abs(a.gamma.sum()) < 1e-10
    assert np.array_equal(a.gamma, b.gamma)
    assert all(np.array_equal(np.asarray(a.columns[k]), np.asarray(b.columns[k])) for k in a.columns)


def test_every_region_has_rows():
    sim = simulate(SimulationConfig(regions=30, n=30), seed=5)
    assert sorted(set(sim.columns["region"])) == sorted(sim.graph.ids)


@pytest.mark.parametrize("kw", [
    {"family": "poisson"},
    {"effect": "bym"},
    {"regions": 0},
    {"tau": -1.0},
    {"phi": 1.5},
    {"beta": {"Nope": 1.0}},
    {"event_fraction": 0.0},
    {"covariates": (("x", "weird", ()),)},
])
def test_bad_config(kw):
    with pytest.raises(BadConfig):
        SimulationConfig(**kw)


def test_graph_size_mismatch():
    with pytest.raises(BadConfig):
        simulate(SimulationConfig(regions=10, n=50), seed=0, graph=lattice_graph(2, 2))
