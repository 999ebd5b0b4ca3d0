"""Small simulated datasets shared across test modules."""

from functools import lru_cache

from lgm.domain import ModelSpec, validate_dataset
from lgm.simulate import SimulationConfig, simulate

FEW = (("Woman", "bernoulli", (0.5,)), ("TC", "bernoulli", (0.7,)))
FEW_BETA = {"(Intercept)": -1.0, "Woman": -0.3, "TC": 0.5}


@lru_cache(maxsize=None)
def simulated(family="logit", effect="leroux", J=30, n=3000, seed=0, tau=4.0, phi=0.9,
              alpha=1.11, event_fraction=None, graph="planar", beta=None, covariates=FEW):
    cfg = SimulationConfig(
        family=family, effect=effect, regions=J, n=n, graph=graph, covariates=covariates,
        beta=dict(beta or FEW_BETA), tau=tau, phi=phi, alpha=alpha, event_fraction=event_fraction,
    )
    return simulate(cfg, seed)


def dataset(sim, family, effect, **spec_kw):
    names = tuple(c for c in sim.columns if c not in ("region", "y", "time", "event"))
    spec = ModelSpec(family, names, effect, **spec_kw)
    return spec, validate_dataset(sim.columns, spec, sim.graph)
