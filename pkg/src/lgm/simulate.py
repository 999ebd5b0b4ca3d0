"""Synthetic datasets with known regional effects, for recovery and calibration runs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import BadConfig
from .graph import RegionGraph, lattice_graph, random_planar_graph, repaired_icar

# LOGIT SPATIAL posterior means of the stroke study, used as default truth
TABLE2_LOGIT_SPATIAL = {
    "(Intercept)": -5.912,
    "Woman": -0.216,
    "Age2": 0.933,
    "Age3": 1.728,
    "City": 0.007,
    "TA10": 0.239,
    "TB01": 0.236,
    "TC": 0.324,
    "Depr": 0.096,
}
TABLE2_TAU = 11.306
TABLE2_PHI = 0.866
TABLE2_ALPHA = 1.112

# population shares loosely following the study description
DEFAULT_COVARIATES = (
    ("Woman", "bernoulli", (0.55,)),
    ("Age2", "category", ("age", 0.25)),
    ("Age3", "category", ("age", 0.25)),
    ("City", "region_bernoulli", (0.17,)),
    ("TA10", "bernoulli", (0.12,)),
    ("TB01", "bernoulli", (0.12,)),
    ("TC", "bernoulli", (0.7,)),
    ("Depr", "region_normal", (0.0, 1.0)),
)
COVARIATE_KINDS = ("bernoulli", "normal", "region_bernoulli", "region_normal", "category")


@dataclass
class SimulationConfig:
    family: str = "logit"
    effect: str = "leroux"
    regions: int = 379
    n: int = 300_000
    graph: str = "planar"
    covariates: tuple = DEFAULT_COVARIATES
    beta: dict = field(default_factory=lambda: dict(TABLE2_LOGIT_SPATIAL))
    tau: float = TABLE2_TAU
    phi: float = TABLE2_PHI
    alpha: float = TABLE2_ALPHA
    horizon: float = math.inf
    event_fraction: float | None = None

    def __post_init__(self):
        if self.family not in ("logit", "weibull"):
            raise BadConfig(f"unknown family {self.family!r}")
        if self.effect not in ("none", "iid", "leroux", "icar"):
            raise BadConfig(f"unknown effect {self.effect!r}")
        if self.regions < 1 or self.n < 1:
            raise BadConfig("regions and n must be positive")
        if self.graph not in ("planar", "lattice"):
            raise BadConfig(f"unknown graph kind {self.graph!r}")
        names = [c[0] for c in self.covariates]
        for name, kind, _ in self.covariates:
            if kind not in COVARIATE_KINDS:
                raise BadConfig(f"covariate {name}: unknown kind {kind!r}")
        unknown = set(self.beta) - set(names) - {"(Intercept)"}
        if unknown:
            raise BadConfig(f"coefficients given for unknown covariates: {sorted(unknown)}")
        if not self.tau > 0 or not 0 <= self.phi <= 1 or not self.alpha > 0:
            raise BadConfig("need tau > 0, 0 <= phi <= 1, alpha > 0")
        if self.event_fraction is not None and not 0 < self.event_fraction <= 1:
            raise BadConfig("event_fraction must lie in (0, 1]")

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(c[0] for c in self.covariates)


@dataclass
class Simulation:
    columns: dict
    graph: RegionGraph
    gamma: np.ndarray
    truth: dict
    horizon: float


def region_ids(J: int) -> tuple[str, ...]:
    width = max(3, len(str(J - 1)))
    return tuple(f"R{j:0{width}d}" for j in range(J))


def make_graph(cfg: SimulationConfig, rng: np.random.Generator) -> RegionGraph:
    ids = region_ids(cfg.regions)
    if cfg.graph == "lattice":
        rows = int(math.floor(math.sqrt(cfg.regions)))
        while cfg.regions % rows:
            rows -= 1
        return lattice_graph(rows, cfg.regions // rows, ids)
    if cfg.regions < 4:
        return lattice_graph(1, cfg.regions, ids)
    return random_planar_graph(cfg.regions, rng, ids)[0]


def sample_effect(effect: str, graph: RegionGraph, tau: float, phi: float, rng) -> np.ndarray:
    """Draw regional effects from their prior; Leroux via a precision Cholesky."""
    J = graph.J
    if effect == "none":
        return np.zeros(J)
    if effect == "iid" or (effect == "leroux" and phi == 0.0):
        return rng.standard_normal(J) / math.sqrt(tau)
    Q = repaired_icar(graph).toarray()
    if effect == "leroux" and phi < 1.0:
        R = tau * ((1.0 - phi) * np.eye(J) + phi * Q)
        L = np.linalg.cholesky(R)
        return np.linalg.solve(L.T, rng.standard_normal(J))
    lam, V = np.linalg.eigh(Q)
    keep = lam > 1e-9 * lam.max()
    g = V[:, keep] @ (rng.standard_normal(int(keep.sum())) / np.sqrt(tau * lam[keep]))
    return g - g.mean()


def _covariates(cfg, region, J, rng):
    n = region.size
    out = {}
    groups: dict[str, list] = {}
    for name, kind, par in cfg.covariates:
        if kind == "category":
            groups.setdefault(par[0], []).append((name, float(par[1])))
    group_draw = {g: rng.uniform(size=n) for g in sorted(groups)}
    for name, kind, par in cfg.covariates:
        if kind == "bernoulli":
            out[name] = (rng.uniform(size=n) < par[0]).astype(float)
        elif kind == "normal":
            out[name] = rng.normal(par[0], par[1], size=n)
        elif kind == "region_bernoulli":
            out[name] = (rng.uniform(size=J) < par[0]).astype(float)[region]
        elif kind == "region_normal":
            out[name] = rng.normal(par[0], par[1], size=J)[region]
        else:
            lo = 0.0
            for other, prob in groups[par[0]]:
                if other == name:
                    break
                lo += prob
            u = group_draw[par[0]]
            out[name] = ((u >= lo) & (u < lo + float(par[1]))).astype(float)
    return out


def simulate(cfg: SimulationConfig, seed: int, graph: RegionGraph | None = None) -> Simulation:
    """Draw a graph (unless given), regional effects, covariates and outcomes."""
    rng = np.random.default_rng(seed)
    if graph is None:
        graph = make_graph(cfg, rng)
    elif graph.J != cfg.regions:
        raise BadConfig(f"supplied graph has {graph.J} regions, config says {cfg.regions}")
    J = graph.J
    gamma = sample_effect(cfg.effect, graph, cfg.tau, cfg.phi, rng)
    # every region gets at least one row, the rest uniformly
    region = np.concatenate([np.arange(min(J, cfg.n)), rng.integers(0, J, size=max(cfg.n - J, 0))])
    region = np.sort(region)
    X = _covariates(cfg, region, J, rng)
    eta = np.full(region.size, cfg.beta.get("(Intercept)", 0.0)) + gamma[region]
    for name in cfg.covariate_names:
        eta += cfg.beta.get(name, 0.0) * X[name]

    cols = {"region": [graph.ids[j] for j in region]}
    cols.update({k: X[k] for k in cfg.covariate_names})
    horizon = cfg.horizon
    if cfg.family == "logit":
        cols["y"] = (rng.uniform(size=region.size) < expit(eta)).astype(np.int64)
    else:
        u = rng.uniform(size=region.size)
        t = (-np.log(u) / np.exp(eta)) ** (1.0 / cfg.alpha)
        if cfg.event_fraction is not None:
            horizon = float(np.quantile(t, cfg.event_fraction))
        event = t <= horizon
        cols["time"] = np.where(event, t, horizon)
        cols["event"] = event.astype(np.int64)

    truth = {name: float(cfg.beta.get(name, 0.0)) for name in ("(Intercept)",) + cfg.covariate_names}
    if cfg.effect != "none":
        truth["tau"] = float(cfg.tau)
    if cfg.effect == "leroux":
        truth["phi"] = float(cfg.phi)
    if cfg.family == "weibull":
        truth["alpha"] = float(cfg.alpha)
    return Simulation(cols, graph, gamma, truth, float(horizon))
