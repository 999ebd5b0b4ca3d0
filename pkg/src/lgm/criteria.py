"""DIC and WAIC from draws of the fitted mixture-of-Gaussians approximation.

Draw ``s`` uses its own generator seeded with ``(seed, s)``: it first picks a
grid point by weight and then a latent vector from that point's Gaussian. The
scores therefore depend only on ``seed`` and the number of draws.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .domain import Dataset, FitResult, ModelSpec, ScorePair
from .errors import InsufficientDraws
from .graph import RegionGraph
from .laplace import LatentModel

DEFAULT_DRAWS = 2000
MIN_DRAWS = 500
_CHUNK_CELLS = 20_000_000


class _Pointwise:
    """Streaming per-cell log mean density and variance over draws."""

    def __init__(self, ncell: int):
        self.n = 0
        self.lse = np.full(ncell, -np.inf)
        self.mean = np.zeros(ncell)
        self.m2 = np.zeros(ncell)

    def add(self, ll: np.ndarray) -> None:
        b = ll.shape[1]
        self.lse = np.logaddexp(self.lse, logsumexp(ll, axis=1))
        mb = ll.mean(axis=1)
        m2b = ((ll - mb[:, None]) ** 2).sum(axis=1)
        n = self.n + b
        delta = mb - self.mean
        self.mean = self.mean + delta * (b / n)
        self.m2 = self.m2 + m2b + delta ** 2 * (self.n * b / n)
        self.n = n


def _choose_components(weights: np.ndarray, seed: int, draws: int, m: int):
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    ks = np.empty(draws, dtype=np.int64)
    Z = np.empty((m, draws))
    for s in range(draws):
        rng = np.random.default_rng([seed, s])
        ks[s] = min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)
        Z[:, s] = rng.standard_normal(m)
    return ks, Z


def _loglik_matrix(model: LatentModel, X: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Cell log-likelihoods, one column per latent draw."""
    eta = model.X @ X[: model.p]
    if model.J:
        eta = eta + X[model.p:][model.region]
    if model.family == "logit":
        z = np.where(model.y[:, None] > 0.5, -eta, eta)
        return -np.logaddexp(0.0, z)
    lt = model.logt[:, None]
    a = alphas[None, :]
    return model.event[:, None] * (eta + np.log(a) + (a - 1.0) * lt) - np.exp(eta + a * lt)


def _draw_statistics(fit: FitResult, model: LatentModel, draws: int, seed: int):
    if draws < MIN_DRAWS:
        raise InsufficientDraws(f"need at least {MIN_DRAWS} draws, got {draws}")
    w = np.array([pt.weight for pt in fit.hyper_grid])
    ks, Z = _choose_components(w, seed, draws, model.m)
    alpha_k = np.array([comp.hyper.get("alpha", 1.0) for comp in fit.components])
    counts = model.counts
    acc = _Pointwise(model.ncell)
    dev = np.empty(draws)
    chunk = max(1, _CHUNK_CELLS // max(model.ncell, 1))
    for lo in range(0, draws, chunk):
        hi = min(draws, lo + chunk)
        X = np.empty((model.m, hi - lo))
        for k in np.unique(ks[lo:hi]):
            cols = np.flatnonzero(ks[lo:hi] == k)
            X[:, cols] = fit.components[k].sample(Z[:, lo + cols])
        ll = _loglik_matrix(model, X, alpha_k[ks[lo:hi]])
        dev[lo:hi] = -2.0 * (counts @ ll)
        acc.add(ll)
    return dev, acc, alpha_k, w


def _plugin_deviance(fit: FitResult, model: LatentModel, alpha_k, w) -> float:
    alpha_bar = float(np.sum(w * alpha_k) / np.sum(w))
    ll = _loglik_matrix(model, fit.latent_mean[:, None], np.array([alpha_bar]))
    return float(-2.0 * (model.counts @ ll[:, 0]))


def _dic(dev, plug, draws, seed) -> ScorePair:
    mean_dev = math.fsum(dev) / dev.size
    return ScorePair(2.0 * mean_dev - plug, mean_dev - plug, draws, seed)


def _waic(acc: _Pointwise, counts, draws, seed) -> ScorePair:
    lppd = float(counts @ (acc.lse - math.log(acc.n)))
    var = acc.m2 / (acc.n - 1)
    p_waic = float(counts @ var)
    return ScorePair(-2.0 * (lppd - p_waic), p_waic, draws, seed)


def compute_scores(
    fit: FitResult, spec: ModelSpec, data: Dataset, graph: RegionGraph,
    draws: int = DEFAULT_DRAWS, seed: int = 0,
) -> tuple[ScorePair, ScorePair]:
    """DIC and WAIC from one shared set of posterior draws."""
    model = LatentModel(spec, data, graph)
    dev, acc, alpha_k, w = _draw_statistics(fit, model, draws, seed)
    plug = _plugin_deviance(fit, model, alpha_k, w)
    return _dic(dev, plug, draws, seed), _waic(acc, model.counts, draws, seed)


def compute_dic(fit, spec, data, graph, draws: int = DEFAULT_DRAWS, seed: int = 0) -> ScorePair:
    """DIC = 2 mean(D) - D(plug-in), D = -2 sum of log-likelihoods.

    The plug-in uses the mixture mean of the latent field and, for Weibull
    models, the posterior mean of the shape.
    """
    return compute_scores(fit, spec, data, graph, draws, seed)[0]


def compute_waic(fit, spec, data, graph, draws: int = DEFAULT_DRAWS, seed: int = 0) -> ScorePair:
    """WAIC = -2 (lppd - p_waic) with p_waic the summed pointwise variances."""
    return compute_scores(fit, spec, data, graph, draws, seed)[1]


def split_mcse(
    fit: FitResult, spec: ModelSpec, data: Dataset, graph: RegionGraph,
    draws: int = DEFAULT_DRAWS, seed: int = 0, batches: int = 4,
) -> tuple[float, float]:
    """Monte Carlo standard errors of (DIC, WAIC): spread over independent seeds."""
    vals = np.array([
        [s.score for s in compute_scores(fit, spec, data, graph, draws, seed + b + 1)]
        for b in range(batches)
    ])
    sd = vals.std(axis=0, ddof=1)
    return float(sd[0]), float(sd[1])
