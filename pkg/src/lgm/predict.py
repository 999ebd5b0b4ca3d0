"""Posterior predictions for covariate profiles in every (or a chosen) region.

Per grid point the linear predictor ``x'beta + gamma_j`` is Gaussian, so only
the fixed-effect block, its cross terms with each region and the regional
variances are needed. These are collected in :class:`PredictiveComponents`,
which is what a fit writes to disk for later prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .domain import FitResult
from .errors import BadConfig, UnknownCovariate

PROBS = (0.025, 0.5, 0.975)


@dataclass(frozen=True)
class Profile:
    name: str
    values: dict
    region: str | None = None


@dataclass
class PredictiveComponents:
    family: str
    covariate_names: tuple[str, ...]
    region_ids: tuple[str, ...]
    time_scale: float
    weights: np.ndarray  # (K,)
    alpha: np.ndarray  # (K,), ones for logit
    beta_mean: np.ndarray  # (K, p)
    gamma_mean: np.ndarray  # (K, J)
    cov_bb: np.ndarray  # (K, p, p)
    cov_bg: np.ndarray  # (K, p, J)
    var_g: np.ndarray  # (K, J)

    @property
    def p(self) -> int:
        return self.beta_mean.shape[1]

    @property
    def J(self) -> int:
        return self.gamma_mean.shape[1]

    @classmethod
    def from_fit(cls, fit: FitResult) -> "PredictiveComponents":
        spec = fit.spec
        p = len(spec.fixed_names)
        K = len(fit.components)
        m = fit.components[0].mode.size
        J = m - p
        bi, bj = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
        gi, gj = np.meshgrid(np.arange(p), p + np.arange(J), indexing="ij")
        beta = np.empty((K, p))
        gamma = np.empty((K, J))
        cbb = np.empty((K, p, p))
        cbg = np.empty((K, p, J))
        vg = np.empty((K, J))
        for k, ga in enumerate(fit.components):
            beta[k] = ga.mode[:p]
            gamma[k] = ga.mode[p:]
            cbb[k] = ga.covariances(bi.ravel(), bj.ravel()).reshape(p, p)
            if J:
                cbg[k] = ga.covariances(gi.ravel(), gj.ravel()).reshape(p, J)
                vg[k] = ga.variances()[p:]
        return cls(
            family=spec.family,
            covariate_names=spec.covariate_names,
            region_ids=tuple(fit.region_ids),
            time_scale=float(fit.time_scale),
            weights=np.array([pt.weight for pt in fit.hyper_grid]),
            alpha=np.array([ga.hyper.get("alpha", 1.0) for ga in fit.components]),
            beta_mean=beta,
            gamma_mean=gamma,
            cov_bb=cbb,
            cov_bg=cbg,
            var_g=vg,
        )


def _design_row(profile: Profile, names) -> np.ndarray:
    unknown = sorted(set(profile.values) - set(names))
    if unknown:
        raise UnknownCovariate(f"profile {profile.name!r}: unknown covariate(s) {', '.join(unknown)}")
    return np.array([1.0] + [float(profile.values.get(n, 0.0)) for n in names])


def _draw_plan(weights, seed, draws):
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    ks = np.empty(draws, dtype=np.int64)
    z = np.empty(draws)
    for s in range(draws):
        rng = np.random.default_rng([seed, s])
        ks[s] = min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)
        z[s] = rng.standard_normal()
    return ks, z


def predict(
    comp: PredictiveComponents,
    profiles: list[Profile],
    draws: int = 2000,
    seed: int = 0,
    plugin: bool = False,
) -> list[dict]:
    """One row per (profile, region) with mean and 95% interval.

    Logit rows describe the probability ``logistic(x'beta + gamma_j)``;
    Weibull rows describe the median survival time in the original time unit.
    With ``plugin`` the regional effect is held at its posterior mean and only
    fixed-effect uncertainty is propagated.
    """
    if draws < 1:
        raise BadConfig("draws must be positive")
    ks, z = _draw_plan(comp.weights, seed, draws)
    index = {r: j for j, r in enumerate(comp.region_ids)}
    gbar = comp.weights @ comp.gamma_mean if comp.J else np.zeros(0)
    rows = []
    for prof in profiles:
        x = _design_row(prof, comp.covariate_names)
        if prof.region is not None:
            if prof.region not in index:
                raise BadConfig(f"profile {prof.name!r}: unknown region {prof.region!r}")
            regions = [index[prof.region]]
        else:
            regions = list(range(len(comp.region_ids)))
        mb = comp.beta_mean @ x  # (K,)
        vb = np.einsum("i,kij,j->k", x, comp.cov_bb, x)
        for j in regions:
            if not comp.J:
                mu, var = mb, vb
            elif plugin:
                mu, var = mb + gbar[j], vb
            else:
                mu = mb + comp.gamma_mean[:, j]
                var = vb + 2.0 * (comp.cov_bg[:, :, j] @ x) + comp.var_g[:, j]
            eta = mu[ks] + np.sqrt(np.maximum(var[ks], 0.0)) * z
            if comp.family == "logit":
                val = expit(eta)
            else:
                a = comp.alpha[ks]
                val = np.exp((math.log(math.log(2.0)) - eta) / a) * comp.time_scale
            q = np.quantile(val, PROBS)
            rows.append({
                "profile": prof.name,
                "region": comp.region_ids[j],
                "mean": math.fsum(val) / val.size,
                "q2.5": float(q[0]),
                "q50": float(q[1]),
                "q97.5": float(q[2]),
            })
    return rows
