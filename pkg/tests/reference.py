"""Independent reference computations used as test oracles.

Nothing here imports the Laplace engine; every quantity is obtained by brute
force (dense grids, plain loops) so that agreement is meaningful.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, logsumexp

EULER_GAMMA = 0.5772156649015329


def kld_closed_form(alpha: float) -> float:
    """KLD(Weibull(alpha, 1) || Exp(1)) = log a - (a-1) g/a - 1 + Gamma(1 + 1/a)."""
    return math.log(alpha) - (alpha - 1.0) * EULER_GAMMA / alpha - 1.0 + math.exp(gammaln(1.0 + 1.0 / alpha))


def kld_bruteforce(alpha: float, nodes: int = 1_000_000) -> float:
    """Trapezoid rule in log t over [1e-12, 80] with ``nodes`` points."""
    s = np.linspace(math.log(1e-12), math.log(80.0), nodes)
    t = np.exp(s)
    logf = math.log(alpha) + (alpha - 1.0) * s - t ** alpha
    f = np.exp(logf)
    integrand = f * (logf + t) * t  # dt = t ds
    return float(np.trapezoid(integrand, s))


def newton_1d(grad, hess, x0: float = 0.0, tol: float = 1e-14, iters: int = 200) -> float:
    x = x0
    for _ in range(iters):
        step = grad(x) / hess(x)
        x -= step
        if abs(step) < tol:
            break
    return x


def logit_loglik(eta: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sum over the last axis of Bernoulli-logit log-likelihoods."""
    z = np.where(y > 0.5, -eta, eta)
    return -np.logaddexp(0.0, z).sum(axis=-1)


def iid_logit_quadrature(y, region, log_taus, half_width=12.0, points=161, intercept_precision=0.0):
    """Exact posterior over an intercept and J iid effects at fixed tau values.

    Returns normalised weights over ``log_taus`` (uniform prior on tau, i.e.
    log-prior ``log tau`` on the log scale), and for each tau the posterior
    mean of the intercept and of each effect. Dense tensor grid over
    ``[-half_width, half_width]^(1+J)``.
    """
    y = np.asarray(y, dtype=float)
    region = np.asarray(region)
    J = int(region.max()) + 1
    g = np.linspace(-half_width, half_width, points)
    h = g[1] - g[0]
    grids = np.meshgrid(*([g] * (1 + J)), indexing="ij")
    b0 = grids[0]
    gam = np.stack(grids[1:], axis=-1)
    eta = b0[..., None] + gam[..., region]
    ll = logit_loglik(eta, y)
    ll = ll - 0.5 * intercept_precision * b0 ** 2
    logZ, means = [], []
    for lt in log_taus:
        tau = math.exp(lt)
        lp = ll + 0.5 * J * math.log(tau / (2 * math.pi)) - 0.5 * tau * (gam ** 2).sum(axis=-1)
        lz = logsumexp(lp) + (1 + J) * math.log(h)
        w = np.exp(lp - lp.max())
        w /= w.sum()
        means.append([float((w * b0).sum())] + [float((w * gam[..., j]).sum()) for j in range(J)])
        logZ.append(lz + lt)  # uniform prior on tau, Jacobian tau on the log scale
    logZ = np.array(logZ)
    wts = np.exp(logZ - logZ.max())
    return wts / wts.sum(), np.array(means)


def intercept_logit_quadrature(y, intercept_precision=0.0, half_width=30.0, points=200_001):
    """Posterior mean of the intercept in an intercept-only logit model."""
    b = np.linspace(-half_width, half_width, points)
    y = np.asarray(y, dtype=float)
    k = y.sum()
    n = y.size
    lp = k * b - n * np.logaddexp(0.0, b) - 0.5 * intercept_precision * b * b
    w = np.exp(lp - lp.max())
    return float(np.trapezoid(w * b, b) / np.trapezoid(w, b))


def weibull_intercept_quadrature(t, event, rate_logdensity, alpha_primes, b_half=8.0, b_points=4001):
    """Posterior over (beta_0, alpha') for an intercept-only Weibull model.

    ``rate_logdensity`` is the prior log-density of alpha' (vectorised over
    ``alpha_primes``). The intercept has a flat prior. Returns normalised
    weights over ``alpha_primes`` and the posterior means of beta_0 given each
    alpha'.
    """
    t = np.asarray(t, dtype=float)
    e = np.asarray(event, dtype=float)
    lt = np.log(t)
    d = e.sum()
    # centre the intercept grid at the conditional mode for each alpha
    logZ, means = [], []
    for ap, lpr in zip(alpha_primes, rate_logdensity):
        a = math.exp(0.1 * ap)
        S = float(np.sum(t ** a))
        b_hat = math.log(d / S)
        b = np.linspace(b_hat - b_half, b_hat + b_half, b_points)
        ll = d * (b + math.log(a)) + (a - 1.0) * float(e @ lt) - np.exp(b) * S
        m = ll.max()
        z = np.trapezoid(np.exp(ll - m), b)
        logZ.append(math.log(z) + m + lpr)
        means.append(float(np.trapezoid(np.exp(ll - m) * b, b) / z))
    logZ = np.array(logZ)
    w = np.exp(logZ - logZ.max())
    return w / w.sum(), np.array(means)
