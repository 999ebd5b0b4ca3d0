"""Per-observation log-likelihood kernels and hyperparameter prior densities.

Kernels are vectorised: every argument may be a scalar or an array, and the
returned :class:`LikTerms` fields broadcast accordingly. Derivatives are with
respect to the linear predictor only.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.special import expit

from .errors import NonPositiveShape, NonPositiveTime, QuadratureFailure

# shape = exp(ALPHA_SCALE * alpha_prime)
ALPHA_SCALE = 0.1
PC_DIFF_STEP = 1e-4


class LikTerms(NamedTuple):
    ll: np.ndarray
    d1: np.ndarray
    d2: np.ndarray


def softplus(x):
    """``log(1 + exp(x))`` without overflow."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def bernoulli_logit_terms(eta, y) -> LikTerms:
    eta = np.asarray(eta, dtype=float)
    y = np.asarray(y, dtype=float)
    # y*eta - log(1+e^eta) == -softplus(+-eta); avoids cancellation when saturated
    ll = -softplus(eta * (1.0 - 2.0 * y))
    p = expit(eta)
    q = expit(-eta)
    d1 = y * q - (1.0 - y) * p
    d2 = -p * q
    return LikTerms(ll, d1, d2)


def _check_weibull_args(alpha, t):
    if np.any(~(np.asarray(alpha) > 0)):
        raise NonPositiveShape(alpha)
    if np.any(~(np.asarray(t) > 0)):
        raise NonPositiveTime(value=t)


def weibull_terms(eta, alpha, t, event) -> LikTerms:
    """Weibull log-likelihood with hazard ``exp(eta) * alpha * t**(alpha-1)``.

    Censored rows contribute only ``log S(t)``.
    """
    _check_weibull_args(alpha, t)
    eta = np.asarray(eta, dtype=float)
    t = np.asarray(t, dtype=float)
    event = np.asarray(event, dtype=float)
    if np.ndim(alpha) == 0 and alpha == 1.0:
        # exponential model, evaluated exactly as such
        cumhaz = np.exp(eta) * t
        return LikTerms(event * eta - cumhaz, event - cumhaz, -cumhaz)
    logt = np.log(t)
    cumhaz = np.exp(eta + alpha * logt)
    ll = event * (eta + np.log(alpha) + (alpha - 1.0) * logt) - cumhaz
    return LikTerms(ll, event - cumhaz, -cumhaz)


def weibull_hazard(t, eta, alpha):
    _check_weibull_args(alpha, t)
    return np.exp(eta) * alpha * np.asarray(t, dtype=float) ** (alpha - 1.0)


def alpha_from_prime(alpha_prime):
    return np.exp(ALPHA_SCALE * np.asarray(alpha_prime, dtype=float))


def weibull_shape_kld(alpha: float) -> float:
    """KL divergence of Weibull(shape=alpha, scale=1) from the unit exponential.

    Evaluated by adaptive quadrature after the substitution ``u = t**alpha``,
    under which the Weibull(alpha) law becomes the unit exponential.
    """
    alpha = float(alpha)
    if not alpha > 0:
        raise NonPositiveShape(alpha)
    if alpha == 1.0:
        return 0.0
    la = math.log(alpha)
    r = (alpha - 1.0) / alpha
    inv = 1.0 / alpha

    def integrand(u):
        if u == 0.0:
            return 0.0
        lu = math.log(u)
        return math.exp(-u) * (la + r * lu - u + math.exp(inv * lu))

    # the mass of exp(-u) u^(1/alpha) sits near u = 1/alpha
    peak = max(1.0, inv)
    total = 0.0
    for a, b in ((0.0, peak), (peak, math.inf)):
        val, err, info = integrate.quad(
            integrand, a, b, epsabs=0.0, epsrel=1e-12, limit=400, full_output=1
        )[:3]
        if not np.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
            raise QuadratureFailure(f"KLD integral for alpha={alpha} did not converge (err={err:.3g})")
        total += val
    return max(total, 0.0)


def weibull_shape_distance(alpha: float) -> float:
    """``sqrt(2 KLD)``; zero at the exponential base model."""
    return math.sqrt(2.0 * weibull_shape_kld(alpha))


def _signed_distance(alpha: float) -> float:
    d = weibull_shape_distance(alpha)
    return d if alpha >= 1.0 else -d


@lru_cache(maxsize=4096)
def pc_prior_alpha_logdensity(alpha_prime: float, rate: float = 5.0) -> float:
    """Log density of the penalised-complexity prior on ``alpha_prime``.

    The density on the shape is ``rate/2 * exp(-rate d) |d'|``, split evenly
    on either side of the exponential model, and carried to
    ``alpha_prime`` with the Jacobian of ``alpha = exp(0.1 alpha_prime)``.
    ``d'`` comes from central differences of the signed distance, which is
    smooth through ``alpha = 1``.
    """
    if not rate > 0:
        raise ValueError(f"PC prior rate must be > 0, got {rate!r}")
    alpha = math.exp(ALPHA_SCALE * float(alpha_prime))
    h = PC_DIFF_STEP
    dprime = (_signed_distance(alpha + h) - _signed_distance(alpha - h)) / (2.0 * h)
    d = weibull_shape_distance(alpha)
    return (
        math.log(rate / 2.0)
        - rate * d
        + math.log(abs(dprime))
        + math.log(ALPHA_SCALE * alpha)
    )


def logit_phi_logprior(logit_phi: float, mean: float = 0.0, precision: float = 0.1) -> float:
    """Gaussian log density on the logit of the spatial mixing weight."""
    return 0.5 * math.log(precision / (2.0 * math.pi)) - 0.5 * precision * (logit_phi - mean) ** 2


def log_tau_logprior(log_tau: float) -> float:
    """Improper flat prior on the precision, written on the log scale.

    A constant density in ``tau`` picks up the Jacobian ``d tau / d log tau``.
    """
    return float(log_tau)
