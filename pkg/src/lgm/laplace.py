"""Nested Laplace approximation for latent Gaussian regression models.

At fixed hyperparameters the latent field (fixed effects followed by the
regional effects) gets a Gaussian approximation at its conditional mode.
The approximate hyperparameter posterior is explored on a standardised grid,
and latent marginals are mixtures of the per-point Gaussians.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.special import expit, logit, ndtr

from .domain import INTERCEPT, Dataset, FitResult, HyperPoint, Marginal, ModelSpec
from .errors import (
    BadConfig,
    EmptyGrid,
    GridExplosion,
    ModeSearchFailure,
    NonConvergence,
    SingularPrecision,
)
from .graph import RegionGraph, repaired_icar
from .likelihood import (
    ALPHA_SCALE,
    bernoulli_logit_terms,
    log_tau_logprior,
    logit_phi_logprior,
    pc_prior_alpha_logdensity,
)
from .sparse import CholeskyFactor, SymbolicCholesky

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

# box on the internal hyperparameter scale; keeps the search away from the
# improper tail of the flat precision prior
HYPER_BOUNDS = {"tau": (-10.0, 15.0), "phi": (-12.0, 12.0), "alpha": (-30.0, 30.0)}
HYPER_START = {"tau": 2.0, "phi": 0.0, "alpha": 0.0}

MAX_NEWTON = 100
MAX_HALVINGS = 30
GRAD_TOL = 1e-8
DECREMENT_TOL = 1e-10
MODE_STEP_MIN = 1e-3
HESS_STEP = 0.05
RISE_TOL = 0.1
SUPPORT_POINTS = 201


def to_natural(name: str, value):
    value = np.asarray(value, dtype=float)
    if name == "tau":
        return np.exp(value)
    if name == "phi":
        return expit(value)
    return np.exp(ALPHA_SCALE * value)


def to_internal(name: str, value):
    value = np.asarray(value, dtype=float)
    if name == "tau":
        return np.log(value)
    if name == "phi":
        return logit(value)
    return np.log(value) / ALPHA_SCALE


class LatentModel:
    """Design, prior structure and factor pattern for one model and dataset.

    Logit rows sharing covariates, region and outcome are merged into cells
    with multiplicities; every likelihood sum is weighted by those counts.
    """

    def __init__(self, spec: ModelSpec, data: Dataset, graph: RegionGraph, perm=None):
        if data.family != spec.family:
            raise BadConfig(f"dataset family {data.family!r} does not match model {spec.family!r}")
        if tuple(data.covariate_names) != spec.covariate_names:
            raise BadConfig("dataset covariates do not match the model covariates")
        if tuple(data.region_ids) != tuple(graph.ids):
            raise BadConfig("dataset regions do not match the graph")
        self.spec = spec
        self.data = data
        self.graph = graph
        self.family = spec.family
        self.hyper_names = spec.hyper_names
        self.constrained = spec.constrained

        X = data.design()
        if spec.family == "logit":
            key = np.column_stack([data.region.astype(float), data.y.astype(float), X])
            uniq, counts = np.unique(key, axis=0, return_counts=True)
            self.region = uniq[:, 0].astype(np.int64)
            self.y = uniq[:, 1].copy()
            self.X = np.ascontiguousarray(uniq[:, 2:])
            self.counts = counts.astype(float)
        else:
            self.region = np.asarray(data.region, dtype=np.int64)
            self.X = X
            self.counts = np.ones(data.n)
            self.time = np.asarray(data.time, dtype=float)
            self.logt = np.log(self.time)
            self.event = np.asarray(data.event, dtype=float)
        self.ncell = self.X.shape[0]
        self.p = self.X.shape[1]
        self.J = graph.J if spec.effect != "none" else 0
        self.m = self.p + self.J

        pr = spec.priors
        self.beta_prec = np.full(self.p, pr.beta_precision)
        self.beta_prec[0] = pr.intercept_precision

        if spec.effect == "leroux":
            self.Q = repaired_icar(graph).tocsr()
            self.Q_diag = self.Q.diagonal()
            lam = np.linalg.eigvalsh(self.Q.toarray())
            self.Q_eig = np.clip(lam, 0.0, None)
            tol = 1e-9 * max(1.0, float(lam.max()))
            self.Q_rank = int(np.sum(lam > tol))
            self.Q_logdet_pos = float(np.sum(np.log(lam[lam > tol])))
        else:
            self.Q = None

        self._build_pattern(perm)
        if self.constrained:
            self.A = np.zeros(self.m)
            self.A[self.p:] = 1.0

    # -- structure -----------------------------------------------------------

    def _build_pattern(self, perm):
        p, J, m = self.p, self.J, self.m
        rows, cols = [], []
        bi, bj = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
        rows.append(bi.ravel())
        cols.append(bj.ravel())
        if J:
            gi, gj = np.meshgrid(np.arange(p), p + np.arange(J), indexing="ij")
            rows += [gi.ravel(), gj.ravel()]
            cols += [gj.ravel(), gi.ravel()]
            if self.constrained:
                di, dj = np.meshgrid(p + np.arange(J), p + np.arange(J), indexing="ij")
                rows.append(di.ravel())
                cols.append(dj.ravel())
            else:
                rows.append(p + np.arange(J))
                cols.append(p + np.arange(J))
                if self.Q is not None:
                    Qc = self.Q.tocoo()
                    off = Qc.row != Qc.col
                    rows.append(p + Qc.row[off])
                    cols.append(p + Qc.col[off])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        pattern = sp.csc_matrix((np.ones(r.size), (r, c)), shape=(m, m))
        self.sym = SymbolicCholesky(pattern, perm)
        self.slot_bb = self.sym.slots(bi.ravel(), bj.ravel())
        if J:
            self.slot_bg = self.sym.slots(gi.ravel(), gj.ravel())
            self.slot_gb = self.sym.slots(gj.ravel(), gi.ravel())
            if self.constrained:
                self.slot_gg = self.sym.slots(di.ravel(), dj.ravel())
            else:
                self.slot_gd = self.sym.slots(p + np.arange(J), p + np.arange(J))
                if self.Q is not None:
                    Qc = self.Q.tocoo()
                    off = Qc.row != Qc.col
                    self.slot_go = self.sym.slots(p + Qc.row[off], p + Qc.col[off])
                    self.go_vals = Qc.data[off]

    # -- hyperparameters -----------------------------------------------------

    def hyper_values(self, theta) -> dict[str, float]:
        """Natural-scale tau, phi, alpha implied by internal ``theta`` plus pins."""
        vals = dict(self.spec.fixed)
        for name, t in zip(self.hyper_names, np.atleast_1d(theta)):
            vals[name] = float(to_natural(name, t))
        if self.spec.effect == "iid":
            vals["phi"] = 0.0
        return vals

    def log_prior_theta(self, theta) -> float:
        pr = self.spec.priors
        lp = 0.0
        for name, t in zip(self.hyper_names, np.atleast_1d(theta)):
            t = float(t)
            if name == "tau":
                lp += log_tau_logprior(t)
            elif name == "phi":
                lp += logit_phi_logprior(t, pr.logit_phi_mean, pr.logit_phi_precision)
            else:
                lp += pc_prior_alpha_logdensity(t, pr.pc_alpha_rate)
        return lp

    def prior_log_norm(self, hv) -> float:
        """Log normalising constant of the latent prior (proper parts)."""
        prec = self.beta_prec[self.beta_prec > 0]
        out = 0.5 * float(np.sum(np.log(prec))) - 0.5 * prec.size * LOG_2PI
        if self.J:
            tau = hv["tau"]
            if self.constrained:
                r = self.Q_rank
                out += 0.5 * r * math.log(tau) + 0.5 * self.Q_logdet_pos - 0.5 * r * LOG_2PI
            else:
                phi = hv.get("phi", 0.0)
                ld = 0.0
                if phi > 0.0:
                    ld = float(np.sum(np.log1p(phi * (self.Q_eig - 1.0))))
                out += 0.5 * self.J * math.log(tau) + 0.5 * ld - 0.5 * self.J * LOG_2PI
        return out

    # -- latent objective ----------------------------------------------------

    def eta(self, x: np.ndarray) -> np.ndarray:
        e = self.X @ x[: self.p]
        if self.J:
            e = e + x[self.p:][self.region]
        return e

    def terms(self, eta, hv):
        if self.family == "logit":
            return bernoulli_logit_terms(eta, self.y)
        alpha = hv["alpha"]
        cumhaz = np.exp(eta + alpha * self.logt)
        ll = self.event * (eta + math.log(alpha) + (alpha - 1.0) * self.logt) - cumhaz
        return ll, self.event - cumhaz, -cumhaz

    def gamma_quad(self, gamma, hv) -> float:
        phi = hv.get("phi", 0.0)
        g2 = float(gamma @ gamma)
        if phi == 0.0:
            return hv["tau"] * g2
        gq = float(gamma @ (self.Q @ gamma))
        return hv["tau"] * ((1.0 - phi) * g2 + phi * gq)

    def prior_times(self, x, hv) -> np.ndarray:
        out = np.empty(self.m)
        out[: self.p] = self.beta_prec * x[: self.p]
        if self.J:
            g = x[self.p:]
            phi = hv.get("phi", 0.0)
            rg = (1.0 - phi) * g
            if phi != 0.0:
                rg = rg + phi * (self.Q @ g)
            out[self.p:] = hv["tau"] * rg
        return out

    def objective(self, x, hv) -> float:
        ll = self.terms(self.eta(x), hv)[0]
        quad = float(x[: self.p] @ (self.beta_prec * x[: self.p]))
        if self.J:
            quad += self.gamma_quad(x[self.p:], hv)
        return float(self.counts @ ll) - 0.5 * quad

    def _derivatives(self, x, hv):
        ll, d1, d2 = self.terms(self.eta(x), hv)
        f = float(self.counts @ ll)
        quad = float(x[: self.p] @ (self.beta_prec * x[: self.p]))
        if self.J:
            quad += self.gamma_quad(x[self.p:], hv)
        f -= 0.5 * quad
        cd1 = self.counts * d1
        cw = -self.counts * d2
        g = np.empty(self.m)
        g[: self.p] = self.X.T @ cd1
        if self.J:
            g[self.p:] = np.bincount(self.region, weights=cd1, minlength=self.J)
        g -= self.prior_times(x, hv)
        return f, g, cw

    def hessian_values(self, cw, hv) -> np.ndarray:
        p, J = self.p, self.J
        vals = np.zeros(self.sym.rows.size)
        Hbb = self.X.T @ (cw[:, None] * self.X)
        Hbb[np.diag_indices(p)] += self.beta_prec
        vals[self.slot_bb] = Hbb.ravel()
        if J:
            Hbg = np.empty((p, J))
            for c in range(p):
                Hbg[c] = np.bincount(self.region, weights=cw * self.X[:, c], minlength=J)
            vals[self.slot_bg] = Hbg.ravel()
            vals[self.slot_gb] = Hbg.ravel()
            dg = np.bincount(self.region, weights=cw, minlength=J)
            tau = hv["tau"]
            phi = hv.get("phi", 0.0)
            if self.constrained:
                # H + A'A: identical to H on the constraint set, nonsingular off it
                G = tau * self.Q.toarray() + 1.0
                G[np.diag_indices(J)] += dg
                vals[self.slot_gg] = G.ravel()
            else:
                diag = dg + tau * (1.0 - phi)
                if self.Q is not None:
                    diag = diag + tau * phi * self.Q_diag
                    vals[self.slot_go] = tau * phi * self.go_vals
                vals[self.slot_gd] = diag
        return vals

    def initial_latent(self) -> np.ndarray:
        x = np.zeros(self.m)
        c = self.counts
        if self.family == "logit":
            pbar = float(c @ self.y) / float(c.sum())
            pbar = min(max(pbar, 1e-6), 1 - 1e-6)
            x[0] = math.log(pbar / (1 - pbar))
        else:
            ev = float(self.event.sum())
            x[0] = math.log(ev / float(self.time.sum()))
        return x


@dataclass
class GaussianApprox:
    """Gaussian approximation of the latent field at one hyperparameter point."""

    theta: np.ndarray
    mode: np.ndarray
    factor: CholeskyFactor | None
    log_det_half: float
    objective: float
    hyper: dict
    constraint_applied: bool = False
    kriging: np.ndarray | None = None  # H^{-1} A'
    kriging_norm: float = 1.0  # A H^{-1} A'
    iterations: int = 0
    n_fixed: int = 0
    _var: np.ndarray | None = field(default=None, repr=False)

    @property
    def precision(self) -> sp.csc_matrix:
        """Precision of the approximation (augmented form when constrained)."""
        sym = self.factor.sym
        n = sym.n
        L = sp.csc_matrix((self.factor.Lx, self.factor.Li, sym.Lp), shape=(n, n))
        Hp = (L @ L.T).tocsc()
        return Hp[sym.iperm][:, sym.iperm].tocsc()

    def variances(self) -> np.ndarray:
        if self._var is None:
            if self.factor is None:
                self._var = np.zeros(self.mode.size)
            else:
                v = self.factor.inverse_diagonal()
                if self.constraint_applied:
                    v = v - self.kriging ** 2 / self.kriging_norm
                    v = np.maximum(v, 0.0)
                self._var = v
        return self._var

    def covariances(self, rows, cols) -> np.ndarray:
        if self.factor is None:
            return np.zeros(len(rows))
        c = self.factor.inverse_entries(rows, cols)
        if self.constraint_applied:
            w = self.kriging
            c = c - w[np.asarray(rows)] * w[np.asarray(cols)] / self.kriging_norm
        return c

    def sample(self, Z: np.ndarray) -> np.ndarray:
        """Latent draws (columns) from standard normal columns ``Z``."""
        if self.factor is None:
            return np.repeat(self.mode[:, None], Z.shape[1], axis=1)
        V = self.factor.solve_lt(Z)
        if self.constraint_applied:
            s = V[self.n_fixed:].sum(axis=0)
            V = V - np.outer(self.kriging, s / self.kriging_norm)
        return self.mode[:, None] + V


def _project(model: LatentModel, step: np.ndarray, W: np.ndarray, c: float) -> np.ndarray:
    s = float(np.sum(step[model.p:]))
    return step - W * (s / c)


def gmrf_mode(model: LatentModel, theta, x0=None) -> GaussianApprox:
    """Newton ascent to the conditional mode of the latent field at ``theta``.

    Step halving keeps every accepted step non-decreasing in the objective.
    With a sum-to-zero constraint each Newton direction is corrected by
    conditioning on the constraint (kriging).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    hv = model.hyper_values(theta)
    x = model.initial_latent() if x0 is None else np.array(x0, dtype=float)
    p = model.p
    if model.constrained:
        x[p:] -= x[p:].mean()

    f, g, cw = model._derivatives(x, hv)
    polished = False
    for it in range(1, MAX_NEWTON + 2):
        try:
            fac = model.sym.factor(model.hessian_values(cw, hv))
        except SingularPrecision as exc:
            raise SingularPrecision(f"{exc} at theta={theta.tolist()}") from None
        W = c = None
        if model.constrained:
            # the A'A term adds -(sum gamma) A to the gradient; zero on the constraint set
            W = fac.solve(model.A)
            c = float(model.A @ W)
            step = _project(model, fac.solve(g), W, c)
            gproj = g.copy()
            gproj[p:] -= gproj[p:].mean()
        else:
            step = fac.solve(g)
            gproj = g
        if polished:
            break
        decrement = float(g @ step)
        if decrement / 2.0 < DECREMENT_TOL or float(np.max(np.abs(gproj))) < GRAD_TOL:
            # one more full step takes the gradient to round-off, then refactor there
            polished = True
            xn = x + step
            if model.constrained:
                xn[p:] -= xn[p:].mean()
            fn, gn, cwn = model._derivatives(xn, hv)
            if fn >= f:
                x, f, g, cw = xn, fn, gn, cwn
                continue
            break
        s = 1.0
        for _ in range(MAX_HALVINGS + 1):
            xn = x + s * step
            if model.constrained:
                xn[p:] -= xn[p:].mean()
            fn, gn, cwn = model._derivatives(xn, hv)
            if fn >= f:
                break
            s *= 0.5
        else:
            if decrement < 1e-6:
                break
            raise NonConvergence(f"line search failed at theta={theta.tolist()}")
        x, f, g, cw = xn, fn, gn, cwn
    else:
        raise NonConvergence(f"Newton iteration cap {MAX_NEWTON} reached at theta={theta.tolist()}")

    approx = GaussianApprox(
        theta=theta,
        mode=x,
        factor=fac,
        log_det_half=0.5 * fac.logdet(),
        objective=f,
        hyper=hv,
        constraint_applied=model.constrained,
        kriging=W,
        kriging_norm=c if c is not None else 1.0,
        iterations=it,
        n_fixed=p,
    )
    return approx


def log_hyper_posterior(model: LatentModel, theta, x0=None) -> tuple[float, GaussianApprox]:
    """Unnormalised log posterior of the hyperparameters (Laplace approximation).

    Returns the value together with the Gaussian approximation it was built on.
    """
    ga = gmrf_mode(model, theta, x0)
    hv = ga.hyper
    lp = ga.objective + model.prior_log_norm(hv) + model.log_prior_theta(ga.theta)
    if model.constrained:
        # Gaussian restricted to {sum gamma = 0}, evaluated at its mode
        lp += -ga.log_det_half - 0.5 * math.log(ga.kriging_norm) + 0.5 * math.log(model.J)
        lp += 0.5 * (model.m - 1) * LOG_2PI
    else:
        lp += -ga.log_det_half + 0.5 * model.m * LOG_2PI
    return lp, ga


# -- hyperparameter exploration ------------------------------------------------


def _in_box(model: LatentModel, theta) -> bool:
    for name, t in zip(model.hyper_names, theta):
        lo, hi = HYPER_BOUNDS[name]
        if not lo <= t <= hi:
            return False
    return True


def _mode_search(model: LatentModel, cache):
    d = len(model.hyper_names)
    theta = np.array([HYPER_START[n] for n in model.hyper_names])
    best, ga = cache(theta, None)
    step = 1.0
    evals = 0
    while step >= MODE_STEP_MIN:
        improved = False
        for k in range(d):
            for sgn in (1.0, -1.0):
                while True:
                    cand = theta.copy()
                    cand[k] += sgn * step
                    if not _in_box(model, cand):
                        break
                    val, gc = cache(cand, ga.mode)
                    evals += 1
                    if val > best:
                        theta, best, ga = cand, val, gc
                        improved = True
                    else:
                        break
        if evals > 5000:
            raise ModeSearchFailure("hyperparameter mode search did not settle")
        if not improved:
            step /= 2.0
    if not np.isfinite(best):
        raise ModeSearchFailure("non-finite log posterior at the hyperparameter mode")
    return theta, best, ga


def _curvature_scales(model: LatentModel, theta, best, ga, cache) -> np.ndarray:
    d = theta.size
    h = HESS_STEP
    H = np.zeros((d, d))
    f = lambda t: cache(t, ga.mode)[0]
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        H[i, i] = (f(theta + e) - 2.0 * best + f(theta - e)) / h ** 2
        for j in range(i):
            e2 = np.zeros(d)
            e2[j] = h
            H[i, j] = H[j, i] = (
                f(theta + e + e2) - f(theta + e - e2) - f(theta - e + e2) + f(theta - e - e2)
            ) / (4.0 * h * h)
    neg = -H
    try:
        np.linalg.cholesky(neg)
        sd = np.sqrt(np.diag(np.linalg.inv(neg)))
    except np.linalg.LinAlgError:
        dg = np.diag(neg)
        sd = np.where(dg > 1e-8, 1.0 / np.sqrt(np.maximum(dg, 1e-8)), 1.0)
        neg = np.diag(np.maximum(dg, 0.0))
    return np.clip(sd, 1e-3, 10.0), neg


def _toward_origin(z: tuple, k: int) -> tuple:
    out = list(z)
    out[k] -= 1 if z[k] > 0 else -1
    return tuple(out)


class _Evaluator:
    """Memoised ``log_hyper_posterior`` keyed on the exact theta bytes."""

    def __init__(self, model: LatentModel):
        self.model = model
        self.memo: dict[bytes, tuple[float, GaussianApprox]] = {}

    def __call__(self, theta, x0):
        theta = np.asarray(theta, dtype=float)
        key = theta.tobytes()
        hit = self.memo.get(key)
        if hit is None:
            hit = log_hyper_posterior(self.model, theta, x0)
            self.memo[key] = hit
        return hit


def explore_hyperparameters(
    model: LatentModel, threads: int = 1
) -> tuple[list[HyperPoint], list[GaussianApprox]]:
    """Locate the hyperparameter mode and lay a weighted grid around it.

    Points are visited breadth first from the mode on an axis-aligned lattice
    scaled by the marginal posterior standard deviations; a point is kept when
    its log density is within ``drop`` of the mode and it does not climb above
    an accepted inward neighbour by more than the quadratic fit at the mode
    allows. The second rule keeps the grid in the basin of the mode: under the
    improper uniform prior on tau the density can rise again towards
    tau = infinity. Each layer may be
    evaluated in parallel; the results do not depend on scheduling because
    every point's warm start is fixed by the lattice order.
    """
    grid = model.spec.grid
    d = len(model.hyper_names)
    ev = _Evaluator(model)
    if d == 0:
        lp, ga = ev(np.zeros(0), None)
        return [HyperPoint(np.zeros(0), lp, 1.0, ())], [ga]

    mode, best, ga0 = _mode_search(model, ev)
    sd, neg = _curvature_scales(model, mode, best, ga0, ev)
    scale = grid.step * sd
    # quadratic model of the log density on the lattice
    negz = neg * np.outer(scale, scale)

    def rise_allowed(nz, nb):
        a = np.array(nz, dtype=float)
        b = np.array(nb, dtype=float)
        return max(0.0, 0.5 * (b @ negz @ b - a @ negz @ a)) + RISE_TOL
    log.info("hyper mode %s (log post %.4f), grid scale %s", mode.round(4).tolist(), best, scale.round(4).tolist())

    origin = (0,) * d
    accepted: dict[tuple, tuple[float, GaussianApprox]] = {origin: (best, ga0)}
    visited = {origin}
    frontier = [origin]
    n_eval = 1
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while frontier:
            cand = {}
            for z in frontier:
                for k in range(d):
                    for sgn in (1, -1):
                        nz = list(z)
                        nz[k] += sgn
                        nz = tuple(nz)
                        if nz in visited or nz in cand:
                            continue
                        th = mode + scale * np.array(nz)
                        if not _in_box(model, th):
                            visited.add(nz)
                            continue
                        cand[nz] = z
            keys = sorted(cand)
            visited.update(keys)
            n_eval += len(keys)
            if n_eval > grid.max_points:
                raise GridExplosion(f"hyperparameter grid exceeded {grid.max_points} points")

            def work(nz):
                return log_hyper_posterior(model, mode + scale * np.array(nz), accepted[cand[nz]][1].mode)

            results = list(pool.map(work, keys)) if pool else [work(z) for z in keys]
            frontier = []
            for nz, res in zip(keys, results):
                if res[0] < best - grid.drop:
                    continue
                # stay in the mode's basin: reject climbs the quadratic model does not predict
                inward = [_toward_origin(nz, k) for k in range(d) if nz[k]]
                if any(nb in accepted and res[0] - accepted[nb][0] <= rise_allowed(nz, nb) for nb in inward):
                    accepted[nz] = res
                    frontier.append(nz)
    finally:
        if pool:
            pool.shutdown()

    keys = sorted(accepted)
    lps = np.array([accepted[z][0] for z in keys])
    w = np.exp(lps - lps.max())
    w = w / math.fsum(w)
    points = [HyperPoint(mode + scale * np.array(z), float(lp), float(wk), z) for z, lp, wk in zip(keys, lps, w)]
    approx = [accepted[z][1] for z in keys]
    log.info("hyper grid: %d accepted of %d evaluated", len(points), n_eval)
    return points, approx


# -- marginals -----------------------------------------------------------------


def _mixture_cdf(x, w, mu, sd):
    return ndtr((x[..., None] - mu) / sd) @ w


def mixture_quantiles(w, mu, var, probs=(0.025, 0.5, 0.975), iters=80) -> np.ndarray:
    """Quantiles of Gaussian mixtures by bisection.

    ``mu`` and ``var`` are ``(K,)`` or ``(K, M)``; returns ``(len(probs), M)``.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float).T)
    sd = np.sqrt(np.atleast_2d(np.asarray(var, dtype=float).T))
    w = np.asarray(w, dtype=float)
    out = []
    for q in probs:
        lo = (mu - 10 * sd).min(axis=1) - 1e-12
        hi = (mu + 10 * sd).max(axis=1) + 1e-12
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                z = (mid[:, None] - mu) / sd
            z = np.where(sd > 0, z, np.where(mid[:, None] >= mu, np.inf, -np.inf))
            below = ndtr(z) @ w < q
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out.append(0.5 * (lo + hi))
    return np.array(out)


def mixture_marginal(w, mu, var, points: int = SUPPORT_POINTS) -> Marginal:
    """Marginal of a one-dimensional Gaussian mixture on mean +- 5 sd."""
    w = np.asarray(w, dtype=float)
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    mean = float(w @ mu)
    sd = math.sqrt(max(float(w @ (var + mu ** 2)) - mean ** 2, 0.0))
    q = mixture_quantiles(w, mu, var)[:, 0]
    quant = {0.025: float(q[0]), 0.5: float(q[1]), 0.975: float(q[2])}
    if sd == 0.0:
        return Marginal(np.array([mean]), np.array([1.0]), mean, 0.0, quant)
    support = np.linspace(mean - 5 * sd, mean + 5 * sd, points)
    s = np.sqrt(var)
    dens = np.exp(-0.5 * ((support[:, None] - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi)) @ w
    dens = dens / np.trapezoid(dens, support)
    return Marginal(support, dens, mean, sd, quant)


def _density_summaries(x, f) -> tuple[float, float, dict]:
    f = f / np.trapezoid(f, x)
    mean = float(np.trapezoid(x * f, x))
    sd = math.sqrt(max(float(np.trapezoid((x - mean) ** 2 * f, x)), 0.0))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    quant = {q: float(np.interp(q, cdf, x)) for q in (0.025, 0.5, 0.975)}
    return mean, sd, quant


def hyper_marginal(name: str, levels, masses, spacing: float, points: int = SUPPORT_POINTS) -> Marginal:
    """Natural-scale marginal of one hyperparameter from grid masses.

    Masses summed over the other axes are interpolated as a log density on
    the internal scale by a natural cubic spline, tails extended linearly by
    one grid step, then carried to the natural scale with the Jacobian.
    """
    levels = np.asarray(levels, dtype=float)
    logd = np.log(np.asarray(masses, dtype=float) / spacing)
    lo, hi = levels[0] - spacing, levels[-1] + spacing
    t = np.linspace(lo, hi, points)
    if levels.size >= 3:
        cs = CubicSpline(levels, logd, bc_type="natural")
        val = cs(t)
        left = t < levels[0]
        right = t > levels[-1]
        s_lo = max(float(cs(levels[0], 1)), 1.0 / spacing)
        s_hi = min(float(cs(levels[-1], 1)), -1.0 / spacing)
        val[left] = logd[0] + s_lo * (t[left] - levels[0])
        val[right] = logd[-1] + s_hi * (t[right] - levels[-1])
        dens_int = np.exp(val - val.max())
    else:
        bw = 0.5 * spacing
        dens_int = np.exp(-0.5 * ((t[:, None] - levels) / bw) ** 2) @ np.exp(logd - logd.max())
    x = to_natural(name, t)
    if name == "tau":
        jac = x
    elif name == "phi":
        jac = x * (1.0 - x)
    else:
        jac = ALPHA_SCALE * x
    dens = dens_int / jac
    dens = dens / np.trapezoid(dens, x)
    mean, sd, quant = _density_summaries(x, dens)
    return Marginal(x, dens, mean, sd, quant)


def latent_marginals(model: LatentModel, points: list[HyperPoint], approx: list[GaussianApprox]) -> FitResult:
    """Mix the per-point Gaussians into latent and hyperparameter marginals."""
    if not points:
        raise EmptyGrid("no hyperparameter points to integrate over")
    spec = model.spec
    w = np.array([pt.weight for pt in points])
    modes = np.array([ga.mode for ga in approx])
    var = np.array([ga.variances() for ga in approx])

    mean = w @ modes
    sd = np.sqrt(np.maximum(w @ (var + modes ** 2) - mean ** 2, 0.0))

    # weibull intercepts are reported for the original time unit:
    # beta_0 - alpha log(scale) and, on the AFT scale, zeta_0 + log(scale)
    shift = np.zeros(len(approx))
    if spec.family == "weibull":
        alphas = np.array([ga.hyper["alpha"] for ga in approx])
        shift = alphas * math.log(model.data.time_scale)
    fixed = {}
    for i, name in enumerate(spec.fixed_names):
        fixed[name] = mixture_marginal(w, modes[:, i] - (shift if i == 0 else 0.0), var[:, i])

    random = {}
    if model.J:
        p = model.p
        q = mixture_quantiles(w, modes[:, p:], var[:, p:])
        random = {
            "mean": mean[p:],
            "sd": sd[p:],
            "q0.025": q[0],
            "q0.5": q[1],
            "q0.975": q[2],
        }

    hyper = {}
    if points[0].theta.size:
        thetas = np.array([pt.theta for pt in points])
        idx = np.array([pt.index for pt in points])
        for k, name in enumerate(model.hyper_names):
            lv = np.unique(idx[:, k])
            masses = np.array([w[idx[:, k] == z].sum() for z in lv])
            origin = thetas[0, k] - idx[0, k] * _axis_spacing(thetas[:, k], idx[:, k])
            spacing = _axis_spacing(thetas[:, k], idx[:, k])
            hyper[name] = hyper_marginal(name, origin + spacing * lv, masses, spacing)

    aft = {}
    if spec.family == "weibull":
        for i, name in enumerate(spec.fixed_names):
            mu = -(modes[:, i] - (shift if i == 0 else 0.0)) / alphas
            aft[name] = mixture_marginal(w, mu, var[:, i] / alphas ** 2)

    res = FitResult(
        spec=spec,
        fixed_marginals=fixed,
        random_summaries=random,
        hyper_marginals=hyper,
        hyper_grid=list(points),
        components=list(approx),
        region_ids=tuple(model.graph.ids),
        time_scale=model.data.time_scale,
        aft_marginals=aft,
        latent_mean=mean,
        latent_sd=sd,
    )
    res.model = model
    return res


def _axis_spacing(vals, idx) -> float:
    if np.unique(idx).size < 2:
        return 1.0
    i0, i1 = np.argmin(idx), np.argmax(idx)
    return float((vals[i1] - vals[i0]) / (idx[i1] - idx[i0]))


def fit(spec: ModelSpec, data: Dataset, graph: RegionGraph, threads: int = 1) -> FitResult:
    """Full approximate posterior: grid exploration followed by marginals."""
    model = LatentModel(spec, data, graph)
    points, approx = explore_hyperparameters(model, threads=threads)
    return latent_marginals(model, points, approx)


__all__ = [
    "GaussianApprox",
    "LatentModel",
    "explore_hyperparameters",
    "fit",
    "gmrf_mode",
    "hyper_marginal",
    "latent_marginals",
    "log_hyper_posterior",
    "mixture_marginal",
    "mixture_quantiles",
    "INTERCEPT",
]
