"""Reference Metropolis-within-Gibbs sampler for desk-scale ground truth.

Deliberately derivative-free and separate from the Laplace engine: blocks
are random-walk Metropolis on the fixed effects (joint, adapted covariance),
single-site updates of the regional effects, a level shift between the
intercept and the regional effects, and a joint block on the internal-scale
hyperparameters. Adaptation stops at the end of burn-in.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .domain import INTERCEPT, Dataset, ModelSpec
from .errors import DegenerateProposal, GuardRailExceeded
from .graph import RegionGraph, repaired_icar
from .laplace import HYPER_BOUNDS, to_natural
from .likelihood import ALPHA_SCALE, pc_prior_alpha_logdensity

MAX_N = 20_000
MAX_J = 100
PC_TABLE_STEP = 0.05
_EULER = 0.5772156649015329


@dataclass
class Chain:
    draws: np.ndarray
    names: tuple[str, ...]
    acceptance_rates: dict[str, float]
    seed: int
    burn_in: int
    thin: int

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def summaries(self) -> dict[str, dict[str, float]]:
        out = {}
        for k, name in enumerate(self.names):
            x = self.draws[:, k]
            out[name] = {"mean": float(x.mean()), "sd": float(x.std(ddof=1)), "mcse": batch_means_mcse(x)}
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.names)
            for row in self.draws:
                w.writerow([repr(float(v)) for v in row])


def batch_means_mcse(x: np.ndarray) -> float:
    """Monte Carlo standard error of the mean by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    n = x.size
    b = max(1, int(math.floor(math.sqrt(n))))
    a = n // b
    if a < 2:
        return float("nan")
    means = x[: a * b].reshape(a, b).mean(axis=1)
    return float(math.sqrt(b * means.var(ddof=1) / n))


@nb.njit(cache=True)
def _cell_ll(fam, eta, a, b, S, log_alpha, alpha):
    # logit: a = row count, b = outcome; weibull: a = events, b = sum of event * log t,
    # S = sum of t^alpha over the cell
    if fam == 0:
        z = eta if b < 0.5 else -eta
        if z > 0:
            return -a * (z + math.log1p(math.exp(-z)))
        return -a * math.log1p(math.exp(z))
    return a * (eta + log_alpha) + (alpha - 1.0) * b - math.exp(eta) * S


@nb.njit(cache=True)
def _total_ll(fam, eta, a, b, S, alpha):
    la = math.log(alpha)
    s = 0.0
    for c in range(eta.size):
        s += _cell_ll(fam, eta[c], a[c], b[c], S[c], la, alpha)
    return s


@nb.njit(cache=True)
def _power_sums(m_off, m_logt, alpha, out):
    for c in range(out.size):
        acc = 0.0
        for q in range(m_off[c], m_off[c + 1]):
            acc += math.exp(alpha * m_logt[q])
        out[c] = acc


@nb.njit(cache=True)
def _pc_interp(table_x0, table_h, table, ap):
    u = (ap - table_x0) / table_h
    i = int(math.floor(u))
    if i < 0 or i >= table.size - 1:
        return -np.inf
    f = u - i
    return (1.0 - f) * table[i] + f * table[i + 1]


@nb.njit(cache=True)
def _hyper_state(hyp_kind, fixed_vals, th):
    # returns tau, phi, alpha
    tau = fixed_vals[0]
    phi = fixed_vals[1]
    alpha = fixed_vals[2]
    for k in range(hyp_kind.size):
        if hyp_kind[k] == 0:
            tau = math.exp(th[k])
        elif hyp_kind[k] == 1:
            phi = 1.0 / (1.0 + math.exp(-th[k]))
        else:
            alpha = math.exp(ALPHA_SCALE * th[k])
    return tau, phi, alpha


@nb.njit(cache=True)
def _gamma_logprior(gamma, tau, phi, constrained, Qp, Qi, Qx, Qeig, rank):
    J = gamma.size
    if J == 0:
        return 0.0
    g2 = 0.0
    for j in range(J):
        g2 += gamma[j] * gamma[j]
    gq = 0.0
    if phi != 0.0:
        for j in range(J):
            acc = 0.0
            for p in range(Qp[j], Qp[j + 1]):
                acc += Qx[p] * gamma[Qi[p]]
            gq += gamma[j] * acc
    if constrained:
        return 0.5 * rank * math.log(tau) - 0.5 * tau * gq
    ld = 0.0
    if phi != 0.0:
        for k in range(Qeig.size):
            ld += math.log1p(phi * (Qeig[k] - 1.0))
    return 0.5 * J * math.log(tau) + 0.5 * ld - 0.5 * tau * ((1.0 - phi) * g2 + phi * gq)


@nb.njit(cache=True)
def _hyper_logprior(hyp_kind, th, lo, hi, phi_mean, phi_prec, pc_x0, pc_h, pc_tab):
    lp = 0.0
    for k in range(hyp_kind.size):
        if th[k] < lo[k] or th[k] > hi[k]:
            return -np.inf
        if hyp_kind[k] == 0:
            lp += th[k]
        elif hyp_kind[k] == 1:
            lp += -0.5 * phi_prec * (th[k] - phi_mean) ** 2
        else:
            lp += _pc_interp(pc_x0, pc_h, pc_tab, th[k])
    return lp


@nb.njit(cache=True)
def _run(
    seed, iters, burn, thin, fam, use_lik,
    X, ca, cb, m_off, m_logt, r_off, r_cells, info,
    beta_prec, J, constrained,
    Qp, Qi, Qx, Qdiag, Qeig, rank,
    hyp_kind, fixed_vals, lo, hi, phi_mean, phi_prec, pc_x0, pc_h, pc_tab,
    beta0, theta0,
):
    np.random.seed(seed)
    n, p = X.shape
    k = hyp_kind.size
    beta = beta0.copy()
    gamma = np.zeros(J)
    th = theta0.copy()
    tau, phi, alpha = _hyper_state(hyp_kind, fixed_vals, th)
    S = np.zeros(n)
    S_new = np.zeros(n)
    if fam == 1:
        _power_sums(m_off, m_logt, alpha, S)
    eta = X @ beta
    cur_ll = _total_ll(fam, eta, ca, cb, S, alpha) if use_lik else 0.0

    ls_b = math.log(2.38 / math.sqrt(p) * 0.1)
    Lb = np.eye(p)
    ls_g = np.full(J, math.log(2.4))
    ls_s = 0.0
    adopted = False
    ls_h = math.log(0.5 / math.sqrt(max(k, 1)))
    Lh = np.eye(k)
    acc = np.zeros(4)
    tries = np.zeros(4)
    win_acc = np.zeros(3)
    win_g = np.zeros(J)
    # running moments for covariance adaptation
    sb = np.zeros(p)
    sbb = np.zeros((p, p))
    nb_ = 0
    sh = np.zeros(k)
    shh = np.zeros((k, k))
    nh = 0

    total = burn + iters
    nkeep = iters // thin
    out = np.empty((nkeep, p + J + k))
    keep = 0
    new_eta = np.empty(n)
    for it in range(total):
        # fixed effects
        z = np.random.standard_normal(p)
        step = math.exp(ls_b) * (Lb @ z)
        prop = beta + step
        d = X @ step
        for i in range(n):
            new_eta[i] = eta[i] + d[i]
        new_ll = _total_ll(fam, new_eta, ca, cb, S, alpha) if use_lik else 0.0
        lr = new_ll - cur_ll
        for c in range(p):
            lr -= 0.5 * beta_prec[c] * (prop[c] ** 2 - beta[c] ** 2)
        tries[0] += 1
        if math.log(np.random.random()) < lr:
            beta = prop
            eta[:] = new_eta
            cur_ll = new_ll
            acc[0] += 1
            win_acc[0] += 1

        if J > 0:
            # single-site regional effects
            la = math.log(alpha)
            for j in range(J):
                # prior precision row (1 - phi) I + phi Q; phi = 1 when constrained
                rjj = (1.0 - phi) + phi * Qdiag[j]
                # proposal scaled by an approximate conditional precision
                dj = math.exp(ls_g[j]) * np.random.standard_normal() / math.sqrt(tau * rjj + info[j])
                gj = gamma[j]
                gn = gj + dj
                lr = 0.0
                if use_lik:
                    for q in range(r_off[j], r_off[j + 1]):
                        i = r_cells[q]
                        lr += _cell_ll(fam, eta[i] + dj, ca[i], cb[i], S[i], la, alpha)
                        lr -= _cell_ll(fam, eta[i], ca[i], cb[i], S[i], la, alpha)
                off = 0.0
                if phi != 0.0:
                    for pp in range(Qp[j], Qp[j + 1]):
                        l = Qi[pp]
                        if l != j:
                            off += Qx[pp] * gamma[l]
                    off *= phi
                lr -= 0.5 * tau * (rjj * (gn * gn - gj * gj) + 2.0 * (gn - gj) * off)
                tries[1] += 1
                if math.log(np.random.random()) < lr:
                    gamma[j] = gn
                    for q in range(r_off[j], r_off[j + 1]):
                        eta[r_cells[q]] += dj
                    acc[1] += 1
                    win_g[j] += 1
            if use_lik:
                cur_ll = _total_ll(fam, eta, ca, cb, S, alpha)

            # level shift between intercept and regional effects
            c = math.exp(ls_s) * np.random.standard_normal() / math.sqrt(1.0 + tau * (1.0 - phi) * J)
            old = _gamma_logprior(gamma, tau, phi, constrained, Qp, Qi, Qx, Qeig, rank)
            for j in range(J):
                gamma[j] -= c
            new = _gamma_logprior(gamma, tau, phi, constrained, Qp, Qi, Qx, Qeig, rank)
            lr = new - old - 0.5 * beta_prec[0] * ((beta[0] + c) ** 2 - beta[0] ** 2)
            tries[2] += 1
            if math.log(np.random.random()) < lr:
                beta[0] += c
                acc[2] += 1
                win_acc[1] += 1
            else:
                for j in range(J):
                    gamma[j] += c

            if constrained:
                mean_g = gamma.sum() / J
                for j in range(J):
                    gamma[j] -= mean_g
                beta[0] += mean_g

        if k > 0:
            z = np.random.standard_normal(k)
            thp = th + math.exp(ls_h) * (Lh @ z)
            lp_new = _hyper_logprior(hyp_kind, thp, lo, hi, phi_mean, phi_prec, pc_x0, pc_h, pc_tab)
            tries[3] += 1
            if lp_new > -np.inf:
                lp_old = _hyper_logprior(hyp_kind, th, lo, hi, phi_mean, phi_prec, pc_x0, pc_h, pc_tab)
                tau_n, phi_n, alpha_n = _hyper_state(hyp_kind, fixed_vals, thp)
                lr = lp_new - lp_old
                lr += _gamma_logprior(gamma, tau_n, phi_n, constrained, Qp, Qi, Qx, Qeig, rank)
                lr -= _gamma_logprior(gamma, tau, phi, constrained, Qp, Qi, Qx, Qeig, rank)
                new_ll = cur_ll
                if alpha_n != alpha and use_lik:
                    _power_sums(m_off, m_logt, alpha_n, S_new)
                    new_ll = _total_ll(fam, eta, ca, cb, S_new, alpha_n)
                    lr += new_ll - cur_ll
                if math.log(np.random.random()) < lr:
                    th = thp
                    if alpha_n != alpha and use_lik:
                        S[:] = S_new
                    tau, phi, alpha = tau_n, phi_n, alpha_n
                    cur_ll = new_ll
                    acc[3] += 1
                    win_acc[2] += 1

        if it < burn:
            if it >= burn // 2:
                nb_ += 1
                sb += beta
                sbb += np.outer(beta, beta)
                if k > 0:
                    nh += 1
                    sh += th
                    shh += np.outer(th, th)
            if (it + 1) % 100 == 0:
                gain = 1.0 / math.sqrt(1.0 + (it + 1) / 100.0)
                ls_b += gain * (win_acc[0] / 100.0 - 0.234) * 3.0
                ls_s += gain * (win_acc[1] / 100.0 - 0.44) * 3.0
                target_h = 0.44 if k == 1 else 0.234
                ls_h += gain * (win_acc[2] / 100.0 - target_h) * 3.0
                for j in range(J):
                    ls_g[j] += gain * (win_g[j] / 100.0 - 0.44) * 3.0
                win_acc[:] = 0.0
                win_g[:] = 0.0
                if nb_ >= 200 and (it + 1) % 1000 == 0:
                    mu = sb / nb_
                    C = sbb / nb_ - np.outer(mu, mu) + 1e-10 * np.eye(p)
                    Lb = np.linalg.cholesky(C)
                    if not adopted:
                        ls_b = math.log(2.38 / math.sqrt(p))
                    if k > 0:
                        mh = sh / nh
                        Ch = shh / nh - np.outer(mh, mh) + 1e-10 * np.eye(k)
                        Lh = np.linalg.cholesky(Ch)
                        if not adopted:
                            ls_h = math.log(2.38 / math.sqrt(k))
                    adopted = True
            if it == burn - 1:
                acc[:] = 0.0
                tries[:] = 0.0
        elif (it - burn) % thin == thin - 1 and keep < nkeep:
            out[keep, :p] = beta
            out[keep, p:p + J] = gamma
            out[keep, p + J:] = th
            keep += 1
    rates = np.empty(4)
    for b in range(4):
        rates[b] = acc[b] / tries[b] if tries[b] > 0 else np.nan
    return out, rates


def _cells(family: str, data: Dataset):
    """Merge rows with equal region, covariates (and outcome, for logit)."""
    Xd = data.design()
    region = np.asarray(data.region, dtype=np.int64)
    if family == "logit":
        key = np.column_stack([region, Xd, np.asarray(data.y, dtype=float)])
        uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        X = np.ascontiguousarray(uniq[:, 1:-1])
        return (X, counts.astype(float), np.ascontiguousarray(uniq[:, -1]),
                np.zeros(1, dtype=np.int64), np.zeros(0), uniq[:, 0].astype(np.int64))
    key = np.column_stack([region, Xd])
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    logt = np.log(np.asarray(data.time, dtype=float))
    ev = np.asarray(data.event, dtype=float)
    C = uniq.shape[0]
    order = np.argsort(inv, kind="stable")
    m_off = np.concatenate([[0], np.cumsum(np.bincount(inv, minlength=C))]).astype(np.int64)
    ca = np.bincount(inv, weights=ev, minlength=C)
    cb = np.bincount(inv, weights=ev * logt, minlength=C)
    return (np.ascontiguousarray(uniq[:, 1:]), ca, cb, m_off,
            np.ascontiguousarray(logt[order]), uniq[:, 0].astype(np.int64))


def _pc_table(rate: float):
    lo, hi = HYPER_BOUNDS["alpha"]
    xs = np.arange(lo, hi + PC_TABLE_STEP / 2, PC_TABLE_STEP)
    xs[np.argmin(np.abs(xs))] = 0.0
    tab = np.array([pc_prior_alpha_logdensity(float(x), float(rate)) for x in xs])
    return float(xs[0]), PC_TABLE_STEP, tab


def mcmc_sample(
    spec: ModelSpec,
    data: Dataset,
    graph: RegionGraph,
    iters: int,
    seed: int,
    burn_in: int | None = None,
    thin: int = 10,
    likelihood: bool = True,
    max_n: int = MAX_N,
    max_regions: int = MAX_J,
) -> Chain:
    """Run one chain; ``iters`` counts post-burn-in iterations.

    Columns of the stored draws: fixed effects, regional effects, then the
    active hyperparameters on their internal scale (``log tau``,
    ``logit phi``, ``alpha_prime``).
    """
    if data.n > max_n or graph.J > max_regions:
        raise GuardRailExceeded(f"oracle limited to n <= {max_n}, J <= {max_regions}")
    if iters < thin or thin < 1:
        raise DegenerateProposal("need iters >= thin >= 1")
    burn = iters // 4 if burn_in is None else int(burn_in)
    if burn < 2000:
        raise DegenerateProposal("burn-in must be at least 2000 iterations for adaptation")

    X, ca, cb, m_off, m_logt, cell_region = _cells(spec.family, data)
    p = X.shape[1]
    fam = 0 if spec.family == "logit" else 1
    J = graph.J if spec.effect != "none" else 0
    r_cells = np.argsort(cell_region, kind="stable").astype(np.int64)
    r_off = np.zeros(max(J, 1) + 1, dtype=np.int64)
    if J:
        r_off[1:] = np.cumsum(np.bincount(cell_region, minlength=J))
    # rough likelihood information per region, used only to scale proposals
    info = np.zeros(max(J, 1))
    if J:
        if fam == 0:
            pbar = float(np.sum(ca * cb) / np.sum(ca))
            w = ca * max(pbar * (1.0 - pbar), 1e-4)
        else:
            w = ca
        np.add.at(info, cell_region, w)

    if spec.effect == "leroux":
        Q = repaired_icar(graph).tocsr()
        Qp, Qi, Qx = Q.indptr.astype(np.int64), Q.indices.astype(np.int64), Q.data.astype(float)
        Qdiag = Q.diagonal().astype(float)
        lam = np.linalg.eigvalsh(Q.toarray())
        Qeig = np.clip(lam, 0.0, None)
        rank = int(np.sum(lam > 1e-9 * max(1.0, lam.max())))
    else:
        Qp = np.zeros(J + 1, dtype=np.int64)
        Qi = np.zeros(0, dtype=np.int64)
        Qx = np.zeros(0)
        Qdiag = np.zeros(J)
        Qeig = np.zeros(0)
        rank = J
    constrained = spec.constrained

    names = spec.hyper_names
    kind_of = {"tau": 0, "phi": 1, "alpha": 2}
    hyp_kind = np.array([kind_of[n] for n in names], dtype=np.int64)
    fixed = spec.fixed
    fixed_vals = np.array([
        fixed.get("tau", 1.0),
        fixed.get("phi", 0.0),
        fixed.get("alpha", 1.0),
    ])
    lo = np.array([HYPER_BOUNDS[n][0] for n in names])
    hi = np.array([HYPER_BOUNDS[n][1] for n in names])
    if "alpha" in names:
        pc_x0, pc_h, pc_tab = _pc_table(spec.priors.pc_alpha_rate)
    else:
        pc_x0, pc_h, pc_tab = 0.0, 1.0, np.zeros(2)
    theta0 = np.array([{"tau": 2.0, "phi": 0.0, "alpha": 0.0}[n] for n in names])

    beta0 = np.zeros(p)
    if likelihood:
        if fam == 0:
            pbar = min(max(float(np.sum(ca * cb) / np.sum(ca)), 1e-4), 1 - 1e-4)
            beta0[0] = math.log(pbar / (1 - pbar))
        else:
            beta0[0] = math.log(ca.sum() / np.exp(m_logt).sum())

    draws, rates = _run(
        int(seed), int(iters), int(burn), int(thin), fam, bool(likelihood),
        X, ca, cb, m_off, m_logt, r_off, r_cells, info,
        np.array([spec.priors.intercept_precision] + [spec.priors.beta_precision] * (p - 1)),
        J, constrained,
        Qp, Qi, Qx, Qdiag, Qeig, rank,
        hyp_kind, fixed_vals, lo, hi,
        spec.priors.logit_phi_mean, spec.priors.logit_phi_precision,
        pc_x0, pc_h, pc_tab,
        beta0, theta0,
    )
    cols = list(spec.fixed_names)
    if J:
        cols += [f"gamma[{r}]" for r in graph.ids]
    cols += [f"theta[{n}]" for n in names]
    blocks = ("beta", "gamma", "shift", "hyper")
    acc = {b: float(r) for b, r in zip(blocks, rates) if np.isfinite(r)}
    return Chain(draws, tuple(cols), acc, int(seed), burn, thin)


def natural_hyper_draws(chain: Chain, names) -> dict[str, np.ndarray]:
    return {n: to_natural(n, chain.column(f"theta[{n}]")) for n in names}
