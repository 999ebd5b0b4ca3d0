"""Sparse Cholesky factorisation with a fill-reducing ordering and selected inversion.

The symbolic analysis (ordering, elimination tree, pattern of the factor) is
done once per sparsity pattern by :class:`SymbolicCholesky`; numeric
factorisations of matrices with that pattern are then cheap.
"""

from __future__ import annotations

import heapq
import math

import numba as nb
import numpy as np
import scipy.sparse as sp

from .errors import SingularPrecision


def minimum_degree_order(pattern: sp.spmatrix, dense_factor: float = 10.0) -> np.ndarray:
    """Minimum-degree ordering of a symmetric pattern.

    Rows much denser than average (degree above ``dense_factor * sqrt(n)``)
    are withheld and ordered last, as approximate minimum degree codes do.
    Ties break on the lower index so the ordering is deterministic.
    """
    A = sp.csr_matrix(pattern)
    n = A.shape[0]
    adj = [set(A.indices[A.indptr[i]:A.indptr[i + 1]].tolist()) - {i} for i in range(n)]
    limit = max(16.0, dense_factor * math.sqrt(n))
    dense = sorted(i for i in range(n) if len(adj[i]) > limit)
    dense_set = set(dense)
    live = [i for i in range(n) if i not in dense_set]
    nbrs = {i: adj[i] - dense_set for i in live}
    heap = [(len(nbrs[i]), i) for i in live]
    heapq.heapify(heap)
    done = set()
    order = []
    while heap:
        d, i = heapq.heappop(heap)
        if i in done or d != len(nbrs[i]):
            continue
        done.add(i)
        order.append(i)
        clique = nbrs.pop(i)
        for u in clique:
            s = nbrs[u]
            s.discard(i)
            s |= clique
            s.discard(u)
            heapq.heappush(heap, (len(s), u))
    order.extend(dense)
    return np.asarray(order, dtype=np.int64)


@nb.njit(cache=True)
def _etree(n, Ap, Ai):
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


@nb.njit(cache=True)
def _ereach(Ap, Ai, k, parent, s, w, n):
    top = n
    w[k] = k
    for p in range(Ap[k], Ap[k + 1]):
        i = Ai[p]
        if i > k:
            continue
        length = 0
        while w[i] != k:
            s[length] = i
            length += 1
            w[i] = k
            i = parent[i]
        while length > 0:
            top -= 1
            length -= 1
            s[top] = s[length]
    return top


@nb.njit(cache=True)
def _column_counts(n, Ap, Ai, parent):
    counts = np.ones(n, dtype=np.int64)
    s = np.empty(n, dtype=np.int64)
    w = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        top = _ereach(Ap, Ai, k, parent, s, w, n)
        for t in range(top, n):
            counts[s[t]] += 1
    return counts


PIVOT_RTOL = 1e-12


@nb.njit(cache=True)
def _numeric(n, Ap, Ai, Ax, parent, Lp, Li, Lx):
    """Up-looking Cholesky. Returns -1 on success or the failing column."""
    c = Lp[:-1].copy()
    x = np.zeros(n)
    s = np.empty(n, dtype=np.int64)
    w = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        top = _ereach(Ap, Ai, k, parent, s, w, n)
        x[k] = 0.0
        for p in range(Ap[k], Ap[k + 1]):
            if Ai[p] <= k:
                x[Ai[p]] = Ax[p]
        d = x[k]
        d0 = abs(d)
        x[k] = 0.0
        while top < n:
            i = s[top]
            lki = x[i] / Lx[Lp[i]]
            x[i] = 0.0
            for p in range(Lp[i] + 1, c[i]):
                x[Li[p]] -= Lx[p] * lki
            d -= lki * lki
            p = c[i]
            c[i] += 1
            Li[p] = k
            Lx[p] = lki
            top += 1
        # relative test: a singular matrix leaves a round-off sized pivot
        if not d > PIVOT_RTOL * d0:
            return k
        p = c[k]
        c[k] += 1
        Li[p] = k
        Lx[p] = math.sqrt(d)
    return -1


@nb.njit(cache=True)
def _lsolve(n, Lp, Li, Lx, b):
    for j in range(n):
        b[j] /= Lx[Lp[j]]
        bj = b[j]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            b[Li[p]] -= Lx[p] * bj


@nb.njit(cache=True)
def _ltsolve(n, Lp, Li, Lx, b):
    for j in range(n - 1, -1, -1):
        acc = b[j]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            acc -= Lx[p] * b[Li[p]]
        b[j] = acc / Lx[Lp[j]]


@nb.njit(cache=True)
def _ltsolve_many(n, Lp, Li, Lx, B):
    for c in range(B.shape[1]):
        for j in range(n - 1, -1, -1):
            acc = B[j, c]
            for p in range(Lp[j] + 1, Lp[j + 1]):
                acc -= Lx[p] * B[Li[p], c]
            B[j, c] = acc / Lx[Lp[j]]


@nb.njit(cache=True)
def _lookup(Lp, Li, Sx, r, c):
    if r < c:
        r, c = c, r
    lo = Lp[c]
    hi = Lp[c + 1] - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        v = Li[mid]
        if v == r:
            return Sx[mid]
        if v < r:
            lo = mid + 1
        else:
            hi = mid - 1
    return np.nan


@nb.njit(cache=True)
def _lookup_many(Lp, Li, Sx, r, c, out):
    for k in range(r.size):
        out[k] = _lookup(Lp, Li, Sx, r[k], c[k])


@nb.njit(cache=True)
def _takahashi(n, Lp, Li, Lx):
    Sx = np.zeros(Lx.shape[0])
    for i in range(n - 1, -1, -1):
        lii = Lx[Lp[i]]
        for pj in range(Lp[i + 1] - 1, Lp[i], -1):
            j = Li[pj]
            acc = 0.0
            for pk in range(Lp[i] + 1, Lp[i + 1]):
                acc += Lx[pk] * _lookup(Lp, Li, Sx, Li[pk], j)
            Sx[pj] = -acc / lii
        acc = 0.0
        for pk in range(Lp[i] + 1, Lp[i + 1]):
            acc += Lx[pk] * Sx[pk]
        Sx[Lp[i]] = (1.0 / lii - acc) / lii
    return Sx


class SymbolicCholesky:
    """Ordering and factor pattern for a fixed symmetric sparsity pattern.

    ``pattern`` must hold both triangles. ``perm[k]`` is the original index
    placed at position ``k``.
    """

    def __init__(self, pattern: sp.spmatrix, perm: np.ndarray | None = None):
        P = sp.csc_matrix(pattern, dtype=float)
        P.sum_duplicates()
        P.sort_indices()
        n = P.shape[0]
        self.n = n
        self.perm = minimum_degree_order(P) if perm is None else np.asarray(perm, dtype=np.int64)
        self.iperm = np.empty(n, dtype=np.int64)
        self.iperm[self.perm] = np.arange(n)

        coo = P.tocoo()
        self.rows = coo.row.astype(np.int64)
        self.cols = coo.col.astype(np.int64)
        pr = self.iperm[self.rows]
        pc = self.iperm[self.cols]
        # slot order of the permuted CSC matrix
        self._order = np.lexsort((pr, pc))
        self.Ai = pr[self._order].astype(np.int64)
        colcount = np.bincount(pc, minlength=n)
        self.Ap = np.concatenate([[0], np.cumsum(colcount)]).astype(np.int64)
        self._slot = {(int(r), int(c)): k for k, (r, c) in enumerate(zip(self.rows, self.cols))}

        self.parent = _etree(n, self.Ap, self.Ai)
        counts = _column_counts(n, self.Ap, self.Ai, self.parent)
        self.Lp = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.nnz = int(self.Lp[-1])

    def slots(self, rows, cols) -> np.ndarray:
        """Positions of ``(row, col)`` entries in the value vector of the pattern."""
        return np.array([self._slot[(int(r), int(c))] for r, c in zip(rows, cols)], dtype=np.int64)

    def values_from_matrix(self, A: sp.spmatrix) -> np.ndarray:
        A = sp.csr_matrix(A)
        return np.asarray(A[self.rows, self.cols]).ravel()

    def factor(self, values: np.ndarray) -> "CholeskyFactor":
        Ax = np.ascontiguousarray(values[self._order], dtype=float)
        Li = np.empty(self.nnz, dtype=np.int64)
        Lx = np.empty(self.nnz)
        bad = _numeric(self.n, self.Ap, self.Ai, Ax, self.parent, self.Lp, Li, Lx)
        if bad >= 0:
            raise SingularPrecision(
                f"matrix is not positive definite (pivot at original index {int(self.perm[bad])})"
            )
        return CholeskyFactor(self, Li, Lx)


class CholeskyFactor:
    """Numeric factor ``P A P' = L L'``."""

    def __init__(self, sym: SymbolicCholesky, Li: np.ndarray, Lx: np.ndarray):
        self.sym = sym
        self.Li = Li
        self.Lx = Lx
        self._sx = None

    @property
    def n(self) -> int:
        return self.sym.n

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(self.Lx[self.sym.Lp[:-1]])))

    def solve(self, b: np.ndarray) -> np.ndarray:
        s = self.sym
        b = np.asarray(b, dtype=float)
        if b.ndim == 2:
            return np.column_stack([self.solve(b[:, j]) for j in range(b.shape[1])])
        y = np.ascontiguousarray(b[s.perm])
        _lsolve(s.n, s.Lp, self.Li, self.Lx, y)
        _ltsolve(s.n, s.Lp, self.Li, self.Lx, y)
        out = np.empty_like(y)
        out[s.perm] = y
        return out

    def solve_lt(self, Z: np.ndarray) -> np.ndarray:
        """Map standard normal columns ``Z`` to draws with covariance ``A^{-1}``."""
        s = self.sym
        Z = np.array(Z, dtype=float, order="C", ndmin=2)
        if Z.shape[0] != s.n:
            Z = np.ascontiguousarray(Z.T)
        _ltsolve_many(s.n, s.Lp, self.Li, self.Lx, Z)
        out = np.empty_like(Z)
        out[s.perm] = Z
        return out

    def selected_inverse(self) -> np.ndarray:
        """Entries of ``A^{-1}`` on the pattern of ``L`` (permuted order)."""
        if self._sx is None:
            s = self.sym
            self._sx = _takahashi(s.n, s.Lp, self.Li, self.Lx)
        return self._sx

    def inverse_diagonal(self) -> np.ndarray:
        sx = self.selected_inverse()
        d = sx[self.sym.Lp[:-1]]
        out = np.empty(self.n)
        out[self.sym.perm] = d
        return out

    def inverse_entries(self, rows, cols) -> np.ndarray:
        """Entries ``(A^{-1})[rows, cols]``; each pair must lie on the factor pattern."""
        sx = self.selected_inverse()
        s = self.sym
        r = s.iperm[np.asarray(rows, dtype=np.int64)]
        c = s.iperm[np.asarray(cols, dtype=np.int64)]
        out = np.empty(r.size)
        _lookup_many(s.Lp, self.Li, sx, r, c, out)
        bad = np.flatnonzero(np.isnan(out))
        if bad.size:
            k = int(bad[0])
            raise KeyError(f"entry ({rows[k]}, {cols[k]}) is outside the factor pattern")
        return out
