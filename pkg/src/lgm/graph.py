"""Region adjacency graphs and the structure matrices of the random-effect priors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import AsymmetricEdge, BadIndex, DuplicateRegion, PhiOutOfRange

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegionGraph:
    """Symmetric adjacency over ``J`` regions.

    ``ids`` keeps the original string identifiers; position in ``ids`` is the
    dense region index used everywhere else.
    """

    ids: tuple[str, ...]
    neighbors: tuple[tuple[int, ...], ...]
    has_isolated: bool = False
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {r: j for j, r in enumerate(self.ids)})
        J = len(self.ids)
        for j, nb in enumerate(self.neighbors):
            for l in nb:
                if not 0 <= l < J:
                    raise BadIndex(f"neighbor index {l} of region {j} outside [0, {J})")
                if l == j:
                    raise BadIndex(f"region {self.ids[j]!r} lists itself as a neighbor")
        for j, nb in enumerate(self.neighbors):
            for l in nb:
                if j not in self.neighbors[l]:
                    raise AsymmetricEdge(self.ids[j], self.ids[l])

    @property
    def J(self) -> int:
        return len(self.ids)

    @property
    def n_neighbors(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors], dtype=np.int64)

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges as ``(j, l)`` with ``j < l``."""
        return [(j, l) for j, nb in enumerate(self.neighbors) for l in nb if j < l]

    @classmethod
    def from_edges(cls, J: int, edges, ids=None) -> "RegionGraph":
        nbs = [set() for _ in range(J)]
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                continue
            nbs[a].add(b)
            nbs[b].add(a)
        if ids is None:
            ids = tuple(str(j) for j in range(J))
        neighbors = tuple(tuple(sorted(s)) for s in nbs)
        return cls(tuple(ids), neighbors, has_isolated=any(len(s) == 0 for s in nbs))


@dataclass(frozen=True)
class SparsePrecision:
    """Symmetric sparse matrix plus an optional linear constraint row."""

    matrix: sp.csc_matrix
    constraint: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def parse_adjacency(text: str) -> RegionGraph:
    """Parse ``<region_id>: <id> <id> ...`` lines into a :class:`RegionGraph`.

    Region order follows first appearance in the text. Blank lines and lines
    starting with ``#`` are ignored. Asymmetric input is rejected, never
    repaired.
    """
    ids: list[str] = []
    raw: list[tuple[int, list[str]]] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if ":" not in s:
            raise BadIndex(f"line {lineno}: expected '<region_id>: <neighbors>'")
        head, _, tail = s.partition(":")
        rid = head.strip()
        if not rid:
            raise BadIndex(f"line {lineno}: empty region identifier")
        if rid in seen:
            raise DuplicateRegion(rid, lineno)
        seen[rid] = len(ids)
        ids.append(rid)
        raw.append((lineno, tail.split()))

    neighbors = []
    for (lineno, toks), rid in zip(raw, ids):
        nb = set()
        for t in toks:
            if t not in seen:
                raise BadIndex(f"line {lineno}: neighbor {t!r} of {rid!r} is not a declared region")
            if t == rid:
                raise BadIndex(f"line {lineno}: region {rid!r} lists itself as a neighbor")
            nb.add(seen[t])
        neighbors.append(tuple(sorted(nb)))

    isolated = [ids[j] for j, nb in enumerate(neighbors) if not nb]
    if isolated:
        log.warning("%d isolated region(s): %s", len(isolated), ", ".join(isolated[:10]))
    return RegionGraph(tuple(ids), tuple(neighbors), has_isolated=bool(isolated))


def format_adjacency(graph: RegionGraph) -> str:
    lines = []
    for rid, nb in zip(graph.ids, graph.neighbors):
        rhs = " ".join(graph.ids[l] for l in nb)
        lines.append(f"{rid}: {rhs}".rstrip() if rhs else f"{rid}:")
    return "\n".join(lines) + "\n"


def _icar_matrix(g: RegionGraph) -> sp.csc_matrix:
    J = g.J
    rows, cols, vals = [], [], []
    for j, nb in enumerate(g.neighbors):
        rows.append(j)
        cols.append(j)
        vals.append(float(len(nb)))
        for l in nb:
            rows.append(j)
            cols.append(l)
            vals.append(-1.0)
    return sp.csc_matrix((vals, (rows, cols)), shape=(J, J))


def icar_structure(g: RegionGraph) -> SparsePrecision:
    """ICAR structure: neighbour counts on the diagonal, -1 for each adjacent pair.

    The all-ones sum-to-zero constraint row is attached.
    """
    return SparsePrecision(_icar_matrix(g), np.ones((1, g.J)))


def leroux_structure(g: RegionGraph, phi: float) -> SparsePrecision:
    """``(1 - phi) I + phi Q``; constrained only in the intrinsic limit ``phi = 1``."""
    phi = float(phi)
    if not 0.0 <= phi <= 1.0 or not np.isfinite(phi):
        raise PhiOutOfRange(phi)
    Q = _icar_matrix(g)
    M = ((1.0 - phi) * sp.identity(g.J, format="csc") + phi * Q).tocsc()
    constraint = np.ones((1, g.J)) if phi == 1.0 else None
    return SparsePrecision(M, constraint)


def repaired_icar(g: RegionGraph) -> sp.csc_matrix:
    """ICAR structure with isolated regions given a unit diagonal.

    An isolated region then carries an exchangeable N(0, 1/tau) effect, which
    keeps the structure usable inside a proper or constrained prior.
    """
    Q = _icar_matrix(g).tolil()
    for j, nb in enumerate(g.neighbors):
        if not nb:
            Q[j, j] = 1.0
    return Q.tocsc()


def lattice_graph(rows: int, cols: int, ids=None) -> RegionGraph:
    """Rook-contiguity lattice."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            j = r * cols + c
            if c + 1 < cols:
                edges.append((j, j + 1))
            if r + 1 < rows:
                edges.append((j, j + cols))
    return RegionGraph.from_edges(rows * cols, edges, ids)


def random_planar_graph(J: int, rng: np.random.Generator, ids=None) -> tuple[RegionGraph, np.ndarray]:
    """Delaunay triangulation of uniform random points in the unit square.

    Returns the graph and the point coordinates (handy for smooth covariates).
    """
    from scipy.spatial import Delaunay

    pts = rng.uniform(size=(J, 2))
    tri = Delaunay(pts)
    edges = set()
    for a, b, c in tri.simplices:
        for u, v in ((a, b), (b, c), (a, c)):
            edges.add((min(u, v), max(u, v)))
    return RegionGraph.from_edges(J, sorted(edges), ids), pts
