"""Equivalence-class representatives and evaluation metrics.

Mark matrices follow the usual CPDAG/PAG convention: for the edge between
``i`` and ``j`` the entry ``E[i, j]`` is the mark at ``j`` and ``E[j, i]`` the
mark at ``i``.  So ``i -> j`` is ``E[i, j] = 2, E[j, i] = 3``, ``i -- j`` is
``3, 3`` and ``i <-> j`` is ``2, 2``.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .graph import GraphClass, GraphError, MixedGraph, validate_class
from .separation import Criterion, separated

NONE, CIRCLE, HEAD, TAIL = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class MarkedGraph:
    """A ``d x d`` integer mark matrix (see module docstring)."""

    marks: np.ndarray

    def __post_init__(self):
        m = np.array(self.marks, dtype=np.int8)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("mark matrix must be square")
        if np.any(np.diag(m)):
            raise ValueError("mark matrix must have a zero diagonal")
        if not np.isin(m, (NONE, CIRCLE, HEAD, TAIL)).all():
            raise ValueError("marks must be in {0, 1, 2, 3}")
        if np.any((m == 0) != (m.T == 0)):
            raise ValueError("an edge needs marks at both ends")
        m.setflags(write=False)
        object.__setattr__(self, "marks", m)

    @property
    def d(self) -> int:
        return self.marks.shape[0]

    def __eq__(self, other):
        return isinstance(other, MarkedGraph) and np.array_equal(self.marks, other.marks)

    def __hash__(self):
        return hash(self.marks.tobytes())

    @classmethod
    def from_graph(cls, g: MixedGraph) -> "MarkedGraph":
        """Marks of a graph with at most one edge per pair."""
        m = np.zeros((g.d, g.d), dtype=np.int8)
        for i in range(g.d):
            for j in range(i + 1, g.d):
                kinds = []
                f, b = (i, j) in g.directed, (j, i) in g.directed
                if g.hybrid and f and b:
                    kinds.append((TAIL, TAIL))
                else:
                    if f:
                        kinds.append((HEAD, TAIL))
                    if b:
                        kinds.append((TAIL, HEAD))
                if (i, j) in g.bidirected:
                    kinds.append((HEAD, HEAD))
                if len(kinds) > 1:
                    raise GraphError(f"pair ({i + 1},{j + 1}) carries several edges; "
                                     "mark matrices hold one edge per pair")
                if kinds:
                    m[i, j], m[j, i] = kinds[0]
        return cls(m)

    def to_graph(self) -> MixedGraph:
        """Inverse of :meth:`from_graph` (circle marks are not convertible)."""
        m = self.marks
        if np.any(m == CIRCLE):
            raise GraphError("circle marks have no graph counterpart")
        directed, bidirected, undirected = set(), set(), set()
        for i in range(self.d):
            for j in range(i + 1, self.d):
                a, b = int(m[i, j]), int(m[j, i])
                if (a, b) == (HEAD, TAIL):
                    directed.add((i, j))
                elif (a, b) == (TAIL, HEAD):
                    directed.add((j, i))
                elif (a, b) == (HEAD, HEAD):
                    bidirected.add((i, j))
                elif (a, b) == (TAIL, TAIL):
                    undirected.add((i, j))
        return MixedGraph.from_edges(self.d, directed, bidirected, undirected,
                                     hybrid=bool(undirected))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"d={self.d}\n")
        for row in self.marks:
            buf.write(",".join(str(int(x)) for x in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MarkedGraph":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("d="):
            raise ValueError("line 1: expected header 'd=<n>'")
        d = int(lines[0][2:])
        rows = [[int(x) for x in ln.split(",")] for ln in lines[1:]]
        if len(rows) != d or any(len(r) != d for r in rows):
            raise ValueError(f"expected a {d}x{d} matrix")
        return cls(np.array(rows))


def read_marked(path) -> MarkedGraph:
    with open(path, encoding="utf-8") as fh:
        return MarkedGraph.from_csv(fh.read())


def write_marked(mg: MarkedGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(mg.to_csv())


# -- essential graph ------------------------------------------------------------

def _meek_rule(rule: int, directed: set, undirected: set, adj) -> bool:
    """Apply one Meek rule once over all edges; return True if anything changed."""
    changed = False
    for a, b in sorted(undirected):
        if (a, b) not in undirected:
            continue
        for i, j in ((a, b), (b, a)):
            if _meek_orients(rule, i, j, directed, undirected, adj):
                undirected.discard((a, b))
                directed.add((i, j))
                changed = True
                break
    return changed


def _meek_orients(rule, i, j, directed, undirected, adj) -> bool:
    """Whether ``rule`` forces the undirected edge ``i -- j`` to ``i -> j``."""
    def und(u, v):
        return (min(u, v), max(u, v)) in undirected

    d = len(adj)
    if rule == 1:
        # k -> i -- j, k and j nonadjacent
        return any((k, i) in directed and not adj[k][j] for k in range(d) if k != j)
    if rule == 2:
        # i -> k -> j
        return any((i, k) in directed and (k, j) in directed for k in range(d))
    if rule == 3:
        # i -- k -> j, i -- l -> j, k and l nonadjacent
        ks = [k for k in range(d) if und(i, k) and (k, j) in directed]
        return any(not adj[k][l] for k, l in combinations(ks, 2))
    if rule == 4:
        # i -- k -> l -> j with i adjacent to l and k, j nonadjacent
        for k in range(d):
            if not und(i, k) or adj[k][j]:
                continue
            for l in range(d):
                if (k, l) in directed and (l, j) in directed and adj[i][l]:
                    return True
        return False
    raise ValueError(rule)


def cpdag_from_dag(g: MixedGraph, rule_order=(1, 2, 3, 4)) -> MarkedGraph:
    """Essential graph of a DAG: skeleton, v-structures, Meek closure.

    Parameters
    ----------
    g : MixedGraph
        A DAG.
    rule_order : sequence of int
        Order in which Meek rules are tried in every sweep; the fixpoint does
        not depend on it.

    Examples
    --------
    >>> print(cpdag_from_dag(MixedGraph.parse("1->2")).to_graph())
    MixedGraph(d=2: 1--2)
    """
    if g.hybrid or not validate_class(g, GraphClass.DAG):
        raise GraphError("cpdag_from_dag needs a DAG")
    d = g.d
    adj = [[g.adjacent(i, j) for j in range(d)] for i in range(d)]
    directed = set()
    for k in range(d):
        parents = [i for i in range(d) if (i, k) in g.directed]
        for a, b in combinations(parents, 2):
            if not adj[a][b]:
                directed.add((a, k))
                directed.add((b, k))
    undirected = {(min(i, j), max(i, j)) for i, j in g.directed
                  if (i, j) not in directed}
    changed = True
    while changed:
        changed = False
        for rule in rule_order:
            changed |= _meek_rule(rule, directed, undirected, adj)
    m = np.zeros((d, d), dtype=np.int8)
    for i, j in directed:
        m[i, j], m[j, i] = HEAD, TAIL
    for i, j in undirected:
        m[i, j] = m[j, i] = TAIL
    return MarkedGraph(m)


def representative(g: MixedGraph, cls) -> MarkedGraph:
    """Essential graph for DAGs; the graph's own marks otherwise."""
    if GraphClass(cls) is GraphClass.DAG:
        return cpdag_from_dag(g)
    return MarkedGraph.from_graph(g)


# -- metrics ---------------------------------------------------------------------

def _check_dims(E: MarkedGraph, O: MarkedGraph):
    if E.d != O.d:
        raise ValueError(f"dimension mismatch: {E.d} vs {O.d}")


def shd(E: MarkedGraph, O: MarkedGraph) -> int:
    """Number of differing mark-matrix entries (both triangles)."""
    _check_dims(E, O)
    return int(np.count_nonzero(E.marks != O.marks))


def k_sep_distance(E: MixedGraph, O: MixedGraph, k=None, criterion="d") -> int:
    """Separation disagreements over ordered pairs and ``|C| <= k``.

    ``k=None`` means ``d - 2``.  Each unordered triple is counted twice, as
    the metric sums over ordered pairs.
    """
    if E.d != O.d:
        raise ValueError(f"dimension mismatch: {E.d} vs {O.d}")
    crit = Criterion(criterion)
    d = E.d
    k = max(d - 2, 0) if k is None else int(k)
    if not 0 <= k <= max(d - 2, 0):
        raise ValueError(f"k must be in [0, {max(d - 2, 0)}]")
    total = 0
    for i in range(d):
        for j in range(i + 1, d):
            rest = [v for v in range(d) if v not in (i, j)]
            for size in range(k + 1):
                for C in combinations(rest, size):
                    mask = sum(1 << v for v in C)
                    if separated(E, i, j, mask, crit) != separated(O, i, j, mask, crit):
                        total += 2
    return total


def _rates(A: np.ndarray, B: np.ndarray) -> tuple[float, float]:
    """Row-averaged FDR and FNR of estimated indicator ``A`` against truth ``B``."""
    d = A.shape[0]
    tp = (A & B).sum(axis=1)
    fp = (A & ~B).sum(axis=1)
    fn = (~A & B).sum(axis=1)
    fdr = float(np.sum(fp / np.maximum(tp + fp, 1))) / d
    fnr = float(np.sum(fn / np.maximum(tp + fn, 1))) / d
    return fdr, fnr


def _f1(fdr: float, fnr: float) -> float:
    den = 2.0 - fdr - fnr
    if den <= 0:
        return 0.0
    return 2.0 * (1.0 - fdr) * (1.0 - fnr) / den


def f1_scores(E: MarkedGraph, O: MarkedGraph) -> dict:
    """Head- and tail-specific F1 (with the FDR and FNR they are built from).

    Heads are the entries equal to 2; tails are the entries equal to 3 of the
    transposed matrices.  Rates are averaged over rows with ``max(., 1)``
    guards in the denominators.
    """
    _check_dims(E, O)
    out = {}
    for name, code, tr in (("head", HEAD, False), ("tail", TAIL, True)):
        e = E.marks.T if tr else E.marks
        o = O.marks.T if tr else O.marks
        fdr, fnr = _rates(e == code, o == code)
        out[name] = _f1(fdr, fnr)
        out[f"{name}_fdr"] = fdr
        out[f"{name}_fnr"] = fnr
    return out


__all__ = ["MarkedGraph", "cpdag_from_dag", "representative", "shd", "k_sep_distance",
           "f1_scores", "read_marked", "write_marked", "NONE", "CIRCLE", "HEAD", "TAIL"]
