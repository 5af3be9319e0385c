"""Graphical separation and distance oracles.

These functions are the semantic reference for every encoding: they are
written directly from the graphical definitions, never from the integer
program, so that agreement between the two is meaningful.

Criteria
--------
``D`` / ``M``
    d-/m-separation (colliders in ``an(C)``, noncolliders outside ``C``).
``DC`` / ``MC``
    d_c-/m_c-separation (colliders in ``C`` itself, walks allowed).
``C``
    Chain-graph separation via the moral graph of ``G[an({i,j} u C)]``.

All node arguments are 0-based; conditioning sets are bitmasks.
"""
from __future__ import annotations

import enum
from collections import deque
from typing import Iterable

from .graph import (
    GraphError,
    MixedGraph,
    anteriors,
    from_mask,
    iter_bits,
    moral_adjacency,
    to_mask,
)


class Criterion(str, enum.Enum):
    D = "d"
    DC = "dc"
    M = "m"
    MC = "mc"
    C = "c"

    @property
    def walk_based(self) -> bool:
        return self in (Criterion.DC, Criterion.MC)


class DistanceKind(str, enum.Enum):
    D_DIST = "d"
    M_DIST = "m"
    MC_DIST = "mc"
    DECOMPOSABLE = "decomposable"
    BIDIRECTED = "bidirected"
    SEMI_BIDIRECTED = "semi_bidirected"
    ANTERIOR = "anterior"
    UNDIRECTED = "undirected"


def n_tilde(d: int) -> int:
    """Upper bound on the length of a shortest m_c-connecting walk."""
    return d - 1 if d < 4 else 2 * d - 4


def a_graph(d: int, criterion: Criterion | str) -> int:
    """Largest finite length value for a criterion (sentinel is one more)."""
    crit = Criterion(criterion)
    return n_tilde(d) if crit.walk_based else d - 1


# -- internals ---------------------------------------------------------------

def _dmg_view(g: MixedGraph) -> MixedGraph:
    if g.hybrid:
        if g.undirected_edges():
            raise GraphError("d/m-separation needs a graph without undirected edges")
        return g.as_dmg()
    return g


def _incident(g: MixedGraph, v: int):
    """Yield ``(w, head_at_v, head_at_w)`` for every edge at ``v``."""
    for w in iter_bits(g.out_mask[v]):
        yield w, False, True
    for w in iter_bits(g.in_mask[v]):
        yield w, True, False
    for w in iter_bits(g.bid_mask[v]):
        yield w, True, True


def _legal(v: int, head_in: bool, head_out: bool, C: int, collider_ok: int) -> bool:
    if head_in and head_out:
        return bool(collider_ok >> v & 1)
    return not C >> v & 1


def _trivially_separated(i: int, j: int, C: int) -> bool:
    return bool((C >> i & 1) or (C >> j & 1))


def _walk_bfs(g: MixedGraph, i: int, j: int, C: int, collider_ok: int,
              cap: int | None = None) -> int | None:
    """Length of a shortest connecting walk, or ``None``.

    A walk is connecting when every collider lies in ``collider_ok`` and no
    noncollider lies in ``C``.  States are ``(node, arrived_with_head)``.
    """
    dist = {}
    queue = deque()
    for w, _, hw in _incident(g, i):
        if (w, hw) not in dist:
            dist[(w, hw)] = 1
            queue.append((w, hw))
    while queue:
        v, h = queue.popleft()
        depth = dist[(v, h)]
        if v == j:
            return depth
        if cap is not None and depth >= cap:
            continue
        for w, hv, hw in _incident(g, v):
            if not _legal(v, h, hv, C, collider_ok):
                continue
            if (w, hw) not in dist:
                dist[(w, hw)] = depth + 1
                queue.append((w, hw))
    return None


def _path_bfs(g: MixedGraph, i: int, j: int, C: int, collider_ok: int) -> int | None:
    """Length of a shortest connecting *path* (no repeated node), or ``None``.

    Shortest connecting walks can be strictly shorter than shortest connecting
    paths, so the visited set is part of the search state.
    """
    start = (i, False, 1 << i)
    seen = {start}
    frontier = [start]
    depth = 0
    while frontier:
        depth += 1
        nxt = []
        for v, h, visited in frontier:
            for w, hv, hw in _incident(g, v):
                if visited >> w & 1:
                    continue
                if v != i and not _legal(v, h, hv, C, collider_ok):
                    continue
                if w == j:
                    return depth
                state = (w, hw, visited | 1 << w)
                if state not in seen:
                    seen.add(state)
                    nxt.append(state)
        frontier = nxt
    return None


def _restricted_bfs(succ, i: int, j: int, allowed: int) -> int | None:
    """Shortest path length from ``i`` to ``j`` with interior nodes in ``allowed``."""
    if i == j:
        return 0
    dist = {i: 0}
    queue = deque([i])
    while queue:
        v = queue.popleft()
        for w in iter_bits(succ[v]):
            if w in dist:
                continue
            if w == j:
                return dist[v] + 1
            if allowed >> w & 1:
                dist[w] = dist[v] + 1
                queue.append(w)
    return None


# -- moral-graph machinery for chain graphs ---------------------------------

class _MoralCache:
    """Moral adjacency of ``G[A]`` per anterior mask ``A`` for one graph."""

    def __init__(self, g: MixedGraph):
        self.g = g
        self._an = {}
        self._moral = {}

    def an(self, mask: int) -> int:
        out = self._an.get(mask)
        if out is None:
            out = self._an[mask] = anteriors(self.g, mask)
        return out

    def moral(self, A: int) -> tuple[int, ...]:
        out = self._moral.get(A)
        if out is None:
            out = self._moral[A] = moral_adjacency(self.g, A)
        return out

    def subpath_ok(self, a: int, b: int, nodes: list[int], C: int) -> bool:
        """Is the path ``nodes`` (from ``a`` to ``b``) inside ``(G[an({a,b} u C)])^m``?"""
        A = self.an((1 << a) | (1 << b) | C)
        adj = self.moral(A)
        for v in nodes:
            if not A >> v & 1:
                return False
        for u, v in zip(nodes, nodes[1:]):
            if not adj[u] >> v & 1:
                return False
        return True


_cache_by_graph: dict = {}


def _moral_cache(g: MixedGraph) -> _MoralCache:
    mc = _cache_by_graph.get(g)
    if mc is None:
        if len(_cache_by_graph) > 256:
            _cache_by_graph.clear()
        mc = _cache_by_graph[g] = _MoralCache(g)
    return mc


def _c_connected(g: MixedGraph, i: int, j: int, C: int) -> bool:
    mc = _moral_cache(g)
    A = mc.an((1 << i) | (1 << j) | C)
    return _restricted_bfs(mc.moral(A), i, j, A & ~C) is not None


def _decomposable_distance(g: MixedGraph, i: int, j: int, C: int) -> int | None:
    """Shortest connecting path from ``i`` to ``j`` that is decomposable relative to C.

    Depth-first enumeration of simple paths in the outer moral graph that
    avoid ``C``.  Decomposability is prefix-closed, so every extension checks
    only the subpaths ending at the newly appended node.
    """
    mc = _moral_cache(g)
    A = mc.an((1 << i) | (1 << j) | C)
    adj = mc.moral(A)
    allowed = A & ~C
    best = [None]

    def extend(path: list[int], visited: int):
        if best[0] is not None and len(path) >= best[0]:
            return  # cannot improve: next arrival would have len(path) edges
        v = path[-1]
        for w in iter_bits(adj[v] & allowed & ~visited):
            new = path + [w]
            ok = True
            for pos in range(len(new) - 1):
                if not mc.subpath_ok(new[pos], w, new[pos:], C):
                    ok = False
                    break
            if not ok:
                continue
            if w == j:
                length = len(new) - 1
                if best[0] is None or length < best[0]:
                    best[0] = length
                continue
            extend(new, visited | 1 << w)

    extend([i], 1 << i)
    return best[0]


# -- public API --------------------------------------------------------------

def separated(g: MixedGraph, i: int, j: int, C=0, criterion: Criterion | str = "m") -> bool:
    """Are ``i`` and ``j`` separated given ``C`` under ``criterion``?

    By convention a triple with ``i`` or ``j`` in ``C`` is separated.

    Examples
    --------
    >>> D = MixedGraph.parse("3->1, 1->2, 2->4, 3->4, 4->5, 6->2, 6->4")
    >>> separated(D, 1, 2, 1 << 0, "d")   # 2 and 3 given {1}, 0-based
    True
    """
    if i == j:
        raise ValueError("separation queries need i != j")
    C = to_mask(C)
    if _trivially_separated(i, j, C):
        return True
    crit = Criterion(criterion)
    if crit is Criterion.C:
        if not g.hybrid:
            g = g.as_hybrid()
        return not _c_connected(g, i, j, C)
    g = _dmg_view(g)
    if crit in (Criterion.D, Criterion.DC) and g.bidirected:
        raise GraphError(f"{crit.value}-separation is defined on directed graphs")
    collider_ok = C if crit.walk_based else anteriors(g, C)
    return _walk_bfs(g, i, j, C, collider_ok) is None


def distance(g: MixedGraph, kind: DistanceKind | str, i: int, j: int, C=0) -> int:
    """Exact distance of the requested kind; sentinel when no structure exists.

    Sentinels: ``d`` for D/M/DECOMPOSABLE and the auxiliary kinds,
    ``n_tilde(d) + 1`` for MC.

    Examples
    --------
    >>> G = MixedGraph.parse("1->2, 3->2, 2->5, 5->6, 4->5, 3->4")
    >>> distance(G, "d", 0, 3, 1 << 1)
    3
    """
    kind = DistanceKind(kind)
    if i == j:
        raise ValueError("distances need i != j")
    C = to_mask(C)
    d = g.d

    if kind is DistanceKind.ANTERIOR:
        r = _restricted_bfs(g.out_mask, i, j, (1 << d) - 1)
        return d if r is None else r
    if kind is DistanceKind.UNDIRECTED:
        if not g.hybrid:
            raise GraphError("undirected distance needs a hybrid graph")
        r = _restricted_bfs(g.und_mask, i, j, (1 << d) - 1)
        return d if r is None else r
    if kind is DistanceKind.BIDIRECTED:
        if not (C >> i & 1 and C >> j & 1):
            return d
        r = _restricted_bfs(g.bid_mask, i, j, C)
        return d if r is None else r
    if kind is DistanceKind.SEMI_BIDIRECTED:
        if C >> i & 1 or not C >> j & 1:
            return d
        best = d
        heads = (g.out_mask[i] | g.bid_mask[i]) & C
        for k in iter_bits(heads):
            if k == j:
                return 1
            r = _restricted_bfs(g.bid_mask, k, j, C)
            if r is not None:
                best = min(best, 1 + r)
        return best

    if _trivially_separated(i, j, C):
        raise ValueError("minimal-length distances need i, j outside C")
    if kind is DistanceKind.DECOMPOSABLE:
        if not g.hybrid:
            g = g.as_hybrid()
        r = _decomposable_distance(g, i, j, C)
        return d if r is None else r
    g = _dmg_view(g)
    if kind is DistanceKind.MC_DIST:
        nt = n_tilde(d)
        r = _walk_bfs(g, i, j, C, C, cap=nt)
        return nt + 1 if r is None or r > nt else r
    # D_DIST / M_DIST
    if kind is DistanceKind.D_DIST and g.bidirected:
        raise GraphError("d-distance is defined on directed graphs")
    r = _path_bfs(g, i, j, C, anteriors(g, C))
    return d if r is None else r


def distance_for(criterion: Criterion | str) -> DistanceKind:
    """Distance kind tracked by the minimal-length variables of a criterion."""
    return {
        Criterion.D: DistanceKind.D_DIST,
        Criterion.M: DistanceKind.M_DIST,
        Criterion.DC: DistanceKind.MC_DIST,
        Criterion.MC: DistanceKind.MC_DIST,
        Criterion.C: DistanceKind.DECOMPOSABLE,
    }[Criterion(criterion)]


def slide_exists(g: MixedGraph, i: int, j: int) -> bool:
    """Is there a slide ``i -> i1 -- ... -- j`` (a path, so ``i`` is not revisited)?"""
    if not g.hybrid:
        raise GraphError("slides are defined in hybrid graphs")
    if i == j:
        return False
    strict = g.out_mask[i] & ~g.und_mask[i]
    for k in iter_bits(strict):
        if k == j:
            return True
        if _restricted_bfs(g.und_mask, k, j, ~(1 << i)) is not None:
            return True
    return False


def _family_sets(family) -> Iterable[int]:
    sets = getattr(family, "sets", family)
    return [to_mask(c) for c in sets]


def iter_triples(d: int, family):
    """Canonical triples ``(i, j, C)`` with ``i < j`` and ``i, j`` not in ``C``."""
    sets = _family_sets(family)
    for C in sets:
        for i in range(d):
            if C >> i & 1:
                continue
            for j in range(i + 1, d):
                if not C >> j & 1:
                    yield i, j, C


def all_separations(g: MixedGraph, family, criterion: Criterion | str = "m") -> dict:
    """Map every non-trivial family triple to its separation boolean."""
    return {(i, j, C): separated(g, i, j, C, criterion)
            for i, j, C in iter_triples(g.d, family)}


def markov_equivalent(g1: MixedGraph, g2: MixedGraph, family=None,
                      criterion: Criterion | str = "m") -> bool:
    """Do ``g1`` and ``g2`` agree on every triple of ``family`` (default: all sets)?"""
    if g1.d != g2.d:
        return False
    if family is None:
        family = range(1 << g1.d)
    for i, j, C in iter_triples(g1.d, family):
        if separated(g1, i, j, C, criterion) != separated(g2, i, j, C, criterion):
            return False
    return True


def describe(i: int, j: int, C: int) -> str:
    """1-based human-readable triple label."""
    return f"({i + 1},{j + 1}|{{{','.join(str(v + 1) for v in from_mask(C))}}})"
