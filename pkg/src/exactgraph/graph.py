"""Mixed graphs and the structural primitives shared by every other module.

Nodes are ``0..d-1`` inside Python; the text format uses ``1..d``.  Node
sets are passed around as integer bitmasks (bit ``i`` is node ``i``).

One :class:`MixedGraph` type covers DGs, DAGs, DMGs and ADMGs (``hybrid=False``)
as well as hybrid and chain graphs (``hybrid=True``).  In hybrid mode an
undirected edge ``i -- j`` is stored as the pair of directed edges ``(i, j)``
and ``(j, i)``, mirroring the edge-variable convention of the encodings.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator

MAX_NODES = 32


class GraphError(ValueError):
    """Raised for malformed graphs or operations on the wrong kind of graph."""


class GraphClass(str, enum.Enum):
    DG = "dg"
    DAG = "dag"
    DMG = "dmg"
    ADMG = "admg"
    HYBRID = "hybrid"
    CHAIN = "chain"

    @property
    def hybrid(self) -> bool:
        return self in (GraphClass.HYBRID, GraphClass.CHAIN)


# -- bitmask helpers ---------------------------------------------------------

def to_mask(nodes: Iterable[int] | int) -> int:
    if isinstance(nodes, int):
        return nodes
    m = 0
    for v in nodes:
        m |= 1 << v
    return m


def from_mask(mask: int) -> tuple[int, ...]:
    out = []
    v = 0
    while mask:
        if mask & 1:
            out.append(v)
        mask >>= 1
        v += 1
    return tuple(out)


def iter_bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def format_set(mask: int) -> str:
    """Render a node set with 1-based ids, e.g. ``{1,3}``."""
    return "{" + ",".join(str(v + 1) for v in from_mask(mask)) + "}"


# -- the graph type ----------------------------------------------------------

@dataclass(frozen=True)
class MixedGraph:
    """Immutable graph on nodes ``0..d-1``.

    Parameters
    ----------
    d : int
        Number of nodes, at most 32.
    directed : frozenset of (i, j)
        Directed edges ``i -> j``.  In hybrid mode a pair in both directions
        is an undirected edge.
    bidirected : frozenset of (i, j)
        Bidirected edges stored with ``i < j``.  Must be empty in hybrid mode.
    hybrid : bool
        Select the chain-graph reading of ``directed``.
    """

    d: int
    directed: frozenset = field(default_factory=frozenset)
    bidirected: frozenset = field(default_factory=frozenset)
    hybrid: bool = False

    def __post_init__(self):
        if not 0 <= self.d <= MAX_NODES:
            raise GraphError(f"d must be in [0, {MAX_NODES}], got {self.d}")
        directed = frozenset((int(i), int(j)) for i, j in self.directed)
        bidirected = frozenset((min(i, j), max(i, j)) for i, j in self.bidirected)
        for i, j in directed | bidirected:
            if i == j:
                raise GraphError(f"self-loop at node {i + 1}")
            if not (0 <= i < self.d and 0 <= j < self.d):
                raise GraphError(f"edge ({i + 1}, {j + 1}) outside [1, {self.d}]")
        if self.hybrid and bidirected:
            raise GraphError("hybrid graphs cannot carry bidirected edges")
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "bidirected", bidirected)

    # construction helpers

    @classmethod
    def from_edges(cls, d: int, directed=(), bidirected=(), undirected=(),
                   hybrid: bool | None = None) -> "MixedGraph":
        undirected = list(undirected)
        if hybrid is None:
            hybrid = bool(undirected)
        if undirected and not hybrid:
            raise GraphError("undirected edges need hybrid=True")
        dset = set(directed)
        for i, j in undirected:
            dset.add((i, j))
            dset.add((j, i))
        if hybrid:
            for i, j in directed:
                if (j, i) in directed:
                    raise GraphError("use `undirected` for i -- j in hybrid mode")
        return cls(d, frozenset(dset), frozenset(bidirected), hybrid)

    @classmethod
    def from_adjacency(cls, x_dir, x_bid=None, hybrid: bool = False) -> "MixedGraph":
        """Build from 0/1 matrices as read off the edge variables."""
        d = len(x_dir)
        directed = {(i, j) for i in range(d) for j in range(d) if i != j and x_dir[i][j]}
        bidirected = set()
        if x_bid is not None:
            bidirected = {(i, j) for i in range(d) for j in range(i + 1, d)
                          if x_bid[i][j] or x_bid[j][i]}
        return cls(d, frozenset(directed), frozenset(bidirected), hybrid)

    def as_hybrid(self) -> "MixedGraph":
        """Reinterpret a DG without 2-cycles as a hybrid graph."""
        if self.hybrid:
            return self
        if self.bidirected:
            raise GraphError("graph has bidirected edges")
        if any((j, i) in self.directed for i, j in self.directed):
            raise GraphError("directed 2-cycle would read as an undirected edge")
        return MixedGraph(self.d, self.directed, frozenset(), True)

    def as_dmg(self) -> "MixedGraph":
        if not self.hybrid:
            return self
        if self.undirected_edges():
            raise GraphError("graph has undirected edges")
        return MixedGraph(self.d, self.directed, frozenset(), False)

    # edge views

    def arrows(self) -> frozenset:
        """Directed edges proper (undirected pairs excluded in hybrid mode)."""
        if not self.hybrid:
            return self.directed
        return frozenset(e for e in self.directed if (e[1], e[0]) not in self.directed)

    def undirected_edges(self) -> frozenset:
        if not self.hybrid:
            return frozenset()
        return frozenset((i, j) for i, j in self.directed if i < j and (j, i) in self.directed)

    @cached_property
    def out_mask(self) -> tuple[int, ...]:
        """Bitmask of heads ``j`` for every tail ``i`` (including undirected)."""
        m = [0] * self.d
        for i, j in self.directed:
            m[i] |= 1 << j
        return tuple(m)

    @cached_property
    def in_mask(self) -> tuple[int, ...]:
        m = [0] * self.d
        for i, j in self.directed:
            m[j] |= 1 << i
        return tuple(m)

    @cached_property
    def bid_mask(self) -> tuple[int, ...]:
        m = [0] * self.d
        for i, j in self.bidirected:
            m[i] |= 1 << j
            m[j] |= 1 << i
        return tuple(m)

    @cached_property
    def und_mask(self) -> tuple[int, ...]:
        """Undirected neighbours (hybrid mode only; zeros otherwise)."""
        if not self.hybrid:
            return (0,) * self.d
        return tuple(self.out_mask[i] & self.in_mask[i] for i in range(self.d))

    @cached_property
    def adj_mask(self) -> tuple[int, ...]:
        return tuple(self.out_mask[i] | self.in_mask[i] | self.bid_mask[i]
                     for i in range(self.d))

    def adjacent(self, i: int, j: int) -> bool:
        return bool(self.adj_mask[i] >> j & 1)

    def n_edges(self) -> int:
        if self.hybrid:
            return len(self.arrows()) + len(self.undirected_edges())
        return len(self.directed) + len(self.bidirected)

    # text form

    def to_text(self) -> str:
        mode = "hybrid" if self.hybrid else "dmg"
        lines = [f"d={self.d} mode={mode}"]
        for i, j in sorted(self.arrows()):
            lines.append(f"{i + 1} -> {j + 1}")
        for i, j in sorted(self.undirected_edges()):
            lines.append(f"{i + 1} -- {j + 1}")
        for i, j in sorted(self.bidirected):
            lines.append(f"{i + 1} <-> {j + 1}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MixedGraph":
        d = None
        hybrid = False
        directed, bidirected, undirected = [], [], []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("d="):
                fields = dict(tok.split("=", 1) for tok in line.split())
                d = int(fields["d"])
                mode = fields.get("mode", "dmg")
                if mode not in ("dmg", "hybrid"):
                    raise GraphError(f"line {lineno}: unknown mode {mode!r}")
                hybrid = mode == "hybrid"
                continue
            for token, bucket in (("<->", bidirected), ("->", directed), ("--", undirected)):
                if token in line:
                    a, b = line.split(token, 1)
                    try:
                        bucket.append((int(a) - 1, int(b) - 1))
                    except ValueError:
                        raise GraphError(f"line {lineno}: bad edge {raw!r}") from None
                    break
            else:
                raise GraphError(f"line {lineno}: cannot parse {raw!r}")
        if d is None:
            raise GraphError("missing header line 'd=<n> mode=<dmg|hybrid>'")
        if undirected and not hybrid:
            raise GraphError("undirected edges require mode=hybrid")
        return cls.from_edges(d, directed, bidirected, undirected, hybrid=hybrid)

    @classmethod
    def parse(cls, spec: str, d: int | None = None, hybrid: bool | None = None) -> "MixedGraph":
        """Shorthand constructor: ``MixedGraph.parse("1->2, 2<->3, 3--4")``.

        Node ids are 1-based as in the text format; ``d`` defaults to the
        largest id mentioned.
        """
        body = [s.strip() for s in spec.replace(";", ",").split(",") if s.strip()]
        top = 0
        for s in body:
            for tok in s.replace("<->", " ").replace("->", " ").replace("--", " ").split():
                top = max(top, int(tok))
        d = top if d is None else d
        if hybrid is None:
            hybrid = any("--" in s for s in body)
        header = f"d={d} mode={'hybrid' if hybrid else 'dmg'}"
        return cls.from_text("\n".join([header, *body]))

    def __str__(self) -> str:
        parts = [f"{i + 1}->{j + 1}" for i, j in sorted(self.arrows())]
        parts += [f"{i + 1}--{j + 1}" for i, j in sorted(self.undirected_edges())]
        parts += [f"{i + 1}<->{j + 1}" for i, j in sorted(self.bidirected)]
        return f"MixedGraph(d={self.d}: " + ", ".join(parts) + ")"


def read_graph(path) -> MixedGraph:
    with open(path, encoding="utf-8") as fh:
        return MixedGraph.from_text(fh.read())


def write_graph(g: MixedGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(g.to_text())


# -- structural primitives -----------------------------------------------------

def _reach(start: int, succ: tuple[int, ...], within: int = -1) -> int:
    """Closure of ``start`` under ``succ`` restricted to ``within``."""
    seen = start
    frontier = start
    while frontier:
        nxt = 0
        for v in iter_bits(frontier):
            nxt |= succ[v]
        nxt &= within & ~seen
        seen |= nxt
        frontier = nxt
    return seen


def anteriors(g: MixedGraph, nodes) -> int:
    """Nodes with a descending path into ``nodes`` (ancestors for DMGs)."""
    return _reach(to_mask(nodes), g.in_mask)


def descendants(g: MixedGraph, nodes) -> int:
    return _reach(to_mask(nodes), g.out_mask)


def _strict_out(g: MixedGraph) -> tuple[int, ...]:
    return tuple(g.out_mask[i] & ~g.und_mask[i] for i in range(g.d))


def has_directed_cycle(g: MixedGraph) -> bool:
    """Directed cycle over the arrows (undirected hybrid edges ignored)."""
    out = _strict_out(g)
    indeg = [0] * g.d
    for i in range(g.d):
        for j in iter_bits(out[i]):
            indeg[j] += 1
    stack = [v for v in range(g.d) if indeg[v] == 0]
    seen = 0
    while stack:
        v = stack.pop()
        seen += 1
        for w in iter_bits(out[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    return seen < g.d


def topological_order(g: MixedGraph) -> list[int]:
    out = _strict_out(g)
    indeg = [0] * g.d
    for i in range(g.d):
        for j in iter_bits(out[i]):
            indeg[j] += 1
    ready = sorted(v for v in range(g.d) if indeg[v] == 0)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for w in iter_bits(out[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
        ready.sort()
    if len(order) < g.d:
        raise GraphError("graph has a directed cycle")
    return order


def chain_components(g: MixedGraph) -> list[int]:
    """Partition into undirected-connected blocks, as bitmasks in node order."""
    if not g.hybrid:
        raise GraphError("chain components are defined for hybrid graphs")
    blocks = []
    covered = 0
    for v in range(g.d):
        if covered >> v & 1:
            continue
        block = _reach(1 << v, g.und_mask)
        covered |= block
        blocks.append(block)
    return blocks


def has_partially_directed_cycle(g: MixedGraph) -> bool:
    comps = chain_components(g)
    where = [0] * g.d
    for idx, block in enumerate(comps):
        for v in iter_bits(block):
            where[v] = idx
    quotient = set()
    for i, j in g.arrows():
        if where[i] == where[j]:
            return True
        quotient.add((where[i], where[j]))
    return has_directed_cycle(MixedGraph(len(comps), frozenset(quotient)))


def validate_class(g: MixedGraph, cls: GraphClass | str) -> bool:
    """Membership test for the classes of the Hasse diagram."""
    cls = GraphClass(cls)
    if cls.hybrid:
        if not g.hybrid:
            return False
        return cls is GraphClass.HYBRID or not has_partially_directed_cycle(g)
    if g.hybrid and g.undirected_edges():
        return False
    if cls in (GraphClass.DG, GraphClass.DAG) and g.bidirected:
        return False
    if cls in (GraphClass.DAG, GraphClass.ADMG):
        return not has_directed_cycle(g)
    return True


def boundary(g: MixedGraph, nodes) -> int:
    """Nodes outside ``nodes`` with an arrow into it."""
    a = to_mask(nodes)
    out = 0
    for i, j in g.arrows():
        if a >> j & 1 and not a >> i & 1:
            out |= 1 << i
    return out


def moral_adjacency(g: MixedGraph, within: int | None = None) -> tuple[int, ...]:
    """Neighbour masks of the moral graph of the subgraph induced on ``within``.

    Indices stay those of ``g``; nodes outside ``within`` get empty masks.
    """
    if not g.hybrid:
        raise GraphError("moral graphs are taken of hybrid graphs")
    full = (1 << g.d) - 1
    within = full if within is None else within
    adj = [(g.adj_mask[v] & within) if within >> v & 1 else 0 for v in range(g.d)]
    und = [g.und_mask[v] & within for v in range(g.d)]
    covered = 0
    for v in iter_bits(within):
        if covered >> v & 1:
            continue
        tau = _reach(1 << v, und, within)
        covered |= tau
        bd = 0
        for t in iter_bits(tau):
            bd |= g.in_mask[t] & ~g.und_mask[t]
        bd &= within & ~tau
        for a in iter_bits(bd):
            adj[a] |= bd & ~(1 << a)
    return tuple(adj)


def moral_graph(g: MixedGraph) -> MixedGraph:
    adj = moral_adjacency(g)
    und = [(i, j) for i in range(g.d) for j in iter_bits(adj[i]) if i < j]
    return MixedGraph.from_edges(g.d, undirected=und, hybrid=True)


def induced_subgraph(g: MixedGraph, nodes) -> tuple[MixedGraph, tuple[int, ...]]:
    """Subgraph on ``nodes``, re-indexed; returns it with the kept original ids."""
    keep = from_mask(to_mask(nodes))
    pos = {v: k for k, v in enumerate(keep)}
    directed = {(pos[i], pos[j]) for i, j in g.directed if i in pos and j in pos}
    bidirected = {(pos[i], pos[j]) for i, j in g.bidirected if i in pos and j in pos}
    return MixedGraph(len(keep), frozenset(directed), frozenset(bidirected), g.hybrid), keep


def latent_projection(dag: MixedGraph, latent) -> tuple[MixedGraph, tuple[int, ...]]:
    """Marginalise a DAG over ``latent`` nodes.

    ``i -> j`` survives when a directed path from ``i`` to ``j`` has only
    latent interior nodes; ``i <-> j`` appears when some latent node reaches
    both ``i`` and ``j`` along such paths (the trek construction of Verma and
    Pearl).  Returns the ADMG re-indexed onto the observed nodes together with
    their original ids.
    """
    if dag.hybrid or dag.bidirected or has_directed_cycle(dag):
        raise GraphError("latent projection needs a DAG")
    L = to_mask(latent)
    full = (1 << dag.d) - 1
    observed = full & ~L
    keep = from_mask(observed)
    pos = {v: k for k, v in enumerate(keep)}

    def hits(start_children: int) -> int:
        # observed nodes reached through latent-only interiors
        seen_lat = _reach(start_children & L, dag.out_mask, L)
        reach = start_children & observed
        for v in iter_bits(seen_lat):
            reach |= dag.out_mask[v] & observed
        return reach

    directed = set()
    for i in keep:
        for j in iter_bits(hits(dag.out_mask[i])):
            directed.add((pos[i], pos[j]))
    bidirected = set()
    for l in iter_bits(L):
        r = from_mask(hits(dag.out_mask[l]))
        for a in range(len(r)):
            for b in range(a + 1, len(r)):
                bidirected.add((pos[r[a]], pos[r[b]]))
    return MixedGraph(len(keep), frozenset(directed), frozenset(bidirected)), keep
