"""Minimal-length integer-programming encodings of graph learning.

:func:`build_program` materialises the integer program for one row of the
class/criterion table:

========  =========  ==========================================================
class     criterion  constraint families
========  =========  ==========================================================
DG        d          C2-C5, N1, Ra/Rb, M1  (or the reduced M1m with ``reduced``)
DAG       d          as DG plus AC
DG        dc         C4-C5, M1c
DAG       dc         C2-C5, N1, AC, M1c
DMG       m          C2-C9, N1, Ra/Rb, O1, G1, P1
ADMG      m          as DMG plus AC
DMG       mc         C4-C11, O1, P1c
ADMG      mc         C2-C11, N1, AC, O1, P1c
CHAIN     c          C2-C5, C12-C13, N1, Ra/Rb, CHa/CHb, W1, Z1, Q1
========  =========  ==========================================================

Every ``target = min(...)`` / ``max(...)`` equality is linearised with one
selector binary per candidate (see :func:`emit_min_equality`); the candidate
("u") expressions are inlined as affine forms and never become variables.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .citest import ConditioningFamily, PValueTable, format_c
from .graph import GraphClass, GraphError, MixedGraph, from_mask, iter_bits
from .separation import Criterion, a_graph, n_tilde

log = logging.getLogger(__name__)

INF = math.inf


class EncodingError(ValueError):
    """Unsupported class/criterion pair or inconsistent program input."""


class InfeasibleAssignment(ValueError):
    """An imported assignment violates a constraint; ``tag`` names the family."""

    def __init__(self, message: str, tag: str | None = None):
        super().__init__(message)
        self.tag = tag


# -- variable references -----------------------------------------------------

#: kinds whose first two indices are an unordered pair (stored with i < j)
UNORDERED = {"X_BID", "L_M", "Z", "L_BID", "Z_BID", "L_UND", "Z_UND"}

_PREFIX = {
    "X_DIR": "x_d", "X_BID": "x_b", "X_STAR": "x_s", "L_M": "l_m", "Z": "z",
    "L_ANT": "l_ant", "D_NOT": "dn", "D_NOT_C": "dnc", "L_BID": "l_b",
    "Z_BID": "z_b", "L_SEMI": "l_sb", "L_UND": "l_u", "Z_UND": "z_u",
}


@dataclass(frozen=True)
class VarRef:
    """A program variable: ``kind`` plus 0-based indices.

    ``key`` holds node indices followed, for C-indexed kinds, by the
    conditioning bitmask.  Selectors use ``key = (tag, serial)``.
    """

    kind: str
    key: tuple

    @property
    def name(self) -> str:
        if self.kind == "SEL":
            tag, serial = self.key
            return f"sel_{tag}_{serial}"
        prefix = _PREFIX[self.kind]
        if self.kind == "D_NOT_C":
            i, C = self.key
            return f"{prefix}_{i + 1}_c{C:x}"
        if self.kind in ("L_M", "Z", "L_BID", "Z_BID", "L_SEMI"):
            i, j, C = self.key
            return f"{prefix}_{i + 1}_{j + 1}_c{C:x}"
        i, j = self.key
        return f"{prefix}_{i + 1}_{j + 1}"


@dataclass(frozen=True)
class LinearConstraint:
    """``sum(coef * var) <sense> rhs`` with integer data; vars are indices."""

    terms: tuple
    sense: str
    rhs: int
    tag: str
    name: str

    def activity(self, values) -> float:
        return sum(c * values[v] for v, c in self.terms)

    def satisfied(self, values, tol: float = 1e-6) -> bool:
        a = self.activity(values)
        if self.sense == "<=":
            return a <= self.rhs + tol
        if self.sense == ">=":
            return a >= self.rhs - tol
        return abs(a - self.rhs) <= tol


@dataclass
class Expr:
    """Affine form ``const + sum(coef * var)`` over variable indices."""

    terms: dict = field(default_factory=dict)
    const: int = 0

    def __add__(self, other):
        out = Expr(dict(self.terms), self.const)
        if isinstance(other, Expr):
            for v, c in other.terms.items():
                out.terms[v] = out.terms.get(v, 0) + c
            out.const += other.const
        else:
            out.const += other
        out.terms = {v: c for v, c in out.terms.items() if c}
        return out

    __radd__ = __add__

    def __mul__(self, k):
        return Expr({v: c * k for v, c in self.terms.items() if c * k}, self.const * k)

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (other * -1 if isinstance(other, Expr) else -other)

    def __rsub__(self, other):
        return (self * -1) + other


def const(k) -> Expr:
    return Expr({}, k)


# -- the program -------------------------------------------------------------

@dataclass
class ProgramMeta:
    cls: str
    criterion: str
    d: int
    family: tuple
    alpha: float | None
    a_G: int
    reduced: bool = False
    hybrid: bool = False


@dataclass
class MilpProgram:
    """Variables with bounds, integer linear rows and a linear objective.

    All variables are integral.  ``objective`` maps variable index to a real
    coefficient; ``objective_constant`` is added so that reported values equal
    the scoring function exactly.
    """

    meta: ProgramMeta
    vars: list
    lb: list
    ub: list
    constraints: list
    objective: dict
    objective_constant: float = 0.0
    _index: dict = field(default=None, repr=False)
    _arrays: object = field(default=None, repr=False)

    def __post_init__(self):
        if self._index is None:
            self._index = {v: k for k, v in enumerate(self.vars)}

    @property
    def n_vars(self) -> int:
        return len(self.vars)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def index(self, ref: VarRef) -> int:
        return self._index[ref]

    def has(self, ref: VarRef) -> bool:
        return ref in self._index

    def var_names(self) -> list[str]:
        return [v.name for v in self.vars]

    def count_by_kind(self) -> dict:
        out = {}
        for v in self.vars:
            out[v.kind] = out.get(v.kind, 0) + 1
        return out

    def count_by_tag(self) -> dict:
        out = {}
        for c in self.constraints:
            out[c.tag] = out.get(c.tag, 0) + 1
        return out

    def arrays(self):
        """``(A, row_lb, row_ub)`` as a CSR matrix; cached and shared by copies."""
        if self._arrays is None:
            from scipy.sparse import csr_matrix
            data, rows, cols = [], [], []
            rlb = np.empty(len(self.constraints))
            rub = np.empty(len(self.constraints))
            for r, c in enumerate(self.constraints):
                for v, coef in c.terms:
                    rows.append(r)
                    cols.append(v)
                    data.append(coef)
                rlb[r] = -INF if c.sense == "<=" else c.rhs
                rub[r] = INF if c.sense == ">=" else c.rhs
            A = csr_matrix((data, (rows, cols)), shape=(len(self.constraints), self.n_vars))
            self._arrays = (A, rlb, rub)
        return self._arrays

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for v, coef in self.objective.items():
            c[v] = coef
        return c

    def objective_value(self, values) -> float:
        return self.objective_constant + sum(c * values[v] for v, c in self.objective.items())

    def with_bounds(self, lb, ub) -> "MilpProgram":
        return replace(self, lb=list(lb), ub=list(ub), _index=self._index, _arrays=self._arrays)

    def check(self, values, tol: float = 1e-6):
        """First violated bound or row as ``(tag, message)``, or ``None``."""
        for k, v in enumerate(self.vars):
            x = values[k]
            if x < self.lb[k] - tol or x > self.ub[k] + tol:
                return "bounds", f"{v.name}={x} outside [{self.lb[k]}, {self.ub[k]}]"
            if abs(x - round(x)) > tol:
                return "integrality", f"{v.name}={x} is not integral"
        for c in self.constraints:
            if not c.satisfied(values, tol):
                return c.tag, f"row {c.name} violated"
        return None

    def value_of(self, values, ref: VarRef, default=None):
        k = self._index.get(ref)
        return default if k is None else values[k]


# -- building blocks -----------------------------------------------------------

class _Builder:
    def __init__(self, meta: ProgramMeta):
        self.meta = meta
        self.vars: list = []
        self.lb: list = []
        self.ub: list = []
        self.index: dict = {}
        self.constraints: list = []
        self._names: set = set()
        self._sel = 0
        self._dnc_hook = None

    # variables

    def var(self, kind: str, key: tuple, lb: int, ub: int) -> int:
        if kind in UNORDERED and key[0] > key[1]:
            key = (key[1], key[0]) + tuple(key[2:])
        ref = VarRef(kind, tuple(key))
        k = self.index.get(ref)
        if k is None:
            k = self.index[ref] = len(self.vars)
            self.vars.append(ref)
            self.lb.append(lb)
            self.ub.append(ub)
        return k

    def get(self, kind: str, key: tuple) -> int:
        if kind in UNORDERED and key[0] > key[1]:
            key = (key[1], key[0]) + tuple(key[2:])
        return self.index[VarRef(kind, tuple(key))]

    def has(self, kind: str, key: tuple) -> bool:
        if kind in UNORDERED and key[0] > key[1]:
            key = (key[1], key[0]) + tuple(key[2:])
        return VarRef(kind, tuple(key)) in self.index

    def v(self, kind: str, *key) -> Expr:
        return Expr({self.get(kind, key): 1}, 0)

    def selector(self, tag: str) -> int:
        self._sel += 1
        return self.var("SEL", (tag, self._sel), 0, 1)

    # ranges

    def bounds(self, e: Expr) -> tuple[int, int]:
        lo = hi = e.const
        for v, c in e.terms.items():
            if c > 0:
                lo += c * self.lb[v]
                hi += c * self.ub[v]
            else:
                lo += c * self.ub[v]
                hi += c * self.lb[v]
        return lo, hi

    # rows

    def add(self, lhs: Expr, sense: str, rhs: Expr | int, tag: str, label: str):
        """Add ``lhs <sense> rhs`` with all variables moved to the left."""
        e = lhs - rhs if isinstance(rhs, Expr) else lhs - const(rhs)
        terms = tuple(sorted((v, c) for v, c in e.terms.items() if c))
        if not terms:
            ok = {"<=": e.const <= 0, ">=": e.const >= 0, "=": e.const == 0}[sense]
            if not ok:
                raise EncodingError(f"constant row {tag} {label} is infeasible")
            return
        name = f"{tag}_{label}" if label else tag
        if name in self._names:
            n = 2
            while f"{name}_{n}" in self._names:
                n += 1
            name = f"{name}_{n}"
        self._names.add(name)
        self.constraints.append(LinearConstraint(terms, sense, -e.const, tag, name))

    def finish(self, objective: dict, constant: float) -> MilpProgram:
        return MilpProgram(self.meta, self.vars, self.lb, self.ub, self.constraints,
                           objective, constant, _index=dict(self.index))


def _prune(b: _Builder, cands, keep_low: bool):
    """Drop candidates that can never be the (unique) extremum."""
    rng = [b.bounds(e) for _, _, e in cands]
    out = []
    for u, (tag_u, lab_u, eu) in enumerate(cands):
        lo_u, hi_u = rng[u]
        dominated = False
        for v in range(len(cands)):
            if v == u:
                continue
            lo_v, hi_v = rng[v]
            if keep_low:
                if hi_v < lo_u or (hi_v == lo_u and not (hi_u == lo_v and u < v)):
                    dominated = True
                    break
            else:
                if lo_v > hi_u or (lo_v == hi_u and not (lo_u == hi_v and u < v)):
                    dominated = True
                    break
        if not dominated:
            out.append((tag_u, lab_u, eu))
    return out


def emit_min_equality(b: _Builder, target: int, cands, tag: str, label: str) -> None:
    """Linearise ``target = min(cands)``.

    ``cands`` is a list of ``(tag, label, Expr)``.  Emits ``target <= c_v``
    for every candidate plus selector binaries ``s_v`` with ``sum(s) >= 1``
    and ``target >= c_v - M_v (1 - s_v)``, ``M_v = ub(c_v) - lb(target)``.
    A single surviving candidate becomes an equality row.
    """
    if not cands:
        raise EncodingError(f"{tag} {label}: empty candidate list")
    t = Expr({target: 1})
    t_lo, t_hi = b.lb[target], b.ub[target]
    cands = [c for c in cands if b.bounds(c[2])[0] <= t_hi]
    if not cands:
        raise EncodingError(f"{tag} {label}: every candidate exceeds the target range")
    cands = _prune(b, cands, keep_low=True)
    if len(cands) == 1:
        b.add(t, "=", cands[0][2], tag, label)
        return
    sels = []
    for ctag, clab, e in cands:
        lo, hi = b.bounds(e)
        if lo < t_hi:
            b.add(t, "<=", e, ctag, clab)
        s = b.selector(tag)
        sels.append(s)
        big = max(0, hi - t_lo)
        # target - e + big * s >= ... written as target >= e - big (1 - s)
        b.add(t - e - Expr({s: big}), ">=", -big, tag + "s", clab)
    b.add(Expr({s: 1 for s in sels}), ">=", 1, tag, label)


def emit_max_equality(b: _Builder, target: int, cands, tag: str, label: str) -> None:
    """Linearise ``target = max(cands)``; the dual of :func:`emit_min_equality`."""
    if not cands:
        raise EncodingError(f"{tag} {label}: empty candidate list")
    t = Expr({target: 1})
    t_lo, t_hi = b.lb[target], b.ub[target]
    cands = [c for c in cands if b.bounds(c[2])[1] >= t_lo]
    if not cands:
        raise EncodingError(f"{tag} {label}: every candidate is below the target range")
    cands = _prune(b, cands, keep_low=False)
    if len(cands) == 1:
        b.add(t, "=", cands[0][2], tag, label)
        return
    sels = []
    for ctag, clab, e in cands:
        lo, hi = b.bounds(e)
        if hi > t_lo:
            b.add(t, ">=", e, ctag, clab)
        s = b.selector(tag)
        sels.append(s)
        big = max(0, t_hi - lo)
        b.add(t - e + Expr({s: big}), "<=", big, tag + "s", clab)
    b.add(Expr({s: 1 for s in sels}), ">=", 1, tag, label)


# -- the class/criterion table ---------------------------------------------

_ROWS = {
    (GraphClass.DG, Criterion.D), (GraphClass.DAG, Criterion.D),
    (GraphClass.DG, Criterion.DC), (GraphClass.DAG, Criterion.DC),
    (GraphClass.DMG, Criterion.M), (GraphClass.ADMG, Criterion.M),
    (GraphClass.DMG, Criterion.MC), (GraphClass.ADMG, Criterion.MC),
    (GraphClass.CHAIN, Criterion.C),
}


def supported_rows() -> list[tuple[str, str]]:
    return sorted((c.value, s.value) for c, s in _ROWS)


def check_row(cls, criterion) -> tuple[GraphClass, Criterion]:
    try:
        cls, crit = GraphClass(cls), Criterion(criterion)
    except ValueError as exc:
        raise EncodingError(str(exc)) from None
    if (cls, crit) not in _ROWS:
        raise EncodingError(
            f"no encoding for class {cls.value!r} with {crit.value}-separation; "
            f"supported: {', '.join(f'{a}+{b}' for a, b in supported_rows())}")
    return cls, crit


def _lab(*nodes, C=None) -> str:
    s = "_".join(str(n + 1) for n in nodes)
    return s if C is None else f"{s}_c{C:x}"


def build_program(cls, criterion, d: int, family: ConditioningFamily,
                  table: PValueTable | None = None, alpha: float = 0.001,
                  reduced: bool = False, missing: str = "error") -> MilpProgram:
    """Build the integer program for one class/criterion row.

    Parameters
    ----------
    cls : GraphClass or str
    criterion : Criterion or str
    d : int
    family : ConditioningFamily
        Conditioning sets; constraint families indexed by C are emitted only
        for these sets.
    table : PValueTable, optional
        Scores; without it the objective is empty (feasibility program).
    alpha : float
        Threshold turning p-values into the target indicator ``p > alpha``.
    reduced : bool
        Use the reduced DG rule set (no L2a/L2b, ``d_not(k, C u {i, j})`` in L4).
        Only available with d-separation.
    missing : {"error", "zero-weight"}
        What to do with family triples that have no p-value.
    """
    cls, crit = check_row(cls, criterion)
    if family.d != d:
        raise EncodingError(f"family is over {family.d} nodes, expected {d}")
    if reduced and crit is not Criterion.D:
        raise EncodingError("the reduced rule set is implemented for d-separation only")
    if d < 2:
        raise EncodingError("need at least two nodes")
    a = a_graph(d, crit)
    meta = ProgramMeta(cls.value, crit.value, d, tuple(family.sets), alpha, a,
                       reduced, cls.hybrid)
    b = _Builder(meta)
    pairs = [(i, j) for i in range(d) for j in range(d) if i != j]
    upairs = [(i, j) for i, j in pairs if i < j]
    triples = list(family.triples())
    dmg = cls in (GraphClass.DMG, GraphClass.ADMG)
    acyclic = cls in (GraphClass.DAG, GraphClass.ADMG)

    # which families of the table row are present
    walk = crit.walk_based
    use_ant = not walk or acyclic           # C2, C3, N1
    use_reach = not walk                    # Ra/Rb
    use_star = dmg                          # C6-C9
    use_bid = dmg                           # O1
    use_semi = crit is Criterion.M          # G1
    use_zbid = crit is Criterion.MC         # C10-C11
    chain = crit is Criterion.C

    # edge variables
    for i, j in pairs:
        b.var("X_DIR", (i, j), 0, 1)
    if dmg:
        for i, j in upairs:
            b.var("X_BID", (i, j), 0, 1)
    if use_star or chain:
        for i, j in pairs:
            b.var("X_STAR", (i, j), 0, 1)

    # anterior distances
    if use_ant:
        for i, j in pairs:
            b.var("L_ANT", (i, j), 1, d)
        for i, j in pairs:
            b.var("D_NOT", (i, j), 0, 1)
        for i, j in pairs:
            l, dn = b.v("L_ANT", i, j), b.v("D_NOT", i, j)
            b.add(l - dn, "<=", d - 1, "C2", _lab(i, j))            # 1 - dn <= d - l
            b.add((d - 1) * dn - l, "<=", -1, "C3", _lab(i, j))     # d - l <= (d-1)(1 - dn)
        for i, j in pairs:
            cands = [("D1", _lab(i, j), d - (d - 1) * b.v("X_DIR", i, j))]
            for k in range(d):
                if k in (i, j):
                    continue
                cands.append(("D2", _lab(i, j, k),
                              (d - 1) + b.v("L_ANT", i, k) - (d - 2) * b.v("X_DIR", k, j)))
            emit_min_equality(b, b.get("L_ANT", (i, j)), cands, "N1", _lab(i, j))
    if acyclic:
        for i, j in upairs:
            b.add(b.v("D_NOT", i, j) + b.v("D_NOT", j, i), ">=", 1, "AC", _lab(i, j))

    def dnc(k: int, C: int) -> Expr:
        """Reach indicator ``d_not(k, C)`` created on demand (Ra/Rb)."""
        if C >> k & 1:
            return const(0)                                          # Rb
        if C == 0:
            return const(1)                                          # Ra, empty C
        if not b.has("D_NOT_C", (k, C)):
            v = b.var("D_NOT_C", (k, C), 0, 1)
            members = list(iter_bits(C))
            for c in members:
                b.add(Expr({v: 1}) - b.v("D_NOT", k, c), "<=", 0, "Ra", _lab(k, C=C))
            b.add(Expr({v: 1}) - sum((b.v("D_NOT", k, c) for c in members), const(0)),
                  ">=", 1 - len(members), "Ra", _lab(k, C=C))
        return b.v("D_NOT_C", k, C)

    # DMG head indicators
    if use_star:
        for i, j in pairs:
            xs, xd = b.v("X_STAR", i, j), b.v("X_DIR", i, j)
            xb = b.v("X_BID", min(i, j), max(i, j))
            b.add(xs - xd - xb, "<=", 0, "C6", _lab(i, j))
            b.add(xd - xs, "<=", 0, "C7", _lab(i, j))
        for i, j in upairs:
            xb = b.v("X_BID", i, j)
            b.add(xb - b.v("X_STAR", i, j), "<=", 0, "C8", _lab(i, j))
            b.add(xb - b.v("X_STAR", j, i), "<=", 0, "C9", _lab(i, j))

    # bidirected distances inside each conditioning set
    if use_bid:
        for C in family.sets:
            inside = list(iter_bits(C))
            for p, q in ((p, q) for p in inside for q in inside if p < q):
                b.var("L_BID", (p, q, C), 1, d)
            for p, q in ((p, q) for p in inside for q in inside if p < q):
                cands = [("F1", _lab(p, q, C=C), d - (d - 1) * b.v("X_BID", p, q))]
                for k in inside:
                    if k in (p, q):
                        continue
                    cands.append(("F2", _lab(p, q, k, C=C),
                                  (d - 1) + b.v("L_BID", p, k, C)
                                  - (d - 2) * b.v("X_BID", min(q, k), max(q, k))))
                cands.append(("O1", _lab(p, q, C=C) + "_const", const(d)))
                emit_min_equality(b, b.get("L_BID", (p, q, C)), cands, "O1", _lab(p, q, C=C))
            if use_zbid:
                for p, q in ((p, q) for p in inside for q in inside if p < q):
                    zb = b.var("Z_BID", (p, q, C), 0, 1)
                    lb_ = b.v("L_BID", p, q, C)
                    b.add(Expr({zb: 1}) + lb_, "<=", d, "C10", _lab(p, q, C=C))
                    b.add(-1 * lb_ - (d - 1) * Expr({zb: 1}), "<=", -d, "C11", _lab(p, q, C=C))

    def lbid(p: int, q: int, C: int) -> Expr:
        return b.v("L_BID", min(p, q), max(p, q), C)

    # semi-bidirected distances
    if use_semi:
        for C in family.sets:
            if not C:
                continue
            inside = list(iter_bits(C))
            for i in range(d):
                if C >> i & 1:
                    continue
                for j in inside:
                    b.var("L_SEMI", (i, j, C), 1, d)
                    cands = [("E1", _lab(i, j, C=C), d - (d - 1) * b.v("X_STAR", i, j))]
                    for k in inside:
                        if k == j:
                            continue
                        cands.append(("E2", _lab(i, j, k, C=C),
                                      (d - 1) + lbid(k, j, C) - (d - 2) * b.v("X_STAR", i, k)))
                    emit_min_equality(b, b.get("L_SEMI", (i, j, C)), cands, "G1", _lab(i, j, C=C))

    # chain graph structure
    if chain:
        for i, j in upairs:
            l_ij, l_ji = b.v("L_ANT", i, j), b.v("L_ANT", j, i)
            dn = (d - 1) * b.v("D_NOT", i, j) + (d - 1) * b.v("D_NOT", j, i)
            b.add(l_ij - l_ji + dn, ">=", 0, "CHa", _lab(i, j))
            b.add(l_ji - l_ij + dn, ">=", 0, "CHb", _lab(i, j))
        for i, j in upairs:
            b.var("L_UND", (i, j), 1, d)
        for i, j in upairs:
            cands = [("U1", _lab(i, j),
                      1 + 2 * (d - 1) - (d - 1) * b.v("X_DIR", i, j) - (d - 1) * b.v("X_DIR", j, i))]
            for k in range(d):
                if k in (i, j):
                    continue
                cands.append(("U2", _lab(i, j, k),
                              1 + 2 * (d - 2) + b.v("L_UND", min(i, k), max(i, k))
                              - (d - 2) * b.v("X_DIR", j, k) - (d - 2) * b.v("X_DIR", k, j)))
            cands.append(("W1", _lab(i, j) + "_const", const(d)))
            emit_min_equality(b, b.get("L_UND", (i, j)), cands, "W1", _lab(i, j))
        for i, j in upairs:
            zu = b.var("Z_UND", (i, j), 0, 1)
            lu = b.v("L_UND", i, j)
            b.add(Expr({zu: 1}) + lu, "<=", d, "C12", _lab(i, j))
            b.add(-1 * lu - (d - 1) * Expr({zu: 1}), "<=", -d, "C13", _lab(i, j))
        for i, j in pairs:
            cands = [("Y1", _lab(i, j), b.v("X_DIR", i, j) - b.v("X_DIR", j, i))]
            for k in range(d):
                if k in (i, j):
                    continue
                cands.append(("Y2", _lab(i, j, k),
                              b.v("X_DIR", i, k) - b.v("X_DIR", k, i)
                              + b.v("Z_UND", min(k, j), max(k, j)) - 1))
            cands.append(("Z1", _lab(i, j) + "_zero", const(0)))
            emit_max_equality(b, b.get("X_STAR", (i, j)), cands, "Z1", _lab(i, j))

    # minimal-length variables and their consistency rows
    for i, j, C in triples:
        b.var("L_M", (i, j, C), 1, a + 1)
    for i, j, C in triples:
        z = b.var("Z", (i, j, C), 0, 1)
        l = b.v("L_M", i, j, C)
        b.add(Expr({z: 1}) + l, "<=", a + 1, "C4", _lab(i, j, C=C))
        b.add(-1 * l - a * Expr({z: 1}), "<=", -(a + 1), "C5", _lab(i, j, C=C))

    def lm(p: int, q: int, C: int) -> Expr:
        return b.v("L_M", min(p, q), max(p, q), C)

    def xd(p, q):
        return b.v("X_DIR", p, q)

    def xs(p, q):
        return b.v("X_STAR", p, q)

    for i, j, C in triples:
        lab = _lab(i, j, C=C)
        outside = [k for k in range(d) if k not in (i, j) and not C >> k & 1]
        inside = list(iter_bits(C))
        cands = []
        if crit is Criterion.D:
            tag = "M1m" if reduced else "M1"
            sfx = "m" if reduced else ""
            cands.append(("L1a" + sfx, lab, d - (d - 1) * xd(i, j)))
            cands.append(("L1b" + sfx, lab, d - (d - 1) * xd(j, i)))
            for k in outside:
                if not reduced:
                    cands.append(("L2a", _lab(i, j, k, C=C), (d - 1) + lm(i, k, C) - (d - 2) * xd(k, j)))
                    cands.append(("L2b", _lab(i, j, k, C=C), (d - 1) + lm(j, k, C) - (d - 2) * xd(k, i)))
            for k in inside:
                cands.append(("L3" + sfx, _lab(i, j, k, C=C),
                              2 + 2 * (d - 2) - (d - 2) * xd(i, k) - (d - 2) * xd(j, k)))
            for k in outside:
                reach = dnc(k, C | (1 << i) | (1 << j)) if reduced else dnc(k, C)
                cands.append(("L4" + sfx, _lab(i, j, k, C=C), lm(i, k, C) + lm(k, j, C) + (d - 2) * reach))
        elif crit is Criterion.M:
            tag = "P1"
            cands.append(("K1a", lab, d - (d - 1) * xs(i, j)))
            cands.append(("K1b", lab, d - (d - 1) * xs(j, i)))
            for k in outside:
                cands.append(("K2a", _lab(i, j, k, C=C), (d - 1) + lm(i, k, C) - (d - 2) * xd(k, j)))
                cands.append(("K2b", _lab(i, j, k, C=C), (d - 1) + lm(j, k, C) - (d - 2) * xd(k, i)))
            for k in inside:
                cands.append(("K3", _lab(i, j, k, C=C), b.v("L_SEMI", i, k, C) + b.v("L_SEMI", j, k, C)))
            for k in outside:
                cands.append(("K4", _lab(i, j, k, C=C), lm(i, k, C) + lm(k, j, C) + (d - 2) * dnc(k, C)))
        elif crit is Criterion.C:
            tag = "Q1"
            cands.append(("I1a", lab, d - (d - 1) * xd(i, j)))
            cands.append(("I1b", lab, d - (d - 1) * xd(j, i)))
            for k in outside:
                cands.append(("I2a", _lab(i, j, k, C=C), (d - 1) + lm(i, k, C) - (d - 2) * xd(k, j)))
                cands.append(("I2b", _lab(i, j, k, C=C), (d - 1) + lm(j, k, C) - (d - 2) * xd(k, i)))
            for k in inside + outside:
                cands.append(("I3", _lab(i, j, k, C=C),
                              1 + 2 * (d - 1) - (d - 1) * xs(i, k) - (d - 1) * xs(j, k)
                              + (d - 1) * dnc(k, C)))
            for k in outside:
                cands.append(("I4", _lab(i, j, k, C=C), lm(i, k, C) + lm(k, j, C) + (d - 2) * dnc(k, C)))
        elif crit is Criterion.DC:
            tag = "M1c"
            nt = n_tilde(d)
            cands.append(("L1ac", lab, 1 + nt - nt * xd(i, j)))
            cands.append(("L1bc", lab, 1 + nt - nt * xd(j, i)))
            for k in outside:
                cands.append(("L2ac", _lab(i, j, k, C=C), nt + lm(i, k, C) - (nt - 1) * xd(k, j)))
                cands.append(("L2bc", _lab(i, j, k, C=C), nt + lm(j, k, C) - (nt - 1) * xd(k, i)))
            for k in inside:
                cands.append(("L3c", _lab(i, j, k, C=C),
                              2 + 2 * (nt - 1) - (nt - 1) * xd(i, k) - (nt - 1) * xd(j, k)))
                for l_ in outside:
                    pen = 2 * (nt - 2)
                    cands.append(("L4ac", _lab(i, j, k, l_, C=C),
                                  2 + pen + lm(j, l_, C) - (nt - 2) * xd(i, k) - (nt - 2) * xd(l_, k)))
                    cands.append(("L4bc", _lab(i, j, k, l_, C=C),
                                  2 + pen + lm(i, l_, C) - (nt - 2) * xd(j, k) - (nt - 2) * xd(l_, k)))
                for l_ in outside:
                    for m_ in outside:
                        pen = 2 * (nt - 3)
                        cands.append(("L5c", _lab(i, j, k, l_, m_, C=C),
                                      2 + pen + lm(i, l_, C) + lm(m_, j, C)
                                      - (nt - 3) * xd(l_, k) - (nt - 3) * xd(m_, k)))
        else:  # MC
            tag = "P1c"
            nt = n_tilde(d)

            def zb(p, q):
                return b.v("Z_BID", min(p, q), max(p, q), C)

            cands.append(("K1ac", lab, 1 + nt - nt * xs(i, j)))
            cands.append(("K1bc", lab, 1 + nt - nt * xs(j, i)))
            for k in outside:
                cands.append(("K2ac", _lab(i, j, k, C=C), nt + lm(i, k, C) - (nt - 1) * xd(k, j)))
                cands.append(("K2bc", _lab(i, j, k, C=C), nt + lm(j, k, C) - (nt - 1) * xd(k, i)))
            for k in inside:
                cands.append(("K3ac", _lab(i, j, k, C=C),
                              2 + 2 * (nt - 1) - (nt - 1) * xs(i, k) - (nt - 1) * xs(j, k)))
            for k1 in inside:
                for k2 in inside:
                    if k1 == k2:
                        continue
                    cands.append(("K3bc", _lab(i, j, k1, k2, C=C),
                                  2 + 3 * (nt - 2) + lbid(k1, k2, C) - (nt - 2) * xs(i, k1)
                                  - (nt - 2) * zb(k1, k2) - (nt - 2) * xs(j, k2)))
            for k in inside:
                for l_ in outside:
                    pen = 2 * (nt - 2)
                    cands.append(("K4ac", _lab(i, j, k, l_, C=C),
                                  2 + pen + lm(j, l_, C) - (nt - 2) * xs(i, k) - (nt - 2) * xd(l_, k)))
                    cands.append(("K4bc", _lab(i, j, k, l_, C=C),
                                  2 + pen + lm(i, l_, C) - (nt - 2) * xs(j, k) - (nt - 2) * xd(l_, k)))
            for k1 in inside:
                for k2 in inside:
                    if k1 == k2:
                        continue
                    for l_ in outside:
                        pen = 3 * (nt - 3)
                        cands.append(("K4cc", _lab(i, j, k1, k2, l_, C=C),
                                      2 + pen + lm(j, l_, C) + lbid(k1, k2, C) - (nt - 3) * xs(i, k1)
                                      - (nt - 3) * zb(k1, k2) - (nt - 3) * xd(l_, k2)))
                        cands.append(("K4dc", _lab(i, j, k1, k2, l_, C=C),
                                      2 + pen + lm(i, l_, C) + lbid(k1, k2, C) - (nt - 3) * xs(j, k1)
                                      - (nt - 3) * zb(k1, k2) - (nt - 3) * xd(l_, k2)))
            for k in inside:
                for l_ in outside:
                    for m_ in outside:
                        pen = 2 * (nt - 3)
                        cands.append(("K5ac", _lab(i, j, k, l_, m_, C=C),
                                      2 + pen + lm(i, l_, C) + lm(m_, j, C)
                                      - (nt - 3) * xd(l_, k) - (nt - 3) * xd(m_, k)))
            for k1 in inside:
                for k2 in inside:
                    if k1 == k2:
                        continue
                    for l_ in outside:
                        for m_ in outside:
                            pen = 3 * (nt - 4)
                            cands.append(("K5bc", _lab(i, j, k1, k2, l_, m_, C=C),
                                          2 + pen + lm(i, l_, C) + lbid(k1, k2, C) + lm(m_, j, C)
                                          - (nt - 4) * xd(l_, k1) - (nt - 4) * zb(k1, k2)
                                          - (nt - 4) * xd(m_, k2)))
        emit_min_equality(b, b.get("L_M", (i, j, C)), cands, tag, lab)

    objective, constant = {}, 0.0
    if table is not None:
        objective, constant = build_objective(b, table, alpha, family, missing)
    return b.finish(objective, constant)


def build_objective(b, table: PValueTable, alpha: float, family: ConditioningFamily,
                    missing: str = "error") -> tuple[dict, float]:
    """Linear objective over the connection indicators ``z``.

    With ``t = 1{p > alpha}`` and ``z = 1`` meaning connected, the term
    ``w * |1{separated} - t|`` equals ``w * (2t - 1) * z + w * (1 - t)``.
    """
    restricted = table.restrict(family, missing)
    objective: dict = {}
    constant = 0.0
    for (i, j, C), (p, w) in restricted.entries.items():
        if w == 0:
            continue
        t = 1 if p > alpha else 0
        z = b.get("Z", (i, j, C)) if isinstance(b, _Builder) else b.index(VarRef("Z", (i, j, C)))
        objective[z] = objective.get(z, 0.0) + w * (2 * t - 1)
        constant += w * (1 - t)
    return objective, constant


def with_objective(program: MilpProgram, table: PValueTable, alpha: float,
                   missing: str = "error") -> MilpProgram:
    """Copy of ``program`` scored against a different table or threshold."""
    family = ConditioningFamily(program.meta.d, program.meta.family)
    obj, const_ = build_objective(program, table, alpha, family, missing)
    meta = replace(program.meta, alpha=alpha)
    return replace(program, meta=meta, objective=obj, objective_constant=const_,
                   _index=program._index, _arrays=program._arrays)


# -- edge fixing and decoding ----------------------------------------------

def edge_values(program: MilpProgram, g: MixedGraph) -> dict:
    """0/1 values of the edge variables representing ``g``."""
    meta = program.meta
    if g.d != meta.d:
        raise EncodingError(f"graph has {g.d} nodes, program has {meta.d}")
    if meta.hybrid:
        if not g.hybrid:
            g = g.as_hybrid()
    else:
        if g.hybrid:
            g = g.as_dmg()
        if g.bidirected and meta.cls in ("dg", "dag"):
            raise EncodingError("bidirected edges in a directed-graph program")
    out = {}
    for i in range(meta.d):
        for j in range(meta.d):
            if i == j:
                continue
            out[VarRef("X_DIR", (i, j))] = int((i, j) in g.directed)
            if meta.cls in ("dmg", "admg") and i < j:
                out[VarRef("X_BID", (i, j))] = int((i, j) in g.bidirected)
    return out


def fix_edges(program: MilpProgram, g: MixedGraph) -> MilpProgram:
    """Pin the edge variables to ``g``; the constraint matrix is shared."""
    lb, ub = list(program.lb), list(program.ub)
    for ref, val in edge_values(program, g).items():
        k = program.index(ref)
        lb[k] = ub[k] = val
    return program.with_bounds(lb, ub)


def decode_graph(program: MilpProgram, values) -> MixedGraph:
    """Graph represented by the (rounded) edge variables of an assignment."""
    meta = program.meta
    d = meta.d
    directed, bidirected = set(), set()
    for i in range(d):
        for j in range(d):
            if i == j:
                continue
            if round(values[program.index(VarRef("X_DIR", (i, j)))]) == 1:
                directed.add((i, j))
            if meta.cls in ("dmg", "admg") and i < j:
                if round(values[program.index(VarRef("X_BID", (i, j)))]) == 1:
                    bidirected.add((i, j))
    return MixedGraph(d, frozenset(directed), frozenset(bidirected), meta.hybrid)


def lengths(program: MilpProgram, values) -> dict:
    """``{(i, j, C): (l, z)}`` read from an assignment."""
    out = {}
    for C in program.meta.family:
        for i in range(program.meta.d):
            for j in range(i + 1, program.meta.d):
                if C >> i & 1 or C >> j & 1:
                    continue
                l = values[program.index(VarRef("L_M", (i, j, C)))]
                z = values[program.index(VarRef("Z", (i, j, C)))]
                out[(i, j, C)] = (int(round(l)), int(round(z)))
    return out


# -- in-process solving --------------------------------------------------------

@dataclass
class MilpResult:
    status: str                  # "optimal", "infeasible", "timeout", "error"
    values: np.ndarray | None
    objective: float | None
    bound: float | None
    message: str = ""


def solve_milp(program: MilpProgram, time_limit: float | None = None,
               feasibility: bool = False) -> MilpResult:
    """Solve with SciPy's HiGHS interface.

    ``feasibility=True`` drops the objective (any feasible point will do).
    """
    from scipy.optimize import Bounds, LinearConstraint as SpLinearConstraint, milp

    A, rlb, rub = program.arrays()
    c = np.zeros(program.n_vars) if feasibility else program.objective_vector()
    # an "optimal" answer must be exactly optimal, not within HiGHS's default 0.01%
    options = {"disp": False, "mip_rel_gap": 0.0}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    cons = [SpLinearConstraint(A, rlb, rub)] if program.n_constraints else []
    res = milp(c, constraints=cons, integrality=np.ones(program.n_vars),
               bounds=Bounds(np.array(program.lb, float), np.array(program.ub, float)),
               options=options)
    if res.x is not None:
        x = np.round(res.x)
        obj = None if feasibility else program.objective_value(x)
        bound = None
        if not feasibility:
            dual = getattr(res, "mip_dual_bound", None)
            bound = None if dual is None else float(dual) + program.objective_constant
        status = "optimal" if res.status == 0 else "timeout"
        return MilpResult(status, x, obj, bound, res.message)
    if res.status == 2:
        return MilpResult("infeasible", None, None, None, res.message)
    if res.status == 1:
        return MilpResult("timeout", None, None, None, res.message)
    return MilpResult("error", None, None, None, res.message)


# -- file formats ------------------------------------------------------------

def export(program: MilpProgram, path, fmt: str = "mps") -> None:
    """Write the program as (free-format) MPS or CPLEX LP, plus a JSON sidecar.

    The sidecar lives at ``<path>.json`` and records the metadata, the
    variable names in order and the objective constant.
    """
    fmt = fmt.lower()
    if fmt == "mps":
        text = to_mps(program)
    elif fmt == "lp":
        text = to_lp(program)
    else:
        raise EncodingError(f"unknown export format {fmt!r}; use 'mps' or 'lp'")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    with open(str(path) + ".json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(sidecar(program), fh, indent=1, sort_keys=True)
        fh.write("\n")


def sidecar(program: MilpProgram) -> dict:
    m = program.meta
    return {
        "class": m.cls, "criterion": m.criterion, "d": m.d,
        "family": [format_c(C) for C in m.family], "alpha": m.alpha, "a_G": m.a_G,
        "reduced": m.reduced, "objective_constant": program.objective_constant,
        "n_vars": program.n_vars, "n_constraints": program.n_constraints,
        "variables": program.var_names(),
    }


def _num(x) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def to_mps(program: MilpProgram) -> str:
    names = program.var_names()
    lines = [f"NAME {program.meta.cls}_{program.meta.criterion}_d{program.meta.d}",
             "OBJSENSE", "    MIN", "ROWS", " N  obj"]
    sense = {"<=": "L", ">=": "G", "=": "E"}
    for c in program.constraints:
        lines.append(f" {sense[c.sense]}  {c.name}")
    cols: list[list] = [[] for _ in names]
    for v, coef in program.objective.items():
        cols[v].append(("obj", coef))
    for c in program.constraints:
        for v, coef in c.terms:
            cols[v].append((c.name, coef))
    lines.append("COLUMNS")
    lines.append("    MARKER  'MARKER'  'INTORG'")
    for v, entries in enumerate(cols):
        if not entries:
            entries = [("obj", 0)]
        for row, coef in entries:
            lines.append(f"    {names[v]}  {row}  {_num(coef)}")
    lines.append("    MARKER  'MARKER'  'INTEND'")
    lines.append("RHS")
    for c in program.constraints:
        if c.rhs:
            lines.append(f"    rhs  {c.name}  {_num(c.rhs)}")
    lines.append("BOUNDS")
    for v, name in enumerate(names):
        lo, hi = program.lb[v], program.ub[v]
        if lo == hi:
            lines.append(f" FX bnd  {name}  {_num(lo)}")
        else:
            lines.append(f" LO bnd  {name}  {_num(lo)}")
            lines.append(f" UP bnd  {name}  {_num(hi)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def _lp_expr(terms, names) -> str:
    parts = []
    for v, coef in terms:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        parts.append(f"{sign} {_num(mag)} {names[v]}" if mag != 1 else f"{sign} {names[v]}")
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else s or "0"


def to_lp(program: MilpProgram) -> str:
    names = program.var_names()
    obj_terms = sorted(program.objective.items())
    lines = ["\\ objective constant: " + _num(program.objective_constant), "Minimize",
             " obj: " + (_lp_expr(obj_terms, names) if obj_terms else "0 " + names[0]),
             "Subject To"]
    for c in program.constraints:
        op = {"<=": "<=", ">=": ">=", "=": "="}[c.sense]
        lines.append(f" {c.name}: {_lp_expr(c.terms, names)} {op} {_num(c.rhs)}")
    lines.append("Bounds")
    for v, name in enumerate(names):
        lines.append(f" {_num(program.lb[v])} <= {name} <= {_num(program.ub[v])}")
    lines.append("General")
    for k in range(0, len(names), 8):
        lines.append(" " + " ".join(names[k:k + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_solution(program: MilpProgram, values, path, status: str = "optimal",
                   objective=None, bound=None) -> None:
    names = program.var_names()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# status={status}\n")
        if objective is not None:
            fh.write(f"# objective={objective!r}\n")
        if bound is not None:
            fh.write(f"# bound={bound!r}\n")
        for name, x in zip(names, values):
            fh.write(f"{name} {_num(x)}\n")


@dataclass
class ImportedSolution:
    values: np.ndarray
    status: str | None
    objective: float | None
    bound: float | None
    unknown: list


def parse_solution(text: str) -> tuple[dict, dict]:
    """Split a solution file into ``{name: value}`` and ``{header: value}``."""
    values, header = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                header[k.strip()] = v.strip()
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InfeasibleAssignment(f"line {lineno}: expected '<name> <value>'", "format")
        try:
            values[parts[0]] = float(parts[1])
        except ValueError:
            raise InfeasibleAssignment(f"line {lineno}: bad value {parts[1]!r}", "format") from None
    return values, header


def import_solution(program: MilpProgram, path_or_text, is_text: bool = False) -> ImportedSolution:
    """Read ``<name> <value>`` lines, round integrals and validate every row.

    Raises
    ------
    InfeasibleAssignment
        With ``tag`` set to the first violated constraint family.
    """
    if is_text:
        text = path_or_text
    else:
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    raw, header = parse_solution(text)
    status = header.get("status")
    if status is not None and status.lower() in ("infeasible", "error"):
        return ImportedSolution(np.array([]), status.lower(), None, None, [])
    index = {name: k for k, name in enumerate(program.var_names())}
    values = np.full(program.n_vars, np.nan)
    unknown = []
    for name, x in raw.items():
        k = index.get(name)
        if k is None:
            unknown.append(name)
            continue
        r = round(x)
        if abs(x - r) > 1e-6:
            raise InfeasibleAssignment(f"{name}={x} is not integral", "integrality")
        values[k] = r
    if unknown:
        log.warning("ignoring %d unknown variable name(s), e.g. %s", len(unknown), unknown[0])
    missing = [program.vars[k].name for k in np.flatnonzero(np.isnan(values))]
    if missing:
        raise InfeasibleAssignment(f"no value for {missing[0]} (+{len(missing) - 1} more)", "missing")
    bad = program.check(values)
    if bad is not None:
        raise InfeasibleAssignment(bad[1], bad[0])
    obj = header.get("objective")
    bnd = header.get("bound")
    return ImportedSolution(values, status, None if obj is None else float(obj),
                            None if bnd is None else float(bnd), unknown)


def feasible_assignment(program: MilpProgram, g: MixedGraph, time_limit: float | None = None):
    """Solve the program with edges fixed to ``g``; ``None`` if infeasible."""
    res = solve_milp(fix_edges(program, g), time_limit=time_limit, feasibility=True)
    if res.status != "optimal":
        return None
    return res.values
