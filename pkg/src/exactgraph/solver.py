"""Exact optimisation backends and independent verification.

Three backends minimise the same score -- the weighted number of family
triples whose separation status disagrees with the thresholded p-value:

* :func:`solve_bruteforce` enumerates the whole class (small ``d`` only);
* :func:`solve_bnb` branches over edge slots, scoring leaves with the
  separation oracles;
* :func:`solve_external` / :func:`solve_milp_backend` solve the integer
  program and re-verify the decoded graph with the oracles.
"""
from __future__ import annotations

import enum
import itertools
import os
import shlex
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field

from .citest import ConditioningFamily, PValueTable
from .encoding import (
    EncodingError,
    InfeasibleAssignment,
    MilpProgram,
    build_program,
    check_row,
    decode_graph,
    export,
    import_solution,
    solve_milp,
    with_objective,
)
from .graph import (
    GraphClass,
    MixedGraph,
    has_directed_cycle,
    has_partially_directed_cycle,
    iter_bits,
    validate_class,
)
from .separation import Criterion, separated


class SolverError(RuntimeError):
    """Backend failure or a verification mismatch."""


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE_TIMEOUT = "feasible_timeout"
    INFEASIBLE = "infeasible"


@dataclass
class Solution:
    graph: MixedGraph | None
    objective: float
    lower_bound: float
    status: Status
    stats: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)   # (seconds, incumbent, bound)

    def __post_init__(self):
        if self.status is Status.OPTIMAL and abs(self.objective - self.lower_bound) > 1e-9:
            raise ValueError("an optimal solution must have objective == lower bound")


#: hard caps for exhaustive enumeration
ENUM_CAPS = {GraphClass.DAG: 4, GraphClass.DG: 4, GraphClass.CHAIN: 4,
             GraphClass.HYBRID: 4, GraphClass.DMG: 3, GraphClass.ADMG: 3}


# -- edge slots ----------------------------------------------------------------
#
# Every unordered pair (i, j), i < j, has a slot value.  The slot value set
# depends on the class; ``_apply_slot`` turns a value into edges.

_DIR = ("none", "fwd", "bwd", "both")


def slot_values(cls: GraphClass) -> tuple:
    cls = GraphClass(cls)
    if cls is GraphClass.DAG:
        return ("none", "fwd", "bwd")
    if cls is GraphClass.DG:
        return _DIR
    if cls is GraphClass.ADMG:
        return tuple((a, b) for a in ("none", "fwd", "bwd") for b in (0, 1))
    if cls is GraphClass.DMG:
        return tuple((a, b) for a in _DIR for b in (0, 1))
    # chain / hybrid: "both" reads as an undirected edge
    return ("none", "fwd", "bwd", "both")


def _split(value):
    if isinstance(value, tuple):
        return value
    return value, 0


def _is_empty(value) -> bool:
    dv, bv = _split(value)
    return dv == "none" and not bv


def graph_from_slots(cls: GraphClass, d: int, pairs, values) -> MixedGraph:
    directed, bidirected = set(), set()
    for (i, j), val in zip(pairs, values):
        dv, bv = _split(val)
        if dv in ("fwd", "both"):
            directed.add((i, j))
        if dv in ("bwd", "both"):
            directed.add((j, i))
        if bv:
            bidirected.add((i, j))
    return MixedGraph(d, frozenset(directed), frozenset(bidirected), GraphClass(cls).hybrid)


def slots_of(g: MixedGraph, cls: GraphClass) -> dict:
    """Slot value of every pair for a graph of the class."""
    out = {}
    dmg = GraphClass(cls) in (GraphClass.DMG, GraphClass.ADMG)
    for i in range(g.d):
        for j in range(i + 1, g.d):
            f, b = (i, j) in g.directed, (j, i) in g.directed
            dv = "both" if f and b else "fwd" if f else "bwd" if b else "none"
            out[(i, j)] = (dv, int((i, j) in g.bidirected)) if dmg else dv
    return out


def enumerate_class(cls, d: int):
    """Every graph of the class on ``d`` nodes exactly once, in canonical order.

    Canonical order is lexicographic over pairs ``(0,1), (0,2), ...`` with the
    slot values in the order of :func:`slot_values`.
    """
    cls = GraphClass(cls)
    cap = ENUM_CAPS[cls]
    if d > cap:
        raise ValueError(f"enumeration of {cls.value} graphs is capped at d={cap}")
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    for values in itertools.product(slot_values(cls), repeat=len(pairs)):
        g = graph_from_slots(cls, d, pairs, values)
        if validate_class(g, cls):
            yield g


# -- scoring ---------------------------------------------------------------------

def score_terms(table: PValueTable, family: ConditioningFamily, alpha: float,
                missing: str = "error") -> list:
    """``[(i, j, C, t, w)]`` for the weighted family triples, canonical order."""
    restricted = table.restrict(family, missing)
    out = []
    for key in restricted:
        p, w = restricted.entries[key]
        if w:
            out.append((*key, 1 if p > alpha else 0, w))
    return out


def objective_of(g: MixedGraph, terms, criterion) -> float:
    """Score of ``g``: sum of ``w`` over triples whose separation disagrees with ``t``."""
    total = 0.0
    for i, j, C, t, w in terms:
        if int(separated(g, i, j, C, criterion)) != t:
            total += w
    return total


def default_criterion(cls) -> Criterion:
    cls = GraphClass(cls)
    if cls in (GraphClass.DG, GraphClass.DAG):
        return Criterion.D
    if cls in (GraphClass.DMG, GraphClass.ADMG):
        return Criterion.M
    return Criterion.C


def solve_bruteforce(cls, d: int, family: ConditioningFamily, table: PValueTable,
                     alpha: float = 0.001, criterion=None) -> Solution:
    """Exhaustive minimisation; ties keep the first graph in canonical order."""
    crit = Criterion(criterion) if criterion is not None else default_criterion(cls)
    t0 = time.perf_counter()
    terms = score_terms(table, family, alpha)
    best, best_obj, n = None, None, 0
    for g in enumerate_class(cls, d):
        n += 1
        obj = objective_of(g, terms, crit)
        if best_obj is None or obj < best_obj:
            best, best_obj = g, obj
    return Solution(best, best_obj, best_obj, Status.OPTIMAL,
                    {"graphs": n, "seconds": time.perf_counter() - t0})


# -- branch and bound --------------------------------------------------------------

def _components(adj) -> list:
    d = len(adj)
    comp = [-1] * d
    for s in range(d):
        if comp[s] >= 0:
            continue
        stack = [s]
        comp[s] = s
        while stack:
            v = stack.pop()
            for w in iter_bits(adj[v]):
                if comp[w] < 0:
                    comp[w] = s
                    stack.append(w)
    return comp


def _class_prunable(cls: GraphClass, g: MixedGraph) -> bool:
    """Decided edges already violate the class (no completion can repair it)."""
    if cls in (GraphClass.DAG, GraphClass.ADMG):
        return has_directed_cycle(g)
    if cls is GraphClass.CHAIN:
        return has_partially_directed_cycle(g)
    return False


def solve_bnb(cls, criterion, d: int, family: ConditioningFamily, table: PValueTable,
              alpha: float = 0.001, warmstart: MixedGraph | None = None,
              walltime: float | None = None) -> Solution:
    """Depth-first branch and bound over edge slots.

    Lower bound at a node (admissible): a triple whose endpoints are adjacent
    through a decided edge is connected in every completion, so it costs
    ``w`` when ``t = 1``; a triple whose endpoints lie in different components
    of the *possible* skeleton (decided edges plus every undecided pair) is
    separated in every completion, so it costs ``w`` when ``t = 0``.

    Parameters
    ----------
    warmstart : MixedGraph, optional
        Initial incumbent; must belong to ``cls``.
    walltime : float, optional
        Seconds; checked between node expansions.  ``0`` returns the
        incumbent without searching.
    """
    cls = GraphClass(cls)
    crit = Criterion(criterion)
    check_row(cls, crit)
    t0 = time.perf_counter()
    terms = score_terms(table, family, alpha)
    if warmstart is not None:
        if warmstart.d != d:
            raise ValueError("warmstart has the wrong number of nodes")
        if cls.hybrid and not warmstart.hybrid:
            warmstart = warmstart.as_hybrid()
        if not validate_class(warmstart, cls):
            raise ValueError(f"warmstart is not a {cls.value} graph")
        incumbent = warmstart
    else:
        incumbent = MixedGraph(d, hybrid=cls.hybrid)
    inc_obj = objective_of(incumbent, terms, crit)
    trace = [(0.0, inc_obj, 0.0)]

    # branching order: most informative pairs first
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    info = {p: 0.0 for p in pairs}
    wants_sep = {p: False for p in pairs}
    for i, j, C, t, w in terms:
        info[(i, j)] += w * 0.5       # |0.5 - t| is 0.5 for binary t
        if t == 1:
            wants_sep[(i, j)] = True
    order = sorted(pairs, key=lambda p: (-info[p], p))
    values = slot_values(cls)
    value_orders = {}
    for p in order:
        if wants_sep[p]:
            value_orders[p] = sorted(values, key=lambda v: not _is_empty(v))
        else:
            value_orders[p] = sorted(values, key=lambda v: _is_empty(v))
    n_pairs = len(order)
    full_mask = (1 << d) - 1

    def bound(assign: tuple) -> float:
        adj_decided = [0] * d
        adj_possible = [0] * d
        for (i, j), val in zip(order, assign):
            if not _is_empty(val):
                adj_decided[i] |= 1 << j
                adj_decided[j] |= 1 << i
        for k, (i, j) in enumerate(order):
            if k >= len(assign) or not _is_empty(assign[k]):
                adj_possible[i] |= 1 << j
                adj_possible[j] |= 1 << i
        comp = _components(adj_possible)
        lb = 0.0
        for i, j, C, t, w in terms:
            if t == 1 and adj_decided[i] >> j & 1:
                lb += w
            elif t == 0 and comp[i] != comp[j]:
                lb += w
        return lb

    nodes = 0
    timed_out = False
    root_bound = bound(())
    stack = [((), root_bound)]
    if walltime is not None and walltime <= 0:
        timed_out = True
    while stack and not timed_out:
        if walltime is not None and time.perf_counter() - t0 >= walltime:
            timed_out = True
            break
        assign, lb = stack.pop()
        if lb >= inc_obj:
            continue
        nodes += 1
        depth = len(assign)
        if depth == n_pairs:
            g = graph_from_slots(cls, d, order, assign)
            obj = objective_of(g, terms, crit)
            if obj < inc_obj:
                incumbent, inc_obj = g, obj
                trace.append((time.perf_counter() - t0, inc_obj, _open_bound(stack, inc_obj)))
            continue
        children = []
        for val in value_orders[order[depth]]:
            child = assign + (val,)
            g_partial = graph_from_slots(cls, d, order[:depth + 1], child)
            if _class_prunable(cls, g_partial):
                continue
            clb = bound(child)
            if clb < inc_obj:
                children.append((child, clb))
        # push in reverse so the preferred value is explored first
        for item in reversed(children):
            stack.append(item)

    elapsed = time.perf_counter() - t0
    if timed_out:
        lower = min(_open_bound(stack, inc_obj), inc_obj)
        if walltime is not None and walltime <= 0:
            lower = min(root_bound, inc_obj)
        trace.append((elapsed, inc_obj, lower))
        status = Status.FEASIBLE_TIMEOUT
    else:
        lower = inc_obj
        trace.append((elapsed, inc_obj, lower))
        status = Status.OPTIMAL
    return Solution(incumbent, inc_obj, lower, status,
                    {"nodes": nodes, "seconds": elapsed}, trace)


def _open_bound(stack, inc_obj) -> float:
    if not stack:
        return inc_obj
    return min(inc_obj, min(lb for _, lb in stack))


# -- integer-programming backends ----------------------------------------------

def _program_for(cls, criterion, d, family, table, alpha, program):
    if program is None:
        return build_program(cls, criterion, d, family, table, alpha)
    return program


def _finish_milp(program: MilpProgram, values, reported: float, status: Status,
                 bound, terms, crit, t0, backend: str) -> Solution:
    g = decode_graph(program, values)
    cls = GraphClass(program.meta.cls)
    if not validate_class(g, cls):
        raise SolverError(f"{backend}: decoded graph is not a {cls.value} graph")
    recomputed = objective_of(g, terms, crit)
    if abs(recomputed - reported) > 1e-6:
        raise SolverError(
            f"{backend}: solver objective {reported} disagrees with the oracle score "
            f"{recomputed}; the encoding or the solver output is wrong")
    if status is Status.OPTIMAL:
        lower = recomputed
    else:
        lower = min(recomputed, bound if bound is not None else 0.0)
    return Solution(g, recomputed, lower, status,
                    {"seconds": time.perf_counter() - t0, "backend": backend,
                     "n_vars": program.n_vars, "n_constraints": program.n_constraints})


def solve_milp_backend(cls, criterion, d: int, family: ConditioningFamily, table: PValueTable,
                       alpha: float = 0.001, walltime: float | None = None,
                       program: MilpProgram | None = None) -> Solution:
    """Solve the integer program in-process (SciPy/HiGHS) and verify the result."""
    t0 = time.perf_counter()
    crit = Criterion(criterion)
    program = _program_for(cls, criterion, d, family, table, alpha, program)
    terms = score_terms(table, family, alpha)
    res = solve_milp(program, time_limit=walltime)
    if res.status == "infeasible":
        raise SolverError("milp: program reported infeasible; class programs always "
                          "admit the empty graph")
    if res.values is None:
        raise SolverError(f"milp: no solution ({res.message})")
    status = Status.OPTIMAL if res.status == "optimal" else Status.FEASIBLE_TIMEOUT
    return _finish_milp(program, res.values, res.objective, status, res.bound,
                        terms, crit, t0, "milp")


#: default command for the bundled HiGHS runner
HIGHS_COMMAND = f"{shlex.quote(sys.executable)} -m exactgraph.highs_runner {{mps}} {{out}} {{wall}}"


def solve_external(program: MilpProgram, table: PValueTable, solver_command: str = HIGHS_COMMAND,
                   walltime: float | None = None, workdir=None) -> Solution:
    """Export, run an external solver, import and verify.

    ``solver_command`` is a template with ``{mps}``, ``{out}`` and ``{wall}``
    placeholders.  The solver must write ``<name> <value>`` lines and may add
    ``# status=...``, ``# objective=...`` (linear part, without the constant
    recorded in the sidecar) and ``# bound=...`` comment lines.
    """
    t0 = time.perf_counter()
    meta = program.meta
    family = ConditioningFamily(meta.d, meta.family)
    crit = Criterion(meta.criterion)
    terms = score_terms(table, family, meta.alpha)
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        mps = os.path.join(tmp, "program.mps")
        out = os.path.join(tmp, "solution.txt")
        export(program, mps, "mps")
        wall = "1e30" if walltime is None else repr(float(walltime))
        cmd = solver_command.format(mps=shlex.quote(mps), out=shlex.quote(out), wall=wall)
        timeout = None if walltime is None else walltime + 60
        try:
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            raise SolverError("external solver did not return in time") from None
        if proc.returncode != 0:
            raise SolverError(f"external solver failed (exit {proc.returncode}): "
                              f"{proc.stderr.strip()[-500:]}")
        if not os.path.exists(out):
            raise SolverError("external solver wrote no solution file")
        sol = import_solution(program, out)
    if sol.status == "infeasible":
        raise SolverError("external solver reported infeasible; class programs always "
                          "admit the empty graph")
    if sol.status == "error":
        raise SolverError("external solver reported an error")
    reported_linear = program.objective_value(sol.values) - program.objective_constant
    if sol.objective is not None and abs(sol.objective - reported_linear) > 1e-6:
        raise SolverError(f"reported objective {sol.objective} does not match the "
                          f"imported assignment ({reported_linear})")
    status = Status.OPTIMAL if (sol.status or "optimal") == "optimal" else Status.FEASIBLE_TIMEOUT
    bound = None if sol.bound is None else sol.bound + program.objective_constant
    return _finish_milp(program, sol.values, program.objective_value(sol.values), status,
                        bound, terms, crit, t0, "external")


# -- verification -----------------------------------------------------------------

@dataclass
class VerificationReport:
    ok: bool
    class_ok: bool
    objective: float
    claimed: float
    rows: list                # (i, j, C, separated, t, contribution)
    problems: list

    def summary(self) -> str:
        state = "ok" if self.ok else "FAILED: " + "; ".join(self.problems)
        return f"objective={self.objective} claimed={self.claimed} {state}"


def verify_solution(sol: Solution, cls, criterion, family: ConditioningFamily,
                    table: PValueTable, alpha: float = 0.001) -> VerificationReport:
    """Recompute every separation of ``sol.graph`` and the score from scratch."""
    crit = Criterion(criterion)
    problems = []
    class_ok = sol.graph is not None and validate_class(sol.graph, cls)
    if not class_ok:
        problems.append(f"graph is not a {GraphClass(cls).value} graph")
    rows = []
    total = 0.0
    if sol.graph is not None:
        for i, j, C, t, w in score_terms(table, family, alpha):
            sep = separated(sol.graph, i, j, C, crit)
            contrib = w if int(sep) != t else 0.0
            total += contrib
            rows.append((i, j, C, sep, t, contrib))
    if abs(total - sol.objective) > 1e-6:
        problems.append(f"objective mismatch: claimed {sol.objective}, recomputed {total}")
    if sol.lower_bound > sol.objective + 1e-9:
        problems.append("lower bound exceeds objective")
    return VerificationReport(not problems, class_ok, total, sol.objective, rows, problems)


def solve(backend: str, cls, criterion, d: int, family: ConditioningFamily,
          table: PValueTable, alpha: float = 0.001, warmstart=None, walltime=None,
          solver_command: str | None = None) -> Solution:
    """Dispatch by backend name: ``brute``, ``bnb``, ``milp`` or ``external``."""
    check_row(cls, criterion)
    if backend == "brute":
        if warmstart is not None:
            raise ValueError("brute force ignores warmstarts; use bnb")
        return solve_bruteforce(cls, d, family, table, alpha, criterion)
    if backend == "bnb":
        return solve_bnb(cls, criterion, d, family, table, alpha, warmstart, walltime)
    if backend == "milp":
        return solve_milp_backend(cls, criterion, d, family, table, alpha, walltime)
    if backend == "external":
        program = build_program(cls, criterion, d, family, table, alpha)
        return solve_external(program, table, solver_command or HIGHS_COMMAND, walltime)
    raise ValueError(f"unknown backend {backend!r}")


__all__ = [
    "Solution", "Status", "SolverError", "VerificationReport", "enumerate_class",
    "objective_of", "score_terms", "solve", "solve_bnb", "solve_bruteforce",
    "solve_external", "solve_milp_backend", "verify_solution", "slot_values",
    "default_criterion", "HIGHS_COMMAND", "EncodingError", "InfeasibleAssignment",
    "with_objective",
]
