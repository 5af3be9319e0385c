"""Acceptance suite: one test (and one PASS/FAIL line) per criterion.

The lines are collected by ``conftest.acceptance`` and repeated in the
terminal summary of every pytest run.
"""
import random

import numpy as np
import pytest

from conftest import ROWS, random_graph
from exactgraph.citest import PValueTable, family_k, fisher_z_test, full_family
from exactgraph.encoding import build_program, feasible_assignment, lengths
from exactgraph.graph import MixedGraph, latent_projection, validate_class
from exactgraph.metrics import cpdag_from_dag
from exactgraph.separation import (
    all_separations,
    distance,
    distance_for,
    markov_equivalent,
    separated,
)
from exactgraph.simulate import (
    SimConfig,
    collider_model,
    population_covariance,
    random_dag,
    noise_variances,
    sample_linear_gaussian,
)
from exactgraph.solver import (
    Status,
    default_criterion,
    enumerate_class,
    objective_of,
    score_terms,
    solve_bnb,
    solve_bruteforce,
    solve_external,
    solve_milp_backend,
)

# 200 graphs per row, weighted toward small d
D_SCHEDULE = [3] * 60 + [4] * 60 + [5] * 50 + [6] * 30
CLASSES = ["dg", "dag", "dmg", "admg", "chain"]


def _m(*nodes):
    return sum(1 << (v - 1) for v in nodes)


def _graphs(cls):
    """The 200 seeded graphs shared by every row of ``cls``."""
    rng = random.Random(1000 + CLASSES.index(cls))
    return [random_graph(cls, d, rng, p_dir=1.5 / d, p_bid=1.0 / d) for d in D_SCHEDULE]


@pytest.fixture(scope="module")
def encoded():
    """Fixed-edge solutions for every row (and the reduced variant) on the suites."""
    programs, out = {}, {}
    rows = [(cls, crit, False) for cls, crit in ROWS] + [("dg", "d", True), ("dag", "d", True)]
    for cls, crit, reduced in rows:
        res = []
        for g in _graphs(cls):
            key = (cls, crit, reduced, g.d)
            if key not in programs:
                programs[key] = build_program(cls, crit, g.d, full_family(g.d), reduced=reduced)
            vals = feasible_assignment(programs[key], g)
            res.append((g, None if vals is None else lengths(programs[key], vals)))
        out[(cls, crit, reduced)] = res
    return out


@pytest.mark.slow
def test_criterion_1_encoding_equivalence(encoded, acceptance):
    bad, checked = [], 0
    for cls, crit in ROWS:
        kind = distance_for(crit)
        for g, L in encoded[(cls, crit, False)]:
            if L is None:
                bad.append((cls, crit, str(g), "infeasible"))
                continue
            for (i, j, C), (l, z) in L.items():
                checked += 1
                if l != distance(g, kind, i, j, C) or z != 1 - separated(g, i, j, C, crit):
                    bad.append((cls, crit, str(g), i, j, C))
    acceptance(1, not bad, f"{len(ROWS)} rows x {len(D_SCHEDULE)} graphs, "
                           f"{checked} (l, z) pairs, {len(bad)} mismatches")
    assert not bad, bad[:5]


@pytest.mark.slow
def test_criterion_2_walk_and_reduced_variants(encoded, acceptance):
    pairs = [(("dg", "dc", False), ("dg", "d", False)),
             (("dag", "dc", False), ("dag", "d", False)),
             (("dmg", "mc", False), ("dmg", "m", False)),
             (("admg", "mc", False), ("admg", "m", False)),
             (("dg", "d", True), ("dg", "d", False)),
             (("dag", "d", True), ("dag", "d", False))]
    bad = 0
    for a, b in pairs:
        for (ga, La), (gb, Lb) in zip(encoded[a], encoded[b]):
            assert ga == gb
            if La is None or {k: v[1] for k, v in La.items()} != {k: v[1] for k, v in Lb.items()}:
                bad += 1
    acceptance(2, bad == 0, f"{len(pairs)} variant/base pairs x {len(D_SCHEDULE)} graphs, "
                            f"{bad} differing indicator sets")
    assert bad == 0


def _dyadic_table(d, rng):
    """Random p-values with distinct weights 2^k, so every subset of triples
    has its own weight sum and tied optima are Markov-equivalent."""
    fam = full_family(d)
    triples = list(fam.triples())
    order = list(range(len(triples)))
    rng.shuffle(order)
    t = PValueTable(d)
    for k, (i, j, C) in zip(order, triples):
        t.set(i, j, C, rng.choice([rng.uniform(0, 0.001), rng.uniform(0.001, 1)]), 2.0 ** k)
    return t


@pytest.mark.slow
def test_criterion_3_global_optimality(acceptance):
    pytest.importorskip("highspy")
    n_per = 100
    cases = [(cls, 3) for cls in CLASSES] + [("dag", 4)]
    bad = []
    for cls, d in cases:
        rng = random.Random(3000 + 10 * CLASSES.index(cls) + d)
        crit = default_criterion(cls)
        fam = full_family(d)
        for _ in range(n_per):
            t = _dyadic_table(d, rng)
            b = solve_bruteforce(cls, d, fam, t, criterion=crit)
            n = solve_bnb(cls, crit, d, fam, t)
            m = solve_milp_backend(cls, crit, d, fam, t)
            e = solve_external(build_program(cls, crit, d, fam, t), t)
            objs = {b.objective, n.objective, m.objective, e.objective}
            meq = all(markov_equivalent(b.graph, s.graph, fam, crit) for s in (n, m, e))
            if len(objs) != 1 or not meq or n.status is not Status.OPTIMAL:
                bad.append((cls, d, objs, meq))
    acceptance(3, not bad, f"{len(cases)} class/d cases x {n_per} tables, brute = bnb = "
                           f"milp = external MPS, {len(bad)} disagreements")
    assert not bad, bad[:5]


def _recovery_suite():
    """(cls, graph, backend) instances for oracle recovery."""
    rng = random.Random(4000)
    out = [("dag", g, "bnb") for g in enumerate_class("dag", 3)]
    out += [("dag", g, "bnb") for g in enumerate_class("dag", 4)]
    out += [("dag", random_graph("dag", 5, rng, p_dir=0.3), "bnb") for _ in range(40)]
    for cls in ("dmg", "admg", "chain"):
        for d in (2, 3):
            out += [(cls, g, "brute") for g in enumerate_class(cls, d)]
    return out


def _learn(cls, g, backend, table):
    fam = full_family(g.d)
    crit = default_criterion(cls)
    if backend == "bnb":
        return solve_bnb(cls, crit, g.d, fam, table)
    return solve_bruteforce(cls, g.d, fam, table, criterion=crit)


@pytest.mark.slow
def test_criterion_4_oracle_recovery(acceptance):
    bad, n = [], 0
    for cls, g, backend in _recovery_suite():
        crit = default_criterion(cls)
        fam = full_family(g.d)
        table = PValueTable.from_separations(g.d, all_separations(g, fam, crit))
        sol = _learn(cls, g, backend, table)
        n += 1
        if sol.objective != 0 or not markov_equivalent(sol.graph, g, fam, crit) \
                or not validate_class(sol.graph, cls):
            bad.append((cls, str(g)))
    acceptance(4, not bad, f"{n} true graphs (DAG d<=5 B&B; DMG/ADMG/CHAIN d<=3 brute), "
                           f"{len(bad)} not recovered")
    assert not bad, bad[:5]


def test_criterion_5_worked_examples(acceptance, six_node_dag, confounded_dag):
    checks = {}
    G = six_node_dag
    queries = [(0, 2, _m(2), 2), (0, 3, _m(2), 3), (0, 4, _m(6), 2), (3, 4, _m(6), 1)]
    checks["six-node distances (oracle)"] = [distance(G, "d", i, j, C) for i, j, C, _ in queries] == \
        [v for *_, v in queries]
    program = build_program("dag", "d", 6, full_family(6))
    L = lengths(program, feasible_assignment(program, G))
    checks["six-node distances (encoding)"] = [L[(i, j, C)][0] for i, j, C, _ in queries] == \
        [v for *_, v in queries]
    D = confounded_dag
    checks["confounded DAG separations"] = separated(D, 1, 2, _m(1), "m") and not separated(D, 2, 1, 0, "m")
    proj, kept = latent_projection(D, [5])
    G3 = MixedGraph.parse("3->1, 1->2, 2<->4, 2->4, 3->4, 4->5")
    same = all(separated(proj, i, j, C, "m") == separated(D, kept[i], kept[j], C, "m")
               for i in range(5) for j in range(i + 1, 5) for C in range(32)
               if not (C >> i & 1 or C >> j & 1))
    checks["latent projection"] = proj == G3 and same
    essential = MixedGraph.parse("1--2, 1--3, 2->4, 3->4")
    dags = ["1->3, 1->2, 2->4, 3->4", "1->3, 2->1, 2->4, 3->4", "3->1, 1->2, 2->4, 3->4"]
    checks["essential graph"] = all(cpdag_from_dag(MixedGraph.parse(s)).to_graph() == essential
                              for s in dags)
    failed = [k for k, v in checks.items() if not v]
    acceptance(5, not failed, f"{len(checks)} example checks" +
               (f", failed: {failed}" if failed else ""))
    assert not failed


def test_criterion_6_criterion_equivalences(acceptance):
    rng = random.Random(6000)
    diffs = {"m/mc": 0, "d/c": 0}
    for n in range(100):
        d = 3 + n % 4
        fam = full_family(d)
        g = random_graph("dmg", d, rng, p_dir=1.5 / d, p_bid=1.0 / d)
        diffs["m/mc"] += all_separations(g, fam, "m") != all_separations(g, fam, "mc")
        g = random_graph("dag", d, rng, p_dir=1.5 / d)
        diffs["d/c"] += all_separations(g, fam, "d") != all_separations(g.as_hybrid(), fam, "c")
    ok = not any(diffs.values())
    acceptance(6, ok, f"100 DMGs (m vs m_c) and 100 DAGs (d vs c), d in 3..6, "
                      f"differing graphs: {diffs}")
    assert ok


@pytest.mark.slow
def test_criterion_7_learned_beats_truth_on_noisy_tables(acceptance):
    rng = random.Random(7000)
    suite = [x for x in _recovery_suite() if x[1].d <= 4 or rng.random() < 0.4]
    worse, margin = [], 0
    for cls, g, backend in suite:
        crit = default_criterion(cls)
        fam = full_family(g.d)
        table = PValueTable(g.d)
        for (i, j, C), sep in all_separations(g, fam, crit).items():
            p = 1.0 if sep else 0.0
            if rng.random() < 0.15:
                p = 1.0 - p
            table.set(i, j, C, p, rng.uniform(0.5, 2.0))
        sol = _learn(cls, g, backend, table)
        truth = objective_of(g, score_terms(table, fam, 0.001), crit)
        if sol.objective > truth + 1e-9:
            worse.append((cls, str(g), sol.objective, truth))
        margin += sol.objective < truth - 1e-9
    acceptance(7, not worse, f"{len(suite)} noisy instances, learned <= truth on all but "
                             f"{len(worse)}; strictly better on {margin}")
    assert not worse, worse[:5]


def test_criterion_8_simulator_statistics(acceptance):
    worst = 0.0
    for s in range(20):
        cfg = SimConfig(d=3 + s % 4, seed=8000 + s, n=100_000, param=0.5)
        g, w = random_dag(cfg)
        var = noise_variances(cfg, g.d)
        S = population_covariance(g, w, var)
        X = sample_linear_gaussian(g, w, cfg, var)
        se = np.sqrt((S ** 2 + np.outer(np.diag(S), np.diag(S))) / cfg.n)
        worst = max(worst, float(np.max(np.abs(np.cov(X, rowvar=False) - S) / se)))
    g, w = collider_model()
    hits = sum(fisher_z_test(sample_linear_gaussian(
        g, w, SimConfig(d=4, seed=rep, n=300, noise="unit")), 0, 1) > 0.001 for rep in range(50))
    ok = worst < 5 and hits >= 40
    acceptance(8, ok, f"max covariance z-score {worst:.2f} over 20 DAGs (< 5); "
                      f"collider-model marginal independence kept in {hits}/50 (>= 40)")
    assert ok


@pytest.mark.xfail(strict=True, reason="variable count is not affine in the triple count; "
                                       "see the decisions ledger")
def test_criterion_9_affine_scaling(acceptance):
    points = []
    for k in (0, 1, 2):
        fam = family_k(8, k)
        p = build_program("dag", "d", 8, fam)
        points.append((len(list(fam.triples())), p.n_vars))
    (x0, y0), (x1, y1), (x2, y2) = points
    residual = (y2 - y0) * (x1 - x0) - (y1 - y0) * (x2 - x0)
    slopes = ((y1 - y0) / (x1 - x0), (y2 - y1) / (x2 - x1))
    acceptance(9, residual == 0, f"DAG d=8 (triples, variables) = {points}; "
                                 f"segment slopes {slopes[0]:.2f} vs {slopes[1]:.2f}")
    assert residual == 0
