import random

import pytest

from conftest import random_graph
from exactgraph.citest import PValueTable, family_k, full_family
from exactgraph.encoding import (
    InfeasibleAssignment,
    build_program,
    feasible_assignment,
    write_solution,
)
from exactgraph.graph import MixedGraph, validate_class
from exactgraph.separation import all_separations, markov_equivalent
from exactgraph.solver import (
    Solution,
    SolverError,
    Status,
    enumerate_class,
    objective_of,
    score_terms,
    solve,
    solve_bnb,
    solve_bruteforce,
    solve_external,
    solve_milp_backend,
    verify_solution,
)


def oracle_table(g, crit="d"):
    return PValueTable.from_separations(g.d, all_separations(g, full_family(g.d), crit))


def constant_table(d, p):
    t = PValueTable(d)
    for i, j, C in full_family(d).triples():
        t.set(i, j, C, p)
    return t


@pytest.mark.parametrize("cls, d, n", [("dag", 3, 25), ("dmg", 3, 512), ("admg", 3, 200),
                                       ("dag", 4, 543), ("dg", 3, 64), ("chain", 3, 50)])
def test_enumeration_counts(cls, d, n):
    graphs = list(enumerate_class(cls, d))
    assert len(graphs) == n == len(set(graphs))
    assert all(validate_class(g, cls) for g in graphs)


def test_enumeration_caps():
    with pytest.raises(ValueError, match="capped"):
        list(enumerate_class("dmg", 4))


def test_bruteforce_examples():
    chain = MixedGraph.parse("1->2, 2->3")
    fam = full_family(3)
    sol = solve_bruteforce("dag", 3, fam, oracle_table(chain))
    assert sol.objective == 0 and sol.status is Status.OPTIMAL
    assert markov_equivalent(sol.graph, chain, fam, "d")
    sol = solve_bruteforce("dag", 3, fam, constant_table(3, 1.0))
    assert sol.graph == MixedGraph(3) and sol.objective == 0
    sol = solve_bruteforce("dag", 3, fam, constant_table(3, 0.0))
    assert sol.objective == 0 and sol.graph.n_edges() == 3


def test_bnb_matches_bruteforce_on_examples():
    fam = full_family(3)
    for table in (oracle_table(MixedGraph.parse("1->2, 2->3")), constant_table(3, 1.0),
                  constant_table(3, 0.0)):
        assert solve_bnb("dag", "d", 3, fam, table).objective == \
            solve_bruteforce("dag", 3, fam, table).objective


def test_bnb_walltime_zero_returns_warmstart():
    g = MixedGraph.parse("1->2, 1->3")
    table = oracle_table(MixedGraph.parse("1->2, 2->3"))
    fam = full_family(3)
    sol = solve_bnb("dag", "d", 3, fam, table, warmstart=g, walltime=0)
    assert sol.graph == g and sol.status is Status.FEASIBLE_TIMEOUT
    assert sol.objective == objective_of(g, score_terms(table, fam, 0.001), "d")
    assert sol.lower_bound <= sol.objective


def test_bnb_rejects_bad_warmstart():
    with pytest.raises(ValueError):
        solve_bnb("dag", "d", 3, full_family(3), constant_table(3, 1.0),
                  warmstart=MixedGraph.parse("1->2, 2->3, 3->1"))


def test_bnb_confounded_dag(confounded_dag):
    sol = solve_bnb("dag", "d", 6, full_family(6), oracle_table(confounded_dag), walltime=120)
    assert sol.objective == 0 and sol.status is Status.OPTIMAL
    assert markov_equivalent(sol.graph, confounded_dag, criterion="d")


def test_bnb_trace_is_monotone():
    rng = random.Random(3)
    fam = full_family(4)
    t = PValueTable(4)
    for i, j, C in fam.triples():
        t.set(i, j, C, rng.choice([0.0, 1.0]), rng.uniform(0.1, 2))
    sol = solve_bnb("dag", "d", 4, fam, t)
    inc = [x[1] for x in sol.trace]
    bnd = [x[2] for x in sol.trace]
    assert inc == sorted(inc, reverse=True)
    assert bnd == sorted(bnd)
    assert sol.objective == pytest.approx(solve_bruteforce("dag", 4, fam, t).objective)


def test_warmstart_dominance():
    rng = random.Random(4)
    fam = full_family(4)
    for _ in range(5):
        t = PValueTable(4)
        for i, j, C in fam.triples():
            t.set(i, j, C, rng.random(), 1.0)
        warm = random_graph("dag", 4, rng)
        w_obj = objective_of(warm, score_terms(t, fam, 0.001), "d")
        for wall in (0, 0.01, None):
            assert solve_bnb("dag", "d", 4, fam, t, 0.001, warm, wall).objective <= w_obj


def test_milp_backends_agree():
    g = MixedGraph.parse("1->2, 2->3")
    fam = full_family(3)
    table = oracle_table(g)
    assert solve_milp_backend("dag", "d", 3, fam, table).objective == 0
    pytest.importorskip("highspy")
    sol = solve_external(build_program("dag", "d", 3, fam, table), table)
    assert sol.objective == 0 and markov_equivalent(sol.graph, g, fam, "d")


def test_external_rejects_corrupted_solution(tmp_path):
    g = MixedGraph.parse("1->2, 2->3")
    table = oracle_table(g)
    program = build_program("dag", "d", 3, full_family(3), table)
    vals = feasible_assignment(program, g)
    write_solution(program, vals, tmp_path / "good.txt")
    # claim 1 and 3 are connected given {2}: breaks the length rows
    text = (tmp_path / "good.txt").read_text().replace("z_1_3_c2 0", "z_1_3_c2 1")
    (tmp_path / "bad.txt").write_text(text)
    copy = "python3 -c 'import shutil, sys; shutil.copy(sys.argv[1], sys.argv[2])'"
    with pytest.raises(InfeasibleAssignment):
        solve_external(program, table, f"{copy} {tmp_path / 'bad.txt'} {{out}}")
    sol = solve_external(program, table, f"{copy} {tmp_path / 'good.txt'} {{out}}")
    assert sol.objective == 0 and sol.graph == g
    (tmp_path / "inf.txt").write_text("# status=infeasible\n")
    with pytest.raises(SolverError, match="infeasible"):
        solve_external(program, table, f"{copy} {tmp_path / 'inf.txt'} {{out}}")
    with pytest.raises(SolverError, match="exit"):
        solve_external(program, table, "python3 -c 'import sys; sys.exit(3)'")


def test_verify_solution_reports():
    g = MixedGraph.parse("1->2, 2->3")
    fam = full_family(3)
    table = oracle_table(g)
    sol = solve_bruteforce("dag", 3, fam, table)
    rep = verify_solution(sol, "dag", "d", fam, table)
    assert rep.ok and rep.objective == 0 and len(rep.rows) == 6
    bad = Solution(g, 2.0, 0.0, Status.FEASIBLE_TIMEOUT)
    rep = verify_solution(bad, "dag", "d", fam, table)
    assert not rep.ok and "mismatch" in rep.problems[0]


def test_solution_invariant():
    with pytest.raises(ValueError):
        Solution(MixedGraph(2), 1.0, 0.0, Status.OPTIMAL)


def test_weak_family_learning():
    # with k = 0 only marginal independences are scored
    g = MixedGraph.parse("1->3, 2->3")
    fam = family_k(3, 0)
    table = PValueTable.from_separations(3, all_separations(g, fam, "d"))
    sol = solve("bnb", "dag", "d", 3, fam, table)
    assert sol.objective == 0
    assert all_separations(sol.graph, fam, "d") == all_separations(g, fam, "d")


def test_solve_dispatch_errors():
    with pytest.raises(ValueError):
        solve("nope", "dag", "d", 3, full_family(3), constant_table(3, 1.0))
    with pytest.raises(ValueError):
        solve("brute", "dag", "d", 3, full_family(3), constant_table(3, 1.0),
              warmstart=MixedGraph(3))


def test_milp_backend_is_exactly_optimal_with_tiny_weights():
    # weights down to 2^-23 sit below HiGHS's default relative MIP gap; an
    # optimal claim must still match exhaustive search exactly
    rng = random.Random(3014)
    fam = full_family(4)
    triples = list(fam.triples())
    for _ in range(21):
        order = list(range(len(triples)))
        rng.shuffle(order)
        t = PValueTable(4)
        for k, (i, j, C) in zip(order, triples):
            t.set(i, j, C, rng.choice([rng.uniform(0, 0.001), rng.uniform(0.001, 1)]), 2.0 ** -k)
    assert solve_milp_backend("dag", "d", 4, fam, t).objective == \
        solve_bruteforce("dag", 4, fam, t).objective
