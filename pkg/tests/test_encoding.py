import json
import logging
import random

import numpy as np
import pytest

from conftest import ROWS, random_graph
from exactgraph.citest import PValueTable, family_k, full_family
from exactgraph.encoding import (
    EncodingError,
    InfeasibleAssignment,
    VarRef,
    build_program,
    decode_graph,
    export,
    feasible_assignment,
    fix_edges,
    import_solution,
    lengths,
    solve_milp,
    supported_rows,
    to_lp,
    to_mps,
    write_solution,
)
from exactgraph.graph import MixedGraph
from exactgraph.separation import all_separations, distance, distance_for, separated


def _check_lengths(program, g, crit):
    vals = feasible_assignment(program, g)
    assert vals is not None, f"fixed-edge program infeasible for {g}"
    kind = distance_for(crit)
    for (i, j, C), (l, z) in lengths(program, vals).items():
        assert l == distance(g, kind, i, j, C), (str(g), i, j, C)
        assert z == (0 if separated(g, i, j, C, crit) else 1)
    assert decode_graph(program, vals) == g


def test_supported_rows():
    assert sorted(supported_rows()) == sorted(ROWS)
    with pytest.raises(EncodingError):
        build_program("dag", "m", 3, full_family(3))
    with pytest.raises(EncodingError):
        build_program("dmg", "m", 3, full_family(3), reduced=True)


@pytest.mark.parametrize("cls, crit", ROWS)
def test_encoding_equivalence_small(cls, crit):
    rng = random.Random(ROWS.index((cls, crit)))
    for d in (3, 4):
        program = build_program(cls, crit, d, full_family(d))
        for _ in range(6):
            _check_lengths(program, random_graph(cls, d, rng), crit)


def test_six_node_distances_through_encoding(six_node_dag):
    G = six_node_dag
    program = build_program("dag", "d", 6, full_family(6))
    vals = feasible_assignment(program, G)
    L = lengths(program, vals)
    m = lambda *v: sum(1 << (x - 1) for x in v)   # noqa: E731
    assert [L[(0, 2, m(2))][0], L[(0, 3, m(2))][0], L[(0, 4, m(6))][0],
            L[(3, 4, m(6))][0]] == [2, 3, 2, 1]


def test_class_membership_is_enforced():
    fam = full_family(3)
    assert feasible_assignment(build_program("dag", "d", 3, fam),
                               MixedGraph.parse("1->2, 2->3, 3->1")) is None
    assert feasible_assignment(build_program("chain", "c", 3, fam),
                               MixedGraph.parse("1->2, 2--3, 3--1")) is None
    assert feasible_assignment(build_program("admg", "m", 3, fam),
                               MixedGraph.parse("1->2, 2->1, 1<->3")) is None


def test_weak_family_only_emits_family_sets():
    program = build_program("dag", "d", 5, family_k(5, 1))
    for ref in program.vars:
        if ref.kind in ("L_M", "Z"):
            assert bin(ref.key[2]).count("1") <= 1


def test_d3_dag_counts():
    p = build_program("dag", "d", 3, full_family(3))
    kinds = p.count_by_kind()
    # 6 edge variables, 6 anterior lengths and indicators, 6 triples x (l, z)
    assert kinds["X_DIR"] == 6 and kinds["L_ANT"] == 6 and kinds["D_NOT"] == 6
    assert kinds["L_M"] == 6 and kinds["Z"] == 6
    assert p.n_vars == 63 and p.n_constraints == 105
    assert p.count_by_tag()["AC"] == 3


def test_variable_count_grows_with_family():
    counts = [build_program("dag", "d", 6, family_k(6, k)).n_vars for k in (0, 1, 2)]
    assert counts[0] < counts[1] < counts[2]


def test_reduced_variant_keeps_separations_but_not_lengths():
    rng = random.Random(11)
    d = 5
    base = build_program("dg", "d", d, full_family(d))
    red = build_program("dg", "d", d, full_family(d), reduced=True)
    for _ in range(15):
        g = random_graph("dg", d, rng)
        a, b = lengths(base, feasible_assignment(base, g)), lengths(red, feasible_assignment(red, g))
        assert {k: v[1] for k, v in a.items()} == {k: v[1] for k, v in b.items()}
    # a collider that is an ancestor of an endpoint shortens the reduced length:
    # 1 -> 5 <- 4 with 5 -> 6 -> 1 counts as length 2, the shortest d-connecting
    # path 1 <- 6 -> 2 -> 4 has length 3
    g = MixedGraph.parse("1->3, 1->5, 2->4, 2->5, 3->1, 4->5, 5->6, 6->1, 6->2, 6->3")
    red6 = build_program("dg", "d", 6, family_k(6, 0), reduced=True)
    L = lengths(red6, feasible_assignment(red6, g))
    assert distance(g, "d", 0, 3, 0) == 3
    assert L[(0, 3, 0)] == (2, 1)


def _oracle_table(g, crit, d):
    return PValueTable.from_separations(d, all_separations(g, full_family(d), crit))


def test_objective_zero_for_truth():
    g = MixedGraph.parse("1->2, 2->3")
    table = _oracle_table(g, "d", 3)
    program = build_program("dag", "d", 3, full_family(3), table)
    res = solve_milp(program)
    assert res.status == "optimal" and res.objective == pytest.approx(0.0)
    vals = feasible_assignment(program, g)
    assert program.objective_value(vals) == pytest.approx(0.0)
    # the empty graph pays for each of the five connected triples
    empty = feasible_assignment(program, MixedGraph(3))
    assert program.objective_value(empty) == pytest.approx(5.0)


def test_missing_pvalues():
    t = PValueTable(3)
    with pytest.raises(Exception, match="no p-value"):
        build_program("dag", "d", 3, full_family(3), t)
    p = build_program("dag", "d", 3, full_family(3), t, missing="zero-weight")
    assert not any(p.objective.values())


def test_export_import_roundtrip(tmp_path):
    g = MixedGraph.parse("1->2, 3->2")
    table = _oracle_table(g, "d", 3)
    program = build_program("dag", "d", 3, full_family(3), table)
    export(program, tmp_path / "p.mps", "mps")
    export(program, tmp_path / "p.lp", "lp")
    side = json.loads((tmp_path / "p.mps.json").read_text())
    assert side["criterion"] == "d" and side["d"] == 3
    assert "objective_constant" in side
    vals = feasible_assignment(program, g)
    write_solution(program, vals, tmp_path / "s.txt")
    sol = import_solution(program, tmp_path / "s.txt")
    np.testing.assert_array_equal(sol.values, vals)
    assert program.objective_value(sol.values) == pytest.approx(0.0)
    assert to_lp(program).startswith("\\") or "Minimize" in to_lp(program)
    assert "INTORG" in to_mps(program)


def test_import_rejects_cycle_with_ac_tag(tmp_path):
    fam = full_family(3)
    dg = build_program("dg", "d", 3, fam)
    dag = build_program("dag", "d", 3, fam)
    vals = feasible_assignment(dg, MixedGraph.parse("1->2, 2->3, 3->1"))
    write_solution(dag, vals, tmp_path / "s.txt")
    with pytest.raises(InfeasibleAssignment) as exc:
        import_solution(dag, tmp_path / "s.txt")
    assert exc.value.tag == "AC"


def test_import_errors_and_warnings(tmp_path, caplog):
    program = build_program("dag", "d", 3, full_family(3))
    vals = feasible_assignment(program, MixedGraph(3))
    write_solution(program, vals, tmp_path / "s.txt")
    text = (tmp_path / "s.txt").read_text()
    with caplog.at_level(logging.WARNING):
        import_solution(program, text + "bogus 1\n", is_text=True)
    assert "unknown" in caplog.text
    with pytest.raises(InfeasibleAssignment, match="integral"):
        import_solution(program, text.replace("x_d_1_2 0", "x_d_1_2 0.5"), is_text=True)
    with pytest.raises(InfeasibleAssignment, match="no value"):
        import_solution(program, "\n".join(text.splitlines()[:-1]), is_text=True)
    # flipping an edge without updating the lengths breaks a length row
    with pytest.raises(InfeasibleAssignment):
        import_solution(program, text.replace("x_d_1_2 0", "x_d_1_2 1"), is_text=True)


def test_external_mps_with_highs(tmp_path):
    highspy = pytest.importorskip("highspy")
    g = MixedGraph.parse("1->2, 2->3")
    table = _oracle_table(g, "d", 3)
    program = build_program("dag", "d", 3, full_family(3), table)
    export(program, tmp_path / "p.mps")
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(tmp_path / "p.mps"))
    h.run()
    assert h.getInfo().objective_function_value + program.objective_constant == pytest.approx(0.0)


def test_fix_edges_pins_only_edge_variables():
    program = build_program("dmg", "m", 3, full_family(3))
    fixed = fix_edges(program, MixedGraph.parse("1<->2", d=3))
    k = program.index(VarRef("X_BID", (0, 1)))
    assert fixed.lb[k] == fixed.ub[k] == 1
    free = [i for i, r in enumerate(program.vars) if r.kind == "L_M"]
    assert all(fixed.lb[i] == program.lb[i] for i in free)
