import itertools
import random
from collections import defaultdict

import numpy as np
import pytest

from conftest import random_graph
from exactgraph.citest import full_family
from exactgraph.graph import GraphError, MixedGraph
from exactgraph.metrics import (
    MarkedGraph,
    cpdag_from_dag,
    f1_scores,
    k_sep_distance,
    read_marked,
    shd,
    write_marked,
)
from exactgraph.separation import markov_equivalent
from exactgraph.solver import enumerate_class

D1 = MixedGraph.parse("1->3, 1->2, 2->4, 3->4")
D2 = MixedGraph.parse("1->3, 2->1, 2->4, 3->4")
D3 = MixedGraph.parse("3->1, 1->2, 2->4, 3->4")
ESSENTIAL = MixedGraph.parse("1--2, 1--3, 2->4, 3->4")


@pytest.mark.parametrize("dag", [D1, D2, D3])
def test_essential_graph_of_equivalent_dags(dag):
    assert cpdag_from_dag(dag).to_graph() == ESSENTIAL


def test_cpdag_small_cases():
    assert cpdag_from_dag(MixedGraph.parse("1->2")).to_graph() == MixedGraph.parse("1--2")
    g = MixedGraph.parse("1->3, 2->3, 3->4")
    assert cpdag_from_dag(g).to_graph() == g          # v-structure, then rule 1
    with pytest.raises(GraphError):
        cpdag_from_dag(MixedGraph.parse("1->2, 2->1"))


def test_cpdag_characterises_markov_equivalence_d4():
    dags = list(enumerate_class("dag", 4))
    fam = full_family(4)
    buckets = defaultdict(list)
    for g in dags:
        skel = frozenset(frozenset(e) for e in g.directed)
        buckets[skel].append(g)
    classes = set()
    for members in buckets.values():
        for a, b in itertools.combinations(members, 2):
            same = cpdag_from_dag(a) == cpdag_from_dag(b)
            assert same == markov_equivalent(a, b, fam, "d")
    for g in dags:
        classes.add(cpdag_from_dag(g))
    assert len(classes) == 185


def test_meek_rule_order_does_not_matter():
    rng = random.Random(0)
    for g in enumerate_class("dag", 4):
        order = [1, 2, 3, 4]
        rng.shuffle(order)
        assert cpdag_from_dag(g, tuple(order)) == cpdag_from_dag(g)


def test_shd():
    a = MarkedGraph.from_graph(MixedGraph.parse("1->2"))
    assert shd(a, a) == 0
    assert shd(a, MarkedGraph.from_graph(MixedGraph(2))) == 2
    assert shd(cpdag_from_dag(D1), cpdag_from_dag(D2)) == 0
    with pytest.raises(ValueError):
        shd(a, MarkedGraph.from_graph(MixedGraph(3)))


def test_shd_is_a_metric():
    rng = random.Random(1)
    gs = [MarkedGraph.from_graph(random_graph("admg", 4, rng, p_dir=0.2, p_bid=0.0))
          for _ in range(12)]
    for a, b, c in itertools.product(gs[:6], repeat=3):
        assert shd(a, b) == shd(b, a)
        assert shd(a, c) <= shd(a, b) + shd(b, c)
        assert (shd(a, b) == 0) == (a == b)


def test_k_sep_distance():
    g = MixedGraph.parse("1->2, 2->3")
    assert k_sep_distance(g, g, 1) == 0
    assert k_sep_distance(MixedGraph(3), MixedGraph.parse("1->2, 1->3, 2->3"), 0) == 6
    # chain vs v-structure: they differ on (1,3|{}) and (1,3|{2}), ordered twice
    v = MixedGraph.parse("1->2, 3->2")
    assert k_sep_distance(g, v, 1) == 4
    assert k_sep_distance(g, v, 0) == 2


def test_full_k_sep_zero_iff_equivalent():
    rng = random.Random(2)
    for _ in range(30):
        a, b = random_graph("dag", 4, rng), random_graph("dag", 4, rng)
        assert (k_sep_distance(a, b) == 0) == markov_equivalent(a, b, criterion="d")


def test_f1_scores():
    O = MarkedGraph.from_graph(MixedGraph.parse("1->2, 3->2, 3->4"))
    assert f1_scores(O, O)["head"] == 1.0
    # every row of a bidirected pair has a head: all missed -> F1 = 0
    B = MarkedGraph.from_graph(MixedGraph.parse("1<->2"))
    assert f1_scores(MarkedGraph.from_graph(MixedGraph(2)), B)["head"] == 0.0
    # one reversed edge out of three: hand-evaluated row sums
    E = MarkedGraph.from_graph(MixedGraph.parse("2->1, 3->2, 3->4"))
    s = f1_scores(E, O)
    # heads: row 1 of E has none, O has 1->2 (FN); row 2 of E has 2->1 (FP)
    fdr, fnr = 1 / 4, 1 / 4
    assert s["head_fdr"] == pytest.approx(fdr) and s["head_fnr"] == pytest.approx(fnr)
    assert s["head"] == pytest.approx(2 * (1 - fdr) * (1 - fnr) / (2 - fdr - fnr))


def test_f1_relabeling_invariance():
    rng = random.Random(3)
    for _ in range(10):
        e, o = random_graph("dag", 5, rng), random_graph("dag", 5, rng)
        perm = list(range(5))
        rng.shuffle(perm)
        relabel = lambda g: MixedGraph(5, frozenset((perm[i], perm[j]) for i, j in g.directed))  # noqa: E731
        a = f1_scores(MarkedGraph.from_graph(e), MarkedGraph.from_graph(o))
        b = f1_scores(MarkedGraph.from_graph(relabel(e)), MarkedGraph.from_graph(relabel(o)))
        assert a["head"] == pytest.approx(b["head"]) and a["tail"] == pytest.approx(b["tail"])
        assert 0.0 <= a["head"] <= 1.0 and 0.0 <= a["tail"] <= 1.0


def test_marked_graph_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        MarkedGraph(np.array([[0, 2], [0, 0]]))
    with pytest.raises(ValueError):
        MarkedGraph(np.array([[1, 0], [0, 0]]))
    m = cpdag_from_dag(D1)
    write_marked(m, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().startswith("d=4\n")
    assert read_marked(tmp_path / "m.csv") == m
    with pytest.raises(GraphError):
        MarkedGraph.from_graph(MixedGraph.parse("1->2, 1<->2"))
