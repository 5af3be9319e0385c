import random

import pytest

from exactgraph.graph import GraphClass, MixedGraph, validate_class

#: (class, criterion) rows of the encoding table
ROWS = [
    ("dg", "d"), ("dag", "d"), ("dg", "dc"), ("dag", "dc"),
    ("dmg", "m"), ("admg", "m"), ("dmg", "mc"), ("admg", "mc"),
    ("chain", "c"),
]


def random_graph(cls, d, rng, p_dir=0.3, p_bid=0.25):
    """Rejection-sample a member of ``cls`` (test helper)."""
    cls = GraphClass(cls)
    while True:
        if cls.hybrid:
            directed, undirected = set(), set()
            for i in range(d):
                for j in range(i + 1, d):
                    r = rng.random()
                    if r < 0.25:
                        directed.add((i, j))
                    elif r < 0.5:
                        directed.add((j, i))
                    elif r < 0.7:
                        undirected.add((i, j))
            g = MixedGraph.from_edges(d, directed, undirected=undirected, hybrid=True)
        else:
            directed = {(i, j) for i in range(d) for j in range(d)
                        if i != j and rng.random() < p_dir}
            bid = set()
            if cls in (GraphClass.DMG, GraphClass.ADMG):
                bid = {(i, j) for i in range(d) for j in range(i + 1, d) if rng.random() < p_bid}
            g = MixedGraph(d, frozenset(directed), frozenset(bid))
        if validate_class(g, cls):
            return g


@pytest.fixture
def rng():
    return random.Random(20240611)


# Small DAG fixtures shared across modules.
@pytest.fixture
def six_node_dag():
    return MixedGraph.parse("1->2, 3->2, 2->5, 5->6, 4->5, 3->4")


@pytest.fixture
def confounded_dag():
    return MixedGraph.parse("3->1, 1->2, 2->4, 3->4, 4->5, 6->2, 6->4")


# --- acceptance reporting -------------------------------------------------
_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Return ``report(n, ok, detail)``, which records one criterion line."""
    def report(n, ok, detail=""):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
