"""Recover a DAG's essential graph from perfect independence information.

We read every d-separation off a known DAG, turn them into a p-value table
(p = 1 for "separated", p = 0 otherwise) and ask the branch-and-bound solver
for a DAG that reproduces all of them.  The answer is only identified up to
Markov equivalence, so we compare essential graphs rather than DAGs.

Run with ``python3 demos/oracle_recovery.py``.
"""
from exactgraph import MixedGraph
from exactgraph.citest import PValueTable, full_family
from exactgraph.metrics import cpdag_from_dag, shd
from exactgraph.separation import all_separations, markov_equivalent
from exactgraph.solver import solve_bnb

truth = MixedGraph.parse("3->1, 1->2, 2->4, 3->4, 4->5")
family = full_family(truth.d)
table = PValueTable.from_separations(truth.d, all_separations(truth, family, "d"))
print(f"true DAG:\n{truth.to_text()}")
print(f"{len(table)} separation statements in the table")

sol = solve_bnb("dag", "d", truth.d, family, table)
print(f"\nsolver status {sol.status.value}, objective {sol.objective}, "
      f"{sol.stats['nodes']} search nodes")
print(f"learned DAG:\n{sol.graph.to_text()}")

print("Markov equivalent to the truth:", markov_equivalent(sol.graph, truth, family, "d"))
E, O = cpdag_from_dag(sol.graph), cpdag_from_dag(truth)
print(f"essential graph:\n{E.to_graph().to_text()}")
print("SHD between essential graphs:", shd(E, O))
