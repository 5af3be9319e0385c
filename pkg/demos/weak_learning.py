"""Learning with small conditioning sets.

Restricting the family to |C| <= k gives smaller programs; the solver then
recovers the graph only up to k-weak equivalence (agreement on separations
with small conditioning sets).  The k-separation distance to the truth is
zero on the restricted family even where full equivalence fails.
"""
from exactgraph import MixedGraph
from exactgraph.citest import PValueTable, family_k
from exactgraph.encoding import build_program
from exactgraph.metrics import k_sep_distance
from exactgraph.separation import all_separations
from exactgraph.solver import solve_bnb

truth = MixedGraph.parse("1->2, 2->3, 3->4, 1->5, 5->4")
d = truth.d
print(f"truth:\n{truth.to_text()}")
for k in (0, 1, 2, "full"):
    fam = family_k(d, k)
    table = PValueTable.from_separations(d, all_separations(truth, fam, "d"))
    program = build_program("dag", "d", d, fam, table)
    sol = solve_bnb("dag", "d", d, fam, table)
    kk = None if k == "full" else k
    print(f"k={k!s:>4}: {len(table):3d} triples, {program.n_vars:5d} variables, "
          f"{program.n_constraints:5d} rows | objective {sol.objective:g}, "
          f"k-sep distance {k_sep_distance(sol.graph, truth, kk)}, "
          f"full sep distance {k_sep_distance(sol.graph, truth)}")
