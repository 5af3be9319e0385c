"""From data to a graph: the A -> C <- B, C -> D collider.

Samples a linear Gaussian model, runs Fisher-z tests for every triple and
learns a DAG.  The collider at C makes every edge orientation identifiable,
so with enough data the essential graph is the DAG itself.
"""
import numpy as np

from exactgraph.citest import full_family, run_all_tests
from exactgraph.metrics import cpdag_from_dag, f1_scores, shd
from exactgraph.simulate import SimConfig, collider_model, sample_linear_gaussian
from exactgraph.solver import solve

names = "ABCD"
g, weights = collider_model()
family = full_family(4)

for n in (50, 300, 3000):
    hits = 0
    for seed in range(20):
        X = sample_linear_gaussian(g, weights, SimConfig(d=4, seed=seed, n=n, noise="unit"))
        table = run_all_tests(X, family)
        sol = solve("bnb", "dag", "d", 4, family, table, alpha=0.001)
        E, O = cpdag_from_dag(sol.graph), cpdag_from_dag(g)
        hits += shd(E, O) == 0
    print(f"n={n:5d}: essential graph recovered in {hits}/20 replicates")

# one replicate in detail
X = sample_linear_gaussian(g, weights, SimConfig(d=4, seed=0, n=300, noise="unit"))
sol = solve("bnb", "dag", "d", 4, family, run_all_tests(X, family))
print("\nlearned edges:", ", ".join(f"{names[i]}->{names[j]}" for i, j in sorted(sol.graph.directed)))
scores = f1_scores(cpdag_from_dag(sol.graph), cpdag_from_dag(g))
print({k: round(float(v), 3) for k, v in scores.items() if not np.isnan(v)})
