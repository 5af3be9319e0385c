"""Random graphs and linear-Gaussian structural causal models.

All randomness flows from ``SimConfig.seed`` through
:class:`numpy.random.Generator`; identical configurations give identical
output bit for bit.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .graph import GraphError, MixedGraph, has_directed_cycle, latent_projection, topological_order


class Scheme(str, enum.Enum):
    EDGE_PROB = "edge_prob"
    EXPECTED_DEGREE = "expected_degree"


class Noise(str, enum.Enum):
    UNEQUAL_VAR_A = "unequal_var_a"   # variance 1 + 0.1 Z, Z standard normal
    UNEQUAL_VAR_B = "unequal_var_b"   # variance uniform in [1, 2]
    UNIT = "unit"


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Parameters
    ----------
    d : int
        Number of observed nodes.
    seed : int
        Mandatory seed; there is no ambient randomness.
    scheme, param : Scheme, float
        ``EDGE_PROB`` with probability ``param`` (default ``1/(d-1)``), or
        ``EXPECTED_DEGREE`` with expected degree ``param`` (default 2).
    weight_low, weight_high : float
        Edge weights are uniform on ``[weight_low, weight_high]``.
    noise : Noise
    n : int
        Sample size.
    latent : int
        Number of latent nodes in ADMG mode.
    """

    d: int
    seed: int
    scheme: Scheme = Scheme.EDGE_PROB
    param: float | None = None
    weight_low: float = 1.0
    weight_high: float = 4.0
    noise: Noise = Noise.UNEQUAL_VAR_A
    n: int = 1000
    latent: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "noise", Noise(self.noise))
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.latent < 0:
            raise ValueError("latent must be nonnegative")
        if self.weight_low > self.weight_high:
            raise ValueError("weight_low exceeds weight_high")
        if self.scheme is Scheme.EDGE_PROB and self.param is not None \
                and not 0.0 <= self.param <= 1.0:
            raise ValueError("edge probability outside [0, 1]")
        if self.scheme is Scheme.EXPECTED_DEGREE and self.param is not None and self.param < 0:
            raise ValueError("expected degree must be nonnegative")

    def edge_probability(self, n_nodes: int | None = None) -> float:
        n_nodes = self.d + self.latent if n_nodes is None else n_nodes
        if n_nodes < 2:
            return 0.0
        if self.scheme is Scheme.EDGE_PROB:
            return 1.0 / (n_nodes - 1) if self.param is None else float(self.param)
        e = 2.0 if self.param is None else float(self.param)
        return min(1.0, e / (n_nodes - 1))

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])


# streams keep the graph, weights, noise and data draws independent
_GRAPH, _NOISE, _DATA, _LATENT = 0, 1, 2, 3


def _sample_dag(n_nodes: int, p: float, rng: np.random.Generator, wlo: float, whi: float):
    order = rng.permutation(n_nodes)
    directed = set()
    weights = {}
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            if rng.random() < p:
                i, j = int(order[a]), int(order[b])
                directed.add((i, j))
    for i, j in sorted(directed):
        weights[(i, j)] = float(rng.uniform(wlo, whi))
    return MixedGraph(n_nodes, frozenset(directed)), weights


def random_dag(cfg: SimConfig) -> tuple[MixedGraph, dict]:
    """Erdős-Rényi DAG over a uniformly random topological order.

    Returns
    -------
    (MixedGraph, dict)
        The DAG on ``cfg.d`` nodes and its edge weights ``{(i, j): w}``.
    """
    return _sample_dag(cfg.d, cfg.edge_probability(cfg.d), cfg.rng(_GRAPH),
                       cfg.weight_low, cfg.weight_high)


@dataclass
class LatentModel:
    admg: MixedGraph          # projection over the observed nodes
    dag: MixedGraph           # the underlying DAG on d + latent nodes
    weights: dict
    latent: tuple             # latent node ids in the DAG
    observed: tuple           # DAG ids of the ADMG's nodes, in order


def random_admg(cfg: SimConfig) -> LatentModel:
    """DAG on ``d + latent`` nodes projected over ``latent`` random nodes."""
    if cfg.latent < 1:
        raise ValueError("random_admg needs latent >= 1")
    total = cfg.d + cfg.latent
    dag, weights = _sample_dag(total, cfg.edge_probability(total), cfg.rng(_GRAPH),
                               cfg.weight_low, cfg.weight_high)
    latent = tuple(sorted(int(v) for v in cfg.rng(_LATENT).choice(total, cfg.latent,
                                                                   replace=False)))
    admg, kept = latent_projection(dag, latent)
    return LatentModel(admg, dag, weights, latent, kept)


def noise_variances(cfg: SimConfig, n_nodes: int) -> np.ndarray:
    rng = cfg.rng(_NOISE)
    if cfg.noise is Noise.UNEQUAL_VAR_A:
        var = 1.0 + 0.1 * rng.standard_normal(n_nodes)
    elif cfg.noise is Noise.UNEQUAL_VAR_B:
        var = rng.uniform(1.0, 2.0, n_nodes)
    else:
        var = np.ones(n_nodes)
    return var


def weight_matrix(g: MixedGraph, weights: dict) -> np.ndarray:
    W = np.zeros((g.d, g.d))
    for i, j in g.directed:
        if (i, j) not in weights:
            raise ValueError(f"no weight for edge {i + 1}->{j + 1}")
        W[i, j] = weights[(i, j)]
    return W


def population_covariance(g: MixedGraph, weights: dict, variances) -> np.ndarray:
    """Covariance ``(I - W)^{-T} D (I - W)^{-1}`` of ``X = W^T X + eps``."""
    W = weight_matrix(g, weights)
    A = np.linalg.inv(np.eye(g.d) - W)
    return A.T @ np.diag(np.asarray(variances, dtype=float)) @ A


def sample_linear_gaussian(g: MixedGraph, weights: dict, cfg: SimConfig,
                           variances=None) -> np.ndarray:
    """Forward simulation ``X_j = sum_i w_ij X_i + eps_j`` in topological order.

    Returns an ``n x d`` matrix; ``variances`` defaults to
    :func:`noise_variances` for ``cfg``.
    """
    if g.hybrid or g.bidirected or has_directed_cycle(g):
        raise GraphError("sample_linear_gaussian needs a DAG")
    if variances is None:
        variances = noise_variances(cfg, g.d)
    sd = np.sqrt(np.asarray(variances, dtype=float))
    if np.any(~np.isfinite(sd)):
        raise ValueError("noise variances must be nonnegative")
    W = weight_matrix(g, weights)
    eps = cfg.rng(_DATA).standard_normal((cfg.n, g.d)) * sd
    X = np.zeros((cfg.n, g.d))
    for j in topological_order(g):
        X[:, j] = X @ W[:, j] + eps[:, j]
    return X


def simulate(cfg: SimConfig):
    """Graph, weights, noise variances and data in one call.

    In ADMG mode (``cfg.latent > 0``) data is generated from the larger DAG
    and the latent columns are dropped.
    """
    if cfg.latent:
        model = random_admg(cfg)
        var = noise_variances(cfg, model.dag.d)
        full = sample_linear_gaussian(model.dag, model.weights, cfg, var)
        return model.admg, model.weights, var, full[:, list(model.observed)], model
    g, w = random_dag(cfg)
    var = noise_variances(cfg, g.d)
    return g, w, var, sample_linear_gaussian(g, w, cfg, var), None


def collider_model() -> tuple[MixedGraph, dict]:
    """A -> C <- B, C -> D with unit weights (nodes 0..3 = A, B, C, D)."""
    g = MixedGraph(4, frozenset({(0, 2), (1, 2), (2, 3)}))
    return g, {(0, 2): 1.0, (1, 2): 1.0, (2, 3): 1.0}


__all__ = ["SimConfig", "Scheme", "Noise", "LatentModel", "random_dag", "random_admg",
           "sample_linear_gaussian", "population_covariance", "noise_variances",
           "weight_matrix", "simulate", "collider_model"]
