"""Random structural causal models for covariates and the two risk targets.

A program is a DAG over ``n_nodes`` variables indexed in topological
order.  Each non-root node computes ``g(parents) + eps`` where ``g`` is a
small random MLP or a sum of threshold splits; roots draw from a normal,
uniform or categorical distribution.  Some nodes are exported as
covariates, two others as the risk scores ``(eta1, eta2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import PriorConfig
from .errors import ConfigError, DomainError, GenerationError

ACTIVATIONS = ("identity", "tanh", "relu", "sine")


def _activate(name: str, x: np.ndarray) -> np.ndarray:
    if name == "identity":
        return x
    if name == "tanh":
        return np.tanh(x)
    if name == "relu":
        return np.maximum(x, 0.0)
    return np.sin(x)


@dataclass
class DagSpec:
    n_nodes: int
    edges: list[tuple[int, int]]
    node_kinds: list[str]

    def validate(self) -> None:
        if len(self.node_kinds) != self.n_nodes:
            raise ConfigError("node_kinds length must equal n_nodes")
        for a, b in self.edges:
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes):
                raise ConfigError(f"edge {(a, b)} references a missing node")
            if a >= b:
                raise ConfigError(f"edge {(a, b)} is not forward in topological order")

    def parents(self, node: int) -> list[int]:
        return sorted(a for a, b in self.edges if b == node)


@dataclass
class NodeFunction:
    """Parameters of one node's structural equation.

    ``kind`` is ``mlp`` or ``tree`` for nodes with parents, and ``normal``,
    ``uniform``, ``categorical`` or ``constant`` for roots.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __call__(self, parent_values: np.ndarray, rng: np.random.Generator, n_rows: int) -> np.ndarray:
        p = self.params
        if self.kind == "constant":
            return np.full(n_rows, float(p["value"]))
        if self.kind == "normal":
            return rng.standard_normal(n_rows)
        if self.kind == "uniform":
            return rng.uniform(-1.0, 1.0, n_rows)
        if self.kind == "categorical":
            return rng.choice(len(p["probs"]), size=n_rows, p=p["probs"]).astype(np.float64)
        if self.kind == "mlp":
            h = parent_values @ p["w1"] + p["b1"]
            h = _activate(p["activation"], h)
            if "w2" in p:
                h = _activate(p["activation"], h @ p["w2"] + p["b2"])
            return h[:, 0] if h.ndim == 2 else h
        if self.kind == "tree":
            out = np.zeros(n_rows)
            for parent, q, left, right in p["splits"]:
                col = parent_values[:, parent]
                threshold = np.quantile(col, q)
                out += np.where(col < threshold, left, right)
            return out
        raise ConfigError(f"unknown node function kind {self.kind!r}")


@dataclass
class ScmProgram:
    dag: DagSpec
    node_functions: list[NodeFunction]
    noise_scales: np.ndarray
    feature_indices: list[int]
    target_indices: list[int]
    signal_strength: float = 1.0
    clamp: float = 100.0
    seed: int | None = None

    def validate(self) -> "ScmProgram":
        self.dag.validate()
        if len(self.target_indices) != 2:
            raise ConfigError("exactly two target nodes are required")
        if set(self.feature_indices) & set(self.target_indices):
            raise ConfigError("feature and target nodes overlap")
        if len(self.node_functions) != self.dag.n_nodes:
            raise ConfigError("one node function per node is required")
        if np.any(np.asarray(self.noise_scales) < 0):
            raise ConfigError("noise scales must be >= 0")
        return self

    def structure(self) -> dict:
        """Hashable-ish summary used by determinism checks and manifests."""
        return {
            "n_nodes": self.dag.n_nodes,
            "edges": [list(e) for e in self.dag.edges],
            "node_kinds": list(self.dag.node_kinds),
            "functions": [f.kind for f in self.node_functions],
            "feature_indices": list(self.feature_indices),
            "target_indices": list(self.target_indices),
            "signal_strength": self.signal_strength,
        }


@dataclass
class RawTable:
    values: np.ndarray
    program_id: int | None = None


def _log_uniform(rng, lo: float, hi: float) -> float:
    if lo <= 0:
        return float(rng.uniform(lo, hi))
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def _sample_function(kind: str, n_parents: int, rng) -> NodeFunction:
    if kind == "mlp":
        activation = ACTIVATIONS[rng.integers(len(ACTIVATIONS))]
        scale = 1.0 / math.sqrt(n_parents)
        if rng.random() < 0.5:
            params = {"w1": rng.normal(0, scale, (n_parents, 1)), "b1": rng.normal(0, 0.5, 1)}
        else:
            width = int(rng.integers(2, 9))
            params = {
                "w1": rng.normal(0, scale, (n_parents, width)),
                "b1": rng.normal(0, 0.5, width),
                "w2": rng.normal(0, 1.0 / math.sqrt(width), (width, 1)),
                "b2": rng.normal(0, 0.5, 1),
            }
        params["activation"] = activation
        return NodeFunction("mlp", params)
    n_splits = int(rng.integers(2, 5))
    splits = [
        (int(rng.integers(n_parents)), float(rng.uniform(0.1, 0.9)), float(rng.normal()), float(rng.normal()))
        for _ in range(n_splits)
    ]
    return NodeFunction("tree", {"splits": splits})


def _sample_root(rng) -> NodeFunction:
    choice = rng.integers(3)
    if choice == 0:
        return NodeFunction("normal")
    if choice == 1:
        return NodeFunction("uniform")
    k = int(rng.integers(2, 9))
    return NodeFunction("categorical", {"probs": rng.dirichlet(np.ones(k))})


def _ancestor_counts(dag: DagSpec) -> np.ndarray:
    ancestors = [set() for _ in range(dag.n_nodes)]
    for a, b in sorted(dag.edges, key=lambda e: e[1]):
        ancestors[b] |= ancestors[a] | {a}
    return np.array([len(a) for a in ancestors])


def sample_program(config: PriorConfig, seed) -> ScmProgram:
    """Draw a random SCM with the feature/target layout implied by ``config``."""
    config.validate()
    rng = np.random.default_rng(seed)
    n_features = int(rng.integers(config.n_features[0], config.n_features[1] + 1))
    lo = max(config.n_nodes[0], n_features + 2)
    if lo > config.n_nodes[1]:
        raise ConfigError("n_nodes range cannot host the sampled feature count plus two targets")
    n_nodes = int(rng.integers(lo, config.n_nodes[1] + 1))

    p_edge = float(rng.uniform(*config.edge_prob))
    edges = [(a, b) for b in range(n_nodes) for a in range(b) if rng.random() < p_edge]
    kinds = ["mlp" if rng.random() < config.mlp_fraction else "tree" for _ in range(n_nodes)]
    dag = DagSpec(n_nodes, edges, kinds)

    functions = []
    for node in range(n_nodes):
        parents = dag.parents(node)
        functions.append(_sample_function(kinds[node], len(parents), rng) if parents else _sample_root(rng))
    noise = np.array([_log_uniform(rng, *config.noise_scale) for _ in range(n_nodes)])

    # targets favour nodes with many ancestors so labels depend on other variables
    n_anc = _ancestor_counts(dag)
    weights = n_anc.astype(np.float64) ** 2
    if np.count_nonzero(weights) < 2:
        weights = weights + 1.0
    targets = [int(v) for v in rng.choice(n_nodes, size=2, replace=False, p=weights / weights.sum())]
    rest = [int(v) for v in rng.permutation(n_nodes) if v not in targets]
    features = sorted(rest[:n_features])

    strength = _log_uniform(rng, *config.signal_strength) if config.signal_strength[1] > 0 else 0.0
    return ScmProgram(dag, functions, noise, features, targets, strength, config.clamp, seed=None).validate()


def execute(program: ScmProgram, n_rows: int, seed) -> RawTable:
    """Evaluate every node for ``n_rows`` independent rows."""
    if n_rows < 1:
        raise DomainError("execute: n_rows must be >= 1")
    rng = np.random.default_rng(seed)
    n = program.dag.n_nodes
    values = np.zeros((n_rows, n))
    c = program.clamp
    for node in range(n):
        parents = program.dag.parents(node)
        fn = program.node_functions[node]
        out = fn(values[:, parents], rng, n_rows)
        sigma = float(program.noise_scales[node])
        if sigma > 0:
            out = out + sigma * rng.standard_normal(n_rows)
        else:
            rng.standard_normal(n_rows)  # keep the stream aligned for any sigma
        if not np.all(np.isfinite(out)):
            raise GenerationError(f"node {node} produced non-finite values")
        values[:, node] = np.clip(out, -c, c)
    return RawTable(values, program_id=id(program))


def extract_dataset(table: RawTable, program: ScmProgram):
    """Split a table into covariates and the two scaled risk scores."""
    X = table.values[:, program.feature_indices].copy()
    etas = []
    for idx in program.target_indices:
        col = table.values[:, idx]
        sd = float(np.std(col))
        if sd <= 1e-12 * max(1.0, float(np.max(np.abs(col)))):
            etas.append(np.zeros_like(col))
        else:
            etas.append((col - col.mean()) / sd * program.signal_strength)
    return X, etas[0], etas[1]
