"""Toy benchmark with a known pair decomposition.

Every graph is a triangle of three typed nodes A, B, C with an independent
random length on each side. A side contributes a Gaussian bump in its length
whose centre and width depend on the pair of types; the graph target is the sum
of the three contributions. Because the generating pair functions are known,
the learned ones can be compared against them.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import AtomGraph, AtomTypeVocab
from .train import Dataset

DEFAULT_TYPES = ("A", "B", "C")
DEFAULT_PAIRS = {
    ("A", "B"): (0.6, 0.1),
    ("B", "C"): (0.05, 0.01),
    ("A", "C"): (0.3, 0.02),
}


def pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass
class SyntheticSpec:
    n_graphs: int = 10_000
    pair_params: dict[tuple[str, str], tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_PAIRS))
    r_range: tuple[float, float] = (0.01, 1.0)
    normalized: bool = True
    seed: int = 42
    types: tuple[str, ...] = DEFAULT_TYPES
    n_nodes: int = 3

    def __post_init__(self):
        self.pair_params = {pair_key(*k): (float(m), float(s)) for k, (m, s) in self.pair_params.items()}
        self.r_range = (float(self.r_range[0]), float(self.r_range[1]))
        self.types = tuple(self.types)

    @property
    def vocab(self) -> AtomTypeVocab:
        return AtomTypeVocab(self.types)

    def node_types(self) -> list[int]:
        return [k % len(self.types) for k in range(self.n_nodes)]

    def validate(self) -> None:
        if self.n_graphs < 1:
            raise ValueError(f"n_graphs must be at least 1, got {self.n_graphs}")
        if self.n_nodes < 2:
            raise ValueError(f"n_nodes must be at least 2, got {self.n_nodes}")
        lo, hi = self.r_range
        if not 0 < lo < hi:
            raise ValueError(f"distance range must satisfy 0 < low < high, got {self.r_range}")
        for pair, (mu, sigma) in self.pair_params.items():
            if not sigma > 0:
                raise ValueError(f"sigma for pair {pair} must be positive, got {sigma}")
            if not lo <= mu <= hi:
                raise ValueError(f"mu={mu} for pair {pair} lies outside the distance range {self.r_range}")
        for i, j in itertools.combinations(self.node_types(), 2):
            key = pair_key(self.types[i], self.types[j])
            if key not in self.pair_params:
                raise ValueError(f"no (mu, sigma) configured for pair {key}")

    def to_dict(self) -> dict:
        return {
            "n_graphs": self.n_graphs,
            "pair_params": [[a, b, mu, s] for (a, b), (mu, s) in self.pair_params.items()],
            "r_range": list(self.r_range),
            "normalized": self.normalized,
            "seed": self.seed,
            "types": list(self.types),
            "n_nodes": self.n_nodes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        if "pair_params" in d and isinstance(d["pair_params"], list):
            d["pair_params"] = {(a, b): (mu, s) for a, b, mu, s in d["pair_params"]}
        return cls(**d)


def gaussian_energy(r, mu: float, sigma: float, normalized: bool = True):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    z = (np.asarray(r, dtype=np.float64) - mu) / sigma
    value = np.exp(-0.5 * z * z)
    if normalized:
        value = value / (sigma * math.sqrt(2.0 * math.pi))
    return value if value.ndim else float(value)


def oracle_total(graph: AtomGraph, spec: SyntheticSpec) -> float:
    """Exact target of ``graph``: the sum of configured bumps over its edges."""
    total = 0.0
    for i, j, r in graph.edges:
        key = pair_key(spec.types[graph.node_types[i]], spec.types[graph.node_types[j]])
        if key not in spec.pair_params:
            raise KeyError(f"no (mu, sigma) configured for pair {key}")
        mu, sigma = spec.pair_params[key]
        total += gaussian_energy(r, mu, sigma, spec.normalized)
    return total


def generate(spec: SyntheticSpec) -> Dataset:
    spec.validate()
    types = spec.node_types()
    pairs = list(itertools.combinations(range(spec.n_nodes), 2))
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.r_range
    dist = rng.uniform(lo, hi, size=(spec.n_graphs, len(pairs)))
    src = [i for i, _ in pairs]
    dst = [j for _, j in pairs]
    graphs, targets = [], []
    for row in dist:
        g = AtomGraph(types, src, dst, row)
        graphs.append(g)
        targets.append(oracle_total(g, spec))
    return Dataset(graphs, np.array(targets), spec.vocab, units="dimensionless")
