import math

import numpy as np
import pytest
from scipy import stats

from mofgcn.graph import AtomGraph, validate
from mofgcn.synthetic import SyntheticSpec, gaussian_energy, generate, oracle_total


class TestGaussianEnergy:
    def test_peak_unnormalized(self):
        assert gaussian_energy(0.3, 0.3, 0.02, normalized=False) == 1.0

    def test_peak_normalized(self):
        assert gaussian_energy(0.6, 0.6, 0.1) == pytest.approx(3.98942280401, abs=1e-10)
        assert gaussian_energy(0.6, 0.6, 0.1) == pytest.approx(1 / (0.1 * math.sqrt(2 * math.pi)), rel=1e-15)

    def test_one_sigma(self):
        assert gaussian_energy(0.7, 0.6, 0.1, normalized=False) == pytest.approx(0.60653065971, abs=1e-10)

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            gaussian_energy(0.1, 0.1, 0.0)


def test_defaults_follow_the_experiment():
    spec = SyntheticSpec()
    assert spec.n_graphs == 10_000
    assert spec.normalized
    assert spec.pair_params == {("A", "B"): (0.6, 0.1), ("B", "C"): (0.05, 0.01), ("A", "C"): (0.3, 0.02)}


def test_single_graph_self_consistent():
    spec = SyntheticSpec(n_graphs=1, seed=3)
    ds = generate(spec)
    assert len(ds) == 1
    assert validate(ds.graphs[0]) == []
    assert ds.targets[0] == oracle_total(ds.graphs[0], spec)


def test_full_size_and_exact_oracle_agreement():
    spec = SyntheticSpec()
    ds = generate(spec)
    assert len(ds) == 10_000
    for g, y in zip(ds.graphs, ds.targets):
        assert y == oracle_total(g, spec)
        assert list(g.node_types) == [0, 1, 2]


def test_distance_marginals_uniform():
    ds = generate(SyntheticSpec())
    dist = np.array([g.distance for g in ds.graphs])
    for col in range(3):
        p = stats.kstest(dist[:, col], "uniform", args=(0.01, 0.99)).pvalue
        assert p > 0.01


def test_peaks_sum_to_three():
    spec = SyntheticSpec(normalized=False)
    g = AtomGraph.from_edges([0, 1, 2], [(0, 1, 0.6), (1, 2, 0.05), (0, 2, 0.3)])
    assert oracle_total(g, spec) == 3.0


def test_oracle_edge_cases():
    spec = SyntheticSpec(normalized=False)
    assert oracle_total(AtomGraph.from_edges([0, 1, 2], []), spec) == 0.0
    assert oracle_total(AtomGraph.from_edges([0, 1], [(0, 1, 0.6)]), spec) == 1.0
    with pytest.raises(KeyError):
        oracle_total(AtomGraph.from_edges([0, 0], [(0, 1, 0.6)]), spec)


def test_type_swap_keeps_total(rng):
    spec = SyntheticSpec()
    r = rng.uniform(0.01, 1.0, 3)
    g = AtomGraph.from_edges([0, 1, 2], [(0, 1, r[0]), (1, 2, r[1]), (0, 2, r[2])])
    # same pairs, different node carrying each type
    h = AtomGraph.from_edges([2, 0, 1], [(1, 2, r[0]), (2, 0, r[1]), (1, 0, r[2])])
    assert oracle_total(g, spec) == pytest.approx(oracle_total(h, spec), abs=0)


def test_deterministic_under_seed():
    a = generate(SyntheticSpec(n_graphs=50, seed=9))
    b = generate(SyntheticSpec(n_graphs=50, seed=9))
    assert a.targets.tobytes() == b.targets.tobytes()


@pytest.mark.parametrize("kw", [
    {"n_graphs": 0},
    {"pair_params": {("A", "B"): (0.6, -0.1), ("B", "C"): (0.05, 0.01), ("A", "C"): (0.3, 0.02)}},
    {"r_range": (0.1, 1.0)},
    {"pair_params": {("A", "B"): (0.6, 0.1)}},
])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        generate(SyntheticSpec(**kw))


def test_larger_complete_graphs():
    pairs = {(a, b): (0.5, 0.2) for a in "ABC" for b in "ABC" if a <= b}
    spec = SyntheticSpec(n_graphs=5, n_nodes=5, pair_params=pairs)
    ds = generate(spec)
    assert ds.graphs[0].num_edges == 10
    assert all(validate(g) == [] for g in ds.graphs)


def test_spec_dict_roundtrip():
    spec = SyntheticSpec(n_graphs=12, seed=5)
    again = SyntheticSpec.from_dict(spec.to_dict())
    assert again == spec
