"""Exit criteria for the package, one test per criterion.

Each test appends a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria". Criteria 1, 2 and 8 train the default
decomposition model on the full 10,000-graph toy dataset (about a minute
per run on one core).
"""
import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest

from mofgcn import nn
from mofgcn.cli import main
from mofgcn.conv import SYMMETRIC
from mofgcn.extract import align_offset, default_grid, probe, reference_curve
from mofgcn.graph import AtomGraph
from mofgcn.model import GraphBatch, ModelConfig, MofGCN
from mofgcn.synthetic import SyntheticSpec, generate
from mofgcn.train import TrainConfig, fit, loss, metrics, split

from conftest import ACCEPTANCE_LINES, random_triangle

ROOT = Path(__file__).resolve().parents[1]
TYPES = ("A", "B", "C")


def record(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def synthetic():
    spec = SyntheticSpec()
    return spec, generate(spec)


@pytest.fixture(scope="module")
def trained(synthetic):
    _, dataset = synthetic
    cfg = TrainConfig()
    parts = split(dataset, cfg)
    model, history = fit(ModelConfig(vocab=list(TYPES)), dataset, cfg, splits=parts)
    return model, history, parts, cfg


def test_1_synthetic_reproduction(synthetic, trained):
    spec, _ = synthetic
    model, history, (_, _, test), _ = trained
    report = metrics(model.predict(test.graphs), test.targets)
    seconds = sum(history.seconds)
    record(1, "synthetic reproduction", report.r2 >= 0.99 and seconds <= 15 * 60,
           f"test R2 = {report.r2:.6f} (>= 0.99) on {report.n} graphs, "
           f"{len(history)} epochs in {seconds:.0f} s (<= 900 s)")


def test_2_function_recovery(synthetic, trained):
    spec, _ = synthetic
    model = trained[0]
    grid = default_grid(*spec.r_range)
    details, ok = [], True
    for pair, (mu, sigma) in spec.pair_params.items():
        ref = reference_curve(spec, pair, grid)
        curve = align_offset(probe(model, pair, grid), ref)
        span = ref.max() - ref.min()
        frac = curve.residual_rms / span
        peak = curve.peak_location()
        good = frac <= 0.05 and abs(peak - mu) <= 2 * sigma
        ok &= good
        details.append(f"{'-'.join(pair)} rms/range={frac:.4f} peak={peak:.4f} (mu={mu}+-{2 * sigma:g})")
    record(2, "function recovery", ok, "; ".join(details))


def test_3_decomposition_identity(trained):
    spec = SyntheticSpec(n_graphs=1000, seed=2024)
    graphs = generate(spec).graphs
    worst = 0.0
    models = [trained[0], MofGCN(ModelConfig(vocab=list(TYPES)), seed=7)]
    for model in models:
        pooled = model.pooled(graphs)
        for g, y in zip(graphs, pooled):
            total = sum(model.pair_message(TYPES[g.node_types[i]], TYPES[g.node_types[j]], r)[0, 0]
                        for i, j, r in g.edges)
            worst = max(worst, abs(total - y))
    record(3, "decomposition identity", worst <= 1e-10,
           f"max |sum of pair messages - pooled| = {worst:.2e} (<= 1e-10) over 1000 graphs x {len(models)} checkpoints")


def test_4_gradient_correctness():
    rng = np.random.default_rng(44)
    graphs = [random_triangle(rng) for _ in range(20)]
    targets = rng.normal(size=20)
    worst = {}
    for pooling in ("sum", "attention"):
        model = MofGCN(ModelConfig(vocab=list(TYPES), pooling=pooling), seed=3)
        worst[pooling] = 0.0
        for g, y in zip(graphs, targets):
            batch = GraphBatch.collate([g], model.vocab)
            err = nn.gradcheck(lambda p: loss(model.forward(batch), [y]), model.params, eps=1e-5)
            worst[pooling] = max(worst[pooling], err)
    record(4, "gradient correctness", max(worst.values()) < 1e-4,
           ", ".join(f"{k} pooling max rel err {v:.2e}" for k, v in worst.items()) + " (< 1e-4, 20 graphs each)")


def test_5_symmetry_suite():
    rng = np.random.default_rng(55)
    spec = SyntheticSpec(n_graphs=200, seed=55)
    graphs = generate(spec).graphs
    perm_err = {}
    for pooling in ("sum", "attention"):
        model = MofGCN(ModelConfig(vocab=list(TYPES), pooling=pooling), seed=1)
        perm_err[pooling] = 0.0
        for g in graphs:
            base = model.pooled([g])[0]
            for perm in itertools.permutations(range(3)):
                perm_err[pooling] = max(perm_err[pooling], abs(model.pooled([g.relabel(perm)])[0] - base))

    flip_err = 0.0
    for accumulation in ("edge-once", SYMMETRIC):
        model = MofGCN(ModelConfig(vocab=list(TYPES), accumulation=accumulation), seed=2)
        for g in graphs:
            base = model.pooled([g])[0]
            for mask in itertools.product([False, True], repeat=g.num_edges):
                src = np.where(mask, g.dst, g.src)
                dst = np.where(mask, g.src, g.dst)
                flipped = AtomGraph(g.node_types, src, dst, g.distance)
                flip_err = max(flip_err, abs(model.pooled([flipped])[0] - base))

    model = MofGCN(ModelConfig(vocab=list(TYPES)), seed=3)
    r = rng.uniform(0.001, 2.0, size=500)
    pair_exact = all(
        np.array_equal(model.pair_message(a, b, r), model.pair_message(b, a, r))
        for a, b in itertools.combinations_with_replacement(TYPES, 2)
    )
    ok = max(perm_err.values()) <= 1e-12 and flip_err <= 1e-12 and pair_exact
    record(5, "symmetry suite", ok,
           f"permutation: sum {perm_err['sum']:.1e}, attention {perm_err['attention']:.1e}; "
           f"edge flip {flip_err:.1e} (all <= 1e-12); pair_message symmetric exactly: {pair_exact}")


def test_6_oracle_forward_pass():
    """Message net 4 -> 2 (tanh) -> 1 with the weights below, on the triangle
    A-B 0.5, B-C 0.8, A-C 1.1, edge-once accumulation and sum pooling.

    Per-edge hand values (input = one-hot sum + distance):
      A-B: tanh(0.70)*1 - 2*tanh(-0.10) + 0.1 = 0.9037037663670752
      B-C: tanh(0.41)*1 - 2*tanh(0.06) + 0.1  = 0.5805208778302362
      A-C: tanh(0.45)*1 - 2*tanh(0.22) + 0.1  = 0.12908103427395204
    """
    W0 = [[0.1, 0.2], [0.3, -0.1], [-0.2, 0.4], [0.5, -0.3]]
    b0 = [0.05, -0.05]
    W1 = [1.0, -2.0]
    b1 = 0.1
    onehot = {0: (1, 0, 0), 1: (0, 1, 0), 2: (0, 0, 1)}
    edges = [(0, 1, 0.5), (1, 2, 0.8), (0, 2, 1.1)]
    hand = 0.0
    for i, j, r in edges:
        x = [onehot[i][k] + onehot[j][k] for k in range(3)] + [r]
        h = [math.tanh(sum(x[a] * W0[a][c] for a in range(4)) + b0[c]) for c in range(2)]
        hand += h[0] * W1[0] + h[1] * W1[1] + b1
    assert hand == pytest.approx(1.6133056784712634, abs=1e-15)

    model = MofGCN(ModelConfig(vocab=list(TYPES), conv_hidden=[2]))
    model.params.set("conv.W0", W0)
    model.params.set("conv.b0", [b0])
    model.params.set("conv.W1", [[w] for w in W1])
    model.params.set("conv.b1", [[b1]])
    pred = float(model.predict([AtomGraph.from_edges([0, 1, 2], edges)])[0])
    record(6, "oracle forward pass", abs(pred - hand) <= 1e-12,
           f"prediction {pred!r} vs hand value {hand!r}, |diff| = {abs(pred - hand):.1e} (<= 1e-12)")


def test_7_toy_xyz_pipeline(tmp_path, capsys):
    corpus = ROOT / "data" / "toy_xyz"
    codes = [
        main(["ingest", str(corpus), "--cutoff", "3.0", "--units", "Ry", "--out", str(tmp_path / "ingest")]),
        main(["train", "--data", str(tmp_path / "ingest/dataset.jsonl"), "--epochs", "20",
              "--out", str(tmp_path / "train")]),
        main(["eval", "--checkpoint", str(tmp_path / "train/checkpoint.json"), "--data",
              str(tmp_path / "ingest/dataset.jsonl"), "--split", "all", "--bin-width", "0.1",
              "--out", str(tmp_path / "eval")]),
    ]
    capsys.readouterr()
    n_records = sum(1 for _ in open(tmp_path / "ingest/dataset.jsonl")) - 1
    report = json.loads((tmp_path / "eval/report.json").read_text())
    hist_rows = (tmp_path / "eval/histogram.csv").read_text().splitlines()[1:]
    ok = (codes == [0, 0, 0] and n_records == 50 and report["n"] == 50 and sum(report["counts"]) == 50
          and len(hist_rows) == len(report["counts"]) and all(math.isfinite(report[k]) for k in ("mse", "mae", "r2")))
    record(7, "toy XYZ pipeline", ok,
           f"exit codes {codes}, {n_records} structures ingested, report n={report['n']}, "
           f"histogram {len(hist_rows)} bins summing to {sum(report['counts'])}, RMSE {report['rmse']:.3g} {report['units']}")


def test_8_determinism(synthetic, trained, tmp_path):
    _, dataset = synthetic
    _, history, _, cfg = trained
    _, again = fit(ModelConfig(vocab=list(TYPES)), dataset, cfg)
    history.write_csv(tmp_path / "first.csv")
    again.write_csv(tmp_path / "second.csv")
    same = (tmp_path / "first.csv").read_bytes() == (tmp_path / "second.csv").read_bytes()
    record(8, "determinism", same, f"two seeded runs of criterion 1 give {'identical' if same else 'different'} "
           f"history files ({len(history)} epochs)")
