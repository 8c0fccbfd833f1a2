import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mofgcn import nn
from mofgcn.graph import AtomGraph, AtomTypeVocab
from mofgcn.model import ModelConfig, MofGCN
from mofgcn.synthetic import SyntheticSpec, generate
from mofgcn.train import (
    Dataset, Normalizer, TrainConfig, TrainingDiverged, error_histogram, evaluate, fit, loss, metrics, read_jsonl,
    split, write_jsonl,
)


def toy(n=10):
    return generate(SyntheticSpec(n_graphs=n, seed=1))


class TestSplit:
    def test_sizes(self):
        tr, va, te = split(toy(10), TrainConfig(split=(0.8, 0.1, 0.1)))
        assert (len(tr), len(va), len(te)) == (8, 1, 1)

    def test_deterministic_partition(self):
        ds = toy(37)
        cfg = TrainConfig(seed=3)
        a = split(ds, cfg)
        b = split(ds, cfg)
        keys = [[g.distance.tobytes() for g in part.graphs] for part in a]
        assert keys == [[g.distance.tobytes() for g in part.graphs] for part in b]
        flat = sum(keys, [])
        assert len(flat) == len(set(flat)) == 37

    def test_empty_split(self):
        with pytest.raises(ValueError, match="val split is empty"):
            split(toy(5), TrainConfig())
        with pytest.raises(ValueError):
            split(toy(0) if False else Dataset([], [], AtomTypeVocab(["A"])), TrainConfig())

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            TrainConfig(split=(0.5, 0.1, 0.1))


class TestLoss:
    def test_values(self):
        assert loss([1.0, 2.0], [1.0, 2.0]).data.item() == 0.0
        assert loss([0.0], [2.0]).data.item() == 4.0
        assert loss([1.0, 3.0], [0.0, 0.0]).data.item() == 5.0

    def test_empty(self):
        with pytest.raises(ValueError):
            loss(np.zeros(0), np.zeros(0))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(-8000, 8000), st.integers(-8000, 8000)), min_size=1, max_size=8))
    def test_nonnegative_zero_iff_equal(self, pairs):
        p = np.array([a for a, _ in pairs]) / 8.0
        t = np.array([b for _, b in pairs]) / 8.0
        value = loss(p, t).data.item()
        assert value >= 0
        assert (value == 0) == bool(np.all(p == t))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=20))
def test_normalizer_roundtrip(values):
    y = np.array(values)
    norm = Normalizer.fit(y)
    np.testing.assert_allclose(norm.denormalize(norm.normalize(y)), y, rtol=0, atol=1e-12 * max(1, np.abs(y).max()))


class TestMetrics:
    def test_perfect(self):
        y = np.array([1.0, 2.5, -3.0])
        rep = metrics(y, y)
        assert rep.mse == 0 and rep.r2 == 1
        zero_bin = rep.bin_edges.index(-0.5)
        assert rep.counts[zero_bin] == 3 and sum(rep.counts) == 3

    def test_mean_predictor(self):
        y = np.array([1.0, 2.0, 6.0])
        assert metrics(np.full(3, y.mean()), y).r2 == pytest.approx(0.0, abs=1e-15)

    def test_hand_values(self):
        rep = metrics([1.0, 2.0, 4.0], [1.0, 3.0, 1.0])
        assert rep.mse == pytest.approx(10 / 3)
        assert rep.mae == pytest.approx(4 / 3)
        assert rep.r2 == pytest.approx(1 - 10 / (8 / 3))

    def test_histogram_covers_errors(self, rng):
        err = rng.normal(scale=7, size=500)
        edges, counts = error_histogram(err, 1.0)
        assert counts.sum() == 500
        assert np.allclose(np.diff(edges), 1.0)
        assert edges[0] <= err.min() and edges[-1] >= err.max()

    def test_empty(self):
        with pytest.raises(ValueError):
            metrics([], [])


def test_jsonl_roundtrip(tmp_path):
    ds = toy(20)
    ds.sources = [f"s{k}" for k in range(20)]
    write_jsonl(ds, tmp_path / "d.jsonl")
    back = read_jsonl(tmp_path / "d.jsonl")
    assert back.vocab == ds.vocab
    assert back.targets.tobytes() == ds.targets.tobytes()
    assert back.sources == ds.sources
    for a, b in zip(ds.graphs, back.graphs):
        assert a.edges == b.edges and list(a.node_types) == list(b.node_types)


def test_jsonl_rejects_reciprocal_edges(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"format": "mofgcn-graphs", "version": 1, "vocab": ["A"]}\n'
                    '{"node_types": ["A", "A"], "edges": [[0, 1, 1.0], [1, 0, 1.0]], "target": 1.0}\n')
    with pytest.raises(ValueError, match="reciprocal"):
        read_jsonl(path)


SMALL = dict(conv_hidden=[8], vocab=["A", "B", "C"])


def test_zero_learning_rate_keeps_params():
    ds = toy(40)
    cfg = TrainConfig(epochs=1, learning_rate=0.0, batch_size=8)
    model, hist = fit(ModelConfig(**SMALL), ds, cfg)
    fresh = MofGCN(ModelConfig(**SMALL), seed=cfg.seed)
    for name in fresh.params.names():
        np.testing.assert_array_equal(model.params[name].data, fresh.params[name].data)
    assert len(hist) == 1 and len(hist.val_loss) == 1


def test_linear_toy_regression():
    """y = 2x with a 1 -> 1 linear model reaches loss < 1e-6 within 2000 Adam steps."""
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(64, 1))
    y = 2 * x
    spec = nn.MlpSpec(1, (), 1)
    p = nn.ParamStore()
    nn.init_mlp(spec, p, rng)
    state = nn.AdamState(learning_rate=0.05)
    for _ in range(2000):
        value = loss(nn.mlp_forward(spec, p, x), y)
        nn.backward(value, p)
        nn.adam_step(p, state)
    assert loss(nn.mlp_forward(spec, p, x), y).data.item() < 1e-6


def test_fit_is_reproducible_and_improves(tmp_path):
    ds = toy(200)
    cfg = TrainConfig(epochs=10, batch_size=16, learning_rate=3e-3)
    _, h1 = fit(ModelConfig(**SMALL), ds, cfg)
    _, h2 = fit(ModelConfig(**SMALL), ds, cfg)
    h1.write_csv(tmp_path / "a.csv")
    h2.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    best = np.minimum.accumulate(h1.train_loss)
    assert np.all(np.diff(best) <= 0)
    assert h1.train_loss[-1] < h1.train_loss[0]


def test_fit_early_stops():
    ds = toy(60)
    _, hist = fit(ModelConfig(**SMALL), ds, TrainConfig(epochs=100, learning_rate=0.0, patience=3))
    assert len(hist) == 4 and hist.best_epoch == 0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fit_reports_divergence():
    ds = toy(40)
    ds.targets[:] = 1e200
    with pytest.raises(TrainingDiverged, match="epoch 0"):
        fit(ModelConfig(**SMALL), ds, TrainConfig(epochs=2, batch_size=8, learning_rate=1.0))


def test_fit_vocab_mismatch():
    with pytest.raises(ValueError, match="vocabulary"):
        fit(ModelConfig(vocab=["X", "Y", "Z"]), toy(20), TrainConfig(epochs=1))


def test_attention_model_trains_and_evaluates():
    ds = toy(80)
    model, _ = fit(ModelConfig(pooling="attention", conv_hidden=[8], conv_out_dim=4, vocab=["A", "B", "C"]), ds,
                   TrainConfig(epochs=3, batch_size=16))
    rep = evaluate(model, ds)
    assert rep.n == 80 and sum(rep.counts) == 80
    assert model.target_shift != 0.0


def test_evaluate_empty():
    model = MofGCN(ModelConfig(**SMALL))
    with pytest.raises(ValueError):
        evaluate(model, Dataset([], [], AtomTypeVocab(["A", "B", "C"])))
