"""Graph-level readouts over node features of a batch of graphs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn


def sum_pool(feats, graph_ids=None, num_graphs: int = 1) -> nn.Tensor:
    """Per-graph sum of scalar node features, shape ``(num_graphs, 1)``."""
    feats = nn.as_tensor(feats)
    if feats.data.ndim != 2 or feats.shape[1] != 1:
        raise ValueError(f"sum pooling expects scalar node features, got shape {feats.shape}")
    if graph_ids is None:
        graph_ids = np.zeros(feats.shape[0], dtype=np.intp)
    return nn.segment_sum(feats, graph_ids, num_graphs)


@dataclass(frozen=True)
class AttentionReadout:
    """Softmax-gated readout ``sum_n softmax(gate(x_n)) * value(x_n)``.

    Both networks map a node feature vector to one scalar; the softmax runs
    over the nodes of each graph.
    """

    feature_dim: int
    hidden_dims: tuple[int, ...] = (32,)
    activation: str = "tanh"

    @property
    def gate_spec(self) -> nn.MlpSpec:
        # softmax ignores a shared shift, so an output bias would never be trained
        return nn.MlpSpec(self.feature_dim, self.hidden_dims, 1, self.activation, final_bias=False)

    @property
    def value_spec(self) -> nn.MlpSpec:
        return nn.MlpSpec(self.feature_dim, self.hidden_dims, 1, self.activation)

    def init(self, params: nn.ParamStore, rng: np.random.Generator) -> None:
        nn.init_mlp(self.gate_spec, params, rng, "gate.")
        nn.init_mlp(self.value_spec, params, rng, "value.")

    def weights(self, params: nn.ParamStore, feats, graph_ids, num_graphs: int) -> nn.Tensor:
        logits = nn.mlp_forward(self.gate_spec, params, feats, "gate.")
        return nn.segment_softmax(logits, graph_ids, num_graphs)


def attention_pool(readout: AttentionReadout, params: nn.ParamStore, feats, graph_ids=None, num_graphs: int = 1) -> nn.Tensor:
    feats = nn.as_tensor(feats)
    if feats.shape[0] == 0:
        raise ValueError("attention pooling is undefined for a graph without nodes")
    if graph_ids is None:
        graph_ids = np.zeros(feats.shape[0], dtype=np.intp)
    graph_ids = np.asarray(graph_ids, dtype=np.intp)
    if np.bincount(graph_ids, minlength=num_graphs).min() == 0:
        raise ValueError("attention pooling is undefined for a graph without nodes")
    w = readout.weights(params, feats, graph_ids, num_graphs)
    values = nn.mlp_forward(readout.value_spec, params, feats, "value.")
    return nn.segment_sum(nn.mul(w, values), graph_ids, num_graphs)
