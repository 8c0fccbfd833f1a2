"""Edge-conditioned pair convolution.

Each stored edge ``(i, j, r)`` produces one message from a network shared by
all edges::

    m_ij = h((x_i + x_j) ⊕ phi(r))

where ``phi`` is the raw distance (default) or a Gaussian radial-basis
expansion. Adding the endpoint features makes the message symmetric in the
two atom types, so one network covers every species pair.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .graph import AtomGraph, AtomTypeVocab

EDGE_ONCE = "edge-once"
SYMMETRIC = "symmetric"


def encode_nodes(graph: AtomGraph, vocab: AtomTypeVocab) -> np.ndarray:
    """One-hot species rows, shape ``(num_nodes, len(vocab))``."""
    types = graph.node_types
    if types.size and (types.min() < 0 or types.max() >= len(vocab)):
        raise KeyError(f"node types {sorted(set(types.tolist()))} fall outside vocabulary of size {len(vocab)}")
    out = np.zeros((graph.num_nodes, len(vocab)))
    out[np.arange(graph.num_nodes), types] = 1.0
    return out


@dataclass(frozen=True)
class RadialBasis:
    """Gaussian expansion of a distance on ``num`` evenly spaced centres."""

    r_min: float
    r_max: float
    num: int = 32

    @property
    def centers(self) -> np.ndarray:
        return np.linspace(self.r_min, self.r_max, self.num)

    @property
    def width(self) -> float:
        return (self.r_max - self.r_min) / max(self.num - 1, 1)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        d = np.asarray(r, dtype=np.float64).reshape(-1, 1) - self.centers
        return np.exp(-0.5 * (d / self.width) ** 2)


@dataclass(frozen=True)
class ConvLayer:
    node_dim: int
    out_dim: int = 1
    hidden_dims: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    mode: str = EDGE_ONCE
    rbf: RadialBasis | None = None
    prefix: str = "conv."

    def __post_init__(self):
        if self.mode not in (EDGE_ONCE, SYMMETRIC):
            raise ValueError(f"accumulation mode must be {EDGE_ONCE!r} or {SYMMETRIC!r}, got {self.mode!r}")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))

    @property
    def edge_dim(self) -> int:
        return 1 if self.rbf is None else self.rbf.num

    @property
    def message_spec(self) -> nn.MlpSpec:
        return nn.MlpSpec(self.node_dim + self.edge_dim, self.hidden_dims, self.out_dim, self.activation)

    def init(self, params: nn.ParamStore, rng: np.random.Generator) -> None:
        nn.init_mlp(self.message_spec, params, rng, self.prefix)

    def edge_features(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64).reshape(-1, 1)
        return r if self.rbf is None else self.rbf(r)

    def messages(self, params: nn.ParamStore, feats, src, dst, distance) -> nn.Tensor:
        feats = nn.as_tensor(feats)
        pair = nn.add(nn.gather_rows(feats, src), nn.gather_rows(feats, dst))
        x = nn.concat([pair, self.edge_features(distance)])
        return nn.mlp_forward(self.message_spec, params, x, self.prefix)

    def forward(self, params: nn.ParamStore, feats, src, dst, distance, num_nodes: int) -> nn.Tensor:
        """Scatter edge messages onto nodes for a batch of concatenated graphs."""
        feats = nn.as_tensor(feats)
        if feats.data.ndim != 2 or feats.shape[1] != self.node_dim:
            raise ValueError(f"node features must have {self.node_dim} columns, got shape {feats.shape}")
        if not np.all(np.isfinite(feats.data)):
            raise ValueError("node features contain non-finite values")
        src = np.asarray(src, dtype=np.intp)
        dst = np.asarray(dst, dtype=np.intp)
        if len(src) == 0:
            return nn.Tensor(np.zeros((num_nodes, self.out_dim)))
        msg = self.messages(params, feats, src, dst, distance)
        if self.mode == EDGE_ONCE:
            return nn.segment_sum(msg, src, num_nodes)
        both = np.concatenate([src, dst])
        return nn.segment_sum(nn.concat([msg, msg], axis=0), both, num_nodes)


def conv_forward(layer: ConvLayer, params: nn.ParamStore, feats, graph: AtomGraph) -> nn.Tensor:
    return layer.forward(params, feats, graph.src, graph.dst, graph.distance, graph.num_nodes)


def pair_message(layer: ConvLayer, params: nn.ParamStore, vocab: AtomTypeVocab, type_a, type_b, r) -> np.ndarray:
    """The learned pair function evaluated directly, shape ``(len(r), out_dim)``.

    ``type_a``/``type_b`` may be labels or vocabulary indices.
    """
    a = vocab.index(type_a) if isinstance(type_a, str) else int(type_a)
    b = vocab.index(type_b) if isinstance(type_b, str) else int(type_b)
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    if np.any(~(r > 0)):
        raise ValueError("pair distances must be positive")
    pair = np.tile(vocab.onehot(a) + vocab.onehot(b), (len(r), 1))
    x = np.concatenate([pair, layer.edge_features(r)], axis=1)
    return nn.mlp_forward(layer.message_spec, params, x, layer.prefix).data
