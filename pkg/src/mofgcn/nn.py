"""Small reverse-mode autodiff engine, dense networks and the Adam optimizer.

Everything here works on 2-D float64 numpy arrays. A forward pass records a
tape of :class:`Tensor` nodes; :func:`backward` walks it once in reverse and
writes parameter gradients into the owning :class:`ParamStore`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

DTYPE = np.float64
CHECKPOINT_FORMAT = "mofgcn-checkpoint"
CHECKPOINT_VERSION = 1


class Tensor:
    """A node on the autodiff tape."""

    __slots__ = ("data", "parents", "grad_fn", "consumed")

    def __init__(self, data, parents: Sequence["Tensor"] = (), grad_fn=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.parents = tuple(parents)
        # grad_fn(upstream) -> tuple of gradients, one per parent
        self.grad_fn = grad_fn
        self.consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def square(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: (g * out,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    slope = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor(out, (a,), lambda g: (g * slope,))


def identity(a) -> Tensor:
    return as_tensor(a)


def total(a) -> Tensor:
    """Sum of every entry, as a 1x1 tensor."""
    a = as_tensor(a)
    return Tensor(a.data.sum().reshape(1, 1), (a,), lambda g: (np.full(a.shape, g.item()),))


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    if n == 0:
        raise ValueError("mean of an empty tensor")
    return Tensor(a.data.mean().reshape(1, 1), (a,), lambda g: (np.full(a.shape, g.item() / n),))


def concat(parts: Sequence, axis: int = 1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return Tensor(
        np.concatenate([p.data for p in parts], axis=axis),
        parts,
        lambda g: tuple(np.split(g, bounds, axis=axis)),
    )


def gather_rows(a, index: np.ndarray) -> Tensor:
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)

    def grad_fn(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return Tensor(a.data[index], (a,), grad_fn)


def segment_sum(a, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Row-wise scatter-add of ``a`` into ``num_segments`` buckets.

    Accumulation happens in row order, so results are reproducible bit for bit.
    """
    a = as_tensor(a)
    segment_ids = np.asarray(segment_ids, dtype=np.intp)
    out = np.zeros((num_segments,) + a.shape[1:], dtype=DTYPE)
    np.add.at(out, segment_ids, a.data)
    return Tensor(out, (a,), lambda g: (g[segment_ids],))


def segment_softmax(logits, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of an ``(n, 1)`` column taken separately inside each segment."""
    logits = as_tensor(logits)
    segment_ids = np.asarray(segment_ids, dtype=np.intp)
    peak = np.full((num_segments,) + logits.shape[1:], -np.inf)
    np.maximum.at(peak, segment_ids, logits.data)
    e = np.exp(logits.data - peak[segment_ids])
    norm = np.zeros_like(peak)
    np.add.at(norm, segment_ids, e)
    out = e / norm[segment_ids]

    def grad_fn(g):
        dot = np.zeros_like(peak)
        np.add.at(dot, segment_ids, g * out)
        return (out * (g - dot[segment_ids]),)

    return Tensor(out, (logits,), grad_fn)


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "identity": identity,
}


# ---------------------------------------------------------------- parameters


class Parameter(Tensor):
    __slots__ = ("name", "grad")

    def __init__(self, name: str, data):
        super().__init__(np.array(data, dtype=DTYPE))
        self.name = name
        self.grad = np.zeros_like(self.data)


class ParamStore:
    """Ordered collection of named parameters with matching gradient slots.

    Shapes are fixed when a parameter is added; ``set`` only accepts arrays of
    the same shape.
    """

    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self.grad_ready = False

    def add(self, name: str, data) -> Parameter:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already exists")
        p = Parameter(name, data)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def set(self, name: str, value) -> None:
        p = self._params[name]
        value = np.asarray(value, dtype=DTYPE)
        if value.shape != p.data.shape:
            raise ValueError(f"{name}: expected shape {p.data.shape}, got {value.shape}")
        p.data[...] = value

    def zero_grad(self) -> None:
        for p in self:
            p.grad[...] = 0.0
        self.grad_ready = False

    def size(self) -> int:
        return sum(p.data.size for p in self)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for name, p in self._params.items():
            other.add(name, p.data.copy())
        return other

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) ^ set(state)
        if missing:
            raise KeyError(f"parameter names differ: {sorted(missing)}")
        for name, value in state.items():
            self.set(name, value)


def backward(loss: Tensor, params: ParamStore) -> None:
    """Fill every gradient slot of ``params`` with d(loss)/d(param).

    Gradients replace whatever was in the slots. A given loss node can be
    differentiated only once; run a new forward pass to get a fresh one.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss.consumed:
        raise RuntimeError("backward already ran on this loss; run a new forward pass")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    params.zero_grad()
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            if params._params.get(node.name) is node:
                node.grad[...] += g
            continue
        if node.grad_fn is None:
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    loss.consumed = True
    params.grad_ready = True


# ---------------------------------------------------------------- networks


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple[int, ...] = (64, 64)
    output_dim: int = 1
    activation: str = "tanh"
    final_activation: str = "identity"
    final_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ValueError(f"all layer sizes must be >= 1, got {dims}")
        for act in (self.activation, self.final_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}; choose from {sorted(ACTIVATIONS)}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d


def init_mlp(spec: MlpSpec, params: ParamStore, rng: np.random.Generator, prefix: str = "") -> None:
    """Add Glorot-uniform weights and zero biases for ``spec`` to ``params``."""
    for k, (fan_in, fan_out) in enumerate(spec.layer_dims):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params.add(f"{prefix}W{k}", rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        if k < len(spec.layer_dims) - 1 or spec.final_bias:
            params.add(f"{prefix}b{k}", np.zeros((1, fan_out)))


def mlp_forward(spec: MlpSpec, params: ParamStore, x, prefix: str = "") -> Tensor:
    """Apply the network to a batch ``(n, input_dim)`` or a single vector.

    A 1-D input gives a ``(1, output_dim)`` result.
    """
    if not isinstance(x, Tensor):
        x = np.asarray(x, dtype=DTYPE)
        x = Tensor(x.reshape(1, -1) if x.ndim == 1 else x)
    if x.data.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"mlp input must have {spec.input_dim} columns, got shape {x.shape}")
    n_layers = len(spec.layer_dims)
    hidden = ACTIVATIONS[spec.activation]
    final = ACTIVATIONS[spec.final_activation]
    h = x
    for k in range(n_layers):
        h = matmul(h, params[f"{prefix}W{k}"])
        if k < n_layers - 1 or spec.final_bias:
            h = add(h, params[f"{prefix}b{k}"])
        h = final(h) if k == n_layers - 1 else hidden(h)
    return h


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParamStore, state: AdamState) -> None:
    """One bias-corrected Adam update in place; gradient slots are cleared after."""
    if not params.grad_ready:
        raise RuntimeError("adam_step called without gradients; run backward first")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p in params:
        g = p.grad
        m = state.m.setdefault(p.name, np.zeros_like(p.data))
        v = state.v.setdefault(p.name, np.zeros_like(p.data))
        if m.shape != p.data.shape:
            raise ValueError(f"moment shape mismatch for {p.name}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    params.zero_grad()


# ---------------------------------------------------------------- gradcheck


def gradcheck(
    f: Callable[[ParamStore], Tensor],
    params: ParamStore,
    eps: float = 1e-5,
    names: Sequence[str] | None = None,
) -> float:
    """Largest relative disagreement between backprop and central differences.

    The error for one named parameter tensor is
    ``|a - n| / max(|a|, |n|, 1e-8)`` using Euclidean norms over the tensor,
    where ``a`` is the analytic and ``n`` the numeric gradient.
    """
    loss = f(params)
    backward(loss, params)
    analytic = {p.name: p.grad.copy() for p in params}
    params.zero_grad()

    worst = 0.0
    for name in names if names is not None else params.names():
        p = params[name]
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = f(params).data.item()
            flat[k] = orig - eps
            down = f(params).data.item()
            flat[k] = orig
            num_flat[k] = (up - down) / (2.0 * eps)
        a = analytic[name]
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(numeric))):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        diff = np.linalg.norm(a - numeric)
        scale = max(np.linalg.norm(a), np.linalg.norm(numeric), 1e-8)
        worst = max(worst, diff / scale)
    return worst


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, params: ParamStore, meta: dict | None = None) -> None:
    """Write parameters as JSON. Floats use shortest round-trip repr, so loads are exact."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "tensors": {
            p.name: {"shape": list(p.data.shape), "data": p.data.reshape(-1).tolist()}
            for p in params
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    params = ParamStore()
    for name, t in doc["tensors"].items():
        params.add(name, np.array(t["data"], dtype=DTYPE).reshape(t["shape"]))
    return params, doc["meta"]
