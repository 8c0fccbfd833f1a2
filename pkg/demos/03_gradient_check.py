# %% [markdown]
# # Checking backpropagation against finite differences
#
# The autodiff engine is small enough to read in one sitting, which also
# means it deserves a numerical check. `gradcheck` perturbs every parameter
# by +-1e-5 and compares the central difference with the backward pass.

# %%
import numpy as np

from mofgcn import ModelConfig, MofGCN, nn
from mofgcn.graph import AtomGraph
from mofgcn.model import GraphBatch
from mofgcn.train import loss

graph = AtomGraph.from_edges([0, 1, 2], [(0, 1, 0.42), (1, 2, 0.07), (0, 2, 0.9)])

for pooling in ("sum", "attention"):
    model = MofGCN(ModelConfig(vocab=["A", "B", "C"], pooling=pooling), seed=0)
    batch = GraphBatch.collate([graph], model.vocab)
    err = nn.gradcheck(lambda p: loss(model.forward(batch), [1.3]), model.params)
    print(f"{pooling:9s} pooling, {model.params.size()} parameters: max relative error {err:.2e}")

# %% [markdown]
# A deliberately wrong derivative is caught immediately.

# %%
store = nn.ParamStore()
store.add("w", np.array([[0.7]]))


def cube_with_bad_gradient(p):
    w = p["w"]
    return nn.Tensor(w.data**3, (w,), lambda g: (g * w.data**2,))  # missing factor 3


print("broken op:", nn.gradcheck(cube_with_bad_gradient, store))
