"""Graph networks that learn a scalar as a sum of pairwise interaction functions."""
from .graph import AtomGraph, AtomTypeVocab, Structure, build_graph, incident_edges, validate
from .model import ModelConfig, MofGCN
from .synthetic import SyntheticSpec, gaussian_energy, generate, oracle_total
from .train import Dataset, EvalReport, TrainConfig, TrainHistory, evaluate, fit, loss, split

__version__ = "0.1.0"
