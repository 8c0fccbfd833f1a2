"""Atomic graphs: data model, cutoff construction and extended-XYZ input."""
from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class XYZParseError(ValueError):
    """Malformed extended-XYZ input; the message carries the line number."""


@dataclass(frozen=True)
class AtomTypeVocab:
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"vocabulary labels must be unique: {self.labels}")

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"species {label!r} is not in the vocabulary {list(self.labels)}") from None

    def onehot(self, type_id: int) -> np.ndarray:
        if not 0 <= type_id < len(self.labels):
            raise KeyError(f"type id {type_id} outside vocabulary of size {len(self.labels)}")
        v = np.zeros(len(self.labels))
        v[type_id] = 1.0
        return v


@dataclass(frozen=True, eq=False)
class AtomGraph:
    """Typed nodes plus directed, distance-labelled edges ``src -> dst``.

    A well-formed graph stores each atom pair at most once; see :func:`validate`.
    Instances are not checked on construction so that malformed input can be
    inspected.
    """

    node_types: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    distance: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "node_types", np.asarray(self.node_types, dtype=np.intp).reshape(-1))
        object.__setattr__(self, "src", np.asarray(self.src, dtype=np.intp).reshape(-1))
        object.__setattr__(self, "dst", np.asarray(self.dst, dtype=np.intp).reshape(-1))
        object.__setattr__(self, "distance", np.asarray(self.distance, dtype=np.float64).reshape(-1))
        if not (len(self.src) == len(self.dst) == len(self.distance)):
            raise ValueError("src, dst and distance must have equal length")
        for arr in (self.node_types, self.src, self.dst, self.distance):
            arr.setflags(write=False)

    @classmethod
    def from_edges(cls, node_types: Sequence[int], edges: Iterable[tuple[int, int, float]], **info) -> "AtomGraph":
        edges = list(edges)
        src = [e[0] for e in edges]
        dst = [e[1] for e in edges]
        dist = [e[2] for e in edges]
        return cls(node_types, src, dst, dist, dict(info))

    @property
    def num_nodes(self) -> int:
        return len(self.node_types)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(r)) for i, j, r in zip(self.src, self.dst, self.distance)]

    def relabel(self, perm: Sequence[int]) -> "AtomGraph":
        """Graph with old node ``k`` renamed to ``perm[k]``."""
        perm = np.asarray(perm, dtype=np.intp)
        types = np.empty_like(self.node_types)
        types[perm] = self.node_types
        return AtomGraph(types, perm[self.src], perm[self.dst], self.distance.copy(), dict(self.info))


@dataclass
class Structure:
    positions: np.ndarray
    species: list[str]
    cell: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.species = [str(s) for s in self.species]
        if len(self.species) != len(self.positions):
            raise ValueError(f"{len(self.species)} species for {len(self.positions)} positions")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")
        if self.cell is not None:
            self.cell = np.asarray(self.cell, dtype=np.float64).reshape(3)
            if not np.all(self.cell > 0):
                raise ValueError(f"cell lengths must be positive, got {self.cell}")


def pair_vectors(structure: Structure, periodic: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upper-triangle pair indices and their (minimum-image) separations."""
    n = len(structure.positions)
    i, j = np.triu_indices(n, k=1)
    diff = structure.positions[j] - structure.positions[i]
    if periodic:
        if structure.cell is None:
            raise ValueError("periodic graph requested but the structure has no cell")
        diff = diff - structure.cell * np.round(diff / structure.cell)
    return i, j, diff


def build_graph(structure: Structure, cutoff: float, vocab: AtomTypeVocab, periodic: bool = False) -> AtomGraph:
    """Connect every pair ``i < j`` closer than ``cutoff``.

    Storing only ``i < j`` keeps the no-reciprocal-edge rule by construction.
    Periodic graphs use the orthorhombic minimum image, so the cutoff should
    stay below half the shortest cell length.
    """
    if not cutoff > 0:
        raise ValueError(f"cutoff must be positive, got {cutoff}")
    types = [vocab.index(s) for s in structure.species]
    i, j, diff = pair_vectors(structure, periodic)
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if np.any(dist == 0.0):
        k = int(np.flatnonzero(dist == 0.0)[0])
        raise ValueError(f"atoms {i[k]} and {j[k]} coincide")
    keep = dist <= cutoff
    return AtomGraph(types, i[keep], j[keep], dist[keep])


def validate(graph: AtomGraph) -> list[str]:
    """Return a description of every broken invariant; empty when the graph is sound."""
    problems: list[str] = []
    n = graph.num_nodes
    seen: dict[tuple[int, int], int] = {}
    for k, (i, j, r) in enumerate(graph.edges):
        if not (0 <= i < n and 0 <= j < n):
            problems.append(f"node index out of range: edge {k} ({i}, {j}) with {n} nodes")
        if i == j:
            problems.append(f"self edge: edge {k} on node {i}")
        if not np.isfinite(r):
            problems.append(f"non-finite distance: edge {k} ({i}, {j}) r={r}")
        elif r <= 0:
            problems.append(f"nonpositive distance: edge {k} ({i}, {j}) r={r}")
        if (i, j) in seen:
            problems.append(f"duplicate edge: edges {seen[(i, j)]} and {k} both ({i}, {j})")
        elif (j, i) in seen and i != j:
            problems.append(f"reciprocal edge: edge {k} ({i}, {j}) reverses edge {seen[(j, i)]}")
        seen.setdefault((i, j), k)
    return problems


def incident_edges(graph: AtomGraph, n: int) -> list[tuple[int, int, float]]:
    """``(edge index, other endpoint, distance)`` for every edge touching ``n``."""
    if not 0 <= n < graph.num_nodes:
        raise IndexError(f"node {n} out of range for {graph.num_nodes} nodes")
    out = []
    for k, (i, j, r) in enumerate(graph.edges):
        if i == n:
            out.append((k, j, r))
        elif j == n:
            out.append((k, i, r))
    return out


# ---------------------------------------------------------------- extended XYZ


def _parse_comment(line: str, lineno: int) -> dict:
    try:
        tokens = shlex.split(line)
    except ValueError as exc:
        raise XYZParseError(f"line {lineno}: unbalanced quotes in comment line") from exc
    info: dict = {}
    for tok in tokens:
        if "=" not in tok:
            continue
        key, value = tok.split("=", 1)
        key = key.strip()
        if key == "energy":
            try:
                info["energy"] = float(value)
            except ValueError:
                raise XYZParseError(f"line {lineno}: energy={value!r} is not a number") from None
        elif key == "cell":
            try:
                cell = [float(v) for v in value.split()]
            except ValueError:
                raise XYZParseError(f"line {lineno}: cell={value!r} is not numeric") from None
            if len(cell) != 3:
                raise XYZParseError(f"line {lineno}: cell needs 3 lengths, got {len(cell)}")
            info["cell"] = cell
        else:
            info[key] = value
    return info


def parse_xyz(text: str) -> list[tuple[Structure, dict]]:
    """Parse one or more concatenated extended-XYZ frames."""
    lines = text.splitlines()
    frames = []
    pos = 0
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        head = lines[pos].strip()
        try:
            n = int(head)
        except ValueError:
            raise XYZParseError(f"line {pos + 1}: expected an atom count, got {head!r}") from None
        if n < 1:
            raise XYZParseError(f"line {pos + 1}: atom count must be positive, got {n}")
        if pos + 1 >= len(lines):
            raise XYZParseError(f"line {pos + 2}: missing comment line")
        info = _parse_comment(lines[pos + 1], pos + 2)
        species, coords = [], []
        for k in range(n):
            lineno = pos + 3 + k
            if lineno > len(lines):
                raise XYZParseError(f"line {lineno}: expected {n} atoms, file ended after {k}")
            parts = lines[lineno - 1].split()
            if len(parts) < 4:
                raise XYZParseError(f"line {lineno}: expected 'species x y z', got {lines[lineno - 1]!r}")
            try:
                xyz = [float(v) for v in parts[1:4]]
            except ValueError:
                raise XYZParseError(f"line {lineno}: non-numeric coordinate in {lines[lineno - 1]!r}") from None
            if not all(np.isfinite(xyz)):
                raise XYZParseError(f"line {lineno}: non-finite coordinate")
            species.append(parts[0])
            coords.append(xyz)
        frames.append((Structure(np.array(coords), species, info.get("cell")), info))
        pos += 2 + n
    if not frames:
        raise XYZParseError("line 1: no frames found")
    return frames


def read_xyz(path) -> list[tuple[Structure, dict]]:
    return parse_xyz(Path(path).read_text())


def format_xyz(structure: Structure, energy: float | None = None, comment: str = "") -> str:
    meta = []
    if energy is not None:
        meta.append(f"energy={float(energy)!r}")
    if structure.cell is not None:
        meta.append('cell="' + " ".join(repr(float(c)) for c in structure.cell) + '"')
    if comment:
        meta.append(comment)
    rows = [str(len(structure.species)), " ".join(meta)]
    for s, (x, y, z) in zip(structure.species, structure.positions):
        rows.append(f"{s} {float(x)!r} {float(y)!r} {float(z)!r}")
    return "\n".join(rows) + "\n"
