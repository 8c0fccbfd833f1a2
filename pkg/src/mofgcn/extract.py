"""Read learned pair functions out of a trained decomposition model.

The sum over pairs only pins the functions down up to constants that cancel
in the total, so comparisons against a reference go through
:func:`align_offset` first.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import MofGCN
from .synthetic import SyntheticSpec, gaussian_energy, pair_key


@dataclass(frozen=True)
class PairCurve:
    pair: tuple[str, str]
    r: np.ndarray
    learned: np.ndarray
    reference: np.ndarray | None = None
    offset: float | None = None
    residual_rms: float | None = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64)
        learned = np.asarray(self.learned, dtype=np.float64)
        if r.shape != learned.shape or r.ndim != 1:
            raise ValueError("r grid and learned values must be 1-D arrays of equal length")
        if np.any(np.diff(r) <= 0):
            raise ValueError("r grid must be strictly ascending")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "learned", learned)
        if self.reference is not None:
            ref = np.asarray(self.reference, dtype=np.float64)
            if ref.shape != r.shape:
                raise ValueError("reference values do not match the r grid")
            object.__setattr__(self, "reference", ref)
        elif self.offset is not None:
            raise ValueError("an offset needs reference values")

    @property
    def label(self) -> str:
        return "-".join(self.pair)

    @property
    def aligned(self) -> np.ndarray:
        return self.learned - (self.offset or 0.0)

    def peak_location(self) -> float:
        """Distance at which the aligned learned curve is largest."""
        return float(self.r[np.argmax(self.aligned)])


def default_grid(r_min: float, r_max: float, num: int = 512) -> np.ndarray:
    return np.linspace(r_min, r_max, num)


def probe(model: MofGCN, pair: Sequence[str], r_grid) -> PairCurve:
    """Learned contribution of ``pair`` at each grid distance, in target units."""
    a, b = pair
    r = np.asarray(r_grid, dtype=np.float64)
    return PairCurve((a, b), r, model.pair_energy(a, b, r))


def reference_curve(spec: SyntheticSpec, pair: Sequence[str], r_grid) -> np.ndarray:
    mu, sigma = spec.pair_params[pair_key(*pair)]
    return gaussian_energy(np.asarray(r_grid, dtype=np.float64), mu, sigma, spec.normalized)


def with_reference(curve: PairCurve, reference) -> PairCurve:
    return replace(curve, reference=np.asarray(reference, dtype=np.float64), offset=None, residual_rms=None)


def align_offset(curve: PairCurve, reference=None, mask=None) -> PairCurve:
    """Shift the learned curve by the constant that best matches the reference in L2.

    That constant is the mean difference. ``mask`` restricts both the fit and
    the residual to part of the grid.
    """
    if reference is not None:
        reference = np.asarray(reference, dtype=np.float64)
        if reference.shape != curve.r.shape:
            raise ValueError(f"reference has {reference.size} points, grid has {curve.r.size}")
        curve = with_reference(curve, reference)
    if curve.reference is None:
        raise ValueError("align_offset needs reference values on the same grid")
    sel = np.ones(curve.r.shape, bool) if mask is None else np.asarray(mask, bool)
    diff = curve.learned[sel] - curve.reference[sel]
    c = float(np.mean(diff))
    rms = float(np.sqrt(np.mean((diff - c) ** 2)))
    return replace(curve, offset=c, residual_rms=rms)


def _rows(curves: Sequence[PairCurve]):
    for curve in sorted(curves, key=lambda c: c.label):
        ref = curve.reference
        for k in range(len(curve.r)):
            yield {
                "pair": curve.label,
                "r": curve.r[k],
                "learned": curve.learned[k],
                "reference": None if ref is None else ref[k],
                "aligned": curve.aligned[k],
            }


def export_curves(curves: Sequence[PairCurve], path) -> None:
    """CSV with one row per (pair, r), sorted by pair then distance; 12 significant digits."""
    if not curves:
        raise ValueError("no curves to export")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "r", "learned", "reference", "aligned"])
        for row in _rows(curves):
            w.writerow([
                row["pair"],
                f"{row['r']:.12g}",
                f"{row['learned']:.12g}",
                "" if row["reference"] is None else f"{row['reference']:.12g}",
                f"{row['aligned']:.12g}",
            ])


def export_curves_json(curves: Sequence[PairCurve], path) -> None:
    if not curves:
        raise ValueError("no curves to export")
    doc = [
        {
            "pair": list(c.pair),
            "r": c.r.tolist(),
            "learned": c.learned.tolist(),
            "reference": None if c.reference is None else c.reference.tolist(),
            "offset": c.offset,
            "residual_rms": c.residual_rms,
        }
        for c in sorted(curves, key=lambda c: c.label)
    ]
    Path(path).write_text(json.dumps(doc, indent=1))


def read_curves(path) -> list[PairCurve]:
    """Load curves written by :func:`export_curves`; offsets are recomputed from ``aligned``."""
    table: dict[str, dict[str, list]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cols = table.setdefault(row["pair"], {"r": [], "learned": [], "reference": [], "aligned": []})
            cols["r"].append(float(row["r"]))
            cols["learned"].append(float(row["learned"]))
            cols["reference"].append(float(row["reference"]) if row["reference"] else None)
            cols["aligned"].append(float(row["aligned"]))
    curves = []
    for label, cols in table.items():
        pair = tuple(label.split("-", 1))
        learned = np.array(cols["learned"])
        has_ref = all(v is not None for v in cols["reference"])
        ref = np.array(cols["reference"], dtype=float) if has_ref else None
        offset = float(np.mean(learned - np.array(cols["aligned"]))) if has_ref else None
        curves.append(PairCurve(pair, np.array(cols["r"]), learned, ref, offset))
    return curves
