"""Write the bundled toy extended-XYZ corpus under data/toy_xyz/.

50 small H/C/O clusters with energies from a fixed Morse pair potential
(cutoff 3 Angstrom). The numbers only stand in for DFT energies so the
ingest -> train -> eval pipeline has something to chew on.

    python demos/make_toy_corpus.py
"""
import itertools
from pathlib import Path

import numpy as np

from mofgcn.graph import Structure, format_xyz

OUT = Path(__file__).resolve().parents[1] / "data" / "toy_xyz"
SPECIES = ["H", "C", "O"]
CUTOFF = 3.0
# depth (Ry), width (1/Angstrom), equilibrium distance (Angstrom)
MORSE = {
    ("C", "C"): (0.27, 1.9, 1.54),
    ("C", "H"): (0.31, 1.8, 1.09),
    ("C", "O"): (0.26, 2.0, 1.43),
    ("H", "H"): (0.33, 1.9, 0.74),
    ("H", "O"): (0.34, 2.2, 0.96),
    ("O", "O"): (0.11, 2.6, 1.48),
}


def morse(r, depth, width, r0):
    x = np.exp(-width * (r - r0))
    return depth * (x * x - 2 * x)


def random_cluster(rng, n_atoms=6, box=3.5, min_sep=0.8):
    pos = []
    while len(pos) < n_atoms:
        p = rng.uniform(0, box, 3)
        if all(np.linalg.norm(p - q) >= min_sep for q in pos):
            pos.append(p)
    return np.array(pos), list(rng.choice(SPECIES, n_atoms))


def energy(positions, species):
    e = 0.0
    for i, j in itertools.combinations(range(len(species)), 2):
        r = np.linalg.norm(positions[i] - positions[j])
        if r <= CUTOFF:
            e += morse(r, *MORSE[tuple(sorted((species[i], species[j])))])
    return e


def main(n=50, seed=7):
    rng = np.random.default_rng(seed)
    OUT.mkdir(parents=True, exist_ok=True)
    for k in range(n):
        pos, species = random_cluster(rng)
        text = format_xyz(Structure(pos, species), energy=energy(pos, species), comment="units=Ry")
        (OUT / f"toy_{k:03d}.xyz").write_text(text)
    print(f"wrote {n} structures to {OUT}")


if __name__ == "__main__":
    main()
