"""Discrete measures on sampled atoms: total variation, moments, entropy.

A measure is stored as atoms X_1..X_n with real weights z_1..z_n and
stands for (1/n) sum_i z_i delta_{X_i}. Total variation here is the
full variation of the difference measure, with no 1/2 factor.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.atoms.shape[0] == 0:
            raise ValueError("a discrete measure needs at least one atom")
        if self.atoms.shape[0] != self.weights.shape[0]:
            raise ValueError(
                f"{self.atoms.shape[0]} atoms but {self.weights.shape[0]} weights"
            )
        if self.weights.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @property
    def size(self):
        return self.atoms.shape[0]


def _require_shared_atoms(mu1, mu2):
    if mu1.atoms.shape != mu2.atoms.shape or not np.array_equal(mu1.atoms, mu2.atoms):
        raise ValueError("measures must share the same atom list, in order")


def tv_distance(mu1, mu2):
    """Full variation |mu1 - mu2|(X) = (1/n) sum_i |z_i - z'_i|."""
    _require_shared_atoms(mu1, mu2)
    return float(np.mean(np.abs(mu1.weights - mu2.weights)))


def moment(mu, op):
    """Generalized moment (1/n) sum_i z_i Phi(X_i).

    ``op`` maps the whole atom array to a (k, n) value array; a plain
    (k, n) array of precomputed values is accepted too.
    """
    values = op(mu.atoms) if callable(op) else np.asarray(op, dtype=np.float64)
    if values.ndim == 1:
        values = values[np.newaxis, :]
    if values.shape[1] != mu.size:
        raise ValueError(f"operator produced {values.shape[1]} columns for {mu.size} atoms")
    return values @ (mu.weights / mu.size)


def entropy(mu, prior):
    """Mean Cramer-transform value (1/n) sum_i Lambda*(z_i); +inf when
    some weight leaves the closed support hull of the prior."""
    lo, hi = prior.support_hull
    z = mu.weights
    if np.any(z < lo) or np.any(z > hi):
        return float("inf")
    vals = prior.cramer_batch(z)
    total = float(np.mean(vals))
    return total if np.isfinite(total) else float("inf")


def to_csv(mu, path_or_buffer):
    """Write atoms then weight, one row per atom."""
    atoms2d = mu.atoms if mu.atoms.ndim > 1 else mu.atoms[:, np.newaxis]
    d = atoms2d.shape[1]
    header = [f"x{j}" for j in range(d)] + ["weight"]
    own = isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__")
    handle = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(mu.size):
            writer.writerow([format(v, ".17g") for v in atoms2d[i]] + [format(mu.weights[i], ".17g")])
    finally:
        if own:
            handle.close()


def from_csv(path_or_buffer):
    own = isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__")
    handle = open(path_or_buffer, "r", newline="") if own else path_or_buffer
    try:
        reader = csv.reader(handle)
        header = next(reader)
        d = len(header) - 1
        atoms, weights = [], []
        for row in reader:
            atoms.append([float(v) for v in row[:d]])
            weights.append(float(row[d]))
    finally:
        if own:
            handle.close()
    atoms = np.asarray(atoms)
    if d == 1:
        atoms = atoms[:, 0]
    return DiscreteMeasure(atoms=atoms, weights=np.asarray(weights))


def to_csv_string(mu):
    buf = io.StringIO()
    to_csv(mu, buf)
    return buf.getvalue()
