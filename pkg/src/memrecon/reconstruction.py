"""Assembling the reconstructed measure from a dual optimum."""

import json
from dataclasses import dataclass

import numpy as np

from . import measures
from .measures import DiscreteMeasure


@dataclass(frozen=True)
class Observation:
    """Noisy moment vector with the noise radius defining the constraint ball."""

    y_obs: np.ndarray
    eta: float

    def __post_init__(self):
        object.__setattr__(self, "y_obs", np.asarray(self.y_obs, dtype=np.float64).reshape(-1))
        if not np.all(np.isfinite(self.y_obs)):
            raise ValueError("observation must be finite")
        if self.eta < 0:
            raise ValueError("noise level must be nonnegative")


def amem_estimate(v_hat, atoms, op, prior):
    """Discrete estimate with weights z_i = Lambda'(<v_hat, Phi(X_i)>).

    ``op`` maps the atom array to operator columns (k, n); pass the
    smoothed operator's evaluation when the dual was solved with it.
    Weights are reported untouched: Lambda' maps into the support hull
    analytically, so any excursion is a bug upstream and should surface.
    """
    atoms = np.asarray(atoms, dtype=np.float64)
    v_hat = np.asarray(v_hat, dtype=np.float64)
    values = op(atoms) if callable(op) else np.asarray(op, dtype=np.float64)
    if values.ndim == 1:
        values = values[np.newaxis, :]
    inner = v_hat @ values
    weights = prior.log_laplace_deriv_batch(inner)
    if not np.all(np.isfinite(weights)):
        raise ValueError("weights left the log-Laplace domain; the dual solution is invalid")
    return DiscreteMeasure(atoms=atoms, weights=weights)


def residual(mu, op, obs):
    """Distance from the achieved moment to the constraint ball,
    max(0, ||moment - y_obs|| - eta); zero iff the moment is admissible."""
    achieved = measures.moment(mu, op)
    gap = float(np.linalg.norm(achieved - obs.y_obs)) - obs.eta
    return max(0.0, gap)


def write_summary(path, **fields):
    """Plain-text JSON summary of one reconstruction run."""
    clean = {}
    for key, value in fields.items():
        if isinstance(value, np.ndarray):
            clean[key] = value.tolist()
        elif isinstance(value, (np.floating, np.integer)):
            clean[key] = value.item()
        else:
            clean[key] = value
    with open(path, "w") as handle:
        json.dump(clean, handle, indent=2, sort_keys=True)
        handle.write("\n")
