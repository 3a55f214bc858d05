"""Experiment configuration: TOML key-value files plus validation."""

import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from . import priors


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    seed: int = 0
    prior: str = "uniform"
    prior_params: list = field(default_factory=lambda: [0.0, 2.0])

    operator: str = "power_moments"
    degree: int = 3  # components for power/trig/parametric operators
    obs_points: int = 24  # convolution observation grid size
    psf: str = "gaussian"
    psf_width: float = 0.05

    param_family: str = "scaled_powers"
    t_obs: float = 0.5
    t_domain: list = field(default_factory=lambda: [-1.0, 2.0])
    kernel: str = "gaussian"
    design_size: int = 2000
    bandwidth_grid: list = field(default_factory=list)
    t_grid: list = field(default_factory=lambda: [0.3, 0.7])
    t_grid_count: int = 9

    truth: str = "two_bump"
    truth_params: list = field(default_factory=list)

    px: list = field(default_factory=lambda: [0.0, 1.0])
    eta: float = 0.05
    n: int = 1000  # atoms for single-problem commands
    n_grid: list = field(default_factory=lambda: [125, 500, 2000, 8000])
    replications: int = 100
    quadrature_nodes: int = 256
    eval_points: int = 2000
    l2_points: int = 1000

    tolerance: float = 1e-9
    max_iters: int = 200
    allow_unbounded_prior: bool = False
    force_infeasible: bool = False

    def prior_measure(self):
        try:
            return priors.from_config(self.prior, self.prior_params)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


_TRUTH_DEFAULTS = {
    "constant": [1.0],
    "two_bump": [0.3, 0.7, 0.3, 0.7, 0.08],  # base, amplitude, center1, center2, width
    "ramp": [0.2, 1.2],
}


def truth_function(cfg):
    """Named truth density g0 on the sample box, as a vectorized callable."""
    params = cfg.truth_params or _TRUTH_DEFAULTS.get(cfg.truth)
    if cfg.truth == "constant":
        (c,) = params
        return lambda x: np.full_like(np.asarray(x, dtype=np.float64), c)
    if cfg.truth == "two_bump":
        base, amp, c1, c2, width = params
        return lambda x: base + amp * (
            np.exp(-0.5 * ((np.asarray(x) - c1) / width) ** 2)
            + np.exp(-0.5 * ((np.asarray(x) - c2) / width) ** 2)
        )
    if cfg.truth == "ramp":
        lo, hi = params
        a, b = cfg.px
        return lambda x: lo + (hi - lo) * (np.asarray(x) - a) / (b - a)
    raise ConfigError(f"unknown truth family {cfg.truth!r}")


def load(path, seed_override=None):
    """Read a TOML config file into a validated ExperimentConfig."""
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**raw)
    if seed_override is not None:
        cfg.seed = int(seed_override)
    validate(cfg)
    return cfg


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def validate(cfg):
    _require(cfg.replications >= 1, "replications must be >= 1")
    _require(cfg.eta >= 0, "eta must be nonnegative")
    _require(len(cfg.px) == 2 and cfg.px[1] > cfg.px[0], "px must be an increasing pair")
    _require(cfg.quadrature_nodes >= 8, "quadrature_nodes must be >= 8")
    _require(cfg.eval_points >= 1 and cfg.l2_points >= 1, "sample sizes must be positive")
    _require(cfg.n >= 1, "n must be >= 1")
    _require(cfg.tolerance > 0, "tolerance must be positive")
    _require(cfg.max_iters >= 1, "max_iters must be >= 1")
    _require(cfg.kernel in ("gaussian", "epanechnikov"), f"unknown kernel {cfg.kernel!r}")
    _require(
        cfg.operator in ("power_moments", "trig_moments", "convolution", "parametric"),
        f"unknown operator kind {cfg.operator!r}",
    )
    _require(cfg.degree >= 1, "degree must be >= 1")

    grids = [("n_grid", cfg.n_grid)]
    if cfg.bandwidth_grid:
        grids.append(("bandwidth_grid", cfg.bandwidth_grid))
    for name, grid in grids:
        _require(len(grid) >= 1, f"{name} must be nonempty")
        _require(all(b > a for a, b in zip(grid, grid[1:])), f"{name} must be increasing")
        _require(all(g > 0 for g in grid), f"{name} entries must be positive")
    _require(
        len(cfg.t_domain) == 2 and cfg.t_domain[1] > cfg.t_domain[0],
        "t_domain must be an increasing pair",
    )
    _require(len(cfg.t_grid) == 2 and cfg.t_grid[1] >= cfg.t_grid[0], "t_grid must be a pair")
    _require(cfg.t_grid_count >= 1, "t_grid_count must be >= 1")
    _require(cfg.design_size >= 1, "design_size must be >= 1")

    prior = cfg.prior_measure()
    if cfg.truth not in _TRUTH_DEFAULTS:
        raise ConfigError(f"unknown truth family {cfg.truth!r}")
    expected = len(_TRUTH_DEFAULTS[cfg.truth])
    if cfg.truth_params and len(cfg.truth_params) != expected:
        raise ConfigError(f"truth {cfg.truth!r} takes {expected} parameters")

    # solvability surrogate: the truth must map the sample box into the
    # support hull, checked on a fine grid
    g0 = truth_function(cfg)
    xs = np.linspace(cfg.px[0], cfg.px[1], 512)
    vals = g0(xs)
    lo, hi = prior.support_hull
    if float(np.min(vals)) < lo or float(np.max(vals)) > hi:
        raise ConfigError(
            f"truth values span [{np.min(vals):.4g}, {np.max(vals):.4g}] but the "
            f"prior support hull is [{lo:.4g}, {hi:.4g}]"
        )
    return cfg
