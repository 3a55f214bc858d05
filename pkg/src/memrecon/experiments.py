"""Monte Carlo harness: problem generation, rate studies, feasibility
frequencies and the deconvolution demo.

Every random draw comes from a counter-based stream keyed by
(seed, purpose, cell * replications + rep), so replications are
independent, order-insensitive and bit-reproducible. Study outputs are
flat record lists with a fixed column set; medians and log-log slopes
summarize them.
"""

import numpy as np
from dataclasses import dataclass, field
from numpy.polynomial.legendre import leggauss

from . import dual, measures, operators, reconstruction, rng
from .config import ConfigError, truth_function
from .dual import AT_ORIGIN, CONVERGED, DualProblem

CSV_COLUMNS = [
    "study",
    "n",
    "m_or_bandwidth",
    "rep",
    "seed",
    "tv_error",
    "op_l2_error",
    "residual",
    "entropy",
    "feasible",
    "status",
    "iters",
    "grad_norm",
]

EXCLUSION_BUDGET = 0.05


class StudyError(RuntimeError):
    """A study lost more replications to non-convergence than the budget allows."""


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    r2: float


def fit_slope(points):
    """Ordinary least squares in log-log space over (x, y) pairs."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise ValueError("slope fit needs at least two points")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("slope fit needs strictly positive coordinates")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return SlopeFit(slope=float(slope), intercept=float(intercept), r2=float(r2))


def gauss_legendre(box, count):
    """Nodes and probability weights of Gauss-Legendre quadrature for the
    uniform law on ``box`` (weights sum to one)."""
    nodes, weights = leggauss(count)
    a, b = box
    x = 0.5 * (nodes + 1.0) * (b - a) + a
    return x, weights / 2.0


def build_operator(cfg):
    if cfg.operator == "power_moments":
        return operators.power_moments(cfg.degree)
    if cfg.operator == "trig_moments":
        return operators.trig_moments(cfg.degree)
    if cfg.operator == "convolution":
        pts = np.linspace(cfg.px[0], cfg.px[1], cfg.obs_points)
        return operators.convolution(pts, psf=cfg.psf, psf_width=cfg.psf_width)
    if cfg.operator == "parametric":
        return operators.parametric(cfg.param_family, output_dim=cfg.degree)
    raise ConfigError(f"unknown operator kind {cfg.operator!r}")


def exact_evaluator(cfg, op):
    """Exact operator as a plain atoms -> (k, n) callable (t_obs bound in)."""
    if op.kind == "parametric":
        return lambda x: op.eval_exact(x, cfg.t_obs)
    return op.eval_exact


@dataclass
class GeneratedProblem:
    atoms: np.ndarray
    phi_matrix: np.ndarray
    observation: reconstruction.Observation
    y_clean: np.ndarray
    v_star: np.ndarray = None
    mu_star_weights: np.ndarray = None
    oracle_status: str = ""


def clean_moment(cfg, op_eval, g0):
    """High-resolution quadrature of the noiseless moment of g0 dP_X."""
    xq, wq = gauss_legendre(cfg.px, cfg.quadrature_nodes)
    return op_eval(xq) @ (wq * g0(xq))


def _push_outside_reach(phi, node_weights, hull, y, eta):
    """Shift the first moment coordinate beyond anything the hull box can
    reach, making the problem infeasible by construction."""
    lo, hi = hull
    row = phi[0] * node_weights
    reach_max = float(np.sum(np.where(row > 0, hi * row, lo * row)))
    y = y.copy()
    y[0] = reach_max + eta + 1.0
    return y


def generate_problem(cfg, n, rep, with_oracle=True):
    """Draw one replication: atoms, exact operator columns, noisy moment
    and the population oracle solved on the exact operator."""
    op = build_operator(cfg)
    op_eval = exact_evaluator(cfg, op)
    g0 = truth_function(cfg)
    prior = cfg.prior_measure()

    atoms = rng.stream(cfg.seed, rng.ATOMS, rep).uniform(cfg.px[0], cfg.px[1], int(n))
    phi = op_eval(atoms)
    y_clean = clean_moment(cfg, op_eval, g0)
    eps = rng.sphere_noise(rng.stream(cfg.seed, rng.NOISE, rep), phi.shape[0], cfg.eta)
    y_obs = y_clean + eps

    if cfg.force_infeasible:
        y_obs = _push_outside_reach(phi, np.full(int(n), 1.0 / n), prior.support_hull, y_obs, cfg.eta)
        return GeneratedProblem(
            atoms=atoms,
            phi_matrix=phi,
            observation=reconstruction.Observation(y_obs, cfg.eta),
            y_clean=y_clean,
        )

    problem = GeneratedProblem(
        atoms=atoms,
        phi_matrix=phi,
        observation=reconstruction.Observation(y_obs, cfg.eta),
        y_clean=y_clean,
    )
    if with_oracle:
        xq, wq = gauss_legendre(cfg.px, cfg.quadrature_nodes)
        _, sol = dual.population_solve(
            op_eval, xq, wq, y_obs, cfg.eta, prior,
            tolerance=cfg.tolerance, max_iters=cfg.max_iters,
        )
        problem.v_star = sol.v_hat
        problem.oracle_status = sol.status
        problem.mu_star_weights = prior.log_laplace_deriv_batch(sol.v_hat @ phi)
    return problem


def _record(study, n, m_or_bw, rep, seed, **kv):
    row = {col: "" for col in CSV_COLUMNS}
    row.update(study=study, n=n, m_or_bandwidth=m_or_bw, rep=rep, seed=seed)
    row.update(kv)
    return row


@dataclass
class RateReport:
    study: str
    grid: list
    errors: list  # per grid point, list of per-replication errors
    medians: list
    slope: float
    intercept: float
    r2: float
    exclusions: int
    records: list = field(default_factory=list)

    def summary(self):
        return {
            "study": self.study,
            "grid": list(self.grid),
            "medians": list(self.medians),
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "exclusions": self.exclusions,
        }


def _check_exclusions(study, excluded, total):
    if excluded > EXCLUSION_BUDGET * total:
        raise StudyError(
            f"{study}: {excluded} of {total} replications failed to converge, "
            f"over the {EXCLUSION_BUDGET:.0%} budget"
        )


def _require_bounded_prior(cfg, prior, study):
    if not prior.bounded_transforms and not cfg.allow_unbounded_prior:
        raise ConfigError(
            f"{study} needs a prior with bounded transforms (uniform or two_point); "
            f"{prior.family} violates the rate hypotheses. "
            "Set allow_unbounded_prior=true to override."
        )


def rate_study_n(cfg):
    """Reconstruction error against the population solution as the sample
    grows, on the exact operator; the fitted log-log slope tracks the
    root-n term of the error bound."""
    prior = cfg.prior_measure()
    _require_bounded_prior(cfg, prior, "rate-n study")
    op = build_operator(cfg)
    op_eval = exact_evaluator(cfg, op)

    records, errors_by_n, medians = [], [], []
    excluded = 0
    for gi, n in enumerate(cfg.n_grid):
        errs = []
        for rep in range(cfg.replications):
            key = gi * cfg.replications + rep
            prob = generate_problem(cfg, n, key)
            problem = DualProblem(
                phi_matrix=prob.phi_matrix,
                y_obs=prob.observation.y_obs,
                eta=cfg.eta,
                prior=prior,
            )
            sol = dual.solve(problem, tolerance=cfg.tolerance, max_iters=cfg.max_iters)
            if sol.status not in (CONVERGED, AT_ORIGIN) or prob.oracle_status not in (
                CONVERGED,
                AT_ORIGIN,
            ):
                excluded += 1
                continue
            x_eval = rng.stream(cfg.seed, rng.EVAL, key).uniform(
                cfg.px[0], cfg.px[1], cfg.eval_points
            )
            phi_eval = op_eval(x_eval)
            mu_hat = reconstruction.amem_estimate(sol.v_hat, x_eval, phi_eval, prior)
            mu_star = reconstruction.amem_estimate(prob.v_star, x_eval, phi_eval, prior)
            tv = measures.tv_distance(mu_hat, mu_star)

            mu_atoms = reconstruction.amem_estimate(sol.v_hat, prob.atoms, prob.phi_matrix, prior)
            res = reconstruction.residual(mu_atoms, prob.phi_matrix, prob.observation)
            ent = measures.entropy(mu_atoms, prior)
            errs.append(tv)
            records.append(
                _record(
                    "rate-n", n, "", rep, cfg.seed,
                    tv_error=tv, residual=res, entropy=ent,
                    status=sol.status, iters=sol.iterations, grad_norm=sol.grad_norm,
                )
            )
        if not errs:
            raise StudyError(f"rate-n study: no converged replication at n={n}")
        errors_by_n.append(errs)
        medians.append(float(np.median(errs)))
    total = len(cfg.n_grid) * cfg.replications
    _check_exclusions("rate-n study", excluded, total)
    fit = fit_slope(zip(cfg.n_grid, medians))
    return RateReport(
        study="rate-n",
        grid=list(cfg.n_grid),
        errors=errors_by_n,
        medians=medians,
        slope=fit.slope,
        intercept=fit.intercept,
        r2=fit.r2,
        exclusions=excluded,
        records=records,
    )


def rate_study_m(cfg):
    """Reconstruction error against the exact-operator solution as the
    smoothed operator improves along a bandwidth sweep; both solves use
    the quadrature rule so sampling error stays out of the comparison.
    The abscissa is the measured operator error, not the bandwidth."""
    prior = cfg.prior_measure()
    _require_bounded_prior(cfg, prior, "rate-m study")
    if cfg.operator != "parametric":
        raise ConfigError("rate-m study needs a parametric operator")
    if not cfg.bandwidth_grid:
        raise ConfigError("rate-m study needs a bandwidth_grid")
    op = build_operator(cfg)
    op_eval = exact_evaluator(cfg, op)
    g0 = truth_function(cfg)

    xq, wq = gauss_legendre(cfg.px, cfg.quadrature_nodes)
    y_clean = op_eval(xq) @ (wq * g0(xq))
    t_lo, t_hi = cfg.t_domain
    f_t = 1.0 / (t_hi - t_lo)
    t_grid = np.linspace(cfg.t_grid[0], cfg.t_grid[1], cfg.t_grid_count)
    m = cfg.design_size

    records, errors, e_medians, medians = [], [], [], []
    excluded = 0
    for gi, h in enumerate(cfg.bandwidth_grid):
        errs, ems = [], []
        for rep in range(cfg.replications):
            key = gi * cfg.replications + rep
            eps = rng.sphere_noise(rng.stream(cfg.seed, rng.NOISE, key), op.output_dim, cfg.eta)
            y_obs = y_clean + eps
            _, sol_star = dual.population_solve(
                op_eval, xq, wq, y_obs, cfg.eta, prior,
                tolerance=cfg.tolerance, max_iters=cfg.max_iters,
            )

            design = rng.stream(cfg.seed, rng.DESIGN, key).uniform(t_lo, t_hi, m)
            x_l2 = rng.stream(cfg.seed, rng.L2_SAMPLE, key).uniform(
                cfg.px[0], cfg.px[1], cfg.l2_points
            )
            approx_l2 = operators.build_kernel_approx(op, design, cfg.kernel, h, f_t, atoms=x_l2)
            e_m = operators.l2_distance(op, approx_l2, x_l2, t_grid)

            approx_q = operators.build_kernel_approx(op, design, cfg.kernel, h, f_t, atoms=xq)
            phi_m_q = approx_q.eval_approx(xq, cfg.t_obs)
            problem = DualProblem(
                phi_matrix=phi_m_q, y_obs=y_obs, eta=cfg.eta, prior=prior, node_weights=wq
            )
            sol = dual.solve(problem, tolerance=cfg.tolerance, max_iters=cfg.max_iters)
            if sol.status not in (CONVERGED, AT_ORIGIN) or sol_star.status not in (
                CONVERGED,
                AT_ORIGIN,
            ):
                excluded += 1
                continue

            x_eval = rng.stream(cfg.seed, rng.EVAL, key).uniform(
                cfg.px[0], cfg.px[1], cfg.eval_points
            )
            approx_eval = operators.build_kernel_approx(
                op, design, cfg.kernel, h, f_t, atoms=x_eval
            )
            z_hat = prior.log_laplace_deriv_batch(
                sol.v_hat @ approx_eval.eval_approx(x_eval, cfg.t_obs)
            )
            z_star = prior.log_laplace_deriv_batch(sol_star.v_hat @ op_eval(x_eval))
            tv = float(np.mean(np.abs(z_hat - z_star)))

            z_q = prior.log_laplace_deriv_batch(sol.v_hat @ phi_m_q)
            achieved = phi_m_q @ (wq * z_q)
            res = max(0.0, float(np.linalg.norm(achieved - y_obs)) - cfg.eta)
            ent = float(wq @ prior.cramer_batch(z_q))
            errs.append(tv)
            ems.append(e_m)
            records.append(
                _record(
                    "rate-m", cfg.quadrature_nodes, h, rep, cfg.seed,
                    tv_error=tv, op_l2_error=e_m, residual=res, entropy=ent,
                    status=sol.status, iters=sol.iterations, grad_norm=sol.grad_norm,
                )
            )
        if not errs:
            raise StudyError(f"rate-m study: no converged replication at h={h}")
        errors.append(errs)
        medians.append(float(np.median(errs)))
        e_medians.append(float(np.median(ems)))
    total = len(cfg.bandwidth_grid) * cfg.replications
    _check_exclusions("rate-m study", excluded, total)
    fit = fit_slope(zip(e_medians, medians))
    return RateReport(
        study="rate-m",
        grid=e_medians,
        errors=errors,
        medians=medians,
        slope=fit.slope,
        intercept=fit.intercept,
        r2=fit.r2,
        exclusions=excluded,
        records=records,
    )


@dataclass
class FeasibilityReport:
    cells: list  # (n, bandwidth-or-None)
    frequencies: list
    stalls: int
    records: list = field(default_factory=list)

    def summary(self):
        return {
            "study": "feasibility",
            "cells": [[n, "" if h is None else h] for n, h in self.cells],
            "frequencies": list(self.frequencies),
            "stalls": self.stalls,
        }


def feasibility_study(cfg):
    """Empirical frequency of a nonempty constraint set per grid cell."""
    prior = cfg.prior_measure()
    op = build_operator(cfg)
    g0 = truth_function(cfg)
    bandwidths = list(cfg.bandwidth_grid) if (
        cfg.operator == "parametric" and cfg.bandwidth_grid
    ) else [None]
    t_lo, t_hi = cfg.t_domain
    f_t = 1.0 / (t_hi - t_lo)

    cells, freqs, records = [], [], []
    stalls = 0
    cell_index = 0
    for h in bandwidths:
        for n in cfg.n_grid:
            hits = 0
            for rep in range(cfg.replications):
                key = cell_index * cfg.replications + rep
                prob = generate_problem(cfg, n, key, with_oracle=False)
                phi = prob.phi_matrix
                if h is not None:
                    design = rng.stream(cfg.seed, rng.DESIGN, key).uniform(
                        t_lo, t_hi, cfg.design_size
                    )
                    approx = operators.build_kernel_approx(
                        op, design, cfg.kernel, h, f_t, atoms=prob.atoms
                    )
                    phi = approx.eval_approx(prob.atoms, cfg.t_obs)
                problem = DualProblem(
                    phi_matrix=phi,
                    y_obs=prob.observation.y_obs,
                    eta=cfg.eta,
                    prior=prior,
                )
                check = dual.feasibility(problem)
                hits += bool(check)
                stalls += check.stalled
                records.append(
                    _record(
                        "feasibility", n, "" if h is None else h, rep, cfg.seed,
                        feasible="true" if check.feasible else "false",
                        status="stalled" if check.stalled else "decided",
                        iters=check.iterations,
                    )
                )
            cells.append((n, h))
            freqs.append(hits / cfg.replications)
            cell_index += 1
    return FeasibilityReport(cells=cells, frequencies=freqs, stalls=stalls, records=records)


@dataclass
class DemoResult:
    estimate: measures.DiscreteMeasure
    truth: measures.DiscreteMeasure
    tv_error: float
    residual: float
    entropy: float
    status: str
    iterations: int
    grad_norm: float
    objective: float
    records: list = field(default_factory=list)

    def summary(self):
        return {
            "study": "demo-deconv",
            "tv_error": self.tv_error,
            "residual": self.residual,
            "entropy": self.entropy,
            "status": self.status,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "objective": self.objective,
        }


def demo_deconv(cfg, rep=0):
    """Recover a density from blurred moments: a convolution operator with
    the configured point-spread function observed on a point grid."""
    if cfg.operator != "convolution":
        raise ConfigError("demo-deconv needs a convolution operator")
    prior = cfg.prior_measure()
    g0 = truth_function(cfg)
    prob = generate_problem(cfg, cfg.n, rep, with_oracle=False)
    problem = DualProblem(
        phi_matrix=prob.phi_matrix,
        y_obs=prob.observation.y_obs,
        eta=cfg.eta,
        prior=prior,
    )
    sol = dual.solve(problem, tolerance=cfg.tolerance, max_iters=cfg.max_iters)
    estimate = reconstruction.amem_estimate(sol.v_hat, prob.atoms, prob.phi_matrix, prior)
    truth = measures.DiscreteMeasure(atoms=prob.atoms, weights=g0(prob.atoms))
    tv = measures.tv_distance(estimate, truth)
    res = reconstruction.residual(estimate, prob.phi_matrix, prob.observation)
    ent = measures.entropy(estimate, prior)
    record = _record(
        "demo-deconv", cfg.n, "", rep, cfg.seed,
        tv_error=tv, residual=res, entropy=ent,
        status=sol.status, iters=sol.iterations, grad_norm=sol.grad_norm,
    )
    return DemoResult(
        estimate=estimate,
        truth=truth,
        tv_error=tv,
        residual=res,
        entropy=ent,
        status=sol.status,
        iterations=sol.iterations,
        grad_norm=sol.grad_norm,
        objective=sol.objective_value,
        records=[record],
    )


def format_cell(value):
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_records(path, records):
    """Fixed-column CSV with repr-exact floats, for byte-stable reruns."""
    with open(path, "w", newline="") as handle:
        handle.write(",".join(CSV_COLUMNS) + "\n")
        for row in records:
            handle.write(",".join(format_cell(row[col]) for col in CSV_COLUMNS) + "\n")
