"""Finite-dimensional convex dual of the entropy reconstruction problem.

For atoms X_1..X_n with node weights w_i (uniform 1/n for an empirical
sample, quadrature weights for a population surrogate), the dual
objective over v in R^k is

    H(v) = sum_i w_i Lambda(<v, phi_i>) - <v, y_obs> + eta ||v||,

whose minimizer yields reconstruction weights z_i = Lambda'(<v, phi_i>).
The only nonsmooth point is the origin, handled by an explicit
subdifferential test; everywhere else a damped Newton iteration with
backtracking applies. H(0) = 0 and the minimum is <= 0, so once a
strictly negative starting value is found (one always exists along
-r0 when the origin test fails) monotone descent keeps the iterates
clear of the nonsmooth point.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .priors import DomainError

CONVERGED = "converged"
AT_ORIGIN = "at_origin"
MAX_ITERS = "max_iters"
INFEASIBLE_DIRECTION = "infeasible_direction"

_DOM_MARGIN = 1e-8  # keep inner products strictly inside dom Lambda
_ARMIJO = 1e-4
_MAX_HALVINGS = 60
_DIVERGENCE_FACTOR = 1e8


@dataclass
class DualProblem:
    """Data of one dual minimization: operator columns, observation, noise
    radius and prior. ``node_weights`` defaults to the uniform empirical
    weights 1/n; quadrature rules pass their own weights."""

    phi_matrix: np.ndarray  # (k, n), column i = Phi_m(X_i)
    y_obs: np.ndarray  # (k,)
    eta: float
    prior: object
    node_weights: np.ndarray = None

    def __post_init__(self):
        self.phi_matrix = np.ascontiguousarray(self.phi_matrix, dtype=np.float64)
        if self.phi_matrix.ndim != 2:
            raise ValueError("phi_matrix must be a (k, n) array")
        self.y_obs = np.asarray(self.y_obs, dtype=np.float64).reshape(-1)
        k, n = self.phi_matrix.shape
        if k < 1 or n < 1:
            raise ValueError("phi_matrix needs at least one row and one column")
        if self.y_obs.shape[0] != k:
            raise ValueError(f"observation has dim {self.y_obs.shape[0]}, operator has {k}")
        if not np.all(np.isfinite(self.phi_matrix)) or not np.all(np.isfinite(self.y_obs)):
            raise ValueError("operator matrix and observation must be finite")
        if self.eta < 0:
            raise ValueError("noise level eta must be nonnegative")
        if self.node_weights is None:
            self.node_weights = np.full(n, 1.0 / n)
        else:
            self.node_weights = np.ascontiguousarray(self.node_weights, dtype=np.float64)
            if self.node_weights.shape != (n,):
                raise ValueError("node_weights must match the number of atoms")

    @property
    def k(self):
        return self.phi_matrix.shape[0]

    @property
    def n(self):
        return self.phi_matrix.shape[1]

    def rank_deficient(self):
        """True when the operator rows are linearly dependent over the atoms."""
        return np.linalg.matrix_rank(self.phi_matrix) < self.k


@dataclass
class DualSolution:
    v_hat: np.ndarray
    objective_value: float
    grad_norm: float
    status: str
    iterations: int
    newton_decrements: list = field(default_factory=list)
    rank_deficient: bool = False


def _family(p):
    prior = p.prior
    return prior.code, prior.p1, prior.p2


def objective(p, v):
    """H(v); raises DomainError when an inner product leaves dom Lambda."""
    v = np.asarray(v, dtype=np.float64)
    code, p1, p2 = _family(p)
    val = kernels.weighted_logmgf_value(p.phi_matrix, p.node_weights, v, code, p1, p2, 0.0)
    if not np.isfinite(val):
        raise DomainError("an inner product <v, phi_i> left the log-Laplace domain")
    return float(val - v @ p.y_obs + p.eta * np.linalg.norm(v))


def gradient(p, v):
    """Gradient of H at v != 0 (the norm term is nonsmooth at the origin)."""
    v = np.asarray(v, dtype=np.float64)
    nv = float(np.linalg.norm(v))
    if nv == 0.0 and p.eta > 0.0:
        raise ValueError("gradient undefined at v=0; use check_zero_optimality")
    code, p1, p2 = _family(p)
    val, grad_s, _ = kernels.weighted_logmgf_sums(
        p.phi_matrix, p.node_weights, v, code, p1, p2, 0.0
    )
    if not np.isfinite(val):
        raise DomainError("an inner product <v, phi_i> left the log-Laplace domain")
    out = grad_s - p.y_obs
    if p.eta > 0.0:
        out = out + p.eta * v / nv
    return out


def hessian(p, v):
    """Hessian of H at v != 0: the weighted Gram part plus the norm curvature."""
    v = np.asarray(v, dtype=np.float64)
    nv = float(np.linalg.norm(v))
    if nv == 0.0 and p.eta > 0.0:
        raise ValueError("hessian undefined at v=0; use check_zero_optimality")
    code, p1, p2 = _family(p)
    val, _, hess_s = kernels.weighted_logmgf_sums(
        p.phi_matrix, p.node_weights, v, code, p1, p2, 0.0
    )
    if not np.isfinite(val):
        raise DomainError("an inner product <v, phi_i> left the log-Laplace domain")
    if p.eta > 0.0 and nv > 0.0:
        hess_s = hess_s + p.eta * (np.eye(p.k) / nv - np.outer(v, v) / nv**3)
    return hess_s


def _mean_moment_residual(p):
    """r0 = gradient of the smooth part at the origin."""
    return p.prior.mean * (p.phi_matrix @ p.node_weights) - p.y_obs


def check_zero_optimality(p):
    """True iff 0 belongs to the subdifferential of H at the origin, i.e.
    the mean-weight moment already sits within eta of the observation."""
    return float(np.linalg.norm(_mean_moment_residual(p))) <= p.eta


def _in_domain(p, v):
    if p.prior.family != "exponential":
        return True
    t = v @ p.phi_matrix
    return float(np.max(t)) < p.prior.p1 - _DOM_MARGIN


def _objective_guarded(p, v, code, p1, p2):
    val = kernels.weighted_logmgf_value(
        p.phi_matrix, p.node_weights, v, code, p1, p2, _DOM_MARGIN
    )
    if not np.isfinite(val):
        return np.inf
    return float(val - v @ p.y_obs + p.eta * np.linalg.norm(v))


def _initial_candidates(p, initial):
    """Starting points: a curvature-scaled least-squares warm start (exact
    for gaussian priors) and the guaranteed descent ray -r0."""
    cands = []
    if initial is not None:
        cands.append(np.asarray(initial, dtype=np.float64).copy())
    w = p.node_weights
    mean_moment = p.prior.mean * (p.phi_matrix @ w)
    curv0 = p.prior.log_laplace_second(0.0)
    gram = (p.phi_matrix * w) @ p.phi_matrix.T * curv0
    try:
        v_ls = np.linalg.solve(gram + 1e-10 * np.eye(p.k), p.y_obs - mean_moment)
        if np.all(np.isfinite(v_ls)):
            cands.append(v_ls)
    except np.linalg.LinAlgError:
        pass
    r0 = _mean_moment_residual(p)
    nr = float(np.linalg.norm(r0))
    if nr > 0:
        cands.append(-r0 / max(1.0, nr))
    return cands


def solve(p, tolerance=1e-9, max_iters=200, initial=None, trace_path=None):
    """Minimize the dual objective.

    Returns a DualSolution whose status is ``at_origin`` when the
    subdifferential test certifies v=0, ``converged`` when the gradient
    norm reached tolerance * (1 + ||y_obs||), ``max_iters`` when the
    iteration budget ran out (best iterate returned), and
    ``infeasible_direction`` when the objective keeps falling along a
    diverging ray, the signature of an infeasible constraint set.
    """
    code, p1, p2 = _family(p)
    scale = 1.0 + float(np.linalg.norm(p.y_obs))
    rank_deficient = p.rank_deficient()
    trace_rows = []

    if check_zero_optimality(p):
        _write_trace(trace_path, trace_rows)
        return DualSolution(
            v_hat=np.zeros(p.k),
            objective_value=0.0,
            grad_norm=0.0,
            status=AT_ORIGIN,
            iterations=0,
            rank_deficient=rank_deficient,
        )

    # pick the best strictly-negative starting value among the candidates
    v = None
    f_cur = np.inf
    for cand in _initial_candidates(p, initial):
        t = 1.0
        for _ in range(_MAX_HALVINGS + 20):
            trial = t * cand
            f_trial = _objective_guarded(p, trial, code, p1, p2)
            if f_trial < 0.0:
                break
            t *= 0.5
        else:
            continue
        if f_trial < f_cur:
            f_cur, v = f_trial, trial
    if v is None:  # every candidate stalled at the origin value
        r0 = _mean_moment_residual(p)
        v = -r0 * (1e-8 / max(1e-30, float(np.linalg.norm(r0))))
        f_cur = _objective_guarded(p, v, code, p1, p2)

    v_start_norm = float(np.linalg.norm(v))
    best_f, best_v = f_cur, v.copy()
    decrements = []
    status = MAX_ITERS
    gn = np.inf
    it = 0
    step = 0.0
    trust_steps = 0
    for it in range(1, max_iters + 1):
        val, grad_s, hess_s = kernels.weighted_logmgf_sums(
            p.phi_matrix, p.node_weights, v, code, p1, p2, _DOM_MARGIN
        )
        nv = float(np.linalg.norm(v))
        grad = grad_s - p.y_obs
        if p.eta > 0.0:
            grad = grad + p.eta * v / nv
        gn = float(np.linalg.norm(grad))
        trace_rows.append((it, f_cur, gn, step))
        if gn <= tolerance * scale:
            status = CONVERGED
            break

        hess = hess_s
        if p.eta > 0.0:
            hess = hess + p.eta * (np.eye(p.k) / nv - np.outer(v, v) / nv**3)
        newton_ok = True
        try:
            direction = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            direction = -grad
            newton_ok = False
        slope = float(grad @ direction)
        if not np.all(np.isfinite(direction)) or slope >= 0.0:
            direction = -grad
            slope = -gn * gn
            newton_ok = False
        decrements.append(float(np.sqrt(max(0.0, -slope))))

        # Once the predicted decrease drops below the objective's floating
        # point resolution a backtracking test can no longer certify
        # progress; near the optimum the undamped Newton step is reliable,
        # so take a few on trust before giving up.
        noise_floor = 16.0 * np.finfo(np.float64).eps * (1.0 + abs(f_cur))
        if newton_ok and -slope <= noise_floor:
            if trust_steps >= 5:
                status = CONVERGED if gn <= tolerance * scale else MAX_ITERS
                break
            trial = v + direction
            f_trial = _objective_guarded(p, trial, code, p1, p2)
            if not np.isfinite(f_trial):
                status = CONVERGED if gn <= tolerance * scale else MAX_ITERS
                break
            trust_steps += 1
            step = 1.0
            v, f_cur = trial, f_trial
            if f_cur < best_f:
                best_f, best_v = f_cur, v.copy()
            continue

        step = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS):
            trial = v + step * direction
            f_trial = _objective_guarded(p, trial, code, p1, p2)
            if f_trial <= f_cur + _ARMIJO * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:  # no representable decrease left
            status = CONVERGED if gn <= tolerance * scale else MAX_ITERS
            break
        v, f_cur = trial, f_trial
        if f_cur < best_f:
            best_f, best_v = f_cur, v.copy()
        if float(np.linalg.norm(v)) > _DIVERGENCE_FACTOR * (1.0 + v_start_norm):
            status = INFEASIBLE_DIRECTION
            break

    if status != CONVERGED:
        v = best_v
        f_cur = best_f
        try:
            gn = float(np.linalg.norm(gradient(p, v)))
        except (DomainError, ValueError):
            gn = np.inf

    _write_trace(trace_path, trace_rows)
    return DualSolution(
        v_hat=v,
        objective_value=float(f_cur),
        grad_norm=gn,
        status=status,
        iterations=it,
        newton_decrements=decrements,
        rank_deficient=rank_deficient,
    )


def _write_trace(trace_path, rows):
    if trace_path is None:
        return
    with open(trace_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "objective", "grad_norm", "step"])
        for it, f, gn, step in rows:
            writer.writerow([it, format(f, ".17g"), format(gn, ".17g"), format(step, ".17g")])


def population_solve(op, nodes, node_weights, y_obs, eta, prior, **options):
    """Solve the dual with the atom sum replaced by a quadrature rule.

    ``op`` maps the node array to operator columns (k, n). Used as the
    oracle for the population minimizers on both the exact and the
    smoothed operator.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    node_weights = np.asarray(node_weights, dtype=np.float64)
    if nodes.shape[0] != node_weights.shape[0]:
        raise ValueError("quadrature nodes and weights disagree in length")
    if np.any(node_weights <= 0):
        raise ValueError("quadrature weights must be positive")
    if abs(float(np.sum(node_weights)) - 1.0) > 1e-8:
        raise ValueError("quadrature weights must sum to one")
    phi = op(nodes)
    problem = DualProblem(
        phi_matrix=phi, y_obs=y_obs, eta=eta, prior=prior, node_weights=node_weights
    )
    return problem, solve(problem, **options)


@dataclass
class FeasibilityCheck:
    feasible: bool
    min_distance: float
    stalled: bool
    iterations: int

    def __bool__(self):
        return self.feasible


def feasibility(p, tol=1e-6, max_iters=50000):
    """Decide whether some weight vector in the support-hull box reaches
    the observation ball: min_z ||A z - y|| <= eta (+ tolerance), with
    A z = sum_i w_i z_i phi_i.

    Full-support priors with a full-rank operator are feasible outright.
    Otherwise a least-squares certificate centered at the prior mean is
    tried first, then accelerated projected gradient over the box. A
    projected-gradient stall is reported as infeasible with the
    ``stalled`` flag raised.
    """
    lo, hi = p.prior.support_hull
    A = p.phi_matrix * p.node_weights
    y = p.y_obs
    target = p.eta * p.eta + tol

    if lo == -np.inf and hi == np.inf:
        if not p.rank_deficient():
            return FeasibilityCheck(True, 0.0, False, 0)
        resid = y - A @ np.linalg.lstsq(A, y, rcond=None)[0]
        dist = float(np.linalg.norm(resid))
        return FeasibilityCheck(dist * dist <= target, dist, False, 0)

    center = min(max(p.prior.mean, lo), hi)
    z_ls, *_ = np.linalg.lstsq(A, y - A @ np.full(p.n, center), rcond=None)
    z_ls = z_ls + center
    if np.all(z_ls >= lo) and np.all(z_ls <= hi):
        resid = A @ z_ls - y
        dist2 = float(resid @ resid)
        if dist2 <= target:
            return FeasibilityCheck(True, float(np.sqrt(dist2)), False, 0)

    lam_max = float(np.linalg.eigvalsh(A @ A.T)[-1])
    step = 1.0 / (2.0 * lam_max) if lam_max > 0 else 1.0
    z0 = np.full(p.n, center)
    _, f_best, iters, converged = kernels.box_residual_min(
        A, y, float(lo), float(hi), z0, step, max_iters, target, 1e-12
    )
    feasible = f_best <= target
    stalled = not converged and not feasible
    return FeasibilityCheck(feasible, float(np.sqrt(max(0.0, f_best))), stalled, iters)
