"""Vectorized numpy implementations of the hot numeric kernels.

This is the reference backend: every function here has a numba twin in
``numba_backend`` with identical semantics, and the agreement of the two
is pinned by tests. Family codes and parameter packing are shared:

    code 0  gaussian      p1 = location mu0,  p2 = scale sigma
    code 1  poisson       p1 = rate
    code 2  exponential   p1 = rate           (log-MGF domain s < rate)
    code 3  uniform       p1 = lower a,       p2 = upper b
    code 4  two_point     p1 = atom c,        p2 = mass p on c

All inputs are float64 arrays; out-of-domain arguments produce +inf
values rather than exceptions so that line searches can reject them.
"""

import numpy as np

GAUSSIAN = 0
POISSON = 1
EXPONENTIAL = 2
UNIFORM = 3
TWO_POINT = 4

# Small-argument series for log((e^u - 1)/u) and its derivatives. The
# value switches below |u| < 1e-4; the derivative expressions subtract
# terms of size 1/u and 1/u^2, so their series windows must be wider to
# clear the cancellation zone.
_SERIES_CUT = 1e-4
_SERIES_CUT_D1 = 2e-2
_SERIES_CUT_D2 = 1.5e-1


def _softplus_ratio(u):
    """log((exp(u) - 1)/u), the uniform-family log-MGF shape on [0, 1]."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    small = np.abs(u) < _SERIES_CUT
    us = u[small]
    out[small] = us / 2.0 + us * us / 24.0 - us**4 / 2880.0
    ub = u[~small]
    res = np.empty_like(ub)
    hi = ub >= 30.0
    lo = ub <= -30.0
    mid = ~hi & ~lo
    res[hi] = ub[hi] - np.log(ub[hi]) + np.log1p(-np.exp(-ub[hi]))
    res[lo] = np.log1p(-np.exp(ub[lo])) - np.log(-ub[lo])
    res[mid] = np.log(np.expm1(ub[mid]) / ub[mid])
    out[~small] = res
    return out


def _softplus_ratio_d1(u):
    """First derivative of _softplus_ratio: 1/(1 - e^{-u}) - 1/u."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    small = np.abs(u) < _SERIES_CUT_D1
    us = u[small]
    out[small] = 0.5 + us / 12.0 - us**3 / 720.0 + us**5 / 30240.0
    ub = u[~small]
    res = np.empty_like(ub)
    lo = ub <= -30.0
    eb = np.exp(ub[lo])
    res[lo] = -eb / (1.0 - eb) - 1.0 / ub[lo]
    res[~lo] = 1.0 / (1.0 - np.exp(-ub[~lo])) - 1.0 / ub[~lo]
    out[~small] = res
    return out


def _softplus_ratio_d2(u):
    """Second derivative: 1/u^2 - 1/(4 sinh^2(u/2)), even in u."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    small = np.abs(u) < _SERIES_CUT_D2
    us = u[small]
    out[small] = 1.0 / 12.0 - us * us / 240.0 + us**4 / 6048.0 - us**6 / 172800.0
    ub = u[~small]
    res = 1.0 / (ub * ub)
    far = np.abs(ub) >= 60.0
    sh = np.sinh(ub[~far] / 2.0)
    res[~far] -= 1.0 / (4.0 * sh * sh)
    out[~small] = res
    return out


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_mgf(code, p1, p2, s):
    """Log moment generating function Lambda(s), elementwise; +inf off-domain."""
    s = np.asarray(s, dtype=np.float64)
    if code == GAUSSIAN:
        return p1 * s + 0.5 * (p2 * s) ** 2
    if code == POISSON:
        with np.errstate(over="ignore"):
            return p1 * np.expm1(s)
    if code == EXPONENTIAL:
        out = np.full_like(s, np.inf)
        ok = s < p1
        out[ok] = -np.log1p(-s[ok] / p1)
        return out
    if code == UNIFORM:
        return s * p1 + _softplus_ratio(s * (p2 - p1))
    if code == TWO_POINT:
        cs = p1 * s
        out = np.empty_like(cs)
        neg = cs <= 0
        out[neg] = np.log1p(p2 * np.expm1(cs[neg]))
        out[~neg] = cs[~neg] + np.log1p((1.0 - p2) * np.expm1(-cs[~neg]))
        return out
    raise ValueError(f"unknown family code {code}")


def log_mgf_deriv(code, p1, p2, s):
    """Lambda'(s) elementwise; +inf off-domain."""
    s = np.asarray(s, dtype=np.float64)
    if code == GAUSSIAN:
        return p1 + p2 * p2 * s
    if code == POISSON:
        with np.errstate(over="ignore"):
            return p1 * np.exp(s)
    if code == EXPONENTIAL:
        out = np.full_like(s, np.inf)
        ok = s < p1
        out[ok] = 1.0 / (p1 - s[ok])
        return out
    if code == UNIFORM:
        return p1 + (p2 - p1) * _softplus_ratio_d1(s * (p2 - p1))
    if code == TWO_POINT:
        theta = np.log(p2 / (1.0 - p2))
        return p1 * _sigmoid(p1 * s + theta)
    raise ValueError(f"unknown family code {code}")


def log_mgf_second(code, p1, p2, s):
    """Lambda''(s) elementwise, nonnegative; +inf off-domain."""
    s = np.asarray(s, dtype=np.float64)
    if code == GAUSSIAN:
        return np.full_like(s, p2 * p2)
    if code == POISSON:
        with np.errstate(over="ignore"):
            return p1 * np.exp(s)
    if code == EXPONENTIAL:
        out = np.full_like(s, np.inf)
        ok = s < p1
        d = p1 - s[ok]
        out[ok] = 1.0 / (d * d)
        return out
    if code == UNIFORM:
        return (p2 - p1) ** 2 * _softplus_ratio_d2(s * (p2 - p1))
    if code == TWO_POINT:
        theta = np.log(p2 / (1.0 - p2))
        sig = _sigmoid(p1 * s + theta)
        return p1 * p1 * sig * (1.0 - sig)
    raise ValueError(f"unknown family code {code}")


def weighted_logmgf_value(phi, w, v, code, p1, p2, dom_margin=0.0):
    """sum_i w_i Lambda(<v, phi_i>) for phi of shape (k, n); inf off-domain."""
    t = v @ phi
    if code == EXPONENTIAL and np.max(t) >= p1 - dom_margin:
        return np.inf
    val = np.asarray(w) @ log_mgf(code, p1, p2, t)
    return float(val) if np.isfinite(val) else np.inf


def weighted_logmgf_sums(phi, w, v, code, p1, p2, dom_margin=0.0):
    """Value, gradient and Hessian of v -> sum_i w_i Lambda(<v, phi_i>).

    Returns (value, grad (k,), hess (k, k)); value is +inf (and the
    other outputs meaningless) when some inner product leaves the
    log-MGF domain by less than ``dom_margin``.
    """
    k = phi.shape[0]
    t = v @ phi
    if code == EXPONENTIAL and np.max(t) >= p1 - dom_margin:
        return np.inf, np.zeros(k), np.zeros((k, k))
    l0 = log_mgf(code, p1, p2, t)
    val = float(np.asarray(w) @ l0)
    if not np.isfinite(val):
        return np.inf, np.zeros(k), np.zeros((k, k))
    l1 = log_mgf_deriv(code, p1, p2, t)
    l2 = log_mgf_second(code, p1, p2, t)
    wl1 = w * l1
    grad = phi @ wl1
    hess = (phi * (w * l2)) @ phi.T
    return val, grad, hess


def transform_weights(phi, v, code, p1, p2):
    """Reconstruction weights z_i = Lambda'(<v, phi_i>) for phi (k, n)."""
    return log_mgf_deriv(code, p1, p2, v @ phi)


def conjugate_value_batch(code, p1, p2, x):
    """Convex conjugate sup_u {u x - Lambda(u)} for the bounded-support
    families (uniform, two_point), elementwise over x.

    Interior points are handled by inverting Lambda' (safeguarded Newton
    for uniform, logit closed form for two_point); hull boundary points
    get their one-sided limit values and exterior points get +inf.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.full_like(x, np.inf)
    if code == TWO_POINT:
        c, p = p1, p2
        inside = (x > 0) & (x < c)
        q = x[inside] / c
        u = (np.log(q / (1.0 - q)) - np.log(p / (1.0 - p))) / c
        out[inside] = u * x[inside] - log_mgf(code, p1, p2, u)
        out[x == 0] = -np.log1p(-p)
        out[x == c] = -np.log(p)
        return out
    if code == UNIFORM:
        a, b = p1, p2
        inside = (x > a) & (x < b)
        u = _invert_uniform_deriv(a, b, x[inside])
        out[inside] = u * x[inside] - log_mgf(code, p1, p2, u)
        return out
    raise ValueError(f"conjugate_value_batch: unsupported family code {code}")


def _invert_uniform_deriv(a, b, x):
    """Solve Lambda'(u) = x for the uniform(a, b) family, vectorized.

    Bracketed Newton on the strictly increasing Lambda'; callers
    guarantee a < x < b so a finite root exists.
    """
    x = np.asarray(x, dtype=np.float64)
    lo = np.full_like(x, -1.0)
    hi = np.full_like(x, 1.0)
    # expand brackets until Lambda'(lo) < x < Lambda'(hi)
    for _ in range(80):
        need = log_mgf_deriv(UNIFORM, a, b, hi) < x
        if not need.any():
            break
        hi[need] *= 2.0
    for _ in range(80):
        need = log_mgf_deriv(UNIFORM, a, b, lo) > x
        if not need.any():
            break
        lo[need] *= 2.0
    u = 0.5 * (lo + hi)
    for _ in range(100):
        f = log_mgf_deriv(UNIFORM, a, b, u) - x
        pos = f > 0
        hi = np.where(pos, u, hi)
        lo = np.where(pos, lo, u)
        d2 = log_mgf_second(UNIFORM, a, b, u)
        step = np.where(d2 > 0, f / np.where(d2 > 0, d2, 1.0), 0.0)
        un = u - step
        bad = (un <= lo) | (un >= hi) | ~np.isfinite(un)
        un = np.where(bad, 0.5 * (lo + hi), un)
        if np.max(np.abs(un - u)) < 1e-13 * (1.0 + np.max(np.abs(un))):
            u = un
            break
        u = un
    return u


def box_residual_min(A, y, lo, hi, z0, step, max_iters, f_target, tol_step):
    """Minimize ||A z - y||^2 over the box [lo, hi]^n by accelerated
    projected gradient with fixed step.

    Returns (z_best, f_best, iterations, converged) where converged
    means either f_best <= f_target or the iterate displacement fell
    below tol_step * (1 + ||z||).
    """
    z = np.clip(np.asarray(z0, dtype=np.float64), lo, hi)
    zb = z.copy()
    r = A @ z - y
    f = float(r @ r)
    f_best, z_best = f, z.copy()
    t_acc = 1.0
    it = 0
    for it in range(1, max_iters + 1):
        grad = 2.0 * (A.T @ r)
        z_new = np.clip(zb - step * grad, lo, hi)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
        zb = z_new + ((t_acc - 1.0) / t_new) * (z_new - z)
        zb = np.clip(zb, lo, hi)
        move = float(np.max(np.abs(z_new - z)))
        z, t_acc = z_new, t_new
        r = A @ zb - y
        rz = A @ z - y
        f = float(rz @ rz)
        if f < f_best:
            f_best, z_best = f, z.copy()
        if f_best <= f_target:
            return z_best, f_best, it, True
        if move <= tol_step * (1.0 + float(np.max(np.abs(z)))):
            return z_best, f_best, it, True
    return z_best, f_best, it, False
