"""Numba-compiled twins of the numpy kernels.

Same family codes, same call signatures, same off-domain conventions as
``numpy_backend``. The scalar transform helpers are inlined into fused
loops so the dual solver touches each atom once per Newton iteration.
"""

import math

import numpy as np
from numba import njit

GAUSSIAN = 0
POISSON = 1
EXPONENTIAL = 2
UNIFORM = 3
TWO_POINT = 4

_SERIES_CUT = 1e-4
_SERIES_CUT_D1 = 2e-2
_SERIES_CUT_D2 = 1.5e-1


@njit(cache=True)
def _softplus_ratio_s(u):
    if abs(u) < _SERIES_CUT:
        return u / 2.0 + u * u / 24.0 - u**4 / 2880.0
    if u >= 30.0:
        return u - math.log(u) + math.log1p(-math.exp(-u))
    if u <= -30.0:
        return math.log1p(-math.exp(u)) - math.log(-u)
    return math.log(math.expm1(u) / u)


@njit(cache=True)
def _softplus_ratio_d1_s(u):
    if abs(u) < _SERIES_CUT_D1:
        return 0.5 + u / 12.0 - u**3 / 720.0 + u**5 / 30240.0
    if u <= -30.0:
        e = math.exp(u)
        return -e / (1.0 - e) - 1.0 / u
    return 1.0 / (1.0 - math.exp(-u)) - 1.0 / u


@njit(cache=True)
def _softplus_ratio_d2_s(u):
    if abs(u) < _SERIES_CUT_D2:
        return 1.0 / 12.0 - u * u / 240.0 + u**4 / 6048.0 - u**6 / 172800.0
    r = 1.0 / (u * u)
    if abs(u) < 60.0:
        sh = math.sinh(u / 2.0)
        r -= 1.0 / (4.0 * sh * sh)
    return r


@njit(cache=True)
def _sigmoid_s(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def _lam0_s(code, p1, p2, s):
    if code == GAUSSIAN:
        return p1 * s + 0.5 * (p2 * s) ** 2
    if code == POISSON:
        if s > 709.0:
            return np.inf
        return p1 * math.expm1(s)
    if code == EXPONENTIAL:
        if s >= p1:
            return np.inf
        return -math.log1p(-s / p1)
    if code == UNIFORM:
        return s * p1 + _softplus_ratio_s(s * (p2 - p1))
    # TWO_POINT
    cs = p1 * s
    if cs <= 0.0:
        return math.log1p(p2 * math.expm1(cs))
    return cs + math.log1p((1.0 - p2) * math.expm1(-cs))


@njit(cache=True)
def _lam1_s(code, p1, p2, s):
    if code == GAUSSIAN:
        return p1 + p2 * p2 * s
    if code == POISSON:
        if s > 709.0:
            return np.inf
        return p1 * math.exp(s)
    if code == EXPONENTIAL:
        if s >= p1:
            return np.inf
        return 1.0 / (p1 - s)
    if code == UNIFORM:
        return p1 + (p2 - p1) * _softplus_ratio_d1_s(s * (p2 - p1))
    theta = math.log(p2 / (1.0 - p2))
    return p1 * _sigmoid_s(p1 * s + theta)


@njit(cache=True)
def _lam2_s(code, p1, p2, s):
    if code == GAUSSIAN:
        return p2 * p2
    if code == POISSON:
        if s > 709.0:
            return np.inf
        return p1 * math.exp(s)
    if code == EXPONENTIAL:
        if s >= p1:
            return np.inf
        d = p1 - s
        return 1.0 / (d * d)
    if code == UNIFORM:
        return (p2 - p1) ** 2 * _softplus_ratio_d2_s(s * (p2 - p1))
    theta = math.log(p2 / (1.0 - p2))
    sig = _sigmoid_s(p1 * s + theta)
    return p1 * p1 * sig * (1.0 - sig)


@njit(cache=True)
def log_mgf(code, p1, p2, s):
    out = np.empty_like(s)
    for i in range(s.shape[0]):
        out[i] = _lam0_s(code, p1, p2, s[i])
    return out


@njit(cache=True)
def log_mgf_deriv(code, p1, p2, s):
    out = np.empty_like(s)
    for i in range(s.shape[0]):
        out[i] = _lam1_s(code, p1, p2, s[i])
    return out


@njit(cache=True)
def log_mgf_second(code, p1, p2, s):
    out = np.empty_like(s)
    for i in range(s.shape[0]):
        out[i] = _lam2_s(code, p1, p2, s[i])
    return out


@njit(cache=True)
def weighted_logmgf_value(phi, w, v, code, p1, p2, dom_margin=0.0):
    k, n = phi.shape
    acc = 0.0
    for i in range(n):
        t = 0.0
        for r in range(k):
            t += v[r] * phi[r, i]
        if code == EXPONENTIAL and t >= p1 - dom_margin:
            return np.inf
        acc += w[i] * _lam0_s(code, p1, p2, t)
    if not np.isfinite(acc):
        return np.inf
    return acc


@njit(cache=True)
def weighted_logmgf_sums(phi, w, v, code, p1, p2, dom_margin=0.0):
    k, n = phi.shape
    grad = np.zeros(k)
    hess = np.zeros((k, k))
    acc = 0.0
    for i in range(n):
        t = 0.0
        for r in range(k):
            t += v[r] * phi[r, i]
        if code == EXPONENTIAL and t >= p1 - dom_margin:
            return np.inf, grad, hess
        wi = w[i]
        acc += wi * _lam0_s(code, p1, p2, t)
        wl1 = wi * _lam1_s(code, p1, p2, t)
        wl2 = wi * _lam2_s(code, p1, p2, t)
        for r in range(k):
            pr = phi[r, i]
            grad[r] += wl1 * pr
            for c in range(r, k):
                hess[r, c] += wl2 * pr * phi[c, i]
    for r in range(k):
        for c in range(r):
            hess[r, c] = hess[c, r]
    if not np.isfinite(acc):
        return np.inf, grad, hess
    return acc, grad, hess


@njit(cache=True)
def transform_weights(phi, v, code, p1, p2):
    k, n = phi.shape
    out = np.empty(n)
    for i in range(n):
        t = 0.0
        for r in range(k):
            t += v[r] * phi[r, i]
        out[i] = _lam1_s(code, p1, p2, t)
    return out


@njit(cache=True)
def _invert_deriv_s(code, p1, p2, x):
    """Solve Lambda'(u) = x by bracketed Newton; x strictly interior."""
    lo, hi = -1.0, 1.0
    for _ in range(80):
        if _lam1_s(code, p1, p2, hi) >= x:
            break
        hi *= 2.0
    for _ in range(80):
        if _lam1_s(code, p1, p2, lo) <= x:
            break
        lo *= 2.0
    u = 0.5 * (lo + hi)
    for _ in range(100):
        f = _lam1_s(code, p1, p2, u) - x
        if f > 0.0:
            hi = u
        else:
            lo = u
        d2 = _lam2_s(code, p1, p2, u)
        if d2 > 0.0:
            un = u - f / d2
        else:
            un = 0.5 * (lo + hi)
        if un <= lo or un >= hi or not np.isfinite(un):
            un = 0.5 * (lo + hi)
        if abs(un - u) < 1e-13 * (1.0 + abs(un)):
            return un
        u = un
    return u


@njit(cache=True)
def conjugate_value_batch(code, p1, p2, x):
    out = np.full(x.shape[0], np.inf)
    if code == TWO_POINT:
        c, p = p1, p2
        for i in range(x.shape[0]):
            xi = x[i]
            if 0.0 < xi < c:
                q = xi / c
                u = (math.log(q / (1.0 - q)) - math.log(p / (1.0 - p))) / c
                out[i] = u * xi - _lam0_s(code, p1, p2, u)
            elif xi == 0.0:
                out[i] = -math.log1p(-p)
            elif xi == c:
                out[i] = -math.log(p)
        return out
    if code == UNIFORM:
        a, b = p1, p2
        for i in range(x.shape[0]):
            xi = x[i]
            if a < xi < b:
                u = _invert_deriv_s(code, p1, p2, xi)
                out[i] = u * xi - _lam0_s(code, p1, p2, u)
        return out
    raise ValueError("conjugate_value_batch: unsupported family code")


@njit(cache=True)
def box_residual_min(A, y, lo, hi, z0, step, max_iters, f_target, tol_step):
    k, n = A.shape
    z = np.empty(n)
    for j in range(n):
        z[j] = min(max(z0[j], lo), hi)
    zb = z.copy()
    z_best = z.copy()
    r = A @ z - y
    f_best = float(r @ r)
    t_acc = 1.0
    it = 0
    for it in range(1, max_iters + 1):
        r = A @ zb - y
        grad = 2.0 * (A.T @ r)
        move = 0.0
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc * t_acc))
        beta = (t_acc - 1.0) / t_new
        for j in range(n):
            znj = min(max(zb[j] - step * grad[j], lo), hi)
            d = abs(znj - z[j])
            if d > move:
                move = d
            zb[j] = min(max(znj + beta * (znj - z[j]), lo), hi)
            z[j] = znj
        t_acc = t_new
        rz = A @ z - y
        f = float(rz @ rz)
        if f < f_best:
            f_best = f
            z_best[:] = z
        if f_best <= f_target:
            return z_best, f_best, it, True
        zmax = 0.0
        for j in range(n):
            if abs(z[j]) > zmax:
                zmax = abs(z[j])
        if move <= tol_step * (1.0 + zmax):
            return z_best, f_best, it, True
    return z_best, f_best, it, False
