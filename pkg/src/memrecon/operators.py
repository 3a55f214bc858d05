"""Moment operators and their kernel-smoothed approximations.

An exact operator maps points of the sample space to R^k. Four kinds
are built in:

  power_moments   Phi(x) = (x, x^2, ..., x^k)
  trig_moments    Phi(x) = (cos 2pi x, sin 2pi x, cos 4pi x, ...)
  convolution     Phi^j(y) = psf(x_j - y, x_j) on a grid of observation
                  points x_j, for deconvolution problems
  parametric      Phi(x; t) with a scalar design parameter t, the kind
                  that supports kernel smoothing

The smoothed approximation replaces Phi(x, t) by a kernel-weighted
average over random design points T_1..T_m:

    (1 / (f_T(t) m)) sum_j K_h(t - T_j) Phi(x, T_j)

with a symmetric kernel K_h of bandwidth h and known design density
f_T. Evaluating Phi(X_i, T_j) once into an (m, n, k) table makes later
queries at any t cost m kernel evaluations plus one contraction.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x.reshape(1), True) if x.ndim == 0 else (x, False)


@dataclass(frozen=True)
class OperatorSpec:
    """An exact moment operator of one of the built-in kinds."""

    kind: str
    output_dim: int
    degree: int = 0
    obs_points: tuple = ()
    psf: str = "gaussian"
    psf_width: float = 0.0
    param_family: str = ""
    param_fn: object = None

    def eval_exact(self, x, t=None):
        """Phi(x) (or Phi(x; t) for the parametric kind), shape (k, n).

        A scalar x gives a (k,) vector. t is required exactly when the
        kind is parametric.
        """
        xb, scalar = _as_batch(x)
        if self.kind == "parametric":
            if t is None:
                raise ValueError("parametric operator needs the design parameter t")
            out = self._eval_parametric(xb, float(t))
        elif t is not None:
            raise ValueError(f"{self.kind} operator takes no design parameter")
        elif self.kind == "power_moments":
            out = np.stack([xb ** (j + 1) for j in range(self.output_dim)])
        elif self.kind == "trig_moments":
            rows = []
            for j in range(self.output_dim):
                freq = j // 2 + 1
                fn = np.cos if j % 2 == 0 else np.sin
                rows.append(fn(2.0 * np.pi * freq * xb))
            out = np.stack(rows)
        elif self.kind == "convolution":
            pts = np.asarray(self.obs_points)
            u = pts[:, np.newaxis] - xb[np.newaxis, :]
            if self.psf == "gaussian":
                w = self.psf_width
                out = np.exp(-0.5 * (u / w) ** 2) / (_SQRT_2PI * w)
            elif self.psf == "boxcar":
                out = (np.abs(u) <= self.psf_width).astype(np.float64)
            else:
                raise ValueError(f"unknown point-spread function {self.psf!r}")
        else:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        return out[:, 0] if scalar else out

    def _eval_parametric(self, xb, t):
        if self.param_fn is not None:
            return np.asarray(self.param_fn(xb, t), dtype=np.float64)
        if self.param_family == "scaled_powers":
            xt = xb * t
            return np.stack([xt ** (j + 1) for j in range(self.output_dim)])
        raise ValueError(f"unknown parametric family {self.param_family!r}")

    def __call__(self, x, t=None):
        return self.eval_exact(x, t)


def power_moments(degree):
    if degree < 1:
        raise ValueError("power_moments degree must be >= 1")
    return OperatorSpec(kind="power_moments", output_dim=degree, degree=degree)


def trig_moments(output_dim):
    if output_dim < 1:
        raise ValueError("trig_moments needs at least one component")
    return OperatorSpec(kind="trig_moments", output_dim=output_dim)


def convolution(obs_points, psf="gaussian", psf_width=0.05):
    pts = tuple(float(p) for p in obs_points)
    if not pts:
        raise ValueError("convolution operator needs observation points")
    if psf_width <= 0:
        raise ValueError("point-spread width must be positive")
    return OperatorSpec(
        kind="convolution", output_dim=len(pts), obs_points=pts, psf=psf, psf_width=psf_width
    )


def parametric(param_family="scaled_powers", output_dim=1, param_fn=None):
    if output_dim < 1:
        raise ValueError("parametric operator needs at least one component")
    return OperatorSpec(
        kind="parametric", output_dim=output_dim, param_family=param_family, param_fn=param_fn
    )


def kernel_weights(kernel, h, t, design):
    """K_h(t - T_j) over the design points; kernels integrate to one."""
    u = (float(t) - np.asarray(design, dtype=np.float64)) / h
    if kernel == "gaussian":
        return np.exp(-0.5 * u * u) / (_SQRT_2PI * h)
    if kernel == "epanechnikov":
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u) / h, 0.0)
    raise ValueError(f"unknown kernel {kernel!r}")


@dataclass
class ApproxOperator:
    """Kernel-smoothed surrogate of a parametric operator."""

    base: OperatorSpec
    design_points: np.ndarray
    kernel: str
    bandwidth: float
    f_t: object  # density evaluator, f_t(t) > 0 on the design domain
    table_atoms: np.ndarray = None
    table: np.ndarray = None  # (m, n, k) values Phi(X_i, T_j)

    @property
    def output_dim(self):
        return self.base.output_dim

    @property
    def design_size(self):
        return self.design_points.shape[0]

    def eval_approx(self, x, t):
        return eval_approx(self, x, t)

    def __call__(self, x, t):
        return eval_approx(self, x, t)


def build_kernel_approx(op, design, kernel, h, f_t, atoms=None):
    """Assemble the smoothed operator; optionally precompute the atom table.

    The table stores Phi(X_i, T_j) for the supplied atom set so that a
    later query at any t costs m kernel evaluations plus a contraction.
    A spot check of 100 random table entries against direct evaluation
    guards the cache.
    """
    if op.kind != "parametric":
        raise ValueError("kernel smoothing needs a parametric operator")
    design = np.asarray(design, dtype=np.float64)
    if design.size == 0:
        raise ValueError("empty design")
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    approx = ApproxOperator(
        base=op, design_points=design, kernel=kernel, bandwidth=float(h), f_t=f_t
    )
    if atoms is not None:
        atoms = np.asarray(atoms, dtype=np.float64)
        m, n, k = design.shape[0], atoms.shape[0], op.output_dim
        table = np.empty((m, n, k))
        for j in range(m):
            table[j] = op.eval_exact(atoms, design[j]).T
        approx.table_atoms = atoms
        approx.table = table
        _spot_check_table(approx)
    return approx


def _spot_check_table(approx, pairs=100):
    m, n, _ = approx.table.shape
    rng = np.random.default_rng(m * 1000003 + n)  # deterministic per shape
    ii = rng.integers(0, n, size=pairs)
    jj = rng.integers(0, m, size=pairs)
    for i, j in zip(ii, jj):
        direct = approx.base.eval_exact(approx.table_atoms[i], approx.design_points[j])
        if not np.allclose(approx.table[j, i], direct, rtol=0.0, atol=1e-12):
            raise RuntimeError("precomputed operator table disagrees with direct evaluation")


def eval_approx(approx, x, t):
    """Smoothed operator value at (x, t), shape (k, n) for batched x."""
    ft = float(approx.f_t(t)) if callable(approx.f_t) else float(approx.f_t)
    if ft <= 0.0:
        raise ValueError(f"design density must be positive at t={t}")
    m = approx.design_size
    kw = kernel_weights(approx.kernel, approx.bandwidth, t, approx.design_points)
    coeff = kw / (ft * m)
    xb, scalar = _as_batch(x)
    if (
        approx.table is not None
        and approx.table_atoms.shape == xb.shape
        and np.array_equal(approx.table_atoms, xb)
    ):
        out = np.tensordot(coeff, approx.table, axes=(0, 0)).T  # (k, n)
    else:
        k, n = approx.output_dim, xb.shape[0]
        out = np.zeros((k, n))
        nz = np.nonzero(coeff)[0]  # compact kernels may skip most terms
        for j in nz:
            out += coeff[j] * approx.base.eval_exact(xb, approx.design_points[j])
    return out[:, 0] if scalar else out


def l2_distance(op, approx, px_sample, t_grid):
    """Monte Carlo estimate of the quadratic-mean operator error,
    sqrt(E ||Phi_m(X) - Phi(X)||^2), averaged over the t grid.

    ``approx`` is any (x, t) evaluator; passing the exact operator
    itself measures zero, the no-approximation baseline.
    """
    xs = np.asarray(px_sample, dtype=np.float64)
    vals = []
    for t in np.atleast_1d(t_grid):
        diff = approx(xs, t) - op.eval_exact(xs, t)
        vals.append(float(np.sqrt(np.mean(np.sum(diff * diff, axis=0)))))
    return float(np.mean(vals))


def gram_min_eigenvalue(op, sample, t=None):
    """Smallest eigenvalue of the k x k Gram matrix of Phi over a sample;
    a positive value certifies linearly independent components."""
    values = op.eval_exact(np.asarray(sample, dtype=np.float64), t)
    gram = values @ values.T / values.shape[1]
    return float(np.linalg.eigvalsh(gram)[0])


def save_table(approx, path):
    """Persist the precomputed table as CSV with a checksummed header."""
    if approx.table is None:
        raise ValueError("no table to save; build with atoms first")
    m, n, k = approx.table.shape
    digest = hashlib.sha256(np.ascontiguousarray(approx.table).tobytes()).hexdigest()[:16]
    flat = approx.table.reshape(m, n * k)
    with open(path, "w") as handle:
        handle.write(f"m={m},n={n},k={k},checksum={digest}\n")
        for j in range(m):
            handle.write(",".join(format(v, ".17g") for v in flat[j]) + "\n")


def load_table(path):
    """Load a persisted table, verifying shape and checksum."""
    with open(path, "r") as handle:
        header = handle.readline().strip()
        meta = dict(part.split("=") for part in header.split(","))
        m, n, k = int(meta["m"]), int(meta["n"]), int(meta["k"])
        rows = [np.fromiter((float(v) for v in line.split(",")), dtype=np.float64) for line in handle]
    table = np.vstack(rows).reshape(m, n, k)
    digest = hashlib.sha256(np.ascontiguousarray(table).tobytes()).hexdigest()[:16]
    if digest != meta["checksum"]:
        raise ValueError(f"table checksum mismatch: header {meta['checksum']}, data {digest}")
    return table
