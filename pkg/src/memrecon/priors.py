"""Reference measures on the real line with their log-Laplace machinery.

A reference measure fixes the entropy penalty used by the dual solver:
its log-Laplace transform Lambda appears in the dual objective, the
derivative Lambda' maps dual variables to reconstruction weights, and
the convex conjugate Lambda* is the pointwise entropy integrand. The
convex hull of the support bounds the attainable weights.

Five parametric families are built in. The gaussian, poisson and
exponential families have unbounded Lambda' (or a restricted domain)
and are flagged ``bounded_transforms=False``; the rate-verification
harness refuses them unless explicitly overridden because the
convergence guarantees assume a full domain with bounded derivatives.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import kernels

INF = float("inf")


class DomainError(ValueError):
    """Argument outside the domain of the log-Laplace transform."""


class ConjugateDivergenceError(RuntimeError):
    """The conjugate supremum diverges (query at or beyond the support hull)."""


_FAMILY_CODES = {
    "gaussian": kernels.GAUSSIAN,
    "poisson": kernels.POISSON,
    "exponential": kernels.EXPONENTIAL,
    "uniform": kernels.UNIFORM,
    "two_point": kernels.TWO_POINT,
}


@dataclass(frozen=True)
class ReferenceMeasure:
    """A prior on weight values, identified by family name and parameters."""

    family: str
    p1: float
    p2: float = 0.0

    @property
    def code(self):
        return _FAMILY_CODES[self.family]

    @property
    def params(self):
        return (self.p1, self.p2)

    @property
    def mean(self):
        """Lambda'(0), the analytic mean of the family."""
        return self.log_laplace_deriv(0.0)

    @property
    def variance(self):
        """Lambda''(0)."""
        return self.log_laplace_second(0.0)

    @property
    def support_hull(self):
        """Closed convex hull of the support, as a (lo, hi) pair."""
        if self.family == "gaussian":
            return (-INF, INF)
        if self.family in ("poisson", "exponential"):
            return (0.0, INF)
        if self.family == "uniform":
            return (self.p1, self.p2)
        return (0.0, self.p1)  # two_point

    @property
    def lambda_domain(self):
        """Open-or-closed interval where Lambda is finite."""
        if self.family == "exponential":
            return (-INF, self.p1)
        return (-INF, INF)

    @property
    def bounded_transforms(self):
        """True iff Lambda is finite everywhere with bounded Lambda', Lambda''."""
        return self.family in ("uniform", "two_point")

    def _check_domain(self, s):
        lo, hi = self.lambda_domain
        if not (lo < s < hi):
            raise DomainError(
                f"s={s} outside the log-Laplace domain ({lo}, {hi}) of {self.family}"
            )

    def log_laplace(self, s):
        """Lambda(s) = log E[exp(s Z)]."""
        self._check_domain(s)
        return float(kernels.log_mgf(self.code, self.p1, self.p2, np.array([float(s)]))[0])

    def log_laplace_deriv(self, s):
        """Lambda'(s); strictly inside the support hull for bounded families."""
        self._check_domain(s)
        return float(kernels.log_mgf_deriv(self.code, self.p1, self.p2, np.array([float(s)]))[0])

    def log_laplace_second(self, s):
        """Lambda''(s) >= 0."""
        self._check_domain(s)
        return float(kernels.log_mgf_second(self.code, self.p1, self.p2, np.array([float(s)]))[0])

    def log_laplace_batch(self, s):
        return kernels.log_mgf(self.code, self.p1, self.p2, np.asarray(s, dtype=np.float64))

    def log_laplace_deriv_batch(self, s):
        return kernels.log_mgf_deriv(self.code, self.p1, self.p2, np.asarray(s, dtype=np.float64))

    def log_laplace_second_batch(self, s):
        return kernels.log_mgf_second(self.code, self.p1, self.p2, np.asarray(s, dtype=np.float64))

    def cramer(self, x):
        """Convex conjugate Lambda*(x); +inf outside the support hull.

        Closed forms for gaussian, poisson and exponential; uniform and
        two_point fall back to ``numeric_conjugate`` in the hull
        interior, with one-sided limit values on the boundary.
        """
        x = float(x)
        if self.family == "gaussian":
            mu0, sigma = self.p1, self.p2
            return (x - mu0) ** 2 / (2.0 * sigma * sigma)
        if self.family == "poisson":
            lam = self.p1
            if x < 0.0:
                return INF
            if x == 0.0:
                return lam
            return x * math.log(x / lam) - x + lam
        if self.family == "exponential":
            lam = self.p1
            if x <= 0.0:
                return INF
            return lam * x - 1.0 - math.log(lam * x)
        lo, hi = self.support_hull
        if x < lo or x > hi:
            return INF
        if self.family == "two_point":
            if x == 0.0:
                return -math.log1p(-self.p2)
            if x == self.p1:
                return -math.log(self.p2)
        elif x == lo or x == hi:
            return INF  # uniform law puts no mass on its endpoints
        return self.numeric_conjugate(x)

    def cramer_batch(self, x):
        """Vectorized Lambda* for entropy evaluation over many weights."""
        x = np.asarray(x, dtype=np.float64)
        if self.family == "gaussian":
            return (x - self.p1) ** 2 / (2.0 * self.p2 * self.p2)
        if self.family == "poisson":
            lam = self.p1
            out = np.full_like(x, INF)
            pos = x > 0
            xp = x[pos]
            out[pos] = xp * np.log(xp / lam) - xp + lam
            out[x == 0] = lam
            return out
        if self.family == "exponential":
            lam = self.p1
            out = np.full_like(x, INF)
            pos = x > 0
            out[pos] = lam * x[pos] - 1.0 - np.log(lam * x[pos])
            return out
        return kernels.conjugate_value_batch(self.code, self.p1, self.p2, x)

    def numeric_conjugate(self, x, bracket=(-1.0, 1.0)):
        """sup_u {u x - Lambda(u)} by safeguarded 1-d maximization.

        The bracket expands while the derivative x - Lambda'(u) keeps
        one sign; expansion failure signals a divergent conjugate
        (x at or beyond the hull boundary). Absolute tolerance 1e-10
        on the returned value.
        """
        x = float(x)
        lo, hi = float(bracket[0]), float(bracket[1])
        _, dom_hi = self.lambda_domain
        if dom_hi < INF:
            hi = min(hi, 0.5 * (lo + dom_hi))

        def slope(u):
            return x - self.log_laplace_deriv(u)

        expansions = 0
        while slope(hi) > 0.0:  # still ascending: move the window right
            lo = hi
            if dom_hi < INF:
                hi = 0.5 * (hi + dom_hi)  # approach the domain edge geometrically
            else:
                hi = 1.0 if hi <= 0.0 else 2.0 * hi
            expansions += 1
            if expansions > 200 or hi > 1e12:
                raise ConjugateDivergenceError(
                    f"conjugate diverges at x={x} for {self.family} (upper bracket)"
                )
        expansions = 0
        while slope(lo) < 0.0:  # still descending: move the window left
            hi = lo
            lo = -1.0 if lo >= 0.0 else 2.0 * lo
            expansions += 1
            if expansions > 200 or lo < -1e12:
                raise ConjugateDivergenceError(
                    f"conjugate diverges at x={x} for {self.family} (lower bracket)"
                )
        if lo == hi:
            u_star = lo
        else:
            u_star = brentq(slope, lo, hi, xtol=1e-13, rtol=8.9e-16)
        return u_star * x - self.log_laplace(u_star)


def gaussian(mean, stddev):
    if stddev <= 0:
        raise ValueError("gaussian stddev must be positive")
    return ReferenceMeasure("gaussian", float(mean), float(stddev))


def poisson(rate):
    if rate <= 0:
        raise ValueError("poisson rate must be positive")
    return ReferenceMeasure("poisson", float(rate))


def exponential(rate):
    if rate <= 0:
        raise ValueError("exponential rate must be positive")
    return ReferenceMeasure("exponential", float(rate))


def uniform(lower, upper):
    if not upper > lower:
        raise ValueError("uniform upper bound must exceed the lower bound")
    return ReferenceMeasure("uniform", float(lower), float(upper))


def two_point(atom, prob):
    if atom <= 0:
        raise ValueError("two_point atom must be positive")
    if not 0.0 < prob < 1.0:
        raise ValueError("two_point probability must lie in (0, 1)")
    return ReferenceMeasure("two_point", float(atom), float(prob))


_FACTORIES = {
    "gaussian": gaussian,
    "poisson": poisson,
    "exponential": exponential,
    "uniform": uniform,
    "two_point": two_point,
}

_ARITY = {"gaussian": 2, "poisson": 1, "exponential": 1, "uniform": 2, "two_point": 2}


def from_config(name, params):
    """Build a prior from a config entry: family name plus parameter list."""
    if name not in _FACTORIES:
        raise ValueError(f"unknown prior family {name!r}; choose from {sorted(_FACTORIES)}")
    if len(params) != _ARITY[name]:
        raise ValueError(f"prior {name!r} takes {_ARITY[name]} parameter(s), got {len(params)}")
    return _FACTORIES[name](*params)
