"""Special functions, endpoint-aware quadrature and tabulated densities.

The quadrature routine is a double-exponential (tanh-sinh) rule applied after
an explicit power substitution at each endpoint.  Integrands with a declared
algebraic behaviour ``s**rho`` near an endpoint become bounded in the new
variable, which is what makes the tolerance of the result meaningful.

Everything here is a pure function of its arguments.  Randomness enters only
through uniform variates passed in by the caller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

__all__ = [
    "QuadratureSpec",
    "QuadratureError",
    "DomainError",
    "TabulatedDensity",
    "log_pochhammer",
    "log_beta",
    "beta_fn",
    "integrate_unit",
    "integrate_interval",
    "integrate_halfline",
    "refined_grid",
    "sample_from_tabulated",
]

# Nodes are never placed closer than this to an endpoint, which keeps s**rho
# and Levy densities like s**(-1-sigma) far from overflow.
_TINY = 1e-100
_T_MAX = 4.5
_MIN_LEVELS = 3


class DomainError(ValueError):
    """An argument lies outside the domain of the requested function."""


class QuadratureError(ArithmeticError):
    """Raised when an integral fails to meet its tolerance.

    Attributes
    ----------
    estimate : float or ndarray
        Best estimate at the last refinement level.
    error : float or ndarray
        Difference between the last two refinement levels.
    """

    def __init__(self, message, estimate, error):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and declared endpoint behaviour for :func:`integrate_unit`.

    ``singularity_exponent_at_0`` is ``rho0`` when the integrand behaves like
    ``s**rho0`` as ``s -> 0``; likewise at 1 with ``(1 - s)**rho1``.  Values
    at or above zero mean no singularity.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_refinements: int = 12
    singularity_exponent_at_0: float = 0.0
    singularity_exponent_at_1: float = 0.0

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("quadrature tolerances must be strictly positive")
        if self.max_refinements < _MIN_LEVELS:
            raise DomainError(f"max_refinements must be at least {_MIN_LEVELS}")
        for rho in (self.singularity_exponent_at_0, self.singularity_exponent_at_1):
            if not rho > -1.0:
                raise DomainError(f"endpoint exponent {rho} is not integrable (need > -1)")

    def with_exponents(self, at_0=0.0, at_1=0.0):
        return replace(self, singularity_exponent_at_0=at_0, singularity_exponent_at_1=at_1)


DEFAULT_SPEC = QuadratureSpec()


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise DomainError(f"non-finite argument {v!r}")


def log_pochhammer(x, y):
    """Log of the rising factorial ``(x)_y = Gamma(x + y) / Gamma(x)``.

    Exact (zero) when ``y == 0``.  Accepts scalars or broadcastable arrays.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_finite(x, y)
    if np.any(x <= 0) or np.any(y < 0):
        raise DomainError("log_pochhammer needs x > 0 and y >= 0")
    out = np.where(y == 0, 0.0, special.gammaln(x + y) - special.gammaln(x))
    return out[()] if out.ndim == 0 else out


def log_beta(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_finite(a, b)
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("Beta function needs a > 0 and b > 0")
    out = special.betaln(a, b)
    return out[()] if np.ndim(out) == 0 else out


def beta_fn(a, b):
    """Euler Beta function ``Gamma(a) Gamma(b) / Gamma(a + b)``, via logs."""
    return np.exp(log_beta(a, b))


def _power_map(rho):
    # s = u**gamma flattens s**rho into a bounded integrand in u.
    return 1.0 / (1.0 + rho) if rho < 0 else 1.0


class _DERule:
    """Tanh-sinh nodes on (0, 1), cached per refinement level."""

    def __init__(self):
        self._levels = {}

    def level(self, k):
        if k not in self._levels:
            h = 2.0 ** -k
            if k == 0:
                j = np.arange(-int(_T_MAX), int(_T_MAX) + 1)
            else:
                jmax = int(_T_MAX / h)
                j = np.arange(-jmax, jmax + 1)
                j = j[j % 2 != 0]
            t = j * h
            z = math.pi * np.sinh(t)
            u = special.expit(z)
            uc = special.expit(-z)
            w = math.pi * np.cosh(t) * u * uc
            self._levels[k] = (u, uc, w, h)
        return self._levels[k]


_RULE = _DERule()


def _eval_piece(f, complement, side, gamma, u, w):
    # One half of (0, 1): side 0 is (0, 1/2], side 1 is [1/2, 1).  After the
    # power map the integrand in u is bounded and flat near u = 0, so nodes
    # below the floor reuse the value at the floor.
    u = np.maximum(u, (2.0 * _TINY) ** (1.0 / gamma))
    near = 0.5 * u ** gamma
    far = 1.0 - near
    jac = 0.5 * gamma * u ** (gamma - 1.0) * w
    s, sc = (near, far) if side == 0 else (far, near)
    vals = f(s, sc) if complement else f(s)
    terms = np.asarray(vals, dtype=float) * jac
    return np.sum(terms, axis=-1), np.sum(np.abs(terms), axis=-1)


def integrate_unit(f, spec=None, *, complement=False):
    """Integrate ``f`` over (0, 1).

    Parameters
    ----------
    f : callable
        Vectorised integrand.  Called as ``f(s)`` with a 1-d array of nodes,
        or as ``f(s, 1 - s)`` when ``complement`` is true; the second form
        receives the complement computed without cancellation, which matters
        for integrands singular at 1.  May return shape ``(..., len(s))`` to
        integrate a batch of integrands at once.
    spec : QuadratureSpec, optional
        Tolerances and endpoint exponents.  Convergence needs the level
        difference below ``rel_tol * |I|`` or ``abs_tol * int |f|``; the
        second form only matters when the integral nearly cancels.

    Returns
    -------
    float or ndarray
        The integral (batch shape if ``f`` returns a batch).

    Raises
    ------
    QuadratureError
        If the tolerance is not met within ``spec.max_refinements`` levels.
    """
    spec = spec or DEFAULT_SPEC
    g0 = _power_map(spec.singularity_exponent_at_0)
    g1 = _power_map(spec.singularity_exponent_at_1)

    def level_sum(k):
        u, _, w, _ = _RULE.level(k)
        v0, a0 = _eval_piece(f, complement, 0, g0, u, w)
        v1, a1 = _eval_piece(f, complement, 1, g1, u, w)
        return v0 + v1, a0 + a1

    h = 1.0
    total, total_abs = level_sum(0)
    estimate = h * total
    err = np.full(np.shape(estimate), np.inf)
    for k in range(1, spec.max_refinements + 1):
        h = 2.0 ** -k
        v, va = level_sum(k)
        total, total_abs = total + v, total_abs + va
        new = h * total
        err = np.abs(new - estimate)
        estimate = new
        # abs_tol is measured against int |f|, so it is scale free
        bound = np.maximum(spec.abs_tol * h * total_abs, spec.rel_tol * np.abs(estimate))
        if k >= _MIN_LEVELS and np.all(err <= bound):
            return estimate[()] if np.ndim(estimate) == 0 else estimate
    if not np.all(np.isfinite(estimate)):
        raise QuadratureError("integrand produced non-finite values", estimate, err)
    raise QuadratureError(
        f"no convergence after {spec.max_refinements} refinements "
        f"(max error estimate {np.max(err):.3e})", estimate, err)


def integrate_interval(f, lo, hi, spec=None):
    """Integrate ``f`` over the finite interval (lo, hi).

    The endpoint exponents in ``spec`` refer to ``(a - lo)`` and ``(hi - a)``.
    """
    if not hi > lo:
        raise DomainError("empty interval")
    width = hi - lo

    def g(s, sc):
        a = np.where(s <= 0.5, lo + width * s, hi - width * sc)
        return f(a) * width

    return integrate_unit(g, spec, complement=True)


def integrate_halfline(f, spec=None, *, scale=1.0, decay=None):
    """Integrate ``f`` over (0, inf) via ``u = a / (scale + a)``.

    ``spec.singularity_exponent_at_0`` describes ``f`` near ``a = 0``.  If
    ``f`` decays only algebraically, ``f(a) ~ a**-decay`` with ``decay > 1``,
    pass ``decay`` so the endpoint at infinity is regularised too.
    """
    spec = spec or DEFAULT_SPEC
    if decay is not None:
        if not decay > 1:
            raise DomainError("tail decay exponent must exceed 1 for integrability")
        spec = replace(spec, singularity_exponent_at_1=min(decay - 2.0, 0.0))
    else:
        spec = replace(spec, singularity_exponent_at_1=0.0)

    def g(u, uc):
        a = scale * u / uc
        return f(a) * (scale / uc ** 2)

    return integrate_unit(g, spec, complement=True)


def refined_grid(lo, hi, n=2048, depth=12.0):
    """Grid on (lo, hi) refined geometrically towards both endpoints.

    Node gaps shrink geometrically near each endpoint down to roughly
    ``(hi - lo) * 10**-depth``; the middle is close to uniform.
    """
    if not hi > lo:
        raise DomainError("empty interval")
    if n < 8:
        raise DomainError("grid needs at least 8 nodes")
    # logistic map of a uniform parameter: gaps decay like exp(-|z|) at the ends
    zmax = depth * math.log(10.0)
    t = np.linspace(-1.0, 1.0, n)
    z = zmax * np.sinh(2.0 * t) / math.sinh(2.0)
    x = special.expit(z)
    xc = special.expit(-z)
    grid = np.where(x <= 0.5, lo + (hi - lo) * x, hi - (hi - lo) * xc)
    return grid


@dataclass(frozen=True)
class TabulatedDensity:
    """A normalised density tabulated on a grid, with its CDF.

    ``grid`` is strictly increasing; ``log_density`` holds the log of the
    normalised density at each node (``-inf`` allowed); ``cdf`` is
    nondecreasing from 0 to 1.
    """

    grid: np.ndarray
    log_density: np.ndarray
    cdf: np.ndarray
    normalizer: float = field(default=1.0, compare=False)

    def __post_init__(self):
        g, ld, c = (np.asarray(v, dtype=float) for v in (self.grid, self.log_density, self.cdf))
        if not (g.ndim == 1 and g.shape == ld.shape == c.shape and g.size >= 2):
            raise DomainError("grid, log_density and cdf must be equal-length 1-d arrays")
        if np.any(np.diff(g) <= 0):
            raise DomainError("grid must be strictly increasing")
        if np.any(np.diff(c) < 0):
            raise DomainError("cdf must be nondecreasing")
        if abs(c[0]) > 1e-9 or abs(c[-1] - 1.0) > 1e-9:
            raise DomainError("cdf must run from 0 to 1")
        for name, v in (("grid", g), ("log_density", ld), ("cdf", c)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def density(self):
        return np.exp(self.log_density)

    @classmethod
    def from_log_density(cls, grid, log_density, log_normalizer=None):
        """Tabulate ``exp(log_density)``, normalising it.

        With ``log_normalizer`` given (for instance from an accurate
        quadrature) the density is divided by it; the CDF is then built by
        cumulative trapezoid and pinned to end at exactly 1.
        """
        grid = np.asarray(grid, dtype=float)
        log_density = np.asarray(log_density, dtype=float)
        if log_normalizer is None:
            peak = np.max(log_density)
            if not np.isfinite(peak):
                raise DomainError("density has no mass on the grid")
            dens = np.exp(log_density - peak)
            log_normalizer = peak + math.log(np.trapezoid(dens, grid))
        log_density = log_density - log_normalizer
        dens = np.exp(log_density)
        steps = 0.5 * (dens[1:] + dens[:-1]) * np.diff(grid)
        cdf = np.concatenate([[0.0], np.cumsum(steps)])
        if not cdf[-1] > 0:
            raise DomainError("density has no mass on the grid")
        cdf /= cdf[-1]
        return cls(grid, log_density, cdf, normalizer=float(np.exp(log_normalizer)))

    def trapezoid_mass(self):
        return float(np.trapezoid(self.density, self.grid))

    def to_csv(self, path_or_buf):
        import csv
        import io

        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "density", "cdf"])
            for a, d, c in zip(self.grid, self.density, self.cdf):
                w.writerow([repr(float(a)), repr(float(d)), repr(float(c))])
        finally:
            if own:
                fh.close()
        return None if own or not isinstance(fh, io.StringIO) else fh.getvalue()

    def to_dict(self):
        return {"a": self.grid.tolist(), "density": self.density.tolist(),
                "cdf": self.cdf.tolist()}


def sample_from_tabulated(d, u):
    """Inverse-CDF draw(s) from ``d`` at uniform variate(s) ``u`` in (0, 1).

    Linear interpolation of the inverse CDF, which is monotone and exact at
    the nodes.  Deterministic in ``(d, u)``.
    """
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("uniform variate must lie strictly inside (0, 1)")
    cdf, grid = d.cdf, d.grid
    # keep only the two ends of each flat (zero-density) run of the CDF
    rising = np.diff(cdf) > 0
    keep = np.concatenate([[True], rising]) | np.concatenate([rising, [True]])
    out = np.interp(u, cdf[keep], grid[keep])
    return out[()] if out.ndim == 0 else out
