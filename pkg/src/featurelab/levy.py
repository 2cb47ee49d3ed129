"""Homogeneous Levy intensities and their moment integrals.

An intensity is a density ``lam(s)`` for jump sizes on ``(0, upper)``.  The
two integrals everything else is built from are

    moment(lam, p, q)           = int_0^1 s**p (1-s)**q lam(s) ds
    scaled_moment(lam, p, q, a) = int_0^1 s**p (1-s)**q a lam(a s) ds

Each catalogue kind carries a closed form where one exists; every kind also
has a quadrature path, and the two are kept independent so one can check
the other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import special

from .numerics import (
    DEFAULT_SPEC,
    DomainError,
    QuadratureError,
    QuadratureSpec,
    integrate_unit,
    log_beta,
)

__all__ = [
    "LevyIntensity",
    "IntegrabilityResult",
    "stable_beta",
    "stable",
    "log_intensity",
    "gamma",
    "custom",
    "evaluate",
    "moment",
    "scaled_moment",
    "scaled_moments",
    "check_integrability",
    "from_dict",
]

KINDS = ("stable_beta", "stable", "log", "gamma", "custom", "scaled")


@dataclass(frozen=True, eq=False)
class LevyIntensity:
    """A Levy density on ``(0, upper)``.

    ``rho0`` is the algebraic exponent of ``lam`` at 0 (``lam ~ s**rho0``),
    ``rho_upper`` the exponent of ``(upper - s)`` at a finite upper end, and
    ``decay`` the tail exponent ``lam ~ s**-decay`` when ``upper`` is
    infinite (``None`` for faster-than-algebraic decay).
    """

    kind: str
    params: dict
    upper: float
    rho0: float
    rho_upper: float = 0.0
    decay: Optional[float] = None
    _fn: Callable = field(default=None, repr=False)
    base: Optional["LevyIntensity"] = field(default=None, repr=False)

    def __call__(self, s):
        return evaluate(self, s)

    def scaled(self, a):
        """The intensity ``s -> a lam(a s)`` restricted to (0, 1).

        ``scaled(1)`` is plain restriction to the unit interval, the form a
        feature prior needs.
        """
        return _scaled(self, a)

    def to_dict(self):
        if self.kind == "custom":
            raise TypeError("custom intensities carry code and cannot be serialised")
        out = {"kind": self.kind, "params": dict(self.params)}
        if self.kind == "scaled":
            out["base"] = self.base.to_dict()
        return out

    def __eq__(self, other):
        if not isinstance(other, LevyIntensity):
            return NotImplemented
        if self.kind == "custom" or other.kind == "custom":
            return self is other
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return id(self) if self.kind == "custom" else hash(repr(self.to_dict()))

    def _density(self, s, rest=None):
        # rest = upper - s, supplied when it is known without cancellation
        if rest is None and math.isfinite(self.upper):
            rest = self.upper - s
        return self._fn(s, rest)


class IntegrabilityResult(NamedTuple):
    ok: bool
    value: float
    message: str = ""


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be positive and finite, got {value}")
    return float(value)


def _unit_open(name, value):
    if not (0 < value < 1):
        raise DomainError(f"{name} must lie in (0, 1), got {value}")
    return float(value)


def stable_beta(alpha, c, sigma):
    """Stable-Beta process intensity on (0, 1)."""
    alpha, c = _positive("alpha", alpha), _positive("c", c)
    sigma = _unit_open("sigma", sigma)
    logk = (math.log(alpha) + math.lgamma(1 + c)
            - math.lgamma(1 - sigma) - math.lgamma(c + sigma))

    def fn(s, rest):
        return np.exp(logk - (1 + sigma) * np.log(s) + (c + sigma - 1) * np.log(rest))

    return LevyIntensity("stable_beta", {"alpha": alpha, "c": c, "sigma": sigma},
                         upper=1.0, rho0=-1 - sigma, rho_upper=c + sigma - 1, _fn=fn)


def stable(sigma, C=1.0):
    """``C sigma s**(-1-sigma)`` on (0, inf); ``C = 1`` is the standard stable SP."""
    sigma = _unit_open("sigma", sigma)
    C = _positive("C", C)

    def fn(s, rest):
        return C * sigma * s ** (-1.0 - sigma)

    return LevyIntensity("stable", {"C": C, "sigma": sigma}, upper=math.inf,
                         rho0=-1 - sigma, decay=1 + sigma, _fn=fn)


def log_intensity(C, r):
    """``C / s`` on (0, r), zero above."""
    C, r = _positive("C", C), _positive("r", r)

    def fn(s, rest):
        return C / s

    return LevyIntensity("log", {"C": C, "r": r}, upper=r, rho0=-1.0, _fn=fn)


def gamma(theta):
    """Gamma process intensity ``theta s**-1 exp(-s)`` on (0, inf)."""
    theta = _positive("theta", theta)

    def fn(s, rest):
        return theta * np.exp(-s) / s

    return LevyIntensity("gamma", {"theta": theta}, upper=math.inf, rho0=-1.0, _fn=fn)


def custom(fn, rho0, upper=math.inf, rho_upper=0.0, decay=None, validate=True, spec=None):
    """Wrap a vectorised pointwise density ``fn(s)``.

    The endpoint exponents must be declared: quadrature accuracy cannot be
    inferred from point values.  With ``validate`` the integrability
    condition is checked and a failure raises :class:`DomainError`.
    """
    lam = LevyIntensity("custom", {}, upper=float(upper), rho0=float(rho0),
                        rho_upper=float(rho_upper), decay=decay,
                        _fn=lambda s, rest: fn(s))
    if validate:
        res = check_integrability(lam, spec)
        if not res.ok:
            raise DomainError(f"intensity fails the integrability condition: {res.message}")
    return lam


def _scaled(base, a):
    a = _positive("a", a)
    if base.kind == "scaled":
        return _scaled(base.base, a * base.params["a"])
    upper = min(1.0, base.upper / a)

    def fn(s, rest):
        inner_rest = None
        if math.isfinite(base.upper):
            inner_rest = base.upper - a * s
            if rest is not None and upper == base.upper / a:
                inner_rest = a * rest
        return a * base._density(a * s, inner_rest)

    rho_upper = base.rho_upper if upper == base.upper / a else 0.0
    return LevyIntensity("scaled", {"a": a}, upper=upper, rho0=base.rho0,
                         rho_upper=rho_upper, _fn=fn, base=base)


_BUILDERS = {
    "stable_beta": lambda p: stable_beta(p["alpha"], p["c"], p["sigma"]),
    "stable": lambda p: stable(p["sigma"], p.get("C", 1.0)),
    "log": lambda p: log_intensity(p["C"], p["r"]),
    "gamma": lambda p: gamma(p["theta"]),
}


def from_dict(d):
    """Inverse of :meth:`LevyIntensity.to_dict`."""
    kind = d.get("kind")
    params = d.get("params", {})
    if kind == "scaled":
        return from_dict(d["base"]).scaled(params["a"])
    if kind not in _BUILDERS:
        raise DomainError(f"unknown or non-serialisable intensity kind {kind!r}")
    try:
        return _BUILDERS[kind](params)
    except KeyError as exc:
        raise DomainError(f"missing parameter {exc.args[0]!r} for kind {kind!r}") from None


def evaluate(lam, s):
    """Pointwise value; 0 at or above the support, error at or below 0."""
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise DomainError("Levy intensities are only defined for s > 0")
    inside = s < lam.upper
    out = np.zeros_like(s)
    if np.any(inside):
        out[inside] = lam._density(s[inside])
    return out[()] if out.ndim == 0 else out


# --- moments ----------------------------------------------------------------

def _closed_form(lam, p, q, a):
    """Closed-form scaled moment or None.  ``a`` is an ndarray."""
    kind, P = lam.kind, lam.params
    if kind == "scaled":
        return _closed_form(lam.base, p, q, a * P["a"])
    if kind == "stable":
        sigma = P["sigma"]
        return P["C"] * sigma * a ** -sigma * np.exp(log_beta(p - sigma, q + 1))
    if kind == "stable_beta":
        if np.all(a == 1.0):
            sigma, c = P["sigma"], P["c"]
            logk = (math.log(P["alpha"]) + math.lgamma(1 + c)
                    - math.lgamma(1 - sigma) - math.lgamma(c + sigma))
            return np.full(a.shape, math.exp(logk + log_beta(p - sigma, q + c + sigma)))
        return None
    if kind == "log":
        full = P["C"] * math.exp(log_beta(p, q + 1))
        frac = np.minimum(1.0, P["r"] / a)
        return np.where(frac >= 1.0, full, full * special.betainc(p, q + 1, frac))
    return None


def _check_moment_domain(lam, p, q):
    if p < 0 or q < 0:
        raise DomainError("moment exponents must be non-negative")
    if not p + lam.rho0 > -1:
        raise DomainError(
            f"moment with p={p} is not integrable at 0 (intensity exponent {lam.rho0})")
    if lam.upper == 1.0 and not q + lam.rho_upper > -1:
        raise DomainError(f"moment with q={q} is not integrable at 1")


def _quadrature_moment(lam, p, q, a, spec):
    """Moments for equal-length exponent arrays ``p, q``; shape ``(P, A)``."""
    # b is the effective upper limit of s; integrate over x = s / b in (0, 1)
    b = np.minimum(1.0, lam.upper / a)
    hits_one = b >= 1.0
    hits_upper = a * b >= lam.upper
    rho1 = 0.0
    if np.any(hits_one):
        rho1 += float(np.min(q))
    if np.any(hits_upper) and math.isfinite(lam.upper):
        rho1 += lam.rho_upper
    rho0 = float(np.min(p)) + lam.rho0
    spec = (spec or DEFAULT_SPEC).with_exponents(min(rho0, 0.0), min(rho1, 0.0))
    bb = b[:, None]
    aa = a[:, None]
    pp = np.asarray(p, dtype=float)[:, None, None]
    qq = np.asarray(q, dtype=float)[:, None, None]

    def f(x, xc):
        s = bb * x
        one_minus = np.where(hits_one[:, None], xc, 1.0 - s)
        if math.isfinite(lam.upper):
            rest = np.where(hits_upper[:, None], lam.upper * xc, lam.upper - aa * s)
        else:
            rest = None
        with np.errstate(divide="ignore"):
            lv = np.log(bb * aa * lam._density(aa * s, rest))
            ls, l1 = np.log(s), np.log(one_minus)
        # one exp per row instead of two powers
        out = np.exp(pp * ls + qq * l1 + lv)
        return np.where(np.isnan(out), 0.0, out)

    return integrate_unit(f, spec, complement=True)


def _as_scales(a):
    a_arr = np.asarray(a, dtype=float).ravel()
    if np.any(~(a_arr > 0)) or not np.all(np.isfinite(a_arr)):
        raise DomainError("scale a must be positive and finite")
    return a_arr


def scaled_moment(lam, p, q, a, spec=None, closed_form=True):
    """``int_0^1 s**p (1-s)**q a lam(a s) ds``, vectorised over ``a``.

    Uses the kind's closed form when available unless ``closed_form`` is
    false, in which case quadrature is forced.
    """
    _check_moment_domain(lam, p, q)
    a_arr = _as_scales(a)
    out = _closed_form(lam, p, q, a_arr) if closed_form else None
    if out is None:
        out = _quadrature_moment(lam, [p], [q], a_arr, spec)[0]
    out = np.asarray(out, dtype=float)
    return float(out[0]) if np.ndim(a) == 0 else out.reshape(np.shape(a))


def scaled_moments(lam, p, q, a, spec=None, closed_form=True):
    """Batch of :func:`scaled_moment` over exponent pairs; shape ``(P,) + shape(a)``.

    Pairs without a closed form share one quadrature, so the intensity is
    evaluated once per node for the whole batch.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("p and q must be equal-length 1-d sequences")
    for pi, qi in zip(p, q):
        _check_moment_domain(lam, pi, qi)
    a_arr = _as_scales(a)
    out = np.empty((len(p), a_arr.size))
    todo = []
    for j, (pi, qi) in enumerate(zip(p, q)):
        cf = _closed_form(lam, pi, qi, a_arr) if closed_form else None
        if cf is None:
            todo.append(j)
        else:
            out[j] = cf
    if todo:
        out[todo] = _quadrature_moment(lam, p[todo], q[todo], a_arr, spec)
    return out.reshape((len(p),) + np.shape(a))


def moment(lam, p, q, spec=None, closed_form=True):
    """``int_0^1 s**p (1-s)**q lam(s) ds`` (the intensity restricted to (0, 1))."""
    return scaled_moment(lam, p, q, 1.0, spec, closed_form)


def check_integrability(lam, spec=None):
    """Check ``int min(s, 1) lam(s) ds < inf`` numerically.

    Returns an :class:`IntegrabilityResult` carrying the integral (or
    ``inf``).  Never raises.
    """
    spec = spec or DEFAULT_SPEC
    top = min(1.0, lam.upper)
    try:
        # int_0^top s lam(s) ds = top * int_0^1 x top lam(top x) dx
        head = top * scaled_moment(lam, 1.0, 0.0, top, spec, closed_form=False)
    except DomainError as exc:
        return IntegrabilityResult(False, math.inf, str(exc))
    except QuadratureError as exc:
        return IntegrabilityResult(False, math.inf, f"no convergence near 0: {exc}")
    tail = 0.0
    if lam.upper > 1.0:
        try:
            tail = _tail_integral(lam, spec)
        except (DomainError, QuadratureError) as exc:
            return IntegrabilityResult(False, math.inf, f"tail: {exc}")
    value = float(head + tail)
    if not math.isfinite(value):
        return IntegrabilityResult(False, math.inf, "non-finite integral")
    return IntegrabilityResult(True, value)


def _tail_integral(lam, spec):
    """``int_1^upper lam(s) ds``."""
    if math.isfinite(lam.upper):
        width = lam.upper - 1.0
        s1 = spec.with_exponents(0.0, min(lam.rho_upper, 0.0))
        return integrate_unit(
            lambda x, xc: width * lam._density(1.0 + width * x, width * xc), s1,
            complement=True)
    # s = 1 / t maps (1, inf) onto (0, 1); lam ~ s**-decay gives t**(decay - 2)
    if lam.decay is not None:
        if not lam.decay > 1:
            raise DomainError(f"tail exponent {lam.decay} is not integrable at infinity")
        rho = min(lam.decay - 2.0, 0.0)
    else:
        rho = 0.0
    s1 = spec.with_exponents(rho, 0.0)
    return integrate_unit(lambda t: lam._density(1.0 / t) / t ** 2, s1)
