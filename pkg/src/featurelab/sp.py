"""Scaled-process feature priors.

A scaled process mixes CRM feature priors over a latent scale ``a``: given
``a`` the jump intensity on (0, 1) is ``s -> a lam(a s)``, and ``a`` has
prior density ``f``.  Given a sample with statistics ``(n, k, m)`` the scale
has posterior density proportional to

    exp(-sum_{i=1..n} phi_i(a)) * prod_{i=1..k} M(m_i, a) * f(a)

with ``phi_i(a) = scaled_moment(lam, 1, i - 1, a)`` and
``M(m, a) = scaled_moment(lam, m, n - m, a)``.  Predictives are CRM
predictives for the scaled intensity, mixed over that posterior.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special, stats as st

from . import crm, levy
from .alloc import FeatureAllocation, SuffStats
from .numerics import (
    DEFAULT_SPEC,
    DomainError,
    TabulatedDensity,
    integrate_halfline,
    integrate_interval,
    log_beta,
    refined_grid,
    sample_from_tabulated,
)

__all__ = [
    "PsiPrior",
    "SPModel",
    "MarginalPredictive",
    "DegeneratePosteriorError",
    "uniform_prior",
    "exponential_prior",
    "custom_prior",
    "phi",
    "psi_log_likelihood",
    "psi_posterior",
    "psi_posteriors",
    "stable_psi_log_likelihood",
    "conditional_predictive",
    "marginal_predictive",
    "sample_psi",
    "sample_allocation",
    "allocation_log_prob",
]

GRID_SIZE = 2048
MAX_GRID = 2 ** 17
MASS_TOL = 1e-6
_Z_RANGE = 12 * math.log(10.0)
_UNDERFLOW = 800.0  # exp(-800) is zero in double precision


class DegeneratePosteriorError(ArithmeticError):
    """The posterior of the scale has no numerically representable mass."""


@dataclass(frozen=True, eq=False)
class PsiPrior:
    """Prior density of the latent scale on ``(lo, hi)``; ``hi`` may be inf."""

    kind: str
    params: dict
    lo: float
    hi: float
    logpdf: Callable = field(repr=False)
    decay: Optional[float] = None

    @property
    def compact(self):
        return math.isfinite(self.hi)

    def sample(self, rng):
        if self.kind == "uniform":
            return self.lo + (self.hi - self.lo) * rng.random()
        if self.kind == "exponential":
            return float(rng.exponential(1.0 / self.params["rate"]))
        return float(sample_from_tabulated(self._table(), _open_uniform(rng)))

    def _table(self):
        table = self.__dict__.get("_cached_table")
        if table is None:
            table = _Posterior(np.zeros_like, self).table()
            object.__setattr__(self, "_cached_table", table)
        return table

    def total_mass(self, spec=None):
        return _integrate_support(lambda a: np.exp(self.logpdf(a)), self.lo, self.hi,
                                  spec, decay=self.decay)

    def to_dict(self):
        if self.kind == "custom":
            raise TypeError("custom priors carry code and cannot be serialised")
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        kind, p = d.get("kind"), d.get("params", {})
        if kind == "uniform":
            if "r" in p:
                return uniform_prior(0.0, p["r"])
            return uniform_prior(p.get("lo", 0.0), p["hi"])
        if kind == "exponential":
            return exponential_prior(p.get("rate", 1.0))
        raise DomainError(f"unknown or non-serialisable prior kind {kind!r}")


def uniform_prior(lo, hi):
    lo, hi = float(lo), float(hi)
    if not (0 <= lo < hi < math.inf):
        raise DomainError(f"uniform prior needs 0 <= lo < hi < inf, got ({lo}, {hi})")
    logw = -math.log(hi - lo)

    def logpdf(a):
        return np.full(np.shape(a), logw)

    return PsiPrior("uniform", {"lo": lo, "hi": hi}, lo, hi, logpdf)


def exponential_prior(rate=1.0):
    rate = float(rate)
    if not rate > 0:
        raise DomainError("exponential rate must be positive")
    lr = math.log(rate)

    def logpdf(a):
        return lr - rate * np.asarray(a, dtype=float)

    return PsiPrior("exponential", {"rate": rate}, 0.0, math.inf, logpdf)


def custom_prior(logpdf, lo=0.0, hi=math.inf, decay=None, spec=None):
    """Prior from a vectorised log-density; must integrate to 1 within 1e-8."""
    prior = PsiPrior("custom", {}, float(lo), float(hi), logpdf, decay)
    mass = prior.total_mass(spec)
    if abs(mass - 1.0) > 1e-8:
        raise DomainError(f"prior density integrates to {mass!r}, not 1")
    return prior


@dataclass(frozen=True, eq=False)
class SPModel:
    lam: levy.LevyIntensity
    prior: PsiPrior

    def __post_init__(self):
        res = levy.check_integrability(self.lam)
        if not res.ok:
            raise DomainError(f"Levy intensity is not integrable: {res.message}")

    def to_dict(self):
        return {"levy": self.lam.to_dict(), "prior": self.prior.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(levy.from_dict(d["levy"]), PsiPrior.from_dict(d["prior"]))


def _open_uniform(rng, size=None):
    u = rng.random(size)
    return np.where(u > 0.0, u, np.nextafter(0.0, 1.0))


def _integrate_support(f, lo, hi, spec=None, decay=None, scale=1.0):
    if math.isfinite(hi):
        return integrate_interval(f, lo, hi, spec)
    if lo != 0.0:
        return integrate_halfline(lambda a: f(a + lo), spec, scale=scale, decay=decay)
    return integrate_halfline(f, spec, scale=scale, decay=decay)


# --- scale posterior ----------------------------------------------------------

def phi(lam, i, a, spec=None, closed_form=True):
    """``int_0^1 s (1-s)**(i-1) a lam(a s) ds``."""
    if i < 1:
        raise ValueError("phi is defined for i >= 1")
    return levy.scaled_moment(lam, 1, i - 1, a, spec, closed_form)


def psi_log_likelihood(lam, stats: SuffStats, a, spec=None, closed_form=True):
    """Log of the a-dependent likelihood factor of the scale posterior."""
    return _LikelihoodTerms(lam, stats.n, spec, closed_form, cache=0).loglik(stats)(a)


class _LikelihoodTerms:
    """Scaled moments shared by every stats vector with the same ``n``.

    Row ``i - 1`` holds ``phi_i(a)`` and row ``n + m - 1`` holds
    ``M(m, n - m, a)``.  Tables are memoised per node array, so posteriors
    for many configurations evaluated on the same nodes cost one batch of
    quadratures.
    """

    def __init__(self, lam, n, spec=None, closed_form=True, cache=512):
        self.lam, self.n, self.spec, self.closed_form = lam, n, spec, closed_form
        self._cache, self._size = OrderedDict(), cache

    def rows(self, a, rows):
        a = np.asarray(a, dtype=float)
        key = (a.shape, a.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            hit = {}
            if self._size:
                self._cache[key] = hit
                while len(self._cache) > self._size:
                    self._cache.popitem(last=False)
        todo = sorted(set(rows) - hit.keys())
        if todo:
            n = self.n
            p = [1 if r < n else r - n + 1 for r in todo]
            q = [r if r < n else n - (r - n + 1) for r in todo]
            vals = levy.scaled_moments(self.lam, p, q, a, self.spec, self.closed_form)
            hit.update(zip(todo, vals))
        return [hit[r] for r in rows]

    def loglik(self, stats: SuffStats):
        if stats.n != self.n:
            raise ValueError(f"stats have n={stats.n}, expected {self.n}")
        ms, counts = np.unique(np.asarray(stats.m, dtype=int), return_counts=True)
        rows = list(range(self.n)) + [self.n + int(m) - 1 for m in ms]

        def f(a):
            tab = self.rows(a, rows)
            out = -np.sum(tab[:self.n], axis=0) if self.n else np.zeros(np.shape(a))
            for c, t in zip(counts, tab[self.n:]):
                out = out + c * np.log(t)
            return out
        return f


def stable_psi_log_likelihood(sigma, stats: SuffStats, a, C=1.0):
    """Closed form of :func:`psi_log_likelihood` for the stable intensity.

    ``-k sigma log a - C sigma a**-sigma sum_i B(1 - sigma, i)``, plus the
    a-free constant ``k log(C sigma) + sum log B(m_i - sigma, n - m_i + 1)``
    dropped.
    """
    a = np.asarray(a, dtype=float)
    total_b = float(np.sum(np.exp(log_beta(1.0 - sigma, np.arange(1, stats.n + 1)))))
    return -stats.k * sigma * np.log(a) - C * sigma * a ** -sigma * total_b


class _Posterior:
    """Unnormalised log posterior of the scale plus its normaliser."""

    def __init__(self, loglik, prior, spec=None, scale=None, log_bound=None):
        self.loglik, self.prior = loglik, prior
        self.spec = spec or DEFAULT_SPEC
        # log_bound is an upper bound on loglik; with it, nodes whose weight
        # must underflow are skipped once the peak is known
        self.log_bound, self._cut = log_bound, None
        lo, hi = prior.lo, prior.hi
        if prior.compact:
            scan = refined_grid(lo, hi, 257, depth=6)
        else:
            scan = lo + np.logspace(-12, 12, 481)
        vals = self.log_unnorm(scan)
        good = np.isfinite(vals)
        if not np.any(good):
            raise DegeneratePosteriorError("posterior is zero on the whole support scan")
        self.shift = float(np.max(vals[good]))
        self.mode = float(scan[good][np.argmax(vals[good])])
        self._scan = (scan, vals)
        # half-line substitution scale; fixing it across posteriors lets
        # them share quadrature nodes
        if scale is None:
            scale = self.mode - lo if self.mode > lo else 1.0
        self.scale = scale
        if log_bound is not None:
            self._cut = self.shift - _UNDERFLOW - log_bound
        self.norm = self.integrate(lambda a: 1.0)
        if not (self.norm > 0 and math.isfinite(self.norm)):
            raise DegeneratePosteriorError(f"posterior normaliser is {self.norm!r}")

    def log_unnorm(self, a):
        a = np.asarray(a, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            lp = np.broadcast_to(self.prior.logpdf(a), a.shape)
            if self._cut is None:
                return self.loglik(a) + lp
            live = lp >= self._cut
            out = np.full(a.shape, -np.inf)
            if np.any(live):
                out[live] = self.loglik(a[live]) + lp[live]
            return out

    def weight(self, a):
        with np.errstate(under="ignore"):
            w = np.exp(self.log_unnorm(a) - self.shift)
        return np.where(np.isfinite(w), w, 0.0)

    def integrate(self, g):
        """``int g(a) w(a) da`` over the support; ``g`` may return a batch."""
        def f(a):
            return np.asarray(g(a)) * self.weight(a)

        return _integrate_support(f, self.prior.lo, self.prior.hi, self.spec,
                                  decay=self.prior.decay, scale=self.scale)

    def expect(self, g):
        return self.integrate(g) / self.norm

    def _to_a(self, z):
        """Map the unbounded tabulation coordinate ``z`` to the support."""
        lo, hi = self.prior.lo, self.prior.hi
        if not self.prior.compact:
            return lo + np.exp(z)
        w = hi - lo
        return np.where(z <= 0, lo + w * special.expit(z), hi - w * special.expit(-z))

    def _log_mass(self, z):
        # log density per unit z
        if self.prior.compact:
            jac = (math.log(self.prior.hi - self.prior.lo)
                   + special.log_expit(z) + special.log_expit(-z))
        else:
            jac = z
        lv = self.log_unnorm(self._to_a(z)) + jac
        return np.where(np.isfinite(lv), lv, -np.inf)

    def bounds(self, cut=50.0):
        """Range of ``z`` outside which the mass is negligible."""
        z = np.linspace(-_Z_RANGE, _Z_RANGE, 8193)
        lv = self._log_mass(z)
        keep = np.flatnonzero(lv >= np.max(lv) - cut)
        i0, i1 = max(keep[0] - 1, 0), min(keep[-1] + 1, len(z) - 1)
        return float(z[i0]), float(z[i1])

    def table(self, n_grid=GRID_SIZE, grid=None):
        """Tabulate on ``grid`` if given, else on an automatic grid.

        Automatic grids start at ``n_grid`` nodes and are refined by nested
        doubling until trapezoid re-integration of the (exactly normalised)
        density is within ``MASS_TOL`` of one.
        """
        log_norm = self.shift + math.log(self.norm)
        if grid is not None:
            return TabulatedDensity.from_log_density(grid, self.log_unnorm(grid), log_norm)
        z0, z1 = self.bounds()
        # nodes equally spaced in a warp mixing the CDF in z with uniform z,
        # so the bulk and the tails both get resolution
        z = np.linspace(z0, z1, 4097)
        lv = self._log_mass(z)
        w = np.exp(lv - np.max(lv))
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(z))])
        warp = 0.5 * cdf / cdf[-1] + 0.5 * (z - z0) / (z1 - z0)
        n, logd = n_grid, None
        while True:
            grid = self._to_a(np.interp(np.linspace(0.0, 1.0, n), warp, z))
            if logd is None:
                logd = self.log_unnorm(grid)
            else:
                # nested doubling: even nodes are the previous grid
                grid[::2] = prev
                fresh = np.empty(n)
                fresh[::2] = logd
                fresh[1::2] = self.log_unnorm(grid[1::2])
                logd = fresh
            prev = grid
            table = TabulatedDensity.from_log_density(grid, logd, log_norm)
            if abs(table.trapezoid_mass() - 1.0) <= MASS_TOL or 2 * n - 1 > MAX_GRID:
                return table
            n = 2 * n - 1


def _loglik_bound(stats):
    # every M(m, n - m) <= phi_1 and every phi_i >= 0, so the likelihood is
    # at most max_x (k log x - x) = k log k - k
    k = stats.k
    return k * math.log(k) - k if k else 0.0


def _build_posterior(model, stats, spec=None, closed_form=True, loglik=None):
    if stats.n < 1:
        raise ValueError("the scale posterior needs n >= 1")
    if loglik is None:
        loglik = _LikelihoodTerms(model.lam, stats.n, spec, closed_form).loglik(stats)
    return _Posterior(loglik, model.prior, spec, log_bound=_loglik_bound(stats))


def psi_posterior(model: SPModel, stats: SuffStats, spec=None, closed_form=True,
                  n_grid=GRID_SIZE, grid=None) -> TabulatedDensity:
    """Tabulated posterior density of the scale.

    ``closed_form=False`` evaluates every moment by quadrature.  Pass
    ``grid`` to tabulate on given nodes (for comparing two posteriors).
    """
    return _build_posterior(model, stats, spec, closed_form).table(n_grid, grid)


def psi_posteriors(model: SPModel, configs, grid, spec=None, closed_form=True) -> list:
    """Scale posteriors for several stats vectors sharing ``n``, on one grid.

    Equivalent to calling :func:`psi_posterior` for each, but the moment
    integrals are computed once per node set.
    """
    configs = list(configs)
    if not configs:
        return []
    n = configs[0].n
    if n < 1 or any(c.n != n for c in configs):
        raise ValueError("configurations must share n >= 1")
    terms = _LikelihoodTerms(model.lam, n, spec, closed_form)
    first = _Posterior(terms.loglik(configs[0]), model.prior, spec,
                       log_bound=_loglik_bound(configs[0]))
    out = [first.table(grid=grid)]
    for c in configs[1:]:
        post = _Posterior(terms.loglik(c), model.prior, spec, scale=first.scale,
                          log_bound=_loglik_bound(c))
        out.append(post.table(grid=grid))
    return out


def stable_psi_posterior(sigma, stats, prior, C=1.0, spec=None, n_grid=GRID_SIZE, grid=None):
    """The stable-intensity scale posterior straight from its closed form."""
    post = _Posterior(lambda a: stable_psi_log_likelihood(sigma, stats, a, C), prior, spec,
                      log_bound=_loglik_bound(stats))
    return post.table(n_grid, grid)


def conditional_predictive(model: SPModel, stats: SuffStats, a, spec=None,
                           closed_form=True) -> crm.PredictiveLaw:
    """CRM predictive for the intensity ``s -> a lam(a s)`` on (0, 1)."""
    return crm.predictive(model.lam.scaled(a), stats, spec, closed_form)


@dataclass(frozen=True)
class MarginalPredictive:
    """Scale-averaged predictive: mixed-Poisson pmf and mean inclusions."""

    new_pmf: np.ndarray
    tail_mass: float
    known_means: np.ndarray
    mean_rate: float

    def to_dict(self):
        return {"new_pmf": self.new_pmf.tolist(), "tail_mass": self.tail_mass,
                "known_means": self.known_means.tolist(), "mean_rate": self.mean_rate}


def _rate_fn(lam, n, spec, closed_form):
    return lambda a: levy.scaled_moment(lam, 1, n, a, spec, closed_form)


def _prob_fn(lam, m, n, spec, closed_form):
    if lam.kind == "stable" and closed_form:
        p = (m - lam.params["sigma"]) / (n - lam.params["sigma"] + 1)
        return lambda a: np.full(np.shape(a), p)

    def f(a):
        num = levy.scaled_moment(lam, m + 1, n - m, a, spec, closed_form)
        return num / levy.scaled_moment(lam, m, n - m, a, spec, closed_form)
    return f


def marginal_predictive(model: SPModel, stats: SuffStats, y_max=None, spec=None,
                        closed_form=True) -> MarginalPredictive:
    """Predictive of the next customer with the scale integrated out.

    ``new_pmf[y]`` for ``y <= y_max`` is the mixed-Poisson pmf of the number
    of new features; ``tail_mass`` is its mass above ``y_max``, computed
    separately so that ``new_pmf.sum() + tail_mass`` is a genuine check.
    """
    post = _build_posterior(model, stats, spec, closed_form)
    n = stats.n
    rate = _rate_fn(model.lam, n, spec, closed_form)
    mean_rate = float(post.expect(rate))
    if y_max is None:
        y_max = int(st.poisson.isf(1e-10, mean_rate))
        while st.poisson.sf(y_max, mean_rate) >= 1e-10:
            y_max += 1
    ys = np.arange(y_max + 1)[:, None]
    pmf = post.expect(lambda a: st.poisson.pmf(ys, rate(a)[None, :]))
    tail = float(post.expect(lambda a: st.poisson.sf(y_max, rate(a))))
    means = []
    cache = {}
    for m in stats.m:
        if m not in cache:
            cache[m] = float(post.expect(_prob_fn(model.lam, m, n, spec, closed_form)))
        means.append(cache[m])
    return MarginalPredictive(np.atleast_1d(pmf), tail, np.asarray(means), mean_rate)


def sample_psi(rng, model: SPModel, stats: SuffStats, spec=None, size=None, table=None):
    """Draw(s) from the scale posterior by inverse CDF on its tabulation."""
    table = table or psi_posterior(model, stats, spec)
    return sample_from_tabulated(table, _open_uniform(rng, size))


def sample_allocation(rng, model: SPModel, n, spec=None, return_psi=False):
    """Draw the scale from its prior, then ``n`` customers from the CRM it defines."""
    if n < 0:
        raise ValueError("n must be non-negative")
    a = model.prior.sample(rng)
    Z = crm.sample_allocation(rng, model.lam.scaled(a), n, spec)
    return (Z, a) if return_psi else Z


def allocation_log_prob(model: SPModel, Z: FeatureAllocation, spec=None, closed_form=True):
    """Log probability of ``Z`` with the scale integrated against its prior."""
    lam = model.lam

    def loglik(a):
        def rate(j):
            return levy.scaled_moment(lam, 1, j, a, spec, closed_form)

        def prob(m, j):
            return _prob_fn(lam, m, j, spec, closed_form)(a)

        return np.broadcast_to(crm._chain_log_prob(Z, rate, prob), np.shape(a))

    # a log probability is at most 0
    post = _Posterior(loglik, model.prior, spec, log_bound=0.0)
    return float(post.shift + math.log(post.norm))
