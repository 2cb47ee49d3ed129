"""Predictive distributions and sequential sampling under CRM feature priors.

Given ``n`` customers showing ``k`` features with frequencies ``m``, the next
customer shows a Poisson number of new features, with mean
``moment(lam, 1, n)``, and includes old feature ``i`` independently with
probability ``moment(lam, m_i + 1, n - m_i) / moment(lam, m_i, n - m_i)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats as st

from . import levy
from .alloc import FeatureAllocation, SuffStats, suff_stats
from .numerics import DomainError, log_pochhammer

__all__ = [
    "PredictiveLaw",
    "predictive",
    "sample_next",
    "sample_allocation",
    "expected_num_features",
    "allocation_log_prob",
    "poisson_cutoff",
]


def poisson_cutoff(mean):
    """Largest count worth tabulating; the tail beyond is below 1e-12."""
    return int(math.ceil(mean + 12.0 * math.sqrt(mean) + 30.0))


@dataclass(frozen=True)
class PredictiveLaw:
    """Poisson rate for new features and inclusion probabilities for old ones."""

    new_rate: float
    known_probs: tuple = ()

    def __post_init__(self):
        probs = tuple(float(p) for p in self.known_probs)
        object.__setattr__(self, "known_probs", probs)
        if not (math.isfinite(self.new_rate) and self.new_rate >= 0):
            raise DomainError(f"new_rate must be finite and non-negative, got {self.new_rate}")
        if any(not (0.0 <= p <= 1.0) for p in probs):
            raise DomainError("inclusion probabilities must lie in [0, 1]")

    def new_pmf(self, y_max=None):
        y_max = poisson_cutoff(self.new_rate) if y_max is None else y_max
        return st.poisson.pmf(np.arange(y_max + 1), self.new_rate)

    def log_pmf(self, y, included):
        """Log probability of ``y`` new features and inclusion indicators."""
        included = np.asarray(included, dtype=bool)
        p = np.asarray(self.known_probs)
        bern = np.where(included, np.log(p), np.log1p(-p)).sum() if p.size else 0.0
        return float(st.poisson.logpmf(y, self.new_rate) + bern)

    def to_dict(self):
        return {"new_rate": self.new_rate, "known_probs": list(self.known_probs)}

    def to_json(self):
        return json.dumps(self.to_dict())


def _require_unit_support(lam):
    if lam.upper > 1.0:
        raise DomainError(
            f"{lam.kind} intensity extends beyond (0, 1); restrict it explicitly "
            "with lam.scaled(1) before using it as a feature prior")


class _Rates:
    """Memoised new-feature rates and inclusion probabilities for one intensity."""

    def __init__(self, lam, spec=None, closed_form=True):
        _require_unit_support(lam)
        self.lam, self.spec, self.closed_form = lam, spec, closed_form
        self._rate = {}
        self._prob = {}
        self._beta = closed_form and lam.kind == "stable_beta"

    def rate(self, n):
        if n not in self._rate:
            if self._beta:
                P = self.lam.params
                self._rate[n] = P["alpha"] * math.exp(
                    log_pochhammer(P["c"] + P["sigma"], n) - log_pochhammer(P["c"] + 1, n))
            else:
                self._rate[n] = levy.moment(self.lam, 1, n, self.spec, self.closed_form)
        return self._rate[n]

    def prob(self, m, n):
        key = (m, n)
        if key not in self._prob:
            if self._beta:
                P = self.lam.params
                self._prob[key] = (m - P["sigma"]) / (n + P["c"])
            else:
                num = levy.moment(self.lam, m + 1, n - m, self.spec, self.closed_form)
                den = levy.moment(self.lam, m, n - m, self.spec, self.closed_form)
                self._prob[key] = num / den
        return self._prob[key]

    def probs(self, m, n):
        return np.array([self.prob(int(v), n) for v in m], dtype=float)


def predictive(lam, stats: SuffStats, spec=None, closed_form=True) -> PredictiveLaw:
    """Predictive law of the next customer.

    With ``closed_form`` the stable-Beta kind uses its Pochhammer/ratio
    formulas; otherwise every quantity comes from the moment integrals
    (themselves closed form where available unless ``closed_form`` is false).
    """
    r = _Rates(lam, spec, closed_form)
    return PredictiveLaw(r.rate(stats.n), tuple(r.probs(stats.m, stats.n)))


def _step(rng, rates, counts, n):
    # one customer: Bernoulli for each known feature, then Poisson new ones
    k = len(counts)
    probs = rates.probs(counts, n) if k else np.empty(0)
    included = np.flatnonzero(rng.random(k) < probs)
    y = int(rng.poisson(rates.rate(n)))
    return included, y


def sample_next(rng, lam, Z: FeatureAllocation, spec=None) -> FeatureAllocation:
    """Append one customer drawn from the predictive law."""
    stats = suff_stats(Z)
    rates = _Rates(lam, spec)
    included, y = _step(rng, rates, np.asarray(stats.m, dtype=int), stats.n)
    new = set(int(i) for i in included) | set(range(stats.k, stats.k + y))
    return Z.append(new)


def sample_allocation(rng, lam, n, spec=None, _rates=None) -> FeatureAllocation:
    """Draw ``n`` customers sequentially, starting from the empty allocation.

    Consumes the generator exactly as ``n`` calls to :func:`sample_next`.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    rates = _rates or _Rates(lam, spec)
    counts = np.zeros(0, dtype=int)
    customers = []
    for j in range(n):
        included, y = _step(rng, rates, counts, j)
        k = len(counts)
        counts[included] += 1
        counts = np.concatenate([counts, np.ones(y, dtype=int)])
        customers.append(frozenset(included.tolist()) | frozenset(range(k, k + y)))
    return FeatureAllocation(customers)


def expected_num_features(lam, n, spec=None, closed_form=True):
    """Expected number of distinct features among ``n`` customers."""
    r = _Rates(lam, spec, closed_form)
    return float(sum(r.rate(j) for j in range(n)))


def expected_growth(lam, n, spec=None, closed_form=True):
    """``[E K_1, ..., E K_n]``."""
    r = _Rates(lam, spec, closed_form)
    return np.cumsum([r.rate(j) for j in range(n)])


def _chain_log_prob(Z, rate, prob):
    """Sequential log probability of ``Z`` up to feature relabelling.

    ``rate(j)`` and ``prob(m, j)`` may return arrays (a batch of models);
    the result then has the same shape.  Features introduced at the same
    step with identical future membership are interchangeable, so the
    Poisson ``1/y!`` is replaced by ``1/prod(c_h!)`` over those groups.
    """
    n = Z.n
    first = {}
    for j, c in enumerate(Z.customers):
        for i in c:
            first.setdefault(i, j)
    members = [[] for _ in range(n)]
    for i, j in first.items():
        members[j].append(i)
    history = {i: tuple(j for j in range(n) if i in Z.customers[j]) for i in first}

    total = 0.0
    counts = {}
    for j, c in enumerate(Z.customers):
        for i, m in counts.items():
            p = prob(m, j)
            total = total + (np.log(p) if i in c else np.log1p(-p))
        lam_j = rate(j)
        y = len(members[j])
        total = total - lam_j
        if y:
            total = total + y * np.log(lam_j)
            groups = {}
            for i in members[j]:
                groups[history[i]] = groups.get(history[i], 0) + 1
            total = total - sum(special.gammaln(g + 1) for g in groups.values())
        for i in c:
            counts[i] = counts.get(i, 0) + 1
    return total


def allocation_log_prob(lam, Z: FeatureAllocation, spec=None, closed_form=True):
    """Log probability of the allocation, invariant to customer order."""
    r = _Rates(lam, spec, closed_form)
    return float(_chain_log_prob(Z, r.rate, r.prob))
