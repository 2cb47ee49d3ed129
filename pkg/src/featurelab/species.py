"""Gibbs-type species sampling: weights, predictives and partition sampling.

A Gibbs-type model is a discount ``sigma < 1`` together with weights
``V(n, k)`` obeying ``V(1, 1) = 1`` and
``V(n, k) = (n - sigma k) V(n+1, k) + V(n+1, k+1)``.  Given blocks of sizes
``n_1..n_k`` the next observation opens a new block with probability
``V(n+1, k+1) / V(n, k)`` and joins block ``i`` with probability
``V(n+1, k) / V(n, k) * (n_i - sigma)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .alloc import Partition
from .numerics import DomainError, log_pochhammer

__all__ = [
    "GibbsModel",
    "GibbsPredictive",
    "dirichlet",
    "pitman_yor",
    "custom_gibbs",
    "gibbs_predictive",
    "check_v_recursion",
    "sample_sequence",
    "sample_partition",
    "eppf_log_prob",
    "relabel_sequence",
    "read_partition",
    "write_partition",
]

RECURSION_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GibbsModel:
    """Discount ``sigma`` plus a provider of ``log V(n, k)``.

    Build with :func:`dirichlet`, :func:`pitman_yor` or :func:`custom_gibbs`.
    """

    kind: str
    sigma: float
    params: dict = field(default_factory=dict)
    log_v_fn: Optional[Callable] = field(default=None, repr=False)

    @property
    def theta(self):
        return self.params.get("theta")

    @property
    def max_blocks(self):
        """Largest attainable number of blocks (``inf`` unless ``sigma < 0``)."""
        if self.sigma < 0 and self.theta is not None:
            return math.ceil(-self.theta / self.sigma - 1e-9)
        return math.inf

    def log_v(self, n, k):
        """``log V(n, k)``; ``-inf`` for unattainable ``k``."""
        if not (1 <= k <= n):
            raise DomainError(f"need 1 <= k <= n, got n={n}, k={k}")
        if self.kind == "dirichlet":
            th = self.theta
            return (k - 1) * math.log(th) - log_pochhammer(th + 1.0, n - 1)
        if self.kind == "pitman_yor":
            th, s = self.theta, self.sigma
            # theta factor cancelled against (theta)_n so theta in (-sigma, 0) works
            terms = th + s * np.arange(1, k)
            if np.any(terms <= 0):
                return -math.inf
            return float(np.sum(np.log(terms))) - log_pochhammer(th + 1.0, n - 1)
        return float(self.log_v_fn(n, k))

    def v(self, n, k):
        return math.exp(self.log_v(n, k))

    def to_dict(self):
        if self.kind == "custom":
            raise TypeError("custom weight providers are not serialisable")
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        kind, params = d["kind"], d.get("params", {})
        if kind == "dirichlet":
            return dirichlet(**params)
        if kind in ("pitman_yor", "pitman-yor"):
            return pitman_yor(**params)
        raise ValueError(f"unknown species model kind {kind!r}")


def dirichlet(theta) -> GibbsModel:
    """Dirichlet process: ``sigma = 0``, ``V(n, k) = theta^k / (theta)_n``."""
    theta = float(theta)
    if not theta > 0:
        raise DomainError(f"Dirichlet needs theta > 0, got {theta}")
    return GibbsModel("dirichlet", 0.0, {"theta": theta})


def pitman_yor(sigma, theta) -> GibbsModel:
    """Pitman-Yor process, ``V(n, k) = prod_{i<k}(theta + i sigma) / (theta)_n``.

    Besides ``0 < sigma < 1, theta > -sigma`` this also accepts ``sigma < 0``
    with ``theta = m |sigma|`` for a positive integer ``m`` (at most ``m``
    blocks).
    """
    sigma, theta = float(sigma), float(theta)
    if 0 < sigma < 1:
        if not theta > -sigma:
            raise DomainError(f"Pitman-Yor needs theta > -sigma, got theta={theta}")
    elif sigma < 0:
        m = theta / -sigma
        if not (m >= 1 - 1e-12 and abs(m - round(m)) < 1e-9):
            raise DomainError("with sigma < 0, theta must be a positive multiple of |sigma|")
    else:
        raise DomainError(f"Pitman-Yor needs sigma in (0, 1) or sigma < 0, got {sigma}")
    return GibbsModel("pitman_yor", sigma, {"sigma": sigma, "theta": theta})


def custom_gibbs(sigma, log_v: Callable, check_n=30) -> GibbsModel:
    """Gibbs model from a user ``log_v(n, k)``.

    The weights must satisfy ``V(1, 1) = 1`` and the recursion up to
    ``check_n``; otherwise :class:`DomainError` is raised.
    """
    sigma = float(sigma)
    if not sigma < 1:
        raise DomainError(f"sigma must be < 1, got {sigma}")
    model = GibbsModel("custom", sigma, {}, log_v)
    if abs(model.v(1, 1) - 1.0) > RECURSION_TOL:
        raise DomainError(f"V(1, 1) must be 1, got {model.v(1, 1)}")
    resid = check_v_recursion(model, check_n)
    if not resid <= RECURSION_TOL:
        raise DomainError(f"weights violate the Gibbs recursion (residual {resid:.3g})")
    return model


@dataclass(frozen=True)
class GibbsPredictive:
    p_new: float
    p_old: tuple

    def to_dict(self):
        return {"p_new": self.p_new, "p_old": list(self.p_old)}


def _log_ratios(model, n, k):
    """``log V(n+1, k+1)/V(n, k)`` and ``log V(n+1, k)/V(n, k)``."""
    if model.kind in ("dirichlet", "pitman_yor"):
        th, s = model.theta, model.sigma
        base = -math.log(th + n)
        new = th + k * s
        return (math.log(new) + base if new > 0 else -math.inf), base
    lv = model.log_v(n, k)
    return model.log_v(n + 1, k + 1) - lv, model.log_v(n + 1, k) - lv


def gibbs_predictive(model: GibbsModel, part: Partition) -> GibbsPredictive:
    """New-block and join-block probabilities after ``part``.

    The empty partition gives ``p_new = 1``.
    """
    if part.n == 0:
        return GibbsPredictive(1.0, ())
    lnew, lold = _log_ratios(model, part.n, part.k)
    p_new = math.exp(lnew)
    c = math.exp(lold)
    return GibbsPredictive(p_new, tuple(c * (b - model.sigma) for b in part.blocks))


def check_v_recursion(model: GibbsModel, N) -> float:
    """Largest relative residual of the Gibbs recursion over ``k <= n <= N``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    worst = 0.0
    for n in range(1, N + 1):
        for k in range(1, n + 1):
            lv = model.log_v(n, k)
            if lv == -math.inf:
                continue
            r = ((n - model.sigma * k) * math.exp(model.log_v(n + 1, k) - lv)
                 + math.exp(model.log_v(n + 1, k + 1) - lv))
            worst = max(worst, abs(1.0 - r))
    return worst


def sample_sequence(rng, model: GibbsModel, n) -> list:
    """Block labels for ``n`` sequential draws (labels by first appearance)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    labels, blocks = [], []
    for _ in range(n):
        pred = gibbs_predictive(model, Partition(tuple(blocks)))
        p_new = pred.p_new if len(blocks) < model.max_blocks else 0.0
        probs = np.clip(np.array(list(pred.p_old) + [p_new]), 0.0, None)
        j = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
        j = min(j, len(blocks))
        if j == len(blocks):
            blocks.append(1)
        else:
            blocks[j] += 1
        labels.append(j)
    return labels


def sample_partition(rng, model: GibbsModel, n) -> Partition:
    """Sequential (restaurant-style) draw of a partition of ``n`` items."""
    return Partition.from_labels(sample_sequence(rng, model, n))


def relabel_sequence(labels: Sequence[int]) -> list:
    """Relabel blocks ``0, 1, ...`` in order of first appearance."""
    mapping = {}
    return [mapping.setdefault(lab, len(mapping)) for lab in labels]


def eppf_log_prob(model: GibbsModel, labels: Sequence[int]) -> float:
    """Chain-rule log probability of a full sequence of block labels."""
    total, blocks = 0.0, []
    for j in relabel_sequence(labels):
        if not blocks:
            blocks.append(1)
            continue
        lnew, lold = _log_ratios(model, sum(blocks), len(blocks))
        if j == len(blocks):
            total += lnew
            blocks.append(1)
        else:
            w = blocks[j] - model.sigma
            total += lold + (math.log(w) if w > 0 else -math.inf)
            blocks[j] += 1
    return total


def write_partition(part: Partition, path):
    with open(path, "w") as fh:
        json.dump(part.to_dict(), fh)
        fh.write("\n")


def read_partition(path) -> Partition:
    with open(path) as fh:
        return Partition.from_dict(json.load(fh))
