"""Verification lab: numerical certificates for the library's structural claims.

Every check returns a :class:`VerificationReport` holding one
:class:`Case` per measured quantity, each with its declared threshold.  A
report is a pure function of its inputs and seed; ``runtime`` is the only
field that varies between reruns and is excluded from :meth:`metrics`.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as st

from . import crm, levy, sp, species
from .alloc import FeatureAllocation, Partition, SuffStats, permute_customers
from .numerics import DomainError, QuadratureError

__all__ = [
    "Case",
    "VerificationReport",
    "verify_closed_forms",
    "psi_dependence_report",
    "n_only_certificate",
    "nk_only_certificate",
    "exchangeability_suite",
    "growth_curve",
    "mixed_poisson_check",
    "sufficientness_report",
    "gibbs_report",
    "replicate_rng",
    "enumerate_allocations",
    "enumerate_sequences",
    "stats_configs",
    "INDISTINGUISHABLE",
    "DISTINGUISHABLE",
]

INDISTINGUISHABLE = 1e-8
DISTINGUISHABLE = 1e-6
CLOSED_FORM_TOL = 1e-8
SP_GRID_NODES = 2048


@dataclass
class Case:
    """One measured quantity and its verdict.

    ``op`` is ``"<="`` or ``">="`` against ``threshold``, or ``"outside"``
    for a two-sided band ``threshold = [lo, hi]`` that must be avoided.
    """

    label: str
    metric: str
    value: float
    threshold: object
    op: str = "<="
    note: str = ""

    @property
    def passed(self):
        v = self.value
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return False
        if self.op == "<=":
            return bool(v <= self.threshold)
        if self.op == ">=":
            return bool(v >= self.threshold)
        if self.op == "outside":
            lo, hi = self.threshold
            return bool(v <= lo or v >= hi)
        raise ValueError(f"unknown comparison {self.op!r}")

    def to_dict(self):
        return {"label": self.label, "metric": self.metric, "value": _num(self.value),
                "threshold": self.threshold, "op": self.op, "passed": self.passed,
                "note": self.note}


def _num(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


@dataclass
class VerificationReport:
    name: str
    grid: dict = field(default_factory=dict)
    cases: list = field(default_factory=list)
    seed: Optional[int] = None
    config: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def passed(self):
        return bool(self.cases) and all(c.passed for c in self.cases)

    @property
    def failures(self):
        return [c for c in self.cases if not c.passed]

    def add(self, *args, **kw):
        case = Case(*args, **kw)
        self.cases.append(case)
        return case

    def metrics(self):
        """Everything except the runtime; equal across reruns with one seed."""
        d = self.to_dict()
        d.pop("runtime")
        return d

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "seed": self.seed,
                "config": self.config, "grid": self.grid,
                "cases": [c.to_dict() for c in self.cases], "runtime": self.runtime}

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    def to_text(self):
        head = f"{self.name}: {'PASS' if self.passed else 'FAIL'}"
        head += f" ({len(self.cases) - len(self.failures)}/{len(self.cases)} cases"
        head += f", {self.runtime:.2f} s"
        head += f", seed {self.seed})" if self.seed is not None else ")"
        lines = [head]
        for c in self.cases:
            thr = c.threshold if c.op != "outside" else f"[{c.threshold[0]:g}, {c.threshold[1]:g}]"
            mark = "ok  " if c.passed else "FAIL"
            lines.append(f"  {mark} {c.label}: {c.metric} = {c.value:.3e} {c.op} {thr}"
                         + (f"  ({c.note})" if c.note else ""))
        return "\n".join(lines)


class _Timer:
    def __init__(self, report):
        self.report = report

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self.report

    def __exit__(self, *exc):
        self.report.runtime = time.perf_counter() - self.t0
        return False


def merge_reports(name, reports, seed=None):
    out = VerificationReport(name, seed=seed)
    for r in reports:
        for c in r.cases:
            out.cases.append(Case(f"{r.name}/{c.label}", c.metric, c.value, c.threshold,
                                  c.op, c.note))
        out.grid[r.name] = r.grid
        out.runtime += r.runtime
    return out


# --- enumeration helpers -------------------------------------------------------

def stats_configs(n, k_max=3):
    """Every ``SuffStats(n, m)`` with ``k <= k_max`` (frequencies sorted down)."""
    out = []
    for k in range(k_max + 1):
        for m in itertools.combinations_with_replacement(range(n, 0, -1), k):
            out.append(SuffStats(n, m))
    return out


def enumerate_allocations(n, k_max):
    """All canonical feature allocations of ``n`` customers with ``k <= k_max``."""
    seen = {}
    for k in range(k_max + 1):
        cols = [c for c in itertools.product((0, 1), repeat=n) if any(c)]
        for chosen in itertools.combinations_with_replacement(cols, k):
            cust = [[i for i in range(k) if chosen[i][j]] for j in range(n)]
            Z = FeatureAllocation(cust).canonical()
            seen.setdefault(repr(Z.to_lists()), Z)
    return list(seen.values())


def enumerate_sequences(n):
    """All label sequences of length ``n`` in first-appearance form."""
    out = []

    def rec(prefix, k):
        if len(prefix) == n:
            out.append(list(prefix))
            return
        for lab in range(k + 1):
            rec(prefix + [lab], max(k, lab + 1))
    rec([], 0)
    return out


def _integer_partitions(n, largest=None):
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for first in range(min(n, largest), 0, -1):
        for rest in _integer_partitions(n - first, first):
            yield (first,) + rest


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


# --- closed forms ------------------------------------------------------------

def default_closed_form_grid():
    beta = []
    for alpha in (0.5, 2.0):
        for c in (0.5, 1.0, 4.0):
            for sigma in (0.1, 0.25, 0.5, 0.75):
                for n in (1, 2, 5, 10, 30):
                    m = sorted({1, max(1, n // 2), n})
                    beta.append([alpha, c, sigma, n, m])
    beta.append([2.0, 1.0, 0.5, 10, [3]])
    return {"stable_beta": beta,
            "stable_sp": {"sigma": [0.25, 0.5, 0.75], "n": list(range(1, 11)), "k_max": 3,
                          "prior": {"kind": "exponential", "params": {"rate": 1.0}}}}


def _shared_grid(tables, size):
    # merge automatic grids of the extreme configurations, thin to ``size``
    g = np.unique(np.concatenate([t.grid for t in tables]))
    return np.interp(np.linspace(0.0, len(g) - 1.0, size), np.arange(len(g)), g)


def verify_closed_forms(grid=None, spec=None) -> VerificationReport:
    """Closed forms against the generic quadrature path.

    ``grid["stable_beta"]`` lists ``[alpha, c, sigma, n, m_list]``: the
    predictive rate and inclusion probabilities from the stable-Beta
    formulas are compared with the moment-ratio quadrature.
    ``grid["stable_sp"]`` gives sigmas, sample sizes, ``k_max`` and the
    scale prior: for every configuration the generic posterior (moments by
    quadrature) is compared with the stable closed form on a shared
    2048-node grid, in sup-norm relative to the peak density.
    """
    grid = grid or default_closed_form_grid()
    report = VerificationReport("closed-forms", grid=grid)
    with _Timer(report):
        for alpha, c, sigma, n, ms in grid.get("stable_beta", ()):
            label = f"stable_beta(alpha={alpha:g}, c={c:g}, sigma={sigma:g}) n={n} m={list(ms)}"
            lam = levy.stable_beta(alpha, c, sigma)
            stats = SuffStats(n, tuple(ms))
            try:
                ref = crm.predictive(lam, stats)
                quad = crm.predictive(lam, stats, spec, closed_form=False)
                err = max(_rel(quad.new_rate, ref.new_rate),
                          _rel(quad.known_probs, ref.known_probs) if ms else 0.0)
                report.add(label, "max relative error", err, CLOSED_FORM_TOL)
            except (QuadratureError, DomainError) as exc:
                report.add(label, "max relative error", math.inf, CLOSED_FORM_TOL,
                           note=f"{type(exc).__name__}: {exc}")
        spg = grid.get("stable_sp")
        if spg:
            prior = sp.PsiPrior.from_dict(spg["prior"])
            for sigma in spg["sigma"]:
                model = sp.SPModel(levy.stable(sigma), prior)
                for n in spg["n"]:
                    configs = stats_configs(n, spg["k_max"])
                    label = f"stable SP sigma={sigma:g} n={n} ({len(configs)} configs)"
                    try:
                        ends = [sp.stable_psi_posterior(sigma, cfg, prior)
                                for cfg in (configs[0], configs[-1])]
                        g = _shared_grid(ends, SP_GRID_NODES)
                        gen = sp.psi_posteriors(model, configs, g, spec, closed_form=False)
                        worst = 0.0
                        for cfg, d in zip(configs, gen):
                            ref = sp.stable_psi_posterior(sigma, cfg, prior, grid=g).density
                            worst = max(worst, float(np.max(np.abs(d.density - ref)) / np.max(ref)))
                        report.add(label, "sup-norm relative error", worst, CLOSED_FORM_TOL)
                    except (QuadratureError, DomainError, ArithmeticError) as exc:
                        report.add(label, "sup-norm relative error", math.inf, CLOSED_FORM_TOL,
                                   note=f"{type(exc).__name__}: {exc}")
    return report


# --- scale-posterior dependence ---------------------------------------------

CLASSES = ("n-only", "nk-only", "frequency-dependent")


def _classify(pairs):
    """Structure implied by pairwise verdicts, or ``None`` if inconclusive."""
    verdict = {}
    for (ci, cj, d) in pairs:
        if d <= INDISTINGUISHABLE:
            verdict[(ci, cj)] = False
        elif d >= DISTINGUISHABLE:
            verdict[(ci, cj)] = True
        else:
            return None
    same_k = [v for (ci, cj), v in verdict.items() if ci.k == cj.k]
    diff_k = [v for (ci, cj), v in verdict.items() if ci.k != cj.k]
    if any(same_k):
        return "frequency-dependent"
    if any(diff_k):
        return "nk-only"
    return "n-only"


def psi_dependence_report(model: sp.SPModel, n, configs, expect=None, spec=None,
                          grid=None, closed_form=False, name=None) -> VerificationReport:
    """Pairwise sup-norm distances between scale posteriors sharing ``n``.

    Each pair is classed indistinguishable (``<= 1e-8``), distinguishable
    (``>= 1e-6``) or inconclusive (in between, which fails).  The pattern of
    verdicts gives the dependence structure: ``n-only``, ``nk-only`` or
    ``frequency-dependent``.  With ``expect`` set, each pair must also agree
    with that structure.
    """
    configs = list(configs)
    if any(c.n != n for c in configs):
        raise ValueError(f"all configurations must have n={n}")
    if expect is not None and expect not in CLASSES:
        raise ValueError(f"expect must be one of {CLASSES}")
    report = VerificationReport(name or "psi-dependence", grid={
        "model": model.to_dict(), "n": n, "configs": [c.to_dict() for c in configs],
        "expect": expect})
    with _Timer(report):
        if grid is None:
            ends = [sp.psi_posterior(model, c, spec) for c in (configs[0], configs[-1])]
            grid = _shared_grid(ends, SP_GRID_NODES)
        dens = [d.density for d in sp.psi_posteriors(model, configs, grid, spec, closed_form)]
        pairs = []
        for i, j in itertools.combinations(range(len(configs)), 2):
            ci, cj = configs[i], configs[j]
            d = float(np.max(np.abs(dens[i] - dens[j])))
            pairs.append((ci, cj, d))
            label = f"m={list(ci.m)} vs m={list(cj.m)}"
            differ = {"n-only": False, "nk-only": ci.k != cj.k,
                      "frequency-dependent": None}.get(expect)
            if differ is None:
                report.add(label, "sup-norm distance", d,
                           [INDISTINGUISHABLE, DISTINGUISHABLE], "outside")
            elif differ:
                report.add(label, "sup-norm distance", d, DISTINGUISHABLE, ">=")
            else:
                report.add(label, "sup-norm distance", d, INDISTINGUISHABLE, "<=")
        found = _classify(pairs)
        report.grid["classification"] = found
        if expect is not None:
            report.add("classification", f"matches {expect!r} (1 = yes)",
                       float(found == expect), 1.0, ">=", note=f"found {found}")
    return report


def n_only_certificate(C=1.0, r=2.0, ns=(2, 4, 6), per_n=8, spec=None) -> VerificationReport:
    """Log intensity with a uniform(0, r) prior: the posterior is the prior.

    Every configuration with ``k <= 3`` is compared with the prior density;
    ``per_n`` of them, evenly spread, go through
    :func:`psi_dependence_report` expecting ``n-only``.
    """
    model = sp.SPModel(levy.log_intensity(C, r), sp.uniform_prior(0.0, r))
    parts = []
    for n in ns:
        configs = stats_configs(n, 3)
        pick = np.unique(np.linspace(0, len(configs) - 1, min(per_n, len(configs))).astype(int))
        grid = sp.psi_posterior(model, configs[0], spec).grid
        rep = psi_dependence_report(model, n, [configs[i] for i in pick], "n-only", spec,
                                    grid, name=f"n-only n={n}")
        t0 = time.perf_counter()
        prior_d = np.exp(model.prior.logpdf(grid))
        worst = 0.0
        for d in sp.psi_posteriors(model, configs, grid, spec, closed_form=False):
            worst = max(worst, float(np.max(np.abs(d.density - prior_d))))
        rep.add(f"{len(configs)} configs vs prior", "sup-norm distance", worst,
                INDISTINGUISHABLE)
        rep.runtime += time.perf_counter() - t0
        parts.append(rep)
    out = merge_reports("n-only", parts)
    out.config = {"levy": model.lam.to_dict(), "prior": model.prior.to_dict()}
    return out


def nk_only_certificate(sigma=0.5, rate=1.0, n=6, spec=None) -> VerificationReport:
    """Stable SP posteriors depend on ``(n, k)`` only; gamma is a control.

    The stable intensity with an exponential prior must be ``nk-only``;
    the gamma intensity must come out ``frequency-dependent``.
    """
    prior = sp.exponential_prior(rate)
    stable = sp.SPModel(levy.stable(sigma), prior)
    configs = [SuffStats(n, m) for m in ((3,), (5,), (1,), (2, 1), (6, 6), (4, 2))]
    a = psi_dependence_report(stable, n, configs, "nk-only", spec, name="nk-only stable")
    control = sp.SPModel(levy.gamma(1.0), prior)
    b = psi_dependence_report(control, n, [SuffStats(n, (3,)), SuffStats(n, (5,))],
                              "frequency-dependent", spec, name="nk-only gamma control")
    out = merge_reports("nk-only", [a, b])
    out.config = {"stable": stable.to_dict(), "control": control.to_dict()}
    return out


# --- exchangeability -----------------------------------------------------------

EXCHANGEABILITY_TOL = {"crm": 1e-9, "sp": 1e-8, "species": 1e-12}


def exchangeability_suite(kind, model, n_max, k_max=3, spec=None,
                          threshold=None) -> VerificationReport:
    """Largest log-probability change under reordering observations.

    ``kind`` is ``"crm"`` (a Levy intensity), ``"sp"`` (an
    :class:`~featurelab.sp.SPModel`) or ``"species"`` (a Gibbs model).  All
    allocations with ``n <= n_max`` and ``k <= k_max`` (or all label
    sequences with ``n <= n_max``) are tried under every permutation.
    """
    if kind not in EXCHANGEABILITY_TOL:
        raise ValueError(f"kind must be one of {sorted(EXCHANGEABILITY_TOL)}")
    if n_max > 6:
        raise ValueError("n_max is capped at 6 (exhaustive permutations)")
    threshold = EXCHANGEABILITY_TOL[kind] if threshold is None else threshold
    report = VerificationReport(f"exchangeability-{kind}", grid={
        "n_max": n_max, "k_max": k_max if kind != "species" else None,
        "model": model.to_dict() if hasattr(model, "to_dict") else repr(model)})
    with _Timer(report):
        for n in range(1, n_max + 1):
            perms = list(itertools.permutations(range(n)))
            worst, count = 0.0, 0
            if kind == "species":
                for seq in enumerate_sequences(n):
                    base = species.eppf_log_prob(model, seq)
                    for p in perms:
                        other = species.eppf_log_prob(model, [seq[i] for i in p])
                        worst = max(worst, _logdiff(base, other))
                    count += 1
            else:
                if kind == "crm":
                    rates = crm._Rates(model, spec)

                    def logp(Z):
                        return float(crm._chain_log_prob(Z, rates.rate, rates.prob))
                else:
                    def logp(Z):
                        return sp.allocation_log_prob(model, Z, spec)
                for Z in enumerate_allocations(n, k_max):
                    base = logp(Z)
                    for p in perms[1:]:
                        worst = max(worst, _logdiff(base, logp(permute_customers(Z, p))))
                    count += 1
            unit = "sequences" if kind == "species" else "allocations"
            report.add(f"n={n} ({count} {unit} x {len(perms)} orders)",
                       "max |log-prob difference|", worst, threshold)
    return report


def _logdiff(a, b):
    if a == b:
        return 0.0
    if math.isinf(a) or math.isinf(b):
        return math.inf
    return abs(a - b)


# --- Monte Carlo growth ----------------------------------------------------------

def replicate_rng(seed, r):
    """Independent generator for replicate ``r`` of master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))


def _model_kind(model):
    if isinstance(model, levy.LevyIntensity):
        return "crm"
    if isinstance(model, sp.SPModel):
        return "sp"
    if isinstance(model, species.GibbsModel):
        return "species"
    raise TypeError(f"unsupported model {model!r}")


def _model_to_payload(model):
    kind = _model_kind(model)
    try:
        return kind, model.to_dict()
    except TypeError:
        return kind, None


def _model_from_payload(kind, d):
    if kind == "crm":
        return levy.from_dict(d)
    if kind == "sp":
        return sp.SPModel.from_dict(d)
    return species.GibbsModel.from_dict(d)


def _counts_path(kind, model, n, rng, spec):
    # number of distinct features (or blocks) after each of n observations
    if kind == "species":
        labels = species.sample_sequence(rng, model, n)
        return np.maximum.accumulate(np.asarray(labels, dtype=float) + 1) if n else np.zeros(0)
    if kind == "sp":
        Z = sp.sample_allocation(rng, model, n, spec)
    else:
        Z = crm.sample_allocation(rng, model, n, spec)
    k, out = 0, np.zeros(n)
    for j, c in enumerate(Z.customers):
        if c:
            k = max(k, max(c) + 1)
        out[j] = k
    return out


def _run_block(args):
    kind, payload, model, n, seed, start, stop, spec = args
    if model is None:
        model = _model_from_payload(kind, payload)
    out = np.empty((stop - start, n))
    for i, r in enumerate(range(start, stop)):
        out[i] = _counts_path(kind, model, n, replicate_rng(seed, r), spec)
    return out


def simulate_growth(model, n, replicates, seed, workers=None, executor="process", spec=None):
    """``(replicates, n)`` array of feature counts ``K_1..K_n`` per replicate.

    Replicate ``r`` always draws from :func:`replicate_rng` ``(seed, r)`` and
    rows are assembled in replicate order, so the result does not depend on
    ``workers`` or on the executor.
    """
    kind, payload = _model_to_payload(model)
    if not workers or workers <= 1:
        return _run_block((kind, payload, model, n, seed, 0, replicates, spec))
    if executor == "process" and payload is None:
        executor = "thread"
    pool_cls = ProcessPoolExecutor if executor == "process" else ThreadPoolExecutor
    bounds = np.linspace(0, replicates, 4 * workers + 1).astype(int)
    send = None if executor == "process" else model
    jobs = [(kind, payload, send, n, seed, int(a), int(b), spec)
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with pool_cls(max_workers=workers) as pool:
        blocks = list(pool.map(_run_block, jobs))
    return np.concatenate(blocks, axis=0) if blocks else np.empty((0, n))


def expected_growth(model, n, spec=None):
    """Analytic ``[E K_1, ..., E K_n]`` for any supported model."""
    kind = _model_kind(model)
    if n == 0:
        return np.zeros(0)
    if kind == "crm":
        return crm.expected_growth(model, n, spec)
    if kind == "species":
        # E K_{j+1} = E K_j (1 + sigma / (theta + j)) + theta / (theta + j)
        if model.kind not in ("dirichlet", "pitman_yor"):
            raise TypeError("analytic growth needs a Dirichlet or Pitman-Yor model")
        th, s = model.theta, model.sigma
        out, ek = np.empty(n), 1.0
        out[0] = 1.0
        for j in range(1, n):
            ek = ek * (1.0 + s / (th + j)) + th / (th + j)
            out[j] = ek
        return out
    # scale mixture: average the CRM rates over the prior
    post = sp._Posterior(np.zeros_like, model.prior, spec)
    rates = post.expect(lambda a: levy.scaled_moments(
        model.lam, np.ones(n), np.arange(n), a, spec)).reshape(n)
    return np.cumsum(rates)


def growth_curve(model, n, replicates, seed, workers=None, executor="process",
                 spec=None) -> VerificationReport:
    """Monte Carlo ``E K_j`` against the analytic curve, ``j = 1..n``.

    Per-``j`` z-scores must stay below the Bonferroni-corrected two-sided
    threshold matching a 3-SE familywise level; ``K_n`` alone must be
    within 3 SE.
    """
    if replicates < 100:
        raise ValueError("growth curves need at least 100 replicates")
    kind, payload = _model_to_payload(model)
    report = VerificationReport("growth", seed=seed, grid={
        "n": n, "replicates": replicates, "kind": kind, "model": payload},
        config={"workers": workers, "executor": executor})
    with _Timer(report):
        analytic = expected_growth(model, n, spec)
        paths = simulate_growth(model, n, replicates, seed, workers, executor, spec)
        mean = paths.mean(axis=0) if n else np.zeros(0)
        se = paths.std(axis=0, ddof=1) / math.sqrt(replicates) if n else np.zeros(0)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, (mean - analytic) / se,
                         np.where(np.isclose(mean, analytic), 0.0, np.inf))
        report.grid["analytic"] = analytic.tolist()
        report.grid["empirical"] = mean.tolist()
        report.grid["se"] = se.tolist()
        if n:
            alpha = 2.0 * st.norm.sf(3.0)
            zcrit = float(st.norm.isf(alpha / (2.0 * n)))
            report.add(f"K_j, j=1..{n}", "max |z|", float(np.max(np.abs(z))), zcrit,
                       note="Bonferroni over j at a 3-SE familywise level")
            report.add(f"K_{n}", "|z|", float(abs(z[-1])), 3.0)
    return report


def mixed_poisson_check(model: sp.SPModel, stats: SuffStats, draws, seed,
                        spec=None, min_expected=5.0) -> VerificationReport:
    """Scale-averaged new-feature pmf against simulation.

    Draws the scale from its tabulated posterior and then a Poisson count;
    bins whose expected count is below ``min_expected`` are pooled into one
    upper bin.  Each bin must be within 3 SE.
    """
    report = VerificationReport("mixed-poisson", seed=seed, grid={
        "model": model.to_dict(), "stats": stats.to_dict(), "draws": draws})
    with _Timer(report):
        mp = sp.marginal_predictive(model, stats, spec=spec)
        rng = replicate_rng(seed, 0)
        a = sp.sample_psi(rng, model, stats, spec, size=draws)
        rates = levy.scaled_moment(model.lam, 1, stats.n, a, spec)
        y = rng.poisson(rates)
        pmf = np.append(mp.new_pmf, mp.tail_mass)
        keep = np.flatnonzero(pmf[:-1] * draws >= min_expected)
        top = int(keep[-1]) + 1 if keep.size else 0
        probs = np.append(pmf[:top], pmf[top:].sum())
        counts = np.bincount(np.minimum(y, top), minlength=top + 1)
        for yv, (p, cnt) in enumerate(zip(probs, counts)):
            se = math.sqrt(p * (1.0 - p) / draws)
            zv = abs(cnt / draws - p) / se if se > 0 else (0.0 if cnt == 0 else math.inf)
            label = f"y={yv}" if yv < top else f"y>={top}"
            report.add(label, "|z|", zv, 3.0, note=f"pmf {p:.6g}, empirical {cnt / draws:.6g}")
    return report


# --- species forms --------------------------------------------------------------

def sufficientness_report(model: species.GibbsModel, n_max=8) -> VerificationReport:
    """Which statistics the species predictive depends on, exhaustively.

    For every block configuration with ``n <= n_max``: Dirichlet ``p_new``
    must be identical at fixed ``n``; Pitman-Yor ``p_new`` identical at fixed
    ``(n, k)`` and ``p_old[i]`` identical at fixed ``(n, n_i)``; any Gibbs
    model has ``p_old[i] / (n_i - sigma)`` identical at fixed ``(n, k)``.
    Spreads are exact differences of the evaluated expressions.
    """
    report = VerificationReport(f"sufficientness-{model.kind}", grid={"n_max": n_max})
    with _Timer(report):
        by_n, by_nk, by_nni, gibbs_nk = {}, {}, {}, {}
        for n in range(1, n_max + 1):
            for blocks in _integer_partitions(n):
                pred = species.gibbs_predictive(model, Partition(blocks))
                k = len(blocks)
                by_n.setdefault(n, []).append(pred.p_new)
                by_nk.setdefault((n, k), []).append(pred.p_new)
                for b, p in zip(blocks, pred.p_old):
                    by_nni.setdefault((n, b), []).append(p)
                    if b - model.sigma != 0:
                        gibbs_nk.setdefault((n, k), []).append(p / (b - model.sigma))

        def spread(groups):
            return max((max(v) - min(v) for v in groups.values()), default=0.0)
        if model.kind == "dirichlet":
            report.add("p_new at fixed n", "max spread", spread(by_n), 1e-15)
        if model.kind in ("dirichlet", "pitman_yor"):
            report.add("p_new at fixed (n, k)", "max spread", spread(by_nk), 1e-15)
            report.add("p_old at fixed (n, n_i)", "max spread", spread(by_nni), 1e-15)
        report.add("p_old / (n_i - sigma) at fixed (n, k)", "max spread",
                   spread(gibbs_nk), 1e-15)
    return report


def gibbs_report(models=None, N=30, n_norm=200) -> VerificationReport:
    """Weight recursion residuals and predictive normalisation."""
    models = models or [species.dirichlet(1.0), species.dirichlet(2.0),
                        species.pitman_yor(0.5, 1.0), species.pitman_yor(0.25, -0.2),
                        species.pitman_yor(-0.5, 2.0)]
    report = VerificationReport("gibbs", grid={"N": N, "n_norm": n_norm,
                                               "models": [m.to_dict() for m in models]})
    with _Timer(report):
        for m in models:
            label = f"{m.kind}{m.params}"
            report.add(label, f"recursion residual, n <= {N}",
                       species.check_v_recursion(m, N), 1e-12)
            worst = 0.0
            rng = np.random.default_rng(0)
            for n in range(1, n_norm + 1):
                # a few block configurations per n: singletons, one block, random
                cands = [(1,) * n, (n,)]
                k = min(int(rng.integers(1, n + 1)), int(min(n, m.max_blocks)))
                cut = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False)) if k > 1 else []
                cands.append(tuple(np.diff(np.concatenate([[0], cut, [n]])).astype(int)))
                for blocks in cands:
                    if len(blocks) > m.max_blocks:
                        continue
                    p = species.gibbs_predictive(m, Partition(blocks))
                    worst = max(worst, abs(p.p_new + math.fsum(p.p_old) - 1.0))
            report.add(label, f"|p_new + sum p_old - 1|, n <= {n_norm}", worst, 1e-12)
    return report
