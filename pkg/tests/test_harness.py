import json
import math

import numpy as np
import pytest

from featurelab import harness, levy, sp, species
from featurelab.alloc import SuffStats

SB = levy.stable_beta(2, 1, 0.5)


def test_case_verdicts():
    assert harness.Case("x", "m", 1e-9, 1e-8).passed
    assert not harness.Case("x", "m", math.nan, 1e-8).passed
    assert harness.Case("x", "m", 2e-6, 1e-6, ">=").passed
    band = (harness.INDISTINGUISHABLE, harness.DISTINGUISHABLE)
    assert harness.Case("x", "m", 1e-9, band, "outside").passed
    assert not harness.Case("x", "m", 1e-7, band, "outside").passed
    with pytest.raises(ValueError):
        harness.Case("x", "m", 1.0, 1.0, "==").passed


def test_threshold_gap():
    assert harness.DISTINGUISHABLE / harness.INDISTINGUISHABLE >= 100


def test_report_serialisation():
    r = harness.VerificationReport("demo", seed=3)
    assert not r.passed  # no cases, nothing verified
    r.add("a", "err", 1e-12, 1e-8)
    r.add("b", "err", math.inf, 1e-8)
    d = json.loads(r.to_json())
    assert d["passed"] is False and d["cases"][1]["value"] == "inf"
    assert "FAIL" in r.to_text() and "seed 3" in r.to_text()
    assert "runtime" not in r.metrics()
    merged = harness.merge_reports("all", [r, r], seed=3)
    assert len(merged.cases) == 4 and merged.cases[0].label == "demo/a"


def test_enumerations():
    assert len(harness.enumerate_sequences(4)) == 15  # Bell number
    assert len(harness.enumerate_sequences(5)) == 52
    assert [len(harness.enumerate_allocations(1, k)) for k in range(4)] == [1, 2, 3, 4]
    cfgs = harness.stats_configs(3, 2)
    assert SuffStats(3, ()) in cfgs and SuffStats(3, (3, 1)) in cfgs and len(cfgs) == 10


def test_closed_form_small_grid():
    grid = {"stable_beta": [(2, 1, 0.5, 10, [3]), (1.5, 0.5, 0.25, 7, [7, 1])],
            "stable_sp": {"sigma": [0.5], "n": [3], "k_max": 2,
                          "prior": {"kind": "exponential", "params": {"rate": 1.0}}}}
    rep = harness.verify_closed_forms(grid)
    assert rep.passed, rep.to_text()
    labels = " ".join(c.label for c in rep.cases)
    assert "sigma=0.5" in labels


def test_dependence_examples():
    model = sp.SPModel(levy.log_intensity(1, 2), sp.uniform_prior(0, 2))
    cfgs = [SuffStats(6, (3,)), SuffStats(6, (2, 1)), SuffStats(6, (1, 1, 1))]
    rep = harness.psi_dependence_report(model, 6, cfgs, expect="n-only")
    assert rep.passed, rep.to_text()
    gam = sp.SPModel(levy.gamma(1.0), sp.exponential_prior())
    rep = harness.psi_dependence_report(gam, 6, [SuffStats(6, (3,)), SuffStats(6, (5,))],
                                        expect="frequency-dependent")
    assert rep.passed, rep.to_text()
    # wrong expectation must fail
    rep = harness.psi_dependence_report(gam, 6, [SuffStats(6, (3,)), SuffStats(6, (5,))],
                                        expect="nk-only")
    assert not rep.passed


def test_dependence_requires_shared_n():
    model = sp.SPModel(levy.stable(0.5), sp.exponential_prior())
    with pytest.raises(ValueError):
        harness.psi_dependence_report(model, 4, [SuffStats(4, (1,)), SuffStats(3, (1,))])


def test_classifier_inconclusive():
    a, b = SuffStats(4, (1,)), SuffStats(4, (2,))
    assert harness._classify([(a, b, 1e-7)]) is None
    assert harness._classify([(a, b, 1e-10)]) == "n-only"
    assert harness._classify([(a, b, 1e-3)]) == "frequency-dependent"


def test_exchangeability_small():
    for kind, model, n in [("crm", SB, 3), ("species", species.dirichlet(1.0), 4),
                           ("sp", sp.SPModel(levy.stable(0.5), sp.exponential_prior()), 3)]:
        rep = harness.exchangeability_suite(kind, model, n, k_max=2)
        assert rep.passed, rep.to_text()
    with pytest.raises(ValueError):
        harness.exchangeability_suite("crm", SB, 7)


def test_growth_examples():
    np.testing.assert_allclose(harness.expected_growth(SB, 3), [2, 3.5, 4.75], rtol=1e-14)
    assert harness.expected_growth(SB, 0).size == 0
    rep = harness.growth_curve(SB, 0, 100, seed=1)
    assert rep.grid["analytic"] == [] and rep.grid["empirical"] == []
    with pytest.raises(ValueError):
        harness.growth_curve(SB, 5, 99, seed=1)


def test_growth_determinism_and_parallelism():
    a = harness.simulate_growth(SB, 12, 60, seed=42)
    b = harness.simulate_growth(SB, 12, 60, seed=42)
    c = harness.simulate_growth(SB, 12, 60, seed=42, workers=3, executor="thread")
    d = harness.simulate_growth(SB, 12, 60, seed=42, workers=2, executor="process")
    assert np.array_equal(a, b) and np.array_equal(a, c) and np.array_equal(a, d)
    assert not np.array_equal(a, harness.simulate_growth(SB, 12, 60, seed=43))


def test_replicate_streams_independent():
    x = harness.replicate_rng(7, 0).random(4)
    y = harness.replicate_rng(7, 1).random(4)
    assert not np.array_equal(x, y)
    assert np.array_equal(x, harness.replicate_rng(7, 0).random(4))


def test_species_and_sp_growth_reports():
    rep = harness.growth_curve(species.pitman_yor(0.5, 1.0), 20, 400, seed=11)
    assert rep.passed, rep.to_text()
    model = sp.SPModel(levy.stable(0.5), sp.exponential_prior())
    rep = harness.growth_curve(model, 5, 400, seed=12)
    assert rep.passed, rep.to_text()
    # first step rate averaged over the exponential(1) prior
    from scipy import special
    assert rep.grid["analytic"][0] == pytest.approx(0.5 * 2 * special.gamma(0.5), rel=1e-8)


def test_mixed_poisson_small():
    model = sp.SPModel(levy.stable(0.5), sp.exponential_prior())
    rep = harness.mixed_poisson_check(model, SuffStats(3, (2,)), 20_000, seed=5)
    assert rep.passed, rep.to_text()
    again = harness.mixed_poisson_check(model, SuffStats(3, (2,)), 20_000, seed=5)
    assert again.metrics() == rep.metrics()


def test_species_reports():
    for m in (species.dirichlet(1.5), species.pitman_yor(0.3, 0.4)):
        rep = harness.sufficientness_report(m, 8)
        assert rep.passed, rep.to_text()
    rep = harness.gibbs_report(N=10, n_norm=50)
    assert rep.passed, rep.to_text()
