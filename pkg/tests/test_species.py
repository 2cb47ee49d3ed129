import itertools
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from featurelab import species
from featurelab.alloc import Partition
from featurelab.harness import enumerate_sequences
from featurelab.numerics import DomainError


def test_predictive_examples():
    pred = species.gibbs_predictive(species.dirichlet(1.0), Partition((1,)))
    assert pred.p_new == pytest.approx(0.5, abs=1e-15)
    assert pred.p_old == pytest.approx((0.5,), abs=1e-15)
    pred = species.gibbs_predictive(species.pitman_yor(0.5, 0.5), Partition((2,)))
    assert pred.p_new == pytest.approx(0.4, abs=1e-15)
    assert pred.p_old == pytest.approx((0.6,), abs=1e-15)
    assert species.gibbs_predictive(species.dirichlet(2.0), Partition(())).p_new == 1.0
    assert pred.to_dict() == {"p_new": pred.p_new, "p_old": list(pred.p_old)}


def test_log_v_against_mpmath():
    mp.mp.dps = 30
    th, s = 1.3, 0.4
    py = species.pitman_yor(s, th)
    for n, k in [(1, 1), (10, 3), (150, 40)]:
        ref = mp.fprod([th + i * s for i in range(k)]) / mp.rf(th, n)
        assert py.log_v(n, k) == pytest.approx(float(mp.log(ref)), rel=1e-12)
        dp = species.dirichlet(th)
        assert dp.log_v(n, k) == pytest.approx(float(mp.log(mp.mpf(th) ** k / mp.rf(th, n))),
                                               rel=1e-12)


def test_log_v_domain():
    with pytest.raises(DomainError):
        species.dirichlet(1.0).log_v(3, 4)
    with pytest.raises(DomainError):
        species.dirichlet(1.0).log_v(3, 0)


@pytest.mark.parametrize("build", [lambda: species.dirichlet(0.0),
                                   lambda: species.pitman_yor(1.0, 1.0),
                                   lambda: species.pitman_yor(0.5, -0.5),
                                   lambda: species.pitman_yor(-0.5, 0.7),
                                   lambda: species.pitman_yor(0.0, 1.0)])
def test_parameter_ranges(build):
    with pytest.raises(DomainError):
        build()


def test_recursion_examples():
    assert species.check_v_recursion(species.dirichlet(2.0), 30) < 1e-12
    assert species.check_v_recursion(species.pitman_yor(0.5, 1.0), 30) < 1e-12
    assert species.check_v_recursion(species.pitman_yor(-0.5, 1.5), 30) < 1e-12


def test_recursion_detector():
    bad = species.GibbsModel("custom", 0.3, {}, lambda n, k: -0.1 * (n - 1) * (k > 0))
    assert species.check_v_recursion(bad, 10) > 1e-3
    with pytest.raises(DomainError):
        species.custom_gibbs(0.3, lambda n, k: -0.1 * (n - 1))


def test_custom_matches_builtin():
    py = species.pitman_yor(0.25, 2.0)
    cg = species.custom_gibbs(0.25, py.log_v)
    part = Partition((4, 1, 2))
    a, b = species.gibbs_predictive(py, part), species.gibbs_predictive(cg, part)
    assert a.p_new == pytest.approx(b.p_new, rel=1e-12)
    assert a.p_old == pytest.approx(b.p_old, rel=1e-12)
    with pytest.raises(TypeError):
        cg.to_dict()


def test_normalisation_up_to_200():
    for model in (species.dirichlet(0.7), species.pitman_yor(0.5, 1.0),
                  species.pitman_yor(0.9, -0.5)):
        for n in (1, 7, 50, 200):
            for k in {1, max(1, n // 3), n}:
                sizes = [n - k + 1] + [1] * (k - 1)
                pred = species.gibbs_predictive(model, Partition(tuple(sizes)))
                assert abs(pred.p_new + sum(pred.p_old) - 1) < 1e-12


def test_negative_sigma_bounded_blocks(rng):
    model = species.pitman_yor(-1.0, 3.0)
    assert model.max_blocks == 3
    pred = species.gibbs_predictive(model, Partition((2, 1, 1)))
    assert pred.p_new == 0.0
    for _ in range(200):
        assert species.sample_partition(rng, model, 25).k <= 3


def test_sample_partition_basics(rng):
    assert species.sample_partition(rng, species.dirichlet(3.0), 1) == Partition((1,))
    assert species.sample_partition(rng, species.dirichlet(3.0), 0) == Partition(())
    a = species.sample_sequence(np.random.default_rng(4), species.pitman_yor(0.3, 1), 40)
    b = species.sample_sequence(np.random.default_rng(4), species.pitman_yor(0.3, 1), 40)
    assert a == b
    with pytest.raises(ValueError):
        species.sample_sequence(rng, species.dirichlet(1), -1)


def test_dirichlet_expected_blocks(rng):
    theta, n, reps = 2.0, 50, 10_000
    model = species.dirichlet(theta)
    K = np.array([species.sample_partition(rng, model, n).k for _ in range(reps)])
    ref = sum(theta / (theta + j) for j in range(n))
    assert abs(K.mean() - ref) < 3 * K.std(ddof=1) / math.sqrt(reps)


def test_eppf_examples():
    dp = species.dirichlet(1.0)
    assert species.eppf_log_prob(dp, [0, 0]) == pytest.approx(math.log(0.5))
    assert species.eppf_log_prob(dp, [0, 1]) == pytest.approx(math.log(0.5))
    # labels need not be in first-appearance form
    assert species.eppf_log_prob(dp, [7, 3, 7]) == species.eppf_log_prob(dp, [0, 1, 0])


def test_eppf_sums_to_one():
    model = species.pitman_yor(0.4, 0.6)
    for n in range(1, 7):
        total = sum(math.exp(species.eppf_log_prob(model, s)) for s in enumerate_sequences(n))
        assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("model", [species.dirichlet(1.0), species.pitman_yor(0.5, 0.3),
                                   species.pitman_yor(-0.5, 1.5)], ids=str)
def test_eppf_permutation_invariance(model):
    for n in range(1, 6):
        for seq in enumerate_sequences(n):
            base = species.eppf_log_prob(model, seq)
            for p in itertools.permutations(range(n)):
                other = species.eppf_log_prob(model, [seq[i] for i in p])
                assert other == base or abs(other - base) < 1e-12


def test_dirichlet_sufficientness():
    # p_new depends on n only, evaluated identically for every configuration
    model = species.dirichlet(1.7)
    from featurelab.harness import _integer_partitions
    for n in range(1, 9):
        vals = {species.gibbs_predictive(model, Partition(b)).p_new
                for b in _integer_partitions(n)}
        assert len(vals) == 1


def test_partition_io(tmp_path):
    part = Partition((3, 1, 1))
    path = tmp_path / "p.json"
    species.write_partition(part, path)
    assert path.read_text() == '{"n": 5, "blocks": [3, 1, 1]}\n'
    assert species.read_partition(path) == part


def test_model_round_trip():
    for m in (species.dirichlet(2.5), species.pitman_yor(0.2, 3.0)):
        back = species.GibbsModel.from_dict(m.to_dict())
        assert back.to_dict() == m.to_dict()
    with pytest.raises(ValueError):
        species.GibbsModel.from_dict({"kind": "nope"})


def test_relabel_sequence():
    assert species.relabel_sequence([5, 5, 2, 9, 2]) == [0, 0, 1, 2, 1]


@given(st.floats(0.01, 0.99), st.floats(0.0, 20.0), st.lists(st.integers(1, 30), min_size=1,
                                                              max_size=12))
def test_predictive_normalises(sigma, theta_shift, blocks):
    model = species.pitman_yor(sigma, theta_shift - sigma + 1e-3)
    pred = species.gibbs_predictive(model, Partition(tuple(blocks)))
    assert abs(pred.p_new + sum(pred.p_old) - 1) < 1e-12
    assert pred.p_new >= 0 and all(p > 0 for p in pred.p_old)
