import itertools
import math

import numpy as np
import pytest

from crfgat import (
    CompatibilityMatrix,
    CrfModel,
    InstanceTooLargeError,
    ObservedSequence,
    Precomputed,
    SamplerConfig,
    distribution_from_potentials,
    enumerate_exact,
    exact_kl,
    gibbs_energy,
    gibbs_sample,
    run_mean_field,
)
from crfgat.meanfield import init_marginals
from conftest import make_t1, random_model

# T1 labelings (1,1),(1,2),(2,1),(2,2) have energies ln2, 0.5, 2ln2+0.5, ln2
T1_WEIGHTS = [0.5, math.exp(-0.5), 0.25 * math.exp(-0.5), 0.5]
T1_Z = sum(T1_WEIGHTS)


def test_t1_by_hand(t1):
    ex = enumerate_exact(t1)
    assert ex.log_z == pytest.approx(math.log(T1_Z), abs=1e-14)
    assert ex.marginals[0, 0] == pytest.approx((T1_WEIGHTS[0] + T1_WEIGHTS[1]) / T1_Z, abs=1e-14)
    assert list(ex.map_labeling) == [0, 1]
    assert ex.map_energy == pytest.approx(0.5, abs=1e-15)
    assert ex.log_z == pytest.approx(0.5643, abs=1e-4)
    assert ex.marginals[0, 0] == pytest.approx(0.6294, abs=1e-4)


def test_zero_energy_uniform():
    m = CrfModel(ObservedSequence.blank(2), np.zeros((2, 2)), CompatibilityMatrix.potts(2), Precomputed(np.zeros((2, 2))))
    ex = enumerate_exact(m)
    assert ex.log_z == pytest.approx(math.log(4), abs=1e-15)
    assert np.allclose(ex.marginals, 0.5, atol=1e-15)
    assert list(ex.map_labeling) == [0, 0]


def test_factorized_model(rng):
    m = random_model(rng, n=4, k=3)
    m = CrfModel(m.sequence, m.unary, m.compatibility, m.kernel.scaled(0.0))
    ex = enumerate_exact(m)
    assert np.abs(ex.marginals - distribution_from_potentials(m.unary)).max() < 1e-12


def test_against_independent_loop(rng):
    for _ in range(10):
        m = random_model(rng, n=int(rng.integers(1, 5)), k=int(rng.integers(2, 4)))
        energies = {y: gibbs_energy(np.array(y), m) for y in itertools.product(range(m.n_labels), repeat=m.n_nodes)}
        z = sum(math.exp(-e) for e in energies.values())
        ex = enumerate_exact(m)
        assert ex.log_z == pytest.approx(math.log(z), rel=1e-12, abs=1e-12)
        for i in range(m.n_nodes):
            for l in range(m.n_labels):
                p = sum(math.exp(-e) for y, e in energies.items() if y[i] == l) / z
                assert ex.marginals[i, l] == pytest.approx(p, abs=1e-12)
        assert np.abs(ex.marginals.sum(axis=1) - 1).max() < 1e-10
        best = min(energies.values())
        assert ex.map_energy == pytest.approx(best, abs=1e-12)
        assert ex.map_energy == gibbs_energy(ex.map_labeling, m)


def test_map_is_minimal_over_random_labelings(rng):
    m = random_model(rng, n=6, k=3)
    ex = enumerate_exact(m)
    for _ in range(1000):
        y = rng.integers(0, 3, size=6)
        assert ex.map_energy <= gibbs_energy(y, m) + 1e-12


def test_cap_error():
    m = CrfModel(ObservedSequence.blank(5), np.zeros((5, 3)), CompatibilityMatrix.potts(3), Precomputed(np.zeros((5, 5))))
    with pytest.raises(InstanceTooLargeError) as err:
        enumerate_exact(m, cap=100)
    assert "243" in str(err.value)
    with pytest.raises(InstanceTooLargeError):
        exact_kl(np.full((5, 3), 1 / 3), m, cap=100)


def test_kl_zero_for_factorized(rng):
    m = random_model(rng, n=4, k=2)
    m = CrfModel(m.sequence, m.unary, m.compatibility, m.kernel.scaled(0.0))
    assert abs(exact_kl(enumerate_exact(m).marginals, m)) < 1e-10


def test_kl_uniform_t1(t1):
    p = np.array(T1_WEIGHTS) / T1_Z
    expected = sum(0.25 * math.log(0.25 / pk) for pk in p)
    assert exact_kl(np.full((2, 2), 0.5), t1) == pytest.approx(expected, abs=1e-14)
    assert expected > 0


def test_kl_converged_below_initial(t1):
    q, _ = run_mean_field(t1)
    final, initial = exact_kl(q, t1), exact_kl(init_marginals(t1), t1)
    assert 0 <= final <= initial


def test_kl_skips_zero_mass(t1):
    q = np.array([[1.0, 0.0], [0.0, 1.0]])
    # Q concentrated on (1,2): KL = -log P(1,2)
    assert exact_kl(q, t1) == pytest.approx(-math.log(T1_WEIGHTS[1] / T1_Z), abs=1e-14)


def test_kl_nonnegative(rng):
    for _ in range(30):
        m = random_model(rng)
        q = rng.dirichlet(np.ones(m.n_labels), size=m.n_nodes)
        assert exact_kl(q, m) >= -1e-12


def test_gibbs_factorized():
    rng = np.random.default_rng(3)
    m = random_model(rng, n=3, k=3)
    m = CrfModel(m.sequence, m.unary, m.compatibility, m.kernel.scaled(0.0))
    q = gibbs_sample(m, SamplerConfig(sweeps=50_000, burn_in=100, seed=11))
    assert np.abs(q - distribution_from_potentials(m.unary)).max() < 0.01


def test_gibbs_deterministic(t1):
    cfg = SamplerConfig(sweeps=2000, burn_in=10, seed=99)
    assert np.array_equal(gibbs_sample(t1, cfg), gibbs_sample(t1, cfg))


@pytest.mark.parametrize("variant", ["gibbs", "metropolis"])
def test_sampler_matches_enumeration(variant):
    rng = np.random.default_rng(5)
    m = random_model(rng, n=4, k=2, omega_scale=0.5)
    exact = enumerate_exact(m).marginals
    q = gibbs_sample(m, SamplerConfig(sweeps=60_000, burn_in=1000, seed=1, variant=variant))
    assert np.abs(q - exact).max() < 0.02


def test_sampler_error_shrinks_with_sweeps(t1):
    exact = enumerate_exact(t1).marginals
    errs = []
    for sweeps in (2_000, 8_000, 32_000):
        # average over seeds to compare expected errors, not single draws
        e = np.mean([np.abs(gibbs_sample(t1, SamplerConfig(sweeps, 100, seed=s)) - exact).max() for s in range(8)])
        errs.append(e)
    assert errs[0] >= errs[1] >= errs[2]


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(sweeps=10, burn_in=10)
