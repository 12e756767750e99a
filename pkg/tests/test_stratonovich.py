import math

import numpy as np
import pytest

from cylsde.integrate import ConstantSampler, ProcessSampler, StoppingRule, integrate_ito
from cylsde.noise import TimeGrid, sample_cylindrical
from cylsde.spde import DiffusionFamily
from cylsde.stratonovich import (
    MissingWitnessError, SemimartingaleWitness, StratIntegrand, WitnessMismatchError, collapse_constant_noise,
    collapse_moments_check, collapse_qv, collapsed_driver, integrate_stratonovich_1d, ito_correction, midpoint_sum,
    strat_cylindrical,
)


def test_constant_integrand_matches_ito(coarse_grid):
    noise = sample_cylindrical(coarse_grid, 1, 1, 20)
    strat = integrate_stratonovich_1d(StratIntegrand.constant([1.5]), noise, 1.0)
    np.testing.assert_allclose(strat, integrate_ito(ConstantSampler([1.5]), noise, 1.0), atol=1e-12)


def test_brownian_strat_is_half_square(grid):
    noise = sample_cylindrical(grid, 1, 2, 200)
    strat = integrate_stratonovich_1d(StratIntegrand.brownian(), noise, 1.0)[:, 0]
    np.testing.assert_allclose(strat, noise.W_at(1.0)[:, 0] ** 2 / 2, atol=1e-12)
    witness = integrate_stratonovich_1d(StratIntegrand.brownian(), noise, 1.0, mode="witness")[:, 0]
    assert np.sqrt(np.mean((witness - strat) ** 2)) < 0.1


def test_partition_mode_is_midpoint(coarse_grid):
    psi = ProcessSampler.markov(lambda t, w: np.sin(w[:, :1]), 1)
    drift = ProcessSampler.markov(lambda t, w: -0.5 * np.sin(w[:, :1]), 1)
    diff = ProcessSampler.markov(lambda t, w: np.cos(w[:, :1])[:, :, None], 1, columns=1)
    integrand = StratIntegrand(psi, SemimartingaleWitness(drift, diff, [0.0]))
    noise = sample_cylindrical(coarse_grid, 1, 3, 100)
    np.testing.assert_allclose(
        integrate_stratonovich_1d(integrand, noise, 1.0), midpoint_sum(integrand, noise, 1.0), atol=1e-12
    )


def test_missing_or_wrong_witness(coarse_grid):
    with pytest.raises(MissingWitnessError):
        StratIntegrand(ProcessSampler.brownian())
    with pytest.raises(MissingWitnessError):
        integrate_stratonovich_1d(ProcessSampler.brownian(), sample_cylindrical(coarse_grid, 1, 0, 2), 1.0)
    wrong = StratIntegrand(
        ProcessSampler.brownian([3.0]),
        SemimartingaleWitness(ConstantSampler([0.0]), ConstantSampler([[1.0]]), [0.0]),
    )
    with pytest.raises(WitnessMismatchError):
        integrate_stratonovich_1d(wrong, sample_cylindrical(coarse_grid, 1, 0, 50), 1.0)


def test_localized_integrand(coarse_grid):
    noise = sample_cylindrical(coarse_grid, 1, 4, 30)
    loc = StratIntegrand.brownian().localize(StoppingRule(0.5, functional=lambda v: np.zeros(v.shape[:2])))
    out = integrate_stratonovich_1d(loc, noise, 1.0)[:, 0]
    np.testing.assert_allclose(out, noise.W_at(0.5)[:, 0] ** 2 / 2, atol=1e-12)
    assert StratIntegrand.brownian().localize(StoppingRule(math.inf)).sampler.name == "brownian"


def test_cylindrical_constant(coarse_grid):
    noise = sample_cylindrical(coarse_grid, 2, 5, 10)
    B = np.array([[1.0, -2.0]])
    out = strat_cylindrical(StratIntegrand.constant(B), noise, 1.0)[:, 0]
    np.testing.assert_allclose(out, noise.W_at(1.0) @ B[0], atol=1e-12)
    assert np.allclose(strat_cylindrical(StratIntegrand.constant(B), noise, 1.0, mode="witness")[:, 0], out)


def test_ito_correction_linear():
    G = DiffusionFamily([np.array([[0.0, 1.0], [0.0, 0.0]]), 2.0 * np.eye(2)])
    phi = np.array([1.0, 3.0])
    expected = 0.5 * (G.matrices[0] @ G.matrices[0] @ phi + G.matrices[1] @ G.matrices[1] @ phi)
    np.testing.assert_allclose(ito_correction(G, phi), expected)
    nil = DiffusionFamily([np.array([[0.0, 1.0], [0.0, 0.0]])])
    assert np.all(ito_correction(nil, phi) == 0)


def test_collapse_examples():
    assert collapse_constant_noise([3.0, 4.0]) == 5.0
    assert collapse_constant_noise([1.0]) == 1.0
    assert collapse_constant_noise([0.0, 0.0]) == 0.0
    noise = sample_cylindrical(TimeGrid(0.1, 10), 2, 0, 2)
    with pytest.raises(ValueError):
        collapsed_driver([0.0, 0.0], noise)


def test_collapse_qv(grid):
    s, ref = collapse_qv([0.6, 0.8], 1.0, 2000, grid=grid, seed=1, n_boot=100)
    assert ref == pytest.approx(1.0)
    assert abs(s.mean - ref) <= 0.05


def test_collapse_moments(coarse_grid):
    rec = collapse_moments_check([3.0, 4.0], 1.0, 20_000, grid=coarse_grid, seed=2, n_boot=200)
    assert rec.passed
    assert rec.analytic_m2 == pytest.approx(25 * (math.e - 1))
    assert rec.cylindrical_m2.mean == pytest.approx(rec.analytic_m2, rel=0.1)
