import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from densegan.fisher import (
    CriticBatch,
    FisherState,
    critic_objective,
    critic_objective_tensor,
    generator_objective,
    generator_objective_tensor,
    ipm_estimate,
    lambda_update,
    omega_hat,
)
from densegan.tensor import Tensor

finite = st.floats(-10, 10, allow_nan=False)
vectors = st.lists(finite, min_size=1, max_size=20)


def test_ipm_examples():
    assert ipm_estimate(CriticBatch([1, 1], [0, 0])) == 1.0
    assert ipm_estimate(CriticBatch([0.3, -2], [0.3, -2])) == 0.0


def test_ipm_brute_force(rng):
    real, fake = rng.normal(size=256), rng.normal(size=256)
    brute = sum(real) / 256 - sum(fake) / 256
    assert abs(ipm_estimate(CriticBatch(real, fake)) - brute) < 1e-12


def test_omega_examples():
    assert omega_hat(CriticBatch([1, 1], [0, 0])) == 0.5
    assert omega_hat(CriticBatch([0, 0], [0, 0])) == 0.0
    assert omega_hat(CriticBatch([2], [1])) == 2.5


def test_critic_objective_examples():
    assert critic_objective(CriticBatch([1, 1], [0, 0]), FisherState(0.0, 1.0)) == pytest.approx(0.875, abs=1e-15)
    b = CriticBatch([1.0], [-1.0])  # omega exactly 1
    assert critic_objective(b, FisherState(3.0, 7.0)) == ipm_estimate(b)
    b = CriticBatch([0.5, 2.0], [1.0, -1.5])
    assert critic_objective(b, FisherState(2.0, 0.0)) == pytest.approx(ipm_estimate(b) + 2 * (1 - omega_hat(b)))


def test_generator_objective_examples():
    assert generator_objective([0, 0]) == 0
    assert generator_objective([3, 1]) == -2


def test_empty_and_nonfinite_batches():
    with pytest.raises(ValueError):
        CriticBatch([], [1.0])
    with pytest.raises(ValueError):
        CriticBatch([np.nan], [1.0])
    with pytest.raises(ValueError):
        generator_objective([])
    with pytest.raises(ValueError):
        FisherState(0.0, -1.0)


def test_lambda_update_examples():
    assert lambda_update(FisherState(0.0, 1e-6), 1.0).lam == 0.0
    assert lambda_update(FisherState(0.0, 0.5), 0.0).lam == -0.5
    s, c = FisherState(0.0, 0.25), 0.4
    for step in range(1, 6):
        s = lambda_update(s, 1 + c)
        assert s.lam == pytest.approx(step * 0.25 * c, abs=1e-15)
    assert s.rho == 0.25


@settings(max_examples=50, deadline=None)
@given(real=vectors, fake=vectors, lam=finite, rho=st.floats(0, 100))
def test_objective_is_composition_of_terms(real, fake, lam, rho):
    b, s = CriticBatch(real, fake), FisherState(lam, rho)
    ipm = np.mean(real) - np.mean(fake)
    om = (np.mean(np.square(real)) + np.mean(np.square(fake))) / 2
    expected = ipm + lam * (1 - om) - rho / 2 * (om - 1) ** 2
    assert critic_objective(b, s) == pytest.approx(expected, rel=1e-12, abs=1e-12 * (1 + abs(lam) + rho) * (1 + om) ** 2)


@settings(max_examples=50, deadline=None)
@given(real=vectors, fake=vectors, lam=finite, rho=st.floats(0, 10))
def test_lagrangian_derivative_in_lambda(real, fake, lam, rho):
    b = CriticBatch(real, fake)
    h = 1e-3  # L is affine in lambda, so the central difference is exact up to rounding
    fd = (critic_objective(b, FisherState(lam + h, rho)) - critic_objective(b, FisherState(lam - h, rho))) / (2 * h)
    scale = 1 + abs(critic_objective(b, FisherState(lam, rho)))
    assert abs(fd - (1 - omega_hat(b))) < 1e-9 * scale / h


@pytest.mark.parametrize("rho", [0.0, 1.0, 100.0])
def test_rho_invariance_at_unit_omega(rho):
    b = CriticBatch([1.0, -1.0, 1.0], [np.sqrt(0.5), -np.sqrt(1.5)])
    assert omega_hat(b) == pytest.approx(1.0, abs=1e-15)
    base = critic_objective(b, FisherState(0.7, 0.0))
    assert abs(critic_objective(b, FisherState(0.7, rho)) - base) < 1e-9


@settings(max_examples=50, deadline=None)
@given(lam=finite, rho=st.floats(1e-3, 10), omega=st.floats(0, 5))
def test_lambda_update_fixed_point_iff_unit_omega(lam, rho, omega):
    if omega != 1.0:
        assume(abs(1 - omega) > 1e-9)
        assert lambda_update(FisherState(lam, rho), omega).lam != lam
    assert lambda_update(FisherState(lam, rho), 1.0).lam == lam


def test_tensor_objective_matches_scalar(rng):
    real, fake = rng.normal(size=5), rng.normal(size=7)
    s = FisherState(0.3, 2.0)
    lagr, ipm, om = critic_objective_tensor(Tensor(real), Tensor(fake), s)
    b = CriticBatch(real, fake)
    assert lagr.item() == pytest.approx(critic_objective(b, s), rel=1e-13)
    assert ipm.item() == pytest.approx(ipm_estimate(b), rel=1e-13)
    assert om.item() == pytest.approx(omega_hat(b), rel=1e-13)
    assert generator_objective_tensor(Tensor(fake)).item() == pytest.approx(generator_objective(fake), rel=1e-13)
