"""Tests for the linearized flux subsystem, its transfer matrices, and certificates."""

import dataclasses
from collections.abc import Callable

import numpy as np
import pytest

from gridpassivity.dynamics import SystemModel, SystemState, active_power, assemble_model
from gridpassivity.equilibrium import Equilibrium
from gridpassivity.exceptions import PoleError, SingularFluxJacobianError
from gridpassivity.linear import (
    CertificateKind,
    LinearModel,
    certify_negative_imaginary,
    certify_positive_real,
    hat_is_stable,
    linearize,
    linearize_at,
    linearized_swing_modes,
    ni_matrix,
    pr_matrix,
    residue_is_passive,
    torque_coefficient_matrix,
    transfer_eval,
)
from gridpassivity.network import AdmittanceMatrix
from gridpassivity.params import MachineParams

StateFactory = Callable[[SystemModel, int], SystemState]
SEEDS = range(5)
FREQ_GRID = list(np.logspace(-3, 3, 121))


@pytest.fixture(scope="module")
def lossless_linear(lossless_model: SystemModel, lossless_equilibrium: Equilibrium) -> LinearModel:
    return linearize(lossless_model, lossless_equilibrium)


@pytest.fixture(scope="module")
def lossy_linear(lossy_model: SystemModel, lossy_equilibrium: Equilibrium) -> LinearModel:
    return linearize(lossy_model, lossy_equilibrium)


def test_flux_matrices_scale_exactly(lossy_linear: LinearModel, lossy_model: SystemModel) -> None:
    """A and B are the hat matrices scaled row-wise by X - X'."""
    gap = np.concatenate([lossy_model.x_gap, lossy_model.x_gap])[:, np.newaxis]
    np.testing.assert_array_equal(lossy_linear.A, gap * lossy_linear.Ahat)
    np.testing.assert_array_equal(lossy_linear.B, gap * lossy_linear.Bhat)
    assert lossy_linear.n_flux == 6
    assert lossy_linear.n_angles == 6


@pytest.mark.parametrize("seed", SEEDS)
def test_lossless_symmetry(
    lossless_model: SystemModel,
    random_state: StateFactory,
    seed: int,
) -> None:
    """Without conductance L is symmetric and Bhat = -C^T at any state."""
    lm = linearize_at(lossless_model, random_state(lossless_model, seed))
    np.testing.assert_allclose(lm.L, lm.L.T, atol=1e-10)
    np.testing.assert_allclose(lm.Bhat, -lm.C.T, atol=1e-10)
    np.testing.assert_allclose(lm.Ahat, lm.Ahat.T, atol=1e-10)


def test_lossy_asymmetry(lossy_linear: LinearModel) -> None:
    """Conductance makes L asymmetric."""
    assert float(np.max(np.abs(lossy_linear.L - lossy_linear.L.T))) > 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_power_jacobians_match_finite_differences(
    lossy_model: SystemModel,
    random_state: StateFactory,
    seed: int,
) -> None:
    """L = dP/ddelta and C = dP/dE by central differences."""
    state = random_state(lossy_model, seed)
    lm = linearize_at(lossy_model, state)
    h = 1e-6
    n, n_ta = lossy_model.size, len(lossy_model.two_axis_idx)

    L_fd = np.empty((n, n))
    for k in range(n):
        step = np.zeros(n)
        step[k] = h
        up = active_power(lossy_model, dataclasses.replace(state, delta=state.delta + step))
        down = active_power(lossy_model, dataclasses.replace(state, delta=state.delta - step))
        L_fd[:, k] = (up - down) / (2 * h)
    np.testing.assert_allclose(lm.L, L_fd, atol=1e-5)

    C_fd = np.empty((n, 2 * n_ta))
    flux = np.concatenate([state.e_q, state.e_d])
    for k in range(2 * n_ta):
        step = np.zeros(2 * n_ta)
        step[k] = h
        plus, minus = flux + step, flux - step
        up = active_power(
            lossy_model,
            dataclasses.replace(state, e_q=plus[:n_ta], e_d=plus[n_ta:]),
        )
        down = active_power(
            lossy_model,
            dataclasses.replace(state, e_q=minus[:n_ta], e_d=minus[n_ta:]),
        )
        C_fd[:, k] = (up - down) / (2 * h)
    np.testing.assert_allclose(lm.C, C_fd, atol=1e-5)


def test_transfer_limits(lossy_linear: LinearModel) -> None:
    """Hhat tends to -L at high frequency and s H(s) to L0 at the origin."""
    assert lossy_linear.L0 is not None
    scale = float(np.max(np.abs(lossy_linear.L)))
    Hhat, _ = transfer_eval(lossy_linear, 1e8j)
    np.testing.assert_allclose(Hhat, -lossy_linear.L, atol=1e-5 * scale)

    s = 1e-8j
    _, H = transfer_eval(lossy_linear, s)
    np.testing.assert_allclose(s * H, lossy_linear.L0, atol=1e-6 * scale)


def test_origin_is_a_pole(lossy_linear: LinearModel) -> None:
    """H cannot be evaluated at s = 0."""
    with pytest.raises(PoleError):
        transfer_eval(lossy_linear, 0.0)


def test_single_machine() -> None:
    """One machine has no angle coupling at all."""
    machine = MachineParams.model_validate(
        {
            "bus": 1,
            "kind": "two_axis",
            "M": 0.1,
            "D": 0.01,
            "X": 1.0,
            "Xprime": 0.2,
            "tau_d": 6.0,
            "tau_q": 0.5,
            "V_fd": 1.2,
        },
    )
    adm = AdmittanceMatrix(
        Y=np.zeros((1, 1), dtype=np.complex128),
        beta=np.zeros(1),
        bus_ids=(1,),
    )
    model = assemble_model([machine], adm, omega0=120.0 * np.pi)
    state = SystemState(
        delta=np.array([0.4]),
        omega=np.zeros(1),
        e_q=np.array([1.0]),
        e_d=np.array([0.1]),
    )
    lm = linearize_at(model, state)
    np.testing.assert_allclose(lm.L, 0.0, atol=1e-15)
    np.testing.assert_allclose(lm.B, 0.0, atol=1e-15)
    assert hat_is_stable(lm)
    report = torque_coefficient_matrix(lm)
    assert report.deflated_eigs.size == 0
    assert report.positive_eig_product == 1.0


def test_negative_imaginary_lossless(lossless_linear: LinearModel) -> None:
    """The lossless angle-to-power map is negative imaginary."""
    assert hat_is_stable(lossless_linear)
    cert = certify_negative_imaginary(lossless_linear, FREQ_GRID)
    assert cert.kind is CertificateKind.NEGATIVE_IMAGINARY
    assert cert.verdict, cert.reason
    assert cert.residue_check is None
    assert cert.omegas.shape == cert.lambdas.shape == (121,)


def test_negative_imaginary_fails_with_losses(lossy_linear: LinearModel) -> None:
    """Conductance destroys the property, with a finite witness frequency."""
    cert = certify_negative_imaginary(lossy_linear, FREQ_GRID)
    assert not cert.verdict
    assert np.isfinite(cert.worst_omega)
    assert cert.worst_lambda < 0.0
    assert "omega" in cert.reason


@pytest.mark.parametrize("omega", [1e-2, 0.7, 3.0, 50.0])
def test_ni_matrix_frequency_pairing(lossy_linear: LinearModel, omega: float) -> None:
    """The NI matrix at -omega is the negated conjugate of the one at omega."""
    plus = ni_matrix(lossy_linear, omega)
    np.testing.assert_allclose(plus, plus.conj().T, atol=1e-12)
    np.testing.assert_allclose(ni_matrix(lossy_linear, -omega), -plus.conj(), atol=1e-10)


@pytest.mark.parametrize("omega", [1e-2, 0.7, 3.0, 50.0])
def test_pr_matrix_is_scaled_ni_matrix(lossy_linear: LinearModel, omega: float) -> None:
    """H + H^H equals the NI matrix divided by omega."""
    np.testing.assert_allclose(
        pr_matrix(lossy_linear, omega),
        ni_matrix(lossy_linear, omega) / omega,
        rtol=1e-9,
        atol=1e-12,
    )


def test_positive_real_lossless(lossless_linear: LinearModel) -> None:
    """Frequency to power is positive real inside the convex set."""
    cert = certify_positive_real(lossless_linear, FREQ_GRID)
    assert cert.kind is CertificateKind.POSITIVE_REAL
    assert cert.verdict, cert.reason
    assert cert.residue_check is True


def test_positive_real_fails_on_residue_alone(lossless_linear: LinearModel) -> None:
    """A negated origin residue fails even when the grid passes."""
    assert lossless_linear.L0 is not None
    flipped = dataclasses.replace(lossless_linear, L0=-lossless_linear.L0)
    assert not residue_is_passive(flipped)
    cert = certify_positive_real(flipped, FREQ_GRID)
    assert not cert.verdict
    assert cert.residue_check is False
    assert "residue" in cert.reason
    assert "negative eigenvalue" not in cert.reason


def test_torque_matrix_at_lossless_equilibrium(lossless_linear: LinearModel) -> None:
    """L0 has zero row sums and a positive deflated spectrum."""
    report = torque_coefficient_matrix(lossless_linear)
    np.testing.assert_allclose(report.L0.sum(axis=1), 0.0, atol=1e-9)
    assert report.sym_gap <= 1e-9
    assert report.deflated_eigs.size == 5
    assert np.all(report.deflated_eigs.real > 0.0)
    assert report.positive_eig_product > 0.0


def test_torque_matrix_rows_sum_to_zero_with_losses(lossy_linear: LinearModel) -> None:
    """Shift invariance survives conductance."""
    assert lossy_linear.L0 is not None
    np.testing.assert_allclose(lossy_linear.L0.sum(axis=1), 0.0, atol=1e-9)


def test_singular_flux_jacobian(lossless_linear: LinearModel, lossless_model: SystemModel) -> None:
    """Without L0 the torque summary and swing modes are unavailable."""
    singular = dataclasses.replace(lossless_linear, L0=None)
    assert singular.a_singular
    assert not residue_is_passive(singular)
    with pytest.raises(SingularFluxJacobianError):
        torque_coefficient_matrix(singular)
    with pytest.raises(SingularFluxJacobianError):
        linearized_swing_modes(lossless_model, singular)


def test_swing_modes_are_stable(lossless_linear: LinearModel, lossless_model: SystemModel) -> None:
    """Swing dynamics driven by a positive L0 decay."""
    modes = linearized_swing_modes(lossless_model, lossless_linear)
    assert modes.size == 11
    assert float(np.max(modes.real)) < 0.0
