"""Tests for the strain energy, its derivatives, and the Bregman storage."""

import dataclasses
from collections.abc import Callable

import numpy as np
import pytest

from gridpassivity.dynamics import (
    SystemModel,
    SystemState,
    active_power,
    build_model,
    integrate,
    voltage_terms,
)
from gridpassivity.energy import (
    bregman_storage,
    classical_strain_energy,
    energy_angle_mask,
    energy_coordinates,
    hessian_U,
    membership_E,
    strain_energy,
    strain_energy_gradient,
    strain_energy_hessian,
)
from gridpassivity.equilibrium import Equilibrium
from gridpassivity.exceptions import LossyNetworkError
from gridpassivity.linalg import deflated_eigvalsh
from gridpassivity.linear import linearize, linearize_at
from gridpassivity.params import NetworkSpec

SpecFactory = Callable[..., NetworkSpec]
StateFactory = Callable[[SystemModel, int], SystemState]
SEEDS = range(10)


def _from_coordinates(model: SystemModel, z: np.ndarray, omega: np.ndarray) -> SystemState:
    n, n_ta = model.size, len(model.two_axis_idx)
    return SystemState(delta=z[:n], omega=omega, e_q=z[n : n + n_ta], e_d=z[n + n_ta :])


def _numeric_gradient(model: SystemModel, state: SystemState, h: float = 1e-6) -> np.ndarray:
    z = energy_coordinates(model, state)
    grad = np.empty_like(z)
    for k in range(z.size):
        step = np.zeros_like(z)
        step[k] = h
        up = strain_energy(model, _from_coordinates(model, z + step, state.omega))
        down = strain_energy(model, _from_coordinates(model, z - step, state.omega))
        grad[k] = (up - down) / (2 * h)
    return grad


def _numeric_hessian(model: SystemModel, state: SystemState, h: float = 1e-5) -> np.ndarray:
    z = energy_coordinates(model, state)
    hess = np.empty((z.size, z.size))
    for k in range(z.size):
        step = np.zeros_like(z)
        step[k] = h
        up = strain_energy_gradient(model, _from_coordinates(model, z + step, state.omega))
        down = strain_energy_gradient(model, _from_coordinates(model, z - step, state.omega))
        hess[:, k] = (up - down) / (2 * h)
    return hess


def test_energy_vanishes_without_flux(make_spec: SpecFactory) -> None:
    """With every machine two-axis and every EMF zero, U = 0."""
    model = build_model(make_spec(5, 3, lossless=True))
    state = SystemState(
        delta=np.linspace(-0.5, 0.5, 5),
        omega=np.zeros(5),
        e_q=np.zeros(5),
        e_d=np.zeros(5),
    )
    assert strain_energy(model, state) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("seed", SEEDS)
def test_energy_is_shift_invariant(
    lossless_model: SystemModel,
    random_state: StateFactory,
    seed: int,
) -> None:
    """A uniform angle shift leaves U unchanged."""
    state = random_state(lossless_model, seed)
    moved = dataclasses.replace(state, delta=state.delta - 0.77)
    assert strain_energy(lossless_model, moved) == pytest.approx(
        strain_energy(lossless_model, state),
        abs=1e-12,
    )


@pytest.mark.parametrize("seed", SEEDS)
def test_gradient_matches_finite_differences(
    make_spec: SpecFactory,
    random_state: StateFactory,
    seed: int,
) -> None:
    """The analytic gradient agrees with central differences of U."""
    model = build_model(make_spec(5, seed, lossless=True))
    state = random_state(model, seed)
    np.testing.assert_allclose(
        strain_energy_gradient(model, state),
        _numeric_gradient(model, state),
        rtol=1e-6,
        atol=1e-6,
    )


@pytest.mark.parametrize("seed", SEEDS)
def test_angle_gradient_is_power(
    lossless_model: SystemModel,
    random_state: StateFactory,
    seed: int,
) -> None:
    """dU/ddelta = P and dU/dE_q = curvature E_q - g_q."""
    state = random_state(lossless_model, seed)
    grad = strain_energy_gradient(lossless_model, state)
    n, n_ta = lossless_model.size, len(lossless_model.two_axis_idx)
    np.testing.assert_allclose(grad[:n], active_power(lossless_model, state), atol=1e-10)

    g_q, g_d = voltage_terms(lossless_model, state)
    ta = lossless_model.two_axis_idx
    curvature = lossless_model.flux_curvature
    np.testing.assert_allclose(grad[n : n + n_ta], curvature * state.e_q - g_q[ta], atol=1e-10)
    np.testing.assert_allclose(grad[n + n_ta :], curvature * state.e_d - g_d[ta], atol=1e-10)


@pytest.mark.parametrize("seed", SEEDS)
def test_hessian_matches_finite_differences(
    make_spec: SpecFactory,
    random_state: StateFactory,
    seed: int,
) -> None:
    """The analytic Hessian agrees with differences of the gradient."""
    model = build_model(make_spec(4, seed, lossless=True))
    state = random_state(model, seed)
    hess = strain_energy_hessian(model, state)
    np.testing.assert_allclose(hess, hess.T, atol=1e-12)
    np.testing.assert_allclose(hess, _numeric_hessian(model, state), rtol=1e-4, atol=1e-4)


@pytest.mark.parametrize("seed", SEEDS)
def test_hessian_block_structure(
    lossless_model: SystemModel,
    random_state: StateFactory,
    seed: int,
) -> None:
    """The Hessian is [[L, C], [C^T, -Ahat]] and C = -Bhat^T without conductance."""
    state = random_state(lossless_model, seed)
    hess = strain_energy_hessian(lossless_model, state)
    lm = linearize_at(lossless_model, state)
    expected = np.block([[lm.L, lm.C], [lm.C.T, -lm.Ahat]])
    np.testing.assert_allclose(hess, expected, atol=1e-9)
    np.testing.assert_allclose(lm.C, -lm.Bhat.T, atol=1e-9)


def test_storage_vanishes_at_equilibrium(
    lossless_model: SystemModel,
    lossless_equilibrium: Equilibrium,
) -> None:
    """W(z*) = 0 and the rate and supply are zero there."""
    storage = bregman_storage(lossless_model, lossless_equilibrium.z_star, lossless_equilibrium)
    assert storage.W == pytest.approx(0.0, abs=1e-12)
    assert storage.dWdt == pytest.approx(0.0, abs=1e-8)
    assert storage.supply == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_storage_nonnegative_near_convex_equilibrium(
    lossless_model: SystemModel,
    lossless_equilibrium: Equilibrium,
    seed: int,
) -> None:
    """W >= 0 in a small ball around an equilibrium inside the convex set."""
    rng = np.random.default_rng(seed)
    star = lossless_equilibrium.z_star
    z = energy_coordinates(lossless_model, star)
    z = z + 1e-4 * rng.uniform(-1.0, 1.0, z.size)
    state = _from_coordinates(lossless_model, z, star.omega)
    assert bregman_storage(lossless_model, state, lossless_equilibrium).W >= -1e-10


@pytest.mark.parametrize("seed", SEEDS)
def test_dissipation_inequality_pointwise(
    lossless_model: SystemModel,
    lossless_equilibrium: Equilibrium,
    random_state: StateFactory,
    seed: int,
) -> None:
    """dW/dt never exceeds the supply u (P - P*)."""
    storage = bregman_storage(
        lossless_model,
        random_state(lossless_model, seed),
        lossless_equilibrium,
    )
    assert storage.dWdt <= storage.supply + 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_dissipation_inequality_along_trajectories(
    lossless_model: SystemModel,
    lossless_equilibrium: Equilibrium,
    seed: int,
) -> None:
    """The dissipation inequality holds at every sample of perturbed trajectories."""
    rng = np.random.default_rng(100 + seed)
    lay = lossless_model.layout
    x0 = lossless_equilibrium.x_star + 0.05 * rng.uniform(-1.0, 1.0, lay.size)
    x0[lay.omega] = 1e-3 * rng.uniform(-1.0, 1.0, len(lossless_model.inertial_idx))
    traj = integrate(lossless_model, x0, lossless_equilibrium.inputs, (0.0, 1.0), 0.1)
    for state in traj.states():
        storage = bregman_storage(lossless_model, state, lossless_equilibrium)
        assert storage.dWdt <= storage.supply + 1e-6


def test_classical_gradient_vanishes_at_uniform_angles(lossless_model: SystemModel) -> None:
    """Equal angles carry no power through the classical network."""
    btilred = lossless_model.reduced.Btilred
    assert btilred is not None
    energy = classical_strain_energy(btilred, lossless_model.v_fd, np.full(6, 0.2))
    np.testing.assert_allclose(energy.gradient, 0.0, atol=1e-12)
    np.testing.assert_allclose(energy.hessian.sum(axis=1), 0.0, atol=1e-12)


def test_classical_hessian_convex_within_quarter_turn(lossless_model: SystemModel) -> None:
    """Angles pairwise within pi/2 give a positive semidefinite Laplacian."""
    btilred = lossless_model.reduced.Btilred
    assert btilred is not None
    rng = np.random.default_rng(11)
    for _ in range(500):
        delta = rng.uniform(0.0, 0.5 * np.pi, lossless_model.size)
        energy = classical_strain_energy(btilred, lossless_model.v_fd, delta)
        assert deflated_eigvalsh(energy.hessian)[0] >= -1e-10


def test_classical_hessian_indefinite_beyond_quarter_turn() -> None:
    """A pair separated by more than pi/2 loses convexity."""
    btilred = np.array([[-3.0, -1.0], [-1.0, -3.0]])
    energy = classical_strain_energy(btilred, np.ones(2), np.array([0.0, 2.5]))
    eigs = deflated_eigvalsh(energy.hessian)
    assert eigs[0] == pytest.approx(2.0 * np.cos(2.5))
    assert eigs[0] < 0.0


def test_torque_matrix_is_classical_hessian(
    lossless_model: SystemModel,
    lossless_equilibrium: Equilibrium,
) -> None:
    """On the flux steady state L0 equals the Hessian of the classical strain energy."""
    btilred = lossless_model.reduced.Btilred
    assert btilred is not None
    lm = linearize(lossless_model, lossless_equilibrium)
    assert lm.L0 is not None
    energy = classical_strain_energy(
        btilred,
        lossless_equilibrium.v_fd,
        lossless_equilibrium.z_star.delta,
    )
    scale = float(np.max(np.abs(lm.L0)))
    np.testing.assert_allclose(lm.L0, energy.hessian, atol=1e-8 * scale)


def test_membership_at_interior_point(
    lossless_model: SystemModel,
    lossless_equilibrium: Equilibrium,
) -> None:
    """A near-uniform-angle equilibrium lies inside the convex set."""
    verdict = membership_E(lossless_model, lossless_equilibrium)
    assert verdict.in_e
    assert not verdict.boundary
    assert verdict.lambda_min_hess > 0.0
    assert verdict.lambda_max_ahat < 0.0
    assert verdict.lambda_min_l0 > 0.0
    assert verdict.lambda_min_classical is not None
    assert verdict.lambda_min_classical > 0.0


def test_nonconvex_state(lossless_model: SystemModel) -> None:
    """A generator at pi from the rest breaks convexity."""
    n_ta = len(lossless_model.two_axis_idx)
    delta = np.zeros(lossless_model.size)
    delta[lossless_model.two_axis_idx[1]] = np.pi
    state = SystemState(
        delta=delta,
        omega=np.zeros(len(lossless_model.inertial_idx)),
        e_q=np.ones(n_ta),
        e_d=np.zeros(n_ta),
    )
    report = hessian_U(lossless_model, state)
    assert report.lambda_min < 0.0
    assert not report.hess_psd
    assert energy_angle_mask(lossless_model).sum() == lossless_model.size


def test_lossy_network_is_refused(lossy_model: SystemModel, random_state: StateFactory) -> None:
    """Strain energy needs a lossless network."""
    state = random_state(lossy_model, 0)
    with pytest.raises(LossyNetworkError):
        strain_energy(lossy_model, state)
    with pytest.raises(LossyNetworkError):
        strain_energy_hessian(lossy_model, state)
