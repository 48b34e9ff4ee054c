"""Strain energy functions, Bregman storage, and the convex equilibrium set.

On a lossless network the strain energy

    U(z) = sum_i X_i |E_i|^2 / (2 X'_i (X_i - X'_i))
           + 1/2 sum_ij Bred_ij (E_qi E_qj + E_di E_dj) cos(delta_ij)
           + 1/2 sum_ij Bred_ij (E_qi E_dj - E_di E_qj) sin(delta_ij)

has ``dU/ddelta = P``, and its Bregman divergence about an equilibrium is a storage
function for the map from frequency to power. Only two-axis fluxes enter the quadratic
term; constant-EMF machines contribute through the coupling sum alone.
"""

from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass

import numpy as np

from .dynamics import SystemModel, SystemState, active_power, internal_emf, rhs
from .exceptions import ConsistencyError, LossyNetworkError
from .linalg import ComplexArray, FloatArray, deflated_eigvalsh, extreme_eigenvalues, symmetrize
from .linear import linearize

if t.TYPE_CHECKING:
    from numpy.typing import NDArray

    from .equilibrium import Equilibrium

logger = logging.getLogger(__name__)


def _require_lossless(model: SystemModel) -> None:
    if not model.lossless:
        raise LossyNetworkError("strain energy is only defined on a lossless network")


def energy_coordinates(model: SystemModel, state: SystemState) -> FloatArray:
    """``z = (delta, E_q, E_d)``, the arguments of ``U``."""
    del model
    return np.concatenate([state.delta, state.e_q, state.e_d]).astype(np.float64)


def energy_angle_mask(model: SystemModel) -> NDArray[np.bool_]:
    """Angle entries of :func:`energy_coordinates`."""
    n_flux = 2 * len(model.two_axis_idx)
    return np.concatenate([np.ones(model.size, dtype=bool), np.zeros(n_flux, dtype=bool)])


def _rotated_coupling(model: SystemModel, state: SystemState) -> tuple[ComplexArray, ComplexArray]:
    # S_ij = Bred_ij exp(j delta_ij); U's coupling term is Re(E^H S E) / 2.
    phase = np.exp(1j * state.delta)
    S = model.reduced.Bred * np.outer(phase, phase.conj())
    return S, internal_emf(model, state)


def strain_energy(model: SystemModel, state: SystemState) -> float:
    """Strain energy ``U(z)``.

    Raises:
        LossyNetworkError: If the reduced network has conductance.

    """
    _require_lossless(model)
    S, emf = _rotated_coupling(model, state)
    quadratic = 0.5 * np.sum(model.flux_curvature * (state.e_q**2 + state.e_d**2))
    return float(quadratic + 0.5 * np.real(np.vdot(emf, S @ emf)))


def strain_energy_gradient(model: SystemModel, state: SystemState) -> FloatArray:
    """Gradient of ``U`` over ``(delta, E_q, E_d)``."""
    _require_lossless(model)
    S, emf = _rotated_coupling(model, state)
    ta = model.two_axis_idx
    W = emf.conj()[:, np.newaxis] * S * emf[np.newaxis, :]
    s = S @ emf
    return np.concatenate(
        [
            -np.imag(W.sum(axis=1)),
            model.flux_curvature * state.e_q + s.real[ta],
            model.flux_curvature * state.e_d + s.imag[ta],
        ],
    )


def strain_energy_hessian(model: SystemModel, state: SystemState) -> FloatArray:
    """Analytic Hessian of ``U`` over ``(delta, E_q, E_d)``."""
    _require_lossless(model)
    S, emf = _rotated_coupling(model, state)
    ta = model.two_axis_idx
    W = (emf.conj()[:, np.newaxis] * S * emf[np.newaxis, :]).real
    H_dd = W - np.diag(W.sum(axis=1))

    s = S @ emf
    cross = emf.conj()[:, np.newaxis] * S
    H_dEq = -np.imag(np.diag(s) + cross)[:, ta]
    H_dEd = (np.real(np.diag(s)) - np.real(cross))[:, ta]
    H_dE = np.hstack([H_dEq, H_dEd])

    c = S.real[np.ix_(ta, ta)]
    sn = S.imag[np.ix_(ta, ta)]
    curvature = np.concatenate([model.flux_curvature, model.flux_curvature])
    H_EE = np.block([[c, -sn], [sn, c]]) + np.diag(curvature)
    return symmetrize(np.block([[H_dd, H_dE], [H_dE.T, H_EE]]))


@dataclass(frozen=True, eq=False)
class EnergyReport:
    """Strain energy with its derivatives at one state."""

    U: float
    gradU: FloatArray
    hessU: FloatArray
    hess_psd: bool
    lambda_min: float


def hessian_U(model: SystemModel, state: SystemState) -> EnergyReport:  # noqa: N802
    """Evaluate ``U``, its gradient, and its Hessian with a deflated PSD verdict."""
    hess = strain_energy_hessian(model, state)
    eigs = deflated_eigvalsh(hess, energy_angle_mask(model))
    lam_min = float(eigs[0]) if eigs.size else 0.0
    lam_max = float(eigs[-1]) if eigs.size else 0.0
    return EnergyReport(
        U=strain_energy(model, state),
        gradU=strain_energy_gradient(model, state),
        hessU=hess,
        hess_psd=lam_min >= -model.settings.eps_psd * max(1.0, abs(lam_max)),
        lambda_min=lam_min,
    )


@dataclass(frozen=True)
class StorageEvaluation:
    """Bregman storage and supply rate at one state."""

    W: float
    dWdt: float
    supply: float


def bregman_storage(
    model: SystemModel,
    state: SystemState,
    equilibrium: Equilibrium,
) -> StorageEvaluation:
    """Storage ``W = U(z) - U(z*) - grad U(z*) (z - z*)`` and its rate along the vector field.

    The input is the angle velocity ``delta'`` (``omega0 omega`` for machines with inertia)
    and the output is ``P``; the equilibrium input is zero.
    """
    _require_lossless(model)
    star = equilibrium.z_star
    z = energy_coordinates(model, state)
    z_star = energy_coordinates(model, star)
    grad_star = strain_energy_gradient(model, star)
    W = strain_energy(model, state) - strain_energy(model, star) - grad_star @ (z - z_star)

    lay = model.layout
    xdot = rhs(model, lay.join(state), equilibrium.inputs)
    zdot = np.concatenate([xdot[lay.delta], xdot[lay.flux]])
    dWdt = (strain_energy_gradient(model, state) - grad_star) @ zdot

    u = xdot[lay.delta]
    y = active_power(model, state)
    y_star = active_power(model, star)
    return StorageEvaluation(W=float(W), dWdt=float(dWdt), supply=float(u @ (y - y_star)))


@dataclass(frozen=True, eq=False)
class ClassicalEnergy:
    """Strain energy of the constant-EMF network behind synchronous reactances."""

    value: float
    gradient: FloatArray
    hessian: FloatArray


def classical_strain_energy(
    btilred: FloatArray,
    v_fd: FloatArray,
    delta: FloatArray,
) -> ClassicalEnergy:
    """``U~ = 1/2 sum_ij V_i V_j Btilred_ij cos(delta_ij)``; the Hessian is a graph Laplacian."""
    diff = delta[:, np.newaxis] - delta[np.newaxis, :]
    weights = np.outer(v_fd, v_fd) * btilred
    coupled = weights * np.cos(diff)
    return ClassicalEnergy(
        value=float(0.5 * coupled.sum()),
        gradient=-np.sum(weights * np.sin(diff), axis=1),
        hessian=coupled - np.diag(coupled.sum(axis=1)),
    )


@dataclass(frozen=True)
class MembershipVerdict:
    """Three equivalent readings of membership in the convex equilibrium set."""

    in_e: bool
    lambda_min_hess: float
    lambda_max_ahat: float
    lambda_min_l0: float
    lambda_min_classical: float | None
    boundary: bool


def membership_E(model: SystemModel, equilibrium: Equilibrium) -> MembershipVerdict:  # noqa: N802
    """Decide whether the deflated Hessian of ``U`` is positive definite at ``z*``.

    The verdict is cross-checked against ``(Ahat < 0, L0 > 0)`` and, when the
    synchronous-reactance reduction exists, ``(Ahat < 0, hess U~ > 0)``.

    Raises:
        ConsistencyError: If the readings disagree away from the boundary band.
        LossyNetworkError: If the reduced network has conductance.

    """
    _require_lossless(model)
    settings = model.settings
    eps, band = settings.eps_interior, settings.boundary_band
    report = hessian_U(model, equilibrium.z_star)
    lm = linearize(model, equilibrium)

    _, lam_ahat = extreme_eigenvalues(lm.Ahat) if lm.n_flux else (0.0, -np.inf)
    lam_l0 = float(deflated_eigvalsh(lm.L0)[0]) if lm.L0 is not None and model.size > 1 else np.nan
    lam_cl: float | None = None
    btilred = model.reduced.Btilred
    if btilred is not None and model.size > 1:
        classical = classical_strain_energy(btilred, model.v_fd, equilibrium.z_star.delta)
        lam_cl = float(deflated_eigvalsh(classical.hessian)[0])

    in_e = report.lambda_min > eps
    via_l0 = lam_ahat < -eps and lam_l0 > eps
    probes = [report.lambda_min, lam_ahat, lam_l0] + ([lam_cl] if lam_cl is not None else [])
    boundary = any(np.isfinite(v) and abs(v) < band for v in probes) or np.isnan(lam_l0)

    if not boundary:
        if via_l0 != in_e:
            raise ConsistencyError(
                f"Hessian verdict {in_e} disagrees with (Ahat, L0) verdict {via_l0}",
            )
        if lam_cl is not None and (lam_ahat < -eps and lam_cl > eps) != in_e:
            raise ConsistencyError(
                f"Hessian verdict {in_e} disagrees with the classical-network verdict",
            )
    logger.debug(
        "membership: in_e=%s lambda_hess=%.3e lambda_Ahat=%.3e lambda_L0=%.3e",
        in_e,
        report.lambda_min,
        lam_ahat,
        lam_l0,
    )
    return MembershipVerdict(
        in_e=in_e,
        lambda_min_hess=report.lambda_min,
        lambda_max_ahat=float(lam_ahat),
        lambda_min_l0=lam_l0,
        lambda_min_classical=lam_cl,
        boundary=boundary,
    )
