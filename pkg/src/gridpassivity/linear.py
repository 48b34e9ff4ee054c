"""Linearized electromagnetic subsystem and its frequency-domain certificates.

Around an equilibrium the flux and power deviations obey

    tau dE' = A dE + B ddelta,    dP = C dE + L ddelta,

with the transfer matrices ``Hhat(s) = -C (s tau - A)^-1 B - L`` from angle to power and
``H(s) = -Hhat(s) / s`` from frequency to power. ``L0 = L - C A^-1 B`` is the
synchronizing torque coefficient matrix.
"""

from __future__ import annotations

import enum
import logging
import math
import typing as t
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dynamics import SystemModel, SystemState, flux_hat_matrices, power_jacobians
from .exceptions import PoleError, SingularFluxJacobianError
from .linalg import (
    ComplexArray,
    FloatArray,
    deflated_eigvals,
    deflated_eigvalsh,
    reciprocal_condition,
    symmetrize,
)

if t.TYPE_CHECKING:
    from collections.abc import Sequence

    from .equilibrium import Equilibrium

logger = logging.getLogger(__name__)

SINGULAR_RCOND: t.Final[float] = 1e-12


@dataclass(frozen=True, eq=False)
class LinearModel:
    """System matrices at one operating point.

    ``E`` coordinates cover the two-axis machines, q block first; ``delta`` covers every
    machine.
    """

    tau: FloatArray
    A: FloatArray
    B: FloatArray
    C: FloatArray
    L: FloatArray
    Ahat: FloatArray
    Bhat: FloatArray
    L0: FloatArray | None
    at: SystemState
    lossless: bool

    @property
    def a_singular(self) -> bool:
        """Whether ``A`` was too ill-conditioned to form ``L0``."""
        return self.L0 is None

    @property
    def n_flux(self) -> int:
        """Number of flux coordinates."""
        return self.A.shape[0]

    @property
    def n_angles(self) -> int:
        """Number of angle coordinates."""
        return self.L.shape[0]


def linearize_at(
    model: SystemModel,
    state: SystemState,
    v_fd: FloatArray | None = None,
) -> LinearModel:
    """Linearize at an arbitrary state, equilibrium or not."""
    jac = power_jacobians(model, state, v_fd)
    Ahat, Bhat = flux_hat_matrices(model, jac)
    gap = np.concatenate([model.x_gap, model.x_gap])[:, np.newaxis]
    A = gap * Ahat
    B = gap * Bhat
    C = jac.dP_dE
    L = jac.dP_ddelta

    L0: FloatArray | None
    if A.size == 0:
        L0 = L.copy()
    elif reciprocal_condition(A) < SINGULAR_RCOND:
        logger.warning("Flux Jacobian A is singular; L0 is undefined at this point")
        L0 = None
    else:
        L0 = L - C @ scipy.linalg.solve(A, B)

    return LinearModel(
        tau=np.diag(np.concatenate([model.tau_d, model.tau_q])),
        A=A,
        B=B,
        C=C,
        L=L,
        Ahat=Ahat,
        Bhat=Bhat,
        L0=L0,
        at=state,
        lossless=model.lossless,
    )


def linearize(model: SystemModel, equilibrium: Equilibrium) -> LinearModel:
    """Linearize at a solved equilibrium."""
    return linearize_at(model, equilibrium.z_star, equilibrium.v_fd)


def hat_is_stable(lm: LinearModel) -> bool:
    """Whether ``tau^-1 A`` is Hurwitz, so ``Hhat`` has no unstable poles."""
    if lm.n_flux == 0:
        return True
    eigs = scipy.linalg.eigvals(lm.A, lm.tau)
    return bool(np.max(eigs.real) < 0.0)


def transfer_eval(lm: LinearModel, s: complex) -> tuple[ComplexArray, ComplexArray]:
    """Evaluate ``(Hhat(s), H(s))``.

    Raises:
        PoleError: If ``s`` is a pole of either transfer matrix.

    """
    s = complex(s)
    if s == 0:
        raise PoleError("H has a pole at s = 0")
    if lm.n_flux == 0:
        Hhat = -lm.L.astype(np.complex128)
    else:
        pencil = s * lm.tau - lm.A
        if reciprocal_condition(pencil) < SINGULAR_RCOND:
            raise PoleError(f"s tau - A is singular at s = {s}")
        Hhat = -lm.C @ np.linalg.solve(pencil, lm.B.astype(np.complex128)) - lm.L
    return Hhat, -Hhat / s


def ni_matrix(lm: LinearModel, omega: float) -> ComplexArray:
    """``j (Hhat(j omega) - Hhat(j omega)^H)``, Hermitian by construction."""
    Hhat, _ = transfer_eval(lm, 1j * omega)
    return 1j * (Hhat - Hhat.conj().T)


def pr_matrix(lm: LinearModel, omega: float) -> ComplexArray:
    """``H(j omega) + H(j omega)^H``."""
    _, H = transfer_eval(lm, 1j * omega)
    return H + H.conj().T


class CertificateKind(str, enum.Enum):
    """Frequency-domain property being certified."""

    NEGATIVE_IMAGINARY = "negative_imaginary"
    POSITIVE_REAL = "positive_real"


@dataclass(frozen=True, eq=False)
class FreqCertificate:
    """Grid-based verdict on a frequency-domain property."""

    kind: CertificateKind
    verdict: bool
    worst_omega: float
    worst_lambda: float
    residue_check: bool | None
    reason: str = ""
    omegas: FloatArray = field(default_factory=lambda: np.empty(0))
    lambdas: FloatArray = field(default_factory=lambda: np.empty(0))


def _scan(
    lm: LinearModel,
    freq_grid: Sequence[float],
    matrix: t.Callable[[LinearModel, float], ComplexArray],
    tol: float,
) -> tuple[bool, float, float, FloatArray, FloatArray]:
    omegas = np.asarray(freq_grid, dtype=np.float64)
    lambdas = np.empty_like(omegas)
    passed = True
    for k, omega in enumerate(omegas):
        herm = matrix(lm, float(omega))
        herm = 0.5 * (herm + herm.conj().T)
        eigs = np.linalg.eigvalsh(herm)
        lambdas[k] = eigs[0]
        scale = max(1.0, float(np.max(np.abs(eigs))))
        if eigs[0] < -tol * scale:
            passed = False
    worst = int(np.argmin(lambdas))
    return passed, float(omegas[worst]), float(lambdas[worst]), omegas, lambdas


def certify_negative_imaginary(
    lm: LinearModel,
    freq_grid: Sequence[float],
    tol: float = 1e-8,
) -> FreqCertificate:
    """Check ``j (Hhat - Hhat^H) >= 0`` over the frequency grid.

    An unstable ``Hhat`` fails without a scan.
    """
    kind = CertificateKind.NEGATIVE_IMAGINARY
    if not hat_is_stable(lm):
        return FreqCertificate(kind, False, math.nan, math.nan, None, reason="unstable Hhat")
    passed, w_omega, w_lambda, omegas, lambdas = _scan(lm, freq_grid, ni_matrix, tol)
    reason = "" if passed else f"negative eigenvalue {w_lambda:.3e} at omega={w_omega:.6g}"
    logger.info("Negative-imaginary certificate: %s %s", passed, reason)
    return FreqCertificate(kind, passed, w_omega, w_lambda, None, reason, omegas, lambdas)


def residue_is_passive(lm: LinearModel, tol: float = 1e-8) -> bool:
    """Check that the origin residue ``L0`` is symmetric and PSD on the deflated subspace."""
    if lm.L0 is None:
        return False
    scale = max(1.0, float(np.max(np.abs(lm.L0))))
    if float(np.max(np.abs(lm.L0 - lm.L0.T))) > tol * scale:
        return False
    if lm.n_angles < 2:  # noqa: PLR2004
        return True
    eigs = deflated_eigvalsh(lm.L0)
    return bool(eigs[0] >= -tol * max(1.0, abs(float(eigs[-1]))))


def certify_positive_real(
    lm: LinearModel,
    freq_grid: Sequence[float],
    tol: float = 1e-8,
) -> FreqCertificate:
    """Check ``H + H^H >= 0`` over the grid together with the origin residue.

    Only the pole at the origin is checked for a passive residue; a stable ``Hhat``
    leaves ``H`` no other pole on the imaginary axis.
    """
    kind = CertificateKind.POSITIVE_REAL
    if not hat_is_stable(lm):
        return FreqCertificate(kind, False, math.nan, math.nan, None, reason="unstable Hhat")
    passed, w_omega, w_lambda, omegas, lambdas = _scan(lm, freq_grid, pr_matrix, tol)
    residue = residue_is_passive(lm, tol)
    reasons = []
    if not passed:
        reasons.append(f"negative eigenvalue {w_lambda:.3e} at omega={w_omega:.6g}")
    if not residue:
        reasons.append("residue L0 at the origin is not symmetric PSD")
    logger.info("Positive-real certificate: grid=%s residue=%s", passed, residue)
    return FreqCertificate(
        kind,
        passed and residue,
        w_omega,
        w_lambda,
        residue,
        "; ".join(reasons),
        omegas,
        lambdas,
    )


@dataclass(frozen=True, eq=False)
class TorqueReport:
    """Synchronizing torque coefficients and their deflated spectrum."""

    L0: FloatArray
    sym_gap: float
    deflated_eigs: ComplexArray
    positive_eig_product: float


def torque_coefficient_matrix(lm: LinearModel, eps: float = 1e-8) -> TorqueReport:
    """Summarize ``L0``; the product of its positive deflated eigenvalues is the sweep metric.

    Raises:
        SingularFluxJacobianError: If ``A`` is singular.

    """
    if lm.L0 is None:
        raise SingularFluxJacobianError("A is singular at this operating point")
    L0 = lm.L0
    sym_gap = float(np.max(np.abs(L0 - L0.T))) if L0.size else 0.0
    if lm.n_angles < 2:  # noqa: PLR2004
        return TorqueReport(L0, sym_gap, np.empty(0, dtype=np.complex128), 1.0)
    eigs = deflated_eigvals(symmetrize(L0) if lm.lossless else L0)
    eigs = eigs[np.argsort(eigs.real)]
    positive = eigs[eigs.real > eps]
    product = float(np.prod(positive).real) if positive.size else 0.0
    return TorqueReport(L0, sym_gap, eigs, product)


def linearized_swing_modes(model: SystemModel, lm: LinearModel) -> ComplexArray:
    """Deflated spectrum of the swing network driven by ``L0``.

    Machines with inertia follow ``M ddelta'' + D ddelta' + omega0 L0 ddelta = 0`` and
    droop machines ``D ddelta' = -omega0 L0 ddelta``.
    """
    if lm.L0 is None:
        raise SingularFluxJacobianError("A is singular at this operating point")
    n = model.size
    inertial, droop = model.inertial_idx, model.droop_idx
    m = len(inertial)
    J = np.zeros((n + m, n + m))
    J[inertial, n + np.arange(m)] = model.omega0
    J[droop, :n] = -(model.omega0 / model.damping[droop])[:, np.newaxis] * lm.L0[droop]
    J[n:, :n] = -lm.L0[inertial] / model.inertia[:, np.newaxis]
    J[n:, n:] = np.diag(-model.damping[inertial] / model.inertia)
    mask = np.zeros(n + m, dtype=bool)
    mask[:n] = True
    return deflated_eigvals(J, mask)
