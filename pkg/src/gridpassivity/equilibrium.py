"""Equilibria on the generator-angle grid, their stability, and their classification.

With the generator angles fixed, the unknowns are the angles of the remaining machines
(loads) and the two-axis fluxes. Newton's method solves load power balance together with
the flux steady state; generator mechanical powers are read back from the solution.
"""

from __future__ import annotations

import enum
import logging
import math
import typing as t
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .dynamics import (
    Inputs,
    SystemModel,
    SystemState,
    build_model,
    flux_matrices,
    power_jacobians,
    rhs_jacobian,
)
from .energy import hessian_U, membership_E
from .exceptions import CalibrationError, ConsistencyError
from .linalg import ComplexArray, FloatArray, deflated_eigvals, reciprocal_condition
from .linear import linearize, torque_coefficient_matrix
from .params import SweepSettings

if t.TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from .params import MachineKind, NetworkSpec

logger = logging.getLogger(__name__)

SINGULAR_JACOBIAN_RCOND: t.Final[float] = 1e-14
MIN_STEP: t.Final[float] = 1.0 / 1024.0
SWEEP_GENERATORS: t.Final[int] = 3


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """A solved operating point and the constant inputs that hold it."""

    z_star: SystemState
    x_star: FloatArray
    p_m_star: FloatArray
    v_fd: FloatArray
    residual: float
    converged: bool
    iterations: int
    reason: str = ""

    @property
    def inputs(self) -> Inputs:
        """Inputs under which ``z_star`` is stationary."""
        return Inputs(p_m=self.p_m_star, v_fd=self.v_fd)


def flux_steady_state(
    model: SystemModel,
    delta: FloatArray,
    v_fd: FloatArray | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Solve the flux equations for ``(E_q, E_d)`` at fixed angles.

    The flux right-hand side is affine in ``E``, so one linear solve suffices.
    """
    n_ta = len(model.two_axis_idx)
    v_fd = model.v_fd if v_fd is None else np.asarray(v_fd, dtype=np.float64)
    if n_ta == 0:
        return np.empty(0), np.empty(0)
    zero = SystemState(
        delta=np.asarray(delta, dtype=np.float64),
        omega=np.zeros(len(model.inertial_idx)),
        e_q=np.zeros(n_ta),
        e_d=np.zeros(n_ta),
    )
    jac = power_jacobians(model, zero, v_fd)
    A, _ = flux_matrices(model, jac)
    ta = model.two_axis_idx
    gap = np.concatenate([model.x_gap, model.x_gap])
    offset = gap * np.concatenate([jac.g.real[ta], jac.g.imag[ta]])
    offset[:n_ta] += v_fd[ta]
    flux = np.linalg.solve(A, -offset)
    return flux[:n_ta], flux[n_ta:]


def _free_machines(model: SystemModel) -> NDArray[np.intp]:
    fixed = set(model.layout.two_axis)
    return np.array([i for i in range(model.size) if i not in fixed], dtype=np.intp)


def solve_equilibrium(  # noqa: PLR0913, C901
    model: SystemModel,
    generator_angles: Sequence[float],
    *,
    load_refs: Sequence[float] | None = None,
    guess: Equilibrium | None = None,
    v_fd: FloatArray | None = None,
) -> Equilibrium:
    """Solve for the equilibrium with the two-axis machine angles held at ``generator_angles``.

    Args:
        model: System model.
        generator_angles: Angles of the two-axis machines, in machine order.
        load_refs: Power references of the other machines; defaults to their ``P_m``.
        guess: A nearby equilibrium to start from; its angles are shifted to the new
            reference. Without one the solver starts flat.
        v_fd: Field voltages overriding the model's.

    Returns:
        The equilibrium. Failure to converge is reported through ``converged`` and
        ``reason``, never raised.

    """
    settings = model.settings
    fixed = model.two_axis_idx
    free = _free_machines(model)
    if len(fixed) == 0:
        raise ValueError("at least one two-axis machine is needed to fix the angle reference")
    angles = np.asarray(generator_angles, dtype=np.float64)
    if angles.shape != (len(fixed),):
        raise ValueError(f"expected {len(fixed)} generator angles, got {angles.shape}")
    v_fd = model.v_fd.copy() if v_fd is None else np.asarray(v_fd, dtype=np.float64)
    refs = model.p_m[free] if load_refs is None else np.asarray(load_refs, dtype=np.float64)
    n_free, n_ta = len(free), len(fixed)

    delta = np.zeros(model.size)
    delta[fixed] = angles
    if guess is not None:
        shift = angles[0] - guess.z_star.delta[fixed[0]]
        delta[free] = guess.z_star.delta[free] + shift
        e_q, e_d = guess.z_star.e_q.copy(), guess.z_star.e_d.copy()
    else:
        delta[free] = angles[0]
        e_q, e_d = flux_steady_state(model, delta, v_fd)
    x = np.concatenate([delta[free], e_q, e_d])

    curvature = np.concatenate([model.x_sync[fixed] / model.x_transient] * 2)
    gap = np.concatenate([model.x_gap, model.x_gap])
    field_drive = np.concatenate([v_fd[fixed], np.zeros(n_ta)])

    def unpack(vec: FloatArray) -> SystemState:
        d = delta.copy()
        d[free] = vec[:n_free]
        return SystemState(
            delta=d,
            omega=np.zeros(len(model.inertial_idx)),
            e_q=vec[n_free : n_free + n_ta],
            e_d=vec[n_free + n_ta :],
        )

    def evaluate(vec: FloatArray) -> tuple[FloatArray, FloatArray]:
        state = unpack(vec)
        jac = power_jacobians(model, state, v_fd)
        A, B = flux_matrices(model, jac)
        flux = np.concatenate([state.e_q, state.e_d])
        g_ta = np.concatenate([jac.g.real[fixed], jac.g.imag[fixed]])
        residual = np.concatenate(
            [jac.P[free] - refs, -curvature * flux + gap * g_ta + field_drive],
        )
        J = np.block(
            [
                [jac.dP_ddelta[np.ix_(free, free)], jac.dP_dE[free]],
                [B[:, free], A],
            ],
        )
        return residual, J

    def result(vec: FloatArray, norm: float, iterations: int, reason: str) -> Equilibrium:
        state = unpack(vec)
        jac = power_jacobians(model, state, v_fd)
        p_m_star = jac.P.copy()
        p_m_star[free] = refs
        converged = not reason
        if not converged:
            logger.debug("Newton failed after %d iterations: %s", iterations, reason)
        return Equilibrium(
            z_star=state,
            x_star=model.layout.join(state),
            p_m_star=p_m_star,
            v_fd=v_fd,
            residual=norm,
            converged=converged,
            iterations=iterations,
            reason=reason,
        )

    residual, J = evaluate(x)
    norm = float(np.max(np.abs(residual))) if residual.size else 0.0
    for iteration in range(settings.max_iter + 1):
        logger.debug("Newton iteration %d: residual %.3e", iteration, norm)
        if not np.isfinite(norm):
            return result(x, norm, iteration, "residual is not finite")
        if norm <= settings.newton_tol:
            return result(x, norm, iteration, "")
        if iteration == settings.max_iter:
            break
        if reciprocal_condition(J) < SINGULAR_JACOBIAN_RCOND:
            return result(x, norm, iteration, "singular Newton Jacobian")
        step = np.linalg.solve(J, -residual)
        alpha = 1.0
        while True:
            trial = x + alpha * step
            trial_residual, trial_J = evaluate(trial)
            trial_norm = float(np.max(np.abs(trial_residual)))
            if trial_norm < norm or alpha <= MIN_STEP:
                break
            alpha *= 0.5
            logger.debug("Halving Newton step to %.4g", alpha)
        if not trial_norm < norm:
            return result(x, norm, iteration, "line search stalled")
        x, residual, J, norm = trial, trial_residual, trial_J, trial_norm
    return result(x, norm, settings.max_iter, f"no convergence in {settings.max_iter} iterations")


def calibrate_field_voltages(model: SystemModel, target: float = 1.0) -> SystemModel:
    """Choose the unset two-axis field voltages so that ``|E| = target`` with all generator
    angles at zero.

    Raises:
        CalibrationError: If no start value leads to a solution.

    """
    idx = list(model.uncalibrated)
    if not idx:
        return model
    positions = [model.layout.two_axis.index(i) for i in idx]
    angles = np.zeros(len(model.two_axis_idx))
    last: Equilibrium | None = None

    def mismatch(values: FloatArray) -> FloatArray:
        nonlocal last
        v_fd = model.v_fd.copy()
        v_fd[idx] = values
        eq = solve_equilibrium(model, angles, guess=last, v_fd=v_fd)
        if not eq.converged:
            eq = solve_equilibrium(model, angles, v_fd=v_fd)
        if not eq.converged:
            raise CalibrationError(f"no equilibrium for V_fd={values}: {eq.reason}")
        last = eq
        return np.hypot(eq.z_star.e_q, eq.z_star.e_d)[positions] - target

    for attempt, start in enumerate((1.0, 1.5, 2.0, 3.0)):
        if attempt:
            logger.warning("Retrying field-voltage calibration from V_fd=%.2f", start)
        last = None
        try:
            sol = scipy.optimize.root(mismatch, np.full(len(idx), start), method="hybr")
        except CalibrationError as exc:
            logger.debug("Calibration attempt failed: %s", exc)
            continue
        if sol.success and float(np.max(np.abs(sol.fun))) < 1e-9:  # noqa: PLR2004
            v_fd = model.v_fd.copy()
            v_fd[idx] = sol.x
            logger.info(
                "Calibrated field voltages %s",
                {model.machines[i].bus: round(float(v_fd[i]), 12) for i in idx},
            )
            return model.with_field_voltages(v_fd)
    raise CalibrationError(f"field-voltage calibration failed for machines at {idx}")


def prepare_model(
    spec: NetworkSpec,
    *,
    load_model: MachineKind | None = None,
    lossless: bool | None = None,
) -> SystemModel:
    """Build a ready-to-use model: optional lossless and load-model switches, reduction,
    and field-voltage calibration."""
    lossless = spec.sweep.lossless if lossless is None else lossless
    if lossless:
        spec = spec.lossless()
    if load_model is not None:
        spec = spec.with_load_model(load_model)
    return calibrate_field_voltages(build_model(spec))


def generator_angles(
    model: SystemModel,
    delta21: float,
    delta31: float,
    reference: float = 0.0,
) -> FloatArray:
    """Angles of the three generators at grid point ``(delta21, delta31)``."""
    if len(model.two_axis_idx) != SWEEP_GENERATORS:
        raise ValueError(
            f"the angle grid needs {SWEEP_GENERATORS} two-axis machines, "
            f"the model has {len(model.two_axis_idx)}",
        )
    return np.array([reference, reference + delta21, reference + delta31])


@dataclass(frozen=True, eq=False)
class ClosedLoopSpectrum:
    """Closed-loop Jacobian at an equilibrium and its spectrum."""

    jacobian: FloatArray
    eigenvalues: ComplexArray
    deflated: ComplexArray
    max_re_eig: float

    @property
    def zero_mode(self) -> float:
        """Smallest eigenvalue magnitude of the undeflated Jacobian."""
        return float(np.min(np.abs(self.eigenvalues)))


def closed_loop_jacobian(model: SystemModel, equilibrium: Equilibrium) -> ClosedLoopSpectrum:
    """Jacobian of the full ODE at ``z*`` with the uniform angle shift deflated."""
    J = rhs_jacobian(model, equilibrium.x_star, equilibrium.inputs)
    eigs = np.linalg.eigvals(J).astype(np.complex128)
    deflated = deflated_eigvals(J, model.layout.angle_mask())
    return ClosedLoopSpectrum(
        jacobian=J,
        eigenvalues=eigs,
        deflated=deflated,
        max_re_eig=float(np.max(deflated.real)) if deflated.size else -math.inf,
    )


class CellStatus(str, enum.Enum):
    """Classification of one grid point."""

    INFEASIBLE = "Infeasible"
    UNSTABLE_FEASIBLE = "UnstableFeasible"
    STABLE_OUTSIDE = "StableOutside"
    IN_E = "InE"
    IN_E_PLUS = "InEplus"


MEMBER_STATUSES: t.Final = frozenset({CellStatus.IN_E, CellStatus.IN_E_PLUS})


@dataclass(frozen=True)
class SweepCell:
    """Verdicts at one grid point."""

    delta21: float
    delta31: float
    status: CellStatus
    torque_metric: float
    max_re_eig: float
    residual: float
    stable: bool = False
    in_e_plus: bool = False
    in_e: bool | None = None
    boundary: bool = False

    @property
    def feasible(self) -> bool:
        """Whether an equilibrium was found."""
        return self.status is not CellStatus.INFEASIBLE

    @property
    def member(self) -> bool:
        """Whether the cell lies in the equilibrium set the model was classified against."""
        return self.status in MEMBER_STATUSES


def classify(
    model: SystemModel,
    equilibrium: Equilibrium,
    delta21: float = math.nan,
    delta31: float = math.nan,
) -> SweepCell:
    """Classify an equilibrium.

    Lossless models are tested for membership in the convex strain-energy set, lossy
    models for ``A`` and ``-L0`` both being stable.
    """
    settings = model.settings
    if not equilibrium.converged:
        return SweepCell(
            delta21, delta31, CellStatus.INFEASIBLE, math.nan, math.nan, equilibrium.residual,
        )

    spectrum = closed_loop_jacobian(model, equilibrium)
    stable = spectrum.max_re_eig < -settings.stability_tol
    probes = [spectrum.max_re_eig]

    lm = linearize(model, equilibrium)
    lam_a = float(np.max(np.linalg.eigvals(lm.A).real)) if lm.n_flux else -math.inf
    probes.append(lam_a)
    if lm.L0 is None:
        torque, in_plus = math.nan, False
        probes.append(0.0)
    else:
        report = torque_coefficient_matrix(lm, settings.eps_interior)
        torque = report.positive_eig_product
        lam_l0 = float(report.deflated_eigs.real.min()) if report.deflated_eigs.size else math.inf
        probes.append(lam_l0)
        in_plus = lam_a < -settings.eps_interior and lam_l0 > settings.eps_interior

    in_e: bool | None = None
    disputed = False
    if model.lossless:
        try:
            verdict = membership_E(model, equilibrium)
        except ConsistencyError as exc:
            logger.warning(
                "Cell (%.4f, %.4f) kept as boundary, readings disagree: %s",
                delta21,
                delta31,
                exc,
            )
            lam_hess = hessian_U(model, equilibrium.z_star).lambda_min
            disputed = True
        else:
            lam_hess = verdict.lambda_min_hess
        in_e = lam_hess > settings.eps_interior
        probes.append(lam_hess)
        member_status = CellStatus.IN_E if in_e else None
    else:
        member_status = CellStatus.IN_E_PLUS if in_plus else None

    if member_status is not None:
        status = member_status
    elif stable:
        status = CellStatus.STABLE_OUTSIDE
    else:
        status = CellStatus.UNSTABLE_FEASIBLE
    boundary = disputed or any(
        abs(v) < settings.boundary_band for v in probes if np.isfinite(v)
    )
    if boundary:
        logger.debug("Cell (%.4f, %.4f) lies in the boundary band", delta21, delta31)
    return SweepCell(
        delta21=delta21,
        delta31=delta31,
        status=status,
        torque_metric=torque,
        max_re_eig=spectrum.max_re_eig,
        residual=equilibrium.residual,
        stable=stable,
        in_e_plus=in_plus,
        in_e=in_e,
        boundary=boundary,
    )


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Classified grid; ``cells[i][j]`` sits at ``(axis[i], axis[j])``."""

    axis: FloatArray
    cells: tuple[tuple[SweepCell, ...], ...]
    lossless: bool
    reference: float = 0.0

    def flat(self) -> list[SweepCell]:
        """Cells ordered by ``delta21``, then ``delta31``."""
        return [cell for row in self.cells for cell in row]

    def status_matrix(self) -> list[list[str]]:
        """Status values as a nested list."""
        return [[cell.status.value for cell in row] for row in self.cells]


@dataclass
class _Grid:
    model: SystemModel
    axis: FloatArray
    reference: float
    continuation: bool
    equilibria: list[list[Equilibrium | None]] = field(default_factory=list)
    cells: list[list[SweepCell | None]] = field(default_factory=list)

    def __post_init__(self) -> None:
        n = len(self.axis)
        self.equilibria = [[None] * n for _ in range(n)]
        self.cells = [[None] * n for _ in range(n)]

    def solve(self, i: int, j: int, neighbour: tuple[int, int] | None) -> None:
        d21, d31 = float(self.axis[i]), float(self.axis[j])
        angles = generator_angles(self.model, d21, d31, self.reference)
        guess = None
        if self.continuation and neighbour is not None:
            guess = self.equilibria[neighbour[0]][neighbour[1]]
            if guess is not None and not guess.converged:
                guess = None
        eq = solve_equilibrium(self.model, angles, guess=guess)
        if not eq.converged and guess is not None:
            eq = solve_equilibrium(self.model, angles)
        self.equilibria[i][j] = eq
        self.cells[i][j] = classify(self.model, eq, d21, d31)

    def march(self, fixed_row: int | None, centre: int) -> None:
        n = len(self.axis)
        for k in (*range(centre + 1, n), *range(centre - 1, -1, -1)):
            towards = k - 1 if k > centre else k + 1
            if fixed_row is None:
                self.solve(centre, k, (centre, towards))
            else:
                self.solve(k, fixed_row, (towards, fixed_row))


def sweep(
    model: SystemModel,
    settings: SweepSettings | None = None,
    *,
    continuation: bool | None = None,
    workers: int | None = None,
    reference: float = 0.0,
) -> SweepResult:
    """Classify every point of the ``(delta21, delta31)`` grid.

    With continuation, the centre column is marched outward first and every row then
    marches outward from its centre cell, each cell starting from its converged neighbour
    toward the centre. Rows only read the centre column, so they run on ``workers``
    threads with results independent of the worker count.
    """
    settings = settings or SweepSettings()
    continuation = settings.continuation if continuation is None else continuation
    workers = settings.workers if workers is None else workers
    axis = np.asarray(settings.axis(), dtype=np.float64)
    centre = int(np.argmin(np.abs(axis)))
    grid = _Grid(model, axis, reference, continuation)

    grid.solve(centre, centre, None)
    grid.march(None, centre)
    logger.info("Solved centre column of the %dx%d grid", len(axis), len(axis))

    def run_row(j: int) -> None:
        grid.march(j, centre)
        logger.info("Finished row delta31=%.4f", axis[j])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_row, range(len(axis))))
    else:
        for j in range(len(axis)):
            run_row(j)

    cells = tuple(tuple(c for c in row if c is not None) for row in grid.cells)
    return SweepResult(axis=axis, cells=cells, lossless=model.lossless, reference=reference)


@dataclass(frozen=True)
class AgreementReport:
    """Agreement between set membership and small-signal stability over a sweep."""

    compared: int
    agreeing: int
    boundary_excluded: int
    mismatches: tuple[tuple[float, float], ...]
    mismatches_adjacent: bool

    @property
    def fraction(self) -> float:
        """Share of compared cells that agree."""
        return self.agreeing / self.compared if self.compared else 1.0


def sweep_agreement(result: SweepResult) -> AgreementReport:
    """Compare membership with stability on feasible cells outside the boundary band.

    A mismatch counts as adjacent when one of its eight neighbours has the opposite
    membership.
    """
    cells = result.cells
    n = len(cells)
    compared = agreeing = excluded = 0
    mismatches: list[tuple[float, float]] = []
    adjacent = True
    for i in range(n):
        for j in range(n):
            cell = cells[i][j]
            if not cell.feasible:
                continue
            if cell.boundary:
                excluded += 1
                continue
            compared += 1
            if cell.member == cell.stable:
                agreeing += 1
                continue
            mismatches.append((cell.delta21, cell.delta31))
            neighbours = [
                cells[a][b]
                for a in range(max(i - 1, 0), min(i + 2, n))
                for b in range(max(j - 1, 0), min(j + 2, n))
                if (a, b) != (i, j)
            ]
            if all(other.member == cell.member for other in neighbours):
                adjacent = False
    if mismatches:
        logger.warning("%d cells disagree between membership and stability", len(mismatches))
    return AgreementReport(
        compared=compared,
        agreeing=agreeing,
        boundary_excluded=excluded,
        mismatches=tuple(mismatches),
        mismatches_adjacent=adjacent,
    )
