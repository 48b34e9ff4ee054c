"""Kron-reduced ODE of a mixed network of two-axis, classical, and droop machines.

Every machine ``i`` owns an internal EMF ``E_i = E_qi + j E_di`` in its own rotor frame.
Two-axis machines integrate both flux components; classical and droop machines hold
``E_i = V_fd,i`` algebraically. With ``T_ij = Gamma^-1_ij exp(j(delta_i - delta_j))``,
``k = Re T`` and ``h = Im T``, the reduced network gives

    g = T E,    P_i = Im(conj(E_i) g_i),

and the state equations are

    delta'  = omega0 omega                          (machines with inertia)
    M omega' = -D omega - P + P_m
    D delta' = omega0 (P_m - P)                     (droop machines)
    tau_d E_q' = -(X/X') E_q + (X - X') g_q + V_fd
    tau_q E_d' = -(X/X') E_d + (X - X') g_d
"""

from __future__ import annotations

import dataclasses
import logging
import typing as t
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import IntegrationError, SusceptanceSignError
from .linalg import ComplexArray, FloatArray
from .network import (
    AdmittanceMatrix,
    ReducedNetwork,
    build_admittance,
    build_btilred,
    eliminate_zero_injection,
    kron_reduce,
)
from .params import MachineKind, MachineParams, NetworkSpec, SolverSettings

if t.TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

    from numpy.typing import NDArray
    from scipy.integrate import OdeSolution

logger = logging.getLogger(__name__)

IntegrationMethod = t.Literal["RK45", "DOP853", "Radau", "LSODA"]


@dataclass(frozen=True)
class SystemState:
    """Structured view of a state vector."""

    delta: FloatArray
    omega: FloatArray
    e_q: FloatArray
    e_d: FloatArray


@dataclass(frozen=True)
class Inputs:
    """Constant inputs: mechanical or reference power and field voltage per machine."""

    p_m: FloatArray
    v_fd: FloatArray


@dataclass(frozen=True)
class StateLayout:
    """Index map of the state vector ``(delta, omega, E_q, E_d)`` blocked by machine kind."""

    n_machines: int
    inertial: tuple[int, ...]
    two_axis: tuple[int, ...]
    droop: tuple[int, ...]

    @property
    def delta(self) -> slice:
        """Angles of all machines."""
        return slice(0, self.n_machines)

    @property
    def omega(self) -> slice:
        """Frequency deviations of machines with inertia."""
        start = self.n_machines
        return slice(start, start + len(self.inertial))

    @property
    def e_q(self) -> slice:
        """q-axis flux of two-axis machines."""
        start = self.omega.stop
        return slice(start, start + len(self.two_axis))

    @property
    def e_d(self) -> slice:
        """d-axis flux of two-axis machines."""
        start = self.e_q.stop
        return slice(start, start + len(self.two_axis))

    @property
    def flux(self) -> slice:
        """Both flux blocks."""
        return slice(self.e_q.start, self.e_d.stop)

    @property
    def size(self) -> int:
        """Length of the state vector."""
        return self.e_d.stop

    def angle_mask(self) -> NDArray[np.bool_]:
        """Entries of the uniform rotor-angle shift direction."""
        mask = np.zeros(self.size, dtype=bool)
        mask[self.delta] = True
        return mask

    def split(self, x: FloatArray) -> SystemState:
        """View a state vector as a :class:`SystemState`."""
        return SystemState(
            delta=x[self.delta],
            omega=x[self.omega],
            e_q=x[self.e_q],
            e_d=x[self.e_d],
        )

    def join(self, state: SystemState) -> FloatArray:
        """Pack a :class:`SystemState` into a vector."""
        return np.concatenate([state.delta, state.omega, state.e_q, state.e_d]).astype(np.float64)


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Immutable model data shared by every analysis."""

    machines: tuple[MachineParams, ...]
    admittance: AdmittanceMatrix
    reduced: ReducedNetwork
    omega0: float
    v_fd: FloatArray
    settings: SolverSettings = SolverSettings()
    uncalibrated: tuple[int, ...] = ()

    @cached_property
    def layout(self) -> StateLayout:
        """State vector index map."""
        kinds = [m.kind for m in self.machines]
        return StateLayout(
            n_machines=len(self.machines),
            inertial=tuple(i for i, m in enumerate(self.machines) if m.has_inertia),
            two_axis=tuple(i for i, k in enumerate(kinds) if k is MachineKind.TWO_AXIS),
            droop=tuple(i for i, k in enumerate(kinds) if k is MachineKind.DROOP),
        )

    @property
    def size(self) -> int:
        """Number of machines."""
        return len(self.machines)

    @property
    def bus_ids(self) -> tuple[int, ...]:
        """Bus of each machine."""
        return tuple(m.bus for m in self.machines)

    @cached_property
    def inertial_idx(self) -> NDArray[np.intp]:
        """Machine indices with a frequency state."""
        return np.array(self.layout.inertial, dtype=np.intp)

    @cached_property
    def two_axis_idx(self) -> NDArray[np.intp]:
        """Machine indices with flux states."""
        return np.array(self.layout.two_axis, dtype=np.intp)

    @cached_property
    def droop_idx(self) -> NDArray[np.intp]:
        """Machine indices with first-order angle dynamics."""
        return np.array(self.layout.droop, dtype=np.intp)

    @cached_property
    def x_sync(self) -> FloatArray:
        """Synchronous reactances of all machines."""
        return np.array([m.x_sync for m in self.machines])

    @cached_property
    def x_transient(self) -> FloatArray:
        """Transient reactances of the two-axis machines."""
        return self.reduced.reactances[self.two_axis_idx]

    @cached_property
    def x_gap(self) -> FloatArray:
        """``X - X'`` of the two-axis machines."""
        return self.x_sync[self.two_axis_idx] - self.x_transient

    @cached_property
    def flux_curvature(self) -> FloatArray:
        """``X / (X' (X - X'))`` of the two-axis machines."""
        return self.x_sync[self.two_axis_idx] / (self.x_transient * self.x_gap)

    @cached_property
    def tau_d(self) -> FloatArray:
        """d-axis open-circuit time constants."""
        return np.array([self.machines[i].tau_d for i in self.layout.two_axis], dtype=np.float64)

    @cached_property
    def tau_q(self) -> FloatArray:
        """q-axis open-circuit time constants."""
        return np.array([self.machines[i].tau_q for i in self.layout.two_axis], dtype=np.float64)

    @cached_property
    def inertia(self) -> FloatArray:
        """Inertia of machines with a frequency state."""
        return np.array([self.machines[i].inertia for i in self.layout.inertial], dtype=np.float64)

    @cached_property
    def damping(self) -> FloatArray:
        """Damping of all machines."""
        return np.array([m.damping for m in self.machines])

    @cached_property
    def p_m(self) -> FloatArray:
        """Configured mechanical or reference powers."""
        return np.array([m.p_m for m in self.machines])

    @property
    def lossless(self) -> bool:
        """Whether the reduced network has no conductance."""
        return self.reduced.lossless

    def default_inputs(self) -> Inputs:
        """Inputs taken from the machine constants."""
        return Inputs(p_m=self.p_m.copy(), v_fd=self.v_fd.copy())

    def with_field_voltages(self, v_fd: FloatArray) -> SystemModel:
        """Copy with new field voltages, marking every machine calibrated."""
        return dataclasses.replace(self, v_fd=np.asarray(v_fd, dtype=np.float64), uncalibrated=())

    def state_labels(self) -> list[str]:
        """Column names of the state vector."""
        bus = self.bus_ids
        return (
            [f"delta_{bus[i]}" for i in range(self.size)]
            + [f"omega_{bus[i]}" for i in self.layout.inertial]
            + [f"Eq_{bus[i]}" for i in self.layout.two_axis]
            + [f"Ed_{bus[i]}" for i in self.layout.two_axis]
        )


def assemble_model(
    machines: Sequence[MachineParams],
    admittance: AdmittanceMatrix,
    *,
    omega0: float,
    settings: SolverSettings | None = None,
) -> SystemModel:
    """Reduce ``admittance`` onto ``machines`` (one per bus, same order)."""
    settings = settings or SolverSettings()
    machines = tuple(machines)
    if tuple(m.bus for m in machines) != admittance.bus_ids:
        raise ValueError("machines must match the admittance buses one to one")

    reactances = np.array([m.kron_reactance for m in machines])
    reduced = kron_reduce(
        admittance,
        reactances,
        rcond_threshold=settings.gamma_rcond,
        lossless_tol=settings.lossless_tol,
        eps=settings.eps_psd,
    )
    try:
        btilred = build_btilred(admittance, np.array([m.x_sync for m in machines]))
    except SusceptanceSignError as exc:
        logger.warning("Synchronous-reactance reduction unavailable: %s", exc)
        btilred = None
    reduced = dataclasses.replace(reduced, Btilred=btilred)

    v_fd = np.array([m.v_fd if m.v_fd is not None else 1.0 for m in machines])
    uncalibrated = tuple(
        i for i, m in enumerate(machines) if m.kind is MachineKind.TWO_AXIS and m.v_fd is None
    )
    return SystemModel(
        machines=machines,
        admittance=admittance,
        reduced=reduced,
        omega0=omega0,
        v_fd=v_fd,
        settings=settings,
        uncalibrated=uncalibrated,
    )


def build_model(spec: NetworkSpec) -> SystemModel:
    """Assemble, eliminate passive buses, and reduce a network spec."""
    admittance = build_admittance(spec)
    if spec.passive_buses:
        admittance = eliminate_zero_injection(admittance, spec.machine_buses)
    return assemble_model(
        spec.ordered_machines(),
        admittance,
        omega0=spec.system.omega0,
        settings=spec.solver,
    )


def classical_equivalent(model: SystemModel) -> SystemModel:
    """Replace every two-axis machine by its constant-EMF limit behind ``X``."""
    machines = [
        m.model_copy(
            update={
                "kind": MachineKind.CLASSICAL,
                "x_transient": None,
                "tau_d": None,
                "tau_q": None,
                "v_fd": float(model.v_fd[i]),
            },
        )
        if m.kind is MachineKind.TWO_AXIS
        else m.model_copy(update={"v_fd": float(model.v_fd[i])})
        for i, m in enumerate(model.machines)
    ]
    return assemble_model(
        machines,
        model.admittance,
        omega0=model.omega0,
        settings=model.settings,
    )


def transfer_matrix(red: ReducedNetwork, delta: FloatArray) -> ComplexArray:
    """``T = k + j h`` with ``T_ij = Gamma^-1_ij exp(j delta_ij)``."""
    phase = np.exp(1j * np.asarray(delta, dtype=np.float64))
    return red.gamma_inv * np.outer(phase, phase.conj())


def coupling_kh(red: ReducedNetwork, delta: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Trigonometric coupling matrices ``k(delta)`` and ``h(delta)``."""
    T = transfer_matrix(red, delta)
    return T.real.copy(), T.imag.copy()


def internal_emf(
    model: SystemModel,
    state: SystemState,
    v_fd: FloatArray | None = None,
) -> ComplexArray:
    """EMF ``E_q + j E_d`` of every machine, constant ones held at ``(V_fd, 0)``."""
    emf = np.array(model.v_fd if v_fd is None else v_fd, dtype=np.complex128)
    emf[model.two_axis_idx] = state.e_q + 1j * state.e_d
    return emf


def _network_terms(
    model: SystemModel,
    state: SystemState,
    v_fd: FloatArray | None,
) -> tuple[ComplexArray, ComplexArray, ComplexArray]:
    emf = internal_emf(model, state, v_fd)
    T = transfer_matrix(model.reduced, state.delta)
    return emf, T, T @ emf


def voltage_terms(
    model: SystemModel,
    state: SystemState,
    v_fd: FloatArray | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Bus voltage terms ``g_q, g_d`` of every machine (``V = X' g``)."""
    _, _, g = _network_terms(model, state, v_fd)
    return g.real.copy(), g.imag.copy()


def active_power(
    model: SystemModel,
    state: SystemState,
    v_fd: FloatArray | None = None,
) -> FloatArray:
    """Active power output ``P(z)`` of every machine."""
    emf, _, g = _network_terms(model, state, v_fd)
    return np.imag(emf.conj() * g)


def reactive_power(
    model: SystemModel,
    state: SystemState,
    v_fd: FloatArray | None = None,
) -> FloatArray:
    """Reactive power output, a diagnostic that does not enter the ODE."""
    emf, _, g = _network_terms(model, state, v_fd)
    return np.real(emf.conj() * g) - model.reduced.reactances * np.abs(g) ** 2


def solve_bus_phasors(
    model: SystemModel,
    state: SystemState,
    v_fd: FloatArray | None = None,
) -> tuple[ComplexArray, ComplexArray]:
    """Solve the stator and network equations directly for bus phasors.

    Returns:
        ``(V_q + j V_d, I_q + j I_d)`` in each machine's rotor frame.

    """
    emf = internal_emf(model, state, v_fd)
    x = model.reduced.reactances
    rot = np.exp(1j * state.delta)
    network = rot[:, np.newaxis] * model.admittance.Y.conj() * rot.conj()[np.newaxis, :]
    voltage = np.linalg.solve(network + 1j * np.diag(1.0 / x), 1j * emf / x)
    current = -1j * (voltage - emf) / x
    return voltage, current


@dataclass(frozen=True)
class PowerJacobians:
    """Partial derivatives of ``P`` and ``g`` at one state.

    ``E`` columns and ``g`` rows cover the two-axis machines, q block first.
    """

    P: FloatArray
    g: ComplexArray
    dP_ddelta: FloatArray
    dP_dE: FloatArray
    dg_ddelta: FloatArray
    dg_dE: FloatArray


def power_jacobians(
    model: SystemModel,
    state: SystemState,
    v_fd: FloatArray | None = None,
) -> PowerJacobians:
    """Analytic Jacobians of ``P`` and of the two-axis voltage terms."""
    emf, T, g = _network_terms(model, state, v_fd)
    ta = model.two_axis_idx
    dg_dd = 1j * (np.diag(g) - T * emf[np.newaxis, :])
    conj_e = emf.conj()[:, np.newaxis]
    dP_dEq = np.diag(g.imag) + np.imag(conj_e * T)
    dP_dEd = -np.diag(g.real) + np.real(conj_e * T)
    k = T.real[np.ix_(ta, ta)]
    h = T.imag[np.ix_(ta, ta)]
    return PowerJacobians(
        P=np.imag(emf.conj() * g),
        g=g,
        dP_ddelta=np.imag(conj_e * dg_dd),
        dP_dE=np.hstack([dP_dEq[:, ta], dP_dEd[:, ta]]),
        dg_ddelta=np.vstack([dg_dd.real[ta, :], dg_dd.imag[ta, :]]),
        dg_dE=np.block([[k, -h], [h, k]]),
    )


def flux_hat_matrices(model: SystemModel, jac: PowerJacobians) -> tuple[FloatArray, FloatArray]:
    """``(Ahat, Bhat)`` with ``A = diag(X - X') Ahat`` and ``B = diag(X - X') Bhat``."""
    curvature = np.concatenate([model.flux_curvature, model.flux_curvature])
    return jac.dg_dE - np.diag(curvature), jac.dg_ddelta


def flux_matrices(model: SystemModel, jac: PowerJacobians) -> tuple[FloatArray, FloatArray]:
    """``(A, B)``: Jacobians of the flux right-hand side with respect to ``E`` and ``delta``."""
    gap = np.concatenate([model.x_gap, model.x_gap])[:, np.newaxis]
    Ahat, Bhat = flux_hat_matrices(model, jac)
    return gap * Ahat, gap * Bhat


def rhs(model: SystemModel, x: FloatArray, inputs: Inputs) -> FloatArray:
    """State derivative of the closed loop."""
    lay = model.layout
    state = lay.split(x)
    emf, _, g = _network_terms(model, state, inputs.v_fd)
    power = np.imag(emf.conj() * g)
    ta, inertial, droop = model.two_axis_idx, model.inertial_idx, model.droop_idx

    dx = np.empty_like(x, dtype=np.float64)
    ddelta = np.zeros(model.size)
    ddelta[inertial] = model.omega0 * state.omega
    ddelta[droop] = model.omega0 * (inputs.p_m[droop] - power[droop]) / model.damping[droop]
    dx[lay.delta] = ddelta
    dx[lay.omega] = (
        -model.damping[inertial] * state.omega - power[inertial] + inputs.p_m[inertial]
    ) / model.inertia

    ratio = model.x_sync[ta] / model.x_transient
    dx[lay.e_q] = (
        -ratio * state.e_q + model.x_gap * g.real[ta] + inputs.v_fd[ta]
    ) / model.tau_d
    dx[lay.e_d] = (-ratio * state.e_d + model.x_gap * g.imag[ta]) / model.tau_q
    return dx


def rhs_jacobian(model: SystemModel, x: FloatArray, inputs: Inputs) -> FloatArray:
    """Analytic Jacobian of :func:`rhs`."""
    lay = model.layout
    jac = power_jacobians(model, lay.split(x), inputs.v_fd)
    A, B = flux_matrices(model, jac)
    inertial, droop = model.inertial_idx, model.droop_idx
    omega_rows = lay.omega.start + np.arange(len(inertial))

    J = np.zeros((lay.size, lay.size))
    J[inertial, omega_rows] = model.omega0
    gain = (model.omega0 / model.damping[droop])[:, np.newaxis]
    J[droop, lay.delta] = -gain * jac.dP_ddelta[droop]
    J[droop, lay.flux] = -gain * jac.dP_dE[droop]

    inv_m = (1.0 / model.inertia)[:, np.newaxis]
    J[lay.omega, lay.delta] = -inv_m * jac.dP_ddelta[inertial]
    J[omega_rows, omega_rows] = -model.damping[inertial] / model.inertia
    J[lay.omega, lay.flux] = -inv_m * jac.dP_dE[inertial]

    inv_tau = (1.0 / np.concatenate([model.tau_d, model.tau_q]))[:, np.newaxis]
    J[lay.flux, lay.delta] = inv_tau * B
    J[lay.flux, lay.flux] = inv_tau * A
    return J


@dataclass(frozen=True)
class Trajectory:
    """Samples of an integrated trajectory plus the dense interpolant."""

    t: FloatArray
    x: FloatArray
    solution: OdeSolution
    layout: StateLayout

    def states(self) -> Iterator[SystemState]:
        """Iterate over the samples as structured states."""
        for row in self.x:
            yield self.layout.split(row)

    def __call__(self, time: float) -> FloatArray:
        """Dense-output evaluation."""
        return np.asarray(self.solution(time), dtype=np.float64)


def integrate(  # noqa: PLR0913
    model: SystemModel,
    x0: FloatArray,
    inputs: Inputs,
    t_span: tuple[float, float],
    dt_control: float,
    *,
    method: IntegrationMethod = "RK45",
    rtol: float | None = None,
    atol: float | None = None,
) -> Trajectory:
    """Integrate the closed loop and sample it every ``dt_control`` seconds.

    Implicit methods receive the analytic Jacobian.

    Raises:
        IntegrationError: If the solver cannot reach the end of ``t_span``.

    """
    t0, t1 = t_span
    if not (np.isfinite(t0) and np.isfinite(t1)):
        raise ValueError("t_span must be finite")
    direction = 1.0 if t1 >= t0 else -1.0
    count = int(np.floor(abs(t1 - t0) / dt_control + 1e-9))
    t_eval = t0 + direction * dt_control * np.arange(count + 1)
    if abs(t_eval[-1] - t1) > 1e-12:  # noqa: PLR2004
        t_eval = np.append(t_eval, t1)

    def fun(_: float, x: FloatArray) -> FloatArray:
        return rhs(model, x, inputs)

    def jac(_: float, x: FloatArray) -> FloatArray:
        return rhs_jacobian(model, x, inputs)

    logger.debug("Integrating %s over %s with %s", model.bus_ids, t_span, method)
    sol = solve_ivp(
        fun,
        (t0, t1),
        np.asarray(x0, dtype=np.float64),
        method=method,
        t_eval=t_eval,
        dense_output=True,
        rtol=rtol if rtol is not None else model.settings.rtol,
        atol=atol if atol is not None else model.settings.atol,
        jac=jac if method in ("Radau", "LSODA") else None,
    )
    if sol.status != 0:
        raise IntegrationError(sol.message, t_fail=float(sol.t[-1]) if sol.t.size else t0)
    return Trajectory(t=sol.t, x=sol.y.T.copy(), solution=sol.sol, layout=model.layout)
