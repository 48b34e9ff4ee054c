"""Validated parameter models for networks, machines, and solver settings.

All models are frozen pydantic models. Field names are descriptive; the aliases are the
short keys used in configuration files (``M``, ``Xprime``, ``from``...). Models can be
built from either form.
"""

from __future__ import annotations

import enum
import math
import typing as t

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

PositiveFloat = t.Annotated[float, Field(gt=0)]

DEFAULT_OMEGA0: t.Final[float] = 120.0 * math.pi


class MachineKind(str, enum.Enum):
    """Dynamic model attached to a bus."""

    TWO_AXIS = "two_axis"
    CLASSICAL = "classical"
    DROOP = "droop"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")


class LineParams(_Frozen):
    """A pi-type transmission line between two buses."""

    from_bus: int = Field(alias="from")
    to_bus: int = Field(alias="to")
    g: float = Field(ge=0.0, description="series conductance (pu)")
    b: float = Field(le=0.0, description="series susceptance (pu)")
    c: float = Field(default=0.0, ge=0.0, description="ground capacitance (pu)")

    @model_validator(mode="after")
    def _distinct_ends(self) -> LineParams:
        if self.from_bus == self.to_bus:
            raise ValueError(f"line connects bus {self.from_bus} to itself")
        return self


class MachineParams(_Frozen):
    """Constants of one machine.

    ``v_fd`` left unset on a two-axis machine requests calibration; on a classical or
    droop machine it defaults to 1.0 pu.
    """

    bus: int
    kind: MachineKind
    inertia: PositiveFloat | None = Field(default=None, alias="M")
    damping: PositiveFloat = Field(alias="D")
    x_sync: PositiveFloat = Field(alias="X")
    x_transient: PositiveFloat | None = Field(default=None, alias="Xprime")
    tau_d: PositiveFloat | None = None
    tau_q: PositiveFloat | None = None
    v_fd: PositiveFloat | None = Field(default=None, alias="V_fd")
    p_m: float = Field(default=0.0, alias="P_m")

    @model_validator(mode="after")
    def _kind_constants(self) -> MachineParams:
        if self.kind is MachineKind.TWO_AXIS:
            missing = [
                name
                for name in ("inertia", "x_transient", "tau_d", "tau_q")
                if getattr(self, name) is None
            ]
            if missing:
                raise ValueError(f"two_axis machine at bus {self.bus} lacks {', '.join(missing)}")
            if self.x_transient is not None and self.x_transient > self.x_sync:
                raise ValueError(
                    f"Xprime={self.x_transient} exceeds X={self.x_sync} at bus {self.bus}",
                )
        elif self.kind is MachineKind.CLASSICAL and self.inertia is None:
            raise ValueError(f"classical machine at bus {self.bus} lacks inertia M")
        return self

    @property
    def has_inertia(self) -> bool:
        """Whether the machine carries a frequency state."""
        return self.kind is not MachineKind.DROOP

    @property
    def kron_reactance(self) -> float:
        """Reactance behind which the internal EMF sits in the reduced network."""
        if self.kind is MachineKind.TWO_AXIS and self.x_transient is not None:
            return self.x_transient
        return self.x_sync


class SystemSettings(_Frozen):
    """The ``[system]`` section."""

    name: str = "network"
    omega0: PositiveFloat = DEFAULT_OMEGA0


class SweepSettings(_Frozen):
    """The ``[sweep]`` section: the (delta21, delta31) grid."""

    delta_range: tuple[float, float] = Field(default=(-math.pi, math.pi), alias="range")
    resolution: int = Field(default=61, ge=2)
    lossless: bool = False
    continuation: bool = True
    workers: int = Field(default=1, ge=1)

    @field_validator("delta_range")
    @classmethod
    def _ordered(cls, value: tuple[float, float]) -> tuple[float, float]:
        if not value[0] < value[1]:
            raise ValueError(f"range must be increasing, got {value}")
        return value

    def axis(self) -> list[float]:
        """Grid coordinates over the half-open range."""
        lo, hi = self.delta_range
        step = (hi - lo) / self.resolution
        return [lo + k * step for k in range(self.resolution)]


class SolverSettings(_Frozen):
    """The ``[solver]`` section: tolerances shared by every analysis."""

    newton_tol: PositiveFloat = 1e-10
    max_iter: int = Field(default=50, ge=1)
    eps_psd: PositiveFloat = 1e-8
    eps_interior: PositiveFloat = 1e-8
    boundary_band: PositiveFloat = 1e-6
    stability_tol: PositiveFloat = 1e-8
    gamma_rcond: PositiveFloat = 1e-12
    lossless_tol: PositiveFloat = 1e-10
    rtol: PositiveFloat = 1e-7
    atol: PositiveFloat = 1e-9
    freq_min: PositiveFloat = 1e-3
    freq_max: PositiveFloat = 1e4
    freq_points: int = Field(default=400, ge=2)

    def freq_grid(self) -> list[float]:
        """Logarithmic frequency grid in rad/s."""
        lo, hi = math.log10(self.freq_min), math.log10(self.freq_max)
        n = self.freq_points
        return [10.0 ** (lo + (hi - lo) * k / (n - 1)) for k in range(n)]


class NetworkSpec(_Frozen):
    """A complete system description: buses, lines, machines, and settings."""

    system: SystemSettings = SystemSettings()
    buses: tuple[int, ...]
    lines: tuple[LineParams, ...] = ()
    machines: tuple[MachineParams, ...]
    sweep: SweepSettings = SweepSettings()
    solver: SolverSettings = SolverSettings()

    @model_validator(mode="after")
    def _references(self) -> NetworkSpec:
        if not self.buses:
            raise ValueError("no buses declared")
        if len(set(self.buses)) != len(self.buses):
            raise ValueError("duplicate bus id")
        known = set(self.buses)
        for line in self.lines:
            for end in (line.from_bus, line.to_bus):
                if end not in known:
                    raise ValueError(f"line references unknown bus {end}")
        if not self.machines:
            raise ValueError("no machines declared")
        seen: set[int] = set()
        for machine in self.machines:
            if machine.bus not in known:
                raise ValueError(f"machine references unknown bus {machine.bus}")
            if machine.bus in seen:
                raise ValueError(f"more than one machine at bus {machine.bus}")
            seen.add(machine.bus)
        return self

    @property
    def machine_buses(self) -> tuple[int, ...]:
        """Buses carrying a machine, in declaration order of ``buses``."""
        attached = {m.bus for m in self.machines}
        return tuple(bus for bus in self.buses if bus in attached)

    @property
    def passive_buses(self) -> tuple[int, ...]:
        """Zero-injection buses."""
        attached = {m.bus for m in self.machines}
        return tuple(bus for bus in self.buses if bus not in attached)

    def ordered_machines(self) -> tuple[MachineParams, ...]:
        """Machines sorted into ``machine_buses`` order."""
        by_bus = {m.bus: m for m in self.machines}
        return tuple(by_bus[bus] for bus in self.machine_buses)

    def lossless(self) -> NetworkSpec:
        """Copy with every line conductance set to zero."""
        lines = tuple(line.model_copy(update={"g": 0.0}) for line in self.lines)
        return self.model_copy(update={"lines": lines})

    def with_load_model(self, kind: MachineKind) -> NetworkSpec:
        """Copy with every non-two-axis machine switched to ``kind``."""
        if kind is MachineKind.TWO_AXIS:
            raise ValueError("loads cannot be switched to the two-axis model")
        machines = tuple(
            m if m.kind is MachineKind.TWO_AXIS else m.model_copy(update={"kind": kind})
            for m in self.machines
        )
        if kind is MachineKind.CLASSICAL and any(
            m.inertia is None for m in machines if m.kind is kind
        ):
            raise ValueError("classical loads need an inertia M")
        return self.model_copy(update={"machines": machines})
