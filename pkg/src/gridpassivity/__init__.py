"""Equilibrium-independent passivity analysis of multi-machine power systems.

Provides Kron reduction, equilibrium computation, strain-energy and synchronizing-torque
analysis, frequency-domain certificates, and the generator-angle sweep.
"""

from importlib.metadata import PackageNotFoundError, version

from .config import parse_spec, parse_spec_text, serialize_spec
from .dynamics import SystemModel, SystemState, build_model, integrate
from .energy import bregman_storage, hessian_U, membership_E, strain_energy
from .equilibrium import (
    CellStatus,
    Equilibrium,
    classify,
    generator_angles,
    prepare_model,
    solve_equilibrium,
    sweep,
    sweep_agreement,
)
from .exceptions import GridPassivityError
from .linear import (
    certify_negative_imaginary,
    certify_positive_real,
    linearize,
    torque_coefficient_matrix,
)
from .network import build_admittance, kron_reduce
from .params import MachineKind, NetworkSpec

try:
    __version__ = version("gridpassivity")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

__all__ = [
    "CellStatus",
    "Equilibrium",
    "GridPassivityError",
    "MachineKind",
    "NetworkSpec",
    "SystemModel",
    "SystemState",
    "__version__",
    "bregman_storage",
    "build_admittance",
    "build_model",
    "certify_negative_imaginary",
    "certify_positive_real",
    "classify",
    "generator_angles",
    "hessian_U",
    "integrate",
    "kron_reduce",
    "linearize",
    "membership_E",
    "parse_spec",
    "parse_spec_text",
    "prepare_model",
    "serialize_spec",
    "solve_equilibrium",
    "strain_energy",
    "sweep",
    "sweep_agreement",
    "torque_coefficient_matrix",
]
