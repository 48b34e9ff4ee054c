"""Shared fixtures: bundled specs, calibrated models, equilibria, and random networks."""

from collections.abc import Callable

import networkx as nx
import numpy as np
import pytest

from gridpassivity.config import parse_spec
from gridpassivity.dynamics import SystemModel, SystemState
from gridpassivity.equilibrium import (
    Equilibrium,
    generator_angles,
    prepare_model,
    solve_equilibrium,
)
from gridpassivity.params import MachineKind, NetworkSpec

SpecFactory = Callable[..., NetworkSpec]
StateFactory = Callable[[SystemModel, int], SystemState]


def _solve(model: SystemModel, delta21: float, delta31: float) -> Equilibrium:
    eq = solve_equilibrium(model, generator_angles(model, delta21, delta31))
    assert eq.converged, eq.reason
    return eq


@pytest.fixture(scope="session")
def ieee9_spec() -> NetworkSpec:
    """The bundled 9-bus spec."""
    return parse_spec("ieee9")


@pytest.fixture(scope="session")
def ieee9_lossless_spec() -> NetworkSpec:
    """The bundled 9-bus spec with every conductance zeroed."""
    return parse_spec("ieee9_lossless")


@pytest.fixture(scope="session")
def lossy_model(ieee9_spec: NetworkSpec) -> SystemModel:
    """Calibrated lossy 9-bus model with classical loads."""
    return prepare_model(ieee9_spec)


@pytest.fixture(scope="session")
def lossless_model(ieee9_lossless_spec: NetworkSpec) -> SystemModel:
    """Calibrated lossless 9-bus model with classical loads."""
    return prepare_model(ieee9_lossless_spec)


@pytest.fixture(scope="session")
def lossless_droop_model(ieee9_lossless_spec: NetworkSpec) -> SystemModel:
    """Calibrated lossless 9-bus model with droop loads."""
    return prepare_model(ieee9_lossless_spec, load_model=MachineKind.DROOP)


@pytest.fixture(scope="session")
def lossless_equilibrium(lossless_model: SystemModel) -> Equilibrium:
    """Near-uniform-angle equilibrium of the lossless model."""
    return _solve(lossless_model, 0.1, 0.05)


@pytest.fixture(scope="session")
def lossy_equilibrium(lossy_model: SystemModel) -> Equilibrium:
    """Equilibrium of the lossy model at generic generator angles."""
    return _solve(lossy_model, 0.2, 0.15)


@pytest.fixture(scope="session")
def solve_at() -> Callable[[SystemModel, float, float], Equilibrium]:
    """Solve a converged equilibrium at ``(delta21, delta31)``."""
    return _solve


def _random_spec(
    n: int,
    seed: int,
    *,
    lossless: bool = False,
    c_max: float = 5e-4,
) -> NetworkSpec:
    rng = np.random.default_rng(seed)
    graph = nx.connected_watts_strogatz_graph(n, 2, 0.5, seed=seed)
    lines = [
        {
            "from": u + 1,
            "to": v + 1,
            "g": 0.0 if lossless else float(rng.uniform(0.5, 2.0)),
            "b": float(rng.uniform(-20.0, -5.0)),
            "c": float(rng.uniform(0.0, c_max)),
        }
        for u, v in sorted(graph.edges)
    ]
    machines = [
        {
            "bus": k + 1,
            "kind": "two_axis",
            "M": float(rng.uniform(0.02, 0.2)),
            "D": float(rng.uniform(0.005, 0.02)),
            "X": float(rng.uniform(0.6, 1.4)),
            "Xprime": float(rng.uniform(0.1, 0.3)),
            "tau_d": float(rng.uniform(4.0, 9.0)),
            "tau_q": float(rng.uniform(0.3, 0.7)),
            "V_fd": float(rng.uniform(1.0, 1.5)),
        }
        for k in range(n)
    ]
    return NetworkSpec.model_validate(
        {"buses": list(range(1, n + 1)), "lines": lines, "machines": machines},
    )


@pytest.fixture
def make_spec() -> SpecFactory:
    """Factory of random connected networks with a two-axis machine at every bus."""
    return _random_spec


def _random_state(model: SystemModel, seed: int) -> SystemState:
    rng = np.random.default_rng(seed)
    n_ta = len(model.two_axis_idx)
    return SystemState(
        delta=rng.uniform(-0.6, 0.6, model.size),
        omega=rng.uniform(-1e-3, 1e-3, len(model.inertial_idx)),
        e_q=rng.uniform(0.8, 1.2, n_ta),
        e_d=rng.uniform(-0.2, 0.2, n_ta),
    )


@pytest.fixture
def random_state() -> StateFactory:
    """Factory of random states of a model."""
    return _random_state
