"""CSV artifacts written by the command line.

Every table is a pandas frame written with a header row, no index, and floats at 17
significant digits, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import logging
import typing as t

import numpy as np
import pandas as pd

from .dynamics import active_power, reactive_power
from .energy import bregman_storage

if t.TYPE_CHECKING:
    from pathlib import Path

    from .dynamics import SystemModel, Trajectory
    from .equilibrium import Equilibrium, SweepResult
    from .linear import FreqCertificate, LinearModel
    from .network import ReducedNetwork

logger = logging.getLogger(__name__)

FLOAT_FORMAT: t.Final[str] = "%.17g"
SWEEP_COLUMNS: t.Final = ("delta21", "delta31", "status", "torque_metric", "max_re_eig", "residual")


def write_csv(frame: pd.DataFrame, path: Path | t.TextIO) -> None:
    """Write ``frame`` with the fixed artifact formatting."""
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug("Wrote %d rows to %s", len(frame), getattr(path, "name", path))


def sweep_frame(result: SweepResult) -> pd.DataFrame:
    """One row per grid cell, ordered by ``delta21`` then ``delta31``."""
    rows = [
        (c.delta21, c.delta31, c.status.value, c.torque_metric, c.max_re_eig, c.residual)
        for c in result.flat()
    ]
    return pd.DataFrame(rows, columns=list(SWEEP_COLUMNS))


def certificate_frame(cert: FreqCertificate) -> pd.DataFrame:
    """Smallest eigenvalue of the certified Hermitian matrix at every grid frequency."""
    return pd.DataFrame({"omega": cert.omegas, "lambda_min": cert.lambdas})


def certificate_summary(cert: FreqCertificate) -> pd.DataFrame:
    """Single-row verdict record."""
    return pd.DataFrame(
        [
            {
                "property": cert.kind.value,
                "verdict": cert.verdict,
                "worst_omega": cert.worst_omega,
                "worst_lambda": cert.worst_lambda,
                "residue_check": "" if cert.residue_check is None else cert.residue_check,
                "reason": cert.reason,
            },
        ],
    )


def reduction_frame(red: ReducedNetwork) -> pd.DataFrame:
    """Entries of ``Yred`` (and ``Btilred`` when present) in long form."""
    n = red.size
    rows, cols = np.divmod(np.arange(n * n), n)
    frame = pd.DataFrame(
        {
            "row_bus": np.asarray(red.bus_ids)[rows],
            "col_bus": np.asarray(red.bus_ids)[cols],
            "Gred": red.Gred.ravel(),
            "Bred": red.Bred.ravel(),
        },
    )
    if red.Btilred is not None:
        frame["Btilred"] = red.Btilred.ravel()
    return frame


def equilibrium_frame(model: SystemModel, eq: Equilibrium) -> pd.DataFrame:
    """Per-machine operating point."""
    state = eq.z_star
    e_q = np.array(model.v_fd, dtype=np.float64)
    e_d = np.zeros(model.size)
    e_q[model.two_axis_idx] = state.e_q
    e_d[model.two_axis_idx] = state.e_d
    return pd.DataFrame(
        {
            "bus": model.bus_ids,
            "kind": [m.kind.value for m in model.machines],
            "delta": state.delta,
            "E_q": e_q,
            "E_d": e_d,
            "P": active_power(model, state, eq.v_fd),
            "Q": reactive_power(model, state, eq.v_fd),
            "P_m": eq.p_m_star,
            "V_fd": eq.v_fd,
        },
    )


def linear_frames(model: SystemModel, lm: LinearModel) -> dict[str, pd.DataFrame]:
    """The named system matrices of a linearization."""
    buses = [f"delta_{b}" for b in model.bus_ids]
    flux_buses = [model.bus_ids[i] for i in model.layout.two_axis]
    flux = [f"Eq_{b}" for b in flux_buses] + [f"Ed_{b}" for b in flux_buses]
    frames = {
        "A": pd.DataFrame(lm.A, columns=flux),
        "B": pd.DataFrame(lm.B, columns=buses),
        "C": pd.DataFrame(lm.C, columns=flux),
        "L": pd.DataFrame(lm.L, columns=buses),
    }
    if lm.L0 is not None:
        frames["L0"] = pd.DataFrame(lm.L0, columns=buses)
    return frames


def trajectory_frame(
    model: SystemModel,
    traj: Trajectory,
    equilibrium: Equilibrium | None = None,
) -> pd.DataFrame:
    """Sampled states with machine powers and, on lossless networks, the storage balance."""
    frame = pd.DataFrame(traj.x, columns=model.state_labels())
    frame.insert(0, "t", traj.t)
    v_fd = equilibrium.v_fd if equilibrium is not None else None
    powers = np.array([active_power(model, state, v_fd) for state in traj.states()])
    for k, bus in enumerate(model.bus_ids):
        frame[f"P_{bus}"] = powers[:, k] if len(powers) else []
    if equilibrium is not None and model.lossless:
        storage = [bregman_storage(model, state, equilibrium) for state in traj.states()]
        frame["W"] = [s.W for s in storage]
        frame["dWdt"] = [s.dWdt for s in storage]
        frame["supply"] = [s.supply for s in storage]
    return frame
