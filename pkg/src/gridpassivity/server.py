"""MCP server exposing the analysis pipeline as tools.

The server is created independent of any transport mechanism. Each tool takes a network
spec, either a bundled name or the full config text, plus an operating point, and answers
with a JSON document.
"""

from __future__ import annotations

import functools
import logging
import typing as t

from anyio import to_thread
from mcp import server, types
from pydantic import BaseModel, ConfigDict, Field

from .config import parse_spec, parse_spec_text
from .equilibrium import classify, generator_angles, prepare_model, solve_equilibrium
from .exceptions import ConfigError, GridPassivityError
from .linear import certify_negative_imaginary, certify_positive_real, linearize
from .params import MachineKind

if t.TYPE_CHECKING:
    from .dynamics import SystemModel
    from .equilibrium import Equilibrium
    from .params import NetworkSpec

logger = logging.getLogger(__name__)

SERVER_NAME: t.Final[str] = "gridpassivity"

_SPEC_PROPERTIES: t.Final[dict[str, t.Any]] = {
    "spec": {"type": "string", "description": "Bundled spec name, e.g. ieee9 or ieee9_lossless"},
    "config": {"type": "string", "description": "Full spec text; takes precedence over spec"},
    "lossless": {"type": "boolean", "description": "Zero every line conductance first"},
    "load_model": {"type": "string", "enum": ["classical", "droop"]},
}
_POINT_PROPERTIES: t.Final[dict[str, t.Any]] = {
    "delta21": {"type": "number", "description": "delta2 - delta1 in rad"},
    "delta31": {"type": "number", "description": "delta3 - delta1 in rad"},
}


def _schema(*, point: bool = False, certificate: bool = False) -> dict[str, t.Any]:
    properties = dict(_SPEC_PROPERTIES)
    required: list[str] = []
    if point:
        properties.update(_POINT_PROPERTIES)
        required = ["delta21", "delta31"]
    if certificate:
        properties["property"] = {
            "type": "string",
            "enum": ["negative_imaginary", "positive_real"],
        }
    return {"type": "object", "properties": properties, "required": required}


TOOLS: t.Final[list[types.Tool]] = [
    types.Tool(
        name="reduce_network",
        description="Kron-reduce the network and report its definiteness certificates.",
        inputSchema=_schema(),
    ),
    types.Tool(
        name="solve_equilibrium",
        description="Solve the equilibrium at generator angle differences (delta21, delta31).",
        inputSchema=_schema(point=True),
    ),
    types.Tool(
        name="classify_equilibrium",
        description="Classify the equilibrium at (delta21, delta31) as in the sweep.",
        inputSchema=_schema(point=True),
    ),
    types.Tool(
        name="certify_equilibrium",
        description="Frequency-domain certificate of the linearized electromagnetic subsystem.",
        inputSchema=_schema(point=True, certificate=True),
    ),
]


class _Result(BaseModel):
    # Non-finite floats serialize as null.
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="null")


class ReductionResult(_Result):
    """Reduced-network certificates."""

    buses: list[int]
    lossless: bool
    gred_lambda_min: float
    bred_lambda_max: float
    gamma_condition_holds: bool
    beta_x_products: list[float]
    kernel_is_exact: bool
    btilred_max: float | None = None


class EquilibriumResult(_Result):
    """A solved operating point."""

    converged: bool
    residual: float
    iterations: int
    reason: str
    buses: list[int]
    delta: list[float]
    e_q: list[float] = Field(description="two-axis machines only")
    e_d: list[float] = Field(description="two-axis machines only")
    p_m: list[float]
    v_fd: list[float]


class ClassificationResult(_Result):
    """Verdicts at one grid point."""

    status: str
    torque_metric: float
    max_re_eig: float
    stable: bool
    boundary: bool
    in_e_plus: bool
    in_e: bool | None


class CertificateResult(_Result):
    """A frequency-domain verdict."""

    kind: str
    verdict: bool
    worst_omega: float
    worst_lambda: float
    residue_check: bool | None
    reason: str


def _load_spec(arguments: dict[str, t.Any]) -> NetworkSpec:
    if text := arguments.get("config"):
        return parse_spec_text(str(text), source="<config>")
    if name := arguments.get("spec"):
        return parse_spec(str(name))
    raise ConfigError("either 'spec' or 'config' is required")


@functools.lru_cache(maxsize=16)
def _prepared(
    spec: NetworkSpec,
    lossless: bool | None,  # noqa: FBT001
    load_model: str | None,
) -> SystemModel:
    return prepare_model(
        spec,
        load_model=MachineKind(load_model) if load_model else None,
        lossless=lossless,
    )


def _model(arguments: dict[str, t.Any]) -> SystemModel:
    return _prepared(_load_spec(arguments), arguments.get("lossless"), arguments.get("load_model"))


def _equilibrium(model: SystemModel, arguments: dict[str, t.Any]) -> Equilibrium:
    angles = generator_angles(model, float(arguments["delta21"]), float(arguments["delta31"]))
    return solve_equilibrium(model, angles)


def reduce_network(arguments: dict[str, t.Any]) -> ReductionResult:
    """Run the ``reduce_network`` tool."""
    red = _model(arguments).reduced
    return ReductionResult(
        buses=list(red.bus_ids),
        lossless=red.lossless,
        gred_lambda_min=red.gred_lambda_min,
        bred_lambda_max=red.bred_lambda_max,
        gamma_condition_holds=red.certificate.condition_holds,
        beta_x_products=list(red.certificate.products),
        kernel_is_exact=red.kernel_is_exact,
        btilred_max=float(red.Btilred.max()) if red.Btilred is not None else None,
    )


def equilibrium_tool(arguments: dict[str, t.Any]) -> EquilibriumResult:
    """Run the ``solve_equilibrium`` tool."""
    model = _model(arguments)
    eq = _equilibrium(model, arguments)
    return EquilibriumResult(
        converged=eq.converged,
        residual=eq.residual,
        iterations=eq.iterations,
        reason=eq.reason,
        buses=list(model.bus_ids),
        delta=eq.z_star.delta.tolist(),
        e_q=eq.z_star.e_q.tolist(),
        e_d=eq.z_star.e_d.tolist(),
        p_m=eq.p_m_star.tolist(),
        v_fd=eq.v_fd.tolist(),
    )


def classify_tool(arguments: dict[str, t.Any]) -> ClassificationResult:
    """Run the ``classify_equilibrium`` tool."""
    model = _model(arguments)
    d21, d31 = float(arguments["delta21"]), float(arguments["delta31"])
    cell = classify(model, _equilibrium(model, arguments), d21, d31)
    return ClassificationResult(
        status=cell.status.value,
        torque_metric=cell.torque_metric,
        max_re_eig=cell.max_re_eig,
        stable=cell.stable,
        boundary=cell.boundary,
        in_e_plus=cell.in_e_plus,
        in_e=cell.in_e,
    )


def certify_tool(arguments: dict[str, t.Any]) -> CertificateResult:
    """Run the ``certify_equilibrium`` tool."""
    model = _model(arguments)
    eq = _equilibrium(model, arguments)
    if not eq.converged:
        raise GridPassivityError(f"no equilibrium at this operating point: {eq.reason}")
    lm = linearize(model, eq)
    grid = model.settings.freq_grid()
    if arguments.get("property", "negative_imaginary") == "positive_real":
        cert = certify_positive_real(lm, grid, model.settings.eps_psd)
    else:
        cert = certify_negative_imaginary(lm, grid, model.settings.eps_psd)
    return CertificateResult(
        kind=cert.kind.value,
        verdict=cert.verdict,
        worst_omega=cert.worst_omega,
        worst_lambda=cert.worst_lambda,
        residue_check=cert.residue_check,
        reason=cert.reason,
    )


HANDLERS: t.Final[dict[str, t.Callable[[dict[str, t.Any]], _Result]]] = {
    "reduce_network": reduce_network,
    "solve_equilibrium": equilibrium_tool,
    "classify_equilibrium": classify_tool,
    "certify_equilibrium": certify_tool,
}


def create_analysis_server() -> server.Server:
    """Create a server instance serving the analysis tools."""
    app: server.Server = server.Server(SERVER_NAME)

    @app.list_tools()
    async def _list_tools() -> list[types.Tool]:
        return TOOLS

    @app.call_tool()
    async def _call_tool(name: str, arguments: dict[str, t.Any]) -> list[types.TextContent]:
        handler = HANDLERS.get(name)
        if handler is None:
            raise ValueError(f"unknown tool '{name}'")
        logger.info("Running tool %s", name)
        result = await to_thread.run_sync(handler, dict(arguments or {}))
        return [types.TextContent(type="text", text=result.model_dump_json())]

    return app
