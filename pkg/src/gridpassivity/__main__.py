"""Command line entry point.

Two ways to run the application:
1. Run the application as a module `uv run -m gridpassivity`
2. Run the application as a package `uv run gridpassivity`

"""

from __future__ import annotations

import argparse
import asyncio
import logging
import os
import sys
import typing as t
from pathlib import Path

import numpy as np

from . import artifacts
from .config import parse_spec
from .dynamics import IntegrationMethod, build_model, integrate
from .equilibrium import (
    closed_loop_jacobian,
    generator_angles,
    prepare_model,
    solve_equilibrium,
    sweep,
    sweep_agreement,
)
from .exceptions import GridPassivityError
from .linear import (
    CertificateKind,
    certify_negative_imaginary,
    certify_positive_real,
    linearize,
    linearized_swing_modes,
    torque_coefficient_matrix,
)
from .params import MachineKind
from .sse_server import SseServerSettings, run_sse_server, run_stdio_server

if t.TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from .dynamics import SystemModel
    from .equilibrium import Equilibrium
    from .params import NetworkSpec

logger = logging.getLogger(__name__)

LOG_LEVEL: t.Final[str] = os.getenv("GRIDPASSIVITY_LOG_LEVEL", "WARNING")
LOG_LEVELS: t.Final = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

EXIT_OK: t.Final[int] = 0
EXIT_VERDICT_FALSE: t.Final[int] = 1
EXIT_ERROR: t.Final[int] = 2


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0.0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _spec(args: argparse.Namespace) -> NetworkSpec:
    """Read the spec and apply command-line overrides."""
    spec = parse_spec(args.spec)
    sweep_update: dict[str, t.Any] = {}
    if args.lossless is not None:
        sweep_update["lossless"] = args.lossless
    if getattr(args, "grid", None) is not None:
        sweep_update["resolution"] = args.grid
    if getattr(args, "workers", None) is not None:
        sweep_update["workers"] = args.workers
    solver_update = {
        name: value
        for name in ("freq_min", "freq_max", "freq_points")
        if (value := getattr(args, name, None)) is not None
    }
    if solver_update:
        lo = solver_update.get("freq_min", spec.solver.freq_min)
        hi = solver_update.get("freq_max", spec.solver.freq_max)
        if not lo < hi:
            raise GridPassivityError(f"--freq-min {lo} must be below --freq-max {hi}")
    return spec.model_copy(
        update={
            "sweep": spec.sweep.model_copy(update=sweep_update),
            "solver": spec.solver.model_copy(update=solver_update),
        },
    )


def _model(args: argparse.Namespace, spec: NetworkSpec | None = None) -> SystemModel:
    load_model = MachineKind(args.load_model) if args.load_model else None
    return prepare_model(spec or _spec(args), load_model=load_model)


def _equilibrium(model: SystemModel, args: argparse.Namespace) -> Equilibrium:
    eq = solve_equilibrium(model, generator_angles(model, args.delta21, args.delta31))
    if not eq.converged:
        raise GridPassivityError(
            f"no equilibrium at delta21={args.delta21}, delta31={args.delta31}: {eq.reason}",
        )
    return eq


def _output(args: argparse.Namespace, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def cmd_reduce(args: argparse.Namespace) -> int:
    """Kron-reduce the network and print its definiteness certificates."""
    spec = _spec(args)
    if spec.sweep.lossless:
        spec = spec.lossless()
    red = build_model(spec).reduced
    print(f"lambda_min(Gred) = {red.gred_lambda_min:.17g}")
    print(f"lambda_max(Bred) = {red.bred_lambda_max:.17g}")
    print(f"lossless = {str(red.lossless).lower()}")
    print(f"beta*X' <= 1 holds = {str(red.certificate.condition_holds).lower()}")
    print(f"Gred kernel exact = {str(red.kernel_is_exact).lower()}")
    if red.Btilred is not None:
        print(f"max(Btilred) = {float(red.Btilred.max()):.17g}")
    artifacts.write_csv(artifacts.reduction_frame(red), _output(args, "reduction.csv"))
    return EXIT_OK


def cmd_equilibrium(args: argparse.Namespace) -> int:
    """Solve one equilibrium and report its closed-loop stability."""
    model = _model(args)
    eq = _equilibrium(model, args)
    spectrum = closed_loop_jacobian(model, eq)
    print(f"residual = {eq.residual:.3e} after {eq.iterations} iterations")
    print(f"max Re(eig) = {spectrum.max_re_eig:.17g}")
    artifacts.write_csv(artifacts.equilibrium_frame(model, eq), _output(args, "equilibrium.csv"))
    return EXIT_OK


def cmd_linearize(args: argparse.Namespace) -> int:
    """Write the system matrices at one equilibrium."""
    model = _model(args)
    lm = linearize(model, _equilibrium(model, args))
    for name, frame in artifacts.linear_frames(model, lm).items():
        artifacts.write_csv(frame, _output(args, f"{name}.csv"))
    if lm.L0 is None:
        print("A is singular; L0 is undefined")
        return EXIT_OK
    report = torque_coefficient_matrix(lm, model.settings.eps_interior)
    modes = linearized_swing_modes(model, lm)
    print(f"torque metric = {report.positive_eig_product:.17g}")
    print(f"L0 asymmetry = {report.sym_gap:.3e}")
    print(f"max Re(swing mode) = {float(np.max(modes.real)):.17g}")
    return EXIT_OK


def cmd_certify(args: argparse.Namespace) -> int:
    """Certify the linearized electromagnetic subsystem; exit 1 when the verdict is false."""
    model = _model(args)
    lm = linearize(model, _equilibrium(model, args))
    grid = model.settings.freq_grid()
    if CertificateKind(args.property) is CertificateKind.POSITIVE_REAL:
        cert = certify_positive_real(lm, grid, model.settings.eps_psd)
    else:
        cert = certify_negative_imaginary(lm, grid, model.settings.eps_psd)
    artifacts.write_csv(artifacts.certificate_frame(cert), _output(args, "certificate.csv"))
    artifacts.write_csv(
        artifacts.certificate_summary(cert),
        _output(args, "certificate_summary.csv"),
    )
    print(f"{cert.kind.value} = {str(cert.verdict).lower()}")
    print(f"worst lambda = {cert.worst_lambda:.17g} at omega = {cert.worst_omega:.17g}")
    if cert.reason:
        print(cert.reason)
    return EXIT_OK if cert.verdict else EXIT_VERDICT_FALSE


def cmd_simulate(args: argparse.Namespace) -> int:
    """Integrate from an angle kick applied to the second generator."""
    model = _model(args)
    eq = _equilibrium(model, args)
    x0 = eq.x_star.copy()
    x0[model.two_axis_idx[1]] += args.perturb
    traj = integrate(model, x0, eq.inputs, (0.0, args.t_end), args.dt, method=args.method)
    artifacts.write_csv(
        artifacts.trajectory_frame(model, traj, eq),
        _output(args, "trajectory.csv"),
    )
    final = model.layout.split(traj.x[-1])
    print(f"samples = {len(traj.t)}")
    print(f"max |omega| at t_end = {float(np.max(np.abs(final.omega), initial=0.0)):.3e}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """Classify the (delta21, delta31) grid."""
    spec = _spec(args)
    model = _model(args, spec)
    result = sweep(model, spec.sweep)
    artifacts.write_csv(artifacts.sweep_frame(result), _output(args, "sweep.csv"))
    report = sweep_agreement(result)
    print(f"cells = {len(result.flat())}")
    print(f"agreement = {report.agreeing}/{report.compared} ({report.fraction:.4%})")
    print(f"boundary cells excluded = {report.boundary_excluded}")
    print(f"mismatches adjacent to boundary = {str(report.mismatches_adjacent).lower()}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    """Serve the analysis tools over MCP."""
    if args.sse_port is None:
        logger.debug("Serving analysis tools on stdio")
        asyncio.run(run_stdio_server())
        return EXIT_OK
    logger.debug("Serving analysis tools on SSE port %d", args.sse_port)
    sse_settings = SseServerSettings(
        bind_host=args.sse_host,
        port=args.sse_port,
        allow_origins=args.allow_origin if len(args.allow_origin) > 0 else None,
        log_level=args.log_level,
    )
    asyncio.run(run_sse_server(sse_settings))
    return EXIT_OK


COMMANDS: t.Final[dict[str, Callable[[argparse.Namespace], int]]] = {
    "reduce": cmd_reduce,
    "equilibrium": cmd_equilibrium,
    "linearize": cmd_linearize,
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "serve": cmd_serve,
}


def _spec_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument(
        "spec",
        help="Spec file, or the name of a bundled spec (ieee9, ieee9_lossless).",
    )
    group = parent.add_argument_group("model options")
    group.add_argument(
        "--load-model",
        choices=[MachineKind.CLASSICAL.value, MachineKind.DROOP.value],
        default=None,
        help="Switch every load to this model. Default is the model given in the spec.",
    )
    group.add_argument(
        "--lossless",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="Zero every line conductance first. Default is the spec's [sweep] lossless.",
    )
    group.add_argument(
        "--out",
        default=".",
        help="Directory to write CSV artifacts to. Default is the current directory.",
    )
    return parent


def _point_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("operating point")
    group.add_argument("--delta21", type=float, default=0.0, help="delta2 - delta1 in rad.")
    group.add_argument("--delta31", type=float, default=0.0, help="delta3 - delta1 in rad.")
    return parent


def build_parser() -> argparse.ArgumentParser:
    """Argument parser of the ``gridpassivity`` command."""
    parser = argparse.ArgumentParser(
        description=(
            "Equilibrium-independent passivity analysis of multi-machine power systems."
        ),
        epilog=(
            "Examples:\n"
            "  gridpassivity reduce ieee9\n"
            "  gridpassivity certify ieee9 --delta21 0.2 --delta31 0.15\n"
            "  gridpassivity sweep ieee9_lossless --load-model droop --out results/\n"
            "  gridpassivity simulate ieee9 --t-end 10 --method Radau\n"
            "  gridpassivity serve --sse-port 8080 --allow-origin='*'\n"
        ),
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument(
        "--log-level",
        choices=LOG_LEVELS,
        default=LOG_LEVEL.upper() if LOG_LEVEL.upper() in LOG_LEVELS else "WARNING",
        help="Logging level. Default is $GRIDPASSIVITY_LOG_LEVEL or WARNING.",
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    spec, point = _spec_parent(), _point_parent()

    commands.add_parser("reduce", parents=[spec], help=cmd_reduce.__doc__)
    commands.add_parser("equilibrium", parents=[spec, point], help=cmd_equilibrium.__doc__)
    commands.add_parser("linearize", parents=[spec, point], help=cmd_linearize.__doc__)

    certify = commands.add_parser("certify", parents=[spec, point], help=cmd_certify.__doc__)
    freq = certify.add_argument_group("frequency grid")
    freq.add_argument(
        "--property",
        choices=[kind.value for kind in CertificateKind],
        default=CertificateKind.NEGATIVE_IMAGINARY.value,
        help="Property to certify. Default is negative_imaginary.",
    )
    freq.add_argument("--freq-min", type=_positive_float, help="Lowest frequency in rad/s.")
    freq.add_argument("--freq-max", type=_positive_float, help="Highest frequency in rad/s.")
    freq.add_argument("--freq-points", type=_positive_int, help="Number of grid frequencies.")

    simulate = commands.add_parser("simulate", parents=[spec, point], help=cmd_simulate.__doc__)
    integration = simulate.add_argument_group("integration")
    integration.add_argument("--t-end", type=_positive_float, default=10.0, help="End time in s.")
    integration.add_argument("--dt", type=_positive_float, default=0.01, help="Sample interval.")
    integration.add_argument("--perturb", type=float, default=0.1, help="Angle kick in rad.")
    integration.add_argument(
        "--method",
        choices=list(t.get_args(IntegrationMethod)),
        default="RK45",
        help="Integration method. Radau and LSODA use the analytic Jacobian.",
    )

    sweep_cmd = commands.add_parser("sweep", parents=[spec], help=cmd_sweep.__doc__)
    grid = sweep_cmd.add_argument_group("grid")
    grid.add_argument("--grid", type=_positive_int, help="Points per axis.")
    grid.add_argument("--workers", type=_positive_int, help="Threads marching rows.")

    serve = commands.add_parser("serve", help=cmd_serve.__doc__)
    sse_server_group = serve.add_argument_group("SSE server options")
    sse_server_group.add_argument(
        "--sse-port",
        type=int,
        default=None,
        help="Port to expose an SSE server on. Default is to serve on stdio",
    )
    sse_server_group.add_argument(
        "--sse-host",
        default="127.0.0.1",
        help="Host to expose an SSE server on. Default is 127.0.0.1",
    )
    sse_server_group.add_argument(
        "--allow-origin",
        nargs="+",
        default=[],
        help="Allowed origins for the SSE server. Can be used multiple times. Default is no CORS allowed.",  # noqa: E501
    )
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run the command, and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level)
    try:
        return COMMANDS[args.command](args)
    except (GridPassivityError, ValueError) as exc:
        logger.error("%s failed: %s", args.command, exc)  # noqa: TRY400
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    """Run the command line and exit with its code."""
    sys.exit(run())


if __name__ == "__main__":
    main()
