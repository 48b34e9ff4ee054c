"""Bus admittance assembly and Kron reduction onto machine internal nodes.

The reduced coupling seen by machines with transient reactances ``X'`` is

    Gamma = diag(X') - j diag(X') conj(Y) diag(X'),    Yred = -j Gamma^-1,

and the companion matrix built with the synchronous reactances ``X`` of a lossless
network is ``Btilred = -(diag(X) - diag(X) B diag(X))^-1``.
"""

from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass

import networkx as nx
import numpy as np
import scipy.linalg

from .exceptions import DisconnectedNetworkError, SingularNetworkError, SusceptanceSignError
from .linalg import ComplexArray, FloatArray, extreme_eigenvalues, reciprocal_condition

if t.TYPE_CHECKING:
    from collections.abc import Sequence

    from .params import NetworkSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AdmittanceMatrix:
    """Bus admittance matrix ``Y = G + jB`` with its shunt constants ``beta``."""

    Y: ComplexArray
    beta: FloatArray
    bus_ids: tuple[int, ...]

    @property
    def G(self) -> FloatArray:  # noqa: N802
        """Conductance matrix; a weighted graph Laplacian while ``shunt_conductance`` is zero."""
        return self.Y.real.copy()

    @property
    def B(self) -> FloatArray:  # noqa: N802
        """Susceptance matrix ``B0 + diag(beta)``."""
        return self.Y.imag.copy()

    @property
    def B0(self) -> FloatArray:  # noqa: N802
        """Susceptance without the shunt contribution."""
        return self.B - np.diag(self.beta)

    @property
    def shunt_conductance(self) -> FloatArray:
        """``Re(Y 1)``, zero for assembled lines and nonzero after eliminating lossy buses."""
        return self.Y.sum(axis=1).real

    def has_laplacian_conductance(self, tol: float = 1e-12) -> bool:
        """Whether ``G 1 = 0`` within ``tol`` relative to the largest conductance."""
        scale = max(1.0, float(np.max(np.abs(self.Y.real), initial=0.0)))
        return float(np.max(np.abs(self.shunt_conductance), initial=0.0)) <= tol * scale

    @property
    def size(self) -> int:
        """Number of buses."""
        return len(self.bus_ids)


@dataclass(frozen=True)
class GammaCertificate:
    """Outcome of the ``beta_i X_i <= 1`` test."""

    condition_holds: bool
    strict_at: tuple[int, ...]
    products: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class ReducedNetwork:
    """Kron-reduced coupling between machine internal nodes."""

    Gamma: ComplexArray
    Yred: ComplexArray
    reactances: FloatArray
    beta: FloatArray
    bus_ids: tuple[int, ...]
    lossless: bool
    certificate: GammaCertificate
    gred_lambda_min: float
    bred_lambda_max: float
    shunt_conductance: FloatArray
    kernel_is_exact: bool
    Btilred: FloatArray | None = None

    @property
    def Gred(self) -> FloatArray:  # noqa: N802
        """Reduced conductance matrix."""
        return self.Yred.real.copy()

    @property
    def Bred(self) -> FloatArray:  # noqa: N802
        """Reduced susceptance matrix."""
        return self.Yred.imag.copy()

    @property
    def gamma_inv(self) -> ComplexArray:
        """``Gamma^-1 = j Yred``, whose entries are ``-Bred + j Gred``."""
        return 1j * self.Yred

    @property
    def kernel_vector(self) -> FloatArray:
        """``diag(1 - beta X') 1``.

        ``Gred`` annihilates it only when ``kernel_is_exact``; a network whose lossy buses
        were eliminated keeps shunt conductance and loses that property.
        """
        return 1.0 - self.beta * self.reactances

    @property
    def size(self) -> int:
        """Number of machine nodes."""
        return len(self.bus_ids)


def line_graph(spec: NetworkSpec) -> nx.Graph:
    """Undirected graph of buses and lines."""
    graph = nx.Graph()
    graph.add_nodes_from(spec.buses)
    graph.add_edges_from((line.from_bus, line.to_bus) for line in spec.lines)
    return graph


def build_admittance(spec: NetworkSpec) -> AdmittanceMatrix:
    """Assemble ``Y`` from pi-type lines.

    Off-diagonal entries are ``-y_ij`` with ``y_ij = g_ij + j b_ij``; the diagonal collects
    ``y_ij + j omega0 c_ij / 2`` over incident lines.

    Raises:
        DisconnectedNetworkError: If some bus cannot be reached from the others.

    """
    graph = line_graph(spec)
    if not nx.is_connected(graph):
        islands = sorted(sorted(c) for c in nx.connected_components(graph))
        raise DisconnectedNetworkError(f"network splits into islands {islands}")

    index = {bus: k for k, bus in enumerate(spec.buses)}
    n = len(spec.buses)
    omega0 = spec.system.omega0
    Y = np.zeros((n, n), dtype=np.complex128)
    beta = np.zeros(n)
    for line in spec.lines:
        i, j = index[line.from_bus], index[line.to_bus]
        series = complex(line.g, line.b)
        half_shunt = 0.5 * omega0 * line.c
        Y[i, j] -= series
        Y[j, i] -= series
        Y[i, i] += series + 1j * half_shunt
        Y[j, j] += series + 1j * half_shunt
        beta[i] += half_shunt
        beta[j] += half_shunt
    logger.debug("Assembled %dx%d admittance matrix from %d lines", n, n, len(spec.lines))
    return AdmittanceMatrix(Y=Y, beta=beta, bus_ids=tuple(spec.buses))


def eliminate_zero_injection(adm: AdmittanceMatrix, keep: Sequence[int]) -> AdmittanceMatrix:
    """Eliminate every bus not in ``keep`` with ``Y_pp - Y_pq Y_qq^-1 Y_qp``.

    The shunt constants of the result are read back as ``Im(Y 1)``. Eliminating buses behind
    lossy lines leaves ``Re(Y 1)`` nonzero, so ``G`` of the result is no longer a Laplacian.
    """
    position = {bus: k for k, bus in enumerate(adm.bus_ids)}
    p = [position[bus] for bus in keep]
    q = [k for k, bus in enumerate(adm.bus_ids) if bus not in set(keep)]
    if not q:
        return adm

    Y_pp = adm.Y[np.ix_(p, p)]
    Y_pq = adm.Y[np.ix_(p, q)]
    Y_qp = adm.Y[np.ix_(q, p)]
    Y_qq = adm.Y[np.ix_(q, q)]
    if reciprocal_condition(Y_qq) < 1e-14:  # noqa: PLR2004
        raise SingularNetworkError("passive-bus block of Y is singular")

    Y = Y_pp - Y_pq @ scipy.linalg.solve(Y_qq, Y_qp)
    Y = 0.5 * (Y + Y.T)
    eliminated = [adm.bus_ids[k] for k in q]
    logger.info(
        "Eliminated zero-injection buses %s; the retained %d-bus matrix is derived, not tabulated",
        eliminated,
        len(p),
    )
    reduced = AdmittanceMatrix(Y=Y, beta=Y.sum(axis=1).imag, bus_ids=tuple(keep))
    if not reduced.has_laplacian_conductance():
        logger.info(
            "Elimination left shunt conductance up to %.3e; G 1 = 0 no longer holds",
            float(np.max(np.abs(reduced.shunt_conductance))),
        )
    return reduced


def check_gamma_nonsingular(adm: AdmittanceMatrix, reactances: FloatArray) -> GammaCertificate:
    """Test ``beta_i X_i <= 1`` for every bus with strict inequality somewhere."""
    products = adm.beta * np.asarray(reactances, dtype=np.float64)
    strict = tuple(bus for bus, v in zip(adm.bus_ids, products, strict=True) if v < 1.0)
    holds = bool(np.all(products <= 1.0)) and bool(strict)
    return GammaCertificate(
        condition_holds=holds,
        strict_at=strict,
        products=tuple(float(v) for v in products),
    )


def kron_reduce(
    adm: AdmittanceMatrix,
    reactances: FloatArray,
    *,
    rcond_threshold: float = 1e-12,
    lossless_tol: float = 1e-10,
    eps: float = 1e-8,
) -> ReducedNetwork:
    """Reduce the network onto machine internal nodes behind ``reactances``.

    Args:
        adm: Bus admittance matrix with one machine per bus.
        reactances: Transient reactance of each machine (synchronous for constant-EMF
            machines).
        rcond_threshold: Reciprocal condition number below which Gamma counts as singular.
        lossless_tol: Largest ``|Gred|`` entry still treated as lossless.
        eps: Relative tolerance of the definiteness certificates.

    Returns:
        The reduced network with its definiteness certificates.

    Raises:
        SingularNetworkError: If Gamma is numerically singular.

    """
    x = np.asarray(reactances, dtype=np.float64)
    certificate = check_gamma_nonsingular(adm, x)
    if not certificate.condition_holds:
        logger.warning("beta*X' exceeds 1 at some bus: %s", certificate.products)

    X = np.diag(x)
    Gamma = X - 1j * (X @ adm.Y.conj() @ X)
    rcond = reciprocal_condition(Gamma)
    logger.debug("Gamma reciprocal condition number %.3e", rcond)
    if rcond < rcond_threshold:
        raise SingularNetworkError(
            f"Gamma is singular (rcond={rcond:.3e}); "
            f"beta*X' <= 1 {'holds' if certificate.condition_holds else 'is violated'}",
            certificate=certificate,
        )

    Yred = -1j * np.linalg.inv(Gamma)
    Yred = 0.5 * (Yred + Yred.T)
    gred_min, _ = extreme_eigenvalues(Yred.real)
    _, bred_max = extreme_eigenvalues(Yred.imag)
    lossless = float(np.max(np.abs(Yred.real))) <= lossless_tol
    if gred_min < -eps * max(1.0, float(np.max(np.abs(Yred.real)))):
        logger.warning("Reduced conductance is not PSD: lambda_min=%.3e", gred_min)
    if bred_max >= 0.0:
        logger.warning("Reduced susceptance is not negative definite: lambda_max=%.3e", bred_max)

    return ReducedNetwork(
        Gamma=Gamma,
        Yred=Yred,
        reactances=x,
        beta=adm.beta.copy(),
        bus_ids=adm.bus_ids,
        lossless=lossless,
        certificate=certificate,
        gred_lambda_min=gred_min,
        bred_lambda_max=bred_max,
        shunt_conductance=adm.shunt_conductance,
        kernel_is_exact=adm.has_laplacian_conductance(),
    )


def build_btilred(adm: AdmittanceMatrix, sync_reactances: FloatArray) -> FloatArray:
    """Reduced susceptance of the constant-EMF network behind synchronous reactances.

    Raises:
        SusceptanceSignError: If ``beta_i X_i <= 1`` fails, or an entry comes out positive.

    """
    x = np.asarray(sync_reactances, dtype=np.float64)
    certificate = check_gamma_nonsingular(adm, x)
    if not certificate.condition_holds:
        raise SusceptanceSignError(
            f"beta*X <= 1 with a strict bus is required, got products {certificate.products}",
        )
    X = np.diag(x)
    K = X - X @ adm.B @ X
    Btilred = -np.linalg.inv(K)
    Btilred = 0.5 * (Btilred + Btilred.T)
    worst = float(Btilred.max())
    if worst > 1e-10 * max(1.0, float(np.abs(Btilred).max())):  # noqa: PLR2004
        raise SusceptanceSignError(f"Btilred has a positive entry {worst:.3e}")
    return Btilred
