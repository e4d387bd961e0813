"""Convergent surface-integral series for polarizability and capacitance.

All inner products are area weighted on both sides, ``<f, g> = sum_s a_s f_s g_s``,
and the iterated double-layer chain uses :func:`smallbody.kernels.apply_iterated`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    InsufficientDataError,
    InvalidArgumentError,
    NumericalBreakdownError,
    SolverError,
)
from .kernels import (
    DEFAULT_ORDERING,
    DOUBLE_LAYER,
    SINGLE_LAYER,
    KernelMatrix,
    apply_iterated,
)
from .mesh import TriMesh, mesh_metrics

__all__ = [
    "ConvergenceReport",
    "Contrast",
    "moment_b",
    "moment_sequence",
    "series_coefficient",
    "alpha_series",
    "alpha_first_order",
    "beta_series",
    "capacitance_series",
    "capacitance_bem_oracle",
    "fit_geometric_decay",
    "sphere_polarizability",
    "DEFAULT_ORDER",
    "DEFAULT_TOL",
]

DEFAULT_ORDER = 6
DEFAULT_TOL = 1e-6
_TWO_PI = 2.0 * math.pi


@dataclass
class ConvergenceReport:
    orders: list[int]
    order_values: list  # floats or 3x3 arrays, one per order
    fitted_A: float = float("nan")
    fitted_q: float = float("nan")
    converged: bool = False
    stopped_early: bool = False
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        def plain(v):
            return np.asarray(v).tolist()

        return {
            "orders": list(self.orders),
            "values": [plain(v) for v in self.order_values],
            "fitted_A": _finite_or_none(self.fitted_A),
            "fitted_q": _finite_or_none(self.fitted_q),
            "converged": bool(self.converged),
            "stopped_early": bool(self.stopped_early),
            "notes": list(self.notes),
        }


def _finite_or_none(x: float):
    return float(x) if np.isfinite(x) else None


@dataclass(frozen=True)
class Contrast:
    """Material contrast ``gamma = (eps - eps0) / (eps + eps0)``."""

    gamma: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.gamma) or abs(self.gamma) > 1.0:
            raise InvalidArgumentError(f"contrast must lie in [-1, 1], got {self.gamma!r}")

    @classmethod
    def from_permittivity(cls, eps: float, eps0: float = 1.0) -> "Contrast":
        if eps < 0 or eps0 <= 0:
            raise InvalidArgumentError("permittivities must be non-negative (eps0 > 0)")
        return cls((eps - eps0) / (eps + eps0))


def _gamma(gamma) -> float:
    return gamma.gamma if isinstance(gamma, Contrast) else Contrast(float(gamma)).gamma


def _check_kernels(mesh: TriMesh, G: KernelMatrix, Psi: KernelMatrix) -> None:
    if G.kind != SINGLE_LAYER or Psi.kind != DOUBLE_LAYER:
        raise InvalidArgumentError("expected (single_layer, double_layer) kernel matrices")
    if G.mesh_id != mesh.mesh_id or Psi.mesh_id != mesh.mesh_id:
        raise InvalidArgumentError("kernel matrices were assembled on a different mesh")


# --------------------------------------------------------------------------
# Moment tensors
# --------------------------------------------------------------------------


def moment_sequence(
    mesh: TriMesh,
    G: KernelMatrix,
    Psi: KernelMatrix,
    m_max: int,
    ordering: str = DEFAULT_ORDERING,
) -> list[np.ndarray]:
    """``[b(0), ..., b(m_max)]`` sharing one pass of the iterated chain."""
    if int(m_max) != m_max or m_max < 0:
        raise InvalidArgumentError(f"moment order must be a non-negative integer, got {m_max!r}")
    _check_kernels(mesh, G, Psi)
    p = mesh.panels
    out = [mesh_metrics(mesh).volume * np.eye(3)]
    if m_max == 0:
        return out
    left = G.entries.T @ (p.areas[:, None] * p.normals)  # G^T (a N_i)
    chain = np.array(p.normals)
    for m in range(1, int(m_max) + 1):
        out.append(left.T @ chain)
        if m < m_max:
            chain = apply_iterated(Psi, chain, 1, ordering)
    return out


def moment_b(
    mesh: TriMesh,
    G: KernelMatrix,
    Psi: KernelMatrix,
    m: int,
    ordering: str = DEFAULT_ORDERING,
) -> np.ndarray:
    """Moment tensor ``b(m)_ij = <N_i, G Psi^(m-1) N_j>``; ``b(0) = V I``."""
    return moment_sequence(mesh, G, Psi, m, ordering)[-1]


def series_coefficient(gamma: float, n: int, m: int) -> float:
    """``(gamma^(n+2) - gamma^(m+1)) / (gamma - 1)`` for ``0 <= m <= n``.

    Evaluated as ``gamma^(m+1) * sum_{k=0}^{n-m} gamma^k``, which has no
    removable singularity at ``gamma = 1`` (where it equals ``n + 1 - m``).
    """
    if gamma == 1.0:
        return float(n + 1 - m)
    return gamma ** (m + 1) * sum(gamma**k for k in range(n - m + 1))


def _alpha_order(bs: list[np.ndarray], gamma: float, n: int, volume: float) -> np.ndarray:
    total = np.zeros((3, 3))
    for m in range(n + 1):
        c = series_coefficient(gamma, n, m)
        if c != 0.0:
            total += ((-1.0) ** m / _TWO_PI**m) * c * bs[m]
    return (2.0 / volume) * total


def alpha_first_order(b1: np.ndarray, gamma: float, volume: float) -> np.ndarray:
    """Closed first-order form ``2(g + g^2) I - g^2 b(1) / (pi V)``."""
    return 2.0 * (gamma + gamma**2) * np.eye(3) - gamma**2 * np.asarray(b1) / (math.pi * volume)


def alpha_series(
    mesh: TriMesh,
    G: KernelMatrix,
    Psi: KernelMatrix,
    gamma,
    n: int = DEFAULT_ORDER,
    tol: float | None = DEFAULT_TOL,
    ordering: str = DEFAULT_ORDERING,
    reference: np.ndarray | None = None,
) -> tuple[np.ndarray, ConvergenceReport]:
    """Polarizability tensor approximant of order ``n`` and the per-order report.

    Orders ``1..n`` are evaluated; with ``tol`` set, evaluation stops early
    once two successive orders differ by less than ``tol`` (relative,
    Frobenius norm).  The report's geometric fit uses ``reference`` if given,
    otherwise the last computed order.
    """
    g = _gamma(gamma)
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"series order must be a positive integer, got {n!r}")
    n = int(n)
    bs = moment_sequence(mesh, G, Psi, n, ordering)
    volume = float(bs[0][0, 0])
    values: list[np.ndarray] = []
    stopped = False
    for order in range(1, n + 1):
        values.append(_alpha_order(bs, g, order, volume))
        if tol and order > 1:
            scale = np.linalg.norm(values[-1])
            if np.linalg.norm(values[-1] - values[-2]) <= tol * scale:
                stopped = order < n
                break
    report = ConvergenceReport(
        orders=list(range(1, len(values) + 1)), order_values=values, stopped_early=stopped
    )
    ref = values[-1] if reference is None else np.asarray(reference, dtype=float)
    _attach_fit(report, [float(np.linalg.norm(v - ref)) for v in values], float(np.linalg.norm(ref)))
    return values[-1], report


def beta_series(
    mesh: TriMesh,
    G: KernelMatrix,
    Psi: KernelMatrix,
    n: int = DEFAULT_ORDER,
    tol: float | None = DEFAULT_TOL,
    ordering: str = DEFAULT_ORDERING,
    reference: np.ndarray | None = None,
) -> tuple[np.ndarray, ConvergenceReport]:
    """Magnetic polarizability: the polarizability series at ``gamma = -1``."""
    return alpha_series(mesh, G, Psi, -1.0, n, tol=tol, ordering=ordering, reference=reference)


def sphere_polarizability(gamma: float) -> float:
    """Exact sphere value ``6 gamma / (3 - gamma)``, i.e. ``3(eps-eps0)/(eps+2eps0)``."""
    return 6.0 * gamma / (3.0 - gamma)


# --------------------------------------------------------------------------
# Capacitance
# --------------------------------------------------------------------------


def capacitance_series(
    mesh: TriMesh,
    G: KernelMatrix,
    Psi: KernelMatrix,
    epsilon0: float = 1.0,
    n: int = DEFAULT_ORDER,
    tol: float | None = DEFAULT_TOL,
    ordering: str = DEFAULT_ORDERING,
    reference: float | None = None,
) -> tuple[float, ConvergenceReport]:
    """Capacitance approximants ``C(0..n)``.

    ``C(k) = 4 pi eps0 S^2 / [(-1/2pi)^k <1, G Psi^k 1>]``; ``C(0)`` is the
    lower bound ``4 pi eps0 S^2 / J``.
    """
    if int(n) != n or n < 0:
        raise InvalidArgumentError(f"series order must be a non-negative integer, got {n!r}")
    if not epsilon0 > 0:
        raise InvalidArgumentError(f"epsilon0 must be positive, got {epsilon0!r}")
    _check_kernels(mesh, G, Psi)
    areas = mesh.panels.areas
    total_area = float(areas.sum())
    left = G.entries.T @ areas
    chain = np.ones(len(areas))
    values: list[float] = []
    stopped = False
    for order in range(int(n) + 1):
        bracket = float(left @ chain)
        if not bracket > 0.0 or not np.isfinite(bracket):
            raise NumericalBreakdownError(
                f"capacitance series bracket is {bracket!r} at order {order}; quadrature broke down"
            )
        values.append(4.0 * math.pi * epsilon0 * total_area**2 / bracket)
        if tol and order > 0 and abs(values[-1] - values[-2]) <= tol * abs(values[-1]):
            stopped = order < n
            break
        if order < n:
            chain = apply_iterated(Psi, chain, 1, ordering) * (-1.0 / _TWO_PI)
    report = ConvergenceReport(
        orders=list(range(len(values))), order_values=values, stopped_early=stopped
    )
    ref = values[-1] if reference is None else float(reference)
    _attach_fit(report, [abs(v - ref) for v in values], abs(ref))
    return values[-1], report


def capacitance_bem_oracle(mesh: TriMesh, G: KernelMatrix, epsilon0: float = 1.0) -> float:
    """Capacitance from the first-kind solve ``(1/4pi) G sigma = 1``.

    Returns ``eps0 * sum_t area_t sigma_t``.  Independent of the series path.
    """
    if G.kind != SINGLE_LAYER or G.mesh_id != mesh.mesh_id:
        raise InvalidArgumentError("expected the single-layer matrix of this mesh")
    if not epsilon0 > 0:
        raise InvalidArgumentError(f"epsilon0 must be positive, got {epsilon0!r}")
    A = G.entries / (4.0 * math.pi)
    anorm = np.linalg.norm(A, 1)
    try:
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SolverError(f"single-layer factorization failed: {exc}") from exc
    rcond, info = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    condition = 1.0 / rcond if rcond > 0 else float("inf")
    if info != 0 or rcond < 10 * np.finfo(float).eps:
        raise SolverError(
            f"single-layer system is singular or ill-conditioned (cond ~ {condition:.3e})",
            condition=condition,
        )
    sigma = scipy.linalg.lu_solve((lu, piv), np.ones(len(A)))
    return float(epsilon0 * (mesh.panels.areas @ sigma))


# --------------------------------------------------------------------------
# Geometric decay fit
# --------------------------------------------------------------------------


def _usable(residuals, scale: float) -> tuple[np.ndarray, np.ndarray]:
    r = np.abs(np.asarray(residuals, dtype=float))
    floor = 1e-13 * max(scale, np.finfo(float).tiny)
    idx = np.flatnonzero(r > floor)
    return idx.astype(float), r[idx]


def _fit(orders: np.ndarray, residuals: np.ndarray) -> tuple[float, float]:
    if len(residuals) < 3:
        raise InsufficientDataError(
            f"need at least 3 non-zero residuals to fit a geometric decay, have {len(residuals)}"
        )
    slope, intercept = np.polyfit(orders, np.log(residuals), 1)
    return float(math.exp(intercept)), float(math.exp(slope))


def _attach_fit(report: ConvergenceReport, residuals: list[float], scale: float) -> None:
    idx, r = _usable(residuals, scale)
    orders = np.asarray(report.orders, dtype=float)[idx.astype(int)]
    try:
        report.fitted_A, report.fitted_q = _fit(orders, r)
    except InsufficientDataError as exc:
        report.notes.append(str(exc))
        # Successive orders agreeing to tolerance still counts as converged.
        report.converged = report.stopped_early or len(report.order_values) > 1 and np.allclose(
            report.order_values[-1], report.order_values[-2], rtol=1e-12, atol=0.0
        )
        return
    report.converged = 0.0 < report.fitted_q < 1.0


def fit_geometric_decay(order_values, reference: float | None = None) -> tuple[float, float]:
    """Least-squares fit of ``log|v_n - reference| = log A + n log q``.

    Order ``n`` is the list index.  Without a reference the last value is used
    as a proxy (its own residual is then zero and excluded).  Raises
    :class:`InsufficientDataError` when fewer than three residuals are
    non-zero.
    """
    values = np.asarray(order_values, dtype=float)
    if values.ndim != 1 or len(values) < 3:
        raise InsufficientDataError("need at least 3 orders to fit a geometric decay")
    ref = values[-1] if reference is None else float(reference)
    idx, r = _usable(values - ref, float(np.max(np.abs(values))) or 1.0)
    return _fit(idx, r)
