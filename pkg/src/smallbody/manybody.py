"""Few-body sound-soft scattering with point-capacitor coupling.

Each body is reduced to a position ``t_j`` and capacitance ``C_j``.  The total
charges ``Q_j`` solve

    Q_m + sum_{j != m} C_m exp(ik d_mj) / (4 pi d_mj) Q_j = -C_m u0(t_m),

and the far field is ``f(n) = (1/4pi) sum_j exp(-ik n.t_j) Q_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DivergenceError, InvalidArgumentError, SolverError

__all__ = [
    "BodyEnsemble",
    "ChargeSystem",
    "ChargeVector",
    "assemble_charge_system",
    "solve_charges",
    "manybody_amplitude",
    "coupling_margin",
]


@dataclass(frozen=True, eq=False)
class BodyEnsemble:
    positions: np.ndarray  # (r, 3)
    capacitances: np.ndarray  # (r,), eps0 = 1 units
    k: float
    nu: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    amplitude: complex = 1.0

    def __post_init__(self) -> None:
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        cap = np.atleast_1d(np.asarray(self.capacitances, dtype=float))
        nu = np.asarray(self.nu, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or len(pos) == 0:
            raise InvalidArgumentError("positions must have shape (r, 3) with r >= 1")
        if cap.shape != (len(pos),):
            raise InvalidArgumentError("need one capacitance per body")
        if not np.all(cap > 0):
            raise InvalidArgumentError("capacitances must be positive")
        if self.k < 0:
            raise InvalidArgumentError("wavenumber must be non-negative")
        if nu.shape != (3,) or abs(np.linalg.norm(nu) - 1.0) > 1e-10:
            raise InvalidArgumentError("nu must be a unit 3-vector")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "capacitances", cap)
        object.__setattr__(self, "nu", nu)

    def __len__(self) -> int:
        return len(self.capacitances)

    def distances(self) -> np.ndarray:
        d = np.linalg.norm(self.positions[:, None, :] - self.positions[None, :, :], axis=2)
        off = ~np.eye(len(self), dtype=bool)
        if np.any(d[off] == 0.0):
            i, j = np.argwhere((d == 0.0) & off)[0]
            raise InvalidArgumentError(f"bodies {i} and {j} are at the same position")
        return d

    def incident(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.k * (self.positions @ self.nu))

    def separation_ratio(self) -> float:
        """Smallest distance over the largest equivalent-sphere radius C/(4 pi)."""
        if len(self) == 1:
            return math.inf
        d = self.distances()
        return float(d[~np.eye(len(self), dtype=bool)].min() / (self.capacitances.max() / (4 * math.pi)))


@dataclass
class ChargeSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    metadata: dict = field(default_factory=dict)


@dataclass
class ChargeVector:
    Q: np.ndarray
    residual: float
    method: str
    iterations: int = 0


def assemble_charge_system(ensemble: BodyEnsemble) -> ChargeSystem:
    d = ensemble.distances()
    C = ensemble.capacitances
    off = ~np.eye(len(ensemble), dtype=bool)
    A = np.eye(len(ensemble), dtype=complex)
    A[off] = (C[:, None] * np.exp(1j * ensemble.k * d) / (4.0 * math.pi * np.where(off, d, 1.0)))[off]
    rhs = -C * ensemble.incident()
    return ChargeSystem(A, rhs, {"coupling_margin": coupling_margin(ensemble), "r": len(ensemble)})


def coupling_margin(ensemble: BodyEnsemble) -> float:
    """``max_m sum_{j != m} C_m / (4 pi d_mj)``; below 1 the system is
    strictly diagonally dominant."""
    if len(ensemble) == 1:
        return 0.0
    d = ensemble.distances()
    np.fill_diagonal(d, np.inf)
    return float((ensemble.capacitances[:, None] / (4.0 * math.pi * d)).sum(axis=1).max())


def _relative_residual(A: np.ndarray, Q: np.ndarray, rhs: np.ndarray) -> float:
    scale = np.max(np.abs(rhs))
    r = np.max(np.abs(A @ Q - rhs))
    return float(r / scale) if scale > 0 else float(r)


def solve_charges(
    system: ChargeSystem,
    method: str = "direct",
    max_iter: int = 500,
    tol: float | None = None,
) -> ChargeVector:
    """Solve the charge system.

    ``direct`` uses a dense LU factorization.  ``jacobi`` iterates
    ``Q <- rhs - (A - I) Q`` from the uncoupled charges ``Q = rhs``.
    """
    A, rhs = system.matrix, system.rhs
    if method == "direct":
        tol = 1e-12 if tol is None else tol
        try:
            Q = scipy.linalg.solve(A, rhs)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise SolverError(f"charge system is singular: {exc}", condition=float(np.linalg.cond(A))) from exc
        res = _relative_residual(A, Q, rhs)
        if not res < tol:
            raise SolverError(
                f"direct solve residual {res:.3e} exceeds {tol:.1e}", condition=float(np.linalg.cond(A))
            )
        return ChargeVector(Q, res, "direct")
    if method != "jacobi":
        raise InvalidArgumentError(f"unknown method {method!r} (expected 'direct' or 'jacobi')")
    tol = 1e-12 if tol is None else tol
    off = A - np.diag(np.diag(A))
    diag = np.diag(A)
    Q = rhs / diag
    res = initial = _relative_residual(A, Q, rhs)
    for it in range(1, max_iter + 1):
        if res < tol:
            return ChargeVector(Q, res, "jacobi", it - 1)
        Q = (rhs - off @ Q) / diag
        res = _relative_residual(A, Q, rhs)
        if not np.isfinite(res) or res > 1e6 * max(initial, 1.0):
            raise DivergenceError(f"Jacobi iteration diverging at sweep {it}", res, it)
    if res < tol:
        return ChargeVector(Q, res, "jacobi", max_iter)
    raise DivergenceError(f"Jacobi did not reach tol {tol:.1e} in {max_iter} sweeps", res, max_iter)


def manybody_amplitude(ensemble: BodyEnsemble, Q, n) -> complex:
    q = np.asarray(Q.Q if isinstance(Q, ChargeVector) else Q, dtype=complex)
    if q.shape != (len(ensemble),):
        raise InvalidArgumentError(f"expected {len(ensemble)} charges, got shape {q.shape}")
    n = np.asarray(n, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-10:
        raise InvalidArgumentError("n must be a unit 3-vector")
    phase = np.exp(-1j * ensemble.k * (ensemble.positions @ n))
    return complex(phase @ q / (4.0 * math.pi))
