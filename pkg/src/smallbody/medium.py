"""Born forward amplitude for a potential density on a voxel grid, and its
Fourier inverse.

A :class:`PotentialGrid` stores samples at cell centres
``origin + spacing * (i, j, k)``; every cell has volume ``spacing**3``.
With a plane wave ``u0 = exp(ik nu.y)`` the Born amplitude is

    f = -(1/4pi) sum_cells q(y) exp(-i kappa.y) dV,   kappa = k (n - nu),

so ``-4 pi f`` is the discrete Fourier transform of ``q`` at ``kappa``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CoverageError, InvalidArgumentError, MeshParseError

__all__ = [
    "PotentialGrid",
    "BornDatum",
    "BornData",
    "density_from_bodies",
    "born_amplitude",
    "born_amplitudes",
    "kappa_grid",
    "directions_for_kappa",
    "synthesize_born_data",
    "born_inverse",
    "load_grid",
    "save_grid",
    "IMAGINARY_RESIDUE_THRESHOLD",
]

IMAGINARY_RESIDUE_THRESHOLD = 1e-8


@dataclass(frozen=True, eq=False)
class PotentialGrid:
    origin: np.ndarray
    spacing: float
    dims: tuple[int, int, int]
    values: np.ndarray  # shape dims, indexed [i, j, k]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=float)
        dims = tuple(int(d) for d in self.dims)
        if origin.shape != (3,):
            raise InvalidArgumentError("grid origin must be a 3-vector")
        if not self.spacing > 0:
            raise InvalidArgumentError("grid spacing must be positive")
        if len(dims) != 3 or min(dims) < 1:
            raise InvalidArgumentError("grid dims must be three positive integers")
        values = np.asarray(self.values)
        if values.size != math.prod(dims):
            raise InvalidArgumentError(f"expected {math.prod(dims)} grid values, got {values.size}")
        values = values.reshape(dims)
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("grid values must be finite")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, origin, spacing: float, dims) -> "PotentialGrid":
        return cls(origin, spacing, tuple(dims), np.zeros(tuple(int(d) for d in dims)))

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(self.origin[a] + self.spacing * np.arange(self.dims[a]) for a in range(3))

    def points(self) -> np.ndarray:
        x, y, z = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([x, y, z], axis=-1)

    def with_values(self, values, **meta) -> "PotentialGrid":
        return PotentialGrid(self.origin, self.spacing, self.dims, values, dict(meta))


@dataclass(frozen=True)
class BornDatum:
    k: float
    nu: np.ndarray
    n: np.ndarray
    f: complex

    def __post_init__(self) -> None:
        if not self.k > 0:
            raise InvalidArgumentError("wavenumber must be positive")
        for name in ("nu", "n"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-10:
                raise InvalidArgumentError(f"{name} must be a unit 3-vector")
            object.__setattr__(self, name, v)

    @property
    def kappa(self) -> np.ndarray:
        return self.k * (self.n - self.nu)


@dataclass(frozen=True, eq=False)
class BornData:
    """Vectorized set of amplitudes keyed by momentum transfer."""

    kappa: np.ndarray  # (M, 3)
    f: np.ndarray  # (M,)

    @classmethod
    def from_data(cls, data) -> "BornData":
        if isinstance(data, BornData):
            return data
        data = list(data)
        if not data:
            return cls(np.zeros((0, 3)), np.zeros(0, dtype=complex))
        return cls(np.array([d.kappa for d in data]), np.array([d.f for d in data], dtype=complex))


def density_from_bodies(
    N_density: PotentialGrid,
    C: float,
    h: complex | None = None,
    S: float | None = None,
) -> PotentialGrid:
    """``q = N C`` for sound-soft bodies, or ``q = N hS / (1 + hS/C)`` for
    impedance bodies when ``h`` and ``S`` are given."""
    N = np.asarray(N_density.values)
    if np.any(np.real(N) < 0) or np.iscomplexobj(N) and np.any(np.imag(N) != 0):
        raise InvalidArgumentError("number density must be real and non-negative")
    if not C > 0:
        raise InvalidArgumentError("capacitance must be positive")
    if h is None:
        factor: complex = C
    else:
        if S is None or not S > 0:
            raise InvalidArgumentError("impedance density needs a positive surface area S")
        factor = h * S / (1.0 + h * S / C)
        if np.imag(factor) == 0:
            factor = float(np.real(factor))
    return N_density.with_values(np.real(N) * factor)


def _phase(grid: PotentialGrid, kappa: np.ndarray) -> np.ndarray:
    """Per-axis phases exp(-i kappa_a y_a), each shaped (M, dims[a])."""
    return [np.exp(-1j * kappa[:, a, None] * ax[None, :]) for a, ax in enumerate(grid.axes())]


def born_amplitudes(grid: PotentialGrid, kappa) -> np.ndarray:
    """Born amplitudes at an array of momentum transfers ``kappa`` (M, 3)."""
    kappa = np.atleast_2d(np.asarray(kappa, dtype=float))
    px, py, pz = _phase(grid, kappa)
    s = np.einsum("ijk,mi,mj,mk->m", grid.values, px, py, pz, optimize=True)
    return -grid.cell_volume / (4.0 * math.pi) * s


def born_amplitude(grid: PotentialGrid, k: float, nu, n) -> complex:
    if not k > 0:
        raise InvalidArgumentError("wavenumber must be positive")
    nu = np.asarray(nu, dtype=float)
    n = np.asarray(n, dtype=float)
    return complex(born_amplitudes(grid, k * (n - nu))[0])


def _frequencies(n: int, spacing: float) -> np.ndarray:
    return 2.0 * math.pi * np.fft.fftfreq(n, d=spacing)


def kappa_grid(target: PotentialGrid) -> np.ndarray:
    """Momentum transfers needed to invert onto ``target``: the DFT frequency
    lattice, shaped ``(nx, ny, nz, 3)`` in FFT order."""
    kx, ky, kz = (_frequencies(d, target.spacing) for d in target.dims)
    gx, gy, gz = np.meshgrid(kx, ky, kz, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1)


def directions_for_kappa(kappa, k: float) -> tuple[np.ndarray, np.ndarray]:
    """Incident and observation directions with ``k (n - nu) = kappa``."""
    kappa = np.asarray(kappa, dtype=float)
    mag = float(np.linalg.norm(kappa))
    if mag > 2.0 * k * (1 + 1e-12):
        raise InvalidArgumentError(f"|kappa| = {mag} exceeds 2k = {2 * k}")
    if mag == 0.0:
        e = np.array([0.0, 0.0, 1.0])
        return e, e.copy()
    khat = kappa / mag
    helper = np.eye(3)[np.argmin(np.abs(khat))]
    perp = np.cross(khat, helper)
    perp /= np.linalg.norm(perp)
    s = min(mag / (2.0 * k), 1.0)
    c = math.sqrt(max(0.0, 1.0 - s * s))
    n = s * khat + c * perp
    nu = -s * khat + c * perp
    return nu, n


def synthesize_born_data(grid: PotentialGrid, kappa=None) -> BornData:
    """Forward amplitudes on ``kappa`` (default: the full inversion lattice)."""
    if kappa is None:
        kappa = kappa_grid(grid).reshape(-1, 3)
    kappa = np.asarray(kappa, dtype=float).reshape(-1, 3)
    return BornData(kappa, born_amplitudes(grid, kappa))


def born_inverse(data, target: PotentialGrid, rtol: float = 1e-6) -> PotentialGrid:
    """Recover ``q`` on ``target`` from amplitudes covering its DFT lattice.

    ``-4 pi f(kappa)`` is matched to every lattice frequency and inverted by
    an inverse FFT.  The relative imaginary residue of the result is recorded
    in ``meta``; a residue above :data:`IMAGINARY_RESIDUE_THRESHOLD` adds a
    warning (data inconsistent with a real potential).
    """
    data = BornData.from_data(data)
    nx, ny, nz = target.dims
    h = target.spacing
    # Map each datum to integer lattice indices m with kappa = 2 pi m / (n h).
    spectrum = np.zeros(target.dims, dtype=complex)
    filled = np.zeros(target.dims, dtype=bool)
    if len(data.kappa):
        scaled = data.kappa * (np.array([nx, ny, nz]) * h / (2.0 * math.pi))
        idx = np.rint(scaled)
        on_lattice = np.all(np.abs(scaled - idx) <= rtol * np.maximum(1.0, np.abs(scaled)), axis=1)
        idx = idx.astype(np.int64)
        limits = np.array([nx, ny, nz])
        in_band = np.all((idx >= -(limits // 2)) & (idx <= (limits - 1) // 2), axis=1)
        use = on_lattice & in_band
        ii = np.mod(idx[use], limits)
        spectrum[ii[:, 0], ii[:, 1], ii[:, 2]] = -4.0 * math.pi * data.f[use]
        filled[ii[:, 0], ii[:, 1], ii[:, 2]] = True
    if not filled.all():
        missing = np.argwhere(~filled)
        freqs = [np.rint(np.fft.fftfreq(d) * d).astype(int) for d in target.dims]
        m = np.stack([freqs[a][missing[:, a]] for a in range(3)], axis=1)
        extents = {ax: [int(m[:, a].min()), int(m[:, a].max())] for a, ax in enumerate("xyz")}
        raise CoverageError(
            f"{len(missing)} of {filled.size} lattice frequencies have no datum; "
            f"missing index extents {extents}",
            missing={"count": int(len(missing)), "extents": extents},
        )
    # Undo the origin phase, then the discrete transform sum_y q e^{-i kappa y} dV.
    kx, ky, kz = (_frequencies(d, h) for d in target.dims)
    o = target.origin
    spectrum *= np.exp(1j * kx * o[0])[:, None, None]
    spectrum *= np.exp(1j * ky * o[1])[None, :, None]
    spectrum *= np.exp(1j * kz * o[2])[None, None, :]
    q = np.fft.ifftn(spectrum) / target.cell_volume
    peak = float(np.max(np.abs(q))) if q.size else 0.0
    residue = float(np.max(np.abs(q.imag)) / peak) if peak > 0 else 0.0
    warnings = []
    if residue > IMAGINARY_RESIDUE_THRESHOLD:
        warnings.append("imaginary_residue")
    return target.with_values(q.real, imaginary_residue=residue, warnings=warnings)


# --------------------------------------------------------------------------
# File format: one JSON document {origin, spacing, dims, values}, values flat
# with x varying fastest.
# --------------------------------------------------------------------------


def save_grid(grid: PotentialGrid, path) -> None:
    doc = {
        "origin": [float(x) for x in grid.origin],
        "spacing": float(grid.spacing),
        "dims": list(grid.dims),
        "values": [float(v) for v in np.real(grid.values).ravel(order="F")],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def grid_from_document(doc: dict) -> PotentialGrid:
    try:
        dims = tuple(int(d) for d in doc["dims"])
        values = np.asarray(doc.get("values", np.zeros(math.prod(dims))), dtype=float)
        if values.size != math.prod(dims):
            raise InvalidArgumentError(f"expected {math.prod(dims)} values, got {values.size}")
        return PotentialGrid(
            doc["origin"], float(doc["spacing"]), dims, values.reshape(dims, order="F")
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshParseError(f"bad potential grid document: {exc}") from exc


def load_grid(path) -> PotentialGrid:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeshParseError(f"{path}: invalid JSON: {exc}") from exc
    return grid_from_document(doc)
