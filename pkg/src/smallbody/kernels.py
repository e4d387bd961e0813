"""Panel-collocation matrices for the kernels 1/r and its normal derivative.

Both matrices are collocated at flat-panel centroids.  The single-layer matrix
already carries the source-panel area, so ``G @ sigma`` approximates
``int sigma(t) / |s - t| dt``.  The double-layer matrix holds bare kernel
values ``psi(t, s) = N_t . (x_s - x_t) / |x_s - x_t|^3``; area weights are
applied by :func:`apply_iterated`.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateMeshError, InvalidArgumentError, MeshParseError
from .mesh import TriMesh

__all__ = [
    "KernelMatrix",
    "SurfaceField",
    "SINGLE_LAYER",
    "DOUBLE_LAYER",
    "ORDERINGS",
    "DEFAULT_ORDERING",
    "assemble_single_layer",
    "assemble_double_layer",
    "apply_iterated",
    "flat_triangle_potential",
    "single_layer_values",
    "double_layer_values",
    "gauss_residual",
    "save_kernel",
    "load_kernel",
]

SINGLE_LAYER = "single_layer"
DOUBLE_LAYER = "double_layer"
_KIND_CODES = {SINGLE_LAYER: 0, DOUBLE_LAYER: 1}

# "evaluation": (Psi f)(t) = sum_t' area(t') psi(t, t') f(t'), normal taken at the
# evaluation point, as in the chain psi(t, t1) psi(t1, t2) ...
# "source": the transposed chain psi(t1, t) ..., normal at the integration point.
ORDERINGS = ("evaluation", "source")
DEFAULT_ORDERING = "evaluation"

_MAGIC = b"SBKM"
_ROW_BLOCK = 512


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    entries: np.ndarray
    kind: str
    mesh_id: str
    areas: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class SurfaceField:
    """Per-panel values (scalar or vector) tied to a mesh."""

    values: np.ndarray
    mesh_id: str

    @classmethod
    def on(cls, mesh: TriMesh, values) -> "SurfaceField":
        values = np.asarray(values)
        if values.shape[0] != mesh.n_faces:
            raise InvalidArgumentError(
                f"field has {values.shape[0]} values but mesh has {mesh.n_faces} panels"
            )
        return cls(values, mesh.mesh_id)


def _thread_count(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("SBS_THREADS", "1") or 1)
    return max(1, int(threads))


def _blocked(n: int, fill, threads: int | None) -> None:
    blocks = [(i, min(i + _ROW_BLOCK, n)) for i in range(0, n, _ROW_BLOCK)]
    workers = _thread_count(threads)
    if workers == 1 or len(blocks) == 1:
        for lo, hi in blocks:
            fill(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda b: fill(*b), blocks))


def flat_triangle_potential(triangle, point) -> float:
    """Exact ``int_T dA / |point - y|`` for a point inside the plane of ``T``.

    Sums ``h * [asinh(l / h)]`` over the three edges, where ``h`` is the
    distance from the point to the edge line and ``l`` runs along the edge.
    """
    tri = np.asarray(triangle, dtype=float)
    p = np.asarray(point, dtype=float)
    total = 0.0
    for i in range(3):
        a, b = tri[i], tri[(i + 1) % 3]
        e = b - a
        length = np.linalg.norm(e)
        u = e / length
        foot = a + np.dot(p - a, u) * u
        h = np.linalg.norm(p - foot)
        if h == 0.0:
            continue
        l1, l2 = np.dot(a - foot, u), np.dot(b - foot, u)
        total += h * (np.arcsinh(l2 / h) - np.arcsinh(l1 / h))
    return float(total)


def single_layer_values(targets, sources) -> np.ndarray:
    """Bare ``1 / |x - y|`` with targets ``x`` as rows and sources ``y`` as columns."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    return 1.0 / np.linalg.norm(targets[:, None, :] - sources[None, :, :], axis=2)


def double_layer_values(points, normals, sources) -> np.ndarray:
    """``psi(t, s) = N_t . (x_s - x_t) / |x_s - x_t|^3``, rows ``t``, columns ``s``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    d = sources[None, :, :] - points[:, None, :]
    r = np.linalg.norm(d, axis=2)
    return np.einsum("tk,tsk->ts", normals, d) / r**3


def _self_potentials(mesh: TriMesh) -> np.ndarray:
    tri = mesh.vertices[mesh.faces]
    c = mesh.panels.centroids
    total = np.zeros(len(tri))
    for i in range(3):
        a, b = tri[:, i], tri[:, (i + 1) % 3]
        e = b - a
        u = e / np.linalg.norm(e, axis=1)[:, None]
        s = np.einsum("ij,ij->i", c - a, u)
        foot = a + s[:, None] * u
        h = np.linalg.norm(c - foot, axis=1)
        l1 = np.einsum("ij,ij->i", a - foot, u)
        l2 = np.einsum("ij,ij->i", b - foot, u)
        total += h * (np.arcsinh(l2 / h) - np.arcsinh(l1 / h))
    return total


def _check_centroids(c: np.ndarray, lo: int, hi: int, r: np.ndarray) -> None:
    r = r.copy()
    r[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
    if np.any(r == 0.0):
        s, t = np.argwhere(r == 0.0)[0]
        raise DegenerateMeshError(f"panels {lo + s} and {t} share a centroid")


def assemble_single_layer(mesh: TriMesh, threads: int | None = None) -> KernelMatrix:
    """``G[s, t] ~ int_{panel t} dA(y) / |x_s - y|`` at centroid ``x_s``.

    Off-diagonal entries use the one-point centroid rule ``area_t / r_st``;
    the diagonal is the exact flat-triangle self-potential.
    """
    p = mesh.panels
    c, areas = p.centroids, p.areas
    n = len(areas)
    out = np.empty((n, n))

    def fill(lo: int, hi: int) -> None:
        r = np.linalg.norm(c[lo:hi, None, :] - c[None, :, :], axis=2)
        _check_centroids(c, lo, hi, r)
        idx = np.arange(hi - lo)
        r[idx, lo + idx] = 1.0
        block = areas[None, :] / r
        block[idx, lo + idx] = 0.0
        out[lo:hi] = block

    _blocked(n, fill, threads)
    out[np.diag_indices(n)] = _self_potentials(mesh)
    out.setflags(write=False)
    return KernelMatrix(out, SINGLE_LAYER, mesh.mesh_id, areas)


def _double_layer_offdiag(mesh: TriMesh, threads: int | None) -> np.ndarray:
    p = mesh.panels
    c, normals = p.centroids, p.normals
    n = len(c)
    out = np.empty((n, n))

    def fill(lo: int, hi: int) -> None:
        d = c[None, :, :] - c[lo:hi, None, :]  # x_s - x_t, rows t
        r = np.linalg.norm(d, axis=2)
        _check_centroids(c, lo, hi, r)
        idx = np.arange(hi - lo)
        r[idx, lo + idx] = 1.0
        block = np.einsum("tk,tsk->ts", normals[lo:hi], d) / r**3
        block[idx, lo + idx] = 0.0
        out[lo:hi] = block

    _blocked(n, fill, threads)
    return out


def assemble_double_layer(mesh: TriMesh, threads: int | None = None) -> KernelMatrix:
    """``Psi[t, s] = psi(x_t, x_s) = N_t . (x_s - x_t) / |x_s - x_t|^3``.

    The diagonal is chosen per column so that the discrete solid-angle
    identity ``sum_t area_t Psi[t, s] = -2 pi`` holds exactly.
    """
    areas = mesh.panels.areas
    out = _double_layer_offdiag(mesh, threads)
    column = areas @ out
    out[np.diag_indices(len(areas))] = (-2.0 * np.pi - column) / areas
    out.setflags(write=False)
    return KernelMatrix(out, DOUBLE_LAYER, mesh.mesh_id, areas)


def gauss_residual(psi: KernelMatrix, diagonal: bool = True) -> float:
    """Max over columns of ``|sum_t area_t psi(t, s) + 2 pi| / 2 pi``.

    With ``diagonal=False`` the self-term is dropped, which measures the raw
    centroid-rule quadrature error that the deflated diagonal absorbs.
    """
    if psi.kind != DOUBLE_LAYER:
        raise InvalidArgumentError("gauss residual needs a double-layer matrix")
    m = psi.entries
    cols = psi.areas @ m
    if not diagonal:
        cols = cols - psi.areas * np.diagonal(m)
    return float(np.max(np.abs(cols + 2.0 * np.pi)) / (2.0 * np.pi))


def apply_iterated(K: KernelMatrix, f, m: int, ordering: str = DEFAULT_ORDERING):
    """Apply the area-weighted double-layer operator ``m`` times.

    ``f`` may be a :class:`SurfaceField` or a bare array of shape ``(n,)`` or
    ``(n, d)``; the result has the same type.
    """
    if K.kind != DOUBLE_LAYER:
        raise InvalidArgumentError("apply_iterated needs a double-layer matrix")
    if int(m) != m or m < 0:
        raise InvalidArgumentError(f"iteration count must be a non-negative integer, got {m!r}")
    if ordering not in ORDERINGS:
        raise InvalidArgumentError(f"ordering must be one of {ORDERINGS}, got {ordering!r}")
    wrapped = isinstance(f, SurfaceField)
    if wrapped and f.mesh_id != K.mesh_id:
        raise InvalidArgumentError("field and kernel belong to different meshes")
    values = np.asarray(f.values if wrapped else f, dtype=float)
    if values.shape[0] != K.n:
        raise InvalidArgumentError(f"field length {values.shape[0]} does not match {K.n} panels")
    op = K.entries if ordering == "evaluation" else K.entries.T
    w = K.areas if values.ndim == 1 else K.areas[:, None]
    for _ in range(int(m)):
        values = op @ (w * values)
    return SurfaceField(values, K.mesh_id) if wrapped else values


def save_kernel(K: KernelMatrix, path) -> None:
    """Binary dump: ``b"SBKM"``, u32 n, u32 kind, u32 reserved, then n*n
    little-endian float64 entries in row-major order."""
    header = _MAGIC + struct.pack("<III", K.n, _KIND_CODES[K.kind], 0)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(K.entries, dtype="<f8").tobytes())


def load_kernel(path, mesh: TriMesh) -> KernelMatrix:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != _MAGIC:
        raise MeshParseError(f"{path}: not a kernel dump (bad magic)")
    n, kind_code, _ = struct.unpack("<III", data[4:16])
    kinds = {v: k for k, v in _KIND_CODES.items()}
    if kind_code not in kinds:
        raise MeshParseError(f"{path}: unknown kernel kind {kind_code}")
    if n != mesh.n_faces:
        raise InvalidArgumentError(f"{path}: dump has {n} panels, mesh has {mesh.n_faces}")
    if len(data) != 16 + 8 * n * n:
        raise MeshParseError(f"{path}: truncated kernel dump")
    entries = np.frombuffer(data, dtype="<f8", offset=16).reshape(n, n).astype(np.float64)
    entries.setflags(write=False)
    return KernelMatrix(entries, kinds[kind_code], mesh.mesh_id, mesh.panels.areas)
