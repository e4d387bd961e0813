"""Closed triangulated surfaces: generators, OFF/OBJ I/O and panel metrics."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .errors import (
    DegenerateFaceError,
    InvalidArgumentError,
    MeshParseError,
    NonOrientableMeshError,
    NonWatertightMeshError,
)

__all__ = [
    "TriMesh",
    "PanelData",
    "MeshMetrics",
    "generate_sphere",
    "generate_ellipsoid",
    "generate_box",
    "load_mesh",
    "save_off",
    "save_obj",
    "mesh_metrics",
]

# Relative area below which a face counts as degenerate (scaled by bbox size^2).
_DEGENERATE_AREA = 1e-14


@dataclass(frozen=True)
class PanelData:
    """Flat-panel quadrature data, one row per face."""

    centroids: np.ndarray  # (n, 3)
    areas: np.ndarray  # (n,)
    normals: np.ndarray  # (n, 3), unit, outward

    def __len__(self) -> int:
        return len(self.areas)


@dataclass(frozen=True)
class MeshMetrics:
    surface_area: float
    volume: float
    centroid: np.ndarray
    diameter: float  # half the largest vertex-to-vertex distance

    def as_dict(self) -> dict:
        return {
            "surface_area": float(self.surface_area),
            "volume": float(self.volume),
            "centroid": [float(x) for x in self.centroid],
            "diameter": float(self.diameter),
        }


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Closed, outward-oriented triangle mesh.

    Construction validates the invariants: indices in range, every edge shared
    by exactly two consistently oriented faces, no zero-area face and positive
    enclosed volume.  Use :meth:`from_arrays` with ``repair=True`` to flip an
    inward-oriented surface instead of rejecting it.
    """

    vertices: np.ndarray
    faces: np.ndarray
    outward: bool = field(default=True)

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidArgumentError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise InvalidArgumentError(f"faces must have shape (m, 3), got {f.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("vertices contain non-finite coordinates")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        _check_topology(v, f)
        _check_areas(v, f)
        if self.outward and _signed_volume(v, f) <= 0.0:
            raise NonOrientableMeshError(
                "faces are oriented inward (signed volume <= 0); load with repair"
            )

    @classmethod
    def from_arrays(cls, vertices, faces, repair: bool = False) -> "TriMesh":
        v = np.asarray(vertices, dtype=np.float64)
        f = np.asarray(faces, dtype=np.int64)
        if repair and f.ndim == 2 and f.shape[1] == 3 and len(f):
            _check_topology(v, f)
            if _signed_volume(v, f) < 0.0:
                f = f[:, ::-1].copy()
        return cls(v, f)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def panels(self) -> PanelData:
        tri = self.vertices[self.faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        twice_area = np.linalg.norm(cross, axis=1)
        normals = cross / twice_area[:, None]
        centroids = tri.mean(axis=1)
        for a in (normals, centroids, twice_area):
            a.setflags(write=False)
        areas = 0.5 * twice_area
        areas.setflags(write=False)
        return PanelData(centroids=centroids, areas=areas, normals=normals)

    @cached_property
    def mesh_id(self) -> str:
        h = hashlib.sha1()
        h.update(self.vertices.tobytes())
        h.update(self.faces.tobytes())
        return h.hexdigest()[:16]

    def transformed(self, matrix=None, offset=None) -> "TriMesh":
        """Return ``matrix @ x + offset`` applied to every vertex."""
        v = self.vertices
        if matrix is not None:
            v = v @ np.asarray(matrix, dtype=float).T
        if offset is not None:
            v = v + np.asarray(offset, dtype=float)
        # Reflections reverse orientation; repair flips the faces back.
        return TriMesh.from_arrays(v, self.faces, repair=True)

    def scaled(self, factor: float) -> "TriMesh":
        if factor <= 0:
            raise InvalidArgumentError("scale factor must be positive")
        return TriMesh(self.vertices * factor, self.faces)


def _edge_keys(faces: np.ndarray, n_vertices: int) -> np.ndarray:
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    return directed[:, 0] * n_vertices + directed[:, 1], directed


def _check_topology(v: np.ndarray, f: np.ndarray) -> None:
    if len(f) == 0:
        raise NonWatertightMeshError("mesh has no faces")
    if f.min() < 0 or f.max() >= len(v):
        raise MeshParseError(f"face index out of range [0, {len(v)})")
    if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
        raise DegenerateFaceError("face repeats a vertex index")
    nv = len(v)
    keys, directed = _edge_keys(f, nv)
    undirected = np.sort(directed, axis=1)
    ukeys = undirected[:, 0] * nv + undirected[:, 1]
    _, counts = np.unique(ukeys, return_counts=True)
    if np.any(counts != 2):
        bad = int(np.sum(counts != 2))
        raise NonWatertightMeshError(
            f"{bad} edge(s) are not shared by exactly two faces (open or non-manifold surface)"
        )
    if len(np.unique(keys)) != len(keys):
        raise NonOrientableMeshError("adjacent faces have inconsistent orientation")


def _check_areas(v: np.ndarray, f: np.ndarray) -> None:
    tri = v[f]
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    scale = float(np.ptp(v, axis=0).max()) ** 2
    bad = np.flatnonzero(area <= _DEGENERATE_AREA * max(scale, 1e-300))
    if len(bad):
        raise DegenerateFaceError(f"{len(bad)} face(s) have zero area, first is face {bad[0]}")


def _signed_volume(v: np.ndarray, f: np.ndarray) -> float:
    tri = v[f]
    return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    return verts, faces


def _subdivide(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nv = len(verts)
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    unique, inverse = np.unique(edges[:, 0] * nv + edges[:, 1], return_inverse=True)
    a, b = unique // nv, unique % nv
    mid = 0.5 * (verts[a] + verts[b])
    mid /= np.linalg.norm(mid, axis=1)[:, None]
    m = inverse.reshape(3, -1).T + nv  # midpoints of edges (01, 12, 20)
    v0, v1, v2 = faces.T
    m01, m12, m20 = m.T
    new_faces = np.concatenate(
        [
            np.stack([v0, m01, m20], axis=1),
            np.stack([v1, m12, m01], axis=1),
            np.stack([v2, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.vstack([verts, mid]), new_faces


def _unit_icosphere(refinement: int) -> tuple[np.ndarray, np.ndarray]:
    if int(refinement) != refinement or refinement < 0:
        raise InvalidArgumentError(f"refinement must be a non-negative integer, got {refinement!r}")
    verts, faces = _icosahedron()
    for _ in range(int(refinement)):
        verts, faces = _subdivide(verts, faces)
    return verts, faces


def generate_sphere(radius: float, refinement: int) -> TriMesh:
    """Icosphere of ``20 * 4**refinement`` faces centred at the origin."""
    if not radius > 0:
        raise InvalidArgumentError(f"radius must be positive, got {radius!r}")
    verts, faces = _unit_icosphere(refinement)
    return TriMesh(verts * radius, faces)


def generate_ellipsoid(a: float, b: float, c: float, refinement: int) -> TriMesh:
    """Unit icosphere scaled by the semi-axes ``(a, b, c)``."""
    for name, value in (("a", a), ("b", b), ("c", c)):
        if not value > 0:
            raise InvalidArgumentError(f"semi-axis {name} must be positive, got {value!r}")
    verts, faces = _unit_icosphere(refinement)
    return TriMesh(verts * np.array([a, b, c], dtype=float), faces)


def generate_box(size=(1.0, 1.0, 1.0), divisions: int = 1) -> TriMesh:
    """Axis-aligned box centred at the origin, each face split into a
    ``divisions x divisions`` grid of right-triangle pairs."""
    sx, sy, sz = (float(s) for s in np.broadcast_to(np.asarray(size, dtype=float), (3,)))
    if min(sx, sy, sz) <= 0:
        raise InvalidArgumentError("box side lengths must be positive")
    if int(divisions) != divisions or divisions < 1:
        raise InvalidArgumentError("divisions must be a positive integer")
    n = int(divisions)
    # Build the unit cube [-1, 1]^3 from a shared vertex lattice so edges match.
    index: dict[tuple[int, int, int], int] = {}
    verts: list[tuple[float, float, float]] = []

    def vid(i: int, j: int, k: int) -> int:
        key = (i, j, k)
        if key not in index:
            index[key] = len(verts)
            verts.append((2 * i / n - 1, 2 * j / n - 1, 2 * k / n - 1))
        return index[key]

    faces: list[tuple[int, int, int]] = []
    # For each axis and side, (u, v) run over the face; orientation chosen so
    # that u x v points outward.
    for axis in range(3):
        u_ax, v_ax = (axis + 1) % 3, (axis + 2) % 3
        for side, flip in ((0, True), (n, False)):
            for p in range(n):
                for q in range(n):
                    def corner(du: int, dv: int) -> int:
                        ijk = [0, 0, 0]
                        ijk[axis] = side
                        ijk[u_ax] = p + du
                        ijk[v_ax] = q + dv
                        return vid(*ijk)

                    a, b, c, d = corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)
                    quad = [(a, b, c), (a, c, d)]
                    if flip:
                        quad = [(x, z, y) for x, y, z in quad]
                    faces.extend(quad)
    v = np.array(verts) * (0.5 * np.array([sx, sy, sz]))
    return TriMesh(v, np.array(faces, dtype=np.int64))


# --------------------------------------------------------------------------
# File I/O
# --------------------------------------------------------------------------


def _fan(poly: list[int]) -> list[tuple[int, int, int]]:
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _strip_comments(text: str) -> list[str]:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return lines


def _parse_off(text: str) -> tuple[np.ndarray, np.ndarray]:
    lines = _strip_comments(text)
    if not lines or not lines[0].startswith("OFF"):
        raise MeshParseError("missing OFF header")
    head = lines[0][3:].split()
    body = lines[1:]
    if not head:
        if not body:
            raise MeshParseError("missing OFF counts line")
        head, body = body[0].split(), body[1:]
    try:
        nv, nf = int(head[0]), int(head[1])
    except (IndexError, ValueError) as exc:
        raise MeshParseError(f"bad OFF counts line: {' '.join(head)!r}") from exc
    if len(body) < nv + nf:
        raise MeshParseError(f"OFF file truncated: expected {nv + nf} records, found {len(body)}")
    try:
        verts = np.array([[float(x) for x in body[i].split()[:3]] for i in range(nv)])
        faces: list[tuple[int, int, int]] = []
        for line in body[nv : nv + nf]:
            parts = line.split()
            k = int(parts[0])
            idx = [int(x) for x in parts[1 : 1 + k]]
            if k < 3 or len(idx) != k:
                raise MeshParseError(f"bad OFF face record: {line!r}")
            faces.extend(_fan(idx))
    except ValueError as exc:
        raise MeshParseError(f"malformed OFF record: {exc}") from exc
    if verts.shape != (nv, 3):
        raise MeshParseError("OFF vertex records need three coordinates")
    return verts, np.array(faces, dtype=np.int64).reshape(-1, 3)


def _parse_obj(text: str) -> tuple[np.ndarray, np.ndarray]:
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    try:
        for line in _strip_comments(text):
            parts = line.split()
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for token in parts[1:]:
                    i = int(token.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise MeshParseError(f"bad OBJ face record: {line!r}")
                faces.extend(_fan(idx))
    except (ValueError, IndexError) as exc:
        raise MeshParseError(f"malformed OBJ record: {exc}") from exc
    if not verts or any(len(p) != 3 for p in verts):
        raise MeshParseError("OBJ file has no usable vertex records")
    return np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3)


def load_mesh(path, format: str | None = None) -> TriMesh:
    """Read an OFF or OBJ surface, flipping it if it is oriented inward.

    ``format`` defaults to the file suffix.  Raises :class:`FileNotFoundError`
    for a missing path and a :class:`~smallbody.errors.MeshError` subclass for
    parse, watertightness or degeneracy problems.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    if fmt not in ("OFF", "OBJ"):
        raise InvalidArgumentError(f"unsupported mesh format {fmt!r} (expected OFF or OBJ)")
    text = path.read_text()
    verts, faces = _parse_off(text) if fmt == "OFF" else _parse_obj(text)
    return TriMesh.from_arrays(verts, faces, repair=True)


def save_off(mesh: TriMesh, path) -> None:
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def save_obj(mesh: TriMesh, path) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {i + 1} {j + 1} {k + 1}" for i, j, k in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def mesh_metrics(mesh: TriMesh) -> MeshMetrics:
    p = mesh.panels
    area = float(p.areas.sum())
    volume = float(np.einsum("ij,ij->i", p.centroids, p.normals) @ p.areas / 3.0)
    # Volume centroid from the tetrahedra fan about the origin.
    tri = mesh.vertices[mesh.faces]
    tet_vol = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])) / 6.0
    centroid = (tet_vol[:, None] * tri.sum(axis=1) / 4.0).sum(axis=0) / tet_vol.sum()
    pts = mesh.vertices
    try:
        pts = pts[ConvexHull(pts).vertices]
    except QhullError:  # pragma: no cover - flat point sets cannot be closed meshes
        pass
    diameter = 0.5 * float(pdist(pts).max())
    return MeshMetrics(surface_area=area, volume=volume, centroid=centroid, diameter=diameter)
