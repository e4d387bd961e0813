"""Command-line front end (``sbs``).

Every subcommand writes a JSON run report (stdout or ``--out``) and, where a
sweep is produced, a CSV table with ``--csv``.  Exit codes: 0 success,
2 usage error, 3 input validation, 4 numerical breakdown.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import (
    CoverageError,
    InvalidArgumentError,
    MeshError,
    NumericalBreakdownError,
    SmallBodyError,
)
from .kernels import (
    DEFAULT_ORDERING,
    ORDERINGS,
    assemble_double_layer,
    assemble_single_layer,
    gauss_residual,
)
from .manybody import (
    BodyEnsemble,
    assemble_charge_system,
    manybody_amplitude,
    solve_charges,
)
from .medium import (
    BornData,
    PotentialGrid,
    born_amplitudes,
    born_inverse,
    grid_from_document,
    kappa_grid,
    save_grid,
)
from .mesh import (
    TriMesh,
    generate_box,
    generate_ellipsoid,
    generate_sphere,
    load_mesh,
    mesh_metrics,
)
from .moments import (
    Contrast,
    alpha_series,
    beta_series,
    capacitance_bem_oracle,
    capacitance_series,
)
from .scattering import (
    Material,
    amplitude_dirichlet,
    amplitude_impedance,
    amplitude_neumann,
    reconstruct_field,
    reconstruct_polarization,
    refraction_tensor,
    scattering_matrix,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# Schemas and JSON helpers
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    """Published schema for a scene document, with the shared body fields merged in."""
    root = resources.files("smallbody") / "schemas"
    schema = json.loads((root / f"{name}.json").read_text())
    body = json.loads((root / "_body.json").read_text())
    body.pop("$comment", None)
    if name in ("scatter_single", "em_matrix", "probe_invert"):
        schema["properties"].update(body)
    elif name == "scatter_many":
        schema["properties"]["bodies"]["items"]["properties"].update(body)
    return schema


def validate(doc, name: str) -> dict:
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InvalidArgumentError(f"{name} document invalid at {where}: {exc.message}") from None
    return doc


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{path}: invalid JSON: {exc}") from None


def as_complex(x) -> complex:
    if isinstance(x, (list, tuple)):
        return complex(x[0], x[1])
    return complex(x)


def cjson(z):
    """Complex (or array of complex) as [re, im] pairs."""
    z = np.asarray(z)
    if z.ndim == 0:
        z = complex(z)
        return [z.real, z.imag]
    return [cjson(v) for v in z]


def rjson(x):
    return np.asarray(x, dtype=float).tolist()


def finite_or_none(x):
    return float(x) if x is not None and np.isfinite(x) else None


# --------------------------------------------------------------------------
# Geometry
# --------------------------------------------------------------------------


def body_mesh(spec: dict) -> TriMesh:
    if spec.get("mesh_path"):
        return load_mesh(spec["mesh_path"])
    shape = spec.get("shape")
    refinement = int(spec.get("refinement", 3))
    if shape == "sphere":
        return generate_sphere(float(spec.get("radius", 1.0)), refinement)
    if shape == "ellipsoid":
        a, b, c = spec.get("semi_axes", [1.0, 1.0, 1.0])
        return generate_ellipsoid(a, b, c, refinement)
    if shape == "box":
        return generate_box(spec.get("size", [1.0, 1.0, 1.0]), int(spec.get("divisions", 8)))
    raise InvalidArgumentError("body needs either mesh_path or shape")


def _body_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("body")
    g.add_argument("--mesh", dest="mesh_path", help="OFF/OBJ surface file")
    g.add_argument("--shape", choices=["sphere", "ellipsoid", "box"])
    g.add_argument("--radius", type=float, default=1.0)
    g.add_argument("--semi-axes", type=float, nargs=3, metavar=("A", "B", "C"))
    g.add_argument("--size", type=float, nargs=3, metavar=("X", "Y", "Z"))
    g.add_argument("--refinement", type=int, default=3, help="icosphere subdivision level")
    g.add_argument("--divisions", type=int, default=8, help="box face subdivisions")


def _body_from_args(args) -> tuple[TriMesh, dict]:
    if not args.mesh_path and not args.shape:
        raise UsageError("give --mesh PATH or --shape")
    spec = {"refinement": args.refinement, "divisions": args.divisions}
    if args.mesh_path:
        spec["mesh_path"] = args.mesh_path
    else:
        spec["shape"] = args.shape
        spec["radius"] = args.radius
        if args.semi_axes:
            spec["semi_axes"] = list(args.semi_axes)
        if args.size:
            spec["size"] = list(args.size)
    return body_mesh(spec), spec


class Kernels:
    """Lazily assembled kernel matrices for one mesh."""

    def __init__(self, mesh: TriMesh, threads: int | None):
        self.mesh = mesh
        self.threads = threads
        self._G = self._Psi = None

    @property
    def G(self):
        if self._G is None:
            self._G = assemble_single_layer(self.mesh, self.threads)
        return self._G

    @property
    def Psi(self):
        if self._Psi is None:
            self._Psi = assemble_double_layer(self.mesh, self.threads)
        return self._Psi

    def diagnostics(self) -> dict:
        return {
            "gauss_residual": gauss_residual(self.Psi),
            "gauss_residual_offdiag": gauss_residual(self.Psi, diagonal=False),
        }


def body_capacitance(k: Kernels, order: int, method: str) -> tuple[float, dict]:
    if method == "bem":
        return capacitance_bem_oracle(k.mesh, k.G), {}
    value, report = capacitance_series(k.mesh, k.G, k.Psi, 1.0, order)
    return value, {"fitted_A": finite_or_none(report.fitted_A), "fitted_q": finite_or_none(report.fitted_q)}


def sweep_directions(nu: np.ndarray, n_theta: int) -> tuple[np.ndarray, np.ndarray]:
    """Directions at angles 0..pi from ``nu`` in a fixed plane containing it."""
    helper = np.eye(3)[np.argmin(np.abs(nu))]
    e = np.cross(nu, helper)
    e /= np.linalg.norm(e)
    theta = np.linspace(0.0, math.pi, n_theta)
    dirs = np.cos(theta)[:, None] * nu + np.sin(theta)[:, None] * e
    return theta, dirs / np.linalg.norm(dirs, axis=1)[:, None]


def _unit_vec(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise InvalidArgumentError(f"{name} must be non-zero")
    return v / norm


# --------------------------------------------------------------------------
# Subcommands; each returns (outputs, diagnostics, inputs echo, csv table)
# --------------------------------------------------------------------------


def cmd_mesh_info(args):
    if args.path:
        mesh = load_mesh(args.path)
        inputs = {"mesh_path": args.path}
    else:
        mesh, inputs = _body_from_args(args)
    m = mesh_metrics(mesh)
    out = {"n_vertices": mesh.n_vertices, "n_faces": mesh.n_faces, **m.as_dict()}
    diag = {}
    if args.gauss:
        diag.update(Kernels(mesh, args.threads).diagnostics())
    return out, diag, inputs, None


def cmd_capacitance(args):
    mesh, inputs = _body_from_args(args)
    inputs.update(order=args.order, eps0=args.eps0, ordering=args.ordering, oracle=args.oracle)
    k = Kernels(mesh, args.threads)
    oracle = capacitance_bem_oracle(mesh, k.G, args.eps0) if args.oracle else None
    value, report = capacitance_series(
        mesh, k.G, k.Psi, args.eps0, args.order, tol=None, ordering=args.ordering, reference=oracle
    )
    out = {"order": args.order, "value": value, "orders": report.orders, "values": report.order_values}
    if oracle is not None:
        out["oracle"] = oracle
    diag = {
        **k.diagnostics(),
        "fitted_A": finite_or_none(report.fitted_A),
        "fitted_q": finite_or_none(report.fitted_q),
        "converged": report.converged,
    }
    rows = [("order", "capacitance")] + list(zip(report.orders, report.order_values))
    return out, diag, inputs, rows


def cmd_polarizability(args):
    mesh, inputs = _body_from_args(args)
    if args.magnetic:
        gamma = -1.0
    elif args.gamma is not None:
        gamma = Contrast(args.gamma).gamma
    elif args.epsilon is not None:
        gamma = Contrast.from_permittivity(args.epsilon, args.epsilon0).gamma
    else:
        raise UsageError("give --gamma, --epsilon or --magnetic")
    inputs.update(gamma=gamma, order=args.order, ordering=args.ordering)
    k = Kernels(mesh, args.threads)
    tensor, report = alpha_series(mesh, k.G, k.Psi, gamma, args.order, tol=None, ordering=args.ordering)
    sym = 0.5 * (tensor + tensor.T)
    out = {
        "order": args.order,
        "gamma": gamma,
        "value": rjson(tensor),
        "eigenvalues": rjson(np.linalg.eigvalsh(sym)),
        "orders": report.orders,
        "values": [rjson(v) for v in report.order_values],
        "volume": mesh_metrics(mesh).volume,
    }
    diag = {
        **k.diagnostics(),
        "fitted_A": finite_or_none(report.fitted_A),
        "fitted_q": finite_or_none(report.fitted_q),
        "converged": report.converged,
        "asymmetry": float(np.linalg.norm(tensor - tensor.T) / max(np.linalg.norm(tensor), 1e-300)),
    }
    rows = [("order", "trace_over_3")] + [(o, float(np.trace(v)) / 3) for o, v in zip(report.orders, report.order_values)]
    return out, diag, inputs, rows


def cmd_scatter_single(args):
    scene = validate(read_json(args.scene), "scatter_single")
    mesh = body_mesh(scene)
    metrics = mesh_metrics(mesh)
    kk = float(scene["k"])
    nu = _unit_vec(scene["nu"], "nu")
    amp = as_complex(scene.get("amplitude", 1.0))
    order = int(scene.get("series_order", 6))
    method = scene.get("capacitance_method", "series")
    kern = Kernels(mesh, args.threads)
    # Reference point for the incident field: the body centroid.
    u0 = amp * np.exp(1j * kk * float(nu @ metrics.centroid))
    theta, dirs = sweep_directions(nu, int(scene.get("n_theta", 19)))
    boundary = scene["boundary"]
    diag: dict = {}
    summary: dict = {"surface_area": metrics.surface_area, "volume": metrics.volume}
    if boundary == "neumann":
        beta, report = beta_series(mesh, kern.G, kern.Psi, order)
        diag.update(fitted_A=finite_or_none(report.fitted_A), fitted_q=finite_or_none(report.fitted_q))
        summary["beta"] = rjson(beta)
        # Phase of u0 at the centroid; amplitude_neumann assumes u0 = A exp(ik nu.x).
        f = [amplitude_neumann(beta, metrics.volume, kk, nu, n, u0) for n in dirs]
        kind = "neumann"
    else:
        C, fit = body_capacitance(kern, order, method)
        diag.update(fit)
        summary["capacitance"] = C
        if boundary == "dirichlet":
            f = [amplitude_dirichlet(C, u0, n) for n in dirs]
            kind = "dirichlet"
        else:
            h = as_complex(boundary["impedance"])
            summary["impedance"] = cjson(h)
            f = [amplitude_impedance(h, metrics.surface_area, C, u0, n) for n in dirs]
            kind = "impedance"
    warnings = sorted({w for a in f for w in a.warnings})
    diag["warnings"] = [{"code": w} for w in warnings]
    if kind != "dirichlet" or method == "series":
        diag.update(kern.diagnostics())
    values = np.array([a.value for a in f], dtype=complex)
    summary.update(
        boundary=kind,
        theta=rjson(theta),
        f=cjson(values),
        forward=cjson(values[0]),
        backward=cjson(values[-1]),
    )
    rows = [("theta", "re_f", "im_f", "abs_f2")] + [
        (t, v.real, v.imag, abs(v) ** 2) for t, v in zip(theta.tolist(), values)
    ]
    return summary, diag, scene, rows


def cmd_scatter_many(args):
    scene = validate(read_json(args.scene), "scatter_many")
    kk = float(scene["k"])
    nu = _unit_vec(scene["nu"], "nu")
    order = int(scene.get("series_order", 6))
    cap_method = scene.get("capacitance_method", "series")
    positions, caps = [], []
    cache: dict[str, float] = {}
    for i, b in enumerate(scene["bodies"]):
        positions.append(b["position"])
        if "capacitance" in b:
            caps.append(float(b["capacitance"]))
            continue
        key = json.dumps({k: v for k, v in b.items() if k != "position"}, sort_keys=True)
        if key not in cache:
            mesh = body_mesh(b)
            cache[key], _ = body_capacitance(Kernels(mesh, args.threads), order, cap_method)
        caps.append(cache[key])
    ensemble = BodyEnsemble(np.array(positions, dtype=float), np.array(caps), kk, nu, as_complex(scene.get("amplitude", 1.0)))
    system = assemble_charge_system(ensemble)
    method = scene.get("method", "direct")
    if isinstance(method, dict):
        opts = method["jacobi"]
        Q = solve_charges(system, "jacobi", max_iter=int(opts.get("max_iter", 500)), tol=opts.get("tol"))
    else:
        Q = solve_charges(system, method)
    n_theta, n_phi = int(scene.get("n_theta", 7)), int(scene.get("n_phi", 8))
    rows = [("theta", "phi", "nx", "ny", "nz", "re_f", "im_f", "abs_f2")]
    samples = []
    for t in np.linspace(0.0, math.pi, n_theta):
        phis = [0.0] if t in (0.0, math.pi) else np.linspace(0.0, 2 * math.pi, n_phi, endpoint=False)
        for ph in phis:
            n = np.array([math.sin(t) * math.cos(ph), math.sin(t) * math.sin(ph), math.cos(t)])
            f = manybody_amplitude(ensemble, Q, n)
            samples.append({"theta": float(t), "phi": float(ph), "n": rjson(n), "f": cjson(f)})
            rows.append((float(t), float(ph), *n.tolist(), f.real, f.imag, abs(f) ** 2))
    out = {
        "Q": cjson(Q.Q),
        "capacitances": rjson(caps),
        "f": samples,
        "f_forward": cjson(manybody_amplitude(ensemble, Q, nu)),
    }
    diag = {
        "coupling_margin": system.metadata["coupling_margin"],
        "separation_ratio": finite_or_none(ensemble.separation_ratio()),
        "residual": Q.residual,
        "method": Q.method,
        "iterations": Q.iterations,
        "warnings": [],
    }
    if system.metadata["coupling_margin"] >= 1.0:
        diag["warnings"].append({"code": "not_diagonally_dominant"})
    return out, diag, scene, rows


def cmd_em_matrix(args):
    scene = validate(read_json(args.scene), "em_matrix")
    mat = scene["material"]
    material = Material(
        epsilon=mat["epsilon"],
        mu=mat.get("mu", mat.get("mu0", 1.0)),
        sigma_conductivity=mat.get("sigma", 0.0),
        epsilon0=mat.get("epsilon0", 1.0),
        mu0=mat.get("mu0", 1.0),
        sigma0=mat.get("sigma0", 0.0),
    )
    mesh = body_mesh(scene)
    V = mesh_metrics(mesh).volume
    kern = Kernels(mesh, args.threads)
    order = int(scene.get("series_order", 6))
    alpha, rep = alpha_series(mesh, kern.G, kern.Psi, material.gamma, order)
    beta = np.zeros((3, 3))
    if scene.get("include_magnetic", False):
        beta, _ = beta_series(mesh, kern.G, kern.Psi, order)
    kk = float(scene["k"])
    thetas = np.linspace(0.0, math.pi, int(scene.get("n_theta", 19)))
    mats = [scattering_matrix(alpha, beta, t, kk, V, material.mu0) for t in thetas]
    out = {
        "gamma": material.gamma,
        "alpha": rjson(alpha),
        "beta": rjson(beta),
        "volume": V,
        "theta": rjson(thetas),
        "S": [cjson(m.matrix) for m in mats],
    }
    if "number_density" in scene:
        out["refraction_tensor"] = cjson(refraction_tensor(scene["number_density"], kk, mats[0]))
    diag = {**kern.diagnostics(), "fitted_A": finite_or_none(rep.fitted_A), "fitted_q": finite_or_none(rep.fitted_q)}
    header = ("theta",) + tuple(f"{s}_{p}" for s in ("S2", "S3", "S4", "S1") for p in ("re", "im"))
    rows = [header]
    for t, m in zip(thetas.tolist(), mats):
        vals = [m.S2, m.S3, m.S4, m.S1]
        rows.append((t, *[x for v in vals for x in (v.real, v.imag)]))
    return out, diag, scene, rows


def cmd_probe_invert(args):
    scene = validate(read_json(args.scene), "probe_invert")
    eps0 = float(scene.get("eps0", 1.0))
    e1 = np.array([as_complex(z) for z in scene["E_n1"]])
    e2 = np.array([as_complex(z) for z in scene["E_n2"]])
    P = reconstruct_polarization(e1, e2, scene["n1"], scene["n2"], scene["r"], scene["k"], eps0)
    out = {"P": cjson(P)}
    diag: dict = {}
    if "alpha" in scene:
        alpha = np.array(scene["alpha"], dtype=float)
        V = float(scene.get("volume", 1.0))
    elif "epsilon" in scene and (scene.get("shape") or scene.get("mesh_path")):
        mesh = body_mesh(scene)
        V = mesh_metrics(mesh).volume
        kern = Kernels(mesh, args.threads)
        gamma = Contrast.from_permittivity(scene["epsilon"], eps0).gamma
        alpha, _ = alpha_series(mesh, kern.G, kern.Psi, gamma, int(scene.get("series_order", 6)))
        diag.update(kern.diagnostics())
    else:
        return out, diag, scene, None
    out["alpha"] = rjson(alpha)
    out["volume"] = V
    out["E"] = cjson(reconstruct_field(P, alpha, V, eps0))
    return out, diag, scene, None


def _random_smooth_grid(dims, spacing: float, seed: int, bandwidth: int = 2) -> PotentialGrid:
    """Real random potential whose spectrum lives on |m| <= bandwidth."""
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in dims)
    spec = np.zeros(dims, dtype=complex)
    for m in np.ndindex(*(2 * bandwidth + 1,) * 3):
        idx = tuple((mi - bandwidth) % d for mi, d in zip(m, dims))
        spec[idx] += rng.normal() + 1j * rng.normal()
    values = np.fft.ifftn(spec).real
    origin = -0.5 * spacing * (np.array(dims) - 1)
    return PotentialGrid(origin, spacing, dims, values / np.abs(values).max())


def _born_data_doc(kappa: np.ndarray, f: np.ndarray) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "data": [{"kappa": rjson(kv), "f": cjson(fv)} for kv, fv in zip(kappa, f)],
    }


def cmd_medium_born(args):
    if args.grid:
        doc = read_json(args.grid)
        validate(doc, "potential_grid")
        grid = grid_from_document(doc)
        inputs = {"grid": args.grid}
    elif args.random_smooth:
        grid = _random_smooth_grid(args.random_smooth, args.spacing, args.seed)
        inputs = {"random_smooth": args.random_smooth, "spacing": args.spacing, "seed": args.seed}
        if args.grid_out:
            save_grid(grid, args.grid_out)
    else:
        raise UsageError("give --grid FILE or --random-smooth NX NY NZ")
    if args.lattice:
        kappa = kappa_grid(grid).reshape(-1, 3)
        rows = None
    else:
        if args.k is None:
            raise UsageError("--k is required unless --lattice is given")
        if not args.k > 0:
            raise InvalidArgumentError("wavenumber must be positive")
        nu = _unit_vec(args.nu, "nu")
        theta, dirs = sweep_directions(nu, args.n_theta)
        kappa = args.k * (dirs - nu)
        inputs.update(k=args.k, nu=rjson(nu), n_theta=args.n_theta)
    f = born_amplitudes(grid, kappa)
    out = _born_data_doc(kappa, f)
    out["forward_value"] = cjson(born_amplitudes(grid, np.zeros(3))[0])
    if args.data_out:
        Path(args.data_out).write_text(json.dumps(_born_data_doc(kappa, f), sort_keys=True) + "\n")
    rows = None
    if not args.lattice:
        rows = [("theta", "re_f", "im_f", "abs_f2")] + [
            (t, v.real, v.imag, abs(v) ** 2) for t, v in zip(theta.tolist(), f)
        ]
    return out, {"warnings": []}, inputs, rows


def cmd_medium_invert(args):
    data_doc = validate(read_json(args.data), "born_data")
    target_doc = read_json(args.target)
    validate(target_doc, "potential_grid")
    target = grid_from_document(target_doc)
    kappas, fs = [], []
    for d in data_doc["data"]:
        if "kappa" in d:
            kappas.append(d["kappa"])
        else:
            kappas.append(float(d["k"]) * (np.asarray(d["n"], float) - np.asarray(d["nu"], float)))
        fs.append(as_complex(d["f"]))
    data = BornData(np.array(kappas, dtype=float).reshape(-1, 3), np.array(fs, dtype=complex))
    grid = born_inverse(data, target)
    if args.grid_out:
        save_grid(grid, args.grid_out)
    out = {
        "origin": rjson(grid.origin),
        "spacing": grid.spacing,
        "dims": list(grid.dims),
        "max_abs": float(np.abs(grid.values).max()),
        "integral": float(grid.values.sum() * grid.cell_volume),
    }
    if not args.grid_out:
        out["values"] = rjson(grid.values.ravel(order="F"))
    diag = {
        "imaginary_residue": grid.meta["imaginary_residue"],
        "warnings": [{"code": w} for w in grid.meta["warnings"]],
    }
    return out, diag, {"data": args.data, "target": args.target}, None


# --------------------------------------------------------------------------
# Parser and driver
# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--csv", help="write the tabular sweep here")
    p.add_argument("--threads", type=int, default=None, help="worker cap (fallback: SBS_THREADS)")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized test-data generators")
    p.add_argument("--timings", action="store_true", help="include wall-clock timings in the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbs", description="Low-frequency scattering by small bodies.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh utilities").add_subparsers(dest="action", required=True)
    p = mesh.add_parser("info", help="surface area, volume and panel counts")
    p.add_argument("path", nargs="?", help="OFF/OBJ file")
    _body_args(p)
    p.add_argument("--gauss", action="store_true", help="assemble the double layer and report gauss_residual")
    _common(p)
    p.set_defaults(func=cmd_mesh_info, name="mesh info")

    p = sub.add_parser("capacitance", help="capacitance series C(0..order)")
    _body_args(p)
    p.add_argument("--order", type=int, default=6)
    p.add_argument("--eps0", type=float, default=1.0)
    p.add_argument("--ordering", choices=ORDERINGS, default=DEFAULT_ORDERING)
    p.add_argument("--oracle", action="store_true", help="also solve the first-kind BEM system")
    _common(p)
    p.set_defaults(func=cmd_capacitance, name="capacitance")

    p = sub.add_parser("polarizability", help="polarizability tensor series")
    _body_args(p)
    p.add_argument("--gamma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--epsilon0", type=float, default=1.0)
    p.add_argument("--magnetic", action="store_true", help="magnetic polarizability (gamma = -1)")
    p.add_argument("--order", type=int, default=6)
    p.add_argument("--ordering", choices=ORDERINGS, default=DEFAULT_ORDERING)
    _common(p)
    p.set_defaults(func=cmd_polarizability, name="polarizability")

    scatter = sub.add_parser("scatter", help="scalar scattering").add_subparsers(dest="action", required=True)
    p = scatter.add_parser("single", help="one body, any boundary condition")
    p.add_argument("--scene", required=True)
    _common(p)
    p.set_defaults(func=cmd_scatter_single, name="scatter single")
    p = scatter.add_parser("many", help="few sound-soft bodies with coupling")
    p.add_argument("--scene", required=True)
    _common(p)
    p.set_defaults(func=cmd_scatter_many, name="scatter many")

    em = sub.add_parser("em", help="electromagnetic scattering").add_subparsers(dest="action", required=True)
    p = em.add_parser("matrix", help="2x2 scattering matrix over the scattering angle")
    p.add_argument("--scene", required=True)
    _common(p)
    p.set_defaults(func=cmd_em_matrix, name="em matrix")

    probe = sub.add_parser("probe", help="radiomeasurement probe").add_subparsers(dest="action", required=True)
    p = probe.add_parser("invert", help="recover the probe dipole and incident field")
    p.add_argument("--scene", required=True)
    _common(p)
    p.set_defaults(func=cmd_probe_invert, name="probe invert")

    medium = sub.add_parser("medium", help="Born medium").add_subparsers(dest="action", required=True)
    p = medium.add_parser("born", help="Born amplitudes of a potential grid")
    p.add_argument("--grid")
    p.add_argument("--random-smooth", type=int, nargs=3, metavar=("NX", "NY", "NZ"))
    p.add_argument("--spacing", type=float, default=0.25)
    p.add_argument("--grid-out", help="save the generated random grid")
    p.add_argument("--k", type=float)
    p.add_argument("--nu", type=float, nargs=3, default=[0.0, 0.0, 1.0])
    p.add_argument("--n-theta", type=int, default=19)
    p.add_argument("--lattice", action="store_true", help="sample the full inversion lattice")
    p.add_argument("--data-out", help="write Born data for `medium invert`")
    _common(p)
    p.set_defaults(func=cmd_medium_born, name="medium born")
    p = medium.add_parser("invert", help="recover a potential grid from Born data")
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True, help="grid geometry document (values optional)")
    p.add_argument("--grid-out")
    _common(p)
    p.set_defaults(func=cmd_medium_invert, name="medium invert")
    return parser


def _write_csv(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def _error(code: str, message: str, status: int) -> int:
    print(json.dumps({"error": {"code": code, "message": message}}, sort_keys=True), file=sys.stderr)
    return status


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.threads is None and os.environ.get("SBS_THREADS"):
        args.threads = int(os.environ["SBS_THREADS"])
    start = time.perf_counter()
    try:
        outputs, diagnostics, inputs, rows = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _error("usage", str(exc), EXIT_USAGE)
    except FileNotFoundError as exc:
        return _error("file_not_found", str(exc), EXIT_INPUT)
    except (InvalidArgumentError, MeshError, CoverageError) as exc:
        return _error(exc.code, str(exc), EXIT_INPUT)
    except NumericalBreakdownError as exc:
        return _error(exc.code, str(exc), EXIT_NUMERIC)
    except SmallBodyError as exc:  # pragma: no cover - every subclass is mapped above
        return _error(exc.code, str(exc), EXIT_INPUT)
    diagnostics.setdefault("warnings", [])
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": args.name,
        "inputs": inputs,
        "outputs": outputs,
        "diagnostics": diagnostics,
    }
    if args.timings:
        report["timings"] = {"total_s": time.perf_counter() - start}
    text = json.dumps(report, sort_keys=True, indent=2, default=_json_default) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.csv and rows:
        _write_csv(args.csv, rows)
    return EXIT_OK


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def main() -> None:  # pragma: no cover - console entry point
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
