import json
import math
import subprocess
import sys

import numpy as np
import pytest

from smallbody.cli import run
from smallbody.mesh import generate_sphere, save_off
from smallbody.medium import load_grid

FOUR_PI = 4 * math.pi


def invoke(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(capsys, *argv):
    code, out, err = invoke(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


TWO_SPHERES = {
    "schema_version": 1,
    "k": 0.0,
    "nu": [0, 0, 1],
    "bodies": [
        {"position": [0, 0, 0], "capacitance": FOUR_PI},
        {"position": [10, 0, 0], "capacitance": FOUR_PI},
    ],
}


# -- exit codes -------------------------------------------------------------------


def test_usage_errors_exit_2(capsys):
    assert invoke(capsys, "bogus")[0] == 2
    assert invoke(capsys)[0] == 2
    assert invoke(capsys, "capacitance")[0] == 2  # no body given
    assert invoke(capsys, "polarizability", "--shape", "sphere", "--refinement", "1")[0] == 2


def test_missing_mesh_exit_3(capsys):
    code, _, err = invoke(capsys, "mesh", "info", "missing.off")
    assert code == 3
    assert "missing.off" in err
    assert json.loads(err)["error"]["code"] == "file_not_found"


def test_invalid_scene_exit_3(capsys, tmp_path):
    doc = dict(TWO_SPHERES, extra=1)
    code, _, err = invoke(capsys, "scatter", "many", "--scene", write(tmp_path, "s.json", doc))
    assert code == 3
    assert json.loads(err)["error"]["code"] == "invalid_argument"


def test_open_mesh_exit_3(capsys, tmp_path):
    p = tmp_path / "open.off"
    p.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    code, _, err = invoke(capsys, "mesh", "info", str(p))
    assert code == 3
    assert json.loads(err)["error"]["code"] == "mesh_not_watertight"


def test_numerical_breakdown_exit_4(capsys, tmp_path):
    doc = dict(TWO_SPHERES, method={"jacobi": {"max_iter": 50}})
    doc["bodies"] = [
        {"position": [0, 0, 0], "capacitance": FOUR_PI},
        {"position": [0.5, 0, 0], "capacitance": FOUR_PI},
        {"position": [0, 0.5, 0], "capacitance": FOUR_PI},
    ]
    code, _, err = invoke(capsys, "scatter", "many", "--scene", write(tmp_path, "s.json", doc))
    assert code == 4
    assert json.loads(err)["error"]["code"] == "iteration_diverged"


def test_medium_invert_coverage_exit_3(capsys, tmp_path):
    target = write(tmp_path, "t.json", {"origin": [0, 0, 0], "spacing": 1.0, "dims": [2, 2, 2]})
    data = write(tmp_path, "d.json", {"schema_version": 1, "data": [{"kappa": [0, 0, 0], "f": 1.0}]})
    code, _, err = invoke(capsys, "medium", "invert", "--data", data, "--target", target)
    assert code == 3
    assert json.loads(err)["error"]["code"] == "kappa_coverage"


# -- subcommands ------------------------------------------------------------------


def test_mesh_info(capsys, tmp_path):
    save_off(generate_sphere(1.0, 1), tmp_path / "s.off")
    r = report(capsys, "mesh", "info", str(tmp_path / "s.off"), "--gauss")
    assert r["command"] == "mesh info"
    assert r["outputs"]["n_faces"] == 80
    assert r["diagnostics"]["gauss_residual"] < 1e-12
    r = report(capsys, "mesh", "info", "--shape", "box", "--size", "1", "2", "3", "--divisions", "2")
    assert r["outputs"]["volume"] == pytest.approx(6.0)


def test_capacitance_example(capsys):
    r = report(capsys, "capacitance", "--shape", "sphere", "--radius", "1", "--order", "4")
    assert r["outputs"]["value"] == pytest.approx(FOUR_PI, rel=0.01)
    assert len(r["outputs"]["values"]) == 5
    assert "gauss_residual" in r["diagnostics"] and "fitted_q" in r["diagnostics"]


def test_capacitance_with_oracle_and_csv(capsys, tmp_path):
    csv_path = tmp_path / "c.csv"
    r = report(
        capsys, "capacitance", "--shape", "ellipsoid", "--semi-axes", "2", "1", "1",
        "--refinement", "2", "--order", "6", "--oracle", "--csv", str(csv_path),
    )
    assert r["outputs"]["oracle"] == pytest.approx(r["outputs"]["value"], rel=0.02)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "order,capacitance" and len(lines) == 8


def test_polarizability_magnetic(capsys):
    r = report(capsys, "polarizability", "--shape", "sphere", "--refinement", "3", "--magnetic", "--order", "8")
    assert np.trace(np.array(r["outputs"]["value"])) / 3 == pytest.approx(-1.5, rel=0.03)
    r = report(capsys, "polarizability", "--shape", "sphere", "--refinement", "2", "--epsilon", "3", "--order", "2")
    assert r["inputs"]["gamma"] == 0.5


def test_scatter_single_dirichlet(capsys, tmp_path):
    scene = {"schema_version": 1, "boundary": "dirichlet", "k": 0.01, "nu": [0, 0, 1],
             "shape": "sphere", "radius": 1, "refinement": 3, "capacitance_method": "bem", "n_theta": 5}
    csv_path = tmp_path / "f.csv"
    r = report(capsys, "scatter", "single", "--scene", write(tmp_path, "s.json", scene), "--csv", str(csv_path))
    f = np.array(r["outputs"]["f"])
    np.testing.assert_allclose(f[:, 0], -1.0, rtol=0.01)
    assert len(csv_path.read_text().splitlines()) == 6


def test_scatter_single_neumann_and_impedance(capsys, tmp_path):
    base = {"schema_version": 1, "k": 0.1, "nu": [0, 0, 1], "shape": "sphere", "refinement": 3, "n_theta": 3}
    r = report(capsys, "scatter", "single", "--scene", write(tmp_path, "n.json", dict(base, boundary="neumann")))
    f = np.array(r["outputs"]["f"])[:, 0]
    expected = -(0.01 / 3) * (1 - 1.5 * np.cos([0, math.pi / 2, math.pi]))
    np.testing.assert_allclose(f, expected, rtol=0.03)
    r = report(capsys, "scatter", "single", "--scene",
               write(tmp_path, "i.json", dict(base, boundary={"impedance": 1.0}, capacitance_method="bem")))
    np.testing.assert_allclose(np.array(r["outputs"]["f"])[:, 0], -0.5, rtol=0.01)


def test_scatter_many_two_spheres(capsys, tmp_path):
    r = report(capsys, "scatter", "many", "--scene", write(tmp_path, "s.json", TWO_SPHERES))
    for sample in r["outputs"]["f"]:
        assert sample["f"][0] == pytest.approx(-2 / 1.1, rel=1e-12)
    assert r["diagnostics"]["coupling_margin"] == pytest.approx(0.1)


def test_scatter_many_jacobi(capsys, tmp_path):
    doc = dict(TWO_SPHERES, method={"jacobi": {"tol": 1e-14}})
    r = report(capsys, "scatter", "many", "--scene", write(tmp_path, "s.json", doc))
    assert r["diagnostics"]["method"] == "jacobi"
    assert r["outputs"]["Q"][0][0] == pytest.approx(-FOUR_PI / 1.1, rel=1e-12)


def test_em_matrix(capsys, tmp_path):
    scene = {"schema_version": 1, "k": 0.1, "material": {"epsilon": 3.0}, "shape": "sphere",
             "refinement": 2, "n_theta": 3, "series_order": 4, "number_density": 0.01}
    r = report(capsys, "em", "matrix", "--scene", write(tmp_path, "e.json", scene))
    S = np.array(r["outputs"]["S"])  # (theta, 2, 2, re/im)
    assert S.shape == (3, 2, 2, 2)
    # Right angle: the in-plane entry vanishes.
    assert abs(S[1, 0, 0, 0]) < 1e-15
    assert "refraction_tensor" in r["outputs"]


def test_probe_invert(capsys, tmp_path):
    from smallbody.scattering import synthesize_probe_field

    P = np.array([0.3, -1.0, 2.0])
    n1, n2 = np.array([0, 0, 1.0]), np.array([1.0, 0, 0])
    e1 = synthesize_probe_field(P, n1, 100.0, 0.5, 1.0)
    e2 = synthesize_probe_field(P, n2, 100.0, 0.5, 1.0)
    scene = {
        "schema_version": 1, "n1": n1.tolist(), "n2": n2.tolist(), "r": 100.0, "k": 0.5,
        "E_n1": [[z.real, z.imag] for z in e1], "E_n2": [[z.real, z.imag] for z in e2],
        "alpha": [[3, 0, 0], [0, 2, 0], [0, 0, 1]], "volume": 1.0,
    }
    r = report(capsys, "probe", "invert", "--scene", write(tmp_path, "p.json", scene))
    np.testing.assert_allclose(np.array(r["outputs"]["P"])[:, 0], P, atol=1e-12)
    np.testing.assert_allclose(np.array(r["outputs"]["E"])[:, 0], P / [3, 2, 1], atol=1e-12)


def test_medium_born_invert_round_trip(capsys, tmp_path):
    grid_path, data_path = tmp_path / "q.json", tmp_path / "d.json"
    report(capsys, "medium", "born", "--random-smooth", "6", "5", "4", "--seed", "3",
           "--grid-out", str(grid_path), "--lattice", "--data-out", str(data_path))
    out_path = tmp_path / "back.json"
    r = report(capsys, "medium", "invert", "--data", str(data_path), "--target", str(grid_path),
               "--grid-out", str(out_path))
    assert r["diagnostics"]["imaginary_residue"] < 1e-8
    original, back = load_grid(grid_path), load_grid(out_path)
    assert np.max(np.abs(original.values - back.values)) < 1e-10


def test_medium_born_sweep(capsys, tmp_path):
    report(capsys, "medium", "born", "--random-smooth", "4", "4", "4", "--grid-out", str(tmp_path / "q.json"), "--lattice")
    r = report(capsys, "medium", "born", "--grid", str(tmp_path / "q.json"), "--k", "1.0", "--n-theta", "5",
               "--csv", str(tmp_path / "f.csv"))
    assert len(r["outputs"]["data"]) == 5
    assert r["outputs"]["data"][0]["f"] == r["outputs"]["forward_value"]


def test_medium_born_seed_changes_data_only(capsys, tmp_path):
    a = report(capsys, "medium", "born", "--random-smooth", "4", "4", "4", "--seed", "1", "--lattice")
    b = report(capsys, "medium", "born", "--random-smooth", "4", "4", "4", "--seed", "2", "--lattice")
    assert a["outputs"]["data"] != b["outputs"]["data"]


# -- report properties -----------------------------------------------------------


def test_output_byte_identical(capsys, tmp_path):
    scene = write(tmp_path, "s.json", TWO_SPHERES)
    runs = [invoke(capsys, "scatter", "many", "--scene", scene)[1] for _ in range(2)]
    assert runs[0] == runs[1]
    runs = [invoke(capsys, "capacitance", "--shape", "sphere", "--refinement", "2")[1] for _ in range(2)]
    assert runs[0] == runs[1]


def test_threads_do_not_change_output(capsys):
    a = invoke(capsys, "capacitance", "--shape", "sphere", "--refinement", "3", "--order", "2")[1]
    b = invoke(capsys, "capacitance", "--shape", "sphere", "--refinement", "3", "--order", "2", "--threads", "3")[1]
    assert a == b


def test_report_layout(capsys, tmp_path):
    out = tmp_path / "r.json"
    assert invoke(capsys, "mesh", "info", "--shape", "sphere", "--refinement", "1", "--out", str(out), "--timings")[0] == 0
    r = json.loads(out.read_text())
    assert set(r) == {"schema_version", "command", "inputs", "outputs", "diagnostics", "timings"}
    assert r["diagnostics"]["warnings"] == []


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "smallbody", "capacitance", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "--order" in proc.stdout
