import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from smallbody.errors import (
    DegenerateFaceError,
    InvalidArgumentError,
    MeshParseError,
    NonWatertightMeshError,
)
from smallbody.mesh import (
    TriMesh,
    generate_box,
    generate_ellipsoid,
    generate_sphere,
    load_mesh,
    mesh_metrics,
    save_obj,
    save_off,
)


def test_icosahedron_counts():
    m = generate_sphere(1.0, 0)
    assert (m.n_faces, m.n_vertices) == (20, 12)


def test_refinement_three_face_count():
    assert generate_sphere(1.0, 3).n_faces == 1280


@pytest.mark.parametrize("radius", [-1.0, 0.0])
def test_sphere_rejects_non_positive_radius(radius):
    with pytest.raises(InvalidArgumentError):
        generate_sphere(radius, 0)


def test_sphere_vertices_on_sphere():
    m = generate_sphere(2.5, 2)
    np.testing.assert_allclose(np.linalg.norm(m.vertices, axis=1), 2.5, rtol=1e-14)


def test_degenerate_ellipsoid_is_sphere():
    np.testing.assert_array_equal(generate_ellipsoid(1, 1, 1, 2).vertices, generate_sphere(1, 2).vertices)


def test_ellipsoid_rejects_zero_axis():
    with pytest.raises(InvalidArgumentError):
        generate_ellipsoid(1, 0, 1, 1)


@pytest.mark.xfail(
    strict=True,
    reason="inscribed icosphere at refinement 3 underestimates the volume by 0.86%",
)
def test_ellipsoid_volume_refinement3_half_percent():
    v = mesh_metrics(generate_ellipsoid(2, 1, 1, 3)).volume
    assert v == pytest.approx(4 * math.pi * 2 / 3, rel=5e-3)


def test_ellipsoid_volume_refinement4_half_percent():
    v = mesh_metrics(generate_ellipsoid(2, 1, 1, 4)).volume
    assert v == pytest.approx(8 * math.pi / 3, rel=5e-3)


@pytest.mark.xfail(
    strict=True,
    reason="inscribed icosphere at refinement 4 has S, V errors of 0.12% and 0.22%",
)
def test_sphere_metrics_refinement4_tenth_percent():
    mm = mesh_metrics(generate_sphere(1, 4))
    assert mm.surface_area == pytest.approx(4 * math.pi, rel=1e-3)
    assert mm.volume == pytest.approx(4 * math.pi / 3, rel=1e-3)


def test_sphere_metrics_refinement5_tenth_percent():
    mm = mesh_metrics(generate_sphere(1, 5))
    assert mm.surface_area == pytest.approx(4 * math.pi, rel=1e-3)
    assert mm.volume == pytest.approx(4 * math.pi / 3, rel=1e-3)


def test_sphere_metrics_refinement4_quarter_percent():
    mm = mesh_metrics(generate_sphere(1, 4))
    assert mm.surface_area == pytest.approx(4 * math.pi, rel=2.5e-3)
    assert mm.volume == pytest.approx(4 * math.pi / 3, rel=2.5e-3)


def test_unit_cube_metrics_exact():
    mm = mesh_metrics(generate_box(1.0, 1))
    assert mm.surface_area == 6.0
    assert mm.volume == 1.0
    assert mm.diameter == pytest.approx(math.sqrt(3) / 2)


def test_refinement_improves_sphere_monotonically():
    errs = [mesh_metrics(generate_sphere(1, r)) for r in range(5)]
    s_err = [abs(m.surface_area - 4 * math.pi) for m in errs]
    v_err = [abs(m.volume - 4 * math.pi / 3) for m in errs]
    assert all(a > b for a, b in zip(s_err, s_err[1:]))
    assert all(a > b for a, b in zip(v_err, v_err[1:]))


def test_panel_invariants():
    m = generate_ellipsoid(1.5, 1.0, 0.7, 2)
    p = m.panels
    np.testing.assert_allclose(np.linalg.norm(p.normals, axis=1), 1.0, atol=1e-12)
    assert np.all(p.areas > 0)
    mm = mesh_metrics(m)
    assert p.areas.sum() == mm.surface_area
    assert mm.surface_area**3 >= 36 * math.pi * mm.volume**2


def test_outward_normals_on_sphere():
    p = generate_sphere(1, 2).panels
    assert np.all(np.einsum("ij,ij->i", p.normals, p.centroids) > 0)


@settings(max_examples=25, deadline=None)
@given(
    offset=st.lists(st.floats(-10, 10), min_size=3, max_size=3),
    quat=st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda q: np.linalg.norm(q) > 0.1),
)
def test_rigid_motion_preserves_metrics(offset, quat):
    m = generate_ellipsoid(1.3, 0.9, 0.6, 2)
    R = Rotation.from_quat(quat).as_matrix()
    base, moved = mesh_metrics(m), mesh_metrics(m.transformed(R, offset))
    assert moved.surface_area == pytest.approx(base.surface_area, rel=1e-12)
    assert moved.volume == pytest.approx(base.volume, rel=1e-12, abs=1e-12 * np.abs(offset).max())


@pytest.mark.parametrize("lam", [0.1, 2.0, 7.5])
def test_uniform_scaling(lam):
    m = generate_ellipsoid(1.3, 0.9, 0.6, 2)
    a, b = mesh_metrics(m), mesh_metrics(m.scaled(lam))
    assert b.surface_area == pytest.approx(lam**2 * a.surface_area, rel=1e-13)
    assert b.volume == pytest.approx(lam**3 * a.volume, rel=1e-13)


def test_reflection_keeps_outward_orientation():
    m = generate_box((1, 2, 3), 2).transformed(np.diag([-1.0, 1.0, 1.0]))
    assert mesh_metrics(m).volume == pytest.approx(6.0)


# -- file I/O ---------------------------------------------------------------


def test_off_round_trip(tmp_path):
    m = generate_sphere(1, 0)
    save_off(m, tmp_path / "ico.off")
    loaded = load_mesh(tmp_path / "ico.off")
    assert loaded.n_faces == 20
    np.testing.assert_array_equal(loaded.vertices, m.vertices)
    np.testing.assert_array_equal(loaded.faces, m.faces)


def test_obj_round_trip(tmp_path):
    m = generate_box(1.0, 2)
    save_obj(m, tmp_path / "box.obj")
    loaded = load_mesh(tmp_path / "box.obj")
    assert mesh_metrics(loaded).volume == pytest.approx(1.0)


def test_off_with_header_counts_on_same_line_and_comments(tmp_path):
    text = "OFF 4 4 0\n# tetra\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n"
    path = tmp_path / "tet.off"
    path.write_text(text)
    assert mesh_metrics(load_mesh(path)).volume == pytest.approx(1 / 6)


def test_open_mesh_rejected(tmp_path):
    m = generate_sphere(1, 0)
    lines = ["OFF", f"12 19 0"] + [" ".join(map(repr, v)) for v in m.vertices.tolist()]
    lines += [f"3 {i} {j} {k}" for i, j, k in m.faces[:-1].tolist()]
    path = tmp_path / "open.off"
    path.write_text("\n".join(lines))
    with pytest.raises(NonWatertightMeshError):
        load_mesh(path)


def test_inward_sphere_repaired(tmp_path):
    m = generate_sphere(1, 1)
    flipped = TriMesh.__new__(TriMesh)  # bypass validation to write an inward file
    object.__setattr__(flipped, "vertices", m.vertices)
    object.__setattr__(flipped, "faces", m.faces[:, ::-1])
    save_off(flipped, tmp_path / "inward.off")
    loaded = load_mesh(tmp_path / "inward.off")
    assert mesh_metrics(loaded).volume > 0
    np.testing.assert_array_equal(loaded.faces, m.faces[:, ::-1][:, ::-1])


def test_degenerate_face_rejected(tmp_path):
    # Tetrahedron with one vertex moved into the plane of the others.
    text = "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0.5 0.5 0\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n"
    path = tmp_path / "flat.off"
    path.write_text(text)
    with pytest.raises(DegenerateFaceError):
        load_mesh(path)


@pytest.mark.parametrize(
    "text",
    ["", "PLY\n", "OFF\n3 1\n0 0 0\n1 0 0\n", "OFF\n3 1 0\n0 0 0\n1 x 0\n0 1 0\n3 0 1 2\n"],
)
def test_parse_errors(tmp_path, text):
    path = tmp_path / "bad.off"
    path.write_text(text)
    with pytest.raises(MeshParseError):
        load_mesh(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_mesh(tmp_path / "missing.off")


def test_error_variants_are_distinct():
    assert len({MeshParseError, NonWatertightMeshError, DegenerateFaceError}) == 3
    assert not issubclass(MeshParseError, NonWatertightMeshError)
