import numpy as np
import pytest

from twogridfem import (
    InterfaceNotResolved,
    InvalidSubdivision,
    Mesh,
    ParseError,
    ValidationError,
    check_angle_condition,
    generate_interface_mesh,
    load_mesh,
    refine_uniform,
    save_mesh,
    validate_mesh,
)
from twogridfem.mesh import _signed_areas

D_UNIT = {1: 1.0, 2: 1.0}
D_JUMP = {1: 1000.0, 2: 1.0}


def test_generate_counts_default_geometry():
    mesh = generate_interface_mesh(4)
    assert mesh.n_vertices == 25
    assert mesh.n_triangles == 32
    assert len(mesh.interface_edges) == 8
    assert int((mesh.regions == 1).sum()) == 8
    assert mesh.h == pytest.approx(np.sqrt(2.0) * 0.5)


def test_generate_rejects_unaligned_box():
    with pytest.raises(InterfaceNotResolved):
        generate_interface_mesh(3)  # grid lines at +-1/3 miss +-1/2


def test_generate_rejects_small_n():
    with pytest.raises(InvalidSubdivision):
        generate_interface_mesh(1)
    with pytest.raises(InvalidSubdivision):
        generate_interface_mesh(0)


def test_generate_box_outside_domain():
    with pytest.raises(InterfaceNotResolved):
        generate_interface_mesh(4, (-1, 1, -1, 1), (-2, 0.5, -0.5, 0.5))


def test_generated_mesh_is_valid():
    validate_mesh(generate_interface_mesh(6, (0, 3, 0, 3), (0.5, 1.5, 1, 2)))


def test_vline_interface_via_half_domain_box():
    mesh = generate_interface_mesh(4, (-1, 1, -1, 1), (-1, 0, -1, 1))
    # interface reduces to the segment x = 0
    coords = mesh.vertices[mesh.interface_edges.ravel()]
    assert np.all(coords[:, 0] == 0.0)
    assert len(mesh.interface_edges) == 4
    left = mesh.regions[np.arange(mesh.n_triangles)] == 1
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    assert np.all(centroids[left, 0] < 0)
    assert np.all(centroids[~left, 0] > 0)


def test_refine_counts_and_h():
    mesh = generate_interface_mesh(4)
    fine = refine_uniform(mesh)
    assert fine.n_triangles == 128
    assert fine.n_vertices == 81
    assert fine.h == mesh.h / 2
    finer = refine_uniform(fine)
    assert finer.h == mesh.h / 4
    assert finer.parent is fine and fine.parent is mesh


def test_refine_inherits_region_tags():
    mesh = generate_interface_mesh(4)
    fine = refine_uniform(mesh)
    assert np.array_equal(fine.regions, np.repeat(mesh.regions, 4))


def test_refined_vertices_are_parents_or_midpoints():
    mesh = generate_interface_mesh(4)
    fine = refine_uniform(mesh)
    n_old = mesh.n_vertices
    assert np.array_equal(fine.vertices[:n_old], mesh.vertices)
    mids = 0.5 * (mesh.vertices[fine.midpoint_edges[:, 0]]
                  + mesh.vertices[fine.midpoint_edges[:, 1]])
    assert np.array_equal(fine.vertices[n_old:], mids)


def test_area_sum_invariant_across_levels():
    mesh = generate_interface_mesh(4, (-1, 1, -1, 1))
    for _ in range(3):
        areas = _signed_areas(mesh.vertices, mesh.triangles)
        assert abs(areas.sum() - 4.0) <= 1e-12 * 4.0
        mesh = refine_uniform(mesh)


def test_fine_interface_edges_inside_coarse_ones():
    mesh = generate_interface_mesh(4)
    fine = refine_uniform(mesh)
    assert len(fine.interface_edges) == 2 * len(mesh.interface_edges)
    def cross2(u, v):
        return u[0] * v[1] - u[1] * v[0]

    coarse_segments = [
        (mesh.vertices[a], mesh.vertices[b]) for a, b in mesh.interface_edges
    ]
    for a, b in fine.interface_edges:
        pa, pb = fine.vertices[a], fine.vertices[b]
        contained = False
        for qa, qb in coarse_segments:
            lo, hi = np.minimum(qa, qb), np.maximum(qa, qb)
            on = (np.all(pa >= lo - 1e-14) and np.all(pa <= hi + 1e-14)
                  and np.all(pb >= lo - 1e-14) and np.all(pb <= hi + 1e-14))
            collinear = abs(cross2(qb - qa, pa - qa)) < 1e-14 and \
                abs(cross2(qb - qa, pb - qa)) < 1e-14
            if on and collinear:
                contained = True
                break
        assert contained


def test_angle_condition_structured_mesh_all_levels():
    mesh = generate_interface_mesh(4)
    for _ in range(3):
        report = check_angle_condition(mesh, D_JUMP)
        assert report.passes
        assert report.violating_pairs == []
        assert report.worst_offdiag <= report.tolerance
        mesh = refine_uniform(mesh)


def test_angle_condition_obtuse_triangle_fails():
    # nearly degenerate triangle with an obtuse angle at vertex 2
    mesh = Mesh(
        vertices=np.array([[0.0, 0.0], [4.0, 0.0], [3.9, 0.2]]),
        triangles=np.array([[0, 1, 2]]),
        regions=np.array([1]),
        boundary_vertices=np.array([0, 1, 2]),
        interface_edges=np.empty((0, 2), dtype=np.int64),
        h=4.0,
    )
    report = check_angle_condition(mesh, {1: 1.0})
    assert not report.passes
    assert (0, 1) in report.violating_pairs
    assert report.worst_offdiag > report.tolerance


def test_angle_report_passes_iff_no_violations():
    good = check_angle_condition(generate_interface_mesh(4), D_UNIT)
    assert good.passes == (len(good.violating_pairs) == 0)


def test_save_load_round_trip():
    mesh = refine_uniform(generate_interface_mesh(4))
    text = save_mesh(mesh)
    back = load_mesh(text)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.regions, mesh.regions)
    assert np.array_equal(back.boundary_vertices, mesh.boundary_vertices)
    assert np.array_equal(back.interface_edges, mesh.interface_edges)
    assert back.h == pytest.approx(mesh.h, rel=1e-15)


def test_load_accepts_comments_and_blank_lines():
    text = (
        "# a tiny one-triangle mesh\n\n"
        "vertices 3\n"
        "0.0 0.0 1\n"
        "1.0 0.0 1  # inline comment\n"
        "0.0 1.0 1\n"
        "triangles 1\n"
        "0 1 2 1\n"
        "interface_edges 0\n"
    )
    mesh = load_mesh(text)
    assert mesh.n_triangles == 1
    assert list(mesh.boundary_vertices) == [0, 1, 2]


def test_load_rejects_out_of_range_index():
    text = (
        "vertices 3\n0 0 1\n1 0 1\n0 1 1\n"
        "triangles 1\n0 1 3 1\n"
        "interface_edges 0\n"
    )
    with pytest.raises(ValidationError):
        load_mesh(text)


def test_load_rejects_negative_area():
    text = (
        "vertices 3\n0 0 1\n1 0 1\n0 1 1\n"
        "triangles 1\n0 2 1 1\n"  # clockwise
        "interface_edges 0\n"
    )
    with pytest.raises(ValidationError):
        load_mesh(text)


def test_parse_error_carries_line_number():
    text = "vertices 2\n0 0 1\noops\ntriangles 0\ninterface_edges 0\n"
    with pytest.raises(ParseError) as err:
        load_mesh(text)
    assert err.value.line_number == 3


def test_parse_error_on_bad_header():
    with pytest.raises(ParseError):
        load_mesh("points 3\n")


def test_mesh_arrays_are_read_only():
    mesh = generate_interface_mesh(4)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 99.0
