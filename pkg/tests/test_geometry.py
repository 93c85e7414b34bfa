import numpy as np
import pytest

from alap import geometry


def dam_domain(level=0.6):
    return geometry.box_domain(
        [0, 0], [1, 1], ["ymax"], geometry.BoundaryData("hydrostatic", (level,)), level
    )


def test_build_grid_spacing():
    dom = dam_domain()
    g3 = geometry.build_grid(dom, (3, 3))
    assert np.allclose(g3.spacing, [0.5, 0.5])
    g129 = geometry.build_grid(dom, (129, 129))
    assert np.allclose(g129.spacing, [1.0 / 128.0, 1.0 / 128.0])


def test_build_grid_rejects_degenerate_counts():
    with pytest.raises(ValueError):
        geometry.build_grid(dam_domain(), (2, 5))


def test_grid_refinement_nests_nodes():
    dom = dam_domain()
    coarse = geometry.build_grid(dom, (9, 9))
    fine = geometry.build_grid(dom, (17, 17))
    assert np.allclose(fine.axes[0][::2], coarse.axes[0])


def test_domain_validation():
    with pytest.raises(ValueError):
        geometry.box_domain([0, 0], [0, 1], [], geometry.BoundaryData("zero"), 1.0)
    with pytest.raises(ValueError):
        geometry.box_domain([0, 0], [1, 1], [], geometry.BoundaryData("zero"), -1.0)


def test_marked_boundary_and_dirichlet_values():
    dom = dam_domain()
    pts = np.array([[0.5, 1.0], [0.5, 0.0], [0.0, 0.3], [0.5, 0.5]])
    marked = dom.on_marked_boundary(pts)
    assert list(marked) == [True, False, False, False]
    vals = dom.dirichlet_value(pts)
    assert vals[0] == 0.0
    assert vals[1] == pytest.approx(0.6)
    assert vals[2] == pytest.approx(0.3)


def test_t_region_subrectangle():
    region = geometry.TRegion("ymax", lo=(0.25,), hi=(0.75,))
    dom = geometry.Domain(
        np.array([0.0, 0.0]), np.array([1.0, 1.0]), (region,),
        geometry.BoundaryData("zero"), 1.0,
    )
    pts = np.array([[0.5, 1.0], [0.1, 1.0]])
    assert list(dom.on_marked_boundary(pts)) == [True, False]


def test_face_name_validation():
    with pytest.raises(ValueError):
        geometry.face_axis_side("top")
    assert geometry.face_axis_side("zmin") == (2, "min")


def test_gradient_exact_for_affine():
    dom = dam_domain()
    grid = geometry.build_grid(dom, (17, 33))
    nodes = grid.nodes()
    u = 2.0 * nodes[..., 0] - 3.0 * nodes[..., 1] + 1.0
    for g in geometry.gradient_at_faces(grid, u):
        assert np.allclose(g[..., 0], 2.0, atol=1e-12)
        assert np.allclose(g[..., 1], -3.0, atol=1e-12)


def test_gradient_of_constant_vanishes():
    grid = geometry.build_grid(dam_domain(), (9, 9))
    u = np.full(grid.counts, 5.0)
    for g in geometry.gradient_at_faces(grid, u):
        assert np.allclose(g, 0.0)


def test_gradient_quadratic_exact_at_face_midpoints():
    # central difference of x^2 across a face equals 2x at the face midpoint
    grid = geometry.build_grid(dam_domain(), (9, 9))
    nodes = grid.nodes()
    u = nodes[..., 0] ** 2
    gx = geometry.gradient_at_faces(grid, u)[0]
    mid = grid.axes[0][:-1] + 0.5 * grid.spacing[0]
    assert np.allclose(gx[..., 0], 2.0 * mid[:, None])


def test_cell_average_of_affine_is_center_value():
    grid = geometry.build_grid(dam_domain(), (9, 9))
    nodes = grid.nodes()
    u = 1.5 * nodes[..., 0] + 0.25 * nodes[..., 1]
    centers = grid.cell_centers()
    assert np.allclose(
        geometry.cell_average(u), 1.5 * centers[..., 0] + 0.25 * centers[..., 1]
    )


def test_interpolation_matches_affine():
    grid = geometry.build_grid(dam_domain(), (17, 17))
    nodes = grid.nodes()
    u = 0.7 * nodes[..., 0] - 0.2 * nodes[..., 1] + 0.1
    pts = np.array([[0.33, 0.41], [0.031, 0.97], [1.0, 1.0]])
    vals = geometry.interpolate_nodes(grid, u, pts)
    assert np.allclose(vals, 0.7 * pts[:, 0] - 0.2 * pts[:, 1] + 0.1)


def test_cell_values_at_containing_cell():
    grid = geometry.build_grid(dam_domain(), (5, 5))
    chi = np.zeros(grid.cell_counts)
    chi[1, 2] = 1.0
    val = geometry.cell_values_at(grid, chi, np.array([0.3, 0.6]))
    assert val == 1.0


def test_positivity_threshold_scale():
    grid = geometry.build_grid(dam_domain(), (65, 65))
    h = float(np.max(grid.spacing))
    expected = 10.0 * h * h * 0.6 / 2.0
    assert grid.positivity_threshold() == pytest.approx(expected)


def test_solution_pair_validation():
    dom = dam_domain()
    grid = geometry.build_grid(dom, (17, 17))
    ys = grid.nodes()[..., 1]
    u = np.maximum(0.6 - ys, 0.0)
    chi = (grid.cell_centers()[..., 1] < 0.6).astype(float)
    pair = geometry.SolutionPair(u=u, chi=chi, eps_u=grid.positivity_threshold())
    rep = pair.validate(0.6, comp_bound=0.05)
    assert rep.passed
    assert rep.u_min >= 0.0 and rep.u_max <= 0.6
    bad = geometry.SolutionPair(u=u + 1.0, chi=chi, eps_u=pair.eps_u)
    assert not bad.validate(0.6).passed


def test_boundary_data_kinds():
    dom = dam_domain()
    two = geometry.BoundaryData("two_level", (0.7, 0.3))
    val = two.value(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.9]]), dom)
    assert val[0] == pytest.approx(0.7)
    assert val[1] == pytest.approx(0.3)
    assert val[2] == 0.0
    with pytest.raises(ValueError):
        geometry.BoundaryData("nope").value(np.zeros((1, 2)), dom)
