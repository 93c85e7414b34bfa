import math

import numpy as np
import pytest

from alap import fields, geometry, orbits
from alap.errors import DomainExitError


def unit_square():
    return geometry.box_domain(
        [0, 0], [1, 1], ["ymax"], geometry.BoundaryData("zero"), 1.0
    )


def vertical_field():
    return fields.make_constant_field([0.0, 1.0])


def spiral_affine():
    dom = unit_square()
    return dom, fields.make_affine_field(0.1 * np.eye(2), np.array([0.0, 1.0]), dom)


def test_constant_field_orbit_is_vertical():
    dom = unit_square()
    orb = orbits.integrate_orbit(vertical_field(), [0.5], 0.5, dom)
    assert orb.t_minus == pytest.approx(-0.5, abs=1e-8)
    assert orb.t_plus == pytest.approx(0.5, abs=1e-8)
    assert orb.face_minus == "ymin" and orb.face_plus == "ymax"
    x = orbits.orbit_point(vertical_field(), orb, 0.3)
    assert np.allclose(x, [0.5, 0.8], atol=1e-12)


def test_orbit_rejects_outside_seed():
    dom = unit_square()
    with pytest.raises(ValueError):
        orbits.integrate_orbit(vertical_field(), [1.5], 0.5, dom)


def test_affine_orbit_matches_closed_form():
    dom, f = spiral_affine()
    orb = orbits.integrate_orbit(f, [0.3], 0.4, dom)
    coeff_inv_b = np.linalg.solve(0.1 * np.eye(2), np.array([0.0, 1.0]))
    x0 = np.array([0.3, 0.4])
    for t in (-0.2, 0.15, 0.35):
        exact = math.exp(0.1 * t) * (x0 + coeff_inv_b) - coeff_inv_b
        got = orbits.orbit_point(f, orb, t)
        assert np.max(np.abs(got - exact)) < 1e-8


def test_orbit_time_reversal():
    dom, f = spiral_affine()
    orb = orbits.integrate_orbit(f, [0.3], 0.4, dom)
    xt = orbits.orbit_point(f, orb, 0.3)
    back_orbit = orbits.integrate_orbit(f, [xt[0]], xt[1], dom)
    back = orbits.orbit_point(f, back_orbit, -0.3)
    assert np.max(np.abs(back - np.array([0.3, 0.4]))) <= 1e-8 * dom.delta


def test_orbit_last_coordinate_strictly_increasing():
    dom, f = spiral_affine()
    rng = np.random.default_rng(11)
    for _ in range(25):
        om, lv = rng.uniform(0.05, 0.95, 2)
        orb = orbits.integrate_orbit(f, [om], lv, dom)
        heights = orb.points[:, -1]
        assert np.all(np.diff(heights) > 0.0)
        assert orb.exit_minus[-1] < lv < orb.exit_plus[-1]


def test_orbit_lipschitz_bound():
    dom, f = spiral_affine()
    orb = orbits.integrate_orbit(f, [0.4], 0.3, dom)
    rng = np.random.default_rng(2)
    idx = rng.integers(0, len(orb.times), size=(60, 2))
    for i, j in idx:
        lhs = np.linalg.norm(orb.points[i] - orb.points[j])
        assert lhs <= f.h_upper * abs(orb.times[i] - orb.times[j]) + 1e-9


def test_orbit_point_outside_interval_raises():
    dom = unit_square()
    orb = orbits.integrate_orbit(vertical_field(), [0.5], 0.5, dom)
    with pytest.raises(DomainExitError):
        orbits.orbit_point(vertical_field(), orb, 2.0)


def test_jacobian_constant_field():
    dom = unit_square()
    orb = orbits.integrate_orbit(vertical_field(), [0.5], 0.5, dom)
    assert orbits.jacobian_analytic(vertical_field(), orb, 0.2) == pytest.approx(-1.0)
    assert orbits.jacobian_numeric(vertical_field(), [0.5], 0.5, 0.2, dom) == pytest.approx(
        -1.0, abs=1e-8
    )


def test_jacobian_affine_closed_form():
    dom, f = spiral_affine()
    orb = orbits.integrate_orbit(f, [0.3], 0.4, dom)
    hn = float(f(np.array([0.3, 0.4]))[1])
    for t in (-0.25, 0.0, 0.3):
        expect = -hn * math.exp(0.2 * t)
        assert orbits.jacobian_analytic(f, orb, t) == pytest.approx(expect, rel=1e-10)


def test_jacobian_time_derivative_property():
    # dY/dt = Y div H along the orbit, checked by central differences
    dom, f = spiral_affine()
    orb = orbits.integrate_orbit(f, [0.3], 0.4, dom)
    t, dt = 0.2, 1e-4
    lhs = (
        orbits.jacobian_analytic(f, orb, t + dt) - orbits.jacobian_analytic(f, orb, t - dt)
    ) / (2.0 * dt)
    rhs = orbits.jacobian_analytic(f, orb, t) * 0.2
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_jacobian_oracles_agree():
    dom, f = spiral_affine()
    orb = orbits.integrate_orbit(f, [0.3], 0.4, dom)
    for t in (-0.2, 0.25):
        ya = orbits.jacobian_analytic(f, orb, t)
        yn = orbits.jacobian_numeric(f, [0.3], 0.4, t, dom)
        assert abs(ya - yn) / abs(ya) < 1e-6


def curved_test_field():
    # genuinely nonlinear drift to exercise the finite-difference Jacobian
    def eval_fn(x):
        out = np.empty_like(np.asarray(x, dtype=float))
        out[..., 0] = 0.1 * np.sin(2.0 * x[..., 1])
        out[..., 1] = 1.0 + 0.1 * np.cos(2.0 * x[..., 0])
        return out

    def div_fn(x):
        return np.zeros(np.asarray(x).shape[:-1])

    return fields.FieldH(
        kind="custom", dim=2, eval_fn=eval_fn, div_fn=div_fn,
        h_upper=1.1, h_lower=0.9, lipschitz_const=0.2,
    )


def test_jacobian_numeric_richardson():
    dom = unit_square()
    f = curved_test_field()
    orb = orbits.integrate_orbit(f, [0.4], 0.3, dom)
    ya = orbits.jacobian_analytic(f, orb, 0.3)
    errs = [
        abs(orbits.jacobian_numeric(f, [0.4], 0.3, 0.3, dom, fd_step=s) - ya)
        for s in (2e-3, 1e-3, 5e-4)
    ]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert min(ratios) > 3.0  # quadratic shrink, allowing noise


def test_jacobian_bounds_constant_field():
    dom = unit_square()
    f = vertical_field()
    orbs = [orbits.integrate_orbit(f, [w], 0.5, dom) for w in (0.25, 0.5, 0.75)]
    rep = orbits.certify_jacobian_bounds(f, orbs)
    assert rep.passed
    assert rep.min_neg_jacobian_full == pytest.approx(1.0)
    assert rep.max_neg_jacobian == pytest.approx(1.0)


def test_jacobian_bounds_affine_field():
    dom, f = spiral_affine()
    orbs = [orbits.integrate_orbit(f, [w], 0.4, dom) for w in (0.2, 0.5, 0.8)]
    rep = orbits.certify_jacobian_bounds(f, orbs)
    assert rep.passed
    # positive divergence makes -Y dip below h_lower at backward times only
    assert rep.min_neg_jacobian_full < rep.h_lower
    assert rep.min_neg_jacobian_forward >= rep.h_lower - 1e-9
    assert rep.measured_upper_constant >= 1.0


def test_neg_jacobian_nondecreasing_forward():
    dom, f = spiral_affine()
    orb = orbits.integrate_orbit(f, [0.5], 0.3, dom)
    ts = np.linspace(orb.t_minus, orb.t_plus, 24)
    vals = [-orbits.jacobian_analytic(f, orb, float(t)) for t in ts]
    assert np.all(np.diff(vals) > 0.0)


def test_flow_map_basics():
    dom = unit_square()
    f = vertical_field()
    assert np.allclose(orbits.flow_map(f, 0.4, 0.0, [0.3], dom), [0.3, 0.4])
    assert np.allclose(orbits.flow_map(f, 0.4, 0.25, [0.3], dom), [0.3, 0.65], atol=1e-12)
    with pytest.raises(DomainExitError):
        orbits.flow_map(f, 0.4, 5.0, [0.3], dom)


def test_flow_map_injective_on_grid():
    dom, f = spiral_affine()
    pts = []
    for om in (0.3, 0.5, 0.7):
        orb = orbits.integrate_orbit(f, [om], 0.4, dom)
        for t in np.linspace(orb.t_minus * 0.9, orb.t_plus * 0.9, 7):
            pts.append(orbits.orbit_point(f, orb, float(t)))
    pts = np.array(pts)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    np.fill_diagonal(dist, np.inf)
    assert dist.min() > 1e-3


def test_orbit_family_memoizes():
    dom, f = spiral_affine()
    fam = orbits.OrbitFamily(f, dom, 0.4)
    a = fam.orbit((0.5,))
    b = fam.orbit((0.5,))
    assert a is b
    tmin, tmax = fam.interval((0.5,))
    assert tmin < 0.0 < tmax


def test_orbit_and_jacobian_3d():
    dom = geometry.box_domain(
        [0, 0, 0], [1, 1, 1], ["zmax"], geometry.BoundaryData("zero"), 1.0
    )
    f = fields.make_affine_field(
        np.diag([0.05, 0.0, 0.1]), np.array([0.0, 0.1, 1.0]), dom
    )
    orb = orbits.integrate_orbit(f, [0.4, 0.6], 0.3, dom)
    assert np.all(np.diff(orb.points[:, 2]) > 0.0)
    t = 0.2
    ya = orbits.jacobian_analytic(f, orb, t)
    hn = float(f(np.array([0.4, 0.6, 0.3]))[2])
    assert ya == pytest.approx(-hn * math.exp(0.15 * t), rel=1e-9)
    yn = orbits.jacobian_numeric(f, [0.4, 0.6], 0.3, t, dom)
    assert abs(ya - yn) / abs(ya) < 1e-6
