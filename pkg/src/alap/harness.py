"""Growth measurements connecting solved pairs to the regularity theory.

The measurements work on a frozen SolutionPair:

* touching balls: largest balls inside the discrete wet set whose sphere
  meets the free boundary, from a distance transform;
* interior growth: sup of the head over half-balls against the two
  closed-form growth constants, with the measured Harnack factor as the
  allowed slack (the sup-bound constant is the min-bound constant times an
  unquantified Harnack constant, so the artifact measures the two factors
  separately and asserts only their product);
* boundary growth: head-to-distance ratios near the zero-data boundary
  portion against the boundary barrier slope at 0;
* rescale check: the blown-up head v(y) = u(x0 + R y)/R on the unit ball
  satisfies the same equation with source -R div H, verified discretely
  on the pulled-back grid (node-exact, so no interpolation error enters).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from alap import barriers, geometry, solver


@dataclass(frozen=True)
class TouchingBall:
    center: tuple
    center_index: tuple
    radius: float
    touches_free_boundary: bool


def find_touching_balls(solution, grid, count):
    """Largest inscribed balls of the discrete wet set, by distance transform.

    For every wet node the admissible radius is the smaller of the distance
    to the dry set and the distance to the domain boundary; the ``count``
    largest are returned (possibly fewer). An empty free boundary yields an
    empty list.
    """
    wet = solution.wet_nodes()
    if not np.any(wet) or np.all(wet):
        return []
    dist_dry = ndimage.distance_transform_edt(wet, sampling=grid.spacing)
    nodes = grid.nodes()
    dist_boundary = np.minimum(
        np.min(nodes - grid.domain.lower, axis=-1),
        np.min(grid.domain.upper - nodes, axis=-1),
    )
    admissible = np.where(wet, np.minimum(dist_dry, dist_boundary), 0.0)
    flat = admissible.ravel()
    order = np.argsort(flat, kind="stable")[::-1]
    balls = []
    taken = []
    for flat_idx in order:
        r = float(flat[flat_idx])
        if r <= 0.0 or len(balls) >= count:
            break
        idx = np.unravel_index(flat_idx, admissible.shape)
        center = nodes[idx]
        # keep the selection spread out: skip centers inside an earlier ball
        if any(np.linalg.norm(center - np.asarray(c)) < r_prev for c, r_prev in taken):
            continue
        balls.append(
            TouchingBall(
                center=tuple(map(float, center)),
                center_index=tuple(map(int, idx)),
                radius=r,
                touches_free_boundary=bool(dist_dry[idx] <= dist_boundary[idx]),
            )
        )
        taken.append((tuple(center), r))
    return balls


def _ball_mask(grid, center, radius):
    nodes = grid.nodes()
    return np.sum((nodes - np.asarray(center)) ** 2, axis=-1) <= radius**2 + 1e-15


@dataclass(frozen=True)
class GrowthRow:
    center: tuple
    radius: float
    sup_half_ball: float
    ratio: float
    bound: float


@dataclass(frozen=True)
class GrowthReport:
    rows: tuple
    theory_constant: float
    slack: float
    passed: bool


def growth_report(solution, grid, balls, profile, fieldh, slack=None):
    """sup over half-balls of the head divided by the ball radius.

    The comparison constant is the larger of the two closed-form growth
    constants; ``slack`` multiplies it and defaults to the measured Harnack
    factor of the same balls.
    """
    dom = grid.domain
    c1 = barriers.lipschitz_constant_nonpositive_margin(
        profile, dom.dim, fieldh.h_upper, dom.delta
    )
    c2 = barriers.lipschitz_constant_positive_margin(profile, dom.dim, fieldh.h_upper)
    theory = max(c1, c2)
    if slack is None:
        harnack = harnack_check(solution, grid, _shrunk(balls), profile, fieldh)
        slack = max(1.0, harnack.max_constant)
    rows = []
    ok = True
    for ball in balls:
        mask = _ball_mask(grid, ball.center, ball.radius / 2.0)
        sup = float(np.max(solution.u[mask]))
        ratio = sup / ball.radius
        rows.append(GrowthRow(ball.center, ball.radius, sup, ratio, theory * slack))
        ok = ok and ratio <= theory * slack
    return GrowthReport(rows=tuple(rows), theory_constant=theory, slack=slack, passed=ok)


def _shrunk(balls, factor=0.75):
    return [
        TouchingBall(b.center, b.center_index, b.radius * factor, False) for b in balls
    ]


@dataclass(frozen=True)
class HarnackRow:
    center: tuple
    radius: float
    sup: float
    inf: float
    data_term: float
    constant: float


@dataclass(frozen=True)
class HarnackReport:
    rows: tuple
    max_constant: float


def harnack_check(solution, grid, balls, profile, fieldh):
    """Measured constants sup u / (inf u + r a_inv(h delta)) over half-balls.

    The balls must lie strictly inside the wet set (an inf at the threshold
    means the ball touches the free boundary and is rejected).
    """
    dom = grid.domain
    data_scale = float(profile.a_inv(fieldh.h_upper * dom.delta))
    rows = []
    worst = 0.0
    for ball in balls:
        mask = _ball_mask(grid, ball.center, ball.radius / 2.0)
        if not np.all(solution.u[_ball_mask(grid, ball.center, ball.radius)] > solution.eps_u):
            raise ValueError(f"ball at {ball.center} is not strictly inside the wet set")
        sup = float(np.max(solution.u[mask]))
        inf = float(np.min(solution.u[mask]))
        data_term = ball.radius * data_scale
        const = sup / (inf + data_term)
        rows.append(HarnackRow(ball.center, ball.radius, sup, inf, data_term, const))
        worst = max(worst, const)
    return HarnackReport(rows=tuple(rows), max_constant=worst)


@dataclass(frozen=True)
class BoundaryGrowthRow:
    point: tuple
    anchor: tuple
    head: float
    distance: float
    ratio: float


@dataclass(frozen=True)
class BoundaryGrowthReport:
    rows: tuple
    max_ratio: float
    barrier_slope: float
    bound: float
    passed: bool


def boundary_growth_report(solution, grid, domain, face, anchor_lo, anchor_hi,
                           sphere_radius, profile, fieldh, tube_width,
                           interp_slack=0.0):
    """Head-to-distance ratios in a tube around a zero-head boundary patch.

    ``face`` names the boundary face carrying the patch; the patch spans
    [anchor_lo, anchor_hi] in the face coordinates. Ratios u(x)/d(x, patch)
    are compared against the boundary barrier slope at 0 for the exterior
    sphere of radius ``sphere_radius``.
    """
    axis, side = geometry.face_axis_side(face)
    plane = domain.lower[axis] if side == "min" else domain.upper[axis]
    bb = barriers.make_boundary_barrier(
        profile,
        tuple(0.0 for _ in range(domain.dim)),
        sphere_radius,
        domain.m_ceiling,
        fieldh.h_upper,
        domain.delta,
        domain.dim,
    )
    slope0 = float(barriers.boundary_profile_slope(bb, profile, 0.0))
    nodes = grid.nodes()
    dist_axis = np.abs(nodes[..., axis] - plane)
    free_axes = [k for k in range(domain.dim) if k != axis]
    anchor_lo = np.atleast_1d(np.asarray(anchor_lo, dtype=float))
    anchor_hi = np.atleast_1d(np.asarray(anchor_hi, dtype=float))
    in_patch_shadow = np.ones(grid.counts, dtype=bool)
    lateral_excess = np.zeros(grid.counts)
    for k, lo_k, hi_k in zip(free_axes, anchor_lo, anchor_hi):
        coord = nodes[..., k]
        in_patch_shadow &= (coord >= lo_k) & (coord <= hi_k)
        lateral_excess += np.maximum(np.maximum(lo_k - coord, coord - hi_k), 0.0) ** 2
    distance = np.sqrt(dist_axis**2 + lateral_excess)
    tube = (dist_axis <= tube_width) & (distance > 0.0) & in_patch_shadow
    ratios = np.where(tube, solution.u / np.where(distance > 0, distance, 1.0), 0.0)
    worst_idx = np.unravel_index(np.argmax(ratios), ratios.shape)
    rows = []
    flat_idx = np.argsort(ratios.ravel())[::-1][:16]
    for fi in flat_idx:
        idx = np.unravel_index(fi, ratios.shape)
        if not tube[idx]:
            continue
        x = nodes[idx]
        anchor = x.copy()
        anchor[axis] = plane
        for k, lo_k, hi_k in zip(free_axes, anchor_lo, anchor_hi):
            anchor[k] = min(max(anchor[k], lo_k), hi_k)
        rows.append(
            BoundaryGrowthRow(
                point=tuple(map(float, x)),
                anchor=tuple(map(float, anchor)),
                head=float(solution.u[idx]),
                distance=float(distance[idx]),
                ratio=float(ratios[idx]),
            )
        )
    max_ratio = float(ratios[worst_idx])
    bound = slope0 * 1.01 + interp_slack
    return BoundaryGrowthReport(
        rows=tuple(rows),
        max_ratio=max_ratio,
        barrier_slope=slope0,
        bound=bound,
        passed=bool(max_ratio <= bound),
    )


@dataclass(frozen=True)
class RescaleReport:
    radius: float
    center: tuple
    max_equation_mismatch: float
    tol: float
    max_gradient_half_ball: float
    passed: bool


def rescale_check(solution, grid, x0, radius, profile, fieldh, tol=1e-6):
    """Check the blow-up identity on the pulled-back node grid.

    v(y) = u(x0 + R y)/R on the unit ball samples exactly the stored nodes
    (y-nodes are x-nodes mapped back), so discrete gradients of v coincide
    with those of u and the interior equation transforms into
    Delta_A v = -R div(chi H); inside the wet set chi = 1 and the mismatch
    against -R div H measures nothing but the solver residual and the
    (exact, for affine fields) divergence discretization.
    """
    dom = grid.domain
    x0 = np.asarray(x0, dtype=float)
    ball = _ball_mask(grid, x0, radius)
    if not np.all(solution.u[ball] > solution.eps_u):
        raise ValueError("rescale ball must lie inside the wet set")
    res = solver.residual(grid, profile, fieldh, solution.u, solution.chi)
    nodes = grid.nodes()
    # interior of the ball: all face neighbors available and wet
    interior = ball.copy()
    for k in range(grid.dim):
        interior &= np.roll(ball, 1, axis=k) & np.roll(ball, -1, axis=k)
    sl = tuple(slice(1, -1) for _ in range(grid.dim))
    core = np.zeros_like(ball)
    core[sl] = True
    interior &= core
    vol = grid.cell_volume
    # residual carries the dual volume; divide it out for the divergence form
    mism = np.abs(res[interior]) / vol * radius
    grads = geometry.gradient_at_faces(grid, solution.u)
    half = _ball_mask(grid, x0, radius / 2.0)
    gmax = 0.0
    for k in range(grid.dim):
        sl0 = [slice(None)] * grid.dim
        sl1 = [slice(None)] * grid.dim
        sl0[k] = slice(None, -1)
        sl1[k] = slice(1, None)
        face_in_half = half[tuple(sl0)] & half[tuple(sl1)]
        if np.any(face_in_half):
            mags = np.sqrt(np.sum(grads[k][face_in_half] ** 2, axis=-1))
            gmax = max(gmax, float(np.max(mags)))
    return RescaleReport(
        radius=float(radius),
        center=tuple(map(float, x0)),
        max_equation_mismatch=float(np.max(mism)) if np.any(interior) else 0.0,
        tol=tol,
        max_gradient_half_ball=gmax,
        passed=bool((np.max(mism) if np.any(interior) else 0.0) <= tol),
    )
