"""Free-boundary diagnostics of a solved pair along characteristic orbits.

With div H >= 0 the saturation indicator cannot increase along orbits, the
wet set meets each orbit in an initial interval, and for every level h the
free boundary is the graph, in orbit time, of

    phi_h(omega) = sup { t : head along the orbit at (t, omega) > threshold }

(falling back to the entry time when the orbit is dry). This module
samples solved fields along orbits, certifies the monotonicity and
no-rewetting properties, extracts the graph with per-omega flags, and runs
a discrete lower semi-continuity check on it.
"""

from dataclasses import dataclass

import numpy as np

from alap import geometry
from alap.orbits import OrbitFamily, orbit_point


def sample_along_orbit(solution, grid, orbit, count=None):
    """(u-samples, chi-samples) at the orbit's stored sample points.

    The head is interpolated multilinearly; chi is read from the containing
    cell, because blending an indicator-like field would fabricate
    intermediate values and corrupt monotonicity measurements.
    """
    pts = orbit.points if count is None else _resample(orbit, count)
    inside = grid.domain.contains(pts, tol=1e-12 * grid.domain.delta)
    if not np.all(inside):
        raise ValueError("orbit samples leave the solved grid")
    u_vals = geometry.interpolate_nodes(grid, solution.u, pts)
    chi_vals = geometry.cell_values_at(grid, solution.chi, pts)
    return u_vals, chi_vals


def _resample(orbit, count):
    ts = np.linspace(orbit.times[0], orbit.times[-1], count)
    idx = np.searchsorted(orbit.times, ts, side="right") - 1
    idx = np.clip(idx, 0, len(orbit.times) - 1)
    return orbit.points[idx]


def default_chi_monotone_tol(eps, eps_u, m_ceiling):
    """Allowed spurious chi uptick: penalization fraction of the head scale
    plus the discretization-noise fraction of the saturation scale."""
    return 2.0 * eps / m_ceiling + 2.0 * eps_u / eps


@dataclass(frozen=True)
class MonotonicityReport:
    max_uptick: float
    tol: float
    per_orbit: tuple
    passed: bool


def certify_chi_monotone(solution, grid, orbits, tol=None):
    """Largest uptick of chi along each orbit against the tolerance.

    The uptick of one orbit is max_j (chi_j - min_{i<=j} chi_i) over its
    samples in time order. ``tol`` defaults to the standard formula at the
    default penalization width 4 * eps_u.
    """
    if tol is None:
        tol = default_chi_monotone_tol(
            4.0 * solution.eps_u, solution.eps_u, grid.domain.m_ceiling
        )
    upticks = []
    for orbit in orbits:
        _, chi_vals = sample_along_orbit(solution, grid, orbit)
        running = np.minimum.accumulate(chi_vals)
        upticks.append(float(np.max(chi_vals - running)))
    worst = max(upticks) if upticks else 0.0
    return MonotonicityReport(
        max_uptick=worst,
        tol=tol,
        per_orbit=tuple(upticks),
        passed=bool(worst <= tol),
    )


def wet_interval_sup(solution, grid, fieldh, orbit, refine_tol=1e-9, stride=1):
    """Largest orbit time with head above the wet threshold.

    Scans the stored samples (every ``stride``-th one) for the last wet
    sample, bisects between it and the first dry scan sample after it down
    to refine_tol * delta(Omega) in position, and returns the entry time
    t_minus when no sample is wet. The bisection makes the result
    insensitive to the scan density.
    """
    u_vals, _ = sample_along_orbit(solution, grid, orbit)
    scan = np.arange(0, len(u_vals), stride)
    if scan[-1] != len(u_vals) - 1:
        scan = np.append(scan, len(u_vals) - 1)
    wet = u_vals[scan] > solution.eps_u
    if not np.any(wet):
        return orbit.t_minus
    last_wet = int(scan[np.max(np.nonzero(wet)[0])])
    if last_wet == len(u_vals) - 1:
        return orbit.t_plus
    nxt = min(last_wet + stride, len(u_vals) - 1)
    lo, hi = float(orbit.times[last_wet]), float(orbit.times[nxt])
    tol_t = refine_tol * grid.domain.delta / max(fieldh.h_upper, 1e-300)
    while hi - lo > tol_t:
        mid = 0.5 * (lo + hi)
        x = orbit_point(fieldh, orbit, mid)
        if geometry.interpolate_nodes(grid, solution.u, x) > solution.eps_u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class FreeBoundaryGraph:
    """Graph of the wet-interval suprema over an omega grid at one level.

    Flags per omega: ``set_empty`` (orbit never wet, value equals the entry
    time), ``boundary_touching`` (the graph point lies on the domain
    boundary, excluded from interior-only statements), ``identity_ok``
    (the wet set along the orbit is an initial interval within one sample
    step), ``lsc_ok`` (filled by the lower semi-continuity check).
    """

    level: float
    omegas: np.ndarray
    values: np.ndarray
    t_minus: np.ndarray
    t_plus: np.ndarray
    set_empty: np.ndarray
    boundary_touching: np.ndarray
    identity_ok: np.ndarray
    lsc_ok: np.ndarray


def extract_graph(solution, grid, fieldh, level, omegas, domain, refine_tol=1e-9):
    """Wet-interval suprema with flags, plus the interval-identity check.

    The identity check verifies that samples more than one orbit step below
    the graph value are wet and samples above it are dry; a violation
    indicates re-wetting along the orbit, which contradicts the monotone
    structure and points to an unconverged solve.
    """
    omegas = np.asarray(omegas, dtype=float)
    if omegas.ndim == 1 and domain.dim == 2:
        om_list = [(float(w),) for w in omegas]
    else:
        om_list = [tuple(map(float, w)) for w in np.atleast_2d(omegas)]
    family = OrbitFamily(fieldh, domain, level, tol=refine_tol)
    values, tmin, tmax = [], [], []
    set_empty, touching, identity = [], [], []
    for om in om_list:
        orbit = family.orbit(om)
        u_vals, _ = sample_along_orbit(solution, grid, orbit)
        phi = wet_interval_sup(solution, grid, fieldh, orbit, refine_tol)
        wet = u_vals > solution.eps_u
        below = orbit.times < phi - orbit.step
        above = orbit.times > phi + orbit.step
        ok = bool(np.all(wet[below])) and bool(np.all(~wet[above]))
        empty = not bool(np.any(wet))
        graph_point = orbit_point(fieldh, orbit, phi)
        dist_to_boundary = np.minimum(
            np.min(graph_point - domain.lower), np.min(domain.upper - graph_point)
        )
        near = bool(
            dist_to_boundary <= 4.0 * refine_tol * domain.delta
            or phi >= orbit.t_plus - 2.0 * orbit.step
            or phi <= orbit.t_minus + 2.0 * orbit.step
        )
        values.append(phi)
        tmin.append(orbit.t_minus)
        tmax.append(orbit.t_plus)
        set_empty.append(empty)
        touching.append(near or empty)
        identity.append(ok)
    return FreeBoundaryGraph(
        level=float(level),
        omegas=omegas,
        values=np.asarray(values),
        t_minus=np.asarray(tmin),
        t_plus=np.asarray(tmax),
        set_empty=np.asarray(set_empty, dtype=bool),
        boundary_touching=np.asarray(touching, dtype=bool),
        identity_ok=np.asarray(identity, dtype=bool),
        lsc_ok=np.ones(len(values), dtype=bool),
    )


def default_lsc_tol(orbit_step, spacing, grad_max, h_lower):
    """Time tolerance for the discrete lsc check: two orbit steps plus the
    head interpolation error converted to time through transversality."""
    return 2.0 * orbit_step + spacing * grad_max / h_lower


@dataclass(frozen=True)
class LscReport:
    checked: int
    excluded: int
    violations: tuple
    tol: float
    passed: bool


def certify_lower_semicontinuity(graph, tol, modulus=0.0):
    """Discrete lower semi-continuity of the graph on its omega grid.

    At every interior, non-excluded omega the value may not exceed the
    minimum over grid neighbors by more than tol + modulus; ``modulus``
    budgets genuine variation of the underlying graph between samples.
    Boundary-touching and empty omegas are excluded.
    """
    values = graph.values
    omegas = np.atleast_2d(np.asarray(graph.omegas, dtype=float).reshape(len(values), -1))
    excluded = graph.boundary_touching | graph.set_empty
    violations = []
    checked = 0
    if omegas.shape[1] == 1:
        for i in range(1, len(values) - 1):
            if excluded[i]:
                continue
            checked += 1
            env = min(values[i - 1], values[i + 1])
            if values[i] - env > tol + modulus:
                violations.append((i, float(values[i] - env)))
    else:
        shape = _infer_grid_shape(omegas)
        vals2 = values.reshape(shape)
        exc2 = excluded.reshape(shape)
        for i in range(1, shape[0] - 1):
            for j in range(1, shape[1] - 1):
                if exc2[i, j]:
                    continue
                checked += 1
                env = min(vals2[i - 1, j], vals2[i + 1, j], vals2[i, j - 1], vals2[i, j + 1])
                if vals2[i, j] - env > tol + modulus:
                    violations.append(((i, j), float(vals2[i, j] - env)))
    return LscReport(
        checked=checked,
        excluded=int(np.sum(excluded)),
        violations=tuple(violations),
        tol=tol,
        passed=not violations,
    )


def _infer_grid_shape(omegas):
    first = omegas[:, 0]
    uniq = np.unique(first)
    rows = len(uniq)
    cols = len(first) // rows
    if rows * cols != len(first):
        raise ValueError("omega samples do not form a tensor grid")
    return rows, cols


@dataclass(frozen=True)
class RewettingReport:
    orbits_checked: int
    violations: tuple
    slack: float
    passed: bool


def certify_no_rewetting(solution, grid, fieldh, orbits, slack=None):
    """Once the head falls to the wet threshold along an orbit it must stay
    there; counts samples that re-wet after the first dry sample."""
    if slack is None:
        slack = solution.eps_u
    violations = []
    for idx, orbit in enumerate(orbits):
        u_vals, _ = sample_along_orbit(solution, grid, orbit)
        dry = u_vals <= solution.eps_u
        if not np.any(dry):
            continue
        first_dry = int(np.argmax(dry))
        tail = u_vals[first_dry:]
        bad = np.nonzero(tail > solution.eps_u + slack)[0]
        if bad.size:
            violations.append((idx, int(bad.size), float(np.max(tail))))
    return RewettingReport(
        orbits_checked=len(orbits),
        violations=tuple(violations),
        slack=float(slack),
        passed=not violations,
    )


def component_interior_minima(solution, grid):
    """Strong-maximum-principle diagnostic on the discrete wet set.

    Returns, per connected component of {u > eps_u} (face connectivity),
    the minimum of u over the component's interior nodes (those whose
    neighbors all lie in the component); an interior zero inside a wet
    component would contradict the strong maximum principle.
    """
    from scipy import ndimage

    wet = solution.wet_nodes()
    structure = ndimage.generate_binary_structure(wet.ndim, 1)
    labels, count = ndimage.label(wet, structure=structure)
    interior = ndimage.binary_erosion(wet, structure=structure)
    out = []
    for comp in range(1, count + 1):
        mask = (labels == comp) & interior
        if not np.any(mask):
            out.append((comp, None))
        else:
            out.append((comp, float(np.min(solution.u[mask]))))
    return out
