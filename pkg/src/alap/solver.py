"""Penalized fixed-point solver for the coupled (u, chi) problem.

Discretization: the head u sits on nodes, the indicator chi on cells.
The combined face flux

    F = a(|G|) G/|G| . n  +  chi_face * H(face midpoint) . n

uses the full face gradient G (exact normal difference plus averaged
transverse central differences) and the cell-averaged chi. The residual at
an interior node is the discrete divergence of F weighted by the dual cell
volume, i.e. the weak-form residual against nodal hat functions; it
vanishes on boundary nodes, which carry Dirichlet data.

Inner solve (chi frozen): damped inexact Newton on the full residual, so
flux is conserved at every interior node, dry or wet. The Newton operator
is the symmetric positive-definite face-conductance approximation obtained
by differentiating each face flux in its normal difference only, with the
gradient magnitude regularized by sqrt(|G|^2 + mu^2) (the residual itself
stays unregularized). Linear steps are matrix-free conjugate gradients
preconditioned by a discrete-sine-transform constant-coefficient inverse,
at a loose inexact-Newton forcing.

Outer loop: chi is tied to u through the cut-off min(u/eps, 1) evaluated
at cell centers, under-relaxed to damp free-boundary oscillation, with the
penalization width continued down a geometric schedule, until the L1
change of chi at the final width drops below tolerance. The published pair
is projected into [0, M]; mid-iteration heads may transiently leave the
bounds, and the converged head re-enters them on its own up to a sub-cell
tail at the interface.
"""

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.fft import dstn, idstn

from alap import geometry, profiles
from alap.errors import NonConvergenceError, SingularJacobianError


@dataclass(frozen=True)
class SolverConfig:
    """Numerical knobs of the coupled solve.

    ``eps`` (penalization) and ``inner_tol`` (absolute residual max-norm)
    resolve to grid-dependent defaults when left as None: eps = 4 * eps_u
    and inner_tol = inner_tol_factor * (a(M/delta) + h_upper) * V / h_min.
    """

    eps: Optional[float] = None
    inner_tol: Optional[float] = None
    inner_tol_factor: float = 1e-9
    outer_tol: float = 1e-7
    max_inner: int = 60
    max_outer: int = 1000
    relax: float = 0.5
    damping_min: float = 1e-6
    cg_forcing: float = 1e-2
    cg_maxiter: int = 20000
    mu_factor: float = 1e-8
    cond_floor: float = 1e-6
    step_clamp: float = 0.25
    sweep_inner_cap: int = 12

    def resolved(self, grid, profile, fieldh):
        eps = self.eps
        if eps is None:
            eps = 4.0 * grid.positivity_threshold()
        inner = self.inner_tol
        if inner is None:
            dom = grid.domain
            flux_scale = float(profile.a(dom.m_ceiling / dom.delta)) + fieldh.h_upper
            inner = self.inner_tol_factor * flux_scale * grid.cell_volume / float(
                np.min(grid.spacing)
            )
        return replace(self, eps=eps, inner_tol=inner)


@dataclass
class SolveReport:
    """Convergence record of one coupled solve."""

    outer_iterations: int = 0
    inner_iterations: int = 0
    final_residual: float = np.inf
    final_chi_change: float = np.inf
    energy_history: list = field(default_factory=list)
    constraints: Optional[geometry.ComplementarityReport] = None
    converged: bool = False
    wall_time: float = 0.0

    def summary_lines(self):
        lines = [
            f"converged: {self.converged}",
            f"outer iterations: {self.outer_iterations}",
            f"inner Newton steps: {self.inner_iterations}",
            f"final residual (max norm): {self.final_residual:.6e}",
            f"final chi change (L1): {self.final_chi_change:.6e}",
            f"wall time (s): {self.wall_time:.3f}",
        ]
        if self.constraints is not None:
            c = self.constraints
            lines += [
                f"u range: [{c.u_min:.6e}, {c.u_max:.6e}]",
                f"chi range: [{c.chi_min:.6e}, {c.chi_max:.6e}]",
                f"max cell complementarity u(1-chi): {c.max_cell_complementarity:.6e}",
                f"wet cells with chi < 1-1e-6: {c.wet_cells_low_chi}",
            ]
        lines.append("energy per outer iteration: " + " ".join(f"{e:.12e}" for e in self.energy_history))
        return lines


def _face_point_axes(grid, k):
    axes = []
    for j in range(grid.dim):
        if j == k:
            axes.append(grid.axes[j][:-1] + 0.5 * grid.spacing[j])
        else:
            axes.append(grid.axes[j])
    return axes


def _face_field_values(grid, fieldh, k):
    mesh = np.meshgrid(*_face_point_axes(grid, k), indexing="ij")
    pts = np.stack(mesh, axis=-1)
    return fieldh(pts)[..., k]


def _face_chi(grid, chi, k):
    """Average cell chi onto axis-k faces (edge cells replicated outward)."""
    out = np.asarray(chi, dtype=float)
    for j in range(grid.dim):
        if j == k:
            continue
        pad = [(0, 0)] * out.ndim
        pad[j] = (1, 1)
        padded = np.pad(out, pad, mode="edge")
        sl0 = [slice(None)] * out.ndim
        sl1 = [slice(None)] * out.ndim
        sl0[j] = slice(None, -1)
        sl1[j] = slice(1, None)
        out = 0.5 * (padded[tuple(sl0)] + padded[tuple(sl1)])
    return out


def _normal_fluxes(grid, profile, fieldh, u, chi):
    grads = geometry.gradient_at_faces(grid, u)
    fluxes = []
    for k in range(grid.dim):
        g = grads[k]
        mag = np.sqrt(np.sum(g * g, axis=-1))
        scale = np.zeros_like(mag)
        pos = mag > 0.0
        scale[pos] = profile.a(mag[pos]) / mag[pos]
        f = scale * g[..., k]
        f += _face_chi(grid, chi, k) * _face_field_values(grid, fieldh, k)
        fluxes.append(f)
    return fluxes, grads


def residual(grid, profile, fieldh, u, chi):
    """Weak-form residual of div(flux(grad u) + chi H) at interior nodes.

    Zero on boundary nodes. The returned values carry the dual cell volume,
    so they match integration of the flux against nodal hat functions.
    """
    fluxes, _ = _normal_fluxes(grid, profile, fieldh, u, chi)
    out = np.zeros(grid.counts)
    vol = grid.cell_volume
    for k in range(grid.dim):
        inner = [slice(None)] * grid.dim
        inner[k] = slice(1, -1)
        out[tuple(inner)] += np.diff(fluxes[k], axis=k) / grid.spacing[k] * vol
    out[grid.boundary_mask()] = 0.0
    return out


def _conductances(grid, profile, grads, mu, rel_floor):
    """Regularized SPD face conductances d(flux_n)/d(normal difference).

    The gradient magnitude is smoothed by mu; on top of that a floor
    relative to the largest conductance bounds the condition number where
    the operator degenerates (a0 > 1, vanishing gradients). Both touch the
    Newton operator only, never the residual.
    """
    cond = []
    cmax = 0.0
    for k in range(grid.dim):
        g = grads[k]
        mag2 = np.sum(g * g, axis=-1)
        m = np.sqrt(mag2 + mu * mu)
        dn2 = (g[..., k] / m) ** 2
        c = profile.da(m) * dn2 + profile.a(m) / m * (1.0 - dn2)
        if not np.all(np.isfinite(c)):
            raise SingularJacobianError("non-finite face conductance in Newton operator")
        cmax = max(cmax, float(np.max(c)))
        cond.append(c)
    return [np.maximum(c, rel_floor * cmax) for c in cond]


def _neg_jacobian_apply(grid, cond, v):
    """Plain application of the SPD operator to a node array."""
    w = np.zeros(grid.counts)
    vol = grid.cell_volume
    for k in range(grid.dim):
        dv = np.diff(v, axis=k) / grid.spacing[k]
        lin = cond[k] * dv
        inner = [slice(None)] * grid.dim
        inner[k] = slice(1, -1)
        w[tuple(inner)] -= np.diff(lin, axis=k) / grid.spacing[k] * vol
    return w


class _SpectralPreconditioner:
    """Exact inverse of the constant-coefficient surrogate operator.

    Solves c_ref * vol * (-Laplace_h) v = r on the interior with
    homogeneous Dirichlet data through discrete sine transforms; for a
    linear flux law this is the exact Newton operator, and for the
    degenerate laws it still clusters the spectrum far better than the
    diagonal. Fully matrix-free and deterministic.
    """

    def __init__(self, grid, c_ref):
        self.grid = grid
        inner = [c - 2 for c in grid.counts]
        lam = []
        for k, m in enumerate(inner):
            i = np.arange(1, m + 1)
            lam.append(4.0 * np.sin(0.5 * np.pi * i / (m + 1)) ** 2 / grid.spacing[k] ** 2)
        mesh = np.meshgrid(*lam, indexing="ij")
        self.symbol = c_ref * grid.cell_volume * sum(mesh)
        self.inner_slices = tuple(slice(1, -1) for _ in grid.counts)

    def apply(self, r):
        out = np.zeros(self.grid.counts)
        inner = r[self.inner_slices]
        coeffs = dstn(inner, type=1, norm="ortho")
        out[self.inner_slices] = idstn(coeffs / self.symbol, type=1, norm="ortho")
        return out


def _pcg(apply_op, precond, rhs, interior, rtol, maxiter):
    """Preconditioned conjugate gradients on node arrays.

    ``interior`` masks the unknowns; everything outside it stays zero.
    Returns the iterate once |residual|_2 <= rtol |rhs|_2 or the budget
    runs out.
    """
    x = np.zeros_like(rhs)
    r = rhs.copy()
    r[~interior] = 0.0
    target = rtol * float(np.linalg.norm(r))
    if target == 0.0:
        return x
    z = precond(r)
    z[~interior] = 0.0
    p = z.copy()
    rz = float(np.sum(r * z))
    for _ in range(maxiter):
        ap = apply_op(p)
        ap[~interior] = 0.0
        alpha = rz / float(np.sum(p * ap))
        x += alpha * p
        r -= alpha * ap
        if float(np.linalg.norm(r)) <= target:
            break
        z = precond(r)
        z[~interior] = 0.0
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


def _newton_loop(grid, profile, fieldh, chi, cfg, u_init, max_steps):
    """Damped Newton on the full residual; returns (u, steps, rmax, ok).

    The head equation holds at every interior node, dry or wet: flux is
    conserved, never absorbed, so the iterates may transiently leave
    [0, M] while the coupled loop still drives them back (the converged
    penalized pair is nonnegative on its own). Globalization: Armijo
    backtracking on the residual 2-norm plus a per-node step clamp.
    """
    dom = grid.domain
    m_top = dom.m_ceiling
    mu = cfg.mu_factor * m_top / dom.delta
    interior = ~grid.boundary_mask()
    u = np.asarray(u_init, dtype=float).copy()
    chi = np.asarray(chi, dtype=float)
    steps_used = 0
    res = residual(grid, profile, fieldh, u, chi)
    for _ in range(max_steps):
        rmax = float(np.max(np.abs(res)))
        if rmax <= cfg.inner_tol:
            return u, steps_used, rmax, True
        _, grads = _normal_fluxes(grid, profile, fieldh, u, chi)
        cond = _conductances(grid, profile, grads, mu, cfg.cond_floor)
        c_ref = float(np.median(np.concatenate([c.ravel() for c in cond])))
        precond = _SpectralPreconditioner(grid, max(c_ref, cfg.cond_floor))

        def apply_op(v, cond=cond):
            return _neg_jacobian_apply(grid, cond, v)

        d = _pcg(apply_op, precond.apply, res, interior, cfg.cg_forcing, cfg.cg_maxiter)
        if not np.all(np.isfinite(d)):
            raise SingularJacobianError("CG produced non-finite Newton direction")
        # trust-region style clamp: degenerate zones can request huge moves
        step_max = cfg.step_clamp * m_top
        np.clip(d, -step_max, step_max, out=d)
        rnorm = float(np.linalg.norm(res))
        lam = 1.0
        accepted = False
        while lam >= cfg.damping_min:
            u_trial = u + lam * d
            res_trial = residual(grid, profile, fieldh, u_trial, chi)
            if float(np.linalg.norm(res_trial)) <= (1.0 - 1e-4 * lam) * rnorm:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            return u, steps_used, rmax, False
        u, res = u_trial, res_trial
        steps_used += 1
    rmax = float(np.max(np.abs(res)))
    return u, steps_used, rmax, rmax <= cfg.inner_tol


def solve_u_given_chi(grid, profile, fieldh, chi, config, u_init):
    """Head solve with frozen chi: damped inexact Newton.

    ``u_init`` must carry the Dirichlet values on boundary nodes. The
    returned head satisfies |residual|_max <= inner_tol at every interior
    node. Raises NonConvergenceError when the iteration budget runs out or
    the line search stalls.
    """
    cfg = config.resolved(grid, profile, fieldh)
    u, steps, rmax, converged = _newton_loop(
        grid, profile, fieldh, chi, cfg, u_init, cfg.max_inner
    )
    if not converged:
        raise NonConvergenceError(
            f"inner Newton did not reach tolerance; residual {rmax:.3e}"
        )
    return u, steps, rmax


def energy(grid, profile, fieldh, u, chi):
    """Diagnostic functional sum_cells [A(|grad u|) + chi H . grad u] vol.

    Gradients are taken at cell centers; stationarity in u at frozen chi
    reproduces the head equation up to quadrature placement.
    """
    u = np.asarray(u, dtype=float)
    dim = grid.dim
    comps = []
    for k in range(dim):
        g = np.diff(u, axis=k) / grid.spacing[k]
        for j in range(dim):
            if j == k:
                continue
            sl0 = [slice(None)] * dim
            sl1 = [slice(None)] * dim
            sl0[j] = slice(None, -1)
            sl1[j] = slice(1, None)
            g = 0.5 * (g[tuple(sl0)] + g[tuple(sl1)])
        comps.append(g)
    grad = np.stack(comps, axis=-1)
    mag = np.sqrt(np.sum(grad * grad, axis=-1))
    hvals = fieldh(grid.cell_centers())
    dens = profile.big_a(mag) + np.asarray(chi) * np.sum(hvals * grad, axis=-1)
    return float(np.sum(dens) * grid.cell_volume)


def _chi_target(grid, u, eps):
    # transient heads may dip below 0; the cut-off sees the projected head,
    # which also pins cell complementarity of the published pair at eps/4
    clipped = np.clip(u, 0.0, grid.domain.m_ceiling)
    return np.clip(geometry.cell_average(clipped) / eps, 0.0, 1.0)


def _penalization_stages(eps_final, m_ceiling):
    """Geometric continuation schedule from a coarse width down to eps.

    The under-relaxed fixed point moves the drying front only O(eps) per
    sweep; warm-started stages with halving widths cover the travel in
    O(log) sweeps while the converged pair still satisfies the cut-off
    coupling at the final eps.
    """
    stages = [eps_final]
    cap = m_ceiling / 16.0
    while stages[-1] < cap:
        stages.append(stages[-1] * 2.0)
    return stages[::-1]


def solve_problem(grid, profile, fieldh, domain, config=None):
    """Coupled solve of the constrained problem on ``grid``.

    Returns (SolutionPair, SolveReport). The head is initialized by one
    linear (power p = 2) solve of the boundary data with chi = 0, chi by
    the cut-off of that head; each outer step under-relaxes chi toward
    min(u/eps, 1) and re-solves the head, with eps continued down a
    geometric schedule to its configured value. Stops when the L1 change
    of chi at the final eps drops below the outer tolerance.
    """
    if domain is not grid.domain:
        raise ValueError("domain must be the grid's domain")
    if config is None:
        config = SolverConfig()
    cfg = config.resolved(grid, profile, fieldh)
    t0 = time.perf_counter()
    report = SolveReport()

    u_bc = grid.dirichlet_array()
    laplace = profiles.make_power(2.0)
    chi0 = np.zeros(grid.cell_counts)
    u, inner_used, _ = solve_u_given_chi(grid, laplace, fieldh, chi0, cfg, u_bc)
    report.inner_iterations += inner_used

    stages = _penalization_stages(cfg.eps, domain.m_ceiling)
    cross_area = grid.cell_volume / float(np.min(grid.spacing)) * max(grid.counts)
    chi = _chi_target(grid, u, stages[0])
    u, inner_used, rmax, _ = _newton_loop(
        grid, profile, fieldh, chi, cfg, u, cfg.sweep_inner_cap
    )
    report.inner_iterations += inner_used

    # sweeps run capped best-effort Newton: an unconverged head mid-sweep
    # only means the wetting front is still moving, which the chi
    # relaxation continues anyway; the converged state is polished strictly
    converged = False
    cellvol = grid.cell_volume
    outer_total = 0
    for eps_k in stages:
        final_stage = eps_k == stages[-1]
        stage_tol = cfg.outer_tol if final_stage else max(cfg.outer_tol, 0.02 * eps_k * cross_area)
        stage_relax = cfg.relax
        history = []
        while outer_total < cfg.max_outer:
            target = _chi_target(grid, u, eps_k)
            chi_new = (1.0 - stage_relax) * chi + stage_relax * target
            dchi = float(np.sum(np.abs(chi_new - chi)) * cellvol)
            chi = chi_new
            u, inner_used, rmax, _ = _newton_loop(
                grid, profile, fieldh, chi, cfg, u, cfg.sweep_inner_cap
            )
            outer_total += 1
            report.inner_iterations += inner_used
            report.outer_iterations = outer_total
            report.final_residual = rmax
            report.final_chi_change = dchi
            report.energy_history.append(energy(grid, profile, fieldh, u, chi))
            if dchi <= stage_tol:
                converged = final_stage
                break
            history.append(dchi)
            if len(history) >= 8 and dchi >= 0.85 * history[-8]:
                if final_stage:
                    # a plateau here is a relaxation limit cycle (they appear
                    # when the penalization layer spans several cells);
                    # stronger damping restores contraction
                    if stage_relax <= 0.05:
                        break
                    stage_relax = max(0.05, 0.5 * stage_relax)
                    history.clear()
                else:
                    # warmup stages only position the front; a bounded
                    # oscillation around the smeared fixed point is an
                    # acceptable hand-off state
                    break
        if outer_total >= cfg.max_outer:
            break
    if converged:
        try:
            u, inner_used, rmax = solve_u_given_chi(grid, profile, fieldh, chi, cfg, u)
            report.inner_iterations += inner_used
            report.final_residual = rmax
        except NonConvergenceError as exc:
            report.wall_time = time.perf_counter() - t0
            raise NonConvergenceError(str(exc), report=report) from exc
    report.wall_time = time.perf_counter() - t0
    report.converged = converged
    # the converged head is nonnegative up to an exponentially small tail;
    # the projection finalizes the bound constraints of the published pair
    pair = geometry.SolutionPair(
        u=np.clip(u, 0.0, domain.m_ceiling), chi=chi, eps_u=grid.positivity_threshold()
    )
    report.constraints = pair.validate(domain.m_ceiling, comp_bound=cfg.eps)
    if not converged:
        raise NonConvergenceError(
            f"outer loop exhausted {cfg.max_outer} iterations; chi change {report.final_chi_change:.3e}",
            report=report,
        )
    return pair, report
