"""Command-line front end.

Every subcommand reads one config file, writes CSV files plus a plain-text
summary into the output directory, and exits with: 0 on success, 2 on
solver non-convergence, 3 on certification failure, 4 on config errors.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from alap import barriers, config, csvio, fields, free_boundary, geometry, harness
from alap import orbits as orbits_mod
from alap import profiles as profiles_mod
from alap import solver as solver_mod
from alap.errors import ConfigError, NonConvergenceError

EXIT_OK = 0
EXIT_NONCONVERGENCE = 2
EXIT_CERTIFICATION = 3
EXIT_CONFIG = 4


def _load(args):
    cfg = config.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg


def _write_summary(cfg, name, lines):
    path = os.path.join(cfg.out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _require(cfg, *attrs):
    for attr in attrs:
        if getattr(cfg, attr) is None:
            raise ConfigError(f"config is missing its {attr} section")


def _run_solve(cfg):
    _require(cfg, "domain", "resolution", "profile", "fieldh")
    grid = cfg.grid()
    pair, report = solver_mod.solve_problem(grid, cfg.profile, cfg.fieldh, cfg.domain, cfg.solver_config)
    return grid, pair, report


def cmd_solve(args):
    cfg = _load(args)
    _require(cfg, "domain", "resolution", "profile", "fieldh")
    rng = np.random.default_rng(cfg.seed)
    samples = cfg.domain.lower + rng.random((128, cfg.domain.dim)) * (
        cfg.domain.upper - cfg.domain.lower
    )
    mode = "transversal" if cfg.fieldh.transversal else "basic"
    field_rep = fields.certify_field(cfg.fieldh, cfg.domain, samples, mode=mode)
    csvio.write_csv(
        os.path.join(cfg.out_dir, "field_certification.csv"),
        [f"x{k+1}" for k in range(cfg.domain.dim)]
        + [f"H{k+1}" for k in range(cfg.domain.dim)]
        + ["divH", "divH_fd", "pass"],
        field_rep.rows,
    )
    grid, pair, report = _run_solve(cfg)
    nodes = grid.nodes().reshape(-1, grid.dim)
    csvio.write_csv(
        os.path.join(cfg.out_dir, "u.csv"),
        [f"x{k+1}" for k in range(grid.dim)] + ["u"],
        [tuple(nodes[i]) + (float(pair.u.ravel()[i]),) for i in range(nodes.shape[0])],
    )
    centers = grid.cell_centers().reshape(-1, grid.dim)
    csvio.write_csv(
        os.path.join(cfg.out_dir, "chi.csv"),
        [f"x{k+1}" for k in range(grid.dim)] + ["chi"],
        [tuple(centers[i]) + (float(pair.chi.ravel()[i]),) for i in range(centers.shape[0])],
    )
    _write_summary(cfg, "solve_report.txt", report.summary_lines())
    return EXIT_OK


def cmd_check_profile(args):
    cfg = _load(args)
    _require(cfg, "profile")
    samples = np.logspace(-6, 6, 200)
    report = profiles_mod.certify_ellipticity(cfg.profile, samples)
    csvio.write_csv(
        os.path.join(cfg.out_dir, "ellipticity.csv"), ["t", "ratio", "pass"], report.rows()
    )
    _write_summary(
        cfg,
        "profile_report.txt",
        [
            f"family: {cfg.profile.family} {cfg.profile.params}",
            f"a0={cfg.profile.a0} a1={cfg.profile.a1}",
            f"ratio range: [{report.min_ratio:.12f}, {report.max_ratio:.12f}]",
            f"pass: {report.passed}",
        ],
    )
    return EXIT_OK if report.passed else EXIT_CERTIFICATION


def cmd_check_barriers(args):
    cfg = _load(args)
    _require(cfg, "profile", "domain", "fieldh")
    prof, dom = cfg.profile, cfg.domain
    radius = float(cfg.raw.get("barriers.radius", ["0.25"])[0])
    margin_frac = float(cfg.raw.get("barriers.margin", ["0.4"])[0])
    floor = float(cfg.raw.get("barriers.floor", ["1.0"])[0])
    kappa_count = int(cfg.raw.get("barriers.kappa_count", ["5"])[0])
    scales = [float(s) for s in cfg.raw.get("barriers.hopf_scales", ["0.1", "1.0"])]
    center = tuple(0.5 * (dom.lower + dom.upper))
    jobs = []

    def radial_job():
        b = barriers.make_radial_barrier(center, radius, margin_frac * radius, floor, dom.dim, prof.a0)
        return [barriers.certify_radial_inequality(b, prof, seed=cfg.seed)]

    def hopf_job():
        lo, hi = barriers.hopf_kappa_range(dom.dim, prof.a0)
        valid_lo = max(lo, 0.5 * (1.0 + dom.dim / prof.a0))
        out = []
        if valid_lo < hi:
            for kap in np.linspace(valid_lo + 1e-6 * (hi - valid_lo), hi - 1e-2 * (hi - valid_lo), kappa_count):
                b = barriers.make_hopf_barrier(center, radius, float(kap), dom.dim, prof.a0)
                for s in scales:
                    out.append(barriers.certify_hopf_inequality(b, prof, s, seed=cfg.seed))
        return out

    def boundary_job():
        # exterior sphere tangent to the bottom face, centered below it
        sphere_r = 0.2 * dom.delta
        mid = 0.5 * (dom.lower + dom.upper)
        x1 = np.array(list(mid[:-1]) + [float(dom.lower[-1]) - sphere_r])
        bb = barriers.make_boundary_barrier(
            prof, tuple(x1), sphere_r, dom.m_ceiling, cfg.fieldh.h_upper, dom.delta, dom.dim
        )
        rng = np.random.default_rng(cfg.seed)
        dists = rng.uniform(1e-3 * dom.delta, 0.999 * dom.delta, 200)
        raw = rng.normal(size=(200, dom.dim))
        raw[:, -1] = np.abs(raw[:, -1])  # keep samples on the domain side
        raw /= np.linalg.norm(raw, axis=-1, keepdims=True)
        pts = x1 + (sphere_r + dists)[:, None] * raw
        return [barriers.certify_boundary_supersolution(bb, prof, cfg.fieldh, pts)]

    jobs = [radial_job, hopf_job, boundary_job]
    if args.parallel:
        with ThreadPoolExecutor(max_workers=3) as pool:
            results = [item for chunk in pool.map(lambda f: f(), jobs) for item in chunk]
    else:
        results = [item for job in jobs for item in job()]
    rows = [r for rep in results for r in rep.rows()]
    csvio.write_csv(
        os.path.join(cfg.out_dir, "barriers.csv"),
        ["barrier"] + [f"x{k+1}" for k in range(dom.dim)] + ["lhs", "rhs", "margin", "pass"],
        rows,
    )
    all_pass = all(rep.passed for rep in results)
    _write_summary(
        cfg,
        "barriers_report.txt",
        [f"{rep.label}: pass={rep.passed} min_margin={rep.min_margin:.3e}" for rep in results],
    )
    return EXIT_OK if all_pass else EXIT_CERTIFICATION


def cmd_trace(args):
    cfg = _load(args)
    _require(cfg, "domain", "fieldh")
    level = args.level if args.level is not None else float(cfg.raw.get("trace.level", ["0.5"])[0])
    count = args.omega_count if args.omega_count is not None else int(
        cfg.raw.get("trace.omega_count", ["9"])[0]
    )
    dom = cfg.domain
    span = dom.upper - dom.lower
    omegas = [
        tuple(dom.lower[:-1] + span[:-1] * (j + 0.5) / count) for j in range(count)
    ]
    rows = []
    def one(om):
        orbit = orbits_mod.integrate_orbit(cfg.fieldh, np.asarray(om), level, dom)
        local = []
        ts = np.linspace(orbit.t_minus, orbit.t_plus, 32)
        for t in ts:
            x = orbits_mod.orbit_point(cfg.fieldh, orbit, float(t))
            ya = orbits_mod.jacobian_analytic(cfg.fieldh, orbit, float(t))
            yn = orbits_mod.jacobian_numeric(cfg.fieldh, np.asarray(om), level, float(t), dom)
            local.append(tuple(om) + (float(t),) + tuple(map(float, x)) + (ya, yn))
        return local
    if args.parallel:
        with ThreadPoolExecutor(max_workers=4) as pool:
            for chunk in pool.map(one, omegas):
                rows.extend(chunk)
    else:
        for om in omegas:
            rows.extend(one(om))
    csvio.write_csv(
        os.path.join(cfg.out_dir, "trace.csv"),
        [f"omega{k+1}" for k in range(dom.dim - 1)]
        + ["t"]
        + [f"x{k+1}" for k in range(dom.dim)]
        + ["jacobian_analytic", "jacobian_numeric"],
        rows,
    )
    return EXIT_OK


def _fb_levels(cfg, args):
    if args.level is not None:
        return [args.level]
    return [float(v) for v in cfg.raw.get("fb.levels", ["0.2"])]


def cmd_extract_fb(args):
    cfg = _load(args)
    grid, pair, _ = _run_solve(cfg)
    dom = cfg.domain
    count = int(cfg.raw.get("fb.omega_count", ["33"])[0])
    span = dom.upper - dom.lower
    rows = []
    for level in _fb_levels(cfg, args):
        omegas = np.array([dom.lower[0] + span[0] * (j + 0.5) / count for j in range(count)])
        graph = free_boundary.extract_graph(pair, grid, cfg.fieldh, level, omegas, dom)
        tol = free_boundary.default_lsc_tol(
            dom.delta / orbits_mod.STEP_DIVISOR,
            float(np.max(grid.spacing)),
            grad_max=_grad_max(grid, pair.u),
            h_lower=cfg.fieldh.h_lower,
        )
        lsc = free_boundary.certify_lower_semicontinuity(graph, tol)
        for i, om in enumerate(omegas):
            rows.append(
                (level, float(om), float(graph.values[i]), int(graph.set_empty[i]),
                 int(graph.boundary_touching[i]), int(graph.identity_ok[i]), int(lsc.passed))
            )
    csvio.write_csv(
        os.path.join(cfg.out_dir, "free_boundary.csv"),
        ["level", "omega", "phi", "set_empty", "boundary_touching", "identity_ok", "lsc_pass"],
        rows,
    )
    return EXIT_OK


def _grad_max(grid, u):
    grads = geometry.gradient_at_faces(grid, u)
    return max(float(np.max(np.sqrt(np.sum(g * g, axis=-1)))) for g in grads)


def cmd_verify_fb(args):
    cfg = _load(args)
    grid, pair, report = _run_solve(cfg)
    dom = cfg.domain
    count = int(cfg.raw.get("fb.omega_count", ["33"])[0])
    span = dom.upper - dom.lower
    rcfg = cfg.solver_config.resolved(grid, cfg.profile, cfg.fieldh)
    summary = []
    ok = True
    for level in _fb_levels(cfg, args):
        omegas = np.array([dom.lower[0] + span[0] * (j + 0.5) / count for j in range(count)])
        family = orbits_mod.OrbitFamily(cfg.fieldh, dom, level)
        orbit_list = [family.orbit((float(om),)) for om in omegas]
        tol_chi = free_boundary.default_chi_monotone_tol(rcfg.eps, pair.eps_u, dom.m_ceiling)
        mono = free_boundary.certify_chi_monotone(pair, grid, orbit_list, tol_chi)
        rewet = free_boundary.certify_no_rewetting(pair, grid, cfg.fieldh, orbit_list)
        graph = free_boundary.extract_graph(pair, grid, cfg.fieldh, level, omegas, dom)
        tol_lsc = free_boundary.default_lsc_tol(
            dom.delta / orbits_mod.STEP_DIVISOR,
            float(np.max(grid.spacing)),
            _grad_max(grid, pair.u),
            cfg.fieldh.h_lower,
        )
        lsc = free_boundary.certify_lower_semicontinuity(graph, tol_lsc)
        identity_violations = int(np.sum(~(graph.identity_ok | graph.set_empty)))
        mono_violations = int(sum(1 for up in mono.per_orbit if up > tol_chi))
        level_ok = mono.passed and rewet.passed and lsc.passed and identity_violations == 0
        ok = ok and level_ok
        summary.append(
            f"level {level}: chi_monotone={mono.passed} "
            f"(violations {mono_violations}, max uptick {mono.max_uptick:.3e}, tol {tol_chi:.3e}); "
            f"no_rewetting={rewet.passed} (violations {len(rewet.violations)}); "
            f"lsc={lsc.passed} (violations {len(lsc.violations)}); "
            f"interval_identity violations {identity_violations}"
        )
    _write_summary(cfg, "verify_fb.txt", summary)
    return EXIT_OK if ok else EXIT_CERTIFICATION


def cmd_growth(args):
    cfg = _load(args)
    _require(cfg, "domain", "resolution", "profile", "fieldh")
    dim = cfg.domain.dim
    raw_res = cfg.raw.get("growth.resolutions")
    if raw_res:
        if len(raw_res) % dim != 0:
            raise ConfigError("growth.resolutions must hold groups of one resolution per axis")
        res_list = [
            tuple(int(v) for v in raw_res[i : i + dim]) for i in range(0, len(raw_res), dim)
        ]
    else:
        res_list = [cfg.resolution]
    count = int(cfg.raw.get("growth.ball_count", ["5"])[0])

    def one(res):
        grid = cfg.grid(res)
        pair, _ = solver_mod.solve_problem(grid, cfg.profile, cfg.fieldh, cfg.domain, cfg.solver_config)
        balls = harness.find_touching_balls(pair, grid, count)
        return res, harness.growth_report(pair, grid, balls, cfg.profile, cfg.fieldh)

    if args.parallel and len(res_list) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(res_list))) as pool:
            reports = list(pool.map(one, res_list))
    else:
        reports = [one(res) for res in res_list]
    rows = []
    passed = True
    for res, rep in reports:
        passed = passed and rep.passed
        for row in rep.rows:
            rows.append(
                (res[0],) + row.center + (row.radius, row.sup_half_ball, row.ratio, row.bound)
            )
    csvio.write_csv(
        os.path.join(cfg.out_dir, "growth.csv"),
        ["resolution"] + [f"x{k+1}" for k in range(dim)] + ["r", "sup_half_ball", "ratio", "bound"],
        rows,
    )
    return EXIT_OK if passed else EXIT_CERTIFICATION


def cmd_boundary_growth(args):
    cfg = _load(args)
    grid, pair, _ = _run_solve(cfg)
    dom = cfg.domain
    face = cfg.raw.get("boundary_growth.face", ["ymax"])[0]
    lo = [float(v) for v in cfg.raw.get("boundary_growth.anchor_lo", ["0.3"])]
    hi = [float(v) for v in cfg.raw.get("boundary_growth.anchor_hi", ["0.7"])]
    sphere_r = float(cfg.raw.get("boundary_growth.sphere_radius", ["0.09"])[0])
    tube = float(cfg.raw.get("boundary_growth.tube_width", ["0.2"])[0])
    rep = harness.boundary_growth_report(
        pair, grid, dom, face, lo, hi, sphere_r, cfg.profile, cfg.fieldh, tube
    )
    csvio.write_csv(
        os.path.join(cfg.out_dir, "boundary_growth.csv"),
        [f"x{k+1}" for k in range(dom.dim)] + [f"anchor{k+1}" for k in range(dom.dim)] + ["u", "distance", "ratio"],
        [row.point + row.anchor + (row.head, row.distance, row.ratio) for row in rep.rows],
    )
    _write_summary(
        cfg,
        "boundary_growth.txt",
        [
            f"max ratio: {rep.max_ratio!r}",
            f"barrier slope at 0: {rep.barrier_slope!r}",
            f"bound: {rep.bound!r}",
            f"pass: {rep.passed}",
        ],
    )
    return EXIT_OK if rep.passed else EXIT_CERTIFICATION


def cmd_harnack(args):
    cfg = _load(args)
    grid, pair, _ = _run_solve(cfg)
    count = int(cfg.raw.get("growth.ball_count", ["5"])[0])
    balls = harness.find_touching_balls(pair, grid, count)
    shrunk = harness._shrunk(balls)
    rep = harness.harnack_check(pair, grid, shrunk, cfg.profile, cfg.fieldh)
    csvio.write_csv(
        os.path.join(cfg.out_dir, "harnack.csv"),
        [f"x{k+1}" for k in range(cfg.domain.dim)] + ["r", "sup", "inf", "data_term", "constant"],
        [row.center + (row.radius, row.sup, row.inf, row.data_term, row.constant) for row in rep.rows],
    )
    _write_summary(cfg, "harnack.txt", [f"max measured constant: {rep.max_constant!r}"])
    return EXIT_OK


def cmd_rescale(args):
    cfg = _load(args)
    grid, pair, _ = _run_solve(cfg)
    center = [float(v) for v in cfg.raw.get("rescale.center", ["0.5", "0.25"])]
    radius = float(cfg.raw.get("rescale.radius", ["0.2"])[0])
    rep = harness.rescale_check(pair, grid, center, radius, cfg.profile, cfg.fieldh)
    _write_summary(
        cfg,
        "rescale.txt",
        [
            f"radius: {rep.radius!r}",
            f"max equation mismatch: {rep.max_equation_mismatch!r}",
            f"tolerance: {rep.tol!r}",
            f"max |grad v| half ball: {rep.max_gradient_half_ball!r}",
            f"pass: {rep.passed}",
        ],
    )
    return EXIT_OK if rep.passed else EXIT_CERTIFICATION


_COMMANDS = {
    "solve": cmd_solve,
    "check-profile": cmd_check_profile,
    "check-barriers": cmd_check_barriers,
    "trace": cmd_trace,
    "extract-fb": cmd_extract_fb,
    "verify-fb": cmd_verify_fb,
    "growth": cmd_growth,
    "boundary-growth": cmd_boundary_growth,
    "harnack": cmd_harnack,
    "rescale": cmd_rescale,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="alap",
        description="Solve and certify the saturated/dry free boundary problem on box domains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run config file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="sampling seed (overrides config)")
        p.add_argument("--parallel", action="store_true", help="parallelize independent work items")
        if name in ("trace", "extract-fb", "verify-fb"):
            p.add_argument("--h", dest="level", type=float, default=None, help="orbit level")
        if name == "trace":
            p.add_argument("--omega-count", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
