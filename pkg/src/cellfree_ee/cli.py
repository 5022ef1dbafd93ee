"""Experiment runner: scenario generation, single solves, and sweeps.

Subcommands
    generate   realize one scenario and save it as JSON
    solve      run the optimizer on one instance, emit trace + summary
    sweep      Monte-Carlo sweep over system sizes, emit summary CSV
    check      quick oracle self-checks

All tabular output is CSV with a fixed column order; every run writes a
JSON sidecar with config, seed, and the final power coefficients so it can
be replayed without re-generation.  Timing fields are only written when
requested, keeping the remaining output byte-reproducible from the master
seed.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 internal failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .objective import eval_objective, grad_objective
from .oracles import compare, fd_grad_objective, grid_project
from .problem import PowerModel, precompute, problem_from_arrays
from .projection import FeasibleSetSpec, project
from .scenario import Scenario, ScenarioConfig, generate
from .solver import SolverConfig, SolverError, solve

TRACE_COLUMNS = [
    "outer_iter", "inner_iter", "xi", "f_xi", "ee_Mbit_per_J",
    "penalty_sum", "violation", "alpha_y", "alpha_theta", "branch",
]

SUMMARY_COLUMNS = [
    "M", "K", "N", "tau_c", "tau_p", "se_target", "realizations",
    "mean_ee_mbit_per_j", "median_ee_mbit_per_j", "mean_sum_se_bit_s_hz",
    "feasibility_rate", "mean_outer_iters", "mean_inner_iters",
]
TIMING_COLUMN = "mean_wall_time_s"


@dataclass
class ExperimentSpec:
    M: list = field(default_factory=lambda: [8])
    K: list = field(default_factory=lambda: [4])
    N: list = field(default_factory=lambda: [1])
    tau_c: list = field(default_factory=lambda: [200])
    tau_p: list = field(default_factory=lambda: ["K"])  # "K" means tau_p = K
    se_target: list = field(default_factory=lambda: [1.0])
    realizations: int = 1
    master_seed: int = 0
    outdir: str = "runs"
    emit_trace: bool = False
    emit_summary: bool = True
    emit_timing: bool = True
    workers: int = 1
    scenario: dict = field(default_factory=dict)   # extra ScenarioConfig fields
    power: dict = field(default_factory=dict)      # PowerModel overrides
    solver: dict = field(default_factory=dict)     # SolverConfig overrides

    def validate(self):
        for name in ("M", "K", "N", "tau_c", "tau_p", "se_target"):
            if not getattr(self, name):
                raise ValueError(f"sweep list '{name}' must be nonempty")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")

    def points(self):
        return list(product(self.M, self.K, self.N, self.tau_c, self.tau_p,
                            self.se_target))


def derive_seed(master_seed, point_index, realization_index):
    """Stable per-run seed from (master seed, sweep point, realization)."""
    ss = np.random.SeedSequence(
        [int(master_seed), int(point_index), int(realization_index)]
    )
    return int(ss.generate_state(1, np.uint32)[0])


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_convergence_data(trace, path):
    """Write one CSV row per inner iteration, enough to replot convergence."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for rec in trace:
            writer.writerow([
                rec.outer, rec.inner, _fmt(rec.xi), _fmt(rec.f_xi),
                _fmt(rec.ee_term / 1e6), _fmt(rec.penalty_sum),
                _fmt(rec.violation), _fmt(rec.alpha_y), _fmt(rec.alpha_theta),
                rec.branch,
            ])


def _scenario_config(point, seed, extra):
    m, k, n, tau_c, tau_p, _ = point
    tau_p = k if tau_p == "K" else int(tau_p)
    kwargs = dict(extra)
    kwargs.update(M=int(m), K=int(k), N=int(n), tau_c=int(tau_c),
                  tau_p=tau_p, seed=int(seed))
    return ScenarioConfig(**kwargs)


def run_single(point, point_index, realization_index, spec: ExperimentSpec):
    """One scenario -> precompute -> solve pass; returns a plain dict."""
    seed = derive_seed(spec.master_seed, point_index, realization_index)
    cfg = _scenario_config(point, seed, spec.scenario)
    scn = generate(cfg)
    pd = precompute(scn, PowerModel(**spec.power), se_targets=float(point[5]))
    result = solve(pd, SolverConfig(**spec.solver))
    return {
        "point": {
            "M": cfg.M, "K": cfg.K, "N": cfg.N,
            "tau_c": cfg.tau_c, "tau_p": cfg.tau_p, "se_target": float(point[5]),
        },
        "point_index": point_index,
        "realization": realization_index,
        "seed": seed,
        "scenario_config": asdict(cfg),
        "power_model": asdict(PowerModel(**spec.power)),
        "solver_overrides": dict(spec.solver),
        "theta_opt": result.theta_opt.tolist(),
        "ee_bit_per_j": result.ee,
        "se_per_user": result.se_per_user.tolist(),
        "sum_se_bit_s_hz": float(result.se_per_user.sum()),
        "violation": result.violation_final,
        "feasible": result.feasible,
        "converged": result.converged,
        "outer_iters": result.outer_iters,
        "inner_iters": result.inner_iters_total,
        "power_report": result.power_report,
        "wall_time_s": result.wall_time_s,
        "trace": result.trace,
    }


def _run_task(args):
    point, point_index, realization_index, spec_dict = args
    spec = ExperimentSpec(**spec_dict)
    return run_single(point, point_index, realization_index, spec)


def run_experiment(spec: ExperimentSpec):
    """Execute the full sweep and write artifacts; returns the summary rows."""
    spec.validate()
    outdir = Path(spec.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    points = spec.points()
    tasks = [
        (point, pi, ri, asdict(spec))
        for pi, point in enumerate(points)
        for ri in range(spec.realizations)
    ]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            runs = list(pool.map(_run_task, tasks))
    else:
        runs = [_run_task(t) for t in tasks]
    runs.sort(key=lambda r: (r["point_index"], r["realization"]))

    for run in runs:
        stem = f"p{run['point_index']:03d}_r{run['realization']:03d}"
        if spec.emit_trace:
            emit_convergence_data(run["trace"], outdir / f"trace_{stem}.csv")
        sidecar = {k: v for k, v in run.items() if k != "trace"}
        if not spec.emit_timing:
            sidecar.pop("wall_time_s")
        with open(outdir / f"run_{stem}.json", "w") as fh:
            json.dump(sidecar, fh)

    rows = []
    for pi, point in enumerate(points):
        group = [r for r in runs if r["point_index"] == pi]
        ee_mbit = [r["ee_bit_per_j"] / 1e6 for r in group]
        row = {
            "M": point[0], "K": point[1], "N": point[2],
            "tau_c": point[3], "tau_p": point[4], "se_target": point[5],
            "realizations": len(group),
            "mean_ee_mbit_per_j": statistics.fmean(ee_mbit),
            "median_ee_mbit_per_j": statistics.median(ee_mbit),
            "mean_sum_se_bit_s_hz": statistics.fmean(
                r["sum_se_bit_s_hz"] for r in group
            ),
            "feasibility_rate": statistics.fmean(
                1.0 if r["feasible"] else 0.0 for r in group
            ),
            "mean_outer_iters": statistics.fmean(r["outer_iters"] for r in group),
            "mean_inner_iters": statistics.fmean(r["inner_iters"] for r in group),
        }
        if spec.emit_timing:
            row[TIMING_COLUMN] = statistics.fmean(r["wall_time_s"] for r in group)
        rows.append(row)

    if spec.emit_summary:
        columns = SUMMARY_COLUMNS + ([TIMING_COLUMN] if spec.emit_timing else [])
        with open(outdir / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in columns])
    return rows


def run_checks(verbose=True):
    """Small oracle suite: gradient, projection, and objective identities."""
    rng = np.random.default_rng(7)
    m, k = 6, 3
    beta = rng.uniform(0.5, 2.0, size=(m, k))
    gamma = beta * rng.uniform(0.2, 0.8, size=(m, k))
    pd = problem_from_arrays(
        beta, gamma, pilot_of=np.array([0, 0, 1]), N=1, tau_c=200, tau_p=20,
        bandwidth_hz=1.0, rho_d=1.0, noise_w=1.0,
        power_model=PowerModel(0.5, 0.1, 0.2, 0.0), se_targets=0.5,
    )
    spec = FeasibleSetSpec(m, k, 1)
    theta = project(rng.uniform(0.05, 0.4, size=m * k), spec)
    theta = np.maximum(theta, 0.01)

    reports = []
    for xi in (0.0, 5.0):
        g_cf = grad_objective(theta, pd, xi)
        g_fd = fd_grad_objective(theta, pd, xi)
        scale = max(np.abs(g_fd).max(), 1e-300)
        reports.append(compare(
            f"gradient vs finite differences (xi={xi:g})",
            0.0, float(np.abs(g_cf - g_fd).max() / scale), tol=1e-6, mode="abs",
        ))

    p = project(np.array([3.0, 4.0, -1.0, 0.2]), FeasibleSetSpec(2, 2, 1))
    ref = grid_project(np.array([3.0, 4.0]), 1.0, 1e-3)
    reports.append(compare(
        "projection block vs grid oracle", 0.0,
        float(np.abs(p[:2] - ref).max()), tol=2e-3, mode="abs",
    ))

    ev = eval_objective(theta, pd, 3.0)
    reports.append(compare(
        "penalized objective identity", ev.ee_term - 3.0 * ev.penalty_sum,
        ev.f_xi, tol=1e-12,
    ))

    if verbose:
        for rep in reports:
            print(rep)
    return all(r.passed for r in reports)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _int_list(text):
    return [int(v) for v in text.split(",")]


def _float_list(text):
    return [float(v) for v in text.split(",")]


def _tau_p_list(text):
    return [v if v == "K" else int(v) for v in text.split(",")]


def _add_scenario_args(p):
    p.add_argument("--M", type=int, default=100)
    p.add_argument("--K", type=int, default=40)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--tau-c", type=int, default=200)
    p.add_argument("--tau-p", type=int, default=None,
                   help="pilot length; defaults to K")
    p.add_argument("--seed", type=int, default=0)


def _add_solver_args(p):
    p.add_argument("--se-target", type=float, default=1.0)
    p.add_argument("--alpha-mode", choices=("bb", "fixed"), default="bb")
    p.add_argument("--xi0", type=float, default=None)
    p.add_argument("--rho-growth", type=float, default=10.0)
    p.add_argument("--eps-feas", type=float, default=1e-6)
    p.add_argument("--varsigma", type=float, default=1e-3)
    p.add_argument("--max-inner", type=int, default=2000)
    p.add_argument("--max-outer", type=int, default=30)


def _solver_config(args):
    return SolverConfig(
        alpha_mode=args.alpha_mode, xi0=args.xi0, rho_growth=args.rho_growth,
        eps_feas=args.eps_feas, varsigma=args.varsigma,
        max_inner=args.max_inner, max_outer=args.max_outer,
    )


def build_parser():
    parser = _Parser(prog="cellfree-ee", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="realize a scenario and save it")
    _add_scenario_args(g)
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="solve one instance")
    _add_scenario_args(s)
    _add_solver_args(s)
    s.add_argument("--scenario", default=None,
                   help="load a saved scenario instead of generating one")
    s.add_argument("--trace", default=None, help="write per-iteration CSV here")
    s.add_argument("--out", default=None, help="write the run summary JSON here")

    w = sub.add_parser("sweep", help="Monte-Carlo sweep over system sizes")
    w.add_argument("--config", default=None, help="JSON file with ExperimentSpec fields")
    w.add_argument("--M", type=_int_list, default=None)
    w.add_argument("--K", type=_int_list, default=None)
    w.add_argument("--N", type=_int_list, default=None)
    w.add_argument("--tau-c", type=_int_list, default=None)
    w.add_argument("--tau-p", type=_tau_p_list, default=None,
                   help="comma list of ints or K")
    w.add_argument("--se-target", type=_float_list, default=None)
    w.add_argument("--realizations", type=int, default=None)
    w.add_argument("--seed", type=int, required=True, help="master seed")
    w.add_argument("--outdir", default=None)
    w.add_argument("--trace", action="store_true", help="emit per-run trace CSVs")
    w.add_argument("--no-timing", action="store_true",
                   help="omit timing fields for byte-reproducible output")
    w.add_argument("--workers", type=int, default=None)

    c = sub.add_parser("check", help="run the oracle self-checks")
    c.add_argument("--quiet", action="store_true")
    return parser


def _cmd_generate(args):
    tau_p = args.tau_p if args.tau_p is not None else args.K
    cfg = ScenarioConfig(M=args.M, K=args.K, N=args.N, tau_c=args.tau_c,
                         tau_p=tau_p, seed=args.seed)
    generate(cfg).save(args.out)
    print(f"scenario written to {args.out}")
    return 0


def _cmd_solve(args):
    if args.scenario:
        scn = Scenario.load(args.scenario)
    else:
        tau_p = args.tau_p if args.tau_p is not None else args.K
        scn = generate(ScenarioConfig(M=args.M, K=args.K, N=args.N,
                                      tau_c=args.tau_c, tau_p=tau_p,
                                      seed=args.seed))
    pd = precompute(scn, se_targets=args.se_target)
    result = solve(pd, _solver_config(args))
    print(
        f"EE {result.ee / 1e6:.4f} Mbit/J | sum SE "
        f"{float(result.se_per_user.sum()):.3f} bit/s/Hz | violation "
        f"{result.violation_final:.3g} | feasible {result.feasible} | "
        f"{result.outer_iters} outer / {result.inner_iters_total} inner iters "
        f"in {result.wall_time_s:.2f} s"
    )
    if args.trace:
        emit_convergence_data(result.trace, args.trace)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({
                "scenario_config": asdict(scn.config),
                "se_target": args.se_target,
                "theta_opt": result.theta_opt.tolist(),
                "ee_bit_per_j": result.ee,
                "se_per_user": result.se_per_user.tolist(),
                "violation": result.violation_final,
                "feasible": result.feasible,
                "power_report": result.power_report,
                "wall_time_s": result.wall_time_s,
            }, fh)
    return 0 if result.feasible else 0


def _cmd_sweep(args):
    spec_kwargs = {}
    if args.config:
        with open(args.config) as fh:
            spec_kwargs.update(json.load(fh))
    for name, value in (
        ("M", args.M), ("K", args.K), ("N", args.N), ("tau_c", args.tau_c),
        ("tau_p", args.tau_p), ("se_target", args.se_target),
        ("realizations", args.realizations), ("outdir", args.outdir),
        ("workers", args.workers),
    ):
        if value is not None:
            spec_kwargs[name] = value
    spec_kwargs["master_seed"] = args.seed
    if args.trace:
        spec_kwargs["emit_trace"] = True
    if args.no_timing:
        spec_kwargs["emit_timing"] = False
    spec = ExperimentSpec(**spec_kwargs)
    rows = run_experiment(spec)
    print(f"{len(rows)} sweep point(s) x {spec.realizations} realization(s) "
          f"written to {spec.outdir}")
    return 0


def _cmd_check(args):
    ok = run_checks(verbose=not args.quiet)
    return 0 if ok else 3


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "check":
            return _cmd_check(args)
        return 1
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except (AssertionError, SolverError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
