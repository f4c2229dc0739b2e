"""Command-line experiment runner.

    wpspde solve CONFIG        particle field, weight summary, report, manifest
    wpspde compare-fd CONFIG   the above plus the per-time distance to the FD oracle
    wpspde diagnose CONFIG     the full diagnostics suite as JSON and a table
    wpspde sweep CONFIG --key discretization.n_particles --values 2500 10000 40000

Exit codes: 0 success, 1 numeric failure, 2 configuration error.
Outputs are byte-identical for a fixed config and seed; wall-clock data
(timestamps, timings) is confined to ``manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as D
from .config import ConfigError, ExperimentConfig
from .noise import RngStreams
from .oracle import CFLError, fd_solve
from .particles import simulate_ensemble, simulate_path
from .problem import verify_condition_bounds
from .solver import WeightedParticleSolver, n_steps_for, solver_from_config

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2
WORKERS_ENV = "WPSPDE_WORKERS"


# -- artifact helpers ------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(D._jsonable(obj), indent=2, sort_keys=True) + "\n")


def _write_manifest(out: Path, cfg: ExperimentConfig, command: str, artifacts: list[Path], timings: dict) -> dict:
    manifest = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "version": __version__,
        "artifacts": {p.name: _sha256(p) for p in sorted(artifacts)},
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "timings_s": timings,
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def _weights_summary(path: Path, solver: WeightedParticleSolver) -> None:
    A = solver.weights_
    t = solver.field_.times
    with open(path, "w") as fh:
        fh.write(
            f"# particle weights under the converged field: N={A.shape[1]} dt={solver.dt!r} "
            f"n_steps={A.shape[0] - 1} units: t=time\n"
        )
        fh.write("t,mean,std,min,max\n")
        for k in range(A.shape[0]):
            a = A[k]
            fh.write(f"{float(t[k])!r},{float(a.mean())!r},{float(a.std())!r},{float(a.min())!r},{float(a.max())!r}\n")


def _dump_paths(path: Path, cfg: ExperimentConfig, n_paths: int) -> None:
    # single-path simulation reproduces the ensemble's streams bit for bit
    dom = cfg.build_domain()
    d = cfg.discretization
    K = n_steps_for(d.T, d.dt)
    streams = RngStreams(cfg.seed)
    with open(path, "w") as fh:
        fh.write(f"# particle paths: dt={d.dt!r} n_steps={K} units: step=grid index, position=space, dL=local time\n")
        fh.write("particle,step,position,hit,dL_lower,dL_upper\n")
        for i in range(min(n_paths, d.n_particles)):
            p = simulate_path(dom, None, streams.particle(i), d.dt, K)
            hits = set(p.hit_steps.tolist())
            for k in range(K + 1):
                dl = p.local_time_increments[k - 1] if k > 0 else (0.0, 0.0)
                fh.write(f"{i},{k},{float(p.X[k])!r},{int(k in hits)},{float(dl[0])!r},{float(dl[1])!r}\n")


def _fit(cfg: ExperimentConfig, **overrides) -> tuple[WeightedParticleSolver, float]:
    t0 = time.perf_counter()
    solver = solver_from_config(cfg, **overrides).fit()
    return solver, time.perf_counter() - t0


def _solve_report(solver: WeightedParticleSolver) -> tuple[dict, list]:
    rep = solver.report_.to_dict()
    timings = rep.pop("timings_s")
    rep["self_consistency_residual"] = solver.self_consistency_residual()
    rep["n_bins"] = solver.n_bins_
    return rep, timings


# -- subcommands ----------------------------------------------------------------


def run_solve(cfg: ExperimentConfig, out: Path, *, dump_paths: int = 0, dump_noise: bool = False, compare_fd: bool = False) -> dict:
    """Run the solver (and optionally the FD comparison); write artifacts into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    solver, fit_s = _fit(cfg)
    timings = {"fit": fit_s}
    rep, timings["phi_calls"] = _solve_report(solver)
    report = {"solver": rep, "conditions": verify_condition_bounds(solver.problem).as_dict()}

    artifacts = [out / "field.csv", out / "weights_summary.csv", out / "report.json"]
    solver.field_.to_csv(artifacts[0], header_note=f"seed={cfg.seed} converged={solver.report_.converged}")
    _weights_summary(artifacts[1], solver)

    if compare_fd:
        t0 = time.perf_counter()
        fd = fd_solve(solver.problem, solver.noise_, cfg.discretization.J, cfg.oracle.dt, max_cfl=cfg.oracle.max_cfl)
        timings["fd"] = time.perf_counter() - t0
        ref = fd.bin_averages(solver.n_bins_)
        err = np.sum(np.abs(solver.field_.values - ref) * solver.field_.bin_measure, axis=1)
        cmp_path = out / "comparison.csv"
        with open(cmp_path, "w") as fh:
            fh.write(
                f"# L1(pi) distance between particle field and FD oracle: n_bins={solver.n_bins_} "
                f"J={cfg.discretization.J} fd_substeps={fd.substeps} dt={fd.dt!r} units: t=time\n"
            )
            fh.write("t,l1_pi_error\n")
            for tk, e in zip(fd.t, err):
                fh.write(f"{float(tk)!r},{float(e)!r}\n")
        artifacts.append(cmp_path)
        report["fd"] = {
            "max_l1_pi_error": float(err.max()),
            "argmax_t": float(fd.t[int(np.argmax(err))]),
            "J": cfg.discretization.J,
            "substeps": fd.substeps,
            "cfl": fd.cfl,
        }
    if dump_paths:
        artifacts.append(out / "paths.csv")
        _dump_paths(artifacts[-1], cfg, dump_paths)
    if dump_noise:
        artifacts.append(out / "noise.csv")
        solver.noise_.save_csv(artifacts[-1])

    _write_json(artifacts[2], report)
    _write_manifest(out, cfg, "compare-fd" if compare_fd else "solve", artifacts, timings)
    return report


def run_diagnostics(cfg: ExperimentConfig) -> tuple[D.DiagnosticsReport, dict]:
    """Run every diagnostic for ``cfg``; returns the report and wall-clock timings."""
    dom = cfg.build_domain()
    prob = cfg.build_problem()
    d, dg = cfg.discretization, cfg.diagnostics
    report = D.DiagnosticsReport()
    timings: dict = {}

    solver, timings["solve"] = _fit(cfg)
    rep = solver.report_
    lead = rep.distances[:4]
    decreasing = all(b < a for a, b in zip(lead, lead[1:]))
    report.add(D.DiagnosticResult(
        "fixed_point_convergence", rep.distances[-1], rep.tol, rep.converged and decreasing,
        "successive fixed-point iterates contract to within tol",
        {"N": d.n_particles}, {"distances": rep.distances, "ratios": rep.ratios, "n_iter": rep.n_iter},
    ))
    resid = solver.self_consistency_residual()
    report.add(D.DiagnosticResult(
        "self_consistency", resid, rep.tol, resid <= rep.tol,
        "the converged field reproduces itself under one more weight pass", {"N": d.n_particles},
    ))

    constants = verify_condition_bounds(prob)
    viol = D.check_pathwise_bound(solver.ensemble_.X, solver.weights_, solver.noise_, prob, constants)
    report.add(D.DiagnosticResult(
        "pathwise_weight_bound", viol, 1e-3, viol <= 1e-3,
        "|A(t)| <= (max(|g|,|h|) + K1 t + oscillation of the noise integral) exp(K3 t)",
        {"N": d.n_particles, "steps": solver.ensemble_.n_steps + 1}, {"constants": constants.as_dict()},
    ))

    # weak forms: the dt-bias comes from the same problem at half the step
    half, timings["solve_half_dt"] = _fit(cfg, dt=d.dt / 2)
    art, art_half = D.RunArtifacts.from_solver(solver), D.RunArtifacts.from_solver(half)
    beta_run = D.estimate_beta(solver.ensemble_)
    beta_half = D.estimate_beta(half.ensemble_)
    for phi in D.catalog_bumps(dom) + D.catalog_sines(dom):
        if phi.kind == "bump":
            r1 = D.weak_residual_interior(art, phi, n_boot=dg.n_boot, seed=cfg.seed)
            r2 = D.weak_residual_interior(art_half, phi, n_boot=dg.n_boot, seed=cfg.seed)
            identity = "interior weak form against a compactly supported test function"
        else:
            r1 = D.weak_residual_dirichlet(art, phi, beta_run.beta, n_boot=dg.n_boot, seed=cfg.seed)
            r2 = D.weak_residual_dirichlet(art_half, phi, beta_half.beta, n_boot=dg.n_boot, seed=cfg.seed)
            identity = "weak form with the boundary term g * normal * phi' * beta"
        bias = abs(r1.residual - r2.residual)
        band = 3.0 * (r1.stderr + bias)
        report.add(D.DiagnosticResult(
            f"weak_residual[{phi.name}]", abs(r1.residual), band, abs(r1.residual) <= band, identity,
            {"N": d.n_particles, "bootstrap": dg.n_boot},
            {"residual": r1.residual, "stderr": r1.stderr, "dt_bias": bias, "residual_half_dt": r2.residual},
        ))
    del solver, half, art, art_half

    # boundary layer at the final time on a larger run
    big, timings["solve_layer"] = _fit(cfg, n_particles=dg.layer_n_particles, n_bins=dg.layer_n_bins, store_weights=False)
    errs = D.boundary_layer_error(big.field_, D.linear_extension(prob), dg.eps, big.field_.n_steps)
    ok = bool(errs[-1] < errs[0] and errs[-1] <= 0.15)
    report.add(D.DiagnosticResult(
        "boundary_layer", errs[-1], 0.15, ok,
        "pi-average of |v - g_bar| over the eps-layer shrinks as eps decreases",
        {"N": dg.layer_n_particles, "n_bins": dg.layer_n_bins}, {"eps": dg.eps, "errors": errs},
    ))
    del big

    # stationary particle system: boundary measure and uniformity
    K = n_steps_for(dg.stationary_T, dg.stationary_dt)
    steps = [0, K // 2, K]
    t0 = time.perf_counter()
    ens = simulate_ensemble(dom, dg.stationary_n_particles, dg.stationary_dt, K, cfg.seed, store_paths=False, snapshot_steps=steps)
    timings["stationary"] = time.perf_counter() - t0
    beta = D.estimate_beta(ens)
    target = D.stationary_beta(dom)
    rel = np.abs(beta.beta / target - 1.0)
    report.add(D.DiagnosticResult(
        "boundary_measure", float(rel.max()), 0.05, bool(np.all(rel <= 0.05)),
        "local time per unit time on each face equals sigma^2 / (2 length)",
        {"N": dg.stationary_n_particles, "dt": dg.stationary_dt, "T": dg.stationary_T},
        {"beta_hat": beta.beta, "stderr": beta.stderr, "target": target},
    ))
    ks = D.stationarity_test(ens, steps)
    band = D.ks_band(dg.stationary_n_particles, 2.0)
    report.add(D.DiagnosticResult(
        "stationarity_ks", max(ks.values()), band, max(ks.values()) <= band,
        "particle positions stay uniformly distributed",
        {"N": dg.stationary_n_particles}, {"ks_by_step": ks},
    ))
    return report, timings


def run_diagnose(cfg: ExperimentConfig, out: Path) -> D.DiagnosticsReport:
    out.mkdir(parents=True, exist_ok=True)
    report, timings = run_diagnostics(cfg)
    path = out / "diagnostics.json"
    _write_json(path, report.to_dict())
    _write_manifest(out, cfg, "diagnose", [path], timings)
    return report


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _sweep_point(cfg: ExperimentConfig, out: Path, compare_fd: bool) -> dict:
    try:
        rep = run_solve(cfg, out, compare_fd=compare_fd)
    except (FloatingPointError, CFLError) as exc:
        return {"status": f"numeric failure: {exc}"}
    row = {
        "status": "ok",
        "converged": rep["solver"]["converged"],
        "n_iter": rep["solver"]["n_iter"],
        "final_distance": rep["solver"]["distances"][-1],
        "self_consistency_residual": rep["solver"]["self_consistency_residual"],
    }
    if compare_fd:
        row["max_l1_pi_error"] = rep["fd"]["max_l1_pi_error"]
    return row


def run_sweep(cfg: ExperimentConfig, out: Path, key: str, values: list, *, compare_fd: bool = False, workers: int = 1) -> list[dict]:
    from joblib import Parallel, delayed

    points = [cfg.with_override(key, v) for v in values]  # validate everything before running
    out.mkdir(parents=True, exist_ok=True)
    dirs = [out / f"point_{i:03d}" for i in range(len(points))]
    rows = Parallel(n_jobs=workers)(delayed(_sweep_point)(p, dd, compare_fd) for p, dd in zip(points, dirs))
    cols = ["value", "status", "converged", "n_iter", "final_distance", "self_consistency_residual"]
    if compare_fd:
        cols.append("max_l1_pi_error")
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        fh.write(f"# sweep over {key}; one row per point, artifacts in point_NNN/\n")
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for v, row in zip(values, rows):
            row["value"] = v
            writer.writerow(row)
    _write_manifest(out, cfg, f"sweep {key}", [path], {})
    return rows


# -- entry point ---------------------------------------------------------------


def _workers(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(WORKERS_ENV)
    if env is None:
        return 1
    try:
        return int(env)
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"expected an integer, got {env!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wpspde", description="Weighted particle solver for Dirichlet SPDEs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="TOML experiment file")
        sp.add_argument("--out", help="output directory (default: output_dir from the config)")

    sp = sub.add_parser("solve", help="run the fixed-point solver")
    common(sp)
    sp.add_argument("--dump-paths", type=int, default=0, metavar="N", help="write the first N particle paths")
    sp.add_argument("--dump-noise", action="store_true", help="write the common noise increments")

    sp = sub.add_parser("compare-fd", help="solve and compare with the finite-difference oracle")
    common(sp)
    sp.add_argument("--dump-paths", type=int, default=0, metavar="N")
    sp.add_argument("--dump-noise", action="store_true")

    sp = sub.add_parser("diagnose", help="run the diagnostics suite")
    common(sp)

    sp = sub.add_parser("sweep", help="vary one config key over a list of values")
    common(sp)
    sp.add_argument("--key", required=True, help="dotted key, e.g. discretization.n_particles")
    sp.add_argument("--values", required=True, nargs="+", help="values (parsed as JSON when possible)")
    sp.add_argument("--compare-fd", action="store_true", help="include the FD comparison per point")
    sp.add_argument("--workers", type=int, default=None, help=f"parallel points (default: ${WORKERS_ENV} or 1)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        out = Path(args.out or cfg.output_dir)
        if args.command in ("solve", "compare-fd"):
            rep = run_solve(cfg, out, dump_paths=args.dump_paths, dump_noise=args.dump_noise,
                            compare_fd=args.command == "compare-fd")
            s = rep["solver"]
            print(f"converged={s['converged']} n_iter={s['n_iter']} distances={[f'{x:.3g}' for x in s['distances']]}")
            if "fd" in rep:
                print(f"max L1(pi) error vs FD: {rep['fd']['max_l1_pi_error']:.4g}")
            print(f"artifacts in {out}")
        elif args.command == "diagnose":
            report = run_diagnose(cfg, out)
            print(report.table())
            print(f"all passed: {report.all_passed}; report in {out / 'diagnostics.json'}")
        else:
            rows = run_sweep(cfg, out, args.key, [_parse_value(v) for v in args.values],
                             compare_fd=args.compare_fd, workers=_workers(args.workers))
            for r in rows:
                print(r)
            if any(r["status"] != "ok" for r in rows):
                return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, CFLError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
