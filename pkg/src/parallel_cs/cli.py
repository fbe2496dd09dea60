"""Command-line interface.

    parallel-cs profile-check CONFIG.json
    parallel-cs bounds CONFIG.json
    parallel-cs phase CONFIG.json
    parallel-cs concentration CONFIG.json
    parallel-cs solve CONFIG.json

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .bounds import BoundInputError, bound_report
from .profiles import DegenerateProfileError, ProfileFamilySpec, make_profiles, profile_norms, verify_joint_isometry
from .sampling import assemble
from .signals import LevelPartition, complex_from_json, complex_to_json, draw_sparse
from .solver import BpConfig, SolverError, recovery_error, solve_bp

log = logging.getLogger("parallel_cs")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

CSV_HELP = """\
output files (written next to --out, or printed when --out is omitted):
  phase:          <out>.csv        series,C,scenario,m,m_over_N,s,s_over_m,successes,trials
                  <out>.curves.csv x,y,series,status   (50%% curves, x=m/N, y=s/m)
  bounds:         <out>.csv        C,D,quantity,value
                  <out>.curves.csv x,y,series          (x=C, y=value, series=quantity)
  concentration:  <out>.csv        t,m,empirical_tail,theoretical_bound,zeta,trials
                  <out>.curves.csv x,y,series          (x=t, y=tail or bound, series=m/kind)
  profile-check:  <out>.json       joint isometry residual, norms, bound report
  solve:          <out>.json       solution and diagnostics
every run also writes <out>.meta.json with the resolved configuration.
"""


class UsageError(Exception):
    pass


def _load_config(path: str, args, experiment: str) -> ex.ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ex.ConfigError(f"cannot read config {path}: {exc}") from exc
    if experiment == "solve":
        return doc
    doc.setdefault("experiment", experiment)
    for key in ("seed", "threads", "trials", "out"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    return ex.ExperimentConfig.from_json(doc)


def _emit(out, stem_suffix: str, text: str):
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(str(out) + stem_suffix)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _meta(out, cfg, extra=None):
    doc = {"config": cfg if isinstance(cfg, dict) else cfg.to_json()}
    if not isinstance(cfg, dict):
        doc["config_digest"] = cfg.digest()
    doc.update(extra or {})
    if out is not None:
        _emit(out, ".meta.json", json.dumps(doc, indent=2, default=str) + "\n")


def cmd_phase(cfg: ex.ExperimentConfig):
    grids = ex.run_phase_transition(cfg)
    rows = [r for g in grids.values() for r in g.rows()]
    _emit(cfg.out, ".csv", ex.rows_to_csv(rows))
    if cfg.out is not None:
        _emit(cfg.out, ".curves.csv", ex.rows_to_csv(ex.curves_long_format(grids)))
    _meta(cfg.out, cfg, {"success_threshold": cfg.threshold, "eta": 0.0})


def cmd_bounds(cfg: ex.ExperimentConfig):
    rows = ex.run_bounds_sweep(cfg)
    _emit(cfg.out, ".csv", ex.rows_to_csv(rows))
    if cfg.out is not None:
        long = [{"x": r["C"], "y": r["value"], "series": r["quantity"]} for r in rows]
        _emit(cfg.out, ".curves.csv", ex.rows_to_csv(long))
    _meta(cfg.out, cfg)


def cmd_concentration(cfg: ex.ExperimentConfig):
    rows = ex.run_concentration(cfg)
    _emit(cfg.out, ".csv", ex.rows_to_csv(rows))
    if cfg.out is not None:
        long = []
        for r in rows:
            long.append({"x": r["t"], "y": r["empirical_tail"], "series": f"m={r['m']}/empirical"})
            long.append({"x": r["t"], "y": r["theoretical_bound"], "series": f"m={r['m']}/bound"})
        _emit(cfg.out, ".curves.csv", ex.rows_to_csv(long))
    _meta(cfg.out, cfg)


def cmd_profile_check(cfg: ex.ExperimentConfig):
    report = []
    spec = ProfileFamilySpec.from_json(dict(cfg.profile))
    for sc in cfg.scenarios:
        for C in cfg.C_list:
            C = int(C)
            partition = LevelPartition.contiguous(cfg.N, cfg.levels(C))
            prof = make_profiles(spec, partition, C, cfg.N, sc)
            norms = profile_norms(prof)
            br = bound_report(prof, cfg.law, partition, V=spec.V)
            report.append({
                "scenario": sc,
                "C": C,
                "joint_isometry_residual": verify_joint_isometry(prof),
                "norm_1to1": norms.norm_1to1.tolist(),
                "norm_2to2": norms.norm_2to2.tolist(),
                "bounds": br.to_json(),
            })
    _emit(cfg.out, ".json", json.dumps(report, indent=2, default=float) + "\n")
    _meta(cfg.out, cfg)


def cmd_solve(doc: dict, args):
    """Solve one instance.

    The request either carries ``A`` and ``y`` (arrays of [re, im] pairs) or
    describes a synthetic instance: ``N, C, scenario, profile, law, m, s``.
    """
    eta = float(doc.get("eta", 0.0))
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    solver_opts = dict(doc.get("solver", {}))
    cfg = BpConfig(eta=eta, **solver_opts)
    out = args.out if args.out is not None else doc.get("out")
    truth = None
    if "A" in doc:
        A = np.array([complex_from_json(row) for row in doc["A"]])
        y = complex_from_json(doc["y"])
        res = solve_bp(A, y, cfg)
        if "x" in doc:
            truth = complex_from_json(doc["x"])
    else:
        N, C, m, s = int(doc["N"]), int(doc.get("C", 1)), int(doc["m"]), int(doc["s"])
        scenario = doc.get("scenario", "distinct")
        D = C if doc.get("D", "C") == "C" else int(doc["D"])
        partition = LevelPartition.contiguous(N, D)
        spec = ProfileFamilySpec.from_json(doc.get("profile", {"family": "banded"}))
        prof = make_profiles(spec, partition, C, N, scenario)
        op = assemble(prof, doc.get("law", "gaussian"), m, np.random.SeedSequence(seed, spawn_key=(0,)))
        truth = draw_sparse(N, s, np.random.SeedSequence(seed, spawn_key=(1,))).x
        y = op.apply(truth)
        noise = float(doc.get("noise", 0.0))
        if noise > 0:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
            e = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            y = y + noise * e / np.linalg.norm(e)
        res = solve_bp(op, y, cfg)
    result = {
        "x_hat": complex_to_json(res.x),
        "objective": res.objective,
        "residual": res.residual,
        "iterations": res.iterations,
        "converged": res.converged,
        "dual_residual": res.dual_residual,
        "eta": eta,
    }
    if truth is not None:
        s = int(doc.get("s", np.count_nonzero(truth)))
        err = recovery_error(res.x, truth, max(s, 1), eta=eta)
        result.update(l2_error=err.l2_error, bound_rhs=err.bound_rhs)
    _emit(out, ".json", json.dumps(result, indent=2) + "\n")
    if not res.converged:
        raise SolverError(f"solver did not converge in {res.iterations} iterations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parallel-cs",
        description="Compressed sensing with parallel acquisition: experiments and bounds.",
        epilog=CSV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("profile-check", "build profiles and report isometry residuals, norms and bounds"),
        ("bounds", "sweep Upsilon quantities over C"),
        ("phase", "run a phase-transition experiment"),
        ("concentration", "compare empirical tails with the concentration bound"),
        ("solve", "solve one basis pursuit instance"),
    ]:
        p = sub.add_parser(name, help=helptext, epilog=CSV_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("config", help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", default=None, help="output path stem")
        p.add_argument("--threads", type=int, default=None, help="worker processes")
        p.add_argument("--trials", type=int, default=None, help="trials per cell")
    return parser


COMMANDS = {
    "phase": cmd_phase,
    "bounds": cmd_bounds,
    "concentration": cmd_concentration,
    "profile-check": cmd_profile_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config, args, "profile-check" if args.command == "profile-check"
                           else {"bounds": "bounds_sweep"}.get(args.command, args.command))
        if args.command == "solve":
            cmd_solve(cfg, args)
        else:
            COMMANDS[args.command](cfg)
    except (ex.ConfigError, DegenerateProfileError, BoundInputError, KeyError, TypeError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
