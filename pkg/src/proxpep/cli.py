"""Command-line entry point: run, sweep, report, check, thresholds, init-config."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .analysis import write_report
from .checks import check_trajectory
from .driver import Coefficients, HorizonWarning, schedule_params
from .errors import ConfigurationError, InvalidArgument
from .experiment import ExperimentConfig, load_manifest, load_trajectory, run_experiment
from .metrics import thresholds
from .models import derived_constants


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "out", None):
        changes["output_dir"] = args.out
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    if changes:
        cfg = ExperimentConfig(**{**cfg.to_dict(), **changes})
    return cfg


def _print_runs(artifacts, keys):
    for key in keys:
        rec = artifacts.runs[key]
        print(f"run={key}\tstatus={rec['status']}\tdigest={rec.get('digest', '')}\terror={rec.get('error', '')}")
    print(f"manifest_digest={artifacts.digest}")


def cmd_run(args) -> int:
    cfg = _load_config(args)
    T = args.T if args.T is not None else cfg.T_list[0]
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    arts = run_experiment(cfg, resume=not args.no_resume, only=[(T, seed)])
    key = f"T{T}_s{seed}"
    _print_runs(arts, [key])
    for k, v in arts.runs[key].get("summary", {}).items():
        print(f"{k}={v}")
    return 0 if arts.runs[key]["status"] == "ok" else 1


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    arts = run_experiment(cfg, resume=not args.no_resume)
    _print_runs(arts, sorted(arts.runs))
    print(f"executed={len(arts.executed)}\tskipped={len(arts.skipped)}")
    return 0 if all(r["status"] == "ok" for r in arts.runs.values()) else 1


def cmd_report(args) -> int:
    manifest = load_manifest(args.dir)
    rep = write_report(manifest, args.dir, figures=not args.no_figures)
    print("metric\texponent\tr_squared\tpassed")
    for name, entry in rep["rates"].items():
        exp = "nan" if entry["exponent"] is None else f"{entry['exponent']:.4f}"
        r2 = "nan" if entry["r_squared"] is None else f"{entry['r_squared']:.4f}"
        print(f"{name}\t{exp}\t{r2}\t{entry['passed']}")
    for T, q in rep["quantiles"].items():
        print(f"quantiles_T{T}\tmedian={q['median']:.6g}\tq90={q['quantiles'][0.9]:.6g}\tthreshold={q['threshold']}\twithin={q['within_threshold']}")
    for T, d in rep["dual_bound"].items():
        print(f"dual_bound_T{T}\t{d['within']}/{d['seeds']}")
    if "figure" in rep:
        print(f"figure={rep['figure']}")
    return 0


def cmd_check(args) -> int:
    manifest = load_manifest(args.dir)
    cfg = ExperimentConfig(**manifest["config"])
    program = cfg.build_program()
    failed = 0
    for key, rec in sorted(manifest["runs"].items()):
        if rec["status"] != "ok" or "npz" not in rec["files"]:
            print(f"{key}\tskipped")
            continue
        traj = load_trajectory(args.dir, rec["T"], rec["seed"])
        rep = check_trajectory(program, traj)
        failed += not rep.passed
        print(f"{key}\t{'PASS' if rep.passed else 'FAIL'}\thard_violations={rep.hard_violations()}")
        if args.verbose:
            for line in rep.lines():
                print(f"  {line}")
    return 1 if failed else 0


def cmd_thresholds(args) -> int:
    cfg = _load_config(args)
    program = cfg.build_program()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", HorizonWarning)
        params = schedule_params(args.T, Coefficients(**cfg.coefficients), program)
    consts = derived_constants(program, params.sigma_g, params.sigma_h)
    rep = thresholds(params, consts, program)
    for k, v in rep.to_dict().items():
        if v is not None and not isinstance(v, list):
            print(f"{k}={v}")
    for w in caught:
        print(f"warning={w.message}")
    return 0


def cmd_init_config(args) -> int:
    path = Path(args.path)
    path.write_text(json.dumps(ExperimentConfig().to_dict(), indent=1) + "\n")
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxpep", description="Stochastic proximal partial exact penalty experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="JSON experiment configuration (defaults when omitted)")
        p.add_argument("--out", help="override the output directory")

    p = sub.add_parser("run", help="run a single (T, seed) cell of a configuration")
    with_config(p)
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-resume", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the full T x seed grid")
    with_config(p)
    p.add_argument("--workers", type=int)
    p.add_argument("--no-resume", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="rate fits, quantiles and figures for a sweep directory")
    p.add_argument("dir")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("check", help="inequality suite over stored trajectories")
    p.add_argument("dir")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("thresholds", help="print the bound formulas at scheduled parameters")
    with_config(p)
    p.add_argument("--T", type=int, required=True)
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("init-config", help="write the default configuration")
    p.add_argument("path")
    p.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
