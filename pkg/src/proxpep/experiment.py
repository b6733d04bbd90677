"""Multi-seed sweeps with on-disk artifacts, a resumable manifest and digests."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .checks import check_trajectory
from .driver import TRAJECTORY_HEADER, Coefficients, HorizonWarning, RunAborted, Trajectory, run, schedule_params
from .errors import ConfigurationError, InvalidArgument
from .families import FAMILIES, generate_problem
from .metrics import thresholds, trajectory_metrics
from .models import derived_constants

METRIC_HEADER = ("t", "g_sum", "g_violation", "h_abs", "complementarity", "complementarity_abs", "dual_energy", "dual_norm", "moreau_sq")
MANIFEST = "manifest.json"


@dataclass
class ExperimentConfig:
    family: str = "quad-trig"
    n: int = 5
    p: int = 2
    m: int = 2
    noise_scale: float = 0.05
    problem_seed: int = 0
    T_list: list = field(default_factory=lambda: [256, 1024])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    coefficients: dict = field(default_factory=dict)
    output_dir: str = "runs"
    metrics: str = "full"
    stride: int | None = None
    workers: int = 1
    checks: bool = True
    save_npz: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}")
        if not self.T_list:
            raise ConfigurationError("T_list must be nonempty")
        if any(int(T) != T or T < 1 for T in self.T_list):
            raise ConfigurationError("every T must be a positive integer")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigurationError("seeds must be nonempty and distinct")
        if self.metrics not in ("full", "cheap", "none"):
            raise ConfigurationError("metrics must be 'full', 'cheap' or 'none'")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        Coefficients(**self.coefficients)  # validates the keys and values
        self.T_list = [int(T) for T in self.T_list]
        self.seeds = [int(s) for s in self.seeds]

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls(**json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of everything that can change results (not paths or worker count)."""
        d = self.to_dict()
        for key in ("output_dir", "workers"):
            d.pop(key)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def build_program(self):
        return generate_problem(self.family, self.n, self.p, self.m, noise_scale=self.noise_scale, seed=self.problem_seed)


@dataclass
class RunArtifacts:
    output_dir: Path
    manifest: dict
    executed: list
    skipped: list

    @property
    def runs(self) -> dict:
        return self.manifest["runs"]

    @property
    def digest(self) -> str:
        return self.manifest["digest"]


def run_key(T: int, seed: int) -> str:
    return f"T{T}_s{seed}"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)


def write_columns(path: Path, header, rows) -> str:
    lines = ["\t".join(header)]
    lines.extend("\t".join(_fmt(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    path.write_text(text)
    return text


def write_key_values(path: Path, values: dict) -> str:
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in values.items())
    path.write_text(text)
    return text


def read_key_values(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = _parse_scalar(v)
    return out


def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text in ("True", "False"):
        return text == "True"
    return text


def read_columns(path) -> dict:
    """Columnar text file -> {column: array} (non-numeric columns stay strings)."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split("\t")
    cols = list(zip(*(line.split("\t") for line in lines[1:]))) if len(lines) > 1 else [()] * len(header)
    out = {}
    for name, values in zip(header, cols):
        try:
            out[name] = np.array([float(v) for v in values])
        except ValueError:
            out[name] = np.array(values)
    return out


def _atomic_json(path: Path, data: dict):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-")
    with os.fdopen(fd, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
    os.replace(tmp, path)


def _metric_rows(ms):
    moreau = np.full(ms.T, np.nan)
    moreau[ms.moreau_t - 1] = ms.moreau_sq
    for k in range(ms.T):
        yield (
            k + 1,
            ms.g_sum[k],
            ms.g_violation[k],
            ms.h_abs[k],
            ms.complementarity[k],
            ms.complementarity_abs[k],
            ms.dual_energy[k],
            ms.dual_norm[k],
            moreau[k],
        )


def execute_run(config: dict, T: int, seed: int, run_dir: str) -> dict:
    """One (T, seed) cell: schedule, run, replay metrics and write files."""
    cfg = ExperimentConfig(**config)
    out = Path(run_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = {"T": T, "seed": seed, "status": "failed", "files": {}, "error": ""}
    try:
        program = cfg.build_program()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HorizonWarning)
            params = schedule_params(T, Coefficients(**cfg.coefficients), program)
        try:
            traj = run(program, params, seed)
        except RunAborted as exc:
            traj = exc.trajectory
            record["error"] = str(exc)
        hasher = hashlib.sha256()
        text = write_columns(out / "trajectory.tsv", TRAJECTORY_HEADER, traj.columnar_rows())
        hasher.update(text.encode())
        record["files"]["trajectory"] = "trajectory.tsv"
        if cfg.save_npz:
            traj.save_npz(out / "trajectory.npz")
            record["files"]["npz"] = "trajectory.npz"

        summary = traj.summary()
        summary.update({f"param_{k}": v for k, v in params.to_dict().items() if k != "warnings"})
        if traj.completed == T:
            consts = derived_constants(program, params.sigma_g, params.sigma_h)
            th = thresholds(params, consts, program)
            summary["psi"] = th.psi
            summary["phi_tilde"] = th.phi_tilde
            # time-averaged high-probability envelopes at eta = (2/3) log T
            summary["equality_threshold"] = program.m * th.pi_ch / T
            summary["inequality_threshold"] = program.p * th.pi_cg / T
            summary["moreau_threshold"] = th.pi_grad
            summary["average_dual_norm"] = float(traj.dual_norm[:T].mean())
            summary["dual_bound_ok"] = summary["average_dual_norm"] <= th.psi
            if cfg.metrics != "none":
                ms = trajectory_metrics(program, traj, params, mode=cfg.metrics, stride=cfg.stride)
                text = write_columns(out / "metrics.tsv", METRIC_HEADER, _metric_rows(ms))
                hasher.update(text.encode())
                record["files"]["metrics"] = "metrics.tsv"
                summary.update(ms.averages())
                summary["output_index"] = ms.output_index
                summary["output_residual"] = ms.output_kkt.residual_norm
                summary["moreau_equivalence_failures"] = int(np.count_nonzero(ms.equivalence_slack < 0))
            if cfg.checks:
                rep = check_trajectory(program, traj, params, consts)
                summary["checks_passed"] = rep.passed
                summary["check_hard_violations"] = rep.hard_violations()
                for name, res in rep.results.items():
                    summary[f"check_{name}"] = res.violations
        write_key_values(out / "summary.txt", summary)
        record["files"]["summary"] = "summary.txt"
        record["digest"] = hasher.hexdigest()[:16]
        record["summary"] = {k: v for k, v in summary.items() if isinstance(v, (int, float, bool, str))}
        record["status"] = "ok" if traj.completed == T else "failed"
    except Exception as exc:  # recorded, the sweep continues
        record["error"] = f"{type(exc).__name__}: {exc}"
        record["traceback"] = traceback.format_exc(limit=5)
    return record


def _manifest_digest(runs: dict) -> str:
    items = sorted((k, v.get("digest", ""), v["status"]) for k, v in runs.items())
    return hashlib.sha256(json.dumps(items).encode()).hexdigest()[:16]


def run_experiment(config: ExperimentConfig, resume: bool = True, only: list | None = None) -> RunArtifacts:
    """Run every (T, seed) cell not already completed in the manifest.

    ``only`` restricts the sweep to a list of (T, seed) pairs.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / MANIFEST
    manifest = None
    if resume and manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("config_digest") != config.digest():
            raise ConfigurationError("output directory holds a sweep with a different configuration")
    if manifest is None:
        manifest = {"config": config.to_dict(), "config_digest": config.digest(), "runs": {}}

    cells = [(T, s) for T in config.T_list for s in config.seeds] if only is None else [tuple(c) for c in only]
    todo, skipped = [], []
    for T, seed in cells:
        key = run_key(T, seed)
        prior = manifest["runs"].get(key)
        if resume and prior and prior["status"] == "ok" and all((out / key / f).exists() for f in prior["files"].values()):
            skipped.append(key)
        else:
            todo.append((T, seed))

    cfg = config.to_dict()

    def store(record):
        key = run_key(record["T"], record["seed"])
        manifest["runs"][key] = record
        manifest["digest"] = _manifest_digest(manifest["runs"])
        _atomic_json(manifest_path, manifest)

    if config.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            futures = [pool.submit(execute_run, cfg, T, s, str(out / run_key(T, s))) for T, s in todo]
            for fut in futures:
                store(fut.result())
    else:
        for T, s in todo:
            store(execute_run(cfg, T, s, str(out / run_key(T, s))))

    manifest["digest"] = _manifest_digest(manifest["runs"])
    _atomic_json(manifest_path, manifest)
    return RunArtifacts(out, manifest, [run_key(T, s) for T, s in todo], skipped)


def load_manifest(output_dir) -> dict:
    path = Path(output_dir) / MANIFEST
    if not path.exists():
        raise InvalidArgument(f"no manifest in {output_dir}")
    return json.loads(path.read_text())


def load_trajectory(output_dir, T: int, seed: int) -> Trajectory:
    return Trajectory.load_npz(Path(output_dir) / run_key(T, seed) / "trajectory.npz")
