import json

import pytest

from proxpep.errors import ConfigurationError
from proxpep.experiment import (
    ExperimentConfig,
    load_manifest,
    load_trajectory,
    read_columns,
    read_key_values,
    run_experiment,
    run_key,
    write_key_values,
)


def _config(tmp_path, **kw):
    base = dict(T_list=[64, 96, 128], seeds=[0, 1, 2, 3, 4], metrics="cheap", output_dir=str(tmp_path / "sweep"))
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    cfg = _config(tmp_path_factory.mktemp("exp"))
    return cfg, run_experiment(cfg)


def test_grid_produces_one_artifact_per_cell(sweep):
    cfg, arts = sweep
    assert len(arts.runs) == 15 and len(arts.executed) == 15
    for T in cfg.T_list:
        for s in cfg.seeds:
            rec = arts.runs[run_key(T, s)]
            assert rec["status"] == "ok", rec["error"]
            for name in rec["files"].values():
                assert (arts.output_dir / run_key(T, s) / name).exists()


def test_resume_skips_completed_runs(sweep):
    cfg, arts = sweep
    again = run_experiment(cfg)
    assert again.executed == [] and len(again.skipped) == 15
    assert again.digest == arts.digest


def test_rerun_from_scratch_gives_identical_digests(sweep, tmp_path):
    cfg, arts = sweep
    fresh = run_experiment(ExperimentConfig(**{**cfg.to_dict(), "output_dir": str(tmp_path / "fresh")}))
    assert fresh.digest == arts.digest
    assert {k: r["digest"] for k, r in fresh.runs.items()} == {k: r["digest"] for k, r in arts.runs.items()}


def test_interrupted_sweep_resumes(tmp_path):
    cfg = _config(tmp_path, T_list=[64, 96], seeds=[0, 1])
    first = run_experiment(cfg, only=[(64, 0), (96, 1)])
    assert len(first.runs) == 2
    rest = run_experiment(cfg)
    assert sorted(rest.skipped) == sorted([run_key(64, 0), run_key(96, 1)])
    assert len(rest.executed) == 2 and len(rest.runs) == 4


def test_config_mismatch_refused(sweep):
    cfg, _ = sweep
    with pytest.raises(ConfigurationError):
        run_experiment(ExperimentConfig(**{**cfg.to_dict(), "noise_scale": 0.1}))


def test_parallel_workers_match_serial(sweep, tmp_path):
    cfg, arts = sweep
    par = run_experiment(ExperimentConfig(**{**cfg.to_dict(), "output_dir": str(tmp_path / "par"), "workers": 2}))
    assert par.digest == arts.digest


def test_summary_and_columns_on_disk(sweep):
    cfg, arts = sweep
    d = arts.output_dir / run_key(128, 0)
    summary = read_key_values(d / "summary.txt")
    assert summary["T"] == 128 and summary["completed"] == 128
    assert "equality_threshold" in summary and "mean_h_abs" in summary
    cols = read_columns(d / "trajectory.tsv")
    assert len(cols["t"]) == 129
    traj = load_trajectory(arts.output_dir, 128, 0)
    assert traj.completed == 128
    assert load_manifest(arts.output_dir)["digest"] == arts.digest


def test_config_validation(tmp_path):
    with pytest.raises(ConfigurationError):
        _config(tmp_path, T_list=[])
    with pytest.raises(ConfigurationError):
        _config(tmp_path, seeds=[1, 1])
    with pytest.raises(ConfigurationError):
        _config(tmp_path, metrics="sometimes")
    with pytest.raises(ConfigurationError):
        _config(tmp_path, family="unknown")


def test_config_file_roundtrip_and_digest(tmp_path):
    cfg = _config(tmp_path)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = ExperimentConfig.from_file(path)
    assert again == cfg
    moved = ExperimentConfig(**{**cfg.to_dict(), "output_dir": "elsewhere", "workers": 3})
    assert moved.digest() == cfg.digest()


def test_failed_cell_is_recorded(tmp_path):
    # gamma turns negative for unit coefficients at tiny T
    cfg = _config(tmp_path, T_list=[4], seeds=[0], coefficients=dict(c_g=1.0, c_h=1.0))
    arts = run_experiment(cfg)
    rec = arts.runs[run_key(4, 0)]
    assert rec["status"] == "failed" and "ConfigurationError" in rec["error"]


def test_key_values_roundtrip(tmp_path):
    write_key_values(tmp_path / "kv.txt", {"a": 1, "b": 2.5, "c": True, "d": "text"})
    assert read_key_values(tmp_path / "kv.txt") == {"a": 1, "b": 2.5, "c": True, "d": "text"}
