import csv

import pytest

from ugatlab.cli import main
from ugatlab.sim import load_demand

TINY = """
[experiment]
scenario = V1
seeds = 1
pretrain_episodes = 1
iterations = 1
epochs_per_iteration = 1
steps_per_episode = 3
rollout_episodes = 1
eval_episodes = 2
direct_episodes = 2
demand_vph = 600
demand_seed = 3

[dqn]
batch_size = 4
replay_capacity = 64

[grounding]
train_epochs = 1
batch_size = 8

[sim]
episode_length = 60.0
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return str(path)


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "ugatlab" in capsys.readouterr().out


def test_unknown_key_is_named_in_diagnostic(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[experiment]\nalhpa = 0.5\n")
    code = main(["train-ugat", "--config", str(bad), "--out", str(tmp_path / "out")])
    assert code == 1
    err = capsys.readouterr().err
    assert "alhpa" in err
    assert err.startswith("ugatlab: error:")


def test_missing_config_file_fails_validation(tmp_path, capsys):
    code = main(["train-direct", "--config", str(tmp_path / "nope.cfg")])
    assert code == 1
    assert "not readable" in capsys.readouterr().err


def test_demand_gen_round_trips(tmp_path):
    out = tmp_path / "demand.csv"
    assert main(["demand-gen", "--vph", "1200", "--duration", "120", "--seed", "5",
                 "--out-file", str(out), "--quiet"]) == 0
    schedule = load_demand(out)
    assert len(schedule) > 10


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--cases", "3"]) == 0
    assert "max relative error" in capsys.readouterr().out


def test_train_ugat_produces_run_layout(tiny_config, tmp_path):
    out = tmp_path / "out"
    code = main(["train-ugat", "--config", tiny_config, "--out", str(out), "--quiet"])
    assert code == 0
    run = out / "ugat" / "V1" / "seed1"
    for name in (
        "manifest.txt",
        "training_curve.csv",
        "grounding_audit.csv",
        "alpha_trace.csv",
        "trajectory.csv",
        "vehicles.csv",
        "metrics.csv",
    ):
        assert (run / name).exists(), name
    assert (out / "demands" / "train.csv").exists()
    assert (out / "demands" / "eval0.csv").exists()
    assert (out / "gap_report.csv").exists()
    assert (out / "summary.txt").exists()
    manifest = (run / "manifest.txt").read_text()
    assert "format_version = 1" in manifest
    assert "scenario = V1" in manifest


def test_seed_override_via_flag(tiny_config, tmp_path):
    out = tmp_path / "out"
    code = main(
        ["train-direct", "--config", tiny_config, "--out", str(out), "--seeds", "7,8", "--quiet"]
    )
    assert code == 0
    assert (out / "direct" / "V1" / "seed7").is_dir()
    assert (out / "direct" / "V1" / "seed8").is_dir()


def test_env_var_supplies_default_out_dir(tiny_config, tmp_path, monkeypatch):
    monkeypatch.setenv("UGATLAB_OUT", str(tmp_path / "envout"))
    assert main(["train-direct", "--config", tiny_config, "--quiet"]) == 0
    assert (tmp_path / "envout" / "direct" / "V1" / "seed1").is_dir()


def read_gap_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_gap_report_matches_raw_csv_recomputation(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["train-direct", "--config", tiny_config, "--out", str(out), "--quiet"]) == 0
    report_out = tmp_path / "merged"
    code = main(
        ["gap-report", str(out / "direct" / "V1"), "--out", str(report_out), "--quiet"]
    )
    assert code == 0
    rows = {r["metric"]: r for r in read_gap_csv(report_out / "gap_report.csv")}

    # independent scalar recomputation from the raw per-seed metrics.csv
    with open(out / "direct" / "V1" / "seed1" / "metrics.csv") as fh:
        raw = list(csv.DictReader(fh))
    for metric, col in (("ATT", "att"), ("TP", "tp"), ("Queue", "queue_mean")):
        sim = [float(r[col]) for r in raw if r["env"] == "sim"]
        real = [float(r[col]) for r in raw if r["env"] == "real"]
        sim_mean = sum(sim) / len(sim)
        real_mean = sum(real) / len(real)
        assert float(rows[metric]["sim_mean"]) == pytest.approx(sim_mean, abs=1e-12)
        assert float(rows[metric]["real_mean"]) == pytest.approx(real_mean, abs=1e-12)
        assert float(rows[metric]["delta_mean"]) == pytest.approx(real_mean - sim_mean, abs=1e-12)
        assert float(rows[metric]["seeds"]) == 1
        assert float(rows[metric]["delta_std"]) == 0.0  # single run: std 0


def test_gap_report_lists_incomplete_dirs(tmp_path, capsys):
    empty = tmp_path / "direct" / "V1"
    (empty / "seed1").mkdir(parents=True)
    code = main(["gap-report", str(empty), "--out", str(tmp_path / "m"), "--quiet"])
    assert code == 1
    assert "incomplete" in capsys.readouterr().err


def test_parallel_jobs_smoke(tiny_config, tmp_path):
    out = tmp_path / "out"
    code = main(
        ["ablate", "--config", tiny_config, "--out", str(out), "--jobs", "2", "--quiet"]
    )
    assert code == 0
    rows = read_gap_csv(out / "gap_report.csv")
    assert {r["label"] for r in rows} == {
        "ugat",
        "no_dynamic_alpha",
        "no_alpha_no_uncertainty",
        "no_grounding",
    }


def test_identical_invocations_are_byte_identical(tiny_config, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train-ugat", "--config", tiny_config, "--out", str(out), "--quiet"]) == 0
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel
