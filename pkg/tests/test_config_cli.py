import json
import sys

import pytest

from spo_lab import cli
from spo_lab.config import TrainConfig, dump_config, load_config, parse_overrides
from spo_lab.errors import ConfigError
from spo_lab.objectives import ObjectiveKind

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


def write_toml(path, text):
    path.write_text(text)
    return path


# ---- config -------------------------------------------------------------------

def test_defaults_per_action_space():
    d = TrainConfig(env_id="cartpole").resolved()
    assert (d.horizon, d.learning_rate, d.update_epochs, d.c2) == (128, 2.5e-4, 4, 0.01)
    c = TrainConfig(env_id="pointmass").resolved()
    assert (c.horizon, c.learning_rate, c.update_epochs, c.c2) == (256, 3e-4, 10, 0.0)
    assert (d.num_workers, d.num_minibatches, d.c1, d.eps, d.gamma, d.gae_lambda) == (8, 4, 0.5, 0.2, 0.99, 0.95)
    assert d.lr_decay and d.advantage_norm
    assert d.max_grad_norm == 0 and d.target_kl == 0 and not d.adaptive_lr


def test_resolution_requires_env_and_valid_sizes():
    with pytest.raises(ConfigError, match="env_id"):
        TrainConfig().resolved()
    with pytest.raises(ConfigError, match="divisible"):
        TrainConfig(env_id="cartpole", num_workers=3, horizon=5, num_minibatches=4).resolved()
    with pytest.raises(ConfigError):
        TrainConfig(env_id="cartpole", eps=0.0).resolved()


def test_file_then_overrides(tmp_path):
    path = write_toml(tmp_path / "c.toml", 'env_id = "cartpole"\nseed = 3\neps = 0.1\n')
    cfg = load_config(path, ["seed=7", "objective=ppo_clip", "hidden_sizes=32,32", "lr_decay=false"])
    assert cfg.seed == 7 and cfg.eps == 0.1
    assert cfg.objective is ObjectiveKind.PPO_CLIP
    assert cfg.hidden_sizes == [32, 32] and cfg.lr_decay is False


def test_unknown_override_key_fails_before_any_work():
    with pytest.raises(ConfigError, match="bogus"):
        parse_overrides(["bogus=1"])
    with pytest.raises(ConfigError):
        parse_overrides(["seed"])


def test_unknown_file_field_and_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_toml(tmp_path / "a.toml", "nope = 1\n"))
    with pytest.raises(ConfigError):
        load_config(None, ["seed=1.5"])
    with pytest.raises(ConfigError):
        load_config(write_toml(tmp_path / "b.toml", "this is not toml"))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_resolved_echo_round_trips(tmp_path):
    cfg = TrainConfig(env_id="pointmass", seed=5, hidden_sizes=[16]).resolved()
    dump_config(cfg, tmp_path / "r.toml")
    assert load_config(tmp_path / "r.toml").resolved() == cfg


# ---- CLI ----------------------------------------------------------------------

TINY = ["--set", "total_steps=64", "--set", "num_workers=2", "--set", "horizon=16", "--set", "hidden_sizes=8"]


def test_train_writes_run_directory(tmp_path, capsys):
    cfg = write_toml(tmp_path / "cartpole_spo.toml", 'env_id = "cartpole"\nobjective = "spo"\n')
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg), "--set", "seed=1", "--out", str(out), "--quiet", *TINY]) == 0
    for name in ("metrics.csv", "checkpoint.json", "resolved.toml"):
        assert (out / name).exists()
    echo = tomllib.loads((out / "resolved.toml").read_text())
    assert echo["seed"] == 1 and echo["objective"] == "spo"


def test_override_flips_only_the_objective(tmp_path):
    cfg = write_toml(tmp_path / "c.toml", 'env_id = "cartpole"\n')
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["train", "--config", str(cfg), "--out", str(a), "--quiet", *TINY])
    cli.main(["train", "--config", str(cfg), "--out", str(b), "--quiet", "--set", "objective=ppo_clip", *TINY])
    ea = tomllib.loads((a / "resolved.toml").read_text())
    eb = tomllib.loads((b / "resolved.toml").read_text())
    diff = {k for k in ea if ea[k] != eb[k]}
    assert diff == {"objective"} and eb["objective"] == "ppo_clip"


def test_missing_env_id_exits_2_naming_the_field(capsys):
    assert cli.main(["train", "--set", "seed=1"]) == 2
    assert "env_id" in capsys.readouterr().err


def test_unknown_override_exits_2(capsys):
    assert cli.main(["train", "--set", "env_id=cartpole", "--set", "colour=red"]) == 2
    assert "colour" in capsys.readouterr().err


def test_train_default_output_root_honours_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("SPO_LAB_OUT", str(tmp_path))
    assert cli.main(["train", "--set", "env_id=gridmdp", "--quiet", *TINY]) == 0
    assert (tmp_path / "runs" / "gridmdp_spo_seed0" / "metrics.csv").exists()
    assert cli.main(["train", "--set", "env_id=gridmdp", "--quiet", *TINY]) == 2
    assert cli.main(["train", "--set", "env_id=gridmdp", "--quiet", "--force", *TINY]) == 0


def test_verify_filter_runs_one_suite(capsys):
    assert cli.main(["verify", "--filter", "kl_escape"]) == 0
    out = capsys.readouterr().out
    assert "kl_escape" in out and "PASS" in out and "pinsker" not in out


def test_verify_unknown_suite_exits_2():
    assert cli.main(["verify", "--filter", "nope"]) == 2


def test_verify_failure_exits_1(monkeypatch):
    from spo_lab import verify

    monkeypatch.setitem(verify.SUITES, "kl_escape", lambda: verify.SuiteResult("kl_escape", 1, 1.0, False))
    assert cli.main(["verify", "--filter", "kl_escape"]) == 1


def test_bench_writes_cartesian_product_and_needs_force(tmp_path):
    out = tmp_path / "bench"
    args = ["bench", "--kinds", "spo,ppo_clip,simple", "--seeds", "0,1,2", "--steps", "50", "--out", str(out)]
    assert cli.main(args) == 0
    files = sorted(p.name for p in out.iterdir())
    assert len(files) == 9 and "bench_ppo_clip_seed2.csv" in files
    first = (out / "bench_spo_seed0.csv").read_text()
    assert first.splitlines()[0] == "step,mean_surrogate,mean_ratio_dev,max_ratio_dev"
    assert len(first.splitlines()) == 52
    assert cli.main(args) == 2
    assert cli.main(args + ["--force"]) == 0


def test_bench_defaults_match_documented_values():
    args = cli.build_parser().parse_args(["bench"])
    assert (args.size, args.steps, args.lr, args.eps, args.kinds) == (1024, 10_000, 1e-3, 0.2, "spo,ppo_clip,simple")


def test_bench_unknown_kind_exits_2(tmp_path):
    assert cli.main(["bench", "--kinds", "trpo", "--out", str(tmp_path)]) == 2


def test_eval_prints_mean_and_std(tmp_path, capsys):
    out = tmp_path / "run"
    cli.main(["train", "--set", "env_id=cartpole", "--out", str(out), "--quiet", *TINY])
    capsys.readouterr()
    assert cli.main(["eval", str(out / "checkpoint.json"), "--episodes", "1"]) == 0
    assert "+- 0.00" in capsys.readouterr().out
    assert cli.main(["eval", str(out / "checkpoint.json"), "--env", "pointmass"]) == 2
    assert cli.main(["eval", str(tmp_path / "missing.json")]) == 2


def test_export_summarises_runs(tmp_path, capsys):
    runs = []
    for seed in (0, 1):
        d = tmp_path / f"r{seed}"
        cli.main(["train", "--set", "env_id=cartpole", "--set", f"seed={seed}", "--out", str(d), "--quiet",
                  "--set", "total_steps=512", "--set", "num_workers=2", "--set", "horizon=16", "--set", "hidden_sizes=8"])
        runs.append(str(d))
    summary = tmp_path / "s.json"
    assert cli.main(["export", *runs, "--last-fraction", "0.5", "--out", str(summary),
                     "--min-ref", "0", "--max-ref", "500"]) == 0
    doc = json.loads(summary.read_text())
    assert len(doc["tail_mean_return"]) == 2 and len(doc["normalized"]) == 2
    assert doc["normalized"][0] == pytest.approx(doc["tail_mean_return"][0] / 500)


def test_module_entry_point_runs():
    import subprocess

    res = subprocess.run([sys.executable, "-m", "spo_lab.cli", "verify", "--filter", "tv_identity"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "tv_identity" in res.stdout
