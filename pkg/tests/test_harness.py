import csv
import io
import json
import math
from dataclasses import replace

import pytest

from saferl import cli
from saferl.agent import Agent, AgentConfig
from saferl.calibration import FitConfig, generate_synthetic_dataset, load_dataset, load_fit, save_dataset
from saferl.harness import (
    EVAL_COLUMNS,
    TRAIN_COLUMNS,
    TrainConfig,
    calibrate,
    compare,
    dump_config,
    elicit,
    evaluate,
    evaluate_policy,
    load_config,
    run_episode,
    sample_observations,
    train,
)
from saferl.regret import REFERENCE_DRIVER

SMALL_AGENT = AgentConfig(batch_size=16, buffer_capacity=2000, target_sync=10)


def small(tmp_path, **kw) -> TrainConfig:
    base = dict(epochs=4, max_steps=80, eval_every=2, eval_episodes=2, out=str(tmp_path / "run"), agent=SMALL_AGENT)
    base.update(kw)
    return TrainConfig(**base)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------- config


def test_config_round_trip(tmp_path):
    cfg = small(tmp_path, seed=17, supervisor=False)
    path = tmp_path / "c.toml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_config_partial_override(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('epochs = 7\nagent.gamma = 0.9\n[safety]\nt_pred = 1.0\n')
    cfg = load_config(path)
    assert cfg.epochs == 7 and cfg.agent.gamma == 0.9 and cfg.safety.t_pred == 1.0
    assert cfg.agent.batch_size == 256 and cfg.driver == REFERENCE_DRIVER


@pytest.mark.parametrize("text", ["bogus = 1\n", "agent = 3\n", "epochs.x = 2\n", "agent.gamma = 1.5\n"])
def test_config_errors(tmp_path, text):
    path = tmp_path / "c.toml"
    path.write_text(text)
    with pytest.raises(ValueError):
        load_config(path)


def test_config_defaults():
    cfg = TrainConfig()
    assert cfg.epochs == 1200 and cfg.max_steps == 600 and cfg.eval_every == 50
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


# ---------------------------------------------------------------- episodes


def test_every_decision_and_veto_is_stored():
    cfg = TrainConfig(max_steps=200, agent=SMALL_AGENT)
    agent = Agent(cfg.agent, seed=0)
    sink = io.StringIO()
    log = run_episode(cfg, 5, None, agent, epsilon=1.0, veto_sink=sink)
    decisions = math.ceil(log.steps / cfg.agent.action_repeat)
    vetoes = sink.getvalue().splitlines()
    assert len(vetoes) == log.vetoes
    assert agent.buffer.insertions == log.stored == decisions + log.vetoes
    assert all(json.loads(v)["replacement"] for v in vetoes)


def test_collision_experience_uses_penalty():
    cfg = TrainConfig(supervisor=False, max_steps=300, agent=SMALL_AGENT)
    for seed in range(40):
        agent = Agent(cfg.agent, seed=seed)
        log = run_episode(cfg, seed, None, agent, epsilon=1.0)
        if log.terminal == "collision":
            last = agent.buffer[len(agent.buffer) - 1]
            assert last.terminal and last.r == cfg.agent.r_col
            return
    pytest.fail("no collision found in 40 random episodes")


def test_evaluate_untrained_with_supervisor_never_collides():
    cfg = TrainConfig()
    summary = evaluate_policy(Agent(seed=3).online, cfg, 20, seed=0)
    assert summary.collisions == 0
    assert summary.min_return <= summary.mean_return <= summary.max_return
    assert evaluate_policy(Agent(seed=3).online, cfg, 3, seed=1) == evaluate_policy(Agent(seed=3).online, cfg, 3, seed=1)
    with pytest.raises(ValueError):
        evaluate_policy(Agent(seed=3).online, cfg, 0, seed=0)


# ---------------------------------------------------------------- training runs


def test_train_artifacts(tmp_path):
    cfg = small(tmp_path, epochs=5)
    art = train(cfg)
    train_rows = rows(art.train_csv)
    eval_rows = rows(art.eval_csv)
    assert train_rows[0] == TRAIN_COLUMNS and len(train_rows) == 1 + 5
    assert eval_rows[0] == EVAL_COLUMNS and len(eval_rows) == 1 + 5 // 2
    assert [r[0] for r in eval_rows[1:]] == ["2", "4"]
    assert sum(int(r[4]) for r in train_rows[1:]) == len(art.vetoes_jsonl.read_text().splitlines())
    assert load_config(art.config_snapshot) == cfg
    assert art.checkpoint.exists()
    summary = evaluate(art.checkpoint, cfg, 2, seed=0)
    assert summary.episodes == 2


def test_train_is_reproducible_from_snapshot(tmp_path):
    first = train(small(tmp_path, supervisor=False, out=str(tmp_path / "a")))
    again = replace(load_config(first.config_snapshot), out=str(tmp_path / "b"))
    train(again)
    for name in ("train.csv", "eval.csv", "vetoes.jsonl", "checkpoint.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_compare_writes_two_rows(tmp_path):
    stream = io.StringIO()
    result = compare(small(tmp_path, epochs=3), stream)
    assert [r.arm for r in result] == ["SafeRL", "ConvRL"]
    table = rows(tmp_path / "run" / "comparison.csv")
    assert table[0] == ["arm", "epochs", "collisions", "ratio"] and len(table) == 3
    assert result[0].collisions == 0
    assert "SafeRL" in stream.getvalue() and "ConvRL" in stream.getvalue()


# ---------------------------------------------------------------- driver data


def test_calibrate_writes_loadable_json(tmp_path):
    data = tmp_path / "d.csv"
    save_dataset(data, generate_synthetic_dataset(REFERENCE_DRIVER, 80, 0.0, seed=2))
    out = tmp_path / "fit" / "driver.json"
    stream = io.StringIO()
    res = calibrate(data, FitConfig(restarts=1, max_iterations=50), out, stream)
    params, k = load_fit(out)
    assert params == res.params and k == res.k
    assert "accuracy" in stream.getvalue()
    with pytest.raises(OSError):
        calibrate(tmp_path / "missing.csv", FitConfig(restarts=1), out, stream)


def test_elicit_piped_answers(tmp_path):
    out = tmp_path / "e.csv"
    n = elicit(3, 4, out, io.StringIO("K\nK\nC\n"), io.StringIO())
    recs = load_dataset(out)
    assert n == 3 and [r.label.value for r in recs] == ["K", "K", "C"]
    assert [r.obs for r in recs] == sample_observations(3, 4)


def test_elicit_reprompts_and_stops_at_eof(tmp_path):
    out = tmp_path / "e.csv"
    prompts = io.StringIO()
    n = elicit(5, 1, out, io.StringIO("maybe\nc\n\nk\n"), prompts)
    assert n == 2
    assert [r.label.value for r in load_dataset(out)] == ["C", "K"]
    assert prompts.getvalue().count("please answer C or K") == 2


def test_elicit_same_seed_same_scenarios():
    assert sample_observations(6, 9) == sample_observations(6, 9)
    assert sample_observations(6, 9) != sample_observations(6, 10)


# ---------------------------------------------------------------- command line


def test_cli_train_and_eval(tmp_path, capsys):
    cfg_path = tmp_path / "c.toml"
    cfg_path.write_text(dump_config(small(tmp_path)))
    out = tmp_path / "cli"
    assert cli.main(["train", "--config", str(cfg_path), "--epochs", "2", "--supervisor", "off", "--out", str(out)]) == 0
    snap = load_config(out / "config.toml")
    assert snap.epochs == 2 and snap.supervisor is False and snap.max_steps == 80
    assert cli.main(["eval", str(out / "checkpoint.json"), "--episodes", "2", "--config", str(cfg_path)]) == 0
    assert "collisions" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    assert cli.main(["eval", str(tmp_path / "none.json")]) != 0
    assert cli.main(["calibrate", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) != 0
    bad = tmp_path / "bad.toml"
    bad.write_text("nonsense = 1\n")
    assert cli.main(["train", "--config", str(bad)]) != 0
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--supervisor", "maybe"])
    assert exc.value.code != 0


def test_cli_calibrate_and_elicit(tmp_path, monkeypatch):
    data = tmp_path / "d.csv"
    save_dataset(data, generate_synthetic_dataset(REFERENCE_DRIVER, 50, 0.0, seed=2))
    args = ["calibrate", str(data), "--restarts", "1", "--max-iterations", "20", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    assert (tmp_path / "driver_fit.json").exists()
    monkeypatch.setattr("sys.stdin", io.StringIO("C\nK\n"))
    assert cli.main(["elicit", "--count", "2", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert len(load_dataset(tmp_path / "decisions.csv")) == 2
