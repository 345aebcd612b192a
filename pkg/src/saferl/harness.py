"""Training, evaluation and comparison runs that write CSV/JSON artifacts."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np

from .agent import Agent, AgentConfig, Experience, epsilon_at, load_policy
from .highway import EgoAction, RewardConfig, RoadConfig, ScenarioConfig, Terminal, extract_affordances, init_scene, step
from .neural import Mlp, forward
from . import calibration
from .regret import REFERENCE_DRIVER, LaneChangeObservation, LaneDecision, RegretParams
from .supervisor import SupervisorConfig, supervise, veto_record

log = logging.getLogger(__name__)

TRAIN_COLUMNS = ["epoch", "return", "steps", "terminal", "vetoes", "epsilon"]
EVAL_COLUMNS = ["epoch", "mean_return", "collisions", "std_return"]
EVAL_SEED_OFFSET = 1_000_000


@dataclass(frozen=True)
class TrainConfig:
    # 1200 epochs; longer 1500-epoch schedules are also in use
    epochs: int = 1200
    max_steps: int = 600
    eval_every: int = 50
    eval_episodes: int = 5
    supervisor: bool = True
    seed: int = 0
    out: str = "runs/default"
    agent: AgentConfig = AgentConfig()
    reward: RewardConfig = RewardConfig()
    safety: SupervisorConfig = SupervisorConfig()
    driver: RegretParams = REFERENCE_DRIVER
    road: RoadConfig = RoadConfig()
    scenario: ScenarioConfig = ScenarioConfig()

    def __post_init__(self):
        if self.epochs < 1 or self.max_steps < 1 or self.eval_every < 1 or self.eval_episodes < 1:
            raise ValueError("epochs, max_steps, eval_every and eval_episodes must be >= 1")

    @property
    def sim_road(self) -> RoadConfig:
        return replace(self.road, max_steps=self.max_steps)

    @property
    def safety_cfg(self) -> SupervisorConfig:
        return replace(self.safety, enabled=self.supervisor)


@dataclass
class EpisodeLog:
    epoch: int
    total_reward: float
    steps: int
    terminal: str
    vetoes: int
    epsilon: float
    stored: int = 0


@dataclass
class EvalSummary:
    episodes: int
    mean_return: float
    std_return: float
    min_return: float
    max_return: float
    collisions: int
    returns: list[float] = field(default_factory=list)


@dataclass
class RunArtifacts:
    out_dir: Path
    train_csv: Path
    eval_csv: Path
    vetoes_jsonl: Path
    checkpoint: Path
    config_snapshot: Path
    episodes: list[EpisodeLog]
    evaluations: list[tuple[int, EvalSummary]]

    @property
    def collisions(self) -> int:
        return sum(e.terminal == Terminal.COLLISION.value for e in self.episodes)


# ---------------------------------------------------------------- config files


def _to_plain(value):
    if is_dataclass(value):
        return {f.name: _to_plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, tuple):
        return list(value)
    return value


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return repr(value)


def dump_config(cfg: TrainConfig) -> str:
    """Flat ``key = value`` text; nested configs use dotted keys."""
    lines = []

    def walk(prefix, data):
        for key, value in data.items():
            if isinstance(value, dict):
                walk(f"{prefix}{key}.", value)
            else:
                lines.append(f"{prefix}{key} = {_toml_value(value)}")

    walk("", _to_plain(cfg))
    return "\n".join(lines) + "\n"


def _build(cls, data: dict, base=None):
    """``base`` (default ``cls()``) with the keys in ``data`` overridden, recursing into nested configs."""
    base = cls() if base is None else base
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r} for {cls.__name__}")
        current = getattr(base, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ValueError(f"config key {key!r} must be a table")
            kwargs[key] = _build(type(current), value, current)
        elif isinstance(value, dict):
            raise ValueError(f"config key {key!r} must be a scalar")
        else:
            kwargs[key] = tuple(value) if isinstance(value, list) else value
    return replace(base, **kwargs)


def load_config(path) -> TrainConfig:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return _build(TrainConfig, data)


# ---------------------------------------------------------------- episodes


def _scene_seed(master: int, epoch: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, epoch])


def run_episode(
    cfg: TrainConfig,
    scene_seed,
    policy,
    agent: Agent | None = None,
    epsilon: float = 0.0,
    veto_sink=None,
    epoch: int = 0,
) -> EpisodeLog:
    """One episode from reset to terminal or the step cap.

    With ``agent`` given, every executed decision is stored and followed by
    one gradient step once the buffer holds a minibatch; vetoes add one
    penalised terminal experience each. ``policy`` maps a state to an
    action index and is ignored for the random branch of epsilon-greedy.
    """
    road = cfg.sim_road
    safety = cfg.safety_cfg
    repeat = cfg.agent.action_repeat
    scene = init_scene(road, scene_seed, cfg.driver, cfg.scenario)
    s = extract_affordances(scene)
    total, vetoes, stored, decision = 0.0, 0, 0, 0
    terminal = None
    while terminal is None:
        if agent is not None:
            proposed = agent.select_action(s, epsilon)
        else:
            proposed = policy(s)
        result = supervise(scene, EgoAction(proposed), cfg.driver, safety, cfg.agent.r_col)
        if result.vetoed is not None:
            vetoes += 1
            if agent is not None:
                agent.store(result.unsafe_experience)
                stored += 1
            if veto_sink is not None:
                veto_sink.write(veto_record(epoch, scene.steps, result) + "\n")
        reward = 0.0
        for _ in range(repeat):
            outcome = step(scene, result.executed, cfg.reward)
            scene = outcome.scene
            reward += outcome.reward.total
            terminal = outcome.terminal
            if terminal is not None:
                break
        total += reward
        s_next = extract_affordances(scene)
        if agent is not None:
            if terminal is Terminal.COLLISION:
                exp = Experience(s, int(result.executed), None, cfg.agent.r_col)
            elif terminal in (Terminal.OFF_ROAD, Terminal.GOAL):
                exp = Experience(s, int(result.executed), None, reward)
            else:  # the step cap is a truncation, so keep bootstrapping
                exp = Experience(s, int(result.executed), s_next, reward)
            agent.store(exp)
            stored += 1
            if agent.ready():
                loss = agent.train_step()
                if not math.isfinite(loss):
                    raise FloatingPointError(f"non-finite loss in epoch {epoch}")
        s = s_next
        decision += 1
    return EpisodeLog(epoch, total, scene.steps, terminal.value, vetoes, epsilon, stored)


def greedy_policy(net: Mlp):
    return lambda s: int(np.argmax(forward(net, s)))


def evaluate_policy(net: Mlp, cfg: TrainConfig, episodes: int, seed: int) -> EvalSummary:
    """Greedy rollouts on scenes seeded ``(seed, EVAL_SEED_OFFSET + i)``."""
    if episodes < 1:
        raise ValueError("need at least one evaluation episode")
    policy = greedy_policy(net)
    logs = [run_episode(cfg, _scene_seed(seed, EVAL_SEED_OFFSET + i), policy) for i in range(episodes)]
    returns = [e.total_reward for e in logs]
    return EvalSummary(
        episodes=episodes,
        mean_return=float(np.mean(returns)),
        std_return=float(np.std(returns)),
        min_return=float(np.min(returns)),
        max_return=float(np.max(returns)),
        collisions=sum(e.terminal == Terminal.COLLISION.value for e in logs),
        returns=returns,
    )


# ---------------------------------------------------------------- top level


def _fmt(x: float) -> str:
    return repr(float(x))


def train(cfg: TrainConfig) -> RunArtifacts:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": out / "train.csv",
        "eval": out / "eval.csv",
        "vetoes": out / "vetoes.jsonl",
        "checkpoint": out / "checkpoint.json",
        "config": out / "config.toml",
    }
    paths["config"].write_text(dump_config(cfg))
    agent = Agent(cfg.agent, seed=cfg.seed)
    episodes, evaluations = [], []
    with open(paths["train"], "w", newline="") as tf, open(paths["eval"], "w", newline="") as ef, open(
        paths["vetoes"], "w"
    ) as vf:
        tw, ew = csv.writer(tf), csv.writer(ef)
        tw.writerow(TRAIN_COLUMNS)
        ew.writerow(EVAL_COLUMNS)
        for epoch in range(cfg.epochs):
            agent.epoch = epoch
            eps = epsilon_at(epoch, cfg.agent)
            ep = run_episode(cfg, _scene_seed(cfg.seed, epoch), None, agent, eps, vf, epoch)
            episodes.append(ep)
            tw.writerow([epoch, _fmt(ep.total_reward), ep.steps, ep.terminal, ep.vetoes, _fmt(eps)])
            if (epoch + 1) % cfg.eval_every == 0:
                summary = evaluate_policy(agent.online, cfg, cfg.eval_episodes, cfg.seed)
                evaluations.append((epoch + 1, summary))
                ew.writerow([epoch + 1, _fmt(summary.mean_return), summary.collisions, _fmt(summary.std_return)])
                log.info("epoch %d eval mean %.1f collisions %d", epoch + 1, summary.mean_return, summary.collisions)
    agent.epoch = cfg.epochs
    agent.save(paths["checkpoint"])
    return RunArtifacts(
        out, paths["train"], paths["eval"], paths["vetoes"], paths["checkpoint"], paths["config"],
        episodes, evaluations,
    )


def evaluate(checkpoint, cfg: TrainConfig, episodes: int, seed: int | None = None) -> EvalSummary:
    net = load_policy(checkpoint)
    return evaluate_policy(net, cfg, episodes, cfg.seed if seed is None else seed)


@dataclass
class ArmResult:
    arm: str
    epochs: int
    collisions: int
    artifacts: RunArtifacts

    @property
    def ratio(self) -> float:
        return self.collisions / self.epochs


def compare(cfg: TrainConfig, stream=None) -> list[ArmResult]:
    """Train with and without the supervisor on shared seeds; write comparison.csv."""
    out = Path(cfg.out)
    rows = []
    for arm, enabled in (("SafeRL", True), ("ConvRL", False)):
        arm_cfg = replace(cfg, supervisor=enabled, out=str(out / arm.lower()))
        artifacts = train(arm_cfg)
        rows.append(ArmResult(arm, cfg.epochs, artifacts.collisions, artifacts))
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arm", "epochs", "collisions", "ratio"])
        for r in rows:
            w.writerow([r.arm, r.epochs, r.collisions, _fmt(r.ratio)])
    (stream or sys.stdout).write(format_comparison(rows))
    return rows


def format_comparison(rows: list[ArmResult]) -> str:
    buf = io.StringIO()
    buf.write(f"{'arm':<8} {'epochs':>7} {'collisions':>11} {'ratio':>8}\n")
    for r in rows:
        buf.write(f"{r.arm:<8} {r.epochs:>7} {r.collisions:>11} {r.ratio:>8.2%}\n")
    return buf.getvalue()


# ---------------------------------------------------------------- driver data


def calibrate(dataset_path, fit_cfg: calibration.FitConfig, out_path, stream=None) -> calibration.FitResult:
    """Fit driver parameters to a decision CSV and write them as JSON."""
    records = calibration.load_dataset(dataset_path)
    result = calibration.fit(records, fit_cfg)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    calibration.save_fit(out_path, result)
    (stream or sys.stdout).write(
        f"records {len(records)}  accuracy {result.accuracy:.4f}  nll {result.nll:.4f}  "
        f"best restart {result.best_restart}  diverged {result.diverged_restarts}\n"
    )
    return result


def sample_observations(count: int, seed) -> list[LaneChangeObservation]:
    """Observations drawn from the synthetic sampling box."""
    dummy = calibration.generate_synthetic_dataset(REFERENCE_DRIVER, count, 0.0, seed)
    return [r.obs for r in dummy]


def _prompt(i: int, n: int, o: LaneChangeObservation) -> str:
    return (
        f"[{i}/{n}] You drive at {o.v_c:.1f} m/s (you would like {o.v_b:.1f}) behind a car doing {o.v_s:.1f}.\n"
        f"      The other lane has a car {o.d:.1f} m behind you at {o.v_f:.1f} m/s.\n"
        "      Change lanes (C) or keep your lane (K)? "
    )


def elicit(count: int, seed, out_path, input_stream=None, output_stream=None) -> int:
    """Ask for C/K answers to sampled scenarios and write them as a decision CSV.

    Invalid answers re-prompt. End of input stops early; whatever was
    answered so far is kept. Returns the number of records written.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    inp = input_stream or sys.stdin
    out = output_stream or sys.stdout
    observations = sample_observations(count, seed)
    written = 0
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(calibration.CSV_HEADER)
        for i, obs in enumerate(observations, start=1):
            answer = None
            while answer is None:
                out.write(_prompt(i, count, obs))
                out.flush()
                line = inp.readline()
                if not line:
                    out.write("\n")
                    return written
                token = line.strip().upper()
                if token in ("C", "K"):
                    answer = LaneDecision(token)
                else:
                    out.write("      please answer C or K\n")
            w.writerow(calibration.format_record(calibration.DecisionRecord(obs, answer)))
            fh.flush()
            written += 1
    return written
