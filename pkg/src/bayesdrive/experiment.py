"""Training and evaluation loops, checkpoints and the train/deploy matrix.

Random streams: one master seed feeds a ``SeedSequence``; the policy and
noise streams are its spawned children 0 and 1. Track layouts are seeded per
episode from ``(seed, split, episode)`` so adding noise never perturbs the
policy stream or the tracks. Training uses split 0 and evaluation split 1.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from bayesdrive.agent import Agent
from bayesdrive.core import AgentConfig, config_from_mapping, config_to_mapping
from bayesdrive.evalkit import EpisodeRecord, MetricSummary, StepRecord, std, summarize
from bayesdrive.perception import NoiseConfig, corrupt, extract_state
from bayesdrive.simworld import (
    SCENARIO_ROTATION,
    RewardConfig,
    Scenario,
    TrackSpec,
    VehicleState,
    WorldState,
    build_track,
    decision_step,
    render_semantic,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TRAIN_SPLIT, EVAL_SPLIT = 0, 1
TERMINAL_OUTCOMES = ("collision", "timeout")


class CheckpointError(ValueError):
    pass


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    policy_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(policy_ss), np.random.default_rng(noise_ss)


def track_rng(seed: int, split: int, episode: int) -> np.random.Generator:
    return np.random.default_rng([seed, split, episode])


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _rng_from_state(state: dict) -> np.random.Generator:
    bg = getattr(np.random, state["bit_generator"])()
    bg.state = state
    return np.random.Generator(bg)


def observe(world: WorldState, noise: NoiseConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Render the camera, optionally corrupt it, and encode the state."""
    cells = render_semantic(world)
    seen = cells if noise.is_clean else corrupt(cells, noise, rng)
    return extract_state(seen), seen


def _observe_cells(cells: np.ndarray, noise: NoiseConfig, rng: np.random.Generator) -> np.ndarray:
    seen = cells if noise.is_clean else corrupt(cells, noise, rng)
    return extract_state(seen)


@dataclass
class TrainingSession:
    """Resumable training run: agent, random streams and the live episode."""

    config: AgentConfig
    seed: int
    scenarios: tuple[Scenario, ...] = SCENARIO_ROTATION
    noise: NoiseConfig = NoiseConfig()
    track: TrackSpec = TrackSpec()
    agent: Agent = None
    policy_rng: np.random.Generator = None
    noise_rng: np.random.Generator = None
    episode: int = 0
    episode_steps: int = 0
    world: WorldState | None = None
    state: np.ndarray | None = None
    records: list[EpisodeRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.agent is None:
            self.agent = Agent(self.config)
        if self.policy_rng is None:
            self.policy_rng, self.noise_rng = _streams(self.seed)
        self.reward_cfg = RewardConfig.from_agent_config(self.config)

    @property
    def steps_done(self) -> int:
        return self.agent.steps

    def _spec_for(self, episode: int) -> TrackSpec:
        return dataclasses.replace(self.track, scenario=self.scenarios[episode % len(self.scenarios)])

    def _start_episode(self) -> None:
        spec = self._spec_for(self.episode)
        self.world = build_track(spec, track_rng(self.seed, TRAIN_SPLIT, self.episode))
        self.state, _ = observe(self.world, self.noise, self.noise_rng)
        self.episode_steps = 0
        self.records.append(EpisodeRecord(self.episode, spec.scenario.value, "running"))
        if self.agent.n_components == 0:
            self.agent.bootstrap(self.state)

    def run(self, n_steps: int) -> None:
        for _ in range(n_steps):
            self.step_once()

    def run_to_completion(self) -> None:
        self.run(self.config.t_max - self.steps_done)

    def step_once(self) -> None:
        if self.world is None:
            self._start_episode()
        elif not self.records or self.records[-1].episode != self.episode:
            # resumed mid-episode from a checkpoint
            self.records.append(EpisodeRecord(self.episode, self._spec_for(self.episode).scenario.value, "running"))
        agent = self.agent
        s_t = self.state
        a_t, _ = agent.select_action(s_t, self.policy_rng)
        world, tr = decision_step(self.world, a_t, self.reward_cfg, self.episode_steps)
        s_next = _observe_cells(tr.cells, self.noise, self.noise_rng)
        terminal = tr.done and tr.outcome.value in TERMINAL_OUTCOMES
        step_idx = agent.steps
        diag = agent.step(s_t, a_t, tr.reward, s_next, terminal=terminal)
        m = tr.measures
        rec = self.records[-1]
        rec.steps.append(StepRecord(
            step_idx, s_t.tolist(), a_t, tr.reward, m.offroad_fraction, m.otherlane_fraction,
            m.speed, m.distance_delta, m.collision, m.collision_kind, diag.td_error,
            agent.n_components,
        ))
        self.episode_steps += 1
        if tr.done:
            rec.outcome = tr.outcome.value
            self.episode += 1
            self.world = None
            self.state = None
        else:
            self.world = world
            self.state = s_next

    # -- checkpoints -------------------------------------------------------

    def to_dict(self) -> dict:
        session = {
            "seed": self.seed,
            "scenarios": [s.value for s in self.scenarios],
            "noise": dataclasses.asdict(self.noise),
            "track": _track_to_dict(self.track),
            "episode": self.episode,
            "episode_steps": self.episode_steps,
            "policy_rng": _rng_state(self.policy_rng),
            "noise_rng": _rng_state(self.noise_rng),
            "world": None if self.world is None else {
                "vehicle": dataclasses.asdict(self.world.vehicle),
                "time": self.world.time,
                "ticks": self.world.ticks,
            },
            "state": None if self.state is None else self.state.tolist(),
        }
        return {
            "format_version": FORMAT_VERSION,
            "config": config_to_mapping(self.config),
            "agent": self.agent.state_dict(),
            "session": session,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainingSession":
        check_version(doc)
        config = config_from_mapping(doc["config"])
        s = doc["session"]
        track = _track_from_dict(s["track"])
        out = cls(
            config=config,
            seed=int(s["seed"]),
            scenarios=tuple(Scenario(v) for v in s["scenarios"]),
            noise=NoiseConfig(**s["noise"]),
            track=track,
            agent=Agent.from_state_dict(doc["agent"], config),
            policy_rng=_rng_from_state(s["policy_rng"]),
            noise_rng=_rng_from_state(s["noise_rng"]),
            episode=int(s["episode"]),
            episode_steps=int(s["episode_steps"]),
        )
        if s["world"] is not None:
            base = build_track(out._spec_for(out.episode), track_rng(out.seed, TRAIN_SPLIT, out.episode))
            out.world = dataclasses.replace(
                base, vehicle=VehicleState(**s["world"]["vehicle"]),
                time=float(s["world"]["time"]), ticks=int(s["world"]["ticks"]))
            out.state = np.asarray(s["state"], dtype=float)
        return out


def _track_to_dict(spec: TrackSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["scenario"] = spec.scenario.value
    return d


def _track_from_dict(d: dict) -> TrackSpec:
    from bayesdrive.simworld import Obstacle

    d = dict(d)
    d["scenario"] = Scenario(d["scenario"])
    d["obstacles"] = tuple(Obstacle(**o) for o in d.get("obstacles", ()))
    return TrackSpec(**d)


def check_version(doc: dict) -> None:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {version!r} (expected {FORMAT_VERSION})")


def dumps_checkpoint(session: TrainingSession) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps(session.to_dict(), sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_checkpoint(session: TrainingSession, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_checkpoint(session))
    return path


def load_checkpoint(path: str | Path) -> TrainingSession:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a checkpoint ({exc})") from exc
    return TrainingSession.from_dict(doc)


def train(config: AgentConfig, seed: int, scenarios: Sequence[Scenario] = SCENARIO_ROTATION,
          noise: NoiseConfig = NoiseConfig(), track: TrackSpec = TrackSpec()) -> TrainingSession:
    session = TrainingSession(config, seed, tuple(scenarios), noise, track)
    session.run_to_completion()
    return session


def training_rewards(session: TrainingSession) -> tuple[np.ndarray, np.ndarray]:
    steps = [s for rec in session.records for s in rec.steps]
    return np.array([s.reward for s in steps]), np.array([s.td_error for s in steps])


# -- evaluation --------------------------------------------------------------

def evaluate(agent: Agent, config: AgentConfig, seed: int, episodes: int,
             scenarios: Sequence[Scenario] = SCENARIO_ROTATION, noise: NoiseConfig = NoiseConfig(),
             track: TrackSpec = TrackSpec()) -> list[EpisodeRecord]:
    """Greedy deployment without learning. The agent is not modified."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    reward_cfg = RewardConfig.from_agent_config(config)
    _, noise_rng = _streams(seed)
    records = []
    step_idx = 0
    for ep in range(episodes):
        spec = dataclasses.replace(track, scenario=scenarios[ep % len(scenarios)])
        world = build_track(spec, track_rng(seed, EVAL_SPLIT, ep))
        s, _ = observe(world, noise, noise_rng)
        rec = EpisodeRecord(ep, spec.scenario.value, "running")
        for k in range(spec.max_steps):
            a = agent.greedy_action(s)
            world, tr = decision_step(world, a, reward_cfg, k)
            m = tr.measures
            rec.steps.append(StepRecord(
                step_idx, s.tolist(), a, tr.reward, m.offroad_fraction, m.otherlane_fraction,
                m.speed, m.distance_delta, m.collision, m.collision_kind, None, agent.n_components,
            ))
            step_idx += 1
            if tr.done:
                rec.outcome = tr.outcome.value
                break
            s = _observe_cells(tr.cells, noise, noise_rng)
        records.append(rec)
    return records


# -- train/deploy matrix -----------------------------------------------------

CELLS = ("TGDG", "TGDE", "TEDE", "TEDG")
METRIC_COLUMNS = ("offroad", "otherlane", "either", "success", "no_collision", "score", "dist")


@dataclass(frozen=True)
class MatrixJob:
    config: AgentConfig
    seed: int
    noise: NoiseConfig
    eval_noise: NoiseConfig
    episodes: int
    scenarios: tuple[Scenario, ...] = SCENARIO_ROTATION
    track: TrackSpec = TrackSpec()


def _run_matrix_job(job: MatrixJob) -> dict:
    """Train one model with and without noise, evaluate each under both inputs."""
    out = {}
    clean = NoiseConfig()
    for train_tag, train_noise in (("TG", clean), ("TE", job.noise)):
        session = train(job.config, job.seed, job.scenarios, train_noise, job.track)
        rewards, tds = training_rewards(session)
        for deploy_tag, deploy_noise in (("DG", clean), ("DE", job.eval_noise)):
            recs = evaluate(session.agent, job.config, job.seed, job.episodes, job.scenarios,
                            deploy_noise, job.track)
            out[train_tag + deploy_tag] = dataclasses.asdict(summarize(recs))
        out[train_tag + "_train"] = {
            "rewards": rewards.tolist(),
            "td_errors": tds.tolist(),
            "n_components": session.agent.n_components,
        }
    out["seed"] = job.seed
    return out


def run_matrix(config: AgentConfig, seeds: Sequence[int], noise: NoiseConfig, episodes: int,
               scenarios: Sequence[Scenario] = SCENARIO_ROTATION, track: TrackSpec = TrackSpec(),
               jobs: int = 1) -> list[dict]:
    if len(seeds) < 2:
        raise ValueError("the matrix needs at least two seeds")
    work = [MatrixJob(config, int(s), noise, noise, episodes, tuple(scenarios), track) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_matrix_job, work))
    results = []
    for job in work:
        log.info("matrix: seed %d", job.seed)
        results.append(_run_matrix_job(job))
    return results


def matrix_report(results: Sequence[dict]) -> dict:
    """Per-cell per-model rows, averages, score/dist spread and the best model."""
    report = {}
    for cell in CELLS:
        rows = [{"seed": r["seed"], **{k: r[cell][k] for k in METRIC_COLUMNS}} for r in results]
        scores = [row["score"] for row in rows]
        best = rows[int(np.argmax(scores))]
        report[cell] = {
            "models": rows,
            "average": {k: float(np.mean([row[k] for row in rows])) for k in METRIC_COLUMNS},
            "score_std": std(scores),
            "dist_std": std([row["dist"] for row in rows]),
            "best": best,
        }
    return report


def report_table(report: dict) -> str:
    """Markdown table laid out like the benchmark table: average and best per cell."""
    head = "| Model | | Offroad | Otherlane | Either | Success | No collision | Score | Dist[m] |"
    lines = [head, "|" + "---|" * 9]
    for cell in CELLS:
        c = report[cell]
        for label, row in (("average", c["average"]), ("best model", c["best"])):
            score = f"{row['score']:.2f}"
            dist = f"{row['dist']:.0f}"
            if label == "average":
                score += f" (±{c['score_std']:.2f})"
                dist += f" (±{c['dist_std']:.0f})"
            lines.append(
                f"| {cell} | {label} | {100 * row['offroad']:.1f}% | {100 * row['otherlane']:.1f}% | "
                f"{100 * row['either']:.1f}% | {100 * row['success']:.1f}% | "
                f"{100 * row['no_collision']:.1f}% | {score} | {dist} |"
            )
    return "\n".join(lines) + "\n"


def summary_row(summary: MetricSummary) -> dict:
    return {k: getattr(summary, k) for k in METRIC_COLUMNS}
