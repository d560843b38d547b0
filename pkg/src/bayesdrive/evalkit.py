"""Episode records, benchmark metrics and file export."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import betaln

DEFAULT_THRESHOLD = 0.20
CSV_HEADER = ("step", "episode", "r_o", "r_l", "reward", "td_error", "action", "n_components")
INFRACTION_CLASSES = ("opposite_lane", "offroad", "collision_static", "collision_dynamic")


@dataclass
class StepRecord:
    step: int
    state: list[float]
    action: int
    reward: float
    r_o: float
    r_l: float
    speed: float
    distance_delta: float
    collision: bool = False
    collision_kind: str | None = None
    td_error: float | None = None
    n_components: int = 0


@dataclass
class EpisodeRecord:
    episode: int
    scenario: str
    outcome: str  # success | timeout | collision | offroad
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def total_distance(self) -> float:
        return float(sum(s.distance_delta for s in self.steps))

    @property
    def collided(self) -> bool:
        return any(s.collision for s in self.steps)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeRecord":
        return cls(d["episode"], d["scenario"], d["outcome"], [StepRecord(**s) for s in d["steps"]])


@dataclass(frozen=True)
class MetricSummary:
    offroad: float
    otherlane: float
    either: float
    success: float
    no_collision: float
    score: float
    dist: float
    episodes: int = 0
    steps: int = 0


def score_of(either: float, success: float, no_collision: float) -> float:
    return ((1.0 - either) + success + no_collision) / 3.0


def summarize(records: Sequence[EpisodeRecord], threshold: float = DEFAULT_THRESHOLD) -> MetricSummary:
    """Per-step lane metrics above ``threshold`` and per-episode outcome rates."""
    if not records:
        raise ValueError("summarize needs at least one episode")
    ro = np.array([s.r_o for r in records for s in r.steps])
    rl = np.array([s.r_l for r in records for s in r.steps])
    n = ro.size
    if n:
        offroad = float(np.mean(ro > threshold))
        otherlane = float(np.mean(rl > threshold))
        either = float(np.mean((ro > threshold) | (rl > threshold)))
    else:
        offroad = otherlane = either = 0.0
    success = float(np.mean([r.outcome == "success" for r in records]))
    no_collision = float(np.mean([not r.collided for r in records]))
    return MetricSummary(
        offroad, otherlane, either, success, no_collision,
        score_of(either, success, no_collision),
        float(sum(r.total_distance for r in records)),
        len(records), n,
    )


# -- beta posterior ------------------------------------------------------

def beta_posterior(successes: int, failures: int) -> tuple[float, float]:
    """Posterior Beta parameters under the Jeffreys Beta(0.5, 0.5) prior."""
    if successes < 0 or failures < 0:
        raise ValueError("counts must be non-negative")
    return successes + 0.5, failures + 0.5


def beta_pdf(x, a: float, b: float):
    x = np.asarray(x, dtype=float)
    logp = (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)
    return np.exp(logp)


def beta_mean(a: float, b: float) -> float:
    return a / (a + b)


def rate_posterior_pdf(x, successes: int, failures: int):
    return beta_pdf(x, *beta_posterior(successes, failures))


# -- infractions per km --------------------------------------------------

@dataclass(frozen=True)
class InfractionRate:
    km_between: float
    count: int
    unbounded: bool


def count_infractions(records: Iterable[EpisodeRecord], threshold: float = DEFAULT_THRESHOLD) -> dict[str, int]:
    """Count infraction events; a lane event is each entry into the violating state."""
    counts = dict.fromkeys(INFRACTION_CLASSES, 0)
    for rec in records:
        in_other = in_off = False
        for s in rec.steps:
            now_other = s.r_l > threshold
            now_off = s.r_o > threshold
            counts["opposite_lane"] += int(now_other and not in_other)
            counts["offroad"] += int(now_off and not in_off)
            in_other, in_off = now_other, now_off
            if s.collision:
                key = "collision_dynamic" if s.collision_kind == "dynamic" else "collision_static"
                counts[key] += 1
    return counts


def infractions_per_km(records: Sequence[EpisodeRecord], threshold: float = DEFAULT_THRESHOLD) -> dict[str, InfractionRate]:
    """Average kilometres driven between infractions of each class.

    A class with no events reports the total distance with ``unbounded`` set.
    """
    if not records:
        raise ValueError("infractions_per_km needs at least one episode")
    km = sum(r.total_distance for r in records) / 1000.0
    return rates_from_counts(km, count_infractions(records, threshold))


def rates_from_counts(km: float, counts: dict[str, int]) -> dict[str, InfractionRate]:
    out = {}
    for cls in INFRACTION_CLASSES:
        c = counts.get(cls, 0)
        out[cls] = InfractionRate(km / c, c, False) if c else InfractionRate(km, 0, True)
    return out


# -- export --------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def steps_csv(records: Sequence[EpisodeRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in records:
        for s in rec.steps:
            w.writerow([_fmt(v) for v in (s.step, rec.episode, s.r_o, s.r_l, s.reward,
                                          s.td_error, s.action, s.n_components)])
    return buf.getvalue()


def read_steps_csv(text: str) -> list[dict]:
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        rows.append({
            "step": int(row["step"]),
            "episode": int(row["episode"]),
            "r_o": float(row["r_o"]),
            "r_l": float(row["r_l"]),
            "reward": float(row["reward"]),
            "td_error": float(row["td_error"]) if row["td_error"] else None,
            "action": int(row["action"]),
            "n_components": int(row["n_components"]),
        })
    return rows


def summary_document(records: Sequence[EpisodeRecord], threshold: float = DEFAULT_THRESHOLD) -> dict:
    """Everything the evaluation report needs, as plain JSON-ready data."""
    doc: dict = {"threshold": threshold}
    if not records:
        doc["episodes"] = 0
        return doc
    summary = summarize(records, threshold)
    n_ep = len(records)
    n_succ = sum(r.outcome == "success" for r in records)
    n_clean = sum(not r.collided for r in records)
    a, b = beta_posterior(n_succ, n_ep - n_succ)
    ca, cb = beta_posterior(n_clean, n_ep - n_clean)
    doc["metrics"] = asdict(summary)
    doc["success_posterior"] = {"alpha": a, "beta": b, "mean": beta_mean(a, b)}
    doc["no_collision_posterior"] = {"alpha": ca, "beta": cb, "mean": beta_mean(ca, cb)}
    doc["infractions_per_km"] = {k: asdict(v) for k, v in infractions_per_km(records, threshold).items()}
    doc["outcomes"] = {o: sum(r.outcome == o for r in records)
                       for o in ("success", "timeout", "collision", "offroad")}
    return doc


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def export(records: Sequence[EpisodeRecord], out_dir: str | Path, prefix: str = "eval",
           threshold: float = DEFAULT_THRESHOLD) -> dict[str, Path]:
    """Write ``<prefix>_steps.csv``, ``<prefix>_summary.json`` and ``<prefix>_plots.json``."""
    out = Path(out_dir)
    paths = {
        "steps": out / f"{prefix}_steps.csv",
        "summary": out / f"{prefix}_summary.json",
        "plots": out / f"{prefix}_plots.json",
    }
    _write(paths["steps"], steps_csv(records))
    _write(paths["summary"], _dump_json(summary_document(records, threshold)))
    _write(paths["plots"], _dump_json(plot_data(records)))
    return paths


def lane_histogram(records: Sequence[EpisodeRecord], bins: int = 20) -> dict:
    """Histogram of per-step opposite-lane and off-road fractions."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    rl = [s.r_l for r in records for s in r.steps]
    ro = [s.r_o for r in records for s in r.steps]
    return {
        "edges": edges.tolist(),
        "otherlane": np.histogram(rl, edges)[0].tolist(),
        "offroad": np.histogram(ro, edges)[0].tolist(),
    }


def posterior_curve(successes: int, failures: int, points: int = 99) -> dict:
    x = np.linspace(0.0, 1.0, points + 2)[1:-1]
    return {"x": x.tolist(), "pdf": rate_posterior_pdf(x, successes, failures).tolist()}


def plot_data(records: Sequence[EpisodeRecord]) -> dict:
    """Series behind the lane-position histograms and rate posteriors."""
    n = len(records)
    succ = sum(r.outcome == "success" for r in records)
    clean = sum(not r.collided for r in records)
    return {
        "lane_histogram": lane_histogram(records),
        "success_posterior": posterior_curve(succ, n - succ),
        "no_collision_posterior": posterior_curve(clean, n - clean),
    }


def moving_average(x: Sequence[float], window: int) -> list[float]:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return []
    window = max(1, min(window, x.size))
    c = np.cumsum(np.insert(x, 0, 0.0))
    head = c[1:window] / np.arange(1, window)
    tail = (c[window:] - c[:-window]) / window
    return np.concatenate([head, tail]).tolist()


def convergence_curves(rewards: Sequence[float], td_errors: Sequence[float], window: int = 100) -> dict:
    """Smoothed reward and TD-error traces from a training log."""
    return {
        "window": window,
        "reward": moving_average(rewards, window),
        "td_error": moving_average(td_errors, window),
    }


def std(values: Sequence[float]) -> float:
    return float(np.std(values)) if len(values) > 1 else 0.0

