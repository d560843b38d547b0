"""Command-line entry point: train, eval, matrix and export.

Exit codes: 0 success, 1 usage, 2 config, 3 I/O.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from bayesdrive import evalkit
from bayesdrive.core import AgentConfig, ConfigError, config_from_mapping
from bayesdrive.experiment import (
    CheckpointError,
    TrainingSession,
    evaluate,
    load_checkpoint,
    matrix_report,
    report_table,
    run_matrix,
    save_checkpoint,
    training_rewards,
)
from bayesdrive.perception import NoiseConfig
from bayesdrive.simworld import scenario_list, track_spec_from_mapping

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
QUICK_T_MAX = 300
QUICK_EPISODES = 6

log = logging.getLogger("bayesdrive")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser, noise: bool = True) -> None:
    p.add_argument("--config", type=Path, help="YAML config; may carry track: and noise: sections")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", choices=("straight", "right", "left", "all"), default="all")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--quick", action="store_true", help=f"t_max={QUICK_T_MAX}, fewer episodes")
    if noise:
        p.add_argument("--noise-flip", type=float, default=None, help="per-pixel label flip probability")
        p.add_argument("--noise-blobs", type=float, default=None, help="mean spurious object blobs per frame")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bayesdrive", description="Bayesian TD driving agent on a 2-D simulator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one agent and write a checkpoint plus training log")
    _common(p)

    p = sub.add_parser("eval", help="greedy deployment of a checkpoint")
    p.add_argument("checkpoint", type=Path)
    _common(p)
    p.add_argument("--episodes", type=int, default=30)

    p = sub.add_parser("matrix", help="TG/TE x DG/DE comparison over several seeds")
    _common(p)
    p.add_argument("--seeds", type=int, default=9, help="number of models; seeds run from --seed upward")
    p.add_argument("--episodes", type=int, default=30)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("export", help="rewrite CSV and plot data from a saved episode file")
    p.add_argument("--input", type=Path, required=True, help="eval_episodes.json written by eval")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--prefix", default="eval")
    return parser


# -- config ----------------------------------------------------------------

def _read_document(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"parse failure: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, Mapping):
        raise ConfigError(str(path), "top level must be a mapping")
    return dict(doc)


def _noise(doc: Mapping[str, Any], args) -> NoiseConfig:
    section = dict(doc.get("noise") or {})
    extra = set(section) - {"flip_prob", "blob_rate", "blob_size"}
    if extra:
        raise ConfigError(f"noise.{sorted(extra)[0]}", "unknown key")
    if getattr(args, "noise_flip", None) is not None:
        section["flip_prob"] = args.noise_flip
    if getattr(args, "noise_blobs", None) is not None:
        section["blob_rate"] = args.noise_blobs
    try:
        return NoiseConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError("noise", str(exc)) from exc


def _setup(args) -> tuple[AgentConfig, Any, NoiseConfig, tuple]:
    doc = _read_document(args.config)
    cfg = config_from_mapping(doc)
    if args.quick:
        cfg = cfg.replace(t_max=min(cfg.t_max, QUICK_T_MAX))
    try:
        track = track_spec_from_mapping(doc.get("track"))
    except (TypeError, ValueError) as exc:
        raise ConfigError("track", str(exc)) from exc
    return cfg, track, _noise(doc, args), scenario_list(args.scenario)


def _episodes(args) -> int:
    n = QUICK_EPISODES if args.quick and args.episodes == 30 else args.episodes
    if n < 1:
        raise UsageError("--episodes must be at least 1")
    return n


# -- commands --------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    evalkit._write(path, evalkit._dump_json(obj))


def cmd_train(args) -> int:
    cfg, track, noise, scenarios = _setup(args)
    session = TrainingSession(cfg, args.seed, scenarios, noise, track)
    session.run_to_completion()
    rewards, tds = training_rewards(session)
    out = args.out
    try:
        save_checkpoint(session, out / "checkpoint.json")
    except OSError as exc:
        raise OSError(f"cannot write checkpoint: {exc}") from exc
    evalkit._write(out / "train_steps.csv", evalkit.steps_csv(session.records))
    _write_json(out / "train_curves.json", evalkit.convergence_curves(rewards.tolist(), tds.tolist()))
    n = len(rewards)
    k = min(500, n)
    print(f"trained {n} steps, {len(session.records)} episodes, {session.agent.n_components} components")
    print(f"mean reward first {k}: {rewards[:k].mean():.3f}  last {k}: {rewards[-k:].mean():.3f}")
    print(f"wrote {out / 'checkpoint.json'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    n = _episodes(args)
    _, track, noise, scenarios = _setup(args)
    try:
        session = load_checkpoint(args.checkpoint)
    except FileNotFoundError as exc:
        raise OSError(f"cannot read checkpoint {args.checkpoint}") from exc
    if args.config is None:
        track = session.track
    records = evaluate(session.agent, session.config, args.seed, n, scenarios, noise, track)
    paths = evalkit.export(records, args.out)
    _write_json(args.out / "eval_episodes.json", [r.to_dict() for r in records])
    doc = evalkit.summary_document(records)
    m = doc["metrics"]
    print(f"episodes {m['episodes']}  score {m['score']:.3f}  success {m['success']:.3f}  "
          f"no_collision {m['no_collision']:.3f}  either {m['either']:.3f}  dist {m['dist']:.0f} m")
    sp = doc["success_posterior"]
    print(f"success ~ Beta({sp['alpha']:g}, {sp['beta']:g}), mean {sp['mean']:.3f}")
    for cls, rate in doc["infractions_per_km"].items():
        bound = ">" if rate["unbounded"] else ""
        print(f"  km between {cls}: {bound}{rate['km_between']:.3f} ({rate['count']} events)")
    print(f"wrote {paths['summary']}")
    return EXIT_OK


def cmd_matrix(args) -> int:
    n = _episodes(args)
    if args.seeds < 2:
        raise UsageError("--seeds must be at least 2")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    cfg, track, noise, scenarios = _setup(args)
    if noise.is_clean:
        noise = NoiseConfig(0.05, 2.0)
    seeds = list(range(args.seed, args.seed + args.seeds))
    results = run_matrix(cfg, seeds, noise, n, scenarios, track, args.jobs)
    report = matrix_report(results)
    report["noise"] = dataclasses.asdict(noise)
    _write_json(args.out / "matrix.json", report)
    curves = {str(r["seed"]): {k: r[k] for k in ("TG_train", "TE_train")} for r in results}
    _write_json(args.out / "matrix_training.json", curves)
    table = report_table(report)
    evalkit._write(args.out / "matrix.md", table)
    print(table, end="")
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        raw = json.loads(args.input.read_text())
    except OSError as exc:
        raise OSError(f"cannot read {args.input}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(str(args.input), f"not an episode file ({exc})") from exc
    try:
        records = [evalkit.EpisodeRecord.from_dict(d) for d in raw]
    except (TypeError, KeyError) as exc:
        raise ConfigError(str(args.input), f"malformed episode record ({exc})") from exc
    if not records:
        raise UsageError(f"{args.input} holds no episodes")
    paths = evalkit.export(records, args.out, args.prefix)
    for p in paths.values():
        print(f"wrote {p}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "matrix": cmd_matrix, "export": cmd_export}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
