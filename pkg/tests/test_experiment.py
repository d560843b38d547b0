import copy
import json

import numpy as np
import pytest

from bayesdrive.core import AgentConfig
from bayesdrive.experiment import (
    CELLS,
    CheckpointError,
    TrainingSession,
    dumps_checkpoint,
    evaluate,
    load_checkpoint,
    matrix_report,
    report_table,
    run_matrix,
    save_checkpoint,
    train,
    training_rewards,
)
from bayesdrive.perception import NoiseConfig
from bayesdrive.simworld import Scenario

SHORT = AgentConfig().replace(t_max=200)


def flat_steps(session):
    return [s for rec in session.records for s in rec.steps]


def test_same_seed_same_log():
    a = train(SHORT, 3, noise=NoiseConfig(0.05, 2.0))
    b = train(SHORT, 3, noise=NoiseConfig(0.05, 2.0))
    assert flat_steps(a) == flat_steps(b)
    assert dumps_checkpoint(a) == dumps_checkpoint(b)


def test_different_seed_different_log():
    a, b = train(SHORT, 0), train(SHORT, 1)
    assert flat_steps(a) != flat_steps(b)


def test_resume_from_checkpoint_is_bitwise_identical(tmp_path):
    full = TrainingSession(SHORT, 5, noise=NoiseConfig(0.02, 1.0))
    full.run(200)

    part = TrainingSession(SHORT, 5, noise=NoiseConfig(0.02, 1.0))
    part.run(77)
    path = save_checkpoint(part, tmp_path / "ck.json")
    resumed = load_checkpoint(path)
    resumed.run(200 - 77)

    tail = [s for s in flat_steps(full) if s.step >= 77]
    assert flat_steps(resumed) == tail
    assert dumps_checkpoint(resumed) == dumps_checkpoint(full)


def test_checkpoint_round_trip_is_stable(tmp_path):
    s = TrainingSession(SHORT, 2)
    s.run(50)
    text = dumps_checkpoint(s)
    again = load_checkpoint(save_checkpoint(s, tmp_path / "a.json"))
    assert dumps_checkpoint(again) == text


def test_checkpoint_version_checked(tmp_path):
    s = TrainingSession(SHORT, 0)
    s.run(5)
    doc = json.loads(dumps_checkpoint(s))
    doc["format_version"] = 99
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="format_version"):
        load_checkpoint(p)
    p.write_text("{not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_training_log_is_contiguous():
    s = train(SHORT, 0)
    steps = flat_steps(s)
    assert [x.step for x in steps] == list(range(SHORT.t_max))
    r, td = training_rewards(s)
    assert r.shape == td.shape == (SHORT.t_max,)
    assert all(rec.outcome != "running" for rec in s.records[:-1])
    assert [rec.scenario for rec in s.records[:3]] == ["straight", "right", "left"]


def test_evaluate_leaves_agent_untouched():
    s = train(SHORT, 1)
    before = copy.deepcopy(s.agent.state_dict())
    recs = evaluate(s.agent, SHORT, 1, 4, noise=NoiseConfig(0.05, 2.0))
    assert len(recs) == 4
    assert s.agent.state_dict() == before
    assert all(st.td_error is None for rec in recs for st in rec.steps)
    assert evaluate(s.agent, SHORT, 1, 4, noise=NoiseConfig(0.05, 2.0)) == recs


def test_evaluate_needs_episodes():
    s = train(SHORT, 1)
    with pytest.raises(ValueError):
        evaluate(s.agent, SHORT, 1, 0)


def test_single_scenario_training():
    s = train(SHORT, 0, scenarios=(Scenario.LEFT_TURN,))
    assert {rec.scenario for rec in s.records} == {"left"}


def test_matrix_shape_and_table():
    cfg = AgentConfig().replace(t_max=60)
    results = run_matrix(cfg, [0, 1], NoiseConfig(0.05, 2.0), 2)
    assert [r["seed"] for r in results] == [0, 1]
    report = matrix_report(results)
    for cell in CELLS:
        rows = report[cell]["models"]
        assert len(rows) == 2
        assert report[cell]["average"]["score"] == pytest.approx(np.mean([r["score"] for r in rows]))
        assert report[cell]["best"]["score"] == max(r["score"] for r in rows)
    table = report_table(report)
    assert table.count("\n") == 2 + 2 * len(CELLS)


def test_matrix_needs_two_seeds():
    with pytest.raises(ValueError):
        run_matrix(SHORT, [0], NoiseConfig(), 1)
