import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayesdrive.core import (
    Action,
    AgentConfig,
    ConfigError,
    Schedule,
    config_to_mapping,
    decay_step,
    dump_config,
    load_config,
)


def test_decay_step_first_alpha_step():
    assert decay_step(0.99, 1e-5, 0.01) == pytest.approx(0.9899902, abs=1e-12)


def test_decay_step_fixed_points():
    assert decay_step(0.3, 0.0, 0.9) == 0.3
    assert decay_step(0.9, 0.4, 0.9) == 0.9


def test_table_defaults():
    cfg = load_config("")
    assert cfg.gamma == 0.9
    assert (cfg.t_lower, cfg.t_upper) == (-10.0, -5.0)
    assert cfg.reward_coefficients == (50, 40, 30, 15, 10)
    assert cfg.t_max == 4500
    assert cfg.alpha == Schedule(0.99, 1e-5, 0.01)
    assert cfg.tau == Schedule(0.5, 7e-3, 0.99)
    assert cfg.rho == Schedule(0.1, 3e-7, 0.01)


def test_action_set():
    assert [a.name for a in Action] == ["FORWARD", "TURN_RIGHT", "TURN_LEFT", "BACKWARD"]


def test_gamma_out_of_range_names_field():
    with pytest.raises(ConfigError) as err:
        load_config("gamma: 1.5\n")
    assert err.value.path == "gamma"
    assert "gamma" in str(err.value)


def test_partial_override():
    cfg = load_config("t_max: 100\n")
    assert cfg.t_max == 100
    assert cfg.replace(t_max=4500) == AgentConfig()


def test_threshold_order_enforced():
    with pytest.raises(ConfigError) as err:
        load_config("t_lower: -4\nt_upper: -5\n")
    assert "t_lower" in err.value.path


@pytest.mark.parametrize("doc, path", [
    ("alpha: {rate: 1.5}\n", "alpha.rate"),
    ("tau: {init: -0.1}\n", "tau.init"),
    ("r_k3: -1\n", "r_k3"),
    ("t_max: 0\n", "t_max"),
    ("t_max: 2.5\n", "t_max"),
    ("bogus: 1\n", "bogus"),
    ("alpha: {init: 0.5, speed: 2}\n", "alpha.speed"),
])
def test_invalid_fields(doc, path):
    with pytest.raises(ConfigError) as err:
        load_config(doc)
    assert err.value.path == path


def test_parse_failure():
    with pytest.raises(ConfigError):
        load_config("gamma: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config("- 1\n- 2\n")


def test_track_and_noise_sections_ignored_here():
    cfg = load_config("gamma: 0.8\ntrack: {curve_radius: 30}\nnoise: {flip_prob: 0.1}\n")
    assert cfg.gamma == 0.8


def test_config_round_trip_defaults():
    cfg = AgentConfig()
    assert load_config(dump_config(cfg)) == cfg


unit = st.floats(0.0, 1.0, allow_nan=False)
finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(gamma=st.floats(0.0, 0.999), t_l=st.floats(-100, -1), gap=st.floats(0.01, 50),
       t_max=st.integers(1, 10**6), init=unit, rate=unit, final=unit)
def test_config_round_trip(gamma, t_l, gap, t_max, init, rate, final):
    cfg = AgentConfig(gamma=gamma, t_lower=t_l, t_upper=t_l + gap, t_max=t_max,
                      tau=Schedule(init, rate, final))
    again = load_config(dump_config(cfg))
    assert again == cfg
    assert config_to_mapping(again) == config_to_mapping(cfg)


@settings(max_examples=500, deadline=None)
@given(x=finite, rate=unit, final=finite)
def test_decay_contraction(x, rate, final):
    y = decay_step(x, rate, final)
    assert abs(y - final) <= abs(x - final) * (1 + 1e-12) + 1e-9


@settings(max_examples=200, deadline=None)
@given(x=finite, rate=unit, final=finite)
def test_decay_monotone(x, rate, final):
    seq = [x]
    for _ in range(20):
        seq.append(decay_step(seq[-1], rate, final))
    tol = 1e-9 * (1 + abs(x) + abs(final))
    diffs = [b - a for a, b in zip(seq, seq[1:])]
    if x > final:
        assert all(d <= tol for d in diffs)
    else:
        assert all(d >= -tol for d in diffs)


def test_schedule_step_matches_closed_form():
    s = Schedule(0.5, 7e-3, 0.99)
    x = s.init
    for _ in range(1000):
        x = s.step(x)
    expected = 0.99 + (0.5 - 0.99) * (1 - 7e-3) ** 1000
    assert math.isclose(x, expected, rel_tol=1e-9)
