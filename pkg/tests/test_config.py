import textwrap

import numpy as np
import pytest
import tomli

from sampled_leader import config as cfgmod
from sampled_leader.errors import ConfigError

GOOD = textwrap.dedent("""
    name = "tiny"
    [[followers]]
    A = [[0.0, 1.0], [0.0, 0.0]]
    B = [[0.0], [1.0]]
    x0 = [0.0, 0.0]
    [[followers]]
    A = [[0.0, 1.0], [-1.0, 0.0]]
    B = [[0.0], [1.0]]
    x0 = [1.0, 0.0]
    [leader]
    kind = "waypoints"
    states = [[1.0, 0.0], [2.0, 0.0]]
    [network]
    edges = [[1, 0], [2, 1]]
    [schedule]
    period = 1.0
    epochs = 2
    [integration]
    steps_per_epoch = 300
""")


@pytest.mark.parametrize("name", cfgmod.BUILTIN)
def test_builtins_load_and_round_trip(name):
    cfg = cfgmod.load_config(name)
    assert cfg.name == name
    again = cfgmod.from_dict(tomli.loads(cfgmod.dump_config(cfg)))
    assert again == cfg
    sc, plan = cfgmod.build_scenario(cfg)
    assert (plan is not None) == (name == "waypoints")
    assert len(sc.followers) == (7 if name == "msd" else 6)


def test_builtin_scenario_details():
    msd, _ = cfgmod.build_scenario(cfgmod.load_config("msd"))
    assert msd.schedule.epochs >= 10 and not msd.homogeneous
    np.testing.assert_array_equal(msd.leader.x0, [1.0, 0.0])
    wp, plan = cfgmod.build_scenario(cfgmod.load_config("waypoints"))
    assert wp.homogeneous and wp.u_max == 5.0
    np.testing.assert_array_equal(wp.schedule.times, plan.times)
    air, _ = cfgmod.build_scenario(cfgmod.load_config("aircraft"))
    assert air.tracking == "output" and air.schedule.epochs >= 50
    assert air.schedule.period(0) == pytest.approx(0.1)


def test_minimal_file_parses():
    cfg = cfgmod.parse_config(GOOD, "tiny.toml")
    sc, plan = cfgmod.build_scenario(cfg, steps=20, deadzone=1)
    assert plan is None and sc.steps_per_epoch == 20 and sc.deadzone_steps == 1


def test_every_problem_is_reported():
    bad = GOOD.replace("[[0.0, 1.0], [-1.0, 0.0]]", "[[0.0, 0.0], [0.0, 0.0]]")
    bad = bad.replace("steps_per_epoch = 300", "steps_per_epoch = 0\ndeadzone_mode = \"skip\"")
    bad = bad.replace('name = "tiny"', 'name = "tiny"\ntracking = "sideways"')
    with pytest.raises(ConfigError) as info:
        cfgmod.parse_config(bad, "bad.toml")
    probs = info.value.problems
    assert "follower 2: (A,B) uncontrollable" in probs
    assert any("steps_per_epoch" in p for p in probs)
    assert any("deadzone_mode" in p for p in probs)
    assert any("tracking" in p for p in probs)
    assert str(info.value).startswith(f"bad.toml: {len(probs)} problems")


def test_sink_and_offset_problems():
    cyc = GOOD.replace("edges = [[1, 0], [2, 1]]", "edges = [[1, 2], [2, 1]]")
    with pytest.raises(ConfigError, match="network"):
        cfgmod.parse_config(cyc)
    off = GOOD + '[formation]\noffsets = {"1" = [0.0, 0.0]}\n'
    with pytest.raises(ConfigError, match="no offset for followers"):
        cfgmod.parse_config(off)


def test_parse_error_has_position():
    with pytest.raises(ConfigError, match=r"line 3"):
        cfgmod.parse_config('name = "x"\n\nsteps = = 3\n', "broken.toml")


def test_unknown_and_missing_tables():
    with pytest.raises(ConfigError) as info:
        cfgmod.from_dict({"name": "x", "colour": 1})
    probs = info.value.problems
    assert "unknown top-level key 'colour'" in probs
    assert sum("missing required table" in p for p in probs) == 4


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read file"):
        cfgmod.load_config("/nonexistent/scenario.toml")


def test_leader_inputs_and_perturbations():
    text = GOOD.replace('kind = "waypoints"\nstates = [[1.0, 0.0], [2.0, 0.0]]',
                        'kind = "lti"\nA = [[0.0, 1.0], [0.0, 0.0]]\nB = [[0.0], [1.0]]\n'
                        'x0 = [0.0, 0.0]\ninput = {kind = "sine", amplitude = 2.0, frequency = 3.0}')
    text += "[[perturbations]]\nepoch = 1\nfollowers = [2]\nmagnitude = 0.1\nseed = 4\n"
    sc, _ = cfgmod.build_scenario(cfgmod.parse_config(text), seed=9)
    assert sc.leader.u(np.pi / 6) == pytest.approx([2.0])
    assert sc.perturbations[0].seed == 9 and sc.perturbations[0].followers == [2]
    bad = text.replace("epoch = 1", "epoch = 7")
    with pytest.raises(ConfigError, match="outside"):
        cfgmod.parse_config(bad)


def test_design_requires_double_integrators():
    text = "u_max = 1.0\n" + GOOD.replace("period = 1.0\nepochs = 2", "design = true")
    with pytest.raises(ConfigError, match="follower 2: arrival design needs double-integrator"):
        cfgmod.parse_config(text)
