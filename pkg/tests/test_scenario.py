import pytest

from uwbsim.scenario import ScenarioError, load_scenario, parse_scenario, valid_paths


def test_minimal_file_defaults():
    s = parse_scenario("[scenario]\nmode = wired_wired\n")
    assert s.mode == "wired_wired"
    assert s.n_bits == 2000 and s.n_avg == 1
    assert s.tank.f0 == pytest.approx(915e6, rel=1e-3)
    assert s.power_link is None


def test_all_wireless_requires_power_link():
    with pytest.raises(ScenarioError, match=r"\[power_link\]"):
        parse_scenario("[scenario]\nmode = all_wireless\n")
    s = parse_scenario("[scenario]\nmode = all_wireless\n[power_link]\nk = 0.02\n")
    assert s.power_link.k == 0.02


def test_unknown_key_suggestions():
    with pytest.raises(ScenarioError, match="gain_cal"):
        parse_scenario("[scenario]\nmode=wired_wireless\n[channel]\nantena_gain = 3\n")
    with pytest.raises(ScenarioError, match="distance"):
        parse_scenario("[scenario]\nmode=wired_wireless\n[channel]\ndistanse = 3\n")
    with pytest.raises(ScenarioError, match="channel"):
        parse_scenario("[scenario]\nmode=wired_wired\n[chanel]\ndistance = 3\n")


def test_invalid_values_name_the_key():
    with pytest.raises(ScenarioError, match="channel.distance"):
        parse_scenario("[scenario]\nmode=wired_wired\n[channel]\ndistance = -1\n")
    with pytest.raises(ScenarioError, match="scenario.n_bits"):
        parse_scenario("[scenario]\nmode=wired_wired\nn_bits = 0\n")
    with pytest.raises(ScenarioError, match="scenario.mode"):
        parse_scenario("[scenario]\nmode=radio\n")
    with pytest.raises(ScenarioError, match="mode"):
        parse_scenario("[tank]\nL = 1e-9\n")
    with pytest.raises(ScenarioError, match="parse error"):
        parse_scenario("mode = wired_wired\n")


def test_with_param_and_seed():
    s = parse_scenario("[scenario]\nmode=wired_wireless\n")
    t = s.with_param("channel.distance", 2.0)
    assert t.channel.distance == 2.0 and s.channel.distance == 1.0
    u = s.with_seed(42)
    assert u.seed == 42 and u.channel.rng_seed == 42
    with pytest.raises(ScenarioError, match="valid paths"):
        s.with_param("channel.nope", 1)
    assert "tx.p_out" in valid_paths()


def test_p_out_max_and_inline_comments():
    s = parse_scenario("[scenario]\nmode=wired_wired\n[tx]\np_out = max   # mask-limited\n")
    assert s.get("tx.p_out") == "max"


def test_load_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "absent.ini")


def test_shipped_scenarios_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "scenarios"
    modes = {load_scenario(p).mode for p in root.glob("*.ini")}
    assert modes == {"wired_wired", "wired_wireless", "all_wireless"}
