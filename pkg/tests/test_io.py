import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import LAGRANGE
from shapesphere import core
from shapesphere.core import EQUAL_MASSES, MassDistribution, PhaseState
from shapesphere.integrator import Trajectory, integrate
from shapesphere.io import (FULL_COLUMNS, PRESETS, REDUCED_COLUMNS, ConfigError, OutputError, RunConfig,
                            apply_overrides, atomic_write, dumps, make_manifest, read_json, read_table,
                            read_trajectory, read_trajectory_csv, read_trajectory_json, write_events_csv,
                            write_trajectory_csv, write_trajectory_json)
from shapesphere.reduced import ReducedState, integrate_reduced


def random_full(rng, n=25):
    t = np.cumsum(rng.uniform(0.01, 0.5, n))
    return Trajectory(t, rng.normal(size=(n, 12)) * 10.0 ** rng.integers(-8, 8, size=(n, 12)), "full",
                      MassDistribution(1, 2, 3))


def test_json_round_trip_bit_exact(rng, tmp_path):
    traj = random_full(rng)
    path = write_trajectory_json(traj, tmp_path / "t.json", {"x": 1})
    back = read_trajectory_json(path)
    assert back.kind == "full" and back.masses.as_tuple() == (1.0, 2.0, 3.0)
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.states, traj.states)
    for k in "HJPI":
        assert np.array_equal(back.diagnostics[k], traj.diagnostics[k])


def test_json_integrated_trajectory(tmp_path):
    traj = integrate(PhaseState(LAGRANGE, 1j * 3**-0.25 * LAGRANGE), EQUAL_MASSES, 3.0)
    back = read_trajectory(write_trajectory_json(traj, tmp_path / "a.json"))
    assert np.array_equal(back.states, traj.states) and back.termination == traj.termination


@settings(max_examples=200, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_csv_float_round_trip(x):
    from shapesphere.io import _fmt
    assert float(_fmt(x)) == x


def test_csv_round_trip(rng, tmp_path):
    traj = random_full(rng)
    back = read_trajectory_csv(write_trajectory_csv(traj, tmp_path / "t.csv"), MassDistribution(1, 2, 3))
    np.testing.assert_allclose(back.states, traj.states, rtol=1e-15, atol=0)
    np.testing.assert_allclose(back.times, traj.times, rtol=1e-15, atol=0)
    header, rows = read_table(tmp_path / "t.csv")
    assert header == FULL_COLUMNS and len(rows) == len(traj)


def test_csv_reduced(tmp_path):
    traj = integrate_reduced(ReducedState([0.3, 0.2, 0.9], [0, 0.1, 0]), EQUAL_MASSES, 1.0)
    path = write_trajectory_csv(traj, tmp_path / "r.csv")
    assert read_table(path)[0] == REDUCED_COLUMNS
    back = read_trajectory(path)
    assert back.kind == "reduced"
    np.testing.assert_allclose(back.states, traj.states, rtol=1e-15)


def test_empty_trajectory_header_only(tmp_path):
    traj = Trajectory(np.zeros(0), np.zeros((0, 12)), "full", EQUAL_MASSES)
    path = write_trajectory_csv(traj, tmp_path / "e.csv")
    assert path.read_text() == ",".join(FULL_COLUMNS) + "\n"
    assert len(read_trajectory_csv(path)) == 0


def test_bad_files(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(OutputError):
        read_trajectory(tmp_path / "x.csv")
    with pytest.raises(OutputError):
        read_trajectory(tmp_path / "x.txt")
    with pytest.raises(OutputError):
        read_trajectory(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(OutputError):
        read_json(tmp_path / "bad.json")


def test_events_csv(tmp_path):
    from shapesphere.syzygy import SyzygyEvent
    ev = [SyzygyEvent(0.5, np.array([1.0, 2.0, 0.0]), 2), SyzygyEvent(1.5, np.array([1.0, 0.0, 0.0]), 3, True)]
    header, rows = read_table(write_events_csv(ev, tmp_path / "ev.csv"))
    assert header == ["t", "w1", "w2", "w3", "type", "grazing", "counted"]
    assert rows[0][4:] == ["2", "0", "1"] and rows[1][4:] == ["3", "1", "0"]


def test_atomic_write(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    atomic_write(p, "one")
    atomic_write(p, "two")
    assert p.read_text() == "two"
    assert [f.name for f in p.parent.iterdir()] == ["f.txt"]


def test_atomic_write_failure_leaves_target(tmp_path):
    p = tmp_path / "f.txt"
    atomic_write(p, "keep")

    with pytest.raises(TypeError):
        atomic_write(p, object())
    assert p.read_text() == "keep"
    assert [f.name for f in tmp_path.iterdir()] == ["f.txt"]


def test_atomic_write_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OutputError, match="file"):
        atomic_write(blocker / "child.txt", "x")


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError, match="rtol"):
        RunConfig.from_dict({"integrator": {"rtol": 1e-8}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"preset": "nope"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"preset": "free-fall-345", "initial": {"q": [0, 1, 2]}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"preset": "free-fall-345", "masses": [1, 2, 3]})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"initial": {"q": [0, 1]}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"T": -1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"integrator": {"method": "euler"}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"masses": [1, -1, 1]})


def test_presets_expand_to_documented_states():
    s = RunConfig.from_dict({"preset": "lagrange-circular"})
    st_ = s.initial_state()
    np.testing.assert_allclose(st_.q, LAGRANGE, atol=1e-15)
    np.testing.assert_allclose(st_.v, 1j * 3**-0.25 * LAGRANGE, atol=1e-15)
    assert s.duration() == pytest.approx(10 * 2 * math.pi * 3**0.25)
    e = RunConfig.from_dict({"preset": "euler-homothetic"}).initial_state()
    assert np.array_equal(e.q, [0, -1, 1]) and np.all(e.v == 0)
    f = RunConfig.from_dict({"preset": "free-fall-345"}).initial_state()
    r = np.sort(core.pairwise_separations(f.q))
    np.testing.assert_allclose(r, [3, 4, 5], rtol=1e-15)
    assert abs(core.center_of_mass(f.q, EQUAL_MASSES)) < 1e-15 and np.all(f.v == 0)
    g = RunConfig.from_dict({"preset": "figure-eight"}).initial_state()
    assert abs(core.angular_momentum(g, EQUAL_MASSES)) < 1e-15
    assert abs(core.linear_momentum(g, EQUAL_MASSES)) < 1e-15
    assert set(PRESETS) == {"lagrange-circular", "euler-homothetic", "free-fall-345", "figure-eight"}


def test_figure_eight_preset_is_periodic():
    cfg = RunConfig.from_dict({"preset": "figure-eight", "integrator": {"abs_tol": 1e-12, "rel_tol": 1e-12}})
    s = cfg.initial_state()
    traj = integrate(s, EQUAL_MASSES, cfg.duration(), cfg.integrator_config())
    assert np.max(np.abs(traj.states[-1] - s.pack())) < 1e-7


def test_initial_blocks():
    c = RunConfig.from_dict({"initial": {"q": [[0, 0], "1+1j", 2], "v": [0, 0, [0, 0.5]]}, "T": 1})
    s = c.initial_state()
    np.testing.assert_array_equal(s.q, [0, 1 + 1j, 2])
    np.testing.assert_array_equal(s.v, [0, 0, 0.5j])
    r = RunConfig.from_dict({"initial": {"w": [0.1, 0.2, 0.3], "wdot": [0, 0, -0.1]}, "T": 1})
    red = r.reduced_initial()
    np.testing.assert_array_equal(red.w, [0.1, 0.2, 0.3])
    full = r.initial_state()
    from shapesphere.projection import project, pushforward_velocity
    np.testing.assert_allclose(project(full.q, EQUAL_MASSES), red.w, atol=1e-14)
    np.testing.assert_allclose(pushforward_velocity(full, EQUAL_MASSES), red.wdot, atol=1e-14)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({}).initial_state()


def test_config_hash_deterministic(tmp_path):
    a = RunConfig.from_dict({"preset": "free-fall-345", "T": 2})
    b = RunConfig.from_dict({"T": 2.0, "preset": "free-fall-345", "output": {}})
    assert a.config_hash() == b.config_hash()
    c = RunConfig.from_dict({"preset": "free-fall-345", "T": 2.5})
    assert a.config_hash() != c.config_hash()
    (tmp_path / "c.yaml").write_text("preset: free-fall-345\nT: 2\n")
    assert RunConfig.from_file(tmp_path / "c.yaml").config_hash() == a.config_hash()


def test_from_file_errors(tmp_path):
    with pytest.raises(OutputError):
        RunConfig.from_file(tmp_path / "none.yaml")
    (tmp_path / "bad.yaml").write_text("a: [1,\n")
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "bad.yaml")


def test_overrides():
    d = apply_overrides({"preset": "free-fall-345"}, ["integrator.rel_tol=1e-8", "T=3", "output.figures=false"])
    cfg = RunConfig.from_dict(d)
    assert cfg.integrator_config().rel_tol == 1e-8 and cfg.T == 3.0
    assert cfg.section("output")["figures"] is False
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_manifest_contents():
    from shapesphere import __version__
    cfg = RunConfig.from_dict({"preset": "free-fall-345"})
    man = make_manifest("simulate", cfg)
    assert man["version"] == __version__ and man["config_hash"] == cfg.config_hash()
    assert man["command"] == "simulate"
    assert dumps(man) == dumps(make_manifest("simulate", cfg))
    json.loads(dumps(man))
