import io
import json
import math

import numpy as np
import pytest

from cvqkd_sim.attack import Optics, select_ancilla_wavelength
from cvqkd_sim.detection import CoherentPulse, QuadratureSample
from cvqkd_sim.errors import ConfigError, DomainError
from cvqkd_sim.protocol import (
    ALARM,
    BLOCK_SIZE,
    CSV_COLUMNS,
    PASS,
    ScenarioConfig,
    ShotRecord,
    alice_prepare,
    bob_receive,
    channel_transmit,
    load_config,
    monitor_check,
    monitor_verdict,
    simulate,
)


def test_config_defaults_and_derived():
    cfg = ScenarioConfig()
    assert cfg.V == 11 and cfg.loss_db == 0
    cfg = ScenarioConfig.from_dict({"loss_db": 3.0})
    assert cfg.eta == pytest.approx(10 ** -0.3)
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("bad", [
    {"eta": 0}, {"eta": 1.2}, {"excess_noise": -0.1}, {"modulation_variance": 0},
    {"intensity_cap": 2e6, "lo_photons": 1e8}, {"shots": 0}, {"seed": -1},
    {"filter_enabled_probability": 1.5}, {"filter_passband": (1551, 1549)},
    {"detector_efficiency": 0}, {"workers": 0}, {"bogus": 1},
    {"loss_db": -1}, {"loss_db": 1, "eta": 0.5},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(bad)


def test_load_config_yaml_and_json(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("channel:\n  loss_db: 1.0\n  excess_noise: 0.02\nseed: 7\nshots: 5000\n")
    cfg = load_config(y)
    assert cfg.seed == 7 and cfg.excess_noise == 0.02 and cfg.loss_db == pytest.approx(1.0)
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"eta": 0.5, "attack_enabled": True}))
    assert load_config(j).attack_enabled
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "list.yaml")


def test_alice_prepare_statistics(rng):
    s = alice_prepare(10.0, rng, 400_000)
    se = 10 * math.sqrt(2 / 400_000)
    assert abs(s.x.var() - 10) < 4 * se and abs(s.p.var() - 10) < 4 * se
    assert abs(np.corrcoef(s.x, s.p)[0, 1]) < 0.01
    with pytest.raises(DomainError):
        alice_prepare(0, rng)


def test_channel_transmit(rng):
    n = 400_000
    s = QuadratureSample(rng.normal(0, math.sqrt(11), n), rng.normal(0, math.sqrt(11), n))
    out = channel_transmit(s, 0.5, 0.01, rng)
    # 0.5 * 11 + 1 - 0.5 + 0.005
    assert out.x.var() == pytest.approx(6.005, rel=4 * math.sqrt(2 / n))
    same = channel_transmit(s, 1.0, 0.0, rng)
    np.testing.assert_array_equal(same.x, s.x)
    with pytest.raises(DomainError):
        channel_transmit(s, 0.0, 0.01, rng)
    with pytest.raises(DomainError):
        channel_transmit(s, 0.5, -0.01, rng)


def test_bob_receive_genuine(rng):
    cfg = ScenarioConfig()
    n = 200_000
    zero = QuadratureSample(np.zeros(n), np.zeros(n))
    reading, count = bob_receive(zero, cfg, rng)
    # vacuum in, heterodyne out: variance (0 + 1) / 2
    assert reading.x.var() == pytest.approx(0.5, rel=0.02)
    assert count.mean() == pytest.approx(0.1 * cfg.lo_photons, rel=1e-4)


def test_bob_receive_filter_kills_offband(rng):
    cfg = ScenarioConfig()
    n = 1000
    pulses = [CoherentPulse(np.full(n, 1700.0), np.full(n, 1e6)),
              CoherentPulse(np.full(n, 1400.0), np.full(n, 1e6)),
              CoherentPulse(np.full(n, select_ancilla_wavelength(Optics())), np.full(n, 1e8))]
    reading, count = bob_receive(pulses, cfg, rng, filtered=np.ones(n, bool))
    assert np.all(count == 0)
    np.testing.assert_allclose(reading.x, 0, atol=1e-9)


def test_monitor_check():
    assert monitor_check([1e7, 1e7], 1e7, 0.01) == PASS
    assert monitor_check([1.02e7], 1e7, 0.01) == ALARM
    assert monitor_check([0.995e7], 1e7, 0.01) == PASS
    with pytest.raises(ValueError):
        monitor_check([], 1e7, 0.01)


def test_csv_layout():
    batch = simulate(ScenarioConfig(shots=50, seed=1))
    buf = io.StringIO()
    batch.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 51
    row = lines[1].split(",")
    assert row[CSV_COLUMNS.index("eve_x")] == ""
    rec = batch.record(0)
    assert isinstance(rec, ShotRecord) and rec.eve_x is None
    assert float(row[1]) == rec.alice_x


def test_attack_records_have_eve_fields():
    batch = simulate(ScenarioConfig(shots=200, seed=3, attack_enabled=True, eta=0.8))
    assert batch.attacked and len(batch) == 200
    rec = batch.record(5)
    assert rec.eve_x is not None and not rec.attack_fallback


@pytest.mark.parametrize("attack", [False, True])
def test_determinism_across_workers(attack):
    base = dict(shots=3 * BLOCK_SIZE + 17, seed=99, attack_enabled=attack, eta=0.8,
                filter_enabled_probability=0.1)
    outs = []
    for workers in (1, 4):
        buf = io.StringIO()
        simulate(ScenarioConfig(workers=workers, **base)).write_csv(buf)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]
    buf = io.StringIO()
    simulate(ScenarioConfig(workers=1, **{**base, "seed": 100})).write_csv(buf)
    assert buf.getvalue() != outs[0]


def test_prefix_stability():
    a = simulate(ScenarioConfig(shots=BLOCK_SIZE + 10, seed=5))
    b = simulate(ScenarioConfig(shots=2 * BLOCK_SIZE, seed=5))
    np.testing.assert_array_equal(a.bob_x, b.bob_x[:BLOCK_SIZE + 10])


def test_monitor_does_not_see_unfiltered_attack():
    passes = 0
    for seed in range(100):
        cfg = ScenarioConfig(shots=200, seed=seed, attack_enabled=True, eta=0.8)
        passes += not monitor_verdict(simulate(cfg), cfg)["alarm"]
    assert passes >= 99


def test_filter_raises_alarm_under_attack():
    cfg = ScenarioConfig(shots=100, seed=11, attack_enabled=True,
                         filter_enabled_probability=0.5)
    verdict = monitor_verdict(simulate(cfg), cfg)
    assert verdict["alarm"] and verdict["filtered"] == ALARM
    # without Eve the filter is harmless: the real LO sits inside the passband
    cfg = ScenarioConfig(shots=100, seed=11, filter_enabled_probability=0.5)
    assert not monitor_verdict(simulate(cfg), cfg)["alarm"]


def test_monitor_fraction():
    assert Optics().monitor_fraction == pytest.approx(0.1)
