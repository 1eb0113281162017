import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvqkd_sim.errors import DomainError, InfeasibleError
from cvqkd_sim.splitter import (
    SplitterModel,
    main_splitter,
    monitor_splitter,
    monitor_transmission,
    principal_value_map,
    transmission,
    wavelength_for_transmission,
    zeros_of_transmission,
)

MAIN = main_splitter()
MON = monitor_splitter()


def test_calibration_point():
    assert transmission(MAIN, 1550.0) == pytest.approx(0.5, abs=1e-12)
    assert MAIN.reference_phase == pytest.approx(math.pi / 4, abs=1e-15)


def test_doubled_phase_gives_full_transmission():
    lam = 2 ** 0.4 * 1550.0
    assert lam == pytest.approx(2045.2, abs=0.05)
    assert transmission(MAIN, lam) == pytest.approx(1.0, abs=1e-12)


def test_zero_at_integer_phase():
    for k in (1, 2, 3):
        lam = (k * math.pi / MAIN.phase_coefficient) ** 0.4
        assert transmission(MAIN, lam) < 1e-25


def test_non_positive_wavelength_rejected():
    with pytest.raises(DomainError):
        transmission(MAIN, 0.0)
    with pytest.raises(DomainError):
        transmission(MAIN, np.array([1550.0, -1.0]))


def test_coupled_fraction_bounds_transmission():
    m = SplitterModel.calibrated(0.5, coupled_fraction=0.9)
    lam = np.linspace(500, 5000, 20001)
    t = transmission(m, lam)
    assert t.min() >= 0 and t.max() <= 0.9 + 1e-15
    assert transmission(m, 1550.0) == pytest.approx(0.5, abs=1e-12)


def test_inverse_examples():
    assert wavelength_for_transmission(MAIN, 0.5, 0, True) == pytest.approx(1550.0, abs=1e-9)
    lam = wavelength_for_transmission(MAIN, 0.0, 1, True)
    assert lam == pytest.approx((math.pi / MAIN.phase_coefficient) ** 0.4, rel=1e-14)
    assert transmission(MAIN, lam) < 1e-12
    with pytest.raises(InfeasibleError):
        wavelength_for_transmission(SplitterModel.calibrated(0.5, coupled_fraction=0.9), 0.95)


def test_falling_branch_sits_past_the_peak():
    rising = wavelength_for_transmission(MAIN, 0.5, 0, True)
    falling = wavelength_for_transmission(MAIN, 0.5, 0, False)
    peak = wavelength_for_transmission(MAIN, 1.0, 0, True)
    assert rising < peak < falling


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0.0, 1.0), k=st.integers(0, 2), rising=st.booleans(),
       frac=st.sampled_from([1.0, 0.9, 0.6]))
def test_round_trip(t, k, rising, frac):
    m = SplitterModel.calibrated(0.5 * frac, coupled_fraction=frac)
    target = t * frac
    if k == 0 and rising and target == 0:
        with pytest.raises(InfeasibleError):
            wavelength_for_transmission(m, target, k, rising)
        return
    lam = wavelength_for_transmission(m, target, k, rising)
    assert transmission(m, lam) == pytest.approx(target, abs=1e-9)
    phase = m.phase(lam)
    lo = k * math.pi + (0 if rising else math.pi / 2)
    assert lo - 1e-9 <= phase <= lo + math.pi / 2 + 1e-9


@settings(max_examples=100, deadline=None)
@given(lam=st.floats(1000.0, 4000.0), k=st.integers(1, 3))
def test_periodic_in_phase(lam, k):
    shifted = ((MAIN.phase(lam) + k * math.pi) / MAIN.phase_coefficient) ** 0.4
    assert transmission(MAIN, shifted) == pytest.approx(transmission(MAIN, lam), abs=1e-9)


def test_lipschitz_bound_on_grid():
    band = (1200.0, 4000.0)
    lam = np.linspace(*band, 200_001)
    t = transmission(MAIN, lam)
    # |dT/dlam| = F^2 |sin 2phi| * 2.5 A lam^1.5
    bound = MAIN.coupled_fraction * 2.5 * MAIN.phase_coefficient * band[1] ** 1.5
    assert np.max(np.abs(np.diff(t)) / np.diff(lam)) <= bound


def test_monitor_examples():
    assert monitor_transmission(MAIN, MON, 1550.0) == pytest.approx(0.9, abs=1e-12)
    lam_peak = wavelength_for_transmission(MAIN, 1.0, 0, True)
    assert monitor_transmission(MAIN, MON, lam_peak) == pytest.approx(0.36, abs=1e-12)
    assert principal_value_map(0.5, MAIN, MON) == pytest.approx(
        monitor_transmission(MAIN, MON, 1550.0), abs=1e-12)


def test_principal_branch_value_map_matches_phase_model():
    lam = np.linspace(800.0, wavelength_for_transmission(MAIN, 1.0, 0, True), 500)
    np.testing.assert_allclose(principal_value_map(transmission(MAIN, lam), MAIN, MON),
                               monitor_transmission(MAIN, MON, lam), atol=1e-12)


def test_value_map_disagrees_at_non_principal_zero():
    lam = wavelength_for_transmission(MAIN, 0.0, 1, True)
    assert principal_value_map(transmission(MAIN, lam), MAIN, MON) < 1e-20
    phase_model = monitor_transmission(MAIN, MON, lam)
    ratio = MON.phase_coefficient / MAIN.phase_coefficient
    assert phase_model == pytest.approx(math.sin(math.pi * ratio) ** 2, abs=1e-12)
    assert phase_model == pytest.approx(0.92, abs=0.005)


def test_mismatched_calibration_rejected():
    other = SplitterModel.calibrated(0.9, reference_wavelength=1310.0)
    with pytest.raises(DomainError):
        monitor_transmission(MAIN, other, 1550.0)


def test_zeros():
    z1 = (math.pi / MAIN.phase_coefficient) ** 0.4
    zeros = zeros_of_transmission(MAIN, (1200.0, 4000.0))
    assert any(abs(z - z1) < 1e-9 for z in zeros)
    assert zeros == sorted(zeros)
    for z in zeros:
        assert transmission(MAIN, z) < 1e-20
    assert zeros_of_transmission(MAIN, (1540.0, 1560.0)) == []
    assert zeros_of_transmission(MAIN, (z1 - 1, z1 + 1)) == pytest.approx([z1], abs=1e-9)


def test_zeros_match_brute_force_scan():
    band = (1000.0, 5000.0)
    lam = np.linspace(*band, 400_001)
    phase_mod = np.mod(MAIN.phase(lam), math.pi)
    # a zero sits where the wrapped phase jumps back down
    jumps = lam[1:][np.diff(phase_mod) < 0]
    zeros = zeros_of_transmission(MAIN, band)
    assert len(zeros) == len(jumps)
    np.testing.assert_allclose(zeros, jumps, atol=0.02)


def test_record_round_trip_is_exact():
    m = SplitterModel.calibrated(0.123456789012345678, reference_wavelength=1550.123,
                                 coupled_fraction=0.987654321)
    import json
    back = SplitterModel.from_record(json.loads(json.dumps(m.to_record())))
    assert back == m
