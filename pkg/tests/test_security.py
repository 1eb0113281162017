import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvqkd_sim import security as sec
from cvqkd_sim.errors import DomainError, InapplicableError


def test_total_added_noise():
    assert sec.total_added_noise(1, 0) == 0
    assert sec.total_added_noise(0.5, 0.01) == pytest.approx(1.01)
    assert sec.total_added_noise(0.875, 0.01) == pytest.approx(0.125 / 0.875 + 0.01)
    assert sec.total_added_noise(0.875, 0.01) == pytest.approx(0.152857, abs=1e-6)
    with pytest.raises(DomainError):
        sec.total_added_noise(0, 0.01)
    with pytest.raises(DomainError):
        sec.total_added_noise(1.2, 0.01)


def test_key_rates_at_ideal_channel():
    assert sec.key_rate_dr(11, 1, 0) == pytest.approx(math.log2(6), abs=1e-12)
    assert sec.key_rate_rr(11, 1, 0) == pytest.approx(math.log2(6), abs=1e-12)
    assert sec.key_rate_dr(11, 1, 0) == pytest.approx(2.58496, abs=1e-5)


@pytest.mark.parametrize("eta", [0.7, 0.8, 0.99])
@pytest.mark.parametrize("V", [5, 11, 40])
def test_dr_root_is_chi_max(V, eta):
    assert sec.key_rate_dr(V, eta, sec.chi_max_dr(eta)) == pytest.approx(0, abs=1e-9)


@pytest.mark.parametrize("eta", [0.1, 0.5, 0.9])
@pytest.mark.parametrize("V", [5, 11, 40])
def test_rr_root_is_chi_max(V, eta):
    assert sec.key_rate_rr(V, eta, sec.chi_max_rr(eta, V)) == pytest.approx(0, abs=1e-9)


def test_chi_max_values():
    assert sec.chi_max_dr(2 / 3) == pytest.approx(0.5, abs=1e-12)
    assert sec.chi_max_dr(1) == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-12)
    assert sec.chi_max_rr(1, 11) == pytest.approx((math.sqrt(584) - 12) / 22, abs=1e-12)
    assert sec.chi_max_rr(1, 11) == pytest.approx(0.55300, abs=1e-5)
    with pytest.raises(InapplicableError):
        sec.chi_max_dr(0.5)
    with pytest.raises(InapplicableError):
        sec.chi_max_rr(0, 11)


def test_normal_variances():
    assert sec.v_ab_normal(11, 1, 0) == pytest.approx(5 / 3)
    assert sec.v_ba_normal(1, 0) == 1


def test_v_ba_normal_simplifies(rng):
    for eta, eps in zip(rng.uniform(0.05, 1, 5), rng.uniform(0, 0.2, 5)):
        chi = sec.total_added_noise(eta, eps)
        assert sec.v_ba_normal(eta, chi) == pytest.approx(1 + eta * eps / 2, abs=1e-12)


def test_max_variances():
    assert sec.v_ab_max(11, 1) == pytest.approx(10 * (math.sqrt(5) + 3) / (math.sqrt(5) + 23))
    assert sec.v_ab_max(11, 1) == pytest.approx(2.0748, abs=1e-4)
    assert sec.v_ba_max(11, 1) == pytest.approx((math.sqrt(584) + 32) / 44)
    assert sec.v_ba_max(11, 1) == pytest.approx(1.27650, abs=1e-5)


@settings(max_examples=200, deadline=None)
@given(V=st.floats(1.01, 100), eta=st.floats(0.6667, 0.9999))
def test_thresholds_are_normal_variances_at_chi_max(V, eta):
    assert sec.v_ab_max(V, eta) == pytest.approx(
        sec.v_ab_normal(V, eta, sec.chi_max_dr(eta)), abs=1e-9)
    assert sec.v_ba_max(V, eta) == pytest.approx(
        sec.v_ba_normal(eta, sec.chi_max_rr(eta, V)), abs=1e-9)
    assert sec.key_rate_dr(V, eta, sec.chi_max_dr(eta)) == pytest.approx(0, abs=1e-9)


def test_attack_variances():
    assert sec.v_ab_attack(11, 1, 0.13) == pytest.approx(22.6 / 12.26)
    assert sec.v_ab_attack(11, 1, 0.13) == pytest.approx(1.84339, abs=1e-5)
    assert sec.v_ba_attack(1, 0) == 1
    # printed ceiling is 1.9; the formula gives ~1.93 at the DR edge
    assert sec.v_ab_attack(11, 2 / 3, 0.13) == pytest.approx(1.929, abs=1e-3)
    assert sec.v_ab_attack(11, 2 / 3, 0.13) <= 1.95


def test_attack_stays_below_thresholds():
    eta = np.linspace(2 / 3 + 1e-9, 1 - 1e-9, 2001)
    for e in eta:
        assert sec.v_ab_attack(11, e, 0.13) < sec.v_ab_max(11, e)
    for e in np.linspace(0.05 + 1e-9, 1 - 1e-9, 2001):
        assert sec.v_ba_attack(e, 0.13) < sec.v_ba_max(11, e)


def test_verdicts():
    eta = 0.875
    r = sec.security_verdict(11, eta, 0.01, vnb=0.13)
    assert (r.verdict_dr, r.verdict_rr) == (sec.SECURE, sec.SECURE)
    bad = sec.security_verdict(11, eta, 0.01, measured_v_ab=5.0, measured_v_ba=5.0)
    assert (bad.verdict_dr, bad.verdict_rr) == (sec.INSECURE, sec.INSECURE)
    assert sec.security_verdict(11, 0.5, 0.01).verdict_dr == sec.DR_INAPPLICABLE
    assert sec.security_verdict(11, 0.5, 0.01).v_ab_max is None


def test_report_serializes():
    r = sec.security_verdict(11, 0.9, 0.01, vnb=0.05)
    back = json.loads(r.to_json())
    assert back["verdict_rr"] == r.verdict_rr
    assert len(r.csv_row()) == len(sec.SecurityReport.csv_header())


def test_db_conversion():
    assert sec.eta_to_loss_db(sec.loss_db_to_eta(0.58)) == pytest.approx(0.58)
    assert sec.loss_db_to_eta(10) == pytest.approx(0.1)
