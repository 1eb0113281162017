"""Closed-form security quantities for heterodyne CV-QKD.

Individual Heisenberg-limited attacks, vacuum variance 1.  ``V`` is the
variance of Alice's thermal ensemble (modulation + 1), ``eta`` the
channel transmission and ``chi = (1 - eta)/eta + eps`` the total added
noise referred to the channel input.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

from .errors import DomainError, InapplicableError

DR_MIN_ETA = 2 / 3
SECURE = "secure"
INSECURE = "insecure"
DR_INAPPLICABLE = "dr-inapplicable"


def _check_eta(eta):
    if not 0 < eta <= 1:
        raise DomainError(f"channel transmission {eta!r} outside (0, 1]")


def loss_db_to_eta(loss_db):
    return 10 ** (-loss_db / 10)


def eta_to_loss_db(eta):
    return -10 * math.log10(eta)


def total_added_noise(eta, eps):
    _check_eta(eta)
    if eps < 0:
        raise DomainError("excess noise must be non-negative")
    return (1 - eta) / eta + eps


def key_rate_dr(V, eta, chi):
    _check_eta(eta)
    if V <= 1 or chi < 0:
        raise DomainError("need V > 1 and chi >= 0")
    num = (1 + chi) * (1 + eta * (V + chi))
    den = (1 + chi * V) * (1 + eta * (1 + chi))
    return math.log2(num / den)


def key_rate_rr(V, eta, chi):
    _check_eta(eta)
    if V <= 1 or chi < 0:
        raise DomainError("need V > 1 and chi >= 0")
    num = V + eta * (1 + chi * V)
    den = eta * (1 + chi * V) * (1 + eta * (1 + chi))
    return math.log2(num / den)


def chi_max_dr(eta):
    """Largest tolerable added noise in direct reconciliation (independent of V)."""
    if not DR_MIN_ETA - 1e-15 <= eta <= 1:
        raise InapplicableError(f"direct reconciliation threshold needs 2/3 < eta < 1, got {eta!r}")
    return (math.sqrt(4 * eta ** 2 + 1) - 1) / (2 * eta)


def chi_max_rr(eta, V):
    if not 0 < eta <= 1:
        raise InapplicableError(f"reverse reconciliation threshold needs 0 < eta < 1, got {eta!r}")
    return (math.sqrt((4 / eta ** 2 + 1) * V ** 2 - 2 * V + 1) - V - 1) / (2 * V)


def v_ab_normal(V, eta, chi):
    return (V - 1) * (eta * (chi + 1) + 1) / (eta * (V + chi) + 1)


def v_ba_normal(eta, chi):
    return 0.5 * (eta * (1 + chi) + 1)


def v_ab_max(V, eta):
    if not DR_MIN_ETA - 1e-15 <= eta <= 1:
        raise InapplicableError("direct reconciliation threshold needs 2/3 < eta < 1")
    s = math.sqrt(4 * eta ** 2 + 1)
    return (V - 1) * (s + 2 * eta + 1) / (s + 2 * eta * V + 1)


def v_ba_max(V, eta):
    _check_eta(eta)
    s = math.sqrt((4 + eta ** 2) * V ** 2 - 2 * eta ** 2 * V + eta ** 2)
    return (s + (eta + 2) * V - eta) / (4 * V)


def v_ab_attack(V, eta, vnb):
    """Alice's conditional variance when Bob reads Eve's resent values plus ``vnb`` noise."""
    return 2 * (vnb + eta) * (V - 1) / (2 * vnb + eta * (V + 1))


def v_ba_attack(eta, vnb):
    return eta + vnb


@dataclass
class SecurityReport:
    chi: float
    key_rate_dr: float
    key_rate_rr: float
    v_ab_normal: float
    v_ba_normal: float
    v_ab_attack: Optional[float]
    v_ba_attack: Optional[float]
    v_ab_max: Optional[float]
    v_ba_max: float
    verdict_dr: str
    verdict_rr: str

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def csv_header(cls):
        return [f.name for f in fields(cls)]

    def csv_row(self):
        return ["" if v is None else v for v in asdict(self).values()]


def security_verdict(V, eta, eps, vnb=None, measured_v_ab=None, measured_v_ba=None):
    """Assemble a SecurityReport and judge each reconciliation direction.

    The variance compared against the threshold is, in order of
    preference: a measured value, the attack prediction (when ``vnb`` is
    given), the normal prediction.  Secure means strictly below the max.
    """
    chi = total_added_noise(eta, eps)
    dr_ok = eta > DR_MIN_ETA
    ab_attack = v_ab_attack(V, eta, vnb) if vnb is not None else None
    ba_attack = v_ba_attack(eta, vnb) if vnb is not None else None
    ab_normal = v_ab_normal(V, eta, chi)
    ba_normal = v_ba_normal(eta, chi)
    ab_max = v_ab_max(V, eta) if dr_ok else None
    ba_max = v_ba_max(V, eta)

    def pick(measured, attack, normal):
        if measured is not None:
            return measured
        return attack if attack is not None else normal

    ab = pick(measured_v_ab, ab_attack, ab_normal)
    ba = pick(measured_v_ba, ba_attack, ba_normal)
    if dr_ok:
        verdict_dr = SECURE if ab < ab_max else INSECURE
    else:
        verdict_dr = DR_INAPPLICABLE
    verdict_rr = SECURE if ba < ba_max else INSECURE
    return SecurityReport(
        chi=chi,
        key_rate_dr=key_rate_dr(V, eta, chi),
        key_rate_rr=key_rate_rr(V, eta, chi),
        v_ab_normal=ab_normal,
        v_ba_normal=ba_normal,
        v_ab_attack=ab_attack,
        v_ba_attack=ba_attack,
        v_ab_max=ab_max,
        v_ba_max=ba_max,
        verdict_dr=verdict_dr,
        verdict_rr=verdict_rr,
    )
