"""Moment estimators of the conditional variances, with jackknife errors."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError

MIN_SHOTS = 1000


@dataclass(frozen=True)
class EstimateWithCI:
    value: float
    std_error: float
    n: int

    def z(self, reference):
        """Distance to ``reference`` in standard errors."""
        if self.std_error == 0:
            return 0.0 if self.value == reference else math.inf
        return (self.value - reference) / self.std_error

    def within(self, reference, k=3.0):
        return abs(self.z(reference)) <= k


def _columns(records):
    if hasattr(records, "alice_x"):
        return (np.asarray(records.alice_x), np.asarray(records.alice_p),
                np.asarray(records.bob_x), np.asarray(records.bob_p))
    rows = list(records)
    arr = np.array([(r.alice_x, r.alice_p, r.bob_x, r.bob_p) for r in rows], dtype=float)
    return tuple(arr.T) if len(rows) else (np.empty(0),) * 4


def _jackknife(theta_full, theta_loo):
    n = len(theta_loo)
    se = math.sqrt((n - 1) / n * np.sum((theta_loo - theta_loo.mean()) ** 2))
    return theta_full, se


def _conditional(aa, ab, bb, which):
    if which == "ab":
        return aa - ab ** 2 / bb
    return bb - ab ** 2 / aa


def estimate_conditional_variances(records):
    """Plug-in V_A|B and V_B|A from raw second moments, X and P averaged.

    ``V_A|B = <a^2> - <ab>^2/<b^2>`` and ``V_B|A = <b^2> - <ab>^2/<a^2>``
    with ``a`` Alice's drawn value and ``b`` Bob's reading.  Standard errors
    come from the delete-one jackknife, evaluated in closed form from the
    moment sums.  Accepts a ShotBatch or an iterable of ShotRecords.
    """
    ax, ap, bx, bp = _columns(records)
    n = len(ax)
    if n < MIN_SHOTS:
        raise EstimationError(f"need at least {MIN_SHOTS} shots, got {n}")
    results = {}
    for which in ("ab", "ba"):
        full, loo = 0.0, np.zeros(n)
        for a, b in ((ax, bx), (ap, bp)):
            s_aa, s_ab, s_bb = a @ a, a @ b, b @ b
            if s_aa == 0 or s_bb == 0:
                raise EstimationError("zero-variance quadrature; conditional variance undefined")
            full += _conditional(s_aa / n, s_ab / n, s_bb / n, which) / 2
            loo += _conditional((s_aa - a * a) / (n - 1), (s_ab - a * b) / (n - 1),
                                (s_bb - b * b) / (n - 1), which) / 2
        value, se = _jackknife(full, loo)
        results[which] = EstimateWithCI(float(value), se, n)
    return results["ab"], results["ba"]


def quadrature_correlation(u, v):
    """Pearson correlation of two equally long samples."""
    return float(np.corrcoef(u, v)[0, 1])
