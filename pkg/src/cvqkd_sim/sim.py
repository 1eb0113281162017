"""Scenario runner, figure sweeps and threshold bounds."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import security as sec
from .attack import Optics, attack_grid, failure_probability, noise_padding
from .detection import residual_noise_variance
from .errors import EstimationError
from .estimators import estimate_conditional_variances, quadrature_correlation
from .protocol import monitor_verdict, pilot_vnb, simulate

log = logging.getLogger(__name__)

DEFAULT_V = 11.0
DEFAULT_EPS = 0.01
VNB_BOUND = 0.13


@dataclass
class ScenarioResult:
    config: object
    records: object
    report: sec.SecurityReport
    summary: dict = field(default_factory=dict)


def run_scenario(config, optics=None):
    """Simulate, estimate, and compare with the closed-form predictions."""
    optics = optics or Optics()
    log.info("simulating %d shots at %.4g dB (attack=%s)", config.shots, config.loss_db,
             config.attack_enabled)
    records = simulate(config, optics)
    try:
        v_ab, v_ba = estimate_conditional_variances(records)
    except EstimationError as exc:
        # records are still worth returning; the statistics are not
        log.warning("no variance estimates: %s", exc)
        v_ab = v_ba = None
    V, eta, eps = config.V, config.eta, config.excess_noise
    chi = sec.total_added_noise(eta, eps)
    summary = {
        "shots": len(records),
        "eta": eta,
        "loss_db": config.loss_db,
        "V": V,
        "excess_noise": eps,
        "v_ab": v_ab and v_ab.value,
        "v_ab_se": v_ab and v_ab.std_error,
        "v_ba": v_ba and v_ba.value,
        "v_ba_se": v_ba and v_ba.std_error,
        "monitor": monitor_verdict(records, config, optics),
    }
    measured = {"measured_v_ab": v_ab and v_ab.value, "measured_v_ba": v_ba and v_ba.value}
    if config.attack_enabled:
        mean_vnb = float(0.5 * (records.vnb_x.mean() + records.vnb_p.mean()))
        noise = mean_vnb
        if config.noise_padding_enabled:
            grid = attack_grid(config.lo_photons, config.intensity_cap, optics,
                               resolution=config.grid_resolution)
            # padding on X_E reaches Bob scaled by eta, like extra residual noise
            noise += eta * noise_padding(eta, V, eps, pilot_vnb(config, grid))
        pred_ab = sec.v_ab_attack(V, eta, noise)
        pred_ba = sec.v_ba_attack(eta, noise)
        report = sec.security_verdict(V, eta, eps, vnb=mean_vnb, **measured)
        summary.update({
            "mean_vnb": mean_vnb,
            "max_vnb": float(max(records.vnb_x.max(), records.vnb_p.max())),
            "fallback_fraction": float(records.attack_fallback.mean()),
            "predicted_v_ab": pred_ab,
            "predicted_v_ba": pred_ba,
            "eve_bob_correlation_x": quadrature_correlation(records.target_x, records.bob_x),
            "eve_bob_correlation_p": quadrature_correlation(records.target_p, records.bob_p),
        })
    else:
        report = sec.security_verdict(V, eta, eps, **measured)
        summary.update({
            "predicted_v_ab": sec.v_ab_normal(V, eta, chi),
            "predicted_v_ba": sec.v_ba_normal(eta, chi),
        })
    summary["z_ab"] = v_ab and v_ab.z(summary["predicted_v_ab"])
    summary["z_ba"] = v_ba and v_ba.z(summary["predicted_v_ba"])
    summary["verdict_dr"] = report.verdict_dr
    summary["verdict_rr"] = report.verdict_rr
    return ScenarioResult(config, records, report, summary)


SWEEP_COLUMNS = ("loss_db", "eta", "v_ab_max", "v_ab_normal", "v_ab_attack",
                 "v_ba_max", "v_ba_normal", "v_ba_attack", "crossover_dr_db", "crossover_rr_db")


@dataclass
class SweepTable:
    rows: list
    crossover_dr_db: float | None
    crossover_rr_db: float | None

    def write_csv(self, fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in self.rows:
            writer.writerow(["" if row[c] is None else repr(row[c]) for c in SWEEP_COLUMNS])

    def to_dict(self):
        return {"crossover_dr_db": self.crossover_dr_db,
                "crossover_rr_db": self.crossover_rr_db,
                "columns": list(SWEEP_COLUMNS),
                "rows": self.rows}


def _crossing(f, lo, hi):
    a, b = f(lo), f(hi)
    if a == 0:
        return lo
    if a * b > 0:
        return None
    return brentq(f, lo, hi, xtol=1e-14, rtol=1e-14)


def crossover_losses(V=DEFAULT_V, eps=DEFAULT_EPS, vnb=VNB_BOUND):
    """Loss in dB where the attacked and normal conditional variances meet, (DR, RR)."""
    eta = sec.loss_db_to_eta

    def dr(loss):
        e = eta(loss)
        return sec.v_ab_attack(V, e, vnb) - sec.v_ab_normal(V, e, sec.total_added_noise(e, eps))

    def rr(loss):
        e = eta(loss)
        return sec.v_ba_attack(e, vnb) - sec.v_ba_normal(e, sec.total_added_noise(e, eps))

    dr_edge = sec.eta_to_loss_db(sec.DR_MIN_ETA)
    return _crossing(dr, 1e-12, dr_edge - 1e-12), _crossing(rr, 1e-12, 30.0)


def sweep_figures(V=DEFAULT_V, eps=DEFAULT_EPS, vnb=VNB_BOUND, loss_grid=None):
    """Max / normal / attack conditional variances against channel loss.

    DR columns are left empty where eta <= 2/3, outside the DR threshold's
    validity.
    """
    if loss_grid is None:
        loss_grid = np.linspace(0.01, 5.0, 500)
    rows = []
    cross_dr, cross_rr = crossover_losses(V, eps, vnb)
    for loss in loss_grid:
        loss = float(loss)
        eta = sec.loss_db_to_eta(loss)
        chi = sec.total_added_noise(eta, eps)
        dr_ok = eta > sec.DR_MIN_ETA
        rows.append({
            "loss_db": loss,
            "eta": eta,
            "v_ab_max": sec.v_ab_max(V, eta) if dr_ok else None,
            "v_ab_normal": sec.v_ab_normal(V, eta, chi) if dr_ok else None,
            "v_ab_attack": sec.v_ab_attack(V, eta, vnb) if dr_ok else None,
            "v_ba_max": sec.v_ba_max(V, eta),
            "v_ba_normal": sec.v_ba_normal(eta, chi),
            "v_ba_attack": sec.v_ba_attack(eta, vnb),
            "crossover_dr_db": cross_dr,
            "crossover_rr_db": cross_rr,
        })
    return SweepTable(rows, cross_dr, cross_rr)


def vnb_sweep(points=201, cap=1e6, lo_photons=1e8):
    """Largest residual noise over a (T1, T2) grid with both pulses at the cap.

    The noise is increasing in both intensities, so the cap is the worst case.
    """
    t = np.linspace(0.0, 1.0, points)
    t1, t2 = np.meshgrid(t, t, indexing="ij")
    vx, vp = residual_noise_variance(t1, t2, cap, cap, lo_photons)
    worst = np.maximum(vx, vp)
    i, j = np.unravel_index(np.argmax(worst), worst.shape)
    return {"points": points, "cap": cap, "lo_photons": lo_photons,
            "max_vnb": float(worst.max()), "argmax_t1": float(t[i]), "argmax_t2": float(t[j]),
            "bound": VNB_BOUND, "within_bound": bool(worst.max() <= VNB_BOUND)}


def threshold_identities(V_values=None, eta_values=None):
    """Worst residuals of the key-rate roots and threshold/normal consistency."""
    V_values = np.linspace(2.0, 100.0, 10) if V_values is None else V_values
    eta_values = np.linspace(0.67, 0.99, 10) if eta_values is None else eta_values
    worst = {"key_rate_dr_root": 0.0, "key_rate_rr_root": 0.0, "v_ab_max_consistency": 0.0,
             "v_ba_max_consistency": 0.0}
    for V in V_values:
        for eta in eta_values:
            cd, cr = sec.chi_max_dr(eta), sec.chi_max_rr(eta, V)
            checks = {
                "key_rate_dr_root": sec.key_rate_dr(V, eta, cd),
                "key_rate_rr_root": sec.key_rate_rr(V, eta, cr),
                "v_ab_max_consistency": sec.v_ab_max(V, eta) - sec.v_ab_normal(V, eta, cd),
                "v_ba_max_consistency": sec.v_ba_max(V, eta) - sec.v_ba_normal(eta, cr),
            }
            for k, v in checks.items():
                worst[k] = max(worst[k], abs(v))
    return worst


def bounds_report(V=DEFAULT_V, cap=1e6, lo_photons=1e8, points=201):
    return {
        "vnb": vnb_sweep(points, cap, lo_photons),
        "failure_probability": {"V": V, "value": failure_probability(V),
                                "expression": "erfc(20/sqrt(2V))"},
        "threshold_identities": threshold_identities(),
        "crossover_db": dict(zip(("dr", "rr"), crossover_losses())),
    }
