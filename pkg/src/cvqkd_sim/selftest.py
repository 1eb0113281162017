"""Fast invariant suite behind ``cvqkd-sim selftest``."""
from __future__ import annotations

import math

import numpy as np

from . import security as sec
from .attack import Optics, TargetQuadratures, attack_grid, failure_probability, reproduce_target
from .protocol import ScenarioConfig, monitor_verdict, simulate
from .sim import crossover_losses, run_scenario, threshold_identities, vnb_sweep
from .splitter import (
    main_splitter,
    monitor_splitter,
    monitor_transmission,
    transmission,
    wavelength_for_transmission,
)


def _splitter():
    m, t = main_splitter(), monitor_splitter()
    ok = abs(transmission(m, 1550.0) - 0.5) < 1e-12
    ok &= abs(monitor_transmission(m, t, 1550.0) - 0.9) < 1e-12
    for k in range(3):
        for rising in (True, False):
            for target in (0.1, 0.5, 0.99):
                lam = wavelength_for_transmission(m, target, k, rising)
                ok &= abs(transmission(m, lam) - target) < 1e-9
    return bool(ok), "calibration and inversion"


def _vnb():
    r = vnb_sweep()
    return r["within_bound"], f"max vnb {r['max_vnb']:.5f}"


def _erfc():
    p = failure_probability(11.0)
    return abs(p - 1.637e-9) <= 0.001e-9, f"erfc(20/sqrt(22)) = {p:.4e}"


def _crossover():
    dr, rr = crossover_losses()
    return abs(dr - 0.58) <= 0.02 and abs(rr - 0.58) <= 0.02, f"DR {dr:.4f} dB, RR {rr:.4f} dB"


def _identities():
    worst = threshold_identities()
    return max(worst.values()) <= 1e-9, f"worst residual {max(worst.values()):.2e}"


def _attack_solutions():
    grid = attack_grid()
    rng = np.random.default_rng(7)
    worst_fit, worst_mon = 0.0, 0.0
    for x, p in rng.normal(0, math.sqrt(11), (200, 2)):
        sol = grid.solve(TargetQuadratures(x, p))
        rx, rp = reproduce_target(sol, grid.lo_photons)
        worst_fit = max(worst_fit, math.hypot(rx - x, rp - p) / math.hypot(x, p))
        worst_mon = max(worst_mon, abs(sol.monitor_sum() / grid.monitor_target - 1))
    return worst_fit <= 1e-6 and worst_mon <= 1e-3, f"fit {worst_fit:.1e}, monitor {worst_mon:.1e}"


def _monte_carlo():
    res = run_scenario(ScenarioConfig(shots=100_000, eta=0.875, seed=3))
    s = res.summary
    return abs(s["z_ab"]) <= 4 and abs(s["z_ba"]) <= 4, f"z_ab {s['z_ab']:.2f}, z_ba {s['z_ba']:.2f}"


def _countermeasure():
    cfg = ScenarioConfig(shots=100, attack_enabled=True, filter_enabled_probability=0.5, seed=5)
    quiet = ScenarioConfig(shots=2000, attack_enabled=True, seed=5)
    alarm = monitor_verdict(simulate(cfg), cfg)["alarm"]
    silent = not monitor_verdict(simulate(quiet), quiet)["alarm"]
    return alarm and silent, f"filtered alarm={alarm}, unfiltered silent={silent}"


CHECKS = [
    ("splitter", _splitter),
    ("vnb_bound", _vnb),
    ("failure_probability", _erfc),
    ("crossover", _crossover),
    ("threshold_identities", _identities),
    ("attack_solutions", _attack_solutions),
    ("monte_carlo", _monte_carlo),
    ("countermeasure", _countermeasure),
]


def run_selftest():
    """Run every check; returns a list of (name, passed, detail)."""
    results = []
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # a crash is a failed invariant, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results
