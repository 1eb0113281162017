"""Eve's wavelength attack on a heterodyne receiver.

Eve measures Alice's pulse by heterodyne and resends three coherent
pulses at distinct wavelengths: a fake signal (lambda1), a fake LO
(lambda2) and an ancilla (lambda3).  The receiver's 50:50 coupler splits
each pulse by its own wavelength-dependent ratio, so with no interference
between colours Bob's difference currents become linear in the two
transmitted intensities.  Eve picks wavelengths and intensities so that

* the x/p readings equal her target ``sqrt(eta) * (X_E, P_E)``,
* the monitor tap sees exactly the genuine LO share, the ancilla (which
  sits at a zero of the main coupler) topping up the balance,
* the residual noise on Bob's readings is as small as the caps allow.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .detection import (
    INVISIBLE_TRANSMISSION,
    heterodyne,
    residual_noise_variance,
)
from .errors import DomainError, InfeasibleError
from .splitter import (
    DEFAULT_BAND_NM,
    main_splitter,
    monitor_splitter,
    monitor_transmission,
    transmission,
    wavelength_for_transmission,
    zeros_of_transmission,
)

DEFAULT_CAP = 1e6
DEFAULT_LO_PHOTONS = 1e8
MONITOR_SHARE = 5.0  # monitor-side contribution of each fake pulse <= 5 * cap
ANCILLA_BAND_NM = (1200.0, 4000.0)
MIN_DETERMINANT = 1e-9
FAILURE_THRESHOLD = 20.0


@dataclass(frozen=True)
class Optics:
    """Bob's two couplers plus the wavelength bands Eve's lasers may use."""

    main: object = field(default_factory=main_splitter)
    monitor: object = field(default_factory=monitor_splitter)
    band: tuple = DEFAULT_BAND_NM
    ancilla_band: tuple = ANCILLA_BAND_NM

    @property
    def monitor_fraction(self):
        """Share of the genuine LO reflected onto the monitor (0.1 for a 10:90 tap)."""
        return 1.0 - float(monitor_transmission(self.main, self.monitor,
                                                self.main.reference_wavelength))


@dataclass(frozen=True)
class TargetQuadratures:
    """The pair Bob must read, ``sqrt(eta) * X_E`` and ``sqrt(eta) * P_E``."""

    x_target: float
    p_target: float

    @classmethod
    def from_eve(cls, x_e, p_e, eta):
        return cls(math.sqrt(eta) * x_e, math.sqrt(eta) * p_e)


@dataclass
class AttackSolution:
    lambda1: float
    lambda2: float
    lambda3: float
    t1: float
    t2: float
    t3: float
    tp1: float
    tp2: float
    tp3: float
    i_sig: float
    i_lo: float
    i3_source: float
    vnb_x: float
    vnb_p: float

    @property
    def i_sig_source(self):
        return self.i_sig / self.tp1 if self.i_sig else 0.0

    @property
    def i_lo_source(self):
        return self.i_lo / self.tp2 if self.i_lo else 0.0

    def monitor_sum(self):
        return ((1 - self.tp1) * self.i_sig_source + (1 - self.tp2) * self.i_lo_source
                + (1 - self.tp3) * self.i3_source)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


class InfeasibleTarget(InfeasibleError):
    """No wavelength pair reaches the target under the caps.

    ``nearest`` is the target pulled back radially onto the reachable set;
    the caller falls back to plain intercept-resend.
    """

    def __init__(self, target, nearest):
        super().__init__(f"target ({target.x_target:.6g}, {target.p_target:.6g}) is unreachable")
        self.target = target
        self.nearest = nearest


def eve_intercept(state, rng):
    """Heterodyne of Alice's state right at her output; the variance becomes (V + 1)/2."""
    return heterodyne(state, rng)


def intensity_caps(tp, cap, monitor_share=MONITOR_SHARE):
    """Per-pulse ceiling on transmitted intensity: ``min(cap, share * T'/(1-T') * cap)``."""
    tp = np.asarray(tp, dtype=float)
    with np.errstate(divide="ignore"):
        monitor_cap = np.where(tp < 1, monitor_share * tp / np.where(tp < 1, 1 - tp, 1) * cap, np.inf)
    return np.minimum(cap, monitor_cap)


def failure_probability(V, threshold=FAILURE_THRESHOLD):
    """Probability that a Gaussian target of variance ``V`` leaves the reach, ``erfc(20/sqrt(2V))``."""
    if V <= 0:
        raise DomainError("variance must be positive")
    return math.erfc(threshold / math.sqrt(2 * V))


def noise_padding(eta, V, eps, vnb):
    """Extra variance Eve adds to X_E so that the attacked V_B|A matches the normal one.

    ``V`` is accepted for symmetry with the other threshold helpers; the
    B|A balance does not depend on it.
    """
    if not 0 < eta <= 1:
        raise DomainError("channel transmission outside (0, 1]")
    normal = 1 + eta * eps / 2
    return max(0.0, (normal - eta - vnb) / eta)


def select_ancilla_wavelength(optics):
    """Zero of the main coupler that sends the largest share to the monitor."""
    zeros = zeros_of_transmission(optics.main, optics.ancilla_band)
    if not zeros:
        raise InfeasibleError("no zero of the main coupler inside the ancilla band")
    share = [1 - float(monitor_transmission(optics.main, optics.monitor, z)) for z in zeros]
    best = int(np.argmax(share))
    if share[best] <= 0:
        raise InfeasibleError("ancilla cannot reach the monitor")
    return zeros[best]


class AttackGrid:
    """Precomputed (lambda1, lambda2) grid with per-direction Pareto fronts.

    For a cell the intensities ``I = M^-1 y`` scale linearly with the
    target ``y`` (in photon units, ``y = target * sqrt(lo)/2``), and so does
    the residual noise.  Along a fixed direction each cell therefore has a
    noise cost per unit radius and a maximal radius before a cap binds.
    Sorting by cost and keeping only cells that extend the reachable
    radius gives a short front per direction: the cheapest cell that
    reaches radius r is found by a search on it.  Shots are then solved
    exactly on a few front candidates, with a full scan over all cells
    when none of them fits.

    Instances are immutable after construction and safe to share.
    """

    def __init__(self, lo_photons=DEFAULT_LO_PHOTONS, cap=DEFAULT_CAP, optics=None,
                 resolution=96, n_angles=1024, monitor_share=MONITOR_SHARE):
        if resolution < 2:
            raise DomainError("resolution must be at least 2")
        self.optics = optics if optics is not None else Optics()
        self.lo_photons = float(lo_photons)
        self.cap = float(cap)
        self.resolution = resolution
        self.n_angles = n_angles
        self.y_scale = math.sqrt(self.lo_photons) / 2
        main, monitor = self.optics.main, self.optics.monitor

        lam = np.linspace(*self.optics.band, resolution)
        l1, l2 = (a.ravel() for a in np.meshgrid(lam, lam, indexing="ij"))
        t1, t2 = transmission(main, l1), transmission(main, l2)
        tp1 = monitor_transmission(main, monitor, l1)
        tp2 = monitor_transmission(main, monitor, l2)
        a1, b1 = (1 - t1) * (1 - 2 * t1), (1 - t2) * (2 * t2 - 1)
        a2, b2 = t1 * (1 - 2 * t1), t2 * (2 * t2 - 1)
        det = a1 * b2 - b1 * a2
        cap_s, cap_lo = intensity_caps(tp1, cap, monitor_share), intensity_caps(tp2, cap, monitor_share)
        keep = ((np.abs(l1 - l2) >= 1e-6) & (np.abs(det) >= MIN_DETERMINANT)
                & (cap_s > 0) & (cap_lo > 0))

        self.l1, self.l2 = l1[keep], l2[keep]
        self.t1, self.t2 = t1[keep], t2[keep]
        self.tp1, self.tp2 = tp1[keep], tp2[keep]
        self.cap_s, self.cap_lo = cap_s[keep], cap_lo[keep]
        det = det[keep]
        # M^-1 rows
        self.inv = np.stack([np.stack([b2[keep], -b1[keep]], -1),
                             np.stack([-a2[keep], a1[keep]], -1)], 1) / det[:, None, None]
        unit_x_s, unit_p_s = residual_noise_variance(self.t1, 0.5, 1.0, 0.0, self.lo_photons)
        unit_x_lo, unit_p_lo = residual_noise_variance(0.5, self.t2, 0.0, 1.0, self.lo_photons)
        self.noise_coef = np.stack([np.stack([unit_x_s, unit_x_lo], -1),
                                    np.stack([unit_p_s, unit_p_lo], -1)], 1)
        self.src_coef = np.stack([1 / self.tp1, 1 / self.tp2], -1)

        self.lambda3 = select_ancilla_wavelength(self.optics)
        self.t3 = float(transmission(main, self.lambda3))
        self.tp3 = float(monitor_transmission(main, monitor, self.lambda3))
        self.monitor_target = self.optics.monitor_fraction * self.lo_photons
        self._build_fronts()

    @property
    def n_cells(self):
        return len(self.l1)

    def _build_fronts(self):
        theta = 2 * np.pi * np.arange(self.n_angles) / self.n_angles
        fronts, reach = [], np.zeros(self.n_angles)
        for start in range(0, self.n_angles, 64):
            th = theta[start:start + 64]
            u = np.stack([np.cos(th), np.sin(th)])          # (2, A)
            w = np.einsum("cij,ja->cia", self.inv, u)        # (C, 2, A)
            ok = (w[:, 0] >= 0) & (w[:, 1] >= 0)
            noise = np.einsum("cij,cja->cia", self.noise_coef, w).max(axis=1)
            src = np.einsum("cj,cja->ca", self.src_coef, w)
            with np.errstate(divide="ignore"):
                rmax = np.minimum(
                    np.where(w[:, 0] > 0, self.cap_s[:, None] / w[:, 0], np.inf),
                    np.where(w[:, 1] > 0, self.cap_lo[:, None] / w[:, 1], np.inf))
            for a in range(len(th)):
                idx = np.flatnonzero(ok[:, a])
                if idx.size == 0:
                    fronts.append((np.empty(0, int), np.empty(0)))
                    continue
                order = idx[np.lexsort((src[idx, a], noise[idx, a]))]
                r = rmax[order, a]
                prev = np.concatenate([[-np.inf], np.maximum.accumulate(r)[:-1]])
                on_front = r > prev
                fronts.append((order[on_front], r[on_front]))
                reach[start + a] = r.max()
        width = max(len(c) for c, _ in fronts) + 1
        self.front_cell = np.full((self.n_angles, width), -1, dtype=np.int64)
        self.front_rmax = np.full((self.n_angles, width), np.inf)
        for a, (cells, rm) in enumerate(fronts):
            self.front_cell[a, :len(cells)] = cells
            self.front_rmax[a, :len(cells)] = rm
        self.reach_y = reach

    def reach(self):
        """Largest reachable target radius per grid direction, in sqrt(eta)*X_E units."""
        return self.reach_y / self.y_scale

    def _exact(self, cells, y):
        """Exact intensities, feasibility and ranking keys for candidate cells."""
        inv = self.inv[cells]                               # (..., 2, 2)
        i = np.einsum("...ij,...j->...i", inv, y)
        tol = 1e-12
        ok = ((cells >= 0) & (i[..., 0] >= 0) & (i[..., 1] >= 0)
              & (i[..., 0] <= self.cap_s[cells] * (1 + tol))
              & (i[..., 1] <= self.cap_lo[cells] * (1 + tol)))
        noise = np.einsum("...ij,...j->...i", self.noise_coef[cells], i).max(axis=-1)
        src = np.einsum("...j,...j->...", self.src_coef[cells], i)
        return i, ok, noise, src

    def _scan(self, y):
        cells = np.arange(self.n_cells)
        i, ok, noise, src = self._exact(cells, np.broadcast_to(y, (self.n_cells, 2)))
        if not ok.any():
            return -1
        idx = np.flatnonzero(ok)
        return int(idx[np.lexsort((src[idx], noise[idx]))[0]])

    def choose_cells(self, y):
        """Best grid cell per target row of ``y`` (shape (n, 2)); -1 where unreachable."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        n = len(y)
        r = np.hypot(y[:, 0], y[:, 1])
        k = np.rint(np.arctan2(y[:, 1], y[:, 0]) / (2 * np.pi) * self.n_angles).astype(np.int64)
        k %= self.n_angles
        width = self.front_cell.shape[1]
        cand = []
        for dk in (0, -1, 1):
            kk = (k + dk) % self.n_angles
            j = (self.front_rmax[kk] < r[:, None]).sum(axis=1)
            for dj in range(4):
                cand.append(self.front_cell[kk, np.minimum(j + dj, width - 1)])
        cand = np.stack(cand, axis=1)                      # (n, K)
        _, ok, noise, src = self._exact(np.where(cand >= 0, cand, 0),
                                        np.repeat(y[:, None, :], cand.shape[1], 1))
        ok &= cand >= 0
        noise = np.where(ok, noise, np.inf)
        order = np.lexsort((src, noise), axis=1)[:, 0] if n else np.empty(0, int)
        best = cand[np.arange(n), order]
        best = np.where(ok[np.arange(n), order], best, -1)
        for row in np.flatnonzero(best < 0):
            best[row] = self._scan(y[row])
        return best

    def solve_many(self, x_target, p_target):
        """Vectorized solver.  Returns a dict of per-target arrays plus a ``feasible`` mask.

        Targets at the origin get the trivial recipe: both fake pulses at
        balanced points of the coupler and no power.
        """
        x_target = np.asarray(x_target, dtype=float).ravel()
        p_target = np.asarray(p_target, dtype=float).ravel()
        y = np.stack([x_target, p_target], -1) * self.y_scale
        zero = (x_target == 0) & (p_target == 0)
        cells = np.full(len(y), -1, dtype=np.int64)
        if (~zero).any():
            cells[~zero] = self.choose_cells(y[~zero])
        feasible = zero | (cells >= 0)
        c = np.where(cells >= 0, cells, 0)
        i = np.einsum("nij,nj->ni", self.inv[c], y)
        i = np.where((cells >= 0)[:, None], i, 0.0)

        lam_bal = (wavelength_for_transmission(self.optics.main, 0.5, 0, True),
                   wavelength_for_transmission(self.optics.main, 0.5, 0, False))
        out = {
            "lambda1": np.where(zero, lam_bal[0], self.l1[c]),
            "lambda2": np.where(zero, lam_bal[1], self.l2[c]),
        }
        main, monitor = self.optics.main, self.optics.monitor
        out["t1"] = np.where(zero, 0.5, self.t1[c])
        out["t2"] = np.where(zero, 0.5, self.t2[c])
        out["tp1"] = np.where(zero, monitor_transmission(main, monitor, lam_bal[0]), self.tp1[c])
        out["tp2"] = np.where(zero, monitor_transmission(main, monitor, lam_bal[1]), self.tp2[c])
        out["i_sig"], out["i_lo"] = i[:, 0], i[:, 1]
        m_sig = np.where(i[:, 0] > 0, (1 - out["tp1"]) / out["tp1"] * i[:, 0], 0.0)
        m_lo = np.where(i[:, 1] > 0, (1 - out["tp2"]) / out["tp2"] * i[:, 1], 0.0)
        out["i3_source"] = np.maximum(self.monitor_target - m_sig - m_lo, 0.0) / (1 - self.tp3)
        out["vnb_x"], out["vnb_p"] = residual_noise_variance(
            out["t1"], out["t2"], out["i_sig"], out["i_lo"], self.lo_photons)
        n = len(y)
        out["lambda3"] = np.full(n, self.lambda3)
        out["t3"] = np.full(n, self.t3)
        out["tp3"] = np.full(n, self.tp3)
        out["feasible"] = feasible
        return out

    def nearest_reachable(self, target):
        theta = math.atan2(target.p_target, target.x_target)
        k = int(round(theta / (2 * math.pi) * self.n_angles)) % self.n_angles
        r = math.hypot(target.x_target, target.p_target)
        s = min(1.0, self.reach()[k] / r) if r else 1.0
        return TargetQuadratures(target.x_target * s, target.p_target * s)

    def solve(self, target):
        """One target -> AttackSolution, or InfeasibleTarget."""
        sol = self.solve_many([target.x_target], [target.p_target])
        if not sol["feasible"][0]:
            raise InfeasibleTarget(target, self.nearest_reachable(target))
        return AttackSolution(**{k: float(v[0]) for k, v in sol.items() if k != "feasible"})


@lru_cache(maxsize=16)
def attack_grid(lo_photons=DEFAULT_LO_PHOTONS, cap=DEFAULT_CAP, optics=None, resolution=96,
                n_angles=1024):
    """Shared, cached grid for the given receiver and caps."""
    return AttackGrid(lo_photons, cap, optics, resolution=resolution, n_angles=n_angles)


def solve_fake_pulses(target, lo_photons=DEFAULT_LO_PHOTONS, cap=DEFAULT_CAP, optics=None,
                      resolution=96):
    """Fake-pulse recipe that makes Bob read ``target``.

    Raises InfeasibleTarget (carrying the nearest reachable target) when
    no wavelength pair in the band reaches it under the intensity caps.
    """
    if cap > 0.01 * lo_photons * (1 + 1e-12):
        raise DomainError("intensity cap must not exceed 1% of the LO photon number")
    return attack_grid(lo_photons, cap, optics, resolution).solve(target)


def reproduce_target(solution, lo_photons):
    """Push a solution back through the detector's beat equations."""
    scale = 2.0 / math.sqrt(lo_photons)
    t1, t2 = solution.t1, solution.t2
    x = scale * ((1 - t1) * (1 - 2 * t1) * solution.i_sig + (1 - t2) * (2 * t2 - 1) * solution.i_lo)
    p = scale * (t1 * (1 - 2 * t1) * solution.i_sig + t2 * (2 * t2 - 1) * solution.i_lo)
    return x, p


@dataclass
class RegionMap:
    """Rasterized reachable set of targets in sqrt(eta)*X_E units."""

    x_axis: np.ndarray
    p_axis: np.ndarray
    covered: np.ndarray          # covered[i, j] <-> (x_axis[j], p_axis[i])
    angles: np.ndarray
    reach: np.ndarray
    max_radius: float
    eta: float
    claimed_radius: float = math.sqrt(20.0)

    @property
    def max_radius_xe(self):
        """The covered radius expressed in units of Eve's raw X_E."""
        return self.max_radius / math.sqrt(self.eta)

    @property
    def claim_holds(self):
        return self.max_radius >= self.claimed_radius

    def summary(self):
        return {
            "eta": self.eta,
            "max_radius": self.max_radius,
            "max_radius_xe": self.max_radius_xe,
            "claimed_radius": self.claimed_radius,
            "claim_holds": bool(self.claim_holds),
            "failure_threshold": FAILURE_THRESHOLD,
            "threshold_within_reach": bool(self.max_radius >= FAILURE_THRESHOLD),
            "max_reach": float(self.reach.max()),
        }

    def to_dict(self):
        return {
            **self.summary(),
            "x_axis": self.x_axis.tolist(),
            "p_axis": self.p_axis.tolist(),
            "covered": self.covered.astype(int).tolist(),
            "angles": self.angles.tolist(),
            "reach": self.reach.tolist(),
        }


def achievable_region(eta, lo_photons=DEFAULT_LO_PHOTONS, cap=DEFAULT_CAP, optics=None,
                      resolution=64, raster=201, n_angles=1024):
    """Reachable target set and the largest disk it contains.

    Every cell's reachable set is a parallelogram with a corner at the
    origin, so their union is star-shaped and is fully described by its
    radial reach per direction.
    """
    if resolution < 64:
        raise DomainError("resolution must be at least 64 points per axis")
    grid = AttackGrid(lo_photons, cap, optics, resolution=resolution, n_angles=n_angles)
    reach = grid.reach()
    angles = 2 * np.pi * np.arange(n_angles) / n_angles
    extent = 1.05 * reach.max()
    axis = np.linspace(-extent, extent, raster)
    xx, pp = np.meshgrid(axis, axis)
    theta = np.mod(np.arctan2(pp, xx), 2 * np.pi)
    bound = np.interp(theta, np.append(angles, 2 * np.pi), np.append(reach, reach[0]))
    covered = np.hypot(xx, pp) <= bound
    return RegionMap(axis, axis.copy(), covered, angles, reach, float(reach.min()), eta)
