"""One protocol round, normal or attacked, vectorized over blocks of shots.

Randomness: shots are grouped into fixed-size blocks and every block owns
independent generators derived from ``(seed, block index, stage)``.  Each
stage draws a full block of values in a fixed order, so shot ``i`` sees
the same numbers whatever the worker count or schedule.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np
import yaml

from .attack import (
    Optics,
    attack_grid,
    eve_intercept,
    noise_padding,
)
from .detection import (
    CoherentPulse,
    QuadratureSample,
    fake_pulse_response,
    heterodyne,
    monitor_reading,
    tap,
)
from .errors import ConfigError, DomainError
from .security import loss_db_to_eta

BLOCK_SIZE = 4096
PASS = "pass"
ALARM = "alarm"

# stage labels for generator derivation; never reorder
_STAGES = ("alice", "state", "channel", "eve", "padding", "bob", "monitor", "filter")


@dataclass
class ScenarioConfig:
    modulation_variance: float = 10.0
    eta: float = 1.0
    excess_noise: float = 0.01
    lo_photons: float = 1e8
    intensity_cap: float = 1e6
    shots: int = 100_000
    seed: int = 42
    attack_enabled: bool = False
    filter_enabled_probability: float = 0.0
    filter_passband: tuple = (1549.0, 1551.0)
    monitor_tolerance: float = 0.01
    noise_padding_enabled: bool = False
    detector_efficiency: float = 1.0
    grid_resolution: int = 96
    workers: int = 1

    def __post_init__(self):
        self.filter_passband = tuple(float(v) for v in self.filter_passband)
        self.validate()

    @property
    def V(self):
        return self.modulation_variance + 1

    @property
    def loss_db(self):
        return -10 * math.log10(self.eta)

    def validate(self):
        if not 0 < self.eta <= 1:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta!r}")
        if self.excess_noise < 0:
            raise ConfigError("excess_noise must be non-negative")
        if self.modulation_variance <= 0:
            raise ConfigError("modulation_variance must be positive")
        if self.lo_photons <= 0:
            raise ConfigError("lo_photons must be positive")
        if not 0 < self.intensity_cap <= 0.01 * self.lo_photons * (1 + 1e-12):
            raise ConfigError("intensity_cap must lie in (0, 0.01 * lo_photons]")
        if self.shots < 1:
            raise ConfigError("shots must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not 0 <= self.filter_enabled_probability <= 1:
            raise ConfigError("filter_enabled_probability must lie in [0, 1]")
        lo, hi = self.filter_passband
        if not 0 < lo <= hi:
            raise ConfigError("filter_passband must be an ordered pair of positive wavelengths")
        if self.monitor_tolerance < 0:
            raise ConfigError("monitor_tolerance must be non-negative")
        if not 0 < self.detector_efficiency <= 1:
            raise ConfigError("detector_efficiency must lie in (0, 1]")
        if self.grid_resolution < 8 or self.workers < 1:
            raise ConfigError("grid_resolution >= 8 and workers >= 1 required")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "loss_db" in data:
            if "eta" in data:
                raise ConfigError("give either eta or loss_db, not both")
            loss = data.pop("loss_db")
            if loss < 0:
                raise ConfigError("loss_db must be non-negative")
            data["eta"] = loss_db_to_eta(loss)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        d = asdict(self)
        d["filter_passband"] = list(self.filter_passband)
        return d


def load_config(path):
    """Read a ScenarioConfig from YAML or JSON; nested sections are flattened."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    flat = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    return ScenarioConfig.from_dict(flat)


@dataclass
class ShotRecord:
    alice_x: float
    alice_p: float
    bob_x: float
    bob_p: float
    eve_x: float | None
    eve_p: float | None
    monitor: float
    filtered: bool
    attack_fallback: bool


CSV_COLUMNS = ("shot", "alice_x", "alice_p", "bob_x", "bob_p", "eve_x", "eve_p",
               "target_x", "target_p", "vnb_x", "vnb_p", "monitor", "filtered",
               "attack_fallback")


@dataclass
class ShotBatch:
    """Columnar shot records.  Eve's columns are None in normal operation."""

    alice_x: np.ndarray
    alice_p: np.ndarray
    bob_x: np.ndarray
    bob_p: np.ndarray
    monitor: np.ndarray
    filtered: np.ndarray
    attack_fallback: np.ndarray
    eve_x: np.ndarray | None = None
    eve_p: np.ndarray | None = None
    target_x: np.ndarray | None = None
    target_p: np.ndarray | None = None
    vnb_x: np.ndarray | None = None
    vnb_p: np.ndarray | None = None

    def __len__(self):
        return len(self.alice_x)

    @property
    def attacked(self):
        return self.eve_x is not None

    def record(self, i):
        eve = (float(self.eve_x[i]), float(self.eve_p[i])) if self.attacked else (None, None)
        return ShotRecord(float(self.alice_x[i]), float(self.alice_p[i]), float(self.bob_x[i]),
                          float(self.bob_p[i]), eve[0], eve[1], float(self.monitor[i]),
                          bool(self.filtered[i]), bool(self.attack_fallback[i]))

    def __iter__(self):
        return (self.record(i) for i in range(len(self)))

    @classmethod
    def concat(cls, parts):
        out = {}
        for f in fields(cls):
            vals = [getattr(p, f.name) for p in parts]
            out[f.name] = None if vals[0] is None else np.concatenate(vals)
        return cls(**out)

    def write_csv(self, fh):
        """One row per shot in CSV_COLUMNS order; Eve's fields empty without an attack."""
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        n = len(self)
        blank = [""] * n
        cols = [range(n)]
        for name in CSV_COLUMNS[1:12]:
            arr = getattr(self, name)
            cols.append(blank if arr is None else [repr(v) for v in arr.tolist()])
        cols.append(self.filtered.astype(int).tolist())
        cols.append(self.attack_fallback.astype(int).tolist())
        writer.writerows(zip(*cols))


def alice_prepare(V_A, rng, size=None):
    """Gaussian modulation: independent x and p means, zero mean, variance V_A."""
    if V_A <= 0:
        raise DomainError("modulation variance must be positive")
    sd = math.sqrt(V_A)
    return QuadratureSample(rng.normal(0, sd, size), rng.normal(0, sd, size))


def with_vacuum(means, rng):
    """Coherent-state quadratures: the drawn means plus one vacuum unit."""
    x = np.asarray(means.x, dtype=float)
    p = np.asarray(means.p, dtype=float)
    return QuadratureSample(x + rng.standard_normal(x.shape), p + rng.standard_normal(p.shape))


def channel_transmit(sample, eta, eps, rng):
    """Lossy Gaussian channel: ``sqrt(eta) x + N(0, 1 - eta + eta eps)`` per quadrature."""
    if not 0 < eta <= 1:
        raise DomainError(f"channel transmission {eta!r} outside (0, 1]")
    if eps < 0:
        raise DomainError("excess noise must be non-negative")
    sd = math.sqrt(1 - eta + eta * eps)
    x = np.asarray(sample.x, dtype=float)
    p = np.asarray(sample.p, dtype=float)
    return QuadratureSample(math.sqrt(eta) * x + sd * rng.standard_normal(x.shape),
                            math.sqrt(eta) * p + sd * rng.standard_normal(p.shape))


def _passes(wavelength, passband):
    lo, hi = passband
    return (np.asarray(wavelength) >= lo) & (np.asarray(wavelength) <= hi)


def apply_filter(pulses, filtered, passband):
    """Zero the photon number of pulses outside the passband on filtered shots."""
    out = []
    for pl in pulses:
        blocked = np.asarray(filtered) & ~_passes(pl.wavelength, passband)
        n = np.where(blocked, 0.0, pl.photon_number)
        out.append(CoherentPulse(pl.wavelength, n))
    return out


def bob_receive(incoming, config, rng, filtered=None, optics=None):
    """Bob's heterodyne reading and monitor count for one block.

    ``incoming`` is either the channel output (a QuadratureSample: genuine
    signal with its LO at the reference wavelength) or Eve's three fake
    pulses at source intensity ``[signal, lo, ancilla]``.  On filtered
    shots, pulses outside the passband are removed before both detectors.
    """
    optics = optics or Optics()
    main, monitor = optics.main, optics.monitor
    if isinstance(incoming, QuadratureSample):
        x = np.asarray(incoming.x, dtype=float)
        n = x.shape
        filtered = np.zeros(n, bool) if filtered is None else filtered
        lo = CoherentPulse(main.reference_wavelength, np.full(n, config.lo_photons))
        [lo] = apply_filter([lo], filtered, config.filter_passband)
        reading = heterodyne(incoming, rng)
        lost = np.asarray(lo.photon_number) == 0
        reading = QuadratureSample(np.where(lost, 0.0, reading.x), np.where(lost, 0.0, reading.p))
        return reading, monitor_reading([lo], main, monitor, rng, size=n)

    sig, lo, anc = incoming
    n = np.shape(sig.photon_number)
    filtered = np.zeros(n, bool) if filtered is None else filtered
    pulses = apply_filter([sig, lo, anc], filtered, config.filter_passband)
    count = monitor_reading(pulses, main, monitor, rng, size=n)
    sig_t, lo_t, anc_t = tap(pulses, main, monitor)
    reading = fake_pulse_response(sig_t, lo_t, anc_t, main, config.lo_photons, rng,
                                  efficiency=config.detector_efficiency)
    return reading, count


def monitor_check(readings, expected, tolerance):
    """``pass`` iff the mean reading is within ``tolerance * expected`` of ``expected``."""
    readings = np.asarray(readings, dtype=float)
    if readings.size == 0:
        raise ValueError("no monitor readings")
    return PASS if abs(readings.mean() - expected) <= tolerance * expected else ALARM


def monitor_verdict(batch, config, optics=None):
    """Bob's run-level LO check, separately on filtered and unfiltered shots.

    Comparing the two populations is what exposes fake pulses away from
    the reference wavelength.
    """
    optics = optics or Optics()
    expected = optics.monitor_fraction * config.lo_photons
    out = {"expected": expected, "overall": monitor_check(batch.monitor, expected,
                                                          config.monitor_tolerance)}
    for name, mask in (("unfiltered", ~batch.filtered), ("filtered", batch.filtered)):
        out[name] = (monitor_check(batch.monitor[mask], expected, config.monitor_tolerance)
                     if mask.any() else None)
    split = [out[k] for k in ("unfiltered", "filtered") if out[k] is not None]
    out["alarm"] = ALARM in split
    return out


def _stage_rngs(seed, block):
    ss = np.random.SeedSequence(seed, spawn_key=(block,))
    return dict(zip(_STAGES, (np.random.default_rng(s) for s in ss.spawn(len(_STAGES)))))


def pilot_vnb(config, grid, n=BLOCK_SIZE):
    """Eve's estimate of her mean residual noise, from unpadded pilot targets.

    The padding she adds is sized against this mean; the pilot stream is
    derived from the seed so the run stays reproducible.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(2 ** 32,)))
    sd = math.sqrt(config.eta * (config.V + 1) / 2)
    sol = grid.solve_many(sd * rng.standard_normal(n), sd * rng.standard_normal(n))
    ok = sol["feasible"]
    return float(0.5 * (sol["vnb_x"][ok] + sol["vnb_p"][ok]).mean())


def _simulate_block(config, block, grid, optics, padding_var=0.0):
    start = block * BLOCK_SIZE
    n = min(BLOCK_SIZE, config.shots - start)
    rngs = _stage_rngs(config.seed, block)
    means = alice_prepare(config.modulation_variance, rngs["alice"], n)
    state = with_vacuum(means, rngs["state"])
    filtered = rngs["filter"].random(n) < config.filter_enabled_probability
    fallback = np.zeros(n, bool)

    if not config.attack_enabled:
        out = channel_transmit(state, config.eta, config.excess_noise, rngs["channel"])
        reading, count = bob_receive(out, config, rngs["bob"], filtered, optics)
        return ShotBatch(means.x, means.p, reading.x, reading.p, count, filtered, fallback)

    eve = eve_intercept(state, rngs["eve"])
    pad_x, pad_p = rngs["padding"].standard_normal((2, n))
    sd = math.sqrt(padding_var)
    sent_x, sent_p = eve.x + sd * pad_x, eve.p + sd * pad_p
    tx, tp = math.sqrt(config.eta) * sent_x, math.sqrt(config.eta) * sent_p
    sol = grid.solve_many(tx, tp)
    fallback = ~sol["feasible"]
    eff = config.detector_efficiency
    src_sig = np.where(sol["i_sig"] > 0, sol["i_sig"] / sol["tp1"], 0.0) / eff
    src_lo = np.where(sol["i_lo"] > 0, sol["i_lo"] / sol["tp2"], 0.0) / eff
    pulses = [CoherentPulse(sol["lambda1"], src_sig), CoherentPulse(sol["lambda2"], src_lo),
              CoherentPulse(sol["lambda3"], sol["i3_source"])]
    reading, count = bob_receive(pulses, config, rngs["bob"], filtered, optics)
    bob_x, bob_p = reading.x, reading.p
    vnb_x, vnb_p = sol["vnb_x"], sol["vnb_p"]
    if fallback.any():
        # plain intercept-resend at the reference wavelength: one shot-noise unit on top
        fb = rngs["bob"].standard_normal((2, n))
        bob_x = np.where(fallback, tx + fb[0], bob_x)
        bob_p = np.where(fallback, tp + fb[1], bob_p)
        lo = CoherentPulse(optics.main.reference_wavelength, np.full(n, config.lo_photons))
        [lo] = apply_filter([lo], filtered, config.filter_passband)
        genuine = monitor_reading([lo], optics.main, optics.monitor, rngs["monitor"], size=n)
        count = np.where(fallback, genuine, count)
        vnb_x = np.where(fallback, 1.0, vnb_x)
        vnb_p = np.where(fallback, 1.0, vnb_p)
    return ShotBatch(means.x, means.p, bob_x, bob_p, count, filtered, fallback,
                     eve_x=eve.x, eve_p=eve.p, target_x=tx, target_p=tp,
                     vnb_x=vnb_x, vnb_p=vnb_p)



def simulate(config, optics=None, grid=None):
    """Run ``config.shots`` rounds and return the columnar records."""
    optics = optics or Optics()
    if config.attack_enabled and grid is None:
        grid = attack_grid(config.lo_photons, config.intensity_cap, optics,
                           resolution=config.grid_resolution)
    padding_var = 0.0
    if config.attack_enabled and config.noise_padding_enabled:
        padding_var = noise_padding(config.eta, config.V, config.excess_noise,
                                    pilot_vnb(config, grid))
    n_blocks = -(-config.shots // BLOCK_SIZE)

    def run(block):
        return _simulate_block(config, block, grid, optics, padding_var)

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    return ShotBatch.concat(parts)
