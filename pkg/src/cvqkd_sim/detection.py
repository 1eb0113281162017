"""Pulses, shot-noise conventions and Bob's detectors.

Everything is in shot-noise units: a vacuum quadrature has variance 1 and
the photocurrent constant is normalized away.  Heterodyne outputs carry
the 1/sqrt(2) scale of the balanced split.  Fields may be numpy arrays so
that a whole block of shots goes through in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ModelViolationError
from .splitter import monitor_transmission, transmission

COLLISION_NM = 1e-6
INVISIBLE_TRANSMISSION = 1e-9


@dataclass(frozen=True)
class NoiseConvention:
    vacuum_variance: float = 1.0
    heterodyne_scale: float = 1 / math.sqrt(2)


SHOT_NOISE = NoiseConvention()


@dataclass(frozen=True)
class CoherentPulse:
    """A pulse by role: wavelength in nm and mean photon number ``|alpha|^2``.

    Quadrature means are only meaningful for signal-scale pulses; LO and
    fake pulses carry their photon number independently.
    """

    wavelength: float
    photon_number: object = 0.0
    mean_x: object = 0.0
    mean_p: object = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.photon_number) < 0):
            raise ValueError("photon_number must be non-negative")


@dataclass(frozen=True)
class QuadratureSample:
    x: object
    p: object


def heterodyne(sample, rng, convention=SHOT_NOISE):
    """Measure both quadratures of a state whose intrinsic noise is already in ``sample``.

    Returns ``((x + n_x)/sqrt 2, (p + n_p)/sqrt 2)`` with unit-variance vacuum ``n``.
    """
    x = np.asarray(sample.x, dtype=float)
    p = np.asarray(sample.p, dtype=float)
    sd = math.sqrt(convention.vacuum_variance)
    nx = rng.normal(0.0, sd, size=x.shape)
    np_ = rng.normal(0.0, sd, size=p.shape)
    s = convention.heterodyne_scale
    return QuadratureSample(s * (x + nx), s * (p + np_))


def tap(pulses, main, monitor):
    """Pulses as they leave the monitoring tap towards the heterodyne detector."""
    return [replace(pl, photon_number=np.asarray(pl.photon_number, dtype=float)
                    * monitor_transmission(main, monitor, pl.wavelength))
            for pl in pulses]


def beat_means(t1, t2, i_sig, i_lo, lo_photon_ref):
    """Squared-modulus (beat-free) parts of Bob's two difference currents.

    ``i_sig`` and ``i_lo`` are intensities after the monitoring tap.  No
    interference survives between distinct wavelengths, so each pulse
    contributes only through its own intensity.
    """
    scale = 2.0 / math.sqrt(lo_photon_ref)
    x = scale * ((1 - t1) * (1 - 2 * t1) * i_sig + (1 - t2) * (2 * t2 - 1) * i_lo)
    p = scale * (t1 * (1 - 2 * t1) * i_sig + t2 * (2 * t2 - 1) * i_lo)
    return x, p


def residual_noise_variance(t1, t2, i_sig, i_lo, lo_photon_ref):
    """Variances ``(vnb_x, vnb_p)`` of the noise Bob reads on top of Eve's target.

    Each fake pulse's own vacuum fluctuations, amplified by its intensity,
    plus the vacuum entering the unused splitter ports.
    """
    vx = (4 * ((1 - 2 * t1) ** 2 * (1 - t1) * i_sig + (2 * t2 - 1) ** 2 * (1 - t2) * i_lo)
          + 16 * (t1 * (1 - t1) ** 2 * i_sig + t2 * (1 - t2) ** 2 * i_lo)) / lo_photon_ref
    vp = (4 * ((1 - 2 * t1) ** 2 * t1 * i_sig + (2 * t2 - 1) ** 2 * t2 * i_lo)
          + 16 * (t1 ** 2 * (1 - t1) * i_sig + t2 ** 2 * (1 - t2) * i_lo)) / lo_photon_ref
    return vx, vp


def _check_distinct(*wavelengths):
    for i, a in enumerate(wavelengths):
        for b in wavelengths[i + 1:]:
            if np.any(np.abs(np.asarray(a) - np.asarray(b)) < COLLISION_NM):
                raise ModelViolationError(
                    "fake pulses share a wavelength; interference is not modeled")


def fake_pulse_response(sig, lo, ancilla, main, lo_photon_ref, rng, efficiency=1.0):
    """Bob's heterodyne output when Eve's fake signal, fake LO and ancilla arrive.

    Photon numbers are the intensities reaching the 50:50 splitter (after
    the tap).  The ancilla must sit at a zero of the main splitter; any
    visible ancilla would be an extra beat source this model omits.
    """
    waves = [sig.wavelength, lo.wavelength]
    if ancilla is not None:
        waves.append(ancilla.wavelength)
        if np.any(transmission(main, ancilla.wavelength) >= INVISIBLE_TRANSMISSION):
            raise ModelViolationError("ancilla is visible to the main detectors")
    _check_distinct(*waves)
    t1 = transmission(main, sig.wavelength)
    t2 = transmission(main, lo.wavelength)
    i_sig = efficiency * np.asarray(sig.photon_number, dtype=float)
    i_lo = efficiency * np.asarray(lo.photon_number, dtype=float)
    mx, mp = beat_means(t1, t2, i_sig, i_lo, lo_photon_ref)
    vx, vp = residual_noise_variance(t1, t2, i_sig, i_lo, lo_photon_ref)
    shape = np.broadcast(mx, mp).shape
    x = mx + np.sqrt(vx) * rng.standard_normal(shape)
    p = mp + np.sqrt(vp) * rng.standard_normal(shape)
    return QuadratureSample(x, p)


def monitor_mean(pulses, main, monitor):
    total = 0.0
    for pl in pulses:
        tp = monitor_transmission(main, monitor, pl.wavelength)
        total = total + (1 - tp) * np.asarray(pl.photon_number, dtype=float)
    return total


def monitor_reading(pulses, main, monitor, rng, size=None):
    """Photon count on the monitor: reflected share of every pulse plus shot noise.

    Fluctuations are Gaussian with variance equal to the mean; counts are
    clamped at zero.
    """
    mean = np.asarray(monitor_mean(pulses, main, monitor), dtype=float)
    if size is not None:
        mean = np.broadcast_to(mean, size)
    noise = rng.standard_normal(mean.shape)
    out = np.maximum(mean + np.sqrt(mean) * noise, 0.0)
    return float(out) if out.ndim == 0 else out
