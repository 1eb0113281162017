"""Wavelength-dependent fused-coupler beam splitters.

A fused biconical taper coupler transmits

    T(lam) = F^2 * sin^2(A * lam**2.5)

where ``A`` lumps the coupling constant and heat-source width.  Two
instances matter for the receiver: the 50:50 heterodyne splitter and the
10:90 tap that feeds the LO-intensity monitor.  Both are calibrated at
the same reference wavelength, which fixes their phase coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleError

REFERENCE_WAVELENGTH_NM = 1550.0
DEFAULT_BAND_NM = (1200.0, 2100.0)


@dataclass(frozen=True)
class SplitterModel:
    """Phase model of one coupler.

    phase_coefficient is ``A`` in rad / nm^2.5; coupled_fraction is ``F^2``.
    """

    phase_coefficient: float
    coupled_fraction: float = 1.0
    reference_wavelength: float = REFERENCE_WAVELENGTH_NM
    reference_transmission: float = 0.5

    def __post_init__(self):
        if not self.phase_coefficient > 0:
            raise DomainError("phase_coefficient must be positive")
        if not 0 < self.coupled_fraction <= 1:
            raise DomainError("coupled_fraction must lie in (0, 1]")

    @classmethod
    def calibrated(cls, reference_transmission, reference_wavelength=REFERENCE_WAVELENGTH_NM,
                   coupled_fraction=1.0):
        """Build a model whose principal branch passes through the calibration point."""
        if not 0 <= reference_transmission <= coupled_fraction:
            raise InfeasibleError("reference transmission exceeds the coupled fraction")
        if reference_wavelength <= 0:
            raise DomainError("reference wavelength must be positive")
        phase = math.asin(math.sqrt(reference_transmission / coupled_fraction))
        if phase == 0:
            raise DomainError("a zero reference transmission does not fix the phase coefficient")
        return cls(
            phase_coefficient=phase / reference_wavelength ** 2.5,
            coupled_fraction=coupled_fraction,
            reference_wavelength=reference_wavelength,
            reference_transmission=reference_transmission,
        )

    @property
    def reference_phase(self):
        return self.phase_coefficient * self.reference_wavelength ** 2.5

    def phase(self, wavelength):
        wavelength = np.asarray(wavelength, dtype=float)
        if np.any(wavelength <= 0):
            raise DomainError("wavelength must be positive")
        out = self.phase_coefficient * wavelength ** 2.5
        return float(out) if out.ndim == 0 else out

    def to_record(self):
        """Flat key-value form; the phase coefficient is re-derived on load."""
        return {
            "reference_wavelength_nm": self.reference_wavelength,
            "reference_transmission": self.reference_transmission,
            "coupled_fraction": self.coupled_fraction,
        }

    @classmethod
    def from_record(cls, record):
        return cls.calibrated(
            float(record["reference_transmission"]),
            reference_wavelength=float(record["reference_wavelength_nm"]),
            coupled_fraction=float(record.get("coupled_fraction", 1.0)),
        )


def main_splitter(coupled_fraction=1.0):
    """The 50:50 heterodyne splitter calibrated at 1550 nm."""
    return SplitterModel.calibrated(0.5, coupled_fraction=coupled_fraction)


def monitor_splitter(coupled_fraction=1.0):
    """The 10:90 monitoring tap; 0.9 is the fraction passed on to the detectors."""
    return SplitterModel.calibrated(0.9, coupled_fraction=coupled_fraction)


def transmission(model, wavelength):
    """Intensity transmission ``F^2 sin^2(A lam^2.5)``; accepts scalars or arrays."""
    return model.coupled_fraction * np.sin(model.phase(wavelength)) ** 2


def wavelength_for_transmission(model, target, branch=0, rising=True):
    """Invert the phase model on one monotone branch of the sine.

    Branch ``k`` rising covers phases [k*pi, k*pi + pi/2]; falling covers
    [k*pi + pi/2, (k+1)*pi].  The phase is strictly monotone in wavelength,
    so the inverse is closed-form.
    """
    if branch < 0:
        raise DomainError("branch must be non-negative")
    if target < 0 or target > model.coupled_fraction * (1 + 1e-15):
        raise InfeasibleError(
            f"transmission {target!r} outside [0, {model.coupled_fraction!r}]")
    principal = math.asin(math.sqrt(min(target / model.coupled_fraction, 1.0)))
    phase = branch * math.pi + (principal if rising else math.pi - principal)
    if phase <= 0:
        raise InfeasibleError("zero phase has no positive wavelength")
    return (phase / model.phase_coefficient) ** 0.4


def monitor_transmission(main, monitor, wavelength):
    """Transmission of the monitoring tap at ``wavelength``.

    The tap's own phase model governs.  ``main`` is only checked for a
    shared calibration wavelength, which the value map relies on.
    """
    if not math.isclose(main.reference_wavelength, monitor.reference_wavelength):
        raise DomainError("splitters must share a reference wavelength")
    return transmission(monitor, wavelength)


def principal_value_map(main_transmission, main, monitor):
    """Map a main-splitter transmission to the tap transmission via arcsin.

    Only valid while the main phase lies on its principal branch
    [0, pi/2]; at non-principal zeros it disagrees with the phase model.
    """
    t = np.asarray(main_transmission, dtype=float) / main.coupled_fraction
    ratio = monitor.reference_phase / main.reference_phase
    out = monitor.coupled_fraction * np.sin(np.arcsin(np.sqrt(t)) * ratio) ** 2
    return float(out) if out.ndim == 0 else out


def zeros_of_transmission(model, band):
    """All wavelengths in ``band`` where the transmission vanishes, ascending."""
    lo, hi = band
    if not 0 < lo <= hi:
        raise DomainError("band must be positive and ordered")
    k_lo = max(1, math.ceil(model.phase(lo) / math.pi - 1e-12))
    k_hi = math.floor(model.phase(hi) / math.pi + 1e-12)
    zeros = [(k * math.pi / model.phase_coefficient) ** 0.4 for k in range(k_lo, k_hi + 1)]
    return [z for z in zeros if lo - 1e-9 <= z <= hi + 1e-9]
