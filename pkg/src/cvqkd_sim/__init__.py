"""Wavelength-attack simulator and security analytics for heterodyne CV-QKD."""

__version__ = "0.1.0"

from .attack import (  # noqa: F401
    AttackGrid,
    AttackSolution,
    InfeasibleTarget,
    Optics,
    TargetQuadratures,
    achievable_region,
    failure_probability,
    noise_padding,
    solve_fake_pulses,
)
from .protocol import ScenarioConfig, simulate  # noqa: F401
from .security import security_verdict  # noqa: F401
from .sim import run_scenario, sweep_figures  # noqa: F401
from .splitter import SplitterModel, transmission  # noqa: F401
