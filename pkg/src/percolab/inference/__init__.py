"""Monte Carlo estimation, fits, exact oracles and experiment drivers."""

from .estimates import Estimate, Tally, ratio_R, two_proportion_z
from .fit import LinearFit, PowerLawFit, fit_linear, fit_power_law, stabilized_fit
from .mobius import MobiusMap, mobius_factor
from .oracle import BitsetEnumerator, GuardError, brute_force_probability
from .specs import EventSpec

__all__ = [
    "Estimate",
    "Tally",
    "ratio_R",
    "two_proportion_z",
    "LinearFit",
    "PowerLawFit",
    "fit_linear",
    "fit_power_law",
    "stabilized_fit",
    "MobiusMap",
    "mobius_factor",
    "BitsetEnumerator",
    "GuardError",
    "brute_force_probability",
    "EventSpec",
]
