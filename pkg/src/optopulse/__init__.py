"""Pulsed cooling of cavity-optomechanical resonators: Gaussian and Fock-space
simulation, analytic pulse-sequence compilation and schedule optimisation."""

from .model import DomainError, FeasibilityInput, SystemParams, derive_g0, pulse_power_requirement

__all__ = ["DomainError", "FeasibilityInput", "SystemParams", "derive_g0", "pulse_power_requirement"]
__version__ = "0.1.0"
