"""Physical parameters, unit conventions and feasibility estimates.

Internally hbar = 1 and the mechanical frequency nu = 1, so every rate is
stored as a multiple of nu and every time in units of 1/nu.  SI values only
enter through :class:`FeasibilityInput`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from scipy import constants

HBAR = constants.hbar
C_LIGHT = constants.c
K_B = constants.k

BATH_MODELS = ("paper", "extended")


class DomainError(ValueError):
    """Raised when a physical input lies outside its allowed domain."""


@dataclass(frozen=True)
class SystemParams:
    """Rates of the cavity + mechanics system in units of ``nu``.

    ``g0`` is the single-photon coupling exactly as it appears in front of
    ``a^dag a (b^dag + b) / sqrt(2)``; Hamiltonian builders carry the
    ``sqrt(2)`` themselves.
    """

    nu: float = 1.0
    kappa: float = 0.0
    g0: float = 0.001
    delta: float = 1.0
    gamma_m: float = 0.0
    nbar_env: float = 0.0
    linear_threshold: float = 0.01

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")
        for name in ("kappa", "gamma_m", "nbar_env"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative, got {getattr(self, name)}")

    @property
    def regime(self) -> str:
        return "linear" if abs(self.g0) < self.linear_threshold * self.nu else "nonlinear"

    def replace(self, **changes) -> "SystemParams":
        d = asdict(self)
        d.update(changes)
        return SystemParams(**d)


@dataclass(frozen=True)
class FeasibilityInput:
    """Laboratory parameters in SI units (rates in rad/s)."""

    nu_si: float
    m_eff: float
    cavity_length: float
    wavelength: float = 1064e-9
    kappa_si: float = 1.0
    q_factor: float = 1.0
    T_env: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{f.name} must be strictly positive, got {value}")


def derive_g0(inp: FeasibilityInput) -> float:
    """Single-photon coupling of a Fabry-Perot cavity with one moving mirror.

    ``g0 = (omega_c / L) * x_zpf`` with ``omega_c = 2 pi c / lambda`` and
    ``x_zpf = sqrt(hbar / (2 m_eff nu))``.  The value is an angular rate,
    quoted in "Hz" the way the optomechanics literature usually does.
    """
    omega_c = 2 * math.pi * C_LIGHT / inp.wavelength
    x_zpf = math.sqrt(HBAR / (2 * inp.m_eff * inp.nu_si))
    return omega_c / inp.cavity_length * x_zpf


def pulse_power_requirement(params: SystemParams, regime: str) -> float:
    """Lower bound on the drive strength (units of nu) for pulsed cooling.

    linear:    Omega >> 10 nu^2 / g0
    nonlinear: Omega g0 > 100 nu^2
    """
    if not params.g0 > 0:
        raise DomainError("g0 must be positive")
    nu2 = params.nu ** 2
    if regime == "linear":
        return 10 * nu2 / params.g0
    if regime == "nonlinear":
        return 100 * nu2 / params.g0
    raise ValueError(f"unknown regime {regime!r}")


def thermal_occupation(nu_si: float, T: float) -> float:
    """Bose-Einstein occupation of a mode at angular frequency ``nu_si``."""
    x = HBAR * nu_si / (K_B * T)
    return 1.0 / math.expm1(x)


@dataclass(frozen=True)
class FeasibilityReport:
    g0_hz: float
    g0_over_nu: float
    regime: str
    omega_min_nu: float
    kappa_over_nu: float
    gamma_m_si: float
    n_thermal: float
    extra: dict = field(default_factory=dict)

    def rows(self):
        yield "g0 [Hz]", self.g0_hz
        yield "g0 / nu", self.g0_over_nu
        yield "regime", self.regime
        yield "Omega_min [nu]", self.omega_min_nu
        yield "kappa / nu", self.kappa_over_nu
        yield "gamma_m [Hz]", self.gamma_m_si
        yield "n_thermal", self.n_thermal
        yield from self.extra.items()


def feasibility_report(inp: FeasibilityInput) -> FeasibilityReport:
    g0 = derive_g0(inp)
    params = SystemParams(g0=g0 / inp.nu_si, kappa=inp.kappa_si / inp.nu_si)
    regime = params.regime
    return FeasibilityReport(
        g0_hz=g0,
        g0_over_nu=params.g0,
        regime=regime,
        omega_min_nu=pulse_power_requirement(params, regime),
        kappa_over_nu=params.kappa,
        gamma_m_si=inp.nu_si / inp.q_factor,
        n_thermal=thermal_occupation(inp.nu_si, inp.T_env),
    )


# Scenario (de)serialisation ------------------------------------------------

_PARAM_RATES = ("kappa", "g0", "delta", "gamma_m")


class ScenarioError(ValueError):
    """Schema violation in a scenario document; ``path`` is a JSON path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def params_from_dict(d: dict, path: str = "$.params") -> SystemParams:
    """Parse a params block.  Rates carry a ``_nu`` or ``_si`` suffix."""
    d = dict(d)
    nu_si = d.pop("nu_si", None)
    out = {}
    for name in _PARAM_RATES:
        keys = [k for k in (f"{name}_nu", f"{name}_si") if k in d]
        if len(keys) > 1:
            raise ScenarioError(f"{path}.{name}", "give exactly one of _nu or _si")
        if not keys:
            continue
        key = keys[0]
        value = d.pop(key)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ScenarioError(f"{path}.{key}", f"expected a number, got {value!r}")
        if key.endswith("_si"):
            if nu_si is None:
                raise ScenarioError(f"{path}.{key}", "SI rates need nu_si")
            value = value / nu_si
        out[name] = float(value)
    for name in ("nbar_env", "linear_threshold"):
        if name in d:
            out[name] = float(d.pop(name))
    if d:
        raise ScenarioError(f"{path}.{sorted(d)[0]}", "unknown field")
    try:
        return SystemParams(**out)
    except DomainError as exc:
        raise ScenarioError(path, str(exc)) from exc


def params_to_dict(p: SystemParams) -> dict:
    d = {f"{name}_nu": getattr(p, name) for name in _PARAM_RATES}
    d["nbar_env"] = p.nbar_env
    d["linear_threshold"] = p.linear_threshold
    return d


def feasibility_from_dict(d: dict, path: str = "$.feasibility") -> FeasibilityInput:
    try:
        return FeasibilityInput(**d)
    except TypeError as exc:
        raise ScenarioError(path, str(exc)) from exc
    except DomainError as exc:
        raise ScenarioError(path, str(exc)) from exc
