"""External laser drive -> intracavity field and linearised coupling G(t).

The drive is piecewise constant, so both the coupling integral

    G(t) = i g0 exp(-(kappa + i Delta) t) * int_0^t Omega(t') exp((kappa + i Delta) t') dt'

and the cavity field equation ``da/dt = -kappa a + i Delta a + i Omega e^{i phi}``
are solved segment by segment in closed form.  ``Omega(t')`` above is the
complex amplitude ``omega * exp(i phi)`` of the active segment.

Phase convention: G(t) equals ``g0`` times the cavity amplitude obtained with
the sign of the detuning flipped, ``G(t; Delta) = g0 * a(t; -Delta)`` for
``a(0) = 0``.  For a real drive this is ``-g0 * conj(a(t; Delta))``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .model import HBAR, SystemParams


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class DriveSegment:
    omega: float
    phi: float
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise PreconditionError(f"segment duration must be positive, got {self.duration}")
        if self.omega < 0:
            raise PreconditionError(f"drive amplitude must be non-negative, got {self.omega}")

    @property
    def amplitude(self) -> complex:
        return self.omega * np.exp(1j * self.phi)


@dataclass(frozen=True, eq=False)
class CouplingHistory:
    """Samples of the complex coupling G on an increasing time grid.

    ``evaluator`` gives G at arbitrary times when the history has a closed
    form.  Without it, ``piecewise_constant=True`` means ``G[k]`` holds on
    ``[t[k], t[k+1])``; otherwise values between samples are interpolated
    with a cubic spline.
    """

    t: np.ndarray
    G: np.ndarray
    piecewise_constant: bool = False
    evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        G = np.asarray(self.G, dtype=complex)
        if t.shape != G.shape or t.ndim != 1:
            raise ValueError("t and G must be 1-d arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if not np.all(np.isfinite(G)):
            raise ValueError("coupling samples must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "_spline", None)

    def __len__(self):
        return self.t.size

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def t_end(self) -> float:
        return float(self.t[-1]) if self.t.size else 0.0

    def breakpoints(self) -> np.ndarray:
        """Times at which a piecewise-constant history may jump."""
        return self.t if self.piecewise_constant else np.empty(0)

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.evaluator is not None:
            return self.evaluator(t)
        if self.piecewise_constant:
            k = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 1)
            return self.G[k]
        if self._spline is None:
            from scipy.interpolate import CubicSpline
            object.__setattr__(self, "_spline", CubicSpline(self.t, self.G))
        return self._spline(t)

    @classmethod
    def piecewise(cls, values: Sequence[complex], durations: Sequence[float]) -> "CouplingHistory":
        """Step-function history: ``values[k]`` for ``durations[k]``."""
        durations = np.asarray(durations, dtype=float)
        starts = np.concatenate([[0.0], np.cumsum(durations)[:-1]])
        return cls(t=starts, G=np.asarray(values, dtype=complex), piecewise_constant=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "re_G", "im_G"])
        for t, g in zip(self.t, self.G):
            w.writerow([repr(float(t)), repr(float(g.real)), repr(float(g.imag))])
        return buf.getvalue()


def _check_dt(drive: Sequence[DriveSegment], dt: float):
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    shortest = min(s.duration for s in drive)
    if dt > shortest / 10 * (1 + 1e-12):
        raise PreconditionError(
            f"dt={dt} is too coarse: must be <= {shortest / 10} (shortest segment / 10)")


def _grid(total: float, dt: float) -> np.ndarray:
    n = int(math.floor(total / dt + 1e-9))
    t = dt * np.arange(n + 1)
    if total - t[-1] > 1e-9 * dt:
        t = np.append(t, total)
    return t


def _linear_response(lam: complex, drive: Sequence[DriveSegment], y0: complex, scale: complex):
    """Closed-form solution of ``dy/dt = -lam * y + scale * Omega(t)``.

    Returns ``(starts, values_at_starts, evaluate)``.
    """
    starts = np.concatenate([[0.0], np.cumsum([s.duration for s in drive])])
    amps = np.array([s.amplitude for s in drive])
    y = np.empty(len(drive) + 1, dtype=complex)
    y[0] = y0

    def step(y_start, amp, tau):
        decay = np.exp(-lam * tau)
        if lam == 0:
            return y_start + scale * amp * tau
        # (1 - e^{-lam tau}) / lam, stable for small |lam tau|
        growth = -np.expm1(-lam * tau) / lam
        return y_start * decay + scale * amp * growth

    for k, seg in enumerate(drive):
        y[k + 1] = step(y[k], amps[k], seg.duration)

    def evaluate(t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(drive) - 1)
        tau = t - starts[k]
        beyond = t > starts[-1]
        # after the last segment the drive is off
        amp = np.where(beyond, 0.0, amps[k])
        k = np.where(beyond, len(drive), k)
        tau = np.where(beyond, t - starts[-1], tau)
        return step(y[k], amp, tau)

    return starts, y, evaluate


def coupling_from_drive(params: SystemParams, drive: Sequence[DriveSegment], dt: float) -> CouplingHistory:
    """Linearised coupling G(t) for a piecewise-constant drive, sampled every ``dt``."""
    if len(drive) == 0:
        return CouplingHistory(t=np.empty(0), G=np.empty(0, dtype=complex))
    _check_dt(drive, dt)
    lam = complex(params.kappa, params.delta)
    starts, _, evaluate = _linear_response(lam, drive, 0j, 1j * params.g0)
    t = _grid(starts[-1], dt)
    return CouplingHistory(t=t, G=evaluate(t), evaluator=evaluate)


def coupling_limit(params: SystemParams, omega: float, phi: float = 0.0) -> complex:
    """Long-time coupling under a constant drive, ``g0 Omega / (Delta - i kappa)``."""
    return params.g0 * omega * np.exp(1j * phi) / complex(params.delta, -params.kappa)


def cavity_field_ode(params: SystemParams, drive: Sequence[DriveSegment], a0: complex, dt: float,
                     method: str = "exact"):
    """Integrate ``da/dt = -kappa a + i Delta a + i Omega e^{i phi}``.

    ``method="exact"`` uses the per-segment closed form, ``"rk4"`` a classical
    fourth-order Runge-Kutta with step ``dt`` (kept as an independent check).
    Returns ``(t, a)``.
    """
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    if len(drive) == 0:
        return np.zeros(1), np.array([complex(a0)])
    lam = complex(params.kappa, -params.delta)
    starts, _, evaluate = _linear_response(lam, drive, complex(a0), 1j)
    t = _grid(starts[-1], dt)
    if method == "exact":
        return t, evaluate(t)
    if method != "rk4":
        raise ValueError(f"unknown method {method!r}")

    amps = np.array([s.amplitude for s in drive])

    def rhs(tt, a):
        k = min(np.searchsorted(starts, tt, side="right") - 1, len(drive) - 1)
        return -lam * a + 1j * amps[k]

    out = np.empty(t.size, dtype=complex)
    out[0] = a = complex(a0)
    for i in range(1, t.size):
        t0, h = t[i - 1], t[i] - t[i - 1]
        # segment boundaries are grid-aligned when dt divides the durations;
        # evaluating the drive at the left-open midpoint keeps RK4 on one segment
        k1 = rhs(t0 + 1e-12 * h, a)
        k2 = rhs(t0 + h / 2, a + h / 2 * k1)
        k3 = rhs(t0 + h / 2, a + h / 2 * k2)
        k4 = rhs(t0 + h * (1 - 1e-12), a + h * k3)
        a = a + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i] = a
    return t, out


def steady_state_field(params: SystemParams, omega: float, phi: float = 0.0) -> complex:
    return 1j * omega * np.exp(1j * phi) / complex(params.kappa, -params.delta)


def omega_from_power(power: float, kappa_si: float, omega_laser: float) -> float:
    """Drive rate ``Omega = sqrt(kappa P / (hbar omega))`` in rad/s."""
    return math.sqrt(kappa_si * power / (HBAR * omega_laser))


def power_from_omega(omega_drive: float, kappa_si: float, omega_laser: float) -> float:
    return omega_drive ** 2 * HBAR * omega_laser / kappa_si


def drive_from_json(text: str) -> list[DriveSegment]:
    return [DriveSegment(float(d["omega"]), float(d.get("phi", 0.0)), float(d["duration"]))
            for d in json.loads(text)]


def drive_to_json(drive: Sequence[DriveSegment]) -> str:
    return json.dumps([{"omega": s.omega, "phi": s.phi, "duration": s.duration} for s in drive])


def trajectory_csv(t: np.ndarray, z: np.ndarray, name: str = "a") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", f"re_{name}", f"im_{name}"])
    for tt, zz in zip(t, z):
        w.writerow([repr(float(tt)), repr(float(zz.real)), repr(float(zz.imag))])
    return buf.getvalue()


def coupling_to_drive(params: SystemParams, G_values: Sequence[complex], durations: Sequence[float],
                      G_start: complex = 0j) -> list[complex]:
    """Complex drive amplitudes that make G reach ``G_values[k]`` at the end of segment k.

    Inverts the per-segment closed form; used to report the physical drive
    behind an optimised coupling schedule.
    """
    lam = complex(params.kappa, params.delta)
    out = []
    g = complex(G_start)
    for target, tau in zip(G_values, durations):
        growth = tau if lam == 0 else -np.expm1(-lam * tau) / lam
        out.append((target - g * np.exp(-lam * tau)) / (1j * params.g0 * growth))
        g = complex(target)
    return out
