"""Analytic pulse/counter-pulse schedules and their predicted effective Hamiltonians.

A pulse sequence ``{-O, h, +O}`` with durations ``(t_p, t_f, t_p)`` acts, in
the limit of short strong pulses, like ``exp(-i t_f h')`` where ``h'`` is
``h`` with every quadrature replaced by its flow under the first pulse.
For quadratic ``h`` this is :func:`symplectic.conjugate`; for the cubic
double-cavity Hamiltonian the same linear substitution is applied to the
polynomial symbolically.

Two sequences are compiled:

* the linear-regime beam splitter (and its blue-sideband mirror) built from
  ``p_c x_m`` pulses on the linearised coupling, and
* the nested double-cavity swap built from ``x_a`` pulses with a ``p_a``
  counter-drive, generating ``x_s x_m`` and ``p_s p_m`` couplings.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import sympy

from .covariance import build_linear_hamiltonian
from .fock import FockConfig, HamiltonianTermList, build_hamiltonian, double_cavity_terms, linearized_terms
from .model import DomainError, SystemParams
from .phase_space import QuadraticHamiltonian
from .symplectic import conjugate, segment_propagator

logger = logging.getLogger(__name__)

TARGETS = ("G_real", "G_imag", "drive_x_a", "drive_p_a", "drive_x_s", "drive_p_s")
LINEAR_TARGETS = ("G_real", "G_imag")
ROLES = ("pulse", "window", "correction")
SQRT2 = math.sqrt(2.0)
THREE_MODE_LABELS = ("xa", "pa", "xs", "ps", "xm", "pm")


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    """One constant control value.

    ``role`` drives :func:`trotterize`: windows are shortened, pulses are
    kept, corrections keep their duration but scale their amplitude.
    """

    target: str
    amplitude: float
    duration: float
    label: str = ""
    role: str = "window"

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ScheduleError(f"unknown control target {self.target!r}")
        if not self.duration > 0:
            raise ScheduleError(f"segment duration must be positive, got {self.duration}")
        if self.role not in ROLES:
            raise ScheduleError(f"unknown role {self.role!r}")

    def to_dict(self) -> dict:
        return {"target": self.target, "amplitude": self.amplitude, "duration": self.duration,
                "label": self.label, "role": self.role}


@dataclass(frozen=True, eq=False)
class PulseSchedule:
    """Ordered control segments plus what the compiler expects them to do.

    ``pairs`` lists ``(pulse, counter)`` segment indices whose amplitudes
    must be exact negatives.  ``predicted`` is the effective quadratic
    Hamiltonian of one cycle (linear kind) and ``predicted_terms`` the
    effective monomial list (nonlinear kind); both act for
    ``effective_time`` per cycle.
    """

    segments: tuple[Segment, ...]
    kind: str
    predicted: QuadraticHamiltonian | None = None
    predicted_terms: dict[str, float] = field(default_factory=dict)
    effective_time: float = 0.0
    pairs: tuple[tuple[int, int], ...] = ()
    warnings: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.kind not in ("linear", "nonlinear"):
            raise ScheduleError(f"unknown schedule kind {self.kind!r}")
        for i, j in self.pairs:
            if self.segments[i].amplitude != -self.segments[j].amplitude:
                raise ScheduleError(f"segments {i} and {j} are paired but not exact negatives")
        if self.kind == "linear":
            bad = [s.target for s in self.segments if s.target not in LINEAR_TARGETS]
            if bad:
                raise ScheduleError(f"linear schedule cannot drive {bad[0]}")

    def __len__(self):
        return len(self.segments)

    @property
    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.segments])

    @property
    def total_time(self) -> float:
        return float(self.durations.sum())

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.segments]

    @property
    def time_vector(self) -> list[tuple[str, float]]:
        return [(s.label, s.duration) for s in self.segments]

    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    # realisations ----------------------------------------------------------

    def coupling_values(self) -> np.ndarray:
        """Complex G per segment (linear kind only)."""
        self._require("linear")
        return np.array([s.amplitude if s.target == "G_real" else 1j * s.amplitude for s in self.segments])

    def quadratic_segments(self, params: SystemParams, include_linear: bool = False):
        """``(QuadraticHamiltonian, duration)`` per segment of a linear schedule.

        ``include_linear`` adds the ``|G|^2 x_m`` radiation-pressure term that
        accompanies a physical coupling; the pulse algebra itself ignores it.
        """
        out = []
        for G, s in zip(self.coupling_values(), self.segments):
            h = build_linear_hamiltonian(params, G)
            if not include_linear:
                h = QuadraticHamiltonian(h.V, np.zeros(4))
            out.append((h, s.duration))
        return out

    def fock_segments(self, params: SystemParams, config: FockConfig, include_linear: bool = False):
        """Sparse Hamiltonian and duration per segment on ``config``."""
        out = []
        if self.kind == "linear":
            for G, s in zip(self.coupling_values(), self.segments):
                H = build_hamiltonian(linearized_terms(params, G, include_linear), config)
                out.append((H, s.duration))
            return out
        H0 = build_hamiltonian(double_cavity_terms(params), config)
        cache = {}
        for s in self.segments:
            key = (s.target, s.amplitude)
            if key not in cache:
                op, mode = s.target.split("_")[1:]
                drive = HamiltonianTermList().add(s.amplitude, f"{op}_{mode}")
                cache[key] = (H0 + build_hamiltonian(drive, config)).tocsr()
            out.append((cache[key], s.duration))
        return out

    def _require(self, kind):
        if self.kind != kind:
            raise ScheduleError(f"operation needs a {kind} schedule, got {self.kind}")

    # serialisation --------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "segments": [s.to_dict() for s in self.segments],
            "effective_time": self.effective_time,
            "pairs": [list(p) for p in self.pairs],
            "warnings": list(self.warnings),
            "metadata": self.metadata,
            "predicted_terms": self.predicted_terms,
        }
        if self.predicted is not None:
            d["predicted"] = {"V": self.predicted.V.tolist(), "c": self.predicted.c.tolist()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "PulseSchedule":
        pred = d.get("predicted")
        return cls(
            segments=tuple(Segment(**s) for s in d["segments"]),
            kind=d["kind"],
            predicted=None if pred is None else QuadraticHamiltonian(pred["V"], pred["c"]),
            predicted_terms=dict(d.get("predicted_terms", {})),
            effective_time=float(d.get("effective_time", 0.0)),
            pairs=tuple(tuple(p) for p in d.get("pairs", [])),
            warnings=tuple(d.get("warnings", [])),
            metadata=dict(d.get("metadata", {})),
        )

    def drive_json(self) -> str:
        """Segments in the plain drive format ``[{omega, phi, duration}]``.

        Control targets become phases: real/``x`` targets use ``phi = 0``
        (``pi`` for negative values) and imaginary/``p`` targets
        ``phi = +-pi/2``.
        """
        out = []
        for s in self.segments:
            quadrature_p = s.target in ("G_imag", "drive_p_a", "drive_p_s")
            phi = (math.pi / 2 if quadrature_p else 0.0) + (math.pi if s.amplitude < 0 else 0.0)
            out.append({"target": s.target, "omega": abs(s.amplitude), "phi": phi, "duration": s.duration})
        return json.dumps(out)

    def predicted_report(self) -> dict:
        """Predicted effective Hamiltonian as a flat monomial -> coefficient map."""
        if self.kind == "nonlinear":
            return dict(self.predicted_terms)
        return quadratic_terms(self.predicted)


def quadratic_terms(h: QuadraticHamiltonian, labels: Sequence[str] = ("xc", "pc", "xm", "pm"),
                    tol: float = 1e-14) -> dict[str, float]:
    out = {}
    n = len(labels)
    for i in range(n):
        for j in range(i, n):
            coef = h.coefficient(labels[i], labels[j], labels)
            if abs(coef) > tol:
                out[f"{labels[i]}*{labels[j]}"] = coef
        if abs(h.c[i]) > tol:
            out[labels[i]] = float(h.c[i])
    return out


# linear regime ------------------------------------------------------------------

def _free_hamiltonian(params: SystemParams) -> QuadraticHamiltonian:
    return QuadraticHamiltonian(np.diag([params.delta, params.delta, params.nu, params.nu]), np.zeros(4))


PULSE_OPERATOR = QuadraticHamiltonian.from_terms({"pc*xm": 1.0})
COMPENSATION_OPERATOR = QuadraticHamiltonian.from_terms({"xc*xm": 1.0})


def compile_linear_beamsplitter(params: SystemParams, strength: float, t1: float, tf: float,
                                sideband: str = "red", compensation: str = "concurrent",
                                t_comp: float | None = None) -> PulseSchedule:
    """Pulse / window / counter-pulse sequence generating a sideband coupling.

    The pulse adds ``-strength * p_c x_m`` for ``t1``, the counter-pulse
    ``+strength * p_c x_m``; in between the system evolves freely for ``tf``.
    With area ``A = strength * t1`` this turns ``H0`` into
    ``H0 + A nu p_c p_m - A Delta x_c x_m`` to first order in ``A``.

    ``sideband="red"`` adds an ``x_c x_m`` compensation of strength
    ``A (nu + Delta)`` so that both couplings carry ``A nu``:

    * ``compensation="concurrent"`` applies it during the window, giving the
      three-segment cycle ``[pulse, window + compensation, counter]``;
    * ``compensation="segment"`` applies it as a separate fourth segment of
      length ``t_comp`` (default ``tf``) after the counter-pulse, with its
      strength scaled by ``tf / t_comp``.  The cycle then only averages to
      the beam splitter, at half the rate when ``t_comp = tf``.

    ``sideband="blue"`` swaps pulse and counter-pulse and needs no
    compensation; it generates ``A nu (x_c x_m - p_c p_m)`` at resonance.
    """
    if sideband not in ("red", "blue"):
        raise ValueError(f"sideband must be 'red' or 'blue', got {sideband!r}")
    if compensation not in ("concurrent", "segment"):
        raise ValueError(f"unknown compensation mode {compensation!r}")
    if not (t1 > 0 and tf > 0):
        raise ScheduleError("t1 and tf must be positive")
    warnings = []
    if not math.isclose(params.delta, params.nu, rel_tol=1e-9):
        warnings.append(f"resonance violated: Delta={params.delta:g} != nu={params.nu:g}; "
                        "the two couplings will not be balanced")
    area = strength * t1
    sign = 1.0 if sideband == "red" else -1.0
    # pulse coefficient o on p_c x_m corresponds to G_imag = -o / sqrt(2)
    first = Segment("G_imag", sign * strength / SQRT2, t1, "pulse", "pulse")
    last = Segment("G_imag", -sign * strength / SQRT2, t1, "counter-pulse", "pulse")
    h0 = _free_hamiltonian(params)
    first_pulse = PULSE_OPERATOR * (-sign * strength)
    comp = area * (params.nu + params.delta) if sideband == "red" else 0.0

    if sideband == "blue" or compensation == "concurrent":
        window = Segment("G_real", comp / SQRT2, tf, "window", "window")
        segments = [first, window, last]
        window_h = h0 + COMPENSATION_OPERATOR * comp
        predicted = conjugate(window_h, first_pulse, t1)
        effective_time = tf
        rate = area * params.nu
    else:
        t_comp = tf if t_comp is None else t_comp
        if not t_comp > 0:
            raise ScheduleError("t_comp must be positive")
        comp_seg = comp * tf / t_comp
        segments = [first, Segment("G_real", 0.0, tf, "window", "window"), last,
                    Segment("G_real", comp_seg / SQRT2, t_comp, "compensation", "window")]
        effective_time = tf + t_comp
        predicted = (conjugate(h0, first_pulse, t1) * tf
                     + (h0 + COMPENSATION_OPERATOR * comp_seg) * t_comp) * (1.0 / effective_time)
        rate = area * params.nu * tf / effective_time

    meta = {
        "sideband": sideband,
        "compensation": compensation if sideband == "red" else "none",
        "strength": strength,
        "area": area,
        "t1": t1,
        "tf": tf,
        "coupling_rate": rate,
        "swap_time": math.pi / (2 * abs(rate)) if rate else math.inf,
        "cycle_time": float(sum(s.duration for s in segments)),
    }
    return PulseSchedule(tuple(segments), "linear", predicted, quadratic_terms(predicted), effective_time,
                         pairs=((0, 2),), warnings=tuple(warnings), metadata=meta)


# nonlinear double cavity ------------------------------------------------------

_SYMBOLS = sympy.symbols(THREE_MODE_LABELS, real=True)


def _double_cavity_polynomial(params: SystemParams):
    xa, pa, xs, ps, xm, pm = _SYMBOLS
    d, nu, g = params.delta, params.nu, params.g0
    return (sympy.Rational(1, 2) * d * (xa ** 2 + pa ** 2 + xs ** 2 + ps ** 2)
            + sympy.Rational(1, 2) * nu * (xm ** 2 + pm ** 2) + g * (xa * xs + pa * ps) * xm)


def _substitute(poly, flow):
    """Replace each quadrature R_i by ``(S R + d)_i``."""
    R = sympy.Matrix(_SYMBOLS)
    S = sympy.Matrix(flow.S_eff.tolist())
    image = S * R + sympy.Matrix(flow.d.tolist())
    return sympy.expand(poly.xreplace(dict(zip(_SYMBOLS, image))))


def polynomial_terms(poly, tol: float = 1e-12) -> dict[str, float]:
    """Monomial map ``{"xa*xm*xm": c, ...}`` of a polynomial, constants dropped."""
    out = {}
    for monom, coef in sympy.Poly(poly, *_SYMBOLS).terms():
        if sum(monom) == 0:
            continue
        coef = float(coef)
        if abs(coef) <= tol:
            continue
        key = "*".join(name for name, k in zip(THREE_MODE_LABELS, monom) for _ in range(k))
        out[key] = coef
    return out


def _quadratic_part(terms: Mapping[str, float]) -> QuadraticHamiltonian:
    quad = {k: v for k, v in terms.items() if k.count("*") <= 1}
    return QuadraticHamiltonian.from_terms(quad, THREE_MODE_LABELS)


def resonance_detuning(params: SystemParams, alpha: float) -> float:
    if alpha == 2:
        raise DomainError("alpha = 2 is a pole of the resonance condition Delta = 2 nu / (alpha - 2)")
    return 2 * params.nu / (alpha - 2)


def compile_nonlinear_swap(params: SystemParams, omega: float, t1: float, tf: float, tf_prime: float,
                           alpha: float, counter_drive: bool = True, correction: str = "pulse",
                           correction_time: float | None = None) -> PulseSchedule:
    """Nested double-cavity sequence producing an ``x_s x_m`` / ``p_s p_m`` swap.

    One cycle, in time order::

        -omega x_a (t1) | beta p_a (tf) | +omega x_a (t1) |
        free (tf_prime) |
        +omega x_a (t1) | -beta p_a (tf) | -omega x_a (t1) |
        x_a correction

    with ``beta = -(alpha + 2) Delta omega t1 / 2``.  Each inner triple
    acts as ``+-K`` with ``K = omega t1 (g0 p_s x_m - alpha Delta p_a / 2)``
    for ``t2 = 2 t1 + tf``; the outer triple conjugates ``H0`` by ``K`` and
    yields, for ``tau1 = omega t1 t2``,

        (alpha - 2) g0 Delta tau1 / 2 x_s x_m + g0 nu tau1 p_s p_m + ...

    balanced when ``Delta = 2 nu / (alpha - 2)``.  The residual linear
    ``x_a`` drive is cancelled by a final ``x_a`` segment whose area offsets
    it over the window ``tf_prime``.
    """
    delta_res = resonance_detuning(params, alpha)
    if correction not in ("pulse", "window", "none"):
        raise ValueError(f"correction must be 'pulse', 'window' or 'none', got {correction!r}")
    if min(t1, tf, tf_prime) <= 0 or omega <= 0:
        raise ScheduleError("omega and all durations must be positive")
    warnings = []
    if not math.isclose(params.delta, delta_res, rel_tol=1e-9):
        warnings.append(f"resonance violated: Delta={params.delta:g} but 2 nu/(alpha-2)={delta_res:g}")
    strength = omega * t1
    if strength < 10:
        warnings.append(f"strong-pulse validity: omega*t1 = {strength:.3g} < 10")
    beta = -(alpha + 2) * params.delta * omega * t1 / 2 if counter_drive else 0.0
    t2 = 2 * t1 + tf
    tau1 = omega * t1 * t2

    # inner triple: conjugate (H0 + beta p_a) by the first x_a pulse
    h0 = _double_cavity_polynomial(params)
    pa = _SYMBOLS[1]
    kick = segment_propagator(QuadraticHamiltonian.from_terms({"xa": -omega}, THREE_MODE_LABELS), t1)
    inner = polynomial_terms(_substitute(h0 + beta * pa, kick) - h0)
    outer_pulse = _quadratic_part(inner)
    # outer triple: conjugate H0 by the inner effective term over t2
    flow = segment_propagator(outer_pulse, t2)
    effective = _substitute(h0, flow) - h0
    terms = polynomial_terms(effective)
    x_a_drive = terms.get("xa", 0.0)

    segments = [
        Segment("drive_x_a", -omega, t1, "pulse", "pulse"),
        Segment("drive_p_a", beta, tf, "counter-drive", "pulse"),
        Segment("drive_x_a", omega, t1, "counter-pulse", "pulse"),
        Segment("drive_x_a", -x_a_drive if correction == "window" else 0.0, tf_prime, "window", "window"),
        Segment("drive_x_a", omega, t1, "inverted pulse", "pulse"),
        Segment("drive_p_a", -beta, tf, "inverted counter-drive", "pulse"),
        Segment("drive_x_a", -omega, t1, "inverted counter-pulse", "pulse"),
    ]
    if correction == "pulse" and x_a_drive:
        t_corr = t1 if correction_time is None else correction_time
        segments.append(Segment("drive_x_a", -x_a_drive * tf_prime / t_corr, t_corr, "x_a correction",
                                "correction"))
    predicted_terms = dict(terms)
    if correction != "none":
        predicted_terms.pop("xa", None)
    bs = terms.get("ps*pm", 0.0)
    meta = {
        "omega": omega, "t1": t1, "tf": tf, "tf_prime": tf_prime, "alpha": alpha, "beta": beta,
        "t2": t2, "t3": 2 * t2 + tf_prime, "tau1": tau1,
        "coupling_rate": bs,
        "x_a_drive": x_a_drive,
        "swap_time": math.pi / (2 * abs(bs)) if bs else math.inf,
        "inner_terms": inner,
        "counter_drive": counter_drive,
        "correction": correction,
        "delta": params.delta,
        "nu": params.nu,
    }
    return PulseSchedule(tuple(segments), "nonlinear", None, predicted_terms, tf_prime,
                         pairs=((0, 2), (4, 6), (1, 5)) if counter_drive else ((0, 2), (4, 6)),
                         warnings=tuple(warnings), metadata=meta)


def single_cavity_nonlinear_report(params: SystemParams, area: float) -> dict[str, float]:
    """Effective terms when a ``p_c x_m`` pulse of total area ``area`` conjugates
    the single-cavity Hamiltonian ``Delta n_c + nu n_m + g0 n_c x_m``.

    Diagnostic only: the cubic terms show why the single cavity cannot be
    linearised by pulsing.  Quadratures ``(x_c, p_c)`` are reported under
    the labels ``(xs, ps)``.
    """
    xa, pa, xs, ps, xm, pm = _SYMBOLS
    d, nu, g = params.delta, params.nu, params.g0
    h0 = (sympy.Rational(1, 2) * d * (xs ** 2 + ps ** 2) + sympy.Rational(1, 2) * nu * (xm ** 2 + pm ** 2)
          + sympy.Rational(1, 2) * g * (xs ** 2 + ps ** 2) * xm)
    pulse = QuadraticHamiltonian.from_terms({"ps*xm": -1.0}, THREE_MODE_LABELS)
    flow = segment_propagator(pulse, area)
    return polynomial_terms(_substitute(h0, flow) - h0)


# Trotterisation -----------------------------------------------------------------

def trotterize(schedule: PulseSchedule, repetitions: float) -> PulseSchedule:
    """Split a cycle into ``repetitions`` shorter copies.

    Window segments are shortened by the repetition factor, pulses are kept
    as they are (so each copy conjugates with the same pulse area and
    carries the same effective Hamiltonian), and correction segments keep
    their duration with amplitude divided by the factor.  The summed
    effective action is therefore unchanged.  A fractional count truncates
    the final copy at ``repetitions`` times the copy duration.
    """
    if repetitions < 1:
        raise ScheduleError(f"repetitions must be >= 1, got {repetitions}")
    if repetitions == 1:
        return schedule
    r = float(repetitions)
    cycle = []
    for s in schedule.segments:
        if s.role == "window":
            cycle.append(replace(s, duration=s.duration / r))
        elif s.role == "correction":
            cycle.append(replace(s, amplitude=s.amplitude / r))
        else:
            cycle.append(s)
    cycle_time = sum(s.duration for s in cycle)
    budget = r * cycle_time
    out: list[Segment] = []
    pairs = []
    t = 0.0
    for k in range(int(math.ceil(r))):
        base = len(out)
        for s in cycle:
            remaining = budget - t
            if remaining <= 1e-12 * budget:
                break
            if s.duration > remaining * (1 + 1e-12):
                out.append(replace(s, duration=remaining))
                t = budget
                break
            out.append(s)
            t += s.duration
        pairs += [(base + i, base + j) for i, j in schedule.pairs if base + max(i, j) < len(out)]
    # a truncated partner breaks the pair invariant; drop such pairs
    pairs = [(i, j) for i, j in pairs
             if out[i].amplitude == -out[j].amplitude]
    meta = dict(schedule.metadata, repetitions=r, cycle_time=cycle_time)
    return PulseSchedule(tuple(out), schedule.kind, schedule.predicted, schedule.predicted_terms,
                         schedule.effective_time, tuple(pairs), schedule.warnings, meta)


def predicted_swap_time(schedule: PulseSchedule, horizon: float = 2.0, samples: int = 2000) -> float:
    """Window time maximising mechanical-to-symmetric transfer under the
    quadratic part of the predicted double-cavity Hamiltonian.

    Unlike ``pi / (2 * coupling_rate)`` this accounts for the frequency
    shifts from the ``p_s^2`` and ``x_m^2`` terms.  Evaluated with the exact
    Gaussian propagator on a coherent mechanical state.
    """
    schedule._require("nonlinear")
    params_free = {"xa*xa": 0.5, "pa*pa": 0.5, "xs*xs": 0.5, "ps*ps": 0.5, "xm*xm": 0.5, "pm*pm": 0.5}
    meta = schedule.metadata
    scale = {"xa*xa": meta["delta"], "pa*pa": meta["delta"], "xs*xs": meta["delta"], "ps*ps": meta["delta"],
             "xm*xm": meta["nu"], "pm*pm": meta["nu"]}
    terms = {k: v for k, v in schedule.predicted_terms.items() if k.count("*") <= 1 and k != "xa"}
    for k, v in params_free.items():
        terms[k] = terms.get(k, 0.0) + v * scale[k]
    h = QuadraticHamiltonian.from_terms(terms, THREE_MODE_LABELS)
    naive = meta["swap_time"]
    if not math.isfinite(naive):
        return naive
    ts = np.linspace(0.0, horizon * naive, samples)
    mean0 = np.array([0, 0, 0, 0, SQRT2, 0.0])
    transfer = np.empty(samples)
    for k, t in enumerate(ts):
        flow = segment_propagator(h, t)
        m = flow.apply_mean(mean0)
        transfer[k] = (m[2] ** 2 + m[3] ** 2) / 2
    return float(ts[int(np.argmax(transfer))])
