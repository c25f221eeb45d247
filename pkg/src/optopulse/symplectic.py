"""Exact affine phase-space propagators for piecewise-constant quadratic Hamiltonians.

This is the verification backbone for the Gaussian dynamics: every
constant segment is exponentiated exactly, segments are composed as affine
maps ``R -> S R + d``, and pulse-sequence predictions are checked against it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .phase_space import QuadraticHamiltonian, bracket, symplectic_form


class UnsupportedSequenceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AffinePropagator:
    """Heisenberg-picture map ``R(t) = S_eff R(0) + d``."""

    S_eff: np.ndarray
    d: np.ndarray

    @property
    def dim(self) -> int:
        return self.S_eff.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "AffinePropagator":
        return cls(np.eye(dim), np.zeros(dim))

    def then(self, later: "AffinePropagator") -> "AffinePropagator":
        """Apply ``self`` first, then ``later``."""
        return AffinePropagator(later.S_eff @ self.S_eff, later.S_eff @ self.d + later.d)

    def inverse(self) -> "AffinePropagator":
        S_inv = np.linalg.inv(self.S_eff)
        return AffinePropagator(S_inv, -S_inv @ self.d)

    def symplectic_error(self) -> float:
        s = symplectic_form(self.dim // 2)
        return float(np.abs(self.S_eff @ s @ self.S_eff.T - s).max())

    def apply_covariance(self, gamma: np.ndarray) -> np.ndarray:
        return self.S_eff @ gamma @ self.S_eff.T

    def apply_mean(self, mean: np.ndarray) -> np.ndarray:
        return self.S_eff @ mean + self.d

    def to_json(self) -> str:
        return json.dumps({"S_eff": self.S_eff.tolist(), "d": self.d.tolist()})


def segment_propagator(h: QuadraticHamiltonian, duration: float) -> AffinePropagator:
    """Exact flow of ``H = 1/2 R^T V R + c^T R`` over ``duration``."""
    if duration < 0:
        raise ValueError(f"duration must be non-negative, got {duration}")
    n = h.dim
    aug = np.zeros((n + 1, n + 1))
    s = symplectic_form(h.n_modes)
    aug[:n, :n] = s @ h.V
    aug[:n, n] = s @ h.c
    E = expm(aug * duration)
    return AffinePropagator(E[:n, :n], E[:n, n].copy())


def compose(seq: Sequence[AffinePropagator]) -> AffinePropagator:
    """Compose propagators given in time order (``seq[0]`` acts first).

    The resulting matrix is the right-to-left product ``S_n ... S_1``.
    """
    if not seq:
        raise ValueError("cannot compose an empty sequence")
    dim = seq[0].dim
    out = AffinePropagator.identity(dim)
    for p in seq:
        if p.dim != dim:
            raise ValueError(f"dimension mismatch: {p.dim} != {dim}")
        out = out.then(p)
    return out


def schedule_propagator(segments: Sequence[tuple[QuadraticHamiltonian, float]]) -> AffinePropagator:
    return compose([segment_propagator(h, tau) for h, tau in segments])


def effective_propagator(h: QuadraticHamiltonian, duration: float) -> AffinePropagator:
    return segment_propagator(h, duration)


def conjugate(h: QuadraticHamiltonian, pulse: QuadraticHamiltonian, duration: float) -> QuadraticHamiltonian:
    """``exp(i P t) H exp(-i P t)``: H with every quadrature replaced by its flow under P."""
    flow = segment_propagator(pulse, duration)
    S, d = flow.S_eff, flow.d
    return QuadraticHamiltonian(S.T @ h.V @ S, S.T @ (h.V @ d + h.c))


def bch_effective_hamiltonian(h: QuadraticHamiltonian, pulse: QuadraticHamiltonian, strength: float,
                              t_p: float, order: int | str = 1) -> QuadraticHamiltonian:
    """Effective Hamiltonian of the sequence {-strength*pulse, h, +strength*pulse}.

    Segments are in time order with durations ``(t_p, t_f, t_p)``; in the
    strong-pulse limit the sequence acts as ``exp(-i t_f H_eff)``.

    ``order=1`` returns ``h - strength * t_p * i[pulse, h]``, which is linear
    in ``strength`` and ``t_p``.  It is accepted only when the adjoint series
    of the pulse acting on ``h`` terminates by third order, i.e. the dropped
    remainder commutes with the pulse.  ``order="exact"`` conjugates ``h``
    exactly with the pulse flow.
    """
    area = strength * t_p
    if order == "exact":
        return conjugate(h, pulse * -strength, t_p)
    if order != 1:
        raise ValueError(f"unsupported order {order!r}")
    first = bracket(pulse, h)
    second = bracket(pulse, first)
    third = bracket(pulse, second)
    scale = max(h.norm(), pulse.norm() * h.norm(), 1.0)
    if third.norm() > 1e-10 * scale * max(1.0, pulse.norm()) ** 2:
        raise UnsupportedSequenceError(
            "[o, [o, [o, h]]] != 0: the commutator [o, h] does not commute with o "
            f"up to quadratic order (norm {third.norm():.3g})")
    return h - first * area


@dataclass(frozen=True)
class BogoliubovParams:
    u: complex
    v: complex
    alpha: float
    beta: float
    delta_prime: float
    z_minus: float
    z_plus: float

    def symplectic(self) -> np.ndarray:
        """2x2 map ``(x, p) = T (x', p')`` induced by ``b = u a + v a^dag``."""
        u, v = self.u.real, self.v.real
        return np.diag([1.0 / (u + v), 1.0 / (u - v)])


def bogoliubov_from_quadratic(alpha: float, beta: float) -> BogoliubovParams:
    """Bogoliubov mode that turns ``alpha x^2 + beta p^2`` into ``Delta' (b^dag b + 1/2)``."""
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"alpha and beta must be positive, got {alpha}, {beta}")
    root4 = (alpha * beta) ** 0.25
    sa, sb = math.sqrt(alpha), math.sqrt(beta)
    return BogoliubovParams(
        u=complex(0.5 * (sa + sb) / root4),
        v=complex(0.5 * (sa - sb) / root4),
        alpha=alpha,
        beta=beta,
        delta_prime=2 * math.sqrt(alpha * beta),
        z_minus=(beta / alpha) ** 0.25,
        z_plus=(alpha / beta) ** 0.25,
    )


def quadratic_form_deviation(alpha: float, beta: float, params: BogoliubovParams | None = None) -> float:
    """Max deviation of ``T^T diag(2 alpha, 2 beta) T`` from ``Delta' * I``.

    With ``H = 1/2 R^T V R`` this checks ``alpha x^2 + beta p^2 = Delta'/2 (x'^2 + p'^2)
    = Delta' (b^dag b + 1/2)``.
    """
    params = params or bogoliubov_from_quadratic(alpha, beta)
    T = params.symplectic()
    V = np.diag([2 * alpha, 2 * beta])
    return float(np.abs(T.T @ V @ T - params.delta_prime * np.eye(2)).max())


def beamsplitter_invariance_check(params_s: BogoliubovParams, params_m: BogoliubovParams | None = None) -> float:
    """Operator-norm change of ``x_s x_m + p_s p_m`` under per-mode Bogoliubov maps.

    Both modes get ``params_s`` unless ``params_m`` is given.
    """
    params_m = params_s if params_m is None else params_m
    T = np.zeros((4, 4))
    T[:2, :2] = params_s.symplectic()
    T[2:, 2:] = params_m.symplectic()
    bs = QuadraticHamiltonian.from_terms({"xc*xm": 1.0, "pc*pm": 1.0}).V
    return float(np.linalg.norm(T.T @ bs @ T - bs, 2))
