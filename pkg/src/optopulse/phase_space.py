"""Quadratic Hamiltonians on phase space and their Lie algebra.

Quadratures are ordered ``R = (x_1, p_1, ..., x_N, p_N)`` with
``x = (a + a^dag)/sqrt(2)``, ``p = i (a^dag - a)/sqrt(2)``, ``[x, p] = i``.
A quadratic Hamiltonian is stored as ``H = 1/2 R^T V R + c^T R`` (constants
dropped).  Heisenberg equations then read ``dR/dt = sigma (V R + c)`` with
``sigma`` the symplectic form.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

TWO_MODE_LABELS = ("xc", "pc", "xm", "pm")


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True, eq=False)
class QuadraticHamiltonian:
    V: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        V = np.array(self.V, dtype=float)
        c = np.array(self.c, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1] or V.shape[0] % 2:
            raise ValueError(f"V must be a 2N x 2N matrix, got shape {V.shape}")
        if c.shape != (V.shape[0],):
            raise ValueError(f"c must have length {V.shape[0]}, got {c.shape}")
        if not np.allclose(V, V.T, rtol=0, atol=1e-12 * max(1.0, np.abs(V).max())):
            raise ValueError("V must be symmetric")
        object.__setattr__(self, "V", (V + V.T) / 2)
        object.__setattr__(self, "c", c)

    @property
    def dim(self) -> int:
        return self.V.shape[0]

    @property
    def n_modes(self) -> int:
        return self.dim // 2

    @classmethod
    def zero(cls, n_modes: int = 2) -> "QuadraticHamiltonian":
        return cls(np.zeros((2 * n_modes, 2 * n_modes)), np.zeros(2 * n_modes))

    @classmethod
    def from_terms(cls, terms: Mapping[str, float], labels: Sequence[str] = TWO_MODE_LABELS):
        """Build from monomials such as ``{"xc*xm": 0.3, "pm*pm": 0.5, "xm": 1.0}``.

        A product of two different quadratures means their symmetrised product.
        """
        index = {name: i for i, name in enumerate(labels)}
        n = len(labels)
        V = np.zeros((n, n))
        c = np.zeros(n)
        for key, coef in terms.items():
            ops = key.split("*")
            if len(ops) == 1:
                c[index[ops[0]]] += coef
            elif len(ops) == 2:
                i, j = index[ops[0]], index[ops[1]]
                if i == j:
                    V[i, i] += 2 * coef
                else:
                    V[i, j] += coef
                    V[j, i] += coef
            else:
                raise ValueError(f"monomial {key!r} is not quadratic")
        return cls(V, c)

    def coefficient(self, a: str, b: str | None = None, labels: Sequence[str] = TWO_MODE_LABELS) -> float:
        """Coefficient of the monomial ``a*b`` (or of ``a`` alone) in H."""
        index = {name: i for i, name in enumerate(labels)}
        if b is None:
            return float(self.c[index[a]])
        i, j = index[a], index[b]
        return float(self.V[i, i] / 2 if i == j else self.V[i, j])

    def __add__(self, other: "QuadraticHamiltonian") -> "QuadraticHamiltonian":
        return QuadraticHamiltonian(self.V + other.V, self.c + other.c)

    def __sub__(self, other: "QuadraticHamiltonian") -> "QuadraticHamiltonian":
        return QuadraticHamiltonian(self.V - other.V, self.c - other.c)

    def __mul__(self, s: float) -> "QuadraticHamiltonian":
        return QuadraticHamiltonian(s * self.V, s * self.c)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def generator(self) -> np.ndarray:
        """Linear flow matrix ``sigma V``."""
        return symplectic_form(self.n_modes) @ self.V

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.V ** 2) + np.sum(self.c ** 2)))

    def allclose(self, other: "QuadraticHamiltonian", atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.V, other.V, rtol=0, atol=atol)
                    and np.allclose(self.c, other.c, rtol=0, atol=atol))


def bracket(h1: QuadraticHamiltonian, h2: QuadraticHamiltonian) -> QuadraticHamiltonian:
    """``i [H1, H2]`` as a quadratic Hamiltonian (the constant part is dropped)."""
    s = symplectic_form(h1.n_modes)
    V = h2.V @ s @ h1.V - h1.V @ s @ h2.V
    c = h2.V @ s @ h1.c - h1.V @ s @ h2.c
    return QuadraticHamiltonian((V + V.T) / 2, c)


def is_zero(h: QuadraticHamiltonian, scale: float = 1.0, rtol: float = 1e-12) -> bool:
    return h.norm() <= rtol * max(scale, 1e-300)
