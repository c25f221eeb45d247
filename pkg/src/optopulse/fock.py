"""Truncated Fock-space simulation of cavity + mechanics models.

Modes are addressed by short keys:

``c``  single optical cavity
``a``  antisymmetric double-cavity mode ``(a1 + a2)/sqrt(2)``
``s``  symmetric double-cavity mode ``(a1 - a2)/sqrt(2)``
``m``  mechanical oscillator

Hamiltonians are sums of monomials in ``x``, ``p``, ``n`` (and, for
completeness, the ladder operators ``a``/``ad``) built as sparse matrices on
the product basis.  Pure states evolve with Krylov-type exponential actions;
open-system runs integrate the master equation for small spaces.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .model import SystemParams

logger = logging.getLogger(__name__)

MODE_LABELS = {"c": "cavity", "a": "antisymmetric", "s": "symmetric", "m": "mechanical"}
SINGLE_OPS = ("x", "p", "n", "a", "ad")
_OP_DEGREE = {"x": 1, "p": 1, "a": 1, "ad": 1, "n": 2}


class BudgetError(ValueError):
    pass


class NonHermitianError(ValueError):
    pass


class NormDriftError(RuntimeError):
    pass


@dataclass(frozen=True)
class FockConfig:
    dims: tuple[int, ...]
    modes: tuple[str, ...]
    budget: int = 200_000

    def __post_init__(self):
        dims, modes = tuple(int(d) for d in self.dims), tuple(self.modes)
        if len(dims) != len(modes):
            raise ValueError("dims and modes must have equal length")
        if len(set(modes)) != len(modes):
            raise ValueError(f"duplicate mode keys in {modes}")
        for m in modes:
            if m not in MODE_LABELS:
                raise ValueError(f"unknown mode {m!r}; expected one of {sorted(MODE_LABELS)}")
        if min(dims) < 2:
            raise ValueError("every mode needs dimension >= 2")
        if self.total > self.budget:
            raise BudgetError(f"total dimension {self.total} exceeds budget {self.budget}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "modes", modes)

    @property
    def total(self) -> int:
        return math.prod(self.dims)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(MODE_LABELS[m] for m in self.modes)

    def index(self, mode: str) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise KeyError(f"mode {mode!r} not in {self.modes}") from None

    def enlarged(self, extra: int) -> "FockConfig":
        return FockConfig(tuple(d + extra for d in self.dims), self.modes, self.budget)


@dataclass(frozen=True)
class Term:
    """``coefficient * prod(op_mode)``; factors are ``(mode, op)`` pairs."""

    coefficient: complex
    factors: tuple[tuple[str, str], ...]

    @property
    def degree(self) -> int:
        return sum(_OP_DEGREE[op] for _, op in self.factors)


@dataclass
class HamiltonianTermList:
    terms: list[Term] = field(default_factory=list)

    def add(self, coefficient: complex, *factors: str) -> "HamiltonianTermList":
        """Append a monomial given as strings like ``"x_a"`` or ``"n_m"``."""
        parsed = []
        for f in factors:
            op, _, mode = f.partition("_")
            if op not in SINGLE_OPS or not mode:
                raise ValueError(f"bad factor {f!r}; expected <op>_<mode> with op in {SINGLE_OPS}")
            parsed.append((mode, op))
        term = Term(coefficient, tuple(parsed))
        if term.degree > 3:
            raise ValueError(f"degree {term.degree} exceeds 3 for {factors}")
        if coefficient != 0:
            self.terms.append(term)
        return self

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "HamiltonianTermList") -> "HamiltonianTermList":
        return HamiltonianTermList(self.terms + other.terms)

    def scaled(self, s: float) -> "HamiltonianTermList":
        return HamiltonianTermList([Term(t.coefficient * s, t.factors) for t in self.terms])


def _single_mode_ops(dim: int) -> dict[str, sp.csr_matrix]:
    a = sp.diags(np.sqrt(np.arange(1, dim)), 1, format="csr", dtype=complex)
    ad = a.getH().tocsr()
    return {
        "a": a,
        "ad": ad,
        "x": ((a + ad) / math.sqrt(2)).tocsr(),
        "p": (1j * (ad - a) / math.sqrt(2)).tocsr(),
        "n": sp.diags(np.arange(dim, dtype=complex), 0, format="csr"),
    }


def _embed(config: FockConfig, local: Mapping[int, sp.spmatrix]) -> sp.csr_matrix:
    out = None
    for k, d in enumerate(config.dims):
        op = local.get(k, sp.identity(d, dtype=complex, format="csr"))
        out = op if out is None else sp.kron(out, op, format="csr")
    return out.tocsr()


def mode_operator(config: FockConfig, mode: str, op: str) -> sp.csr_matrix:
    k = config.index(mode)
    return _embed(config, {k: _single_mode_ops(config.dims[k])[op]})


def build_hamiltonian(terms: Iterable[Term], config: FockConfig) -> sp.csr_matrix:
    """Assemble a sparse Hermitian matrix from a term list.

    Products of ``x`` and ``p`` on the same mode are symmetrised; ladder
    operators are taken as written, so a list that is not Hermitian raises.
    """
    ops = [_single_mode_ops(d) for d in config.dims]
    H = sp.csr_matrix((config.total, config.total), dtype=complex)
    for term in terms:
        per_mode: dict[int, sp.csr_matrix] = {}
        for mode, op in term.factors:
            k = config.index(mode)
            local = ops[k][op]
            per_mode[k] = local if k not in per_mode else (per_mode[k] @ local).tocsr()
        for k, local in per_mode.items():
            names = [op for mode, op in term.factors if config.index(mode) == k]
            if all(n in ("x", "p") for n in names) and len(set(names)) > 1:
                per_mode[k] = ((local + local.getH()) / 2).tocsr()
        H = H + term.coefficient * _embed(config, per_mode)
    H = H.tocsr()
    H.eliminate_zeros()
    if H.nnz:
        skew = abs(H - H.getH()).max()
        if skew > 1e-12 * max(1.0, abs(H).max()):
            raise NonHermitianError(f"assembled Hamiltonian is not Hermitian (max |H - H^dag| = {skew:.3g})")
    return H


# states ---------------------------------------------------------------------

def _single_mode_coherent(dim: int, alpha: complex) -> np.ndarray:
    k = np.arange(dim)
    log_fact = np.array([math.lgamma(i + 1) for i in k])
    if alpha == 0:
        v = np.zeros(dim, dtype=complex)
        v[0] = 1
        return v
    amp = np.exp(-abs(alpha) ** 2 / 2 + k * np.log(abs(alpha)) - log_fact / 2) * np.exp(1j * k * np.angle(alpha))
    return amp.astype(complex)


def product_state(config: FockConfig, factors: Mapping[str, np.ndarray]) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for mode, d in zip(config.modes, config.dims):
        v = factors.get(mode)
        if v is None:
            v = np.zeros(d, dtype=complex)
            v[0] = 1
        out = np.kron(out, v)
    return out


def fock_state(config: FockConfig, occupations: Mapping[str, int]) -> np.ndarray:
    factors = {}
    for mode, n in occupations.items():
        d = config.dims[config.index(mode)]
        if not 0 <= n < d:
            raise ValueError(f"occupation {n} outside truncation of mode {mode!r}")
        v = np.zeros(d, dtype=complex)
        v[n] = 1
        factors[mode] = v
    return product_state(config, factors)


def coherent_state(config: FockConfig, amplitudes: Mapping[str, complex], normalize: bool = True) -> np.ndarray:
    """Product of truncated coherent states (renormalised unless told otherwise)."""
    factors = {m: _single_mode_coherent(config.dims[config.index(m)], complex(a)) for m, a in amplitudes.items()}
    psi = product_state(config, factors)
    return psi / np.linalg.norm(psi) if normalize else psi


def thermal_density(config: FockConfig, nbars: Mapping[str, float]) -> np.ndarray:
    """Product of truncated (renormalised) thermal states as a dense matrix."""
    rho = np.ones((1, 1))
    for mode, d in zip(config.modes, config.dims):
        nbar = nbars.get(mode, 0.0)
        if nbar > 0:
            q = nbar / (1 + nbar)
            w = q ** np.arange(d)
        else:
            w = np.eye(d)[0]
        rho = np.kron(rho, np.diag(w / w.sum()))
    return rho.astype(complex)


def mode_energy(state: np.ndarray, mode: str, config: FockConfig) -> float:
    """Occupation ``<n_mode>`` of a state vector or density matrix."""
    k = config.index(mode)
    diag_n = _number_diagonal(config, k)
    if state.ndim == 1:
        return float(np.real(np.vdot(state, diag_n * state)))
    return float(np.real(np.sum(diag_n * np.diag(state))))


def _number_diagonal(config: FockConfig, k: int) -> np.ndarray:
    dims = config.dims
    inner = math.prod(dims[k + 1:])
    outer = math.prod(dims[:k])
    return np.tile(np.repeat(np.arange(dims[k], dtype=float), inner), outer)


def edge_population(state: np.ndarray, mode: str, config: FockConfig) -> float:
    """Population in the highest retained Fock level of ``mode`` (truncation monitor)."""
    k = config.index(mode)
    levels = _number_diagonal(config, k)
    top = levels == config.dims[k] - 1
    if state.ndim == 1:
        return float(np.sum(np.abs(state[top]) ** 2))
    return float(np.real(np.sum(np.diag(state)[top])))


# evolution ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FockTrajectory:
    t: np.ndarray
    energies: dict[str, np.ndarray]
    norms: np.ndarray
    final_state: np.ndarray
    segment_ends: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        modes = list(self.energies)
        w.writerow(["t", *[f"n_{m}" for m in modes], "norm"])
        for i in range(self.t.size):
            w.writerow([repr(float(self.t[i])), *[repr(float(self.energies[m][i])) for m in modes],
                        repr(float(self.norms[i]))])
        return buf.getvalue()


def evolve(psi0: np.ndarray, segments: Sequence[tuple[sp.spmatrix, float]], config: FockConfig,
           dt: float | None = None, norm_tol: float = 1e-6) -> FockTrajectory:
    """Evolve a pure state through piecewise-constant Hamiltonians.

    Observables are recorded at every segment boundary and, if ``dt`` is
    given, on a grid of spacing at most ``dt`` inside each segment.
    """
    psi = np.asarray(psi0, dtype=complex)
    if psi.shape != (config.total,):
        raise ValueError(f"state has shape {psi.shape}, expected ({config.total},)")
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ValueError("initial state must be normalised")
    diag = {m: _number_diagonal(config, config.index(m)) for m in config.modes}
    ts, norms = [0.0], [1.0]
    energies = {m: [float(np.real(np.vdot(psi, diag[m] * psi)))] for m in config.modes}
    t = 0.0
    ends = []
    for H, tau in segments:
        if tau < 0:
            raise ValueError("segment durations must be non-negative")
        if tau == 0:
            ends.append(t)
            continue
        steps = 1 if dt is None else max(1, int(math.ceil(tau / dt - 1e-9)))
        A = (-1j * H).tocsc()
        if steps == 1:
            chunk = expm_multiply(A * tau, psi)[None, :]
        else:
            chunk = expm_multiply(A, psi, start=0.0, stop=tau, num=steps + 1, endpoint=True)[1:]
        for j, v in enumerate(chunk):
            norm = float(np.linalg.norm(v))
            if abs(norm - 1) > norm_tol:
                raise NormDriftError(f"norm drift {abs(norm - 1):.3g} at t={t + tau * (j + 1) / len(chunk):.6g}; "
                                     "reduce the step or the truncation")
            ts.append(t + tau * (j + 1) / len(chunk))
            norms.append(norm)
            for m in config.modes:
                energies[m].append(float(np.real(np.vdot(v, diag[m] * v))) / norm ** 2)
        psi = chunk[-1]
        t += tau
        ends.append(t)
    return FockTrajectory(np.array(ts), {m: np.array(v) for m, v in energies.items()},
                          np.array(norms), psi, np.array(ends))


def lindblad_evolve(rho0: np.ndarray, segments: Sequence[tuple[sp.spmatrix, float]], config: FockConfig,
                    decay: Mapping[str, float], dt: float, max_dim: int = 1000) -> FockTrajectory:
    """RK4 integration of the master equation with amplitude decay per mode.

    Mode ``k`` decays through ``L = sqrt(2 kappa_k) a_k`` so that its
    occupation relaxes as ``exp(-2 kappa_k t)`` and its amplitude as
    ``exp(-kappa_k t)``, matching the moment equations.
    """
    if config.total > max_dim:
        raise BudgetError(f"density matrix dimension {config.total} exceeds {max_dim}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    rho = np.asarray(rho0, dtype=complex)
    jumps = []
    for mode, rate in decay.items():
        if rate < 0:
            raise ValueError("decay rates must be non-negative")
        if rate > 0:
            L = (math.sqrt(2 * rate) * mode_operator(config, mode, "a")).tocsr()
            jumps.append((L, (L.getH() @ L).tocsr()))
    diag = {m: _number_diagonal(config, config.index(m)) for m in config.modes}

    def record(r):
        d = np.real(np.diag(r))
        return {m: float(d @ diag[m]) for m in config.modes}, float(np.sum(d))

    e0, n0 = record(rho)
    ts, norms = [0.0], [n0]
    energies = {m: [e0[m]] for m in config.modes}
    t = 0.0
    ends = []
    for H, tau in segments:
        K = (-1j * sp.csr_matrix(H)).tocsr()
        for _, LdL in jumps:
            K = K - 0.5 * LdL
        K = K.tocsr()

        # rho stays Hermitian, so r K^dag = (K r)^dag and L r L^dag = L (L r)^dag;
        # only sparse-dense products remain
        def rhs(r):
            Kr = K @ r
            out = Kr + Kr.conj().T
            for L, _ in jumps:
                out += L @ (L @ r).conj().T
            return out

        steps = max(1, int(math.ceil(tau / dt - 1e-9)))
        h = tau / steps
        for _ in range(steps):
            k1 = rhs(rho)
            k2 = rhs(rho + h / 2 * k1)
            k3 = rhs(rho + h / 2 * k2)
            k4 = rhs(rho + h * k3)
            rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            rho = (rho + rho.conj().T) / 2
            t += h
            e, n = record(rho)
            ts.append(t)
            norms.append(n)
            for m in config.modes:
                energies[m].append(e[m])
        ends.append(t)
    return FockTrajectory(np.array(ts), {m: np.array(v) for m, v in energies.items()},
                          np.array(norms), rho, np.array(ends))


# model Hamiltonians ---------------------------------------------------------

def full_single_cavity_terms(params: SystemParams, omega: float = 0.0, phi: float = 0.0) -> HamiltonianTermList:
    """``Delta a^dag a + nu b^dag b + (g0/sqrt2) a^dag a (b + b^dag) + Omega (a^dag e^{-i phi} + a e^{i phi})``."""
    terms = HamiltonianTermList()
    terms.add(params.delta, "n_c").add(params.nu, "n_m").add(params.g0, "n_c", "x_m")
    terms.add(math.sqrt(2) * omega * math.cos(phi), "x_c").add(-math.sqrt(2) * omega * math.sin(phi), "p_c")
    return terms


def linearized_terms(params: SystemParams, G: complex, include_linear: bool = True) -> HamiltonianTermList:
    """Fock image of the linearised cavity + mechanics Hamiltonian (see covariance module)."""
    G = complex(G)
    terms = HamiltonianTermList()
    terms.add(params.delta, "n_c").add(params.nu, "n_m")
    terms.add(math.sqrt(2) * G.real, "x_c", "x_m").add(-math.sqrt(2) * G.imag, "p_c", "x_m")
    if include_linear:
        terms.add(abs(G) ** 2, "x_m")
    return terms


def double_cavity_terms(params: SystemParams) -> HamiltonianTermList:
    """``Delta (n_a + n_s) + nu n_m + g0 (x_a x_s + p_a p_s) x_m``."""
    terms = HamiltonianTermList()
    terms.add(params.delta, "n_a").add(params.delta, "n_s").add(params.nu, "n_m")
    terms.add(params.g0, "x_a", "x_s", "x_m").add(params.g0, "p_a", "p_s", "x_m")
    return terms


def two_cavity_terms(params: SystemParams) -> HamiltonianTermList:
    """The same double cavity written in the original modes ``a1 = c``, ``a2 = a``.

    ``Delta (n_1 + n_2) + nu n_m + g0 (n_1 - n_2) x_m``; only meant for
    cross-checking the mode transformation on small spaces.
    """
    terms = HamiltonianTermList()
    terms.add(params.delta, "n_c").add(params.delta, "n_a").add(params.nu, "n_m")
    terms.add(params.g0, "n_c", "x_m").add(-params.g0, "n_a", "x_m")
    return terms
