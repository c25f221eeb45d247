"""Gaussian first and second moments of the linearised cavity + mechanics system.

Ordering is ``R = (x_c, p_c, x_m, p_m)`` and the covariance matrix is
``gamma_ij = 2 Re(<R_i R_j> - <R_i><R_j>)`` so that vacuum is the identity.
The moments obey

    d gamma / dt = M gamma + gamma M^T + D
    d <R> / dt   = M <R> + sigma c

with ``M = sigma V - damping``.  Two bath models are available:

``paper``
    damping ``(kappa/2) P`` and diffusion ``(kappa/2) P`` with
    ``P = diag(0, 1, 0, 1)``.  Only the momentum quadratures of *both*
    modes are damped.  This generator is not completely positive, so for
    ``kappa > 0`` states can drift below the uncertainty bound.
``extended``
    cavity amplitude decay at rate ``kappa`` on both quadratures with vacuum
    noise, plus a thermal mechanical bath ``(gamma_m, nbar_env)``.  This is
    exactly the Gaussian image of the master equation with jump operators
    ``sqrt(2 kappa) a``, ``sqrt(gamma_m (nbar+1)) b``, ``sqrt(gamma_m nbar) b^dag``,
    so cavity occupation decays as ``exp(-2 kappa t)``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

from .drive import CouplingHistory
from .model import BATH_MODELS, SystemParams
from .phase_space import QuadraticHamiltonian, symplectic_form

logger = logging.getLogger(__name__)

SIGMA = symplectic_form(2)
P_PAPER = np.diag([0.0, 1.0, 0.0, 1.0])
P_CAVITY = np.diag([1.0, 1.0, 0.0, 0.0])
P_MECH = np.diag([0.0, 0.0, 1.0, 1.0])
SQRT2 = math.sqrt(2.0)


class IntegrationInstabilityError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GaussianState:
    mean: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        gamma = np.array(self.gamma, dtype=float)
        if mean.shape != (4,) or gamma.shape != (4, 4):
            raise ValueError("expected a 4-vector mean and a 4x4 covariance")
        if not np.allclose(gamma, gamma.T, rtol=0, atol=1e-9 * max(1.0, np.abs(gamma).max())):
            raise ValueError("covariance matrix must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "gamma", (gamma + gamma.T) / 2)

    @classmethod
    def vacuum(cls) -> "GaussianState":
        return cls(np.zeros(4), np.eye(4))

    @classmethod
    def thermal(cls, n_cavity: float = 0.0, n_mech: float = 0.0) -> "GaussianState":
        return cls(np.zeros(4), np.diag([2 * n_cavity + 1] * 2 + [2 * n_mech + 1] * 2))

    @classmethod
    def coherent(cls, alpha_cavity: complex = 0j, alpha_mech: complex = 0j,
                 n_cavity: float = 0.0, n_mech: float = 0.0) -> "GaussianState":
        """Displaced thermal state; ``alpha`` is the ladder-operator amplitude."""
        mean = SQRT2 * np.array([alpha_cavity.real, alpha_cavity.imag, alpha_mech.real, alpha_mech.imag])
        return cls(mean, cls.thermal(n_cavity, n_mech).gamma)

    def uncertainty_margin(self) -> float:
        """Smallest eigenvalue of ``gamma + i sigma``; negative means unphysical."""
        return float(np.linalg.eigvalsh(self.gamma + 1j * SIGMA).min())

    def is_physical(self, tol: float = 1e-9) -> bool:
        return self.uncertainty_margin() >= -tol


def phonon_number(state: GaussianState) -> float:
    """Mechanical occupation including the coherent part."""
    g, m = state.gamma, state.mean
    return (g[2, 2] + g[3, 3] - 2) / 4 + (m[2] ** 2 + m[3] ** 2) / 2


def photon_number(state: GaussianState) -> float:
    g, m = state.gamma, state.mean
    return (g[0, 0] + g[1, 1] - 2) / 4 + (m[0] ** 2 + m[1] ** 2) / 2


def build_linear_hamiltonian(params: SystemParams, G: complex) -> QuadraticHamiltonian:
    """Linearised Hamiltonian ``Delta a^dag a + nu b^dag b + (G a + G* a^dag) x_m + |G|^2 x_m``.

    With ``a = (x + i p)/sqrt(2)`` the coupling is
    ``sqrt(2) (Re G x_c - Im G p_c) x_m``.
    """
    G = complex(G)
    V = np.diag([params.delta, params.delta, params.nu, params.nu])
    V[0, 2] = V[2, 0] = SQRT2 * G.real
    V[1, 2] = V[2, 1] = -SQRT2 * G.imag
    c = np.array([0.0, 0.0, abs(G) ** 2, 0.0])
    return QuadraticHamiltonian(V, c)


def _check_bath(bath_model: str):
    if bath_model not in BATH_MODELS:
        raise ValueError(f"bath_model must be one of {BATH_MODELS}, got {bath_model!r}")


def damping_matrix(params: SystemParams, bath_model: str = "paper") -> np.ndarray:
    _check_bath(bath_model)
    if bath_model == "paper":
        return params.kappa / 2 * P_PAPER
    return params.kappa * P_CAVITY + params.gamma_m / 2 * P_MECH


def diffusion_matrix(params: SystemParams, bath_model: str = "paper") -> np.ndarray:
    _check_bath(bath_model)
    if bath_model == "paper":
        return params.kappa / 2 * P_PAPER
    return 2 * params.kappa * P_CAVITY + params.gamma_m * (2 * params.nbar_env + 1) * P_MECH


def drift_matrix(h: QuadraticHamiltonian, params: SystemParams, bath_model: str = "paper") -> np.ndarray:
    """``M = sigma V - damping``; with ``bath_model="paper"`` this is ``sigma V - (kappa/2) P``."""
    return SIGMA @ h.V - damping_matrix(params, bath_model)


def _is_completely_positive(params: SystemParams, bath_model: str) -> bool:
    return bath_model == "extended" or params.kappa == 0


def lyapunov_steady_state(M: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Solve ``M gamma + gamma M^T + D = 0`` for Hurwitz ``M``."""
    return solve_continuous_lyapunov(M, -D)


# exact piecewise-constant propagation -------------------------------------

def _exact_maps(M: np.ndarray, D: np.ndarray, b: np.ndarray, h: np.ndarray):
    """Affine moment maps over steps of length ``h`` with constant M, D, b.

    ``M`` and ``b`` may carry a leading batch axis.  Returns ``(Phi, Q, shift)``
    with ``gamma -> Phi gamma Phi^T + Q`` and ``mean -> Phi mean + shift``.
    """
    M = np.asarray(M)
    batch = M.shape[:-2]
    h = np.broadcast_to(np.asarray(h, dtype=float), batch)[..., None, None]
    aug = np.zeros(batch + (5, 5))
    aug[..., :4, :4] = M
    aug[..., :4, 4] = b
    E = expm(aug * h)
    Phi = E[..., :4, :4]
    shift = E[..., :4, 4]
    if not np.any(D):
        return Phi, np.zeros(batch + (4, 4)), shift
    # Van Loan: expm([[-M, D], [0, M^T]] h) = [[., F12], [0, F22]], Q = F22^T F12.
    # exp(-M h) grows with the damping, so evaluate on h / 2^k and square the affine map
    scale = float(np.max(np.abs(M).sum(axis=-1), initial=0.0) * np.max(h))
    squarings = max(0, math.ceil(math.log2(scale))) if scale > 1 else 0
    h_small = h / 2 ** squarings
    vl = np.zeros(batch + (8, 8))
    vl[..., :4, :4] = -M
    vl[..., :4, 4:] = D
    vl[..., 4:, 4:] = np.swapaxes(M, -1, -2)
    F = expm(vl * h_small)
    Q = np.swapaxes(F[..., 4:, 4:], -1, -2) @ F[..., :4, 4:]
    step = np.swapaxes(F[..., 4:, 4:], -1, -2)
    for _ in range(squarings):
        Q = step @ Q @ np.swapaxes(step, -1, -2) + Q
        step = step @ step
    Q = (Q + np.swapaxes(Q, -1, -2)) / 2
    return Phi, Q, shift


def segment_generators(params: SystemParams, G_values: Sequence[complex], bath_model: str = "paper"):
    """Batched drift matrices and mean forcing for constant-G segments."""
    G = np.asarray(G_values, dtype=complex)
    n = G.size
    damping = damping_matrix(params, bath_model)
    V = np.zeros((n, 4, 4))
    V[:, 0, 0] = V[:, 1, 1] = params.delta
    V[:, 2, 2] = V[:, 3, 3] = params.nu
    V[:, 0, 2] = V[:, 2, 0] = SQRT2 * G.real
    V[:, 1, 2] = V[:, 2, 1] = -SQRT2 * G.imag
    M = SIGMA @ V - damping
    c = np.zeros((n, 4))
    c[:, 2] = np.abs(G) ** 2
    b = c @ SIGMA.T
    return M, b


def piecewise_maps(params: SystemParams, G_values, durations, bath_model: str = "paper"):
    M, b = segment_generators(params, G_values, bath_model)
    D = diffusion_matrix(params, bath_model)
    return _exact_maps(M, D, b, np.asarray(durations, dtype=float))


def propagate_piecewise(state: GaussianState, params: SystemParams, G_values, durations,
                        bath_model: str = "paper", return_all: bool = False):
    """Exact moments after a sequence of constant-G segments.

    Returns the final ``GaussianState`` or, with ``return_all``, the list of
    states at every segment boundary (including the initial one).
    """
    Phi, Q, shift = piecewise_maps(params, G_values, durations, bath_model)
    gamma, mean = state.gamma, state.mean
    out = [state] if return_all else None
    for k in range(Phi.shape[0]):
        gamma = Phi[k] @ gamma @ Phi[k].T + Q[k]
        mean = Phi[k] @ mean + shift[k]
        if return_all:
            out.append(GaussianState(mean, gamma))
    return out if return_all else GaussianState(mean, gamma)


# general propagation -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    means: np.ndarray
    gammas: np.ndarray

    def __len__(self):
        return self.t.size

    def state(self, k: int) -> GaussianState:
        return GaussianState(self.means[k], self.gammas[k])

    @property
    def final(self) -> GaussianState:
        return self.state(-1)

    @property
    def phonons(self) -> np.ndarray:
        g, m = self.gammas, self.means
        return (g[:, 2, 2] + g[:, 3, 3] - 2) / 4 + (m[:, 2] ** 2 + m[:, 3] ** 2) / 2

    @property
    def photons(self) -> np.ndarray:
        g, m = self.gammas, self.means
        return (g[:, 0, 0] + g[:, 1, 1] - 2) / 4 + (m[:, 0] ** 2 + m[:, 1] ** 2) / 2

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        iu = np.triu_indices(4)
        header = ["t", "n_phonon"] + [f"mean{i}" for i in range(4)]
        header += [f"gamma{i}{j}" for i, j in zip(*iu)]
        w.writerow(header)
        for k in range(self.t.size):
            row = [self.t[k], self.phonons[k], *self.means[k], *self.gammas[k][iu]]
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _time_grid(t_final: float, dt: float, breaks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Uniform sample grid plus the extra nodes needed to land on breakpoints."""
    n = int(math.floor(t_final / dt + 1e-9))
    samples = dt * np.arange(n + 1)
    if t_final - samples[-1] > 1e-9 * dt:
        samples = np.append(samples, t_final)
    breaks = breaks[(breaks > 0) & (breaks < t_final)]
    nodes = np.union1d(samples, breaks)
    # merge nodes closer than round-off
    keep = np.concatenate([[True], np.diff(nodes) > 1e-12 * max(1.0, t_final)])
    nodes = nodes[keep]
    is_sample = np.isin(nodes, samples) | (np.abs(nodes[:, None] - samples[None, :]).min(axis=1) < 1e-12)
    return nodes, is_sample


def propagate(state: GaussianState, params: SystemParams, coupling: CouplingHistory, t_final: float,
              dt: float, bath_model: str = "paper", method: str = "auto",
              check_physical: bool = True) -> Trajectory:
    """Integrate the moment equations from 0 to ``t_final``, sampling every ``dt``.

    ``method="exact"`` (the default for piecewise-constant histories)
    exponentiates each constant stretch; ``"rk4"`` uses classical
    Runge-Kutta with step ``dt`` and evaluates G at intermediate times.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    _check_bath(bath_model)
    if len(coupling) and coupling.t_end < t_final - 1e-12 and not coupling.piecewise_constant \
            and coupling.evaluator is None:
        raise ValueError("coupling history does not cover [0, t_final]")
    if method == "auto":
        method = "exact" if coupling.piecewise_constant or len(coupling) == 0 else "rk4"
    D = diffusion_matrix(params, bath_model)
    damping = damping_matrix(params, bath_model)
    enforce = check_physical and _is_completely_positive(params, bath_model)
    warned = False

    def G_at(t):
        if len(coupling) == 0:
            return 0j
        return complex(coupling.at(t))

    def generators(G):
        h = build_linear_hamiltonian(params, G)
        return SIGMA @ h.V - damping, SIGMA @ h.c

    def check(t, gamma, mean):
        nonlocal warned
        if not check_physical:
            return
        margin = GaussianState(mean, gamma).uncertainty_margin()
        if margin < -1e-9:
            if enforce:
                raise IntegrationInstabilityError(
                    f"uncertainty relation violated at t={t:.6g} (min eigenvalue {margin:.3g}); "
                    "reduce dt")
            if not warned:
                logger.warning("state left the physical set at t=%.4g under the %s bath model "
                               "(min eigenvalue %.3g)", t, bath_model, margin)
                warned = True

    gamma, mean = state.gamma.copy(), state.mean.copy()
    if method not in ("exact", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    # both methods step exactly onto jumps of a piecewise history
    nodes, is_sample = _time_grid(t_final, dt, coupling.breakpoints())

    ts, means, gammas = [0.0], [mean.copy()], [gamma.copy()]
    for i in range(1, nodes.size):
        t0, t1 = nodes[i - 1], nodes[i]
        h = t1 - t0
        if method == "exact":
            M, b = generators(G_at(t0 + h / 2))
            Phi, Q, shift = _exact_maps(M, D, b, h)
            gamma = Phi @ gamma @ Phi.T + Q
            mean = Phi @ mean + shift
        else:
            gamma, mean = _rk4_step(generators, G_at, D, t0, h, gamma, mean)
        gamma = (gamma + gamma.T) / 2
        if is_sample[i]:
            check(t1, gamma, mean)
            ts.append(t1)
            means.append(mean.copy())
            gammas.append(gamma.copy())
    return Trajectory(np.array(ts), np.array(means), np.array(gammas))


def _rk4_step(generators, G_at, D, t0, h, gamma, mean):
    def f(t, g, m):
        M, b = generators(G_at(t))
        return M @ g + g @ M.T + D, M @ m + b

    # end-point stages are nudged inside the step so a jump at a node is
    # seen from the correct side
    k1g, k1m = f(t0 + 1e-12 * h, gamma, mean)
    k2g, k2m = f(t0 + h / 2, gamma + h / 2 * k1g, mean + h / 2 * k1m)
    k3g, k3m = f(t0 + h / 2, gamma + h / 2 * k2g, mean + h / 2 * k2m)
    k4g, k4m = f(t0 + h * (1 - 1e-12), gamma + h * k3g, mean + h * k3m)
    return (gamma + h / 6 * (k1g + 2 * k2g + 2 * k3g + k4g),
            mean + h / 6 * (k1m + 2 * k2m + 2 * k3m + k4m))
