"""Optimisation of piecewise-constant coupling schedules G(t).

The optimiser alternates projected quasi-Newton descent (BFGS with central
finite-difference gradients and an Armijo line search) with simulated
annealing batches, keeping the best point ever evaluated.  Every objective
evaluation, including gradient stencil points, counts towards the budget.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bch import PulseSchedule, compile_linear_beamsplitter, trotterize
from .covariance import SIGMA, GaussianState, _exact_maps, diffusion_matrix, segment_generators
from .model import SystemParams

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
WORKERS_ENV = "OPTOPULSE_WORKERS"
STRATEGIES = ("a", "b", "c", "d")


# controls -----------------------------------------------------------------------

def _project_disk(values: np.ndarray, g_max: float) -> np.ndarray:
    values = np.asarray(values, dtype=complex).copy()
    mag = np.abs(values)
    over = mag > g_max
    if np.any(over):
        values[over] *= g_max / mag[over]
        # rounding can leave |G| a hair above the bound
        while np.any(still := np.abs(values) > g_max):
            values[still] *= np.nextafter(1.0, 0.0)
    return values


@dataclass(frozen=True, eq=False)
class ControlVector:
    """Complex coupling per segment with fixed segment durations.

    ``partial=True`` restricts the coupling to ``x_c x_m`` (real G).
    """

    values: np.ndarray
    durations: np.ndarray
    g_max: float
    partial: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex).ravel()
        durations = np.broadcast_to(np.asarray(self.durations, dtype=float), values.shape).copy()
        if values.size < 1:
            raise ValueError("a control vector needs at least one segment")
        if not self.g_max > 0:
            raise ValueError("g_max must be positive")
        if np.any(durations <= 0):
            raise ValueError("segment durations must be positive")
        if np.any(np.abs(values) > self.g_max):
            raise ValueError("control exceeds g_max; use ControlVector.projected")
        if self.partial and np.any(values.imag != 0):
            raise ValueError("partial controls must be real")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "durations", durations)

    @classmethod
    def projected(cls, values, durations, g_max: float, partial: bool = False) -> "ControlVector":
        values = np.asarray(values, dtype=complex)
        if partial:
            values = values.real.astype(complex)
        return cls(_project_disk(values, g_max), durations, g_max, partial)

    @classmethod
    def uniform(cls, n: int, total_time: float, g_max: float, values=None, partial: bool = False):
        values = np.zeros(n, dtype=complex) if values is None else values
        return cls.projected(values, np.full(n, total_time / n), g_max, partial)

    @classmethod
    def random(cls, n: int, total_time: float, g_max: float, rng: np.random.Generator,
               partial: bool = False) -> "ControlVector":
        """Uniform draw from the allowed disk (interval when partial)."""
        if partial:
            values = rng.uniform(-g_max, g_max, n)
        else:
            r = g_max * np.sqrt(rng.uniform(0, 1, n))
            values = r * np.exp(2j * np.pi * rng.uniform(0, 1, n))
        return cls.projected(values, np.full(n, total_time / n), g_max, partial)

    @classmethod
    def from_schedule(cls, schedule: PulseSchedule, g_max: float, partial: bool = False) -> "ControlVector":
        """One control segment per schedule segment (durations kept)."""
        return cls.projected(schedule.coupling_values(), schedule.durations, g_max, partial)

    def __len__(self):
        return self.values.size

    @property
    def total_time(self) -> float:
        return float(self.durations.sum())

    def with_values(self, values) -> "ControlVector":
        return ControlVector.projected(values, self.durations, self.g_max, self.partial)

    def to_dict(self) -> dict:
        return {"re": self.values.real.tolist(), "im": self.values.imag.tolist(),
                "durations": self.durations.tolist(), "g_max": self.g_max, "partial": self.partial}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlVector":
        values = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
        return cls.projected(values, d["durations"], float(d["g_max"]), bool(d.get("partial", False)))


@dataclass(frozen=True, eq=False)
class OptimizationScenario:
    """What the objective measures.

    ``objective`` is ``"final"`` (occupation at the end) or
    ``"min_over_time"`` (lowest occupation at any segment boundary).
    ``occupation`` is ``"total"`` (thermal plus coherent part, the default)
    or ``"thermal"`` (covariance part only, a diagnostic).
    """

    params: SystemParams
    initial: GaussianState
    bath_model: str = "paper"
    objective: str = "final"
    occupation: str = "total"

    def __post_init__(self):
        if self.objective not in ("final", "min_over_time"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.occupation not in ("total", "thermal"):
            raise ValueError(f"unknown occupation mode {self.occupation!r}")

    def with_kappa(self, kappa: float) -> "OptimizationScenario":
        return replace(self, params=self.params.replace(kappa=kappa))


PHYSICAL_TOL = 1e-9


def _occupation(gamma: np.ndarray, mean: np.ndarray, mode: str) -> np.ndarray:
    n = (gamma[..., 2, 2] + gamma[..., 3, 3] - 2) / 4
    if mode == "total":
        n = n + (mean[..., 2] ** 2 + mean[..., 3] ** 2) / 2
    return n


def _guarded(gamma: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Replace values of states violating the uncertainty relation by ``inf``.

    Without a completely positive bath the covariance equation can reach
    unphysical states with negative occupation, which an optimiser would
    otherwise happily exploit.
    """
    values = np.asarray(values, dtype=float)
    ok = np.all(np.isfinite(gamma), axis=(-2, -1))
    margin = np.full(values.shape, -np.inf)
    if np.any(ok):
        margin[ok] = np.linalg.eigvalsh(gamma[ok] + 1j * SIGMA).min(axis=-1)
    return np.where((margin >= -PHYSICAL_TOL) & np.isfinite(values), values, np.inf)


class _Model:
    """Exact segment maps of a scenario with fast single-segment perturbations."""

    def __init__(self, scenario: OptimizationScenario, durations: np.ndarray):
        self.scenario = scenario
        self.durations = np.asarray(durations, dtype=float)
        self.D = diffusion_matrix(scenario.params, scenario.bath_model)

    def maps(self, G: np.ndarray, durations: np.ndarray | None = None):
        M, b = segment_generators(self.scenario.params, G, self.scenario.bath_model)
        return _exact_maps(M, self.D, b, self.durations if durations is None else durations)

    def evaluate(self, G: np.ndarray) -> float:
        Phi, Q, shift = self.maps(G)
        gamma, mean = self.scenario.initial.gamma, self.scenario.initial.mean
        mode = self.scenario.occupation
        best = math.inf
        track = self.scenario.objective == "min_over_time"
        if track:
            best = float(_guarded(gamma, _occupation(gamma, mean, mode)))
        for k in range(Phi.shape[0]):
            gamma = Phi[k] @ gamma @ Phi[k].T + Q[k]
            mean = Phi[k] @ mean + shift[k]
            if track:
                best = min(best, float(_guarded(gamma, _occupation(gamma, mean, mode))))
        if track:
            return best
        return float(_guarded(gamma, _occupation(gamma, mean, mode)))

    def perturbed(self, G: np.ndarray, index: np.ndarray, new_values: np.ndarray) -> np.ndarray:
        """Final-time objective with ``G[index[i]]`` replaced by ``new_values[i]``.

        Uses cached prefix states and suffix maps so each perturbation costs
        one segment exponential.
        """
        Phi, Q, shift = self.maps(G)
        n = Phi.shape[0]
        gammas = np.empty((n + 1, 4, 4))
        means = np.empty((n + 1, 4))
        gammas[0], means[0] = self.scenario.initial.gamma, self.scenario.initial.mean
        for k in range(n):
            gammas[k + 1] = Phi[k] @ gammas[k] @ Phi[k].T + Q[k]
            means[k + 1] = Phi[k] @ means[k] + shift[k]
        # suffix maps: state after segment k -> final state
        A = np.empty((n, 4, 4))
        B = np.empty((n, 4, 4))
        c = np.empty((n, 4))
        A[n - 1], B[n - 1], c[n - 1] = np.eye(4), 0.0, 0.0
        for k in range(n - 1, 0, -1):
            A[k - 1] = A[k] @ Phi[k]
            B[k - 1] = A[k] @ Q[k] @ A[k].T + B[k]
            c[k - 1] = A[k] @ shift[k] + c[k]
        P2, Q2, s2 = self.maps(new_values, self.durations[index])
        g_in, m_in = gammas[index], means[index]
        g_out = P2 @ g_in @ np.swapaxes(P2, 1, 2) + Q2
        m_out = np.einsum("bij,bj->bi", P2, m_in) + s2
        Ak = A[index]
        g_fin = Ak @ g_out @ np.swapaxes(Ak, 1, 2) + B[index]
        m_fin = np.einsum("bij,bj->bi", Ak, m_out) + c[index]
        return _guarded(g_fin, _occupation(g_fin, m_fin, self.scenario.occupation))


def objective(control: ControlVector, scenario: OptimizationScenario) -> float:
    """Phonon occupation reached by ``control`` (``inf`` if the propagation blows up)."""
    with np.errstate(all="ignore"):
        try:
            return _Model(scenario, control.durations).evaluate(control.values)
        except (np.linalg.LinAlgError, ValueError, OverflowError) as exc:
            logger.warning("objective evaluation failed: %s", exc)
            return math.inf


# parametrisations ---------------------------------------------------------------

class _Parametrization:
    """Maps real optimisation variables to complex couplings and back."""

    def __init__(self, kind: str, g_max: float, n: int, phases: np.ndarray | None = None):
        self.kind, self.g_max, self.n = kind, g_max, n
        self.phases = np.ones(n, dtype=complex) if phases is None else phases

    @property
    def dim(self) -> int:
        return 2 * self.n if self.kind == "complex" else self.n

    def to_x(self, G: np.ndarray) -> np.ndarray:
        if self.kind == "complex":
            return np.concatenate([G.real, G.imag])
        if self.kind == "real":
            return G.real.copy()
        return np.real(G * np.conj(self.phases))

    def to_G(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "complex":
            return x[: self.n] + 1j * x[self.n:]
        if self.kind == "real":
            return x.astype(complex)
        return x * self.phases

    def project(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "complex":
            return self.to_x(_project_disk(self.to_G(x), self.g_max))
        return np.clip(x, -self.g_max, self.g_max)

    def coordinate_perturbations(self, x: np.ndarray, h: float):
        """Segment index and perturbed coupling for every ``x_i +- h``."""
        idx, vals = [], []
        G = self.to_G(x)
        for i in range(self.dim):
            seg = i % self.n
            if self.kind == "complex":
                unit = 1.0 if i < self.n else 1j
            elif self.kind == "real":
                unit = 1.0
            else:
                unit = self.phases[seg]
            for sgn in (1.0, -1.0):
                idx.append(seg)
                vals.append(G[seg] + sgn * h * unit)
        return np.array(idx), np.array(vals, dtype=complex)


# optimiser ----------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    fd_step: float = 1e-6          # relative to g_max
    descent_iterations: int = 60   # per descent stage
    descent_tol: float = 1e-12     # relative improvement that ends a descent stage
    armijo: float = 1e-4
    max_backtracks: int = 30
    anneal_batches: int = 2        # per annealing stage
    anneal_batch_size: int = 50
    anneal_decay: float = 0.95
    anneal_t0: float | None = None  # default: objective at the start
    proposal_scale: float = 0.05   # Gaussian proposal width relative to g_max
    restarts: int = 1              # strategy d
    continuation_steps: int = 3    # strategy c
    workers: int | None = None


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


class _BudgetExhausted(Exception):
    pass


class _Evaluator:
    """Budgeted objective with best-point tracking."""

    def __init__(self, model: _Model, budget: int, workers: int):
        self.model = model
        self.budget = budget
        self.used = 0
        self.best_f = math.inf
        self.best_G = None
        self.workers = workers

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def _record(self, G, f):
        if self.best_G is None or f < self.best_f:
            self.best_f, self.best_G = f, np.array(G, copy=True)

    def __call__(self, G: np.ndarray) -> float:
        if self.used >= self.budget:
            raise _BudgetExhausted
        self.used += 1
        with np.errstate(all="ignore"):
            f = self.model.evaluate(G)
        self._record(G, f)
        return f

    def many(self, Gs: Sequence[np.ndarray]) -> list[float]:
        """Evaluate a batch (truncated to the remaining budget), order preserved."""
        Gs = list(Gs)[: max(self.remaining, 0)]
        if not Gs:
            raise _BudgetExhausted
        self.used += len(Gs)
        with np.errstate(all="ignore"):
            if self.workers > 1 and len(Gs) > 1:
                with ThreadPoolExecutor(self.workers) as pool:
                    fs = list(pool.map(self.model.evaluate, Gs))
            else:
                fs = [self.model.evaluate(G) for G in Gs]
        for G, f in zip(Gs, fs):
            self._record(G, f)
        return fs

    def gradient(self, param: _Parametrization, x: np.ndarray, h: float) -> np.ndarray:
        need = 2 * param.dim
        if self.remaining < need:
            raise _BudgetExhausted
        self.used += need
        idx, vals = param.coordinate_perturbations(x, h)
        with np.errstate(all="ignore"):
            if self.model.scenario.objective == "final":
                fs = self.model.perturbed(param.to_G(x), idx, vals)
            else:
                base = param.to_G(x)
                fs = []
                for i, v in zip(idx, vals):
                    G = base.copy()
                    G[i] = v
                    fs.append(self.model.evaluate(G))
                fs = np.array(fs)
        fs = fs.reshape(param.dim, 2)
        with np.errstate(invalid="ignore"):
            grad = (fs[:, 0] - fs[:, 1]) / (2 * h)
        return np.where(np.isfinite(grad), grad, 0.0)


@dataclass(frozen=True, eq=False)
class OptimizationReport:
    best: ControlVector
    best_objective: float
    initial_objective: float
    final_phonon_number: float
    total_time_periods: float
    seed: int
    strategy: str
    evaluations: int
    budget: int
    history: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "strategy": self.strategy,
            "seed": self.seed,
            "budget": self.budget,
            "evaluations": self.evaluations,
            "initial_objective": self.initial_objective,
            "best_objective": self.best_objective,
            "final_phonon_number": self.final_phonon_number,
            "total_time_periods": self.total_time_periods,
            "best_control": self.best.to_dict(),
            "history": self.history,
            "stages": self.stages,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizationReport":
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {d.get('schema_version')}")
        return cls(
            best=ControlVector.from_dict(d["best_control"]),
            best_objective=d["best_objective"],
            initial_objective=d["initial_objective"],
            final_phonon_number=d["final_phonon_number"],
            total_time_periods=d["total_time_periods"],
            seed=d["seed"],
            strategy=d["strategy"],
            evaluations=d["evaluations"],
            budget=d["budget"],
            history=d.get("history", []),
            stages=d.get("stages", []),
        )


class _Run:
    """State of one optimisation run over a fixed parametrisation."""

    def __init__(self, ev: _Evaluator, param: _Parametrization, config: OptimizerConfig,
                 rng: np.random.Generator, g_max: float, history: list, stages: list):
        self.ev, self.param, self.config, self.rng = ev, param, config, rng
        self.g_max = g_max
        self.history, self.stages = history, stages
        self.temperature = None

    def descent(self, x: np.ndarray, f: float) -> tuple[np.ndarray, float]:
        cfg, param, ev = self.config, self.param, self.ev
        h = cfg.fd_step * self.g_max
        start_used, f_start = ev.used, f
        n = param.dim
        H = np.eye(n)
        try:
            g = ev.gradient(param, x, h)
            scaled = False
            for _ in range(cfg.descent_iterations):
                if not np.any(g):
                    break
                p = -H @ g
                if not scaled:
                    p *= min(1.0, 0.1 * self.g_max / max(np.abs(p).max(), 1e-300))
                step, accepted = 1.0, False
                for _ in range(cfg.max_backtracks):
                    x_new = param.project(x + step * p)
                    s = x_new - x
                    decrease = g @ s
                    if decrease >= 0 or not np.any(s):
                        step *= 0.5
                        continue
                    f_new = ev(param.to_G(x_new))
                    if f_new <= f + cfg.armijo * decrease:
                        accepted = True
                        break
                    step *= 0.5
                if not accepted:
                    if np.allclose(H, np.eye(n)):
                        break
                    H = np.eye(n)
                    scaled = False
                    continue
                g_new = ev.gradient(param, x_new, h)
                y = g_new - g
                sy = s @ y
                if sy > 1e-300:
                    if not scaled:
                        H = np.eye(n) * (sy / (y @ y))
                        scaled = True
                    rho = 1.0 / sy
                    Hy = H @ y
                    H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho ** 2 * (y @ Hy) + rho) * np.outer(s, s)
                improvement = f - f_new
                x, f, g = x_new, f_new, g_new
                self.history.append({"stage": len(self.stages), "kind": "descent", "eval": ev.used, "objective": f})
                if improvement <= cfg.descent_tol * max(abs(f), 1e-300):
                    break
        finally:
            self.stages.append({"kind": "descent", "evaluations": ev.used - start_used,
                                "start": f_start, "end": f})
        return x, f

    def anneal(self, x: np.ndarray, f: float) -> tuple[np.ndarray, float]:
        cfg, param, ev = self.config, self.param, self.ev
        if self.temperature is None:
            start = f if math.isfinite(f) else 1.0
            self.temperature = cfg.anneal_t0 if cfg.anneal_t0 is not None else max(start, 1e-300)
        start_used, f_start = ev.used, f
        width = cfg.proposal_scale * self.g_max
        try:
            for _ in range(cfg.anneal_batches):
                base = x
                # proposals are drawn up front so the outcome is independent of the worker count
                noise = self.rng.normal(0.0, width, (cfg.anneal_batch_size, param.dim))
                uniforms = self.rng.uniform(0, 1, cfg.anneal_batch_size)
                props = [param.project(base + z) for z in noise]
                fs = ev.many([param.to_G(p) for p in props])
                for prop, fp, u in zip(props, fs, uniforms):
                    if fp <= f or (math.isfinite(fp) and u < math.exp(-(fp - f) / self.temperature)):
                        x, f = prop, fp
                        self.history.append({"stage": len(self.stages), "kind": "anneal", "eval": ev.used,
                                             "objective": f})
                self.temperature *= cfg.anneal_decay
                if len(fs) < cfg.anneal_batch_size:
                    raise _BudgetExhausted
        finally:
            self.stages.append({"kind": "anneal", "evaluations": ev.used - start_used, "start": f_start,
                                "end": f, "temperature": self.temperature})
        return x, f

    def hybrid(self, G0: np.ndarray, f0: float | None = None) -> None:
        x = self.param.project(self.param.to_x(G0))
        try:
            f = self.ev(self.param.to_G(x)) if f0 is None else f0
            while True:
                x, f = self.descent(x, f)
                # resume from the incumbent so annealing never loses the best point for long
                x_best = self.param.project(self.param.to_x(self.ev.best_G))
                x, f = self.anneal(x_best, self.ev.best_f)
        except _BudgetExhausted:
            pass


def optimize(initial: ControlVector, scenario: OptimizationScenario, budget: int, seed: int,
             strategy: str = "b", config: OptimizerConfig | None = None,
             progress: Callable[[int, float], None] | None = None) -> OptimizationReport:
    """Hybrid descent / annealing search for the lowest phonon occupation.

    Strategies:

    ``a``  amplitude first (phases frozen at their initial values), then
           amplitude and phase; the budget is split evenly.
    ``b``  start from ``initial`` as given (e.g. a compiled analytic sequence).
    ``c``  continuation: optimise a sequence of scenarios whose cavity decay
           rises from 0 to the target, each seeded with the previous result.
    ``d``  random start(s) drawn uniformly within the bounds; ``initial``
           only fixes the segment layout.

    The best point evaluated is returned, so the result is never worse than
    the starting control.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    config = config or OptimizerConfig()
    workers = config.workers or default_workers()
    rng = np.random.default_rng(seed)
    history: list = []
    stages: list = []
    g_max, n = initial.g_max, len(initial)
    kind = "real" if initial.partial else "complex"

    def run(scn: OptimizationScenario, G0: np.ndarray, budget_part: int, param_kind: str = kind,
            phases=None) -> _Evaluator:
        ev = _Evaluator(_Model(scn, initial.durations), budget_part, workers)
        param = _Parametrization(param_kind, g_max, n, phases)
        _Run(ev, param, config, rng, g_max, history, stages).hybrid(G0)
        if ev.best_G is None:
            ev.best_G, ev.best_f = G0, math.inf
        return ev

    main_ev = _Evaluator(_Model(scenario, initial.durations), budget, workers)
    start_f = main_ev(initial.values)
    history.append({"stage": 0, "kind": "initial", "eval": 1, "objective": start_f})
    left = budget - 1
    best_G, best_f, used = initial.values, start_f, 1

    def consider(ev: _Evaluator, scn_is_target: bool = True):
        nonlocal best_G, best_f, used
        used += ev.used
        if scn_is_target and ev.best_f < best_f:
            best_G, best_f = ev.best_G, ev.best_f

    if left > 0:
        if strategy == "a":
            phases = np.where(np.abs(initial.values) > 0, initial.values / np.maximum(np.abs(initial.values), 1e-300), 1.0)
            phases = phases.astype(complex)
            first = left // 2
            ev = run(scenario, initial.values, first, "real" if initial.partial else "amplitude", phases)
            consider(ev)
            ev = run(scenario, best_G, left - first)
            consider(ev)
        elif strategy == "b":
            consider(run(scenario, initial.values, left))
        elif strategy == "c":
            steps = max(1, config.continuation_steps)
            target = scenario.params.kappa
            kappas = [target * k / steps for k in range(1, steps + 1)] if target > 0 else [0.0]
            share = left // len(kappas)
            G = initial.values
            for k, kappa in enumerate(kappas):
                part = share if k < len(kappas) - 1 else left - share * (len(kappas) - 1)
                is_target = k == len(kappas) - 1
                ev = run(scenario.with_kappa(kappa), G, part)
                G = ev.best_G
                consider(ev, is_target)
            if target > 0:
                # pushed solution re-scored on the target scenario (one extra evaluation)
                f = objective(initial.with_values(G), scenario)
                if f < best_f:
                    best_G, best_f = G, f
        else:
            restarts = max(1, config.restarts)
            share = left // restarts
            for k in range(restarts):
                part = share if k < restarts - 1 else left - share * (restarts - 1)
                G0 = ControlVector.random(n, initial.total_time, g_max, rng, initial.partial).values
                consider(run(scenario, G0, part))

    best = initial.with_values(best_G)
    final_scn = replace(scenario, occupation="total", objective="final")
    final_n = objective(best, final_scn)
    if progress:
        progress(used, best_f)
    return OptimizationReport(
        best=best,
        best_objective=float(best_f),
        initial_objective=float(start_f),
        final_phonon_number=float(final_n),
        total_time_periods=best.total_time * scenario.params.nu / (2 * math.pi),
        seed=seed,
        strategy=strategy,
        evaluations=min(used, budget + 1),
        budget=budget,
        history=history,
        stages=stages,
    )


# analytic seeds and the decay sweep ---------------------------------------------

def analytic_seed(params: SystemParams, n_segments: int, t_total: float, g_max: float) -> PulseSchedule:
    """Trotterised four-segment beam-splitter sequence fitted into ``t_total``.

    Pulses run at the largest allowed coupling ``|G| = g_max``.  The pulse
    area is chosen so the sequence completes a swap in ``t_total`` when that
    is possible, and otherwise to maximise the swap angle.
    """
    if n_segments % 2:
        raise ValueError("n_segments must be even (cycles of four segments, the last may be halved)")
    reps = n_segments / 4
    strength = math.sqrt(2) * g_max
    nu = params.nu
    # total = 2 reps A / strength + 2 W, swap angle = A nu W
    a2 = 2 * reps / strength
    disc = t_total ** 2 - 4 * a2 * math.pi / nu
    if disc >= 0:
        area = (t_total - math.sqrt(disc)) / (2 * a2)
        window = math.pi / (2 * area * nu)
    else:
        area = t_total / (2 * a2)
        window = (t_total - a2 * area) / 2
    t1 = area / strength
    comp_strength = area * (nu + params.delta)
    if comp_strength / math.sqrt(2) > g_max:
        # stretch the compensation segment so its coupling stays within bounds
        t_comp = window * comp_strength / (math.sqrt(2) * g_max)
        window_scale = 2 * window / (window + t_comp)
        window, t_comp = window * window_scale, t_comp * window_scale
    else:
        t_comp = window
    sched = compile_linear_beamsplitter(params, strength, t1, window, compensation="segment", t_comp=t_comp)
    return trotterize(sched, reps)


@dataclass(frozen=True)
class SweepRow:
    kappa: float
    strategy: str
    before: float
    after: float
    evaluations: int

    def as_dict(self):
        return asdict(self)


SWEEP_STRATEGIES = ("random_partial", "random_full", "analytic30", "analytic300")


def kappa_sweep(template: OptimizationScenario, kappas: Sequence[float], strategies: Sequence[str], seed: int,
                budget: int, g_max: float = 10.0, t_total: float = 0.8 * 2 * math.pi, n_random: int = 30,
                continuation: bool = False, config: OptimizerConfig | None = None) -> list[SweepRow]:
    """Optimise every (kappa, strategy) pair and tabulate before/after occupations.

    ``random_partial`` / ``random_full`` start from uniform random couplings
    (real-only / complex); ``analytic30`` / ``analytic300`` start from the
    trotterised analytic sequence with 30 / 300 segments.  With
    ``continuation`` each kappa is seeded by the previous kappa's result for
    the same strategy.
    """
    if not kappas or not strategies:
        raise ValueError("kappas and strategies must be non-empty")
    rows = []
    previous: dict[str, ControlVector] = {}
    for i, kappa in enumerate(kappas):
        scn = template.with_kappa(kappa)
        for j, strat in enumerate(strategies):
            sub_seed = seed * 1000 + 10 * i + j
            rng = np.random.default_rng(sub_seed)
            if continuation and strat in previous:
                init = previous[strat]
            elif strat == "random_partial":
                init = ControlVector.random(n_random, t_total, g_max, rng, partial=True)
            elif strat == "random_full":
                init = ControlVector.random(n_random, t_total, g_max, rng)
            elif strat in ("analytic30", "analytic300"):
                n = 30 if strat == "analytic30" else 300
                init = ControlVector.from_schedule(analytic_seed(scn.params, n, t_total, g_max), g_max)
            else:
                raise ValueError(f"unknown sweep strategy {strat!r}; expected one of {SWEEP_STRATEGIES}")
            before = objective(init, scn)
            rep = optimize(init, scn, budget, sub_seed, "b", config)
            previous[strat] = rep.best
            rows.append(SweepRow(kappa, strat, before, rep.best_objective, rep.evaluations))
            logger.info("kappa=%g %s: %.4g -> %.4g", kappa, strat, before, rep.best_objective)
    afters = {}
    for r in rows:
        afters.setdefault(r.strategy, []).append(r.after)
    for strat, vals in afters.items():
        if any(b < a - 1e-12 for a, b in zip(vals, vals[1:])):
            logger.info("final occupation not monotone in kappa for %s: %s", strat, vals)
    return rows


def cooling_rate(n_initial: float, n_final: float, duration: float) -> float:
    """Effective exponential cooling rate ``ln(n0 / nf) / t``."""
    if not (n_initial > 0 and n_final > 0):
        raise ValueError("cooling rate is undefined for non-positive occupations")
    if not duration > 0:
        raise ValueError("duration must be positive")
    return math.log(n_initial / n_final) / duration
