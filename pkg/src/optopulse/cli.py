"""Command-line entry point: scenario loading, dispatch and run directories.

Every command that produces artifacts writes them into a fresh timestamped
run directory together with a copy of the resolved configuration and the
seed, so a run can be repeated from its own directory.

Exit codes: 0 success, 2 scenario/schema error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .bch import (PulseSchedule, ScheduleError, compile_linear_beamsplitter, compile_nonlinear_swap,
                  predicted_swap_time, trotterize)
from .covariance import GaussianState, IntegrationInstabilityError, Trajectory, propagate
from .drive import CouplingHistory
from .fock import (BudgetError, FockConfig, NonHermitianError, NormDriftError, coherent_state, edge_population,
                   evolve, fock_state, lindblad_evolve, thermal_density)
from .model import (BATH_MODELS, DomainError, ScenarioError, feasibility_from_dict, feasibility_report,
                    params_from_dict, params_to_dict)
from .optimize import (SWEEP_STRATEGIES, ControlVector, OptimizationReport, OptimizationScenario,
                       analytic_seed, cooling_rate, kappa_sweep, optimize)

logger = logging.getLogger("optopulse")

EXIT_OK, EXIT_SCHEMA, EXIT_NUMERIC = 0, 2, 3
ENGINES = ("covariance", "fock", "lindblad")
NUMERIC_ERRORS = (IntegrationInstabilityError, NormDriftError, BudgetError, FloatingPointError,
                  np.linalg.LinAlgError, OverflowError)
TWO_PI = 2 * math.pi


# scenarios ----------------------------------------------------------------------

@dataclass
class Scenario:
    """A parsed scenario document (``raw`` keeps the original JSON)."""

    raw: dict
    name: str
    engine: str
    params: Any
    bath_model: str = "paper"
    seed: int = 0
    base_dir: Path = field(default_factory=Path.cwd)

    def get(self, key, default=None):
        return self.raw.get(key, default)


def _require(d: dict, key: str, path: str, kind=None):
    if not isinstance(d, dict):
        raise ScenarioError(path, "expected an object")
    if key not in d:
        raise ScenarioError(f"{path}.{key}", "missing field")
    value = d[key]
    if kind is not None and not isinstance(value, kind):
        raise ScenarioError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return value


def _number(d: dict, key: str, path: str, default=None) -> float:
    if key not in d:
        if default is None:
            raise ScenarioError(f"{path}.{key}", "missing field")
        return default
    value = d[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}.{key}", f"expected a number, got {value!r}")
    return float(value)


def parse_scenario(raw: dict, base_dir: Path | None = None) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("$", "scenario must be a JSON object")
    engine = raw.get("engine", "covariance")
    if engine not in ENGINES:
        raise ScenarioError("$.engine", f"expected one of {ENGINES}")
    bath = raw.get("bath_model", "paper")
    if bath not in BATH_MODELS:
        raise ScenarioError("$.bath_model", f"expected one of {BATH_MODELS}")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("$.seed", "expected a non-negative integer")
    params = params_from_dict(raw.get("params", {}))
    return Scenario(raw, str(raw.get("name", "scenario")), engine, params, bath, seed,
                    base_dir or Path.cwd())


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError("$", f"scenario file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON: {exc}") from None
    return parse_scenario(raw, path.parent)


def bundled_scenario(name: str) -> Scenario:
    text = resources.files("optopulse").joinpath("scenarios", f"{name}.json").read_text()
    return parse_scenario(json.loads(text))


def gaussian_initial(block: dict, path: str = "$.initial") -> GaussianState:
    if "thermal" in block:
        th = block["thermal"]
        return GaussianState.thermal(_number(th, "cavity", f"{path}.thermal", 0.0),
                                     _number(th, "mechanics", f"{path}.thermal", 0.0))
    if "coherent" in block:
        co = block["coherent"]
        return GaussianState.coherent(complex(_number(co, "cavity", f"{path}.coherent", 0.0)),
                                      complex(_number(co, "mechanics", f"{path}.coherent", 0.0)))
    if "vacuum" in block or not block:
        return GaussianState.vacuum()
    raise ScenarioError(path, "expected thermal, coherent or vacuum")


def _fock_config(scn: Scenario, default_modes=("c", "m")) -> FockConfig:
    block = scn.get("fock", {})
    dims = _require(block, "dims", "$.fock", list)
    modes = tuple(block.get("modes", default_modes))
    try:
        return FockConfig(tuple(int(d) for d in dims), modes, int(block.get("budget", 200000)))
    except (ValueError, TypeError) as exc:
        raise ScenarioError("$.fock", str(exc)) from None


def _fock_initial(scn: Scenario, config: FockConfig, density: bool = False):
    block = scn.get("initial", {})
    if "coherent" in block:
        amps = {m: complex(v) for m, v in block["coherent"].items()}
        psi = coherent_state(config, amps)
    elif "fock" in block:
        psi = fock_state(config, {m: int(v) for m, v in block["fock"].items()})
    elif "thermal" in block:
        th = block["thermal"]
        nbars = {"c": th.get("cavity", 0.0), "m": th.get("mechanics", 0.0)}
        nbars = {m: v for m, v in nbars.items() if m in config.modes}
        if not density:
            raise ScenarioError("$.initial.thermal", "thermal states need the lindblad engine")
        return thermal_density(config, nbars)
    else:
        psi = fock_state(config, {})
    return np.outer(psi, psi.conj()) if density else psi


def build_schedule(scn: Scenario) -> PulseSchedule | None:
    """Compile or load the schedule named by ``$.control`` (None for zero control)."""
    ctrl = scn.get("control", {"source": "zero"})
    source = ctrl.get("source", "zero")
    path = "$.control"
    p = scn.params
    if source == "zero":
        return None
    if source == "file":
        data = _read_reference(scn, "path")
        if "best_control" in data:
            raise ScenarioError(f"{path}.path", "optimizer reports carry complex couplings; use the covariance engine")
        return PulseSchedule.from_dict(data)
    if source == "optimizer":
        raise ScenarioError(f"{path}.source", "optimizer output is only usable by the covariance engines")
    if source == "analytic_seed":
        g_max = _number(ctrl, "g_max", path)
        t_total = _number(ctrl, "t_total_periods", path) * TWO_PI / p.nu
        return analytic_seed(p, int(_number(ctrl, "n_segments", path)), t_total, g_max)
    if source == "compiler":
        kind = ctrl.get("kind", "linear")
        reps = _number(ctrl, "repetitions", path, 1.0)
        if kind == "linear":
            sched = compile_linear_beamsplitter(
                p, _number(ctrl, "strength", path), _number(ctrl, "t1", path), _number(ctrl, "tf", path),
                sideband=ctrl.get("sideband", "red"), compensation=ctrl.get("compensation", "concurrent"),
                t_comp=ctrl.get("t_comp"))
        elif kind == "nonlinear":
            sched = _nonlinear_from_control(p, ctrl, path)
        else:
            raise ScenarioError(f"{path}.kind", "expected linear or nonlinear")
        return trotterize(sched, reps) if reps != 1 else sched
    raise ScenarioError(f"{path}.source", "expected zero, file, optimizer, analytic_seed or compiler")


def _nonlinear_from_control(p, ctrl: dict, path: str) -> PulseSchedule:
    omega, t1, tf = (_number(ctrl, k, path) for k in ("omega", "t1", "tf"))
    alpha = _number(ctrl, "alpha", path, 4.0)
    correction = ctrl.get("correction", "pulse")
    tf_prime = ctrl.get("tf_prime", "predicted")
    if tf_prime == "predicted":
        probe = compile_nonlinear_swap(p, omega, t1, tf, 1.0, alpha, correction=correction)
        tf_prime = predicted_swap_time(probe)
    elif isinstance(tf_prime, bool) or not isinstance(tf_prime, (int, float)):
        raise ScenarioError(f"{path}.tf_prime", "expected a number or \"predicted\"")
    return compile_nonlinear_swap(p, omega, t1, tf, float(tf_prime), alpha, correction=correction)


def _read_reference(scn: Scenario, key: str) -> dict:
    ctrl = scn.get("control", {})
    file = scn.base_dir / _require(ctrl, key, "$.control", str)
    if not file.exists():
        raise ScenarioError(f"$.control.{key}", f"referenced file {file} does not exist")
    try:
        return json.loads(file.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"$.control.{key}", f"invalid JSON: {exc}") from None


def _report_control(scn: Scenario) -> ControlVector | None:
    """Best control of a referenced optimizer report, if the scenario names one."""
    ctrl = scn.get("control", {})
    if ctrl.get("source") == "optimizer":
        return OptimizationReport.from_dict(_read_reference(scn, "report")).best
    if ctrl.get("source") == "file":
        data = _read_reference(scn, "path")
        if "best_control" in data:
            return OptimizationReport.from_dict(data).best
    return None


def _coupling(scn: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Complex couplings and durations for the Gaussian/Lindblad engines."""
    best = _report_control(scn)
    if best is not None:
        return best.values, best.durations
    sched = build_schedule(scn)
    if sched is None:
        t_final = _number(scn.raw, "t_final", "$")
        return np.zeros(1, dtype=complex), np.array([t_final])
    if sched.kind != "linear":
        raise ScenarioError("$.control.kind", f"the {scn.engine} engine needs a linear schedule")
    return sched.coupling_values(), sched.durations


# run directories ------------------------------------------------------------------

def make_run_dir(root: str | Path, label: str, config: dict, seed: int) -> Path:
    root = Path(root)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run = root / f"{stamp}-{label}"
    k = 1
    while run.exists():
        run = root / f"{stamp}-{label}-{k}"
        k += 1
    run.mkdir(parents=True)
    (run / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True))
    (run / "seed.txt").write_text(f"{seed}\n")
    return run


def _manifest(run: Path, files: dict[str, list[str]], extra: dict | None = None):
    data = {"version": __version__, "files": {name: {"columns": cols} for name, cols in files.items()}}
    data.update(extra or {})
    (run / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True))


def _csv_header(text: str) -> list[str]:
    return next(csv.reader(io.StringIO(text)))


def _write(run: Path, name: str, text: str) -> Path:
    out = run / name
    out.write_text(text)
    return out


# engines ---------------------------------------------------------------------------

def simulate_covariance(scn: Scenario) -> Trajectory:
    G, durations = _coupling(scn)
    t_final = float(scn.raw.get("t_final", durations.sum()))
    dt = _number(scn.raw, "dt", "$", t_final / 200)
    history = CouplingHistory.piecewise(G, durations)
    state = gaussian_initial(scn.get("initial", {}))
    return propagate(state, scn.params, history, t_final, dt, bath_model=scn.bath_model,
                     method=scn.raw.get("method", "auto"))


def simulate_lindblad(scn: Scenario):
    from .fock import build_hamiltonian, linearized_terms
    G, durations = _coupling(scn)
    config = _fock_config(scn)
    rho = _fock_initial(scn, config, density=True)
    segs = [(build_hamiltonian(linearized_terms(scn.params, g, True), config), tau) for g, tau in zip(G, durations)]
    dt = _number(scn.raw, "dt", "$", float(durations.sum()) / 400)
    decay = {"c": scn.params.kappa} if "c" in config.modes else {}
    return lindblad_evolve(rho, segs, config, decay, dt)


def fock_swap(scn: Scenario, dims_override=None) -> dict:
    """Run the compiled schedule in Fock space and check the swap and truncation."""
    sched = build_schedule(scn)
    if sched is None:
        raise ScenarioError("$.control", "fock-swap needs a compiled schedule")
    config = _fock_config(scn, ("a", "s", "m"))
    if dims_override is not None:
        config = FockConfig(tuple(dims_override), config.modes, config.budget)
    extra = int(scn.get("fock", {}).get("robustness_extra", 4))
    dt = scn.raw.get("dt")

    def run(cfg):
        psi = _fock_initial(scn, cfg)
        return evolve(psi, sched.fock_segments(scn.params, cfg), cfg, dt=dt)

    traj = run(config)
    big = config.enlarged(extra)
    traj_big = run(big)
    m0 = float(traj.energies["m"][0])
    final = {m: float(traj.energies[m][-1]) for m in config.modes}
    final_big = {m: float(traj_big.energies[m][-1]) for m in config.modes}
    changes = {m: abs(final_big[m] - final[m]) / max(abs(final_big[m]), 1e-12) for m in config.modes}
    transferred = final["s"] / m0 if m0 > 0 else float("nan")
    return {
        "trajectory": traj,
        "schedule": sched,
        "swap_time": float(traj.t[-1]),
        "initial_mechanical": m0,
        "final_energies": final,
        "final_energies_enlarged": final_big,
        "relative_change_enlarged": changes,
        "truncation_limited": max(changes.values()) >= 0.01,
        "transferred_fraction": transferred,
        "min_mechanical": float(traj.energies["m"].min()),
        "edge_population": {m: edge_population(traj.final_state, m, config) for m in config.modes},
        "dims": list(config.dims),
        "dims_enlarged": list(big.dims),
    }


# commands --------------------------------------------------------------------------

def _scenario_from_args(args) -> Scenario:
    if getattr(args, "scenario", None):
        return load_scenario(args.scenario)
    raise ScenarioError("$", "no scenario given (use --scenario)")


def _config_copy(scn: Scenario, args) -> dict:
    return {"scenario": scn.raw, "params_resolved": params_to_dict(scn.params),
            "command": args.command, "argv": sys.argv[1:] if args.record_argv else []}


def cmd_simulate(args) -> int:
    scn = _scenario_from_args(args)
    run = make_run_dir(args.runs_dir, f"simulate-{scn.name}", _config_copy(scn, args), scn.seed)
    if scn.engine == "covariance":
        traj = simulate_covariance(scn)
        text = traj.to_csv()
        summary = {"final_phonon_number": float(traj.phonons[-1]), "final_photon_number": float(traj.photons[-1])}
    elif scn.engine == "lindblad":
        traj = simulate_lindblad(scn)
        text = traj.to_csv()
        summary = {f"final_n_{m}": float(v[-1]) for m, v in traj.energies.items()}
    else:
        res = fock_swap(scn)
        traj = res["trajectory"]
        text = traj.to_csv()
        summary = {k: v for k, v in res.items() if k not in ("trajectory", "schedule")}
    _write(run, "trajectory.csv", text)
    _write(run, "summary.json", json.dumps(summary, indent=2, sort_keys=True))
    _manifest(run, {"trajectory.csv": _csv_header(text)}, {"engine": scn.engine})
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"run directory: {run}")
    return EXIT_OK


def _optimization_setup(scn: Scenario) -> tuple[ControlVector, OptimizationScenario, dict]:
    opt = scn.get("optimizer", {})
    state = gaussian_initial(scn.get("initial", {}))
    target = OptimizationScenario(scn.params, state, scn.bath_model, opt.get("objective", "final"),
                                  opt.get("occupation", "total"))
    ctrl = scn.get("control", {})
    g_max = _number(ctrl, "g_max", "$.control", _number(opt, "g_max", "$.optimizer", 1.0))
    partial = bool(opt.get("partial", False))
    best = _report_control(scn)
    if best is not None:
        initial = ControlVector.projected(best.values, best.durations, g_max, partial)
    elif ctrl.get("source") in ("analytic_seed", "compiler", "file"):
        initial = ControlVector.from_schedule(build_schedule(scn), g_max, partial)
    else:
        n = int(_number(ctrl, "n_segments", "$.control", 30.0))
        t_total = _number(ctrl, "t_total_periods", "$.control", 1.0) * TWO_PI / scn.params.nu
        initial = ControlVector.uniform(n, t_total, g_max, partial=partial)
    return initial, target, opt


def cmd_optimize(args) -> int:
    scn = _scenario_from_args(args)
    initial, target, opt = _optimization_setup(scn)
    strategy = args.strategy or opt.get("strategy", "b")
    budget = args.budget or int(opt.get("budget", 1000))
    seed = scn.seed if args.seed is None else args.seed
    config = _config_copy(scn, args)
    config.update({"strategy": strategy, "budget": budget, "seed": seed})
    run = make_run_dir(args.runs_dir, f"optimize-{scn.name}", config, seed)
    report = optimize(initial, target, budget, seed, strategy)
    _write(run, "report.json", report.to_json())
    if args.out:
        Path(args.out).write_text(report.to_json())
    _manifest(run, {}, {"report": "report.json"})
    print(f"initial objective {report.initial_objective:.6g}")
    print(f"best objective    {report.best_objective:.6g} after {report.evaluations} evaluations")
    print(f"schedule length   {report.total_time_periods:.4g} periods")
    print(f"run directory: {run}")
    return EXIT_OK


def _sweep(scn: Scenario, args) -> tuple[list, dict]:
    sw = scn.get("sweep", {})
    kappas = [float(k) for k in args.kappas.split(",")] if getattr(args, "kappas", None) else sw.get("kappas")
    strategies = args.strategies.split(",") if getattr(args, "strategies", None) else sw.get("strategies",
                                                                                              list(SWEEP_STRATEGIES))
    if not kappas:
        raise ScenarioError("$.sweep.kappas", "empty kappa list")
    for s in strategies:
        if s not in SWEEP_STRATEGIES:
            raise ScenarioError("$.sweep.strategies", f"unknown strategy {s!r}")
    budget = getattr(args, "budget", None) or int(sw.get("budget", 5000))
    seed = scn.seed if getattr(args, "seed", None) is None else args.seed
    state = gaussian_initial(scn.get("initial", {}))
    template = OptimizationScenario(scn.params, state, scn.bath_model)
    rows = kappa_sweep(template, kappas, strategies, seed, budget, g_max=float(sw.get("g_max", 10.0)),
                       t_total=float(sw.get("t_total_periods", 0.8)) * TWO_PI / scn.params.nu,
                       n_random=int(sw.get("n_random", 30)), continuation=bool(sw.get("continuation", False)))
    return rows, {"kappas": kappas, "strategies": strategies, "budget": budget, "seed": seed}


def _sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kappa", "strategy", "before", "after", "evaluations"])
    for r in rows:
        w.writerow([repr(r.kappa), r.strategy, repr(r.before), repr(r.after), r.evaluations])
    return buf.getvalue()


def _print_sweep(rows):
    print(f"{'kappa':>6}  {'strategy':<15} {'before':>12} {'after':>12}")
    for r in rows:
        print(f"{r.kappa:6.2f}  {r.strategy:<15} {r.before:12.5g} {r.after:12.5g}")


def cmd_sweep(args) -> int:
    scn = _scenario_from_args(args)
    rows, used = _sweep(scn, args)
    config = _config_copy(scn, args)
    config.update(used)
    run = make_run_dir(args.runs_dir, f"sweep-{scn.name}", config, used["seed"])
    text = _sweep_csv(rows)
    _write(run, "sweep.csv", text)
    _manifest(run, {"sweep.csv": _csv_header(text)})
    _print_sweep(rows)
    print(f"run directory: {run}")
    return EXIT_OK


def cmd_compile(args) -> int:
    scn = load_scenario(args.scenario) if args.scenario else None
    params = scn.params if scn else params_from_dict(json.loads(args.params or "{}"))
    if args.kind == "linear":
        sched = compile_linear_beamsplitter(params, args.strength, args.t1, args.tf, sideband=args.sideband,
                                            compensation=args.compensation)
    else:
        ctrl = {"omega": args.omega, "t1": args.t1, "tf": args.tf, "alpha": args.alpha,
                "tf_prime": args.tf_prime if args.tf_prime is not None else "predicted",
                "correction": args.correction}
        sched = _nonlinear_from_control(params, ctrl, "$")
    if args.repetitions != 1:
        sched = trotterize(sched, args.repetitions)
    out = sched.to_dict()
    if args.emit_predicted:
        out = {"predicted": sched.predicted_report(), "effective_time": sched.effective_time,
               "metadata": sched.metadata, "warnings": list(sched.warnings)}
    text = json.dumps(out, indent=2, sort_keys=True, default=float)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    for w in sched.warnings:
        logger.warning(w)
    return EXIT_OK


def cmd_fock_swap(args) -> int:
    scn = _scenario_from_args(args)
    run = make_run_dir(args.runs_dir, f"fock-swap-{scn.name}", _config_copy(scn, args), scn.seed)
    res = fock_swap(scn)
    _print_fock(res)
    text = res["trajectory"].to_csv()
    _write(run, "trajectory.csv", text)
    summary = {k: v for k, v in res.items() if k not in ("trajectory", "schedule")}
    _write(run, "summary.json", json.dumps(summary, indent=2, sort_keys=True))
    _write(run, "schedule.json", res["schedule"].to_json())
    _manifest(run, {"trajectory.csv": _csv_header(text)})
    print(f"run directory: {run}")
    return EXIT_OK


def _print_fock(res: dict):
    print(f"swap time            {res['swap_time']:.4f}")
    print(f"initial n_m          {res['initial_mechanical']:.4f}")
    for m, v in res["final_energies"].items():
        print(f"final n_{m:<3}          {v:.4f}  (dims+4: {res['final_energies_enlarged'][m]:.4f})")
    print(f"transferred to s     {res['transferred_fraction']:.4f}")
    print(f"truncation limited   {res['truncation_limited']}")


def feasibility_table(doc: dict) -> list[tuple[str, str, Any]]:
    rows = []
    for k, case in enumerate(doc.get("cases", [])):
        inp = feasibility_from_dict(case["input"], f"$.cases[{k}].input")
        rep = feasibility_report(inp)
        label = case.get("label", f"case {k}")
        rows.extend((label, name, value) for name, value in rep.rows())
    for k, item in enumerate(doc.get("cooling_rates", [])):
        label = item.get("label", f"rate {k}")
        t = item["t_periods"] * TWO_PI
        if "rate_nu" in item:
            rows.append((label, "required n0/nf", math.exp(item["rate_nu"] * t)))
        else:
            rows.append((label, "Gamma [nu]", cooling_rate(item["n_initial"], item["n_final"], t)))
    return rows


def _print_table(rows):
    for label, name, value in rows:
        shown = f"{value:.6g}" if isinstance(value, float) else str(value)
        print(f"{label:<42} {name:<18} {shown}")


def cmd_feasibility(args) -> int:
    if args.scenario:
        try:
            doc = json.loads(Path(args.scenario).read_text())
        except (FileNotFoundError, json.JSONDecodeError) as exc:
            raise ScenarioError("$", str(exc)) from None
    else:
        doc = json.loads(resources.files("optopulse").joinpath("scenarios", "feasibility.json").read_text())
    _print_table(feasibility_table(doc))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    target = args.target
    if target == "feasibility":
        doc = json.loads(resources.files("optopulse").joinpath("scenarios", "feasibility.json").read_text())
        rows = feasibility_table(doc)
        run = make_run_dir(args.runs_dir, "reproduce-feasibility", {"scenario": doc}, 0)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", "quantity", "value"])
        w.writerows(rows)
        _write(run, "feasibility.csv", buf.getvalue())
        _print_table(rows)
        print(f"run directory: {run}")
        return EXIT_OK
    scn = bundled_scenario(target)
    if target == "fig1":
        initial, opt_scn, opt = _optimization_setup(scn)
        budget = args.budget or int(opt["budget"])
        run = make_run_dir(args.runs_dir, "reproduce-fig1", {"scenario": scn.raw, "budget": budget}, scn.seed)
        report = optimize(initial, opt_scn, budget, scn.seed, opt.get("strategy", "b"))
        _write(run, "report.json", report.to_json())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_start", "duration", "G_re", "G_im"])
        starts = np.concatenate([[0.0], np.cumsum(report.best.durations)[:-1]])
        for t0, tau, g in zip(starts, report.best.durations, report.best.values):
            w.writerow([repr(float(t0)), repr(float(tau)), repr(float(g.real)), repr(float(g.imag))])
        _write(run, "control.csv", buf.getvalue())
        print(f"seed occupation       {report.initial_objective:.6g}")
        print(f"optimised occupation  {report.best_objective:.6g}")
        print(f"run directory: {run}")
        return EXIT_OK
    if target == "fig2":
        rows, used = _sweep(scn, args)
        run = make_run_dir(args.runs_dir, "reproduce-fig2", {"scenario": scn.raw, **used}, used["seed"])
        _write(run, "sweep.csv", _sweep_csv(rows))
        _print_sweep(rows)
        print(f"run directory: {run}")
        return EXIT_OK
    if target == "fig4":
        run = make_run_dir(args.runs_dir, "reproduce-fig4", {"scenario": scn.raw}, scn.seed)
        res = fock_swap(scn)
        _write(run, "trajectory.csv", res["trajectory"].to_csv())
        summary = {k: v for k, v in res.items() if k not in ("trajectory", "schedule")}
        _write(run, "summary.json", json.dumps(summary, indent=2, sort_keys=True))
        _print_fock(res)
        print(f"run directory: {run}")
        return EXIT_OK
    raise ScenarioError("$", f"unknown reproduction target {target!r}")


# argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optopulse", description="Pulsed optomechanical cooling toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--runs-dir", default="runs", help="parent directory for run outputs")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--no-argv", dest="record_argv", action="store_false",
                        help="do not record the command line in config.json")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="propagate a scenario with its engine")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="optimise a coupling schedule")
    p.add_argument("--scenario", required=True)
    p.add_argument("--strategy", choices=("a", "b", "c", "d"))
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep-kappa", help="optimisation strategies across cavity decay rates")
    p.add_argument("--scenario", required=True)
    p.add_argument("--kappas", help="comma separated, units of nu")
    p.add_argument("--strategies", help=f"comma separated subset of {','.join(SWEEP_STRATEGIES)}")
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compile-bch", help="compile an analytic pulse sequence")
    p.add_argument("--kind", choices=("linear", "nonlinear"), default="linear")
    p.add_argument("--scenario", help="take params from a scenario file")
    p.add_argument("--params", help="inline JSON params block")
    p.add_argument("--strength", type=float, default=100.0)
    p.add_argument("--omega", type=float, default=1000.0)
    p.add_argument("--t1", type=float, default=0.01)
    p.add_argument("--tf", type=float, default=0.5)
    p.add_argument("--tf-prime", dest="tf_prime", type=float)
    p.add_argument("--alpha", type=float, default=4.0)
    p.add_argument("--sideband", choices=("red", "blue"), default="red")
    p.add_argument("--compensation", choices=("concurrent", "segment", "none"), default="concurrent")
    p.add_argument("--correction", choices=("pulse", "window", "none"), default="window")
    p.add_argument("--repetitions", type=float, default=1.0)
    p.add_argument("--emit-predicted", action="store_true", help="print the predicted effective Hamiltonian")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("fock-swap", help="nonlinear swap in truncated Fock space")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_fock_swap)

    p = sub.add_parser("feasibility", help="experimental feasibility numbers")
    p.add_argument("--scenario")
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("reproduce", help="run a bundled reproduction")
    p.add_argument("target", choices=("fig1", "fig2", "fig4", "feasibility"))
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ScheduleError, DomainError, KeyError, TypeError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NonHermitianError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
