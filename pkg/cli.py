"""Batch experiment runner.

    python cli.py list
    python cli.py describe fpu-short
    python cli.py run fpu-short --stepper artificial --delta 0.002 --tau 1e-4
    python cli.py run linear-stability-scan --kind nonintrusive --omega 1000
    python cli.py compare a.cfg b.cfg --observable x1 --window 1.0
    python cli.py compare a.cfg reference

Every run writes CSV tables and a ``manifest.json`` into
``<out>/<benchmark>_<stepper>/`` and appends one line to ``<out>/runs.jsonl``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from analysis import (
    convergence_study,
    energy_series,
    ensemble_stats,
    exact_linear_trajectory,
    exchange_period,
    f_error,
    fpu_diagnostics,
    relaxation_period,
    slow_error,
    stability_domain_scan,
)
from config import (
    CSV_COLUMNS,
    CSV_FLOAT_FORMAT,
    DEFAULT_BASE_SEED,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_SAMPLE_STRIDE,
    DIAGNOSTICS_DEFAULT,
    MAX_SAMPLES_PER_FILE,
    REGIME_EXPONENT_BY_KIND,
    RUN_LOG_NAME,
    VERSION,
)
from core_types import (
    ConfigError,
    FlavorError,
    StepSchedule,
    Trajectory,
    UnknownBenchmark,
    make_schedule_rule_of_thumb,
)
from flavor_compose import SamplingPolicy, StepperKind, integrate, mesostep_count, run_ensemble
from logger import log_event, log_run
from problems import REGISTRY, Benchmark, get_benchmark, reference_stepper, stepper_for

# Stability-scan grid used when the config gives none
SCAN_DELTAS = tuple(np.round(np.arange(0.1, 4.01, 0.1), 10))
SCAN_RATIOS = tuple(10.0 ** np.arange(-3.0, 3.51, 0.25))


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _str_list(text: str) -> Tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


@dataclass
class ExperimentConfig:
    benchmark: str = ""
    stepper: Optional[str] = None
    tau: Optional[float] = None
    delta: Optional[float] = None
    gamma: Optional[float] = None
    horizon: Optional[float] = None
    ensemble: Optional[int] = None
    seed: int = DEFAULT_BASE_SEED
    out: str = DEFAULT_OUTPUT_DIR
    stride: int = DEFAULT_SAMPLE_STRIDE
    diagnostics: Tuple[str, ...] = DIAGNOSTICS_DEFAULT
    # stability scans
    kind: str = "nonintrusive"
    omega: Optional[float] = None
    scan_deltas: Tuple[float, ...] = SCAN_DELTAS
    scan_ratios: Tuple[float, ...] = SCAN_RATIOS
    fast_substep: str = "symplectic_euler"
    observable: Optional[str] = None
    window: float = 1.0
    sweep: Tuple[float, ...] = ()
    workers: int = 1
    quiet: bool = False

    def validate(self) -> "ExperimentConfig":
        if not self.benchmark:
            raise ConfigError("no benchmark given")
        if self.ensemble is not None and self.ensemble < 1:
            raise ConfigError(f"ensemble must be >= 1, got {self.ensemble}")
        if self.horizon is not None and not self.horizon > 0:
            raise ConfigError(f"horizon must be > 0, got {self.horizon}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if not self.window > 0:
            raise ConfigError(f"window must be > 0, got {self.window}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.fast_substep not in ("symplectic_euler", "exact"):
            raise ConfigError(f"fast_substep must be symplectic_euler or exact, got {self.fast_substep}")
        if self.stepper is not None:
            try:
                StepperKind(self.stepper)
            except ValueError:
                raise ConfigError(f"Unknown stepper: {self.stepper}") from None
        unknown = set(self.diagnostics) - {"energy", "slow", "springs", "reference"}
        if unknown:
            raise ConfigError(f"Unknown diagnostics: {', '.join(sorted(unknown))}")
        return self


_PARSERS = {
    "benchmark": str,
    "stepper": str,
    "tau": float,
    "delta": float,
    "gamma": float,
    "horizon": float,
    "ensemble": int,
    "seed": int,
    "out": str,
    "stride": int,
    "diagnostics": _str_list,
    "kind": str,
    "omega": float,
    "scan_deltas": _float_list,
    "scan_ratios": _float_list,
    "fast_substep": str,
    "observable": str,
    "window": float,
    "sweep": _float_list,
    "workers": int,
    "quiet": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}


def load_config_file(path: str) -> Dict[str, Any]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values: Dict[str, Any] = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from e
    return values


def build_config(file_values: Dict[str, Any], flag_values: Dict[str, Any]) -> ExperimentConfig:
    """File values first, flags win."""
    names = {f.name for f in fields(ExperimentConfig)}
    merged = {k: v for k, v in file_values.items() if k in names}
    merged.update({k: v for k, v in flag_values.items() if k in names and v is not None})
    return ExperimentConfig(**merged).validate()


# CSV

def _fmt(v: Any) -> Any:
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return CSV_FLOAT_FORMAT.format(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path: str, header: Sequence[str], rows) -> str:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _trajectory_rows(traj: Trajectory):
    for i in range(len(traj)):
        yield [int(traj.steps[i]), traj.times[i], traj.fast_clock[i], *traj.states[i]]


# Runs

def resolve_schedule(bench: Benchmark, cfg: ExperimentConfig, kind: StepperKind) -> StepSchedule:
    if kind is StepperKind.LEGACY:
        h = cfg.tau or cfg.delta or bench.reference_h or bench.default_schedule.tau
        return StepSchedule(tau=h, delta=h)
    base = bench.default_schedule
    if cfg.gamma is not None:
        try:
            base = make_schedule_rule_of_thumb(
                bench.epsilon, cfg.gamma, REGIME_EXPONENT_BY_KIND.get(kind.value, 1.0)
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e
    return StepSchedule(
        tau=cfg.tau if cfg.tau is not None else base.tau,
        delta=cfg.delta if cfg.delta is not None else base.delta,
        gamma=cfg.gamma,
    )


def _overrides(cfg: ExperimentConfig) -> Dict[str, Any]:
    return {"omega": cfg.omega} if cfg.omega is not None else {}


def _say(cfg: ExperimentConfig, msg: str) -> None:
    if not cfg.quiet:
        print(msg)


def _report(e: FlavorError) -> None:
    """One JSON line on stderr."""
    payload: Dict[str, Any] = {"error": type(e).__name__, "message": str(e)}
    if isinstance(e, UnknownBenchmark):
        payload["suggestions"] = e.suggestions
    print(json.dumps(payload), file=sys.stderr)


def reference_trajectory(bench: Benchmark, like: Trajectory, stride_time: float) -> Trajectory:
    """Ground truth on (or near) the sample grid of ``like``."""
    if bench.reference_recipe == "closed_form":
        return exact_linear_trajectory(bench.linear_matrix, bench.initial_state, like)
    ref = reference_stepper(bench)
    stride = max(1, int(round(stride_time / ref.schedule.delta)))
    return integrate(ref, bench.initial_state, like.horizon, SamplingPolicy(stride))


def _run_scan(bench: Benchmark, cfg: ExperimentConfig, out_dir: str, manifest: Dict[str, Any]) -> List[str]:
    omega = bench.parameters["omega"]
    _say(cfg, f"[run] stability scan kind={cfg.kind} omega={omega:g} ({len(cfg.scan_deltas)}x{len(cfg.scan_ratios)} cells)")
    scan = stability_domain_scan(cfg.kind, omega, cfg.scan_deltas, cfg.scan_ratios)
    path = write_csv(os.path.join(out_dir, "stability.csv"), CSV_COLUMNS["stability"], scan.rows())
    manifest["stable_cells"] = int(scan.stable.sum())
    manifest["valid_cells"] = int(scan.valid.sum())
    return [path]


def _run_trajectories(bench: Benchmark, cfg: ExperimentConfig, kind: StepperKind, out_dir: str, manifest: Dict[str, Any]) -> List[str]:
    schedule = resolve_schedule(bench, cfg, kind)
    stepper = stepper_for(bench, kind.value, schedule, cfg.fast_substep)
    t_end = cfg.horizon if cfg.horizon is not None else bench.horizon
    n_steps = mesostep_count(t_end, schedule.delta)
    stride = max(cfg.stride, math.ceil(n_steps / MAX_SAMPLES_PER_FILE))
    sampler = SamplingPolicy(stride)
    n = cfg.ensemble if cfg.ensemble is not None else (bench.ensemble if stepper.stochastic else 1)

    manifest.update(
        tau=schedule.tau,
        delta=schedule.delta,
        horizon=t_end,
        ensemble=n,
        stride=stride,
        mesosteps=n_steps,
        regime_ok=stepper.regime_ok() if kind is not StepperKind.LEGACY else None,
    )
    if stride != cfg.stride:
        _say(cfg, f"[warn] sample stride raised to {stride} to keep files under {MAX_SAMPLES_PER_FILE} rows")
    _say(cfg, f"[run] {bench.name} {kind.value} tau={schedule.tau:g} delta={schedule.delta:g} T={t_end:g} N={n}")

    if stepper.stochastic or n > 1:
        record = run_ensemble(stepper, bench.initial_state, t_end, n, cfg.seed, sampler, workers=cfg.workers)
        trajectories = record.trajectories
    else:
        trajectories = [integrate(stepper, bench.initial_state, t_end, sampler)]

    log_path = os.path.join(cfg.out, RUN_LOG_NAME)
    failures = []
    for i, tr in enumerate(trajectories):
        if not tr.completed:
            failures.append({"trajectory": i, "step": tr.failure_step, "reason": tr.failure})
            log_event(log_path, "non_finite", benchmark=bench.name, trajectory=i, step=tr.failure_step)
            _say(cfg, f"[warn] trajectory {i} stopped at mesostep {tr.failure_step}: {tr.failure}")
    manifest["failures"] = failures
    manifest["step_counts"] = {
        key: int(sum(tr.step_counts.get(key, 0) for tr in trajectories))
        for key in ("mesosteps", "map_calls", "stiff_calls")
    }

    files: List[str] = []
    first = trajectories[0]
    state_cols = [f"u{i}" for i in range(first.states.shape[1])]
    if n == 1:
        files.append(write_csv(os.path.join(out_dir, "trajectory.csv"), CSV_COLUMNS["trajectory"] + state_cols, _trajectory_rows(first)))
    else:
        files.append(_write_ensemble(os.path.join(out_dir, "ensemble.csv"), bench, trajectories))

    ham = bench.hamiltonian
    if "energy" in cfg.diagnostics and ham is not None:
        es = energy_series(first, ham)
        manifest["energy_drift_slope"] = es.slope
        files.append(write_csv(
            os.path.join(out_dir, "energy.csv"),
            CSV_COLUMNS["energy"],
            ([int(s), t, e] for s, t, e in zip(first.steps, es.times, es.values)),
        ))
    if "slow" in cfg.diagnostics and n == 1:
        for ob in bench.slow_observables:
            vals = ob.series(first.states)
            cols = [ob.name] if vals.shape[1] == 1 else [f"{ob.name}{j}" for j in range(vals.shape[1])]
            files.append(write_csv(
                os.path.join(out_dir, f"slow_{ob.name}.csv"),
                CSV_COLUMNS["slow"] + cols,
                ([int(s), t, *v] for s, t, v in zip(first.steps, first.times, vals)),
            ))
    if "springs" in cfg.diagnostics and "m" in bench.extras:
        m, omega = bench.extras["m"], bench.extras["omega"]
        fd = fpu_diagnostics(first, omega, m)
        manifest["stiff_energy_cv"] = fd.total_cv()
        files.append(write_csv(
            os.path.join(out_dir, "springs.csv"),
            CSV_COLUMNS["springs"] + [f"I_{j + 1}" for j in range(m)],
            ([int(s), t, tot, *row] for s, t, tot, row in zip(first.steps, fd.times, fd.total, fd.spring_energies)),
        ))
        if "beat_period" in bench.extras:
            manifest["exchange_period"] = exchange_period(fd.times, fd.spring_energies[:, 0], bench.extras["beat_period"])
            manifest["beat_period"] = bench.extras["beat_period"]
    if "reference" in cfg.diagnostics:
        files.extend(_reference_diagnostics(bench, cfg, trajectories, schedule, out_dir, manifest))
    if cfg.sweep:
        files.append(_convergence(bench, cfg, kind, schedule, t_end, n, out_dir, manifest))
    return files


def _write_ensemble(path: str, bench: Benchmark, trajectories: Sequence[Trajectory]) -> str:
    done = [tr for tr in trajectories if tr.completed]
    if len(done) < 2:
        raise ConfigError("fewer than two trajectories completed; no ensemble summary")
    rows = []
    for ob in bench.slow_observables:
        st = ensemble_stats(done, ob)
        for i, t in enumerate(st.times):
            for c in range(st.mean.shape[1]):
                name = ob.name if st.mean.shape[1] == 1 else f"{ob.name}{c}"
                rows.append([t, name, st.mean[i, c], st.mean_se[i, c], st.var[i, c], st.var_se[i, c], st.autocorr[i, c], st.autocorr_se[i, c]])
    return write_csv(path, CSV_COLUMNS["ensemble"], rows)


def _reference_diagnostics(bench, cfg, trajectories, schedule, out_dir, manifest) -> List[str]:
    first = trajectories[0]
    stride_time = float(first.times[1] - first.times[0]) if len(first) > 1 else schedule.delta
    rows = []
    files = []
    if bench.stochastic:
        ref_stepper = reference_stepper(bench)
        stride = max(1, int(round(stride_time / ref_stepper.schedule.delta)))
        ref = run_ensemble(ref_stepper, bench.initial_state, first.horizon, len(trajectories), cfg.seed, SamplingPolicy(stride), workers=cfg.workers)
        files.append(_write_ensemble(os.path.join(out_dir, "ensemble_reference.csv"), bench, ref.trajectories))
        for ob in bench.slow_observables:
            for label, group in (("flavor", trajectories), ("reference", ref.trajectories)):
                st = ensemble_stats([tr for tr in group if tr.completed], ob)
                rows.append([f"{label}_final_mean", ob.name, "", st.mean[-1, 0]])
                rows.append([f"{label}_final_mean_se", ob.name, "", st.mean_se[-1, 0]])
    else:
        ref = reference_trajectory(bench, first, stride_time)
        for ob in bench.slow_observables:
            rows.append(["slow_error", ob.name, "", slow_error(first, ref, ob)])
            rows.append(["f_error", ob.name, cfg.window, f_error(first, ref, ob, cfg.window)])
        signal = bench.extras.get("period_signal")
        if signal:
            ob = bench.observable(signal)
            for label, tr in (("flavor", first), ("reference", ref)):
                rows.append([f"{label}_relaxation_period", signal, "", relaxation_period(tr.times, ob.series(tr.states)[:, 0])])
    files.append(write_csv(os.path.join(out_dir, "compare.csv"), CSV_COLUMNS["compare"], rows))
    return files


def _convergence(bench, cfg, kind, schedule, t_end, n, out_dir, manifest) -> str:
    """Error of the chosen observable against the reference, per delta in the
    sweep. A single trajectory is scored by f_error; an ensemble by the gap
    between final-time ensemble means (same seed for both runs)."""
    ob = bench.observable(cfg.observable)
    ref_cache: Dict[str, Any] = {}

    def final_mean(trajectories: Sequence[Trajectory]) -> np.ndarray:
        done = [tr for tr in trajectories if tr.completed]
        if not done:
            raise ConfigError("no trajectory of the sweep ensemble completed")
        return np.mean([ob(tr.final_state) for tr in done], axis=0)

    def ensemble_error(stepper) -> float:
        # only the endpoints are needed
        ends = SamplingPolicy(max(1, mesostep_count(t_end, stepper.schedule.delta)))
        record = run_ensemble(stepper, bench.initial_state, t_end, n, cfg.seed, ends, workers=cfg.workers)
        if "ref" not in ref_cache:
            ref_stepper = reference_stepper(bench)
            ends_ref = SamplingPolicy(max(1, mesostep_count(t_end, ref_stepper.schedule.delta)))
            ref = run_ensemble(ref_stepper, bench.initial_state, t_end, n, cfg.seed, ends_ref, workers=cfg.workers)
            ref_cache["ref"] = final_mean(ref.trajectories)
        return float(np.linalg.norm(final_mean(record.trajectories) - ref_cache["ref"]))

    def error_of(delta: float) -> float:
        stepper = stepper_for(bench, kind.value, StepSchedule(tau=min(schedule.tau, delta), delta=delta), cfg.fast_substep)
        if stepper.stochastic:
            return ensemble_error(stepper)
        tr = integrate(stepper, bench.initial_state, t_end)
        if "ref" not in ref_cache:
            ref_cache["ref"] = reference_trajectory(bench, tr, min(cfg.sweep))
        return f_error(tr, ref_cache["ref"], ob, cfg.window)

    table = convergence_study(error_of, cfg.sweep)
    manifest["convergence"] = {
        "metric": "final_mean_gap" if bench.stochastic else "f_error",
        "observable": ob.name,
        "ensemble": n if bench.stochastic else 1,
        "slope": table.slope,
        "r_squared": table.r_squared,
        "spikes": table.spikes(),
    }
    return write_csv(os.path.join(out_dir, "convergence.csv"), CSV_COLUMNS["convergence"], table.rows())


def _write_manifest(out_dir: str, manifest: Dict[str, Any]) -> None:
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)


# an exception outside the handled ones still leaves a manifest behind
_UNFINISHED = {"status": "failed", "failure": "run did not finish"}


def _fail(manifest: Dict[str, Any], e: Exception) -> int:
    if not isinstance(e, FlavorError):
        e = ConfigError(str(e))
    manifest["status"] = "failed"
    manifest["failure"] = f"{type(e).__name__}: {e}"
    _report(e)
    return 2


def run(cfg: ExperimentConfig) -> int:
    t0 = time.time()
    kind_name = cfg.kind if cfg.benchmark == "linear-stability-scan" else (cfg.stepper or "default")
    out_dir = os.path.join(cfg.out, f"{cfg.benchmark}_{kind_name}")
    os.makedirs(out_dir, exist_ok=True)
    manifest: Dict[str, Any] = {"config": asdict(cfg), "version": VERSION, "seed": cfg.seed, **_UNFINISHED}
    log_path = os.path.join(cfg.out, RUN_LOG_NAME)
    code = 2
    try:
        bench = get_benchmark(cfg.benchmark, **_overrides(cfg))
        if bench.task == "stability_scan":
            manifest["stepper"] = cfg.kind
            files = _run_scan(bench, cfg, out_dir, manifest)
        else:
            kind = StepperKind(cfg.stepper or bench.default_kind)
            manifest["stepper"] = kind.value
            files = _run_trajectories(bench, cfg, kind, out_dir, manifest)
        manifest["files"] = [os.path.basename(p) for p in files]
        manifest.update(status="ok", failure="")
        code = 0
        if manifest.get("failures"):
            manifest["status"] = "partial"
            manifest["failure"] = manifest["failures"][0]["reason"]
            code = 1
    except (FlavorError, ValueError) as e:
        code = _fail(manifest, e)
    finally:
        manifest["wall_s"] = time.time() - t0
        _write_manifest(out_dir, manifest)
        log_run(
            log_path,
            cfg.benchmark,
            manifest.get("stepper", kind_name),
            manifest.get("tau", float("nan")),
            manifest.get("delta", float("nan")),
            manifest.get("horizon", float("nan")),
            manifest.get("ensemble", 1),
            cfg.seed,
            manifest["wall_s"],
            step_counts=manifest.get("step_counts"),
            status=manifest["status"],
            out_dir=out_dir,
            failure=manifest["failure"],
        )
    _say(cfg, f"[done] {manifest['status']} in {manifest['wall_s']:.2f}s -> {out_dir}")
    return code


def compare(cfg_a: ExperimentConfig, cfg_b: Optional[ExperimentConfig], observable: Optional[str], window: float) -> int:
    """Slow and F-errors between two deterministic runs. ``cfg_b=None``
    compares against the benchmark's reference."""
    t0 = time.time()
    other = cfg_b.benchmark if cfg_b is not None else "reference"
    out_dir = os.path.join(cfg_a.out, f"compare_{cfg_a.benchmark}_vs_{other}")
    os.makedirs(out_dir, exist_ok=True)
    manifest: Dict[str, Any] = {
        "config_a": asdict(cfg_a),
        "config_b": asdict(cfg_b) if cfg_b is not None else "reference",
        "observable": observable,
        "window": window,
        "version": VERSION,
        **_UNFINISHED,
    }
    code = 2
    try:
        bench_a = get_benchmark(cfg_a.benchmark, **_overrides(cfg_a))
        traj_a = _single_run(bench_a, cfg_a)
        if cfg_b is None:
            stride_time = float(traj_a.times[1] - traj_a.times[0]) if len(traj_a) > 1 else bench_a.default_schedule.delta
            traj_b = reference_trajectory(bench_a, traj_a, stride_time)
        else:
            traj_b = _single_run(get_benchmark(cfg_b.benchmark, **_overrides(cfg_b)), cfg_b)
        ob = bench_a.observable(observable)
        rows = [
            ["slow_error", ob.name, "", slow_error(traj_a, traj_b, ob)],
            ["f_error", ob.name, window, f_error(traj_a, traj_b, ob, window)],
        ]
        write_csv(os.path.join(out_dir, "compare.csv"), CSV_COLUMNS["compare"], rows)
        manifest["files"] = ["compare.csv"]
        manifest.update(status="ok", failure="")
        code = 0
    except (FlavorError, ValueError) as e:
        code = _fail(manifest, e)
    finally:
        manifest["wall_s"] = time.time() - t0
        _write_manifest(out_dir, manifest)
    return code


def _single_run(bench: Benchmark, cfg: ExperimentConfig) -> Trajectory:
    kind = StepperKind(cfg.stepper or bench.default_kind)
    stepper = stepper_for(bench, kind.value, resolve_schedule(bench, cfg, kind), cfg.fast_substep)
    if stepper.stochastic:
        raise ConfigError("compare works on deterministic runs; use run with the reference diagnostic for ensembles")
    t_end = cfg.horizon if cfg.horizon is not None else bench.horizon
    return integrate(stepper, bench.initial_state, t_end, SamplingPolicy(cfg.stride))


def list_benchmarks() -> List[str]:
    lines = []
    for name in REGISTRY:
        bench = get_benchmark(name)
        lines.append(f"{name:<22} {bench.default_kind:<16} {bench.citation}")
    return lines


def describe(name: str) -> List[str]:
    """Parameters of one benchmark, or of every benchmark ``name`` prefixes."""
    if name in REGISTRY:
        names = [name]
    else:
        names = [n for n in REGISTRY if n.startswith(name)]
        if not names:
            get_benchmark(name)   # raises UnknownBenchmark with suggestions
    lines = []
    for n in names:
        b = get_benchmark(n)
        s = b.default_schedule
        lines += [
            f"{b.name}: {b.citation}",
            f"  system       {type(b.system).__name__}, dim {b.initial_state.size}, eps {b.epsilon:g}",
            f"  parameters   {', '.join(f'{k}={v}' for k, v in b.parameters.items())}",
            f"  schedule     tau={s.tau:g} delta={s.delta:g} (speedup {s.speedup:g})",
            f"  horizon      {b.horizon:g}",
            f"  initial      {np.array2string(b.initial_state, precision=6, separator=', ')}",
            f"  observables  {', '.join(o.name for o in b.slow_observables)}",
            f"  steppers     {', '.join(b.kinds)} (default {b.default_kind})",
            f"  reference    {b.reference_recipe}"
            + (f" {b.legacy} h={b.reference_h:g}" if b.reference_h else ""),
            f"  ensemble     {b.ensemble}",
        ]
    return lines


# Entry point

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags win")
    p.add_argument("--stepper", choices=[k.value for k in StepperKind if k is not StepperKind.NATURAL])
    p.add_argument("--delta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--ensemble", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--stride", type=int)
    p.add_argument("--diagnostics", type=_str_list)
    p.add_argument("--kind", choices=["nonintrusive", "artificial"])
    p.add_argument("--omega", type=float)
    p.add_argument("--scan-deltas", dest="scan_deltas", type=_float_list)
    p.add_argument("--scan-ratios", dest="scan_ratios", type=_float_list, help="tau/eps values")
    p.add_argument("--fast-substep", dest="fast_substep", choices=["symplectic_euler", "exact"])
    p.add_argument("--observable")
    p.add_argument("--window", type=float)
    p.add_argument("--sweep", type=_float_list, help="comma-separated deltas for a convergence table")
    p.add_argument("--workers", type=int)
    p.add_argument("--quiet", action="store_true", default=None)


def _config_from(path: Optional[str], flags: Dict[str, Any]) -> ExperimentConfig:
    file_values = load_config_file(path) if path else {}
    return build_config(file_values, flags)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flavor", description="FLAVOR multiscale integrator experiments")
    parser.add_argument("--version", action="version", version=VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a benchmark")
    p_run.add_argument("benchmark", nargs="?")
    _add_run_flags(p_run)

    sub.add_parser("list", help="list benchmarks")

    p_desc = sub.add_parser("describe", help="show a benchmark's parameters")
    p_desc.add_argument("benchmark")

    p_cmp = sub.add_parser("compare", help="errors between two runs")
    p_cmp.add_argument("config_a")
    p_cmp.add_argument("config_b", help="config file, or 'reference'")
    p_cmp.add_argument("--observable")
    p_cmp.add_argument("--window", type=float, default=1.0)
    p_cmp.add_argument("--out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "list":
            print("\n".join(list_benchmarks()))
            return 0
        if args.command == "describe":
            print("\n".join(describe(args.benchmark)))
            return 0
        if args.command == "run":
            flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
            return run(_config_from(args.config, flags))
        if args.command == "compare":
            extra = {"out": args.out}
            cfg_a = _config_from(args.config_a, extra)
            cfg_b = None if args.config_b == "reference" else _config_from(args.config_b, extra)
            return compare(cfg_a, cfg_b, args.observable, args.window)
    except FlavorError as e:
        _report(e)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
