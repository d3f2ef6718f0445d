"""Stability, accuracy and ensemble diagnostics over FLAVOR trajectories.

Everything here is a pure function of immutable inputs. Tables produced for
the CLI use the column layouts in ``config.CSV_COLUMNS``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.linalg import expm
from scipy.stats import linregress

from config import LINEARITY_TOL, MIN_WINDOW_SAMPLES, STABILITY_TOL, STEP_COUNT_SLACK
from core_types import (
    EigenFailure,
    GridMismatch,
    LayoutMismatch,
    NotLinear,
    SeparatedHamiltonian,
    SlowObservable,
    StepSchedule,
    TimeGridMismatch,
    Trajectory,
    WindowTooSmall,
)
from flavor_compose import ConstraintSpec, FlavorStepper, StepperKind, artificial_flavor_step, flavor_step
from legacy_integrators import symplectic_euler
from problems import linear_hamiltonian


# Stability

@dataclass
class StabilityVerdict:
    spectral_radius: float
    stable: bool
    eigenvalues: List[complex] = field(default_factory=list)


def transfer_matrix(stepper: FlavorStepper, dim: Optional[int] = None) -> np.ndarray:
    """Matrix T with step(u) = T u, one column per unit vector.

    Raises NotLinear when the stepper is not linear on two random states.
    """
    if dim is None:
        if stepper.hamiltonian is None:
            raise ValueError("dim is required for steppers without a Hamiltonian")
        dim = stepper.hamiltonian.dim
    basis = np.eye(dim)
    t = np.column_stack([stepper.step(basis[i], 0) for i in range(dim)])

    samples = np.random.default_rng(0).standard_normal((2, dim))
    a, b = samples
    lhs = stepper.step(2.0 * a - b, 0)
    rhs = 2.0 * stepper.step(a, 0) - stepper.step(b, 0)
    scale = max(1.0, float(np.max(np.abs(t))) * float(np.max(np.abs(samples))))
    if np.max(np.abs(lhs - rhs)) > LINEARITY_TOL * scale or np.max(np.abs(t @ a - stepper.step(a, 0))) > LINEARITY_TOL * scale:
        raise NotLinear(f"{stepper.kind.value} stepper is not linear in the state")
    return t


def stability_verdict(t: np.ndarray, tol: float = STABILITY_TOL) -> StabilityVerdict:
    t = np.asarray(t, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError(f"transfer matrix must be square, got shape {t.shape}")
    try:
        eig = np.linalg.eigvals(t)
    except np.linalg.LinAlgError as e:
        raise EigenFailure(f"eigenvalue computation failed: {e}") from e
    if not np.all(np.isfinite(eig)):
        raise EigenFailure("eigenvalues are not finite")
    radius = float(np.max(np.abs(eig))) if eig.size else 0.0
    return StabilityVerdict(spectral_radius=radius, stable=radius <= 1.0 + tol, eigenvalues=list(eig))


def characteristic_polynomial(t: np.ndarray) -> np.ndarray:
    """Monic characteristic coefficients, highest degree first."""
    return np.real(np.poly(np.asarray(t, dtype=float)))


def nonintrusive_asymptotic_polynomial(delta: float) -> np.ndarray:
    d2 = delta**2
    return np.array([1.0, d2 - 4.0, 6.0 - 2.0 * d2, d2 - 4.0, 1.0])


def artificial_asymptotic_polynomial(delta: float) -> np.ndarray:
    # normalized by the leading coefficient 2
    d2 = delta**2
    return np.array([1.0, 0.5 * (d2 - 8.0), 6.0 - d2, 0.5 * (d2 - 8.0), 1.0])


@dataclass
class StabilityScan:
    kind: str
    omega: float
    epsilon: float
    deltas: np.ndarray
    ratios: np.ndarray
    valid: np.ndarray       # (n_delta, n_ratio); False where tau > delta
    stable: np.ndarray
    radius: np.ndarray

    def rows(self) -> List[list]:
        out = []
        for i, d in enumerate(self.deltas):
            for j, r in enumerate(self.ratios):
                if self.valid[i, j]:
                    out.append([float(d), float(r), float(r * self.epsilon), float(self.radius[i, j]), bool(self.stable[i, j])])
        return out


def linear_test_stepper(kind: Union[str, StepperKind], omega: float, schedule: StepSchedule) -> FlavorStepper:
    """Nonintrusive or artificial FLAVOR on the two-mass linear test system."""
    kind = StepperKind(kind)
    ham = linear_hamiltonian(omega)
    if kind is StepperKind.NONINTRUSIVE:
        return flavor_step(symplectic_euler(ham), schedule, ham.epsilon)
    if kind is StepperKind.ARTIFICIAL:
        return artificial_flavor_step(ham, ConstraintSpec.linear_freeze([[-1.0, 1.0]]), schedule)
    raise ValueError(f"stability scans support nonintrusive and artificial, got {kind.value}")


def stability_domain_scan(
    kind: Union[str, StepperKind],
    omega: float,
    deltas: Sequence[float],
    ratios: Sequence[float],
    tol: float = STABILITY_TOL,
) -> StabilityScan:
    """Verdict per (delta, tau/eps) cell at eps = 1/omega^2 (eps = 1 when omega = 0)."""
    deltas = np.asarray(deltas, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    if not (np.all(np.isfinite(deltas)) and np.all(np.isfinite(ratios))):
        raise ValueError("scan grid must be finite")
    eps = linear_hamiltonian(omega).epsilon
    shape = (deltas.size, ratios.size)
    valid = np.zeros(shape, dtype=bool)
    stable = np.zeros(shape, dtype=bool)
    radius = np.full(shape, np.nan)
    for i, d in enumerate(deltas):
        for j, r in enumerate(ratios):
            tau = r * eps
            if not (0 < tau <= d):
                continue
            t = transfer_matrix(linear_test_stepper(kind, omega, StepSchedule(tau=tau, delta=d)))
            v = stability_verdict(t, tol)
            valid[i, j], stable[i, j], radius[i, j] = True, v.stable, v.spectral_radius
    return StabilityScan(StepperKind(kind).value, omega, eps, deltas, ratios, valid, stable, radius)


# Accuracy

@dataclass
class ErrorReport:
    slow_error_sup: float
    f_error: float
    energy_drift_slope: float
    runtime_step_counts: Dict[str, int] = field(default_factory=dict)


def _piecewise_integral(times: np.ndarray, values: np.ndarray, at: np.ndarray) -> np.ndarray:
    """Integral from times[0] to each point of the piecewise-constant path
    holding values[i] on [times[i], times[i+1])."""
    dt = np.diff(times)
    cum = np.vstack([np.zeros((1, values.shape[1])), np.cumsum(values[:-1] * dt[:, None], axis=0)])
    idx = np.clip(np.searchsorted(times, at, side="right") - 1, 0, times.size - 1)
    return cum[idx] + values[idx] * (at - times[idx])[:, None]


def _window_means(traj: Trajectory, phi: SlowObservable, edges: np.ndarray, window_h: float) -> np.ndarray:
    counts = np.searchsorted(traj.times, edges[1:], side="left") - np.searchsorted(traj.times, edges[:-1], side="left")
    if np.any(counts < MIN_WINDOW_SAMPLES):
        raise WindowTooSmall(
            f"window {window_h:g} holds {int(counts.min())} samples, need {MIN_WINDOW_SAMPLES}"
        )
    integral = _piecewise_integral(traj.times, phi.series(traj.states), edges)
    return np.diff(integral, axis=0) / window_h


def f_error(traj_a: Trajectory, traj_b: Trajectory, phi: SlowObservable, window_h: float) -> float:
    """sup over aligned windows [j h, (j+1) h) of the distance between
    window averages of phi along the two trajectories."""
    if not window_h > 0:
        raise ValueError(f"window_h must be > 0, got {window_h}")
    t0 = max(traj_a.times[0], traj_b.times[0])
    horizon = min(traj_a.horizon, traj_b.horizon)
    n_windows = int(np.floor((horizon - t0) / window_h + STEP_COUNT_SLACK))
    if n_windows < 1:
        raise WindowTooSmall(f"window {window_h:g} longer than the common horizon {horizon - t0:g}")
    edges = t0 + window_h * np.arange(n_windows + 1)
    diff = _window_means(traj_a, phi, edges, window_h) - _window_means(traj_b, phi, edges, window_h)
    return float(np.max(np.linalg.norm(diff, axis=1)))


def _same_horizon(a: Trajectory, b: Trajectory) -> bool:
    return abs(a.horizon - b.horizon) <= 1e-9 * max(1.0, abs(a.horizon))


def _interp_rows(times: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    return np.column_stack([np.interp(grid, times, values[:, c]) for c in range(values.shape[1])])


def slow_error(traj_flavor: Trajectory, traj_reference: Trajectory, slow_map: SlowObservable) -> float:
    """sup-norm distance of the slow observable on the coarser of the two
    sample grids, each side interpolated piecewise-linearly."""
    if not _same_horizon(traj_flavor, traj_reference):
        raise TimeGridMismatch(
            f"horizons differ: {traj_flavor.horizon:g} vs {traj_reference.horizon:g}"
        )
    a, b = traj_flavor, traj_reference
    if a.times.size < b.times.size:
        grid = a.times
    elif b.times.size < a.times.size:
        grid = b.times
    else:
        grid = np.union1d(a.times, b.times)
    va = _interp_rows(a.times, slow_map.series(a.states), grid)
    vb = _interp_rows(b.times, slow_map.series(b.states), grid)
    return float(np.max(np.linalg.norm(va - vb, axis=1)))


@dataclass
class EnergySeries:
    times: np.ndarray
    values: np.ndarray
    slope: float          # least-squares drift per unit time

    @property
    def amplitude(self) -> float:
        return float(np.max(self.values) - np.min(self.values))


def energy_series(traj: Trajectory, ham: Optional[SeparatedHamiltonian] = None) -> EnergySeries:
    if ham is not None:
        values = np.array([ham.energy_of(u) for u in traj.states])
    elif traj.energies is not None:
        values = np.asarray(traj.energies, dtype=float)
    else:
        raise ValueError("energy_series needs a Hamiltonian trajectory")
    slope = 0.0
    if values.size >= 2 and np.ptp(values) > 0:
        slope = float(linregress(traj.times, values).slope)
    return EnergySeries(times=traj.times, values=values, slope=slope)


def error_report(
    traj: Trajectory,
    reference: Trajectory,
    phi: SlowObservable,
    window_h: float,
    ham: Optional[SeparatedHamiltonian] = None,
) -> ErrorReport:
    slope = 0.0
    if ham is not None or traj.energies is not None:
        slope = energy_series(traj, ham).slope
    return ErrorReport(
        slow_error_sup=slow_error(traj, reference, phi),
        f_error=f_error(traj, reference, phi, window_h),
        energy_drift_slope=slope,
        runtime_step_counts=dict(traj.step_counts),
    )


# FPU stiff springs

@dataclass
class FpuDiagnostics:
    times: np.ndarray
    spring_energies: np.ndarray   # (n_samples, m)
    total: np.ndarray

    def total_cv(self) -> float:
        """Coefficient of variation of the total stiff energy."""
        mean = float(np.mean(self.total))
        return float(np.std(self.total) / mean) if mean else 0.0


def fpu_diagnostics(traj: Trajectory, omega: float, m: int) -> FpuDiagnostics:
    """I_j = 1/2 ((p_2j - p_2j-1)/sqrt 2)^2 + (omega^2/4)(q_2j - q_2j-1)^2."""
    states = np.atleast_2d(traj.states)
    if states.shape[1] != 4 * m:
        raise LayoutMismatch(f"FPU layout with m={m} needs {4 * m} state columns, got {states.shape[1]}")
    q, p = states[:, : 2 * m], states[:, 2 * m:]
    dq = q[:, 1::2] - q[:, 0::2]
    dp = p[:, 1::2] - p[:, 0::2]
    springs = 0.25 * dp**2 + 0.25 * omega**2 * dq**2
    return FpuDiagnostics(times=traj.times, spring_energies=springs, total=springs.sum(axis=1))


# Ensembles

@dataclass
class EnsembleStats:
    times: np.ndarray
    mean: np.ndarray
    mean_se: np.ndarray
    var: np.ndarray
    var_se: np.ndarray
    autocorr: np.ndarray      # E[phi(t) phi(0)], no mean subtraction
    autocorr_se: np.ndarray
    size: int

    def interval95(self, component: int = 0, at: int = -1):
        half = 1.96 * self.mean_se[at, component]
        return self.mean[at, component] - half, self.mean[at, component] + half


def ensemble_stats(trajectories: Sequence[Trajectory], phi: SlowObservable) -> EnsembleStats:
    if len(trajectories) < 2:
        raise ValueError("ensemble_stats needs at least two trajectories")
    grid = trajectories[0].times
    for tr in trajectories[1:]:
        if tr.times.shape != grid.shape or not np.array_equal(tr.times, grid):
            raise GridMismatch("trajectories do not share a sample grid")
    vals = np.stack([phi.series(tr.states) for tr in trajectories])   # (N, n_t, k)
    n = vals.shape[0]
    root_n = np.sqrt(n)

    mean = vals.mean(axis=0)
    mean_se = vals.std(axis=0, ddof=1) / root_n
    sq_dev = (vals - mean) ** 2
    var = sq_dev.sum(axis=0) / (n - 1)
    var_se = sq_dev.std(axis=0, ddof=1) / root_n
    prod = vals * vals[:, :1, :]
    return EnsembleStats(
        times=grid,
        mean=mean,
        mean_se=mean_se,
        var=var,
        var_se=var_se,
        autocorr=prod.mean(axis=0),
        autocorr_se=prod.std(axis=0, ddof=1) / root_n,
        size=n,
    )


# Convergence

@dataclass
class ConvergenceTable:
    parameters: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    r_squared: float

    def rows(self) -> List[list]:
        return [[float(p), float(e)] for p, e in zip(self.parameters, self.errors)]

    def spikes(self, factor: float = 5.0, half_width: int = 2) -> List[int]:
        """Indices whose error exceeds ``factor`` times the median of its neighbours."""
        out = []
        for i, e in enumerate(self.errors):
            lo, hi = max(0, i - half_width), min(self.errors.size, i + half_width + 1)
            neighbours = np.delete(self.errors[lo:hi], i - lo)
            if neighbours.size and e > factor * np.median(neighbours):
                out.append(i)
        return out

    def plateau_ratio(self) -> float:
        return float(np.max(self.errors) / np.min(self.errors))


def convergence_study(
    error_of: Callable[[float], float],
    parameters: Sequence[float],
    fit: bool = True,
) -> ConvergenceTable:
    """Evaluate ``error_of`` per parameter and fit log(error) against log(parameter)."""
    params = np.asarray(parameters, dtype=float)
    errors = np.array([float(error_of(p)) for p in params])
    slope = intercept = r2 = float("nan")
    if fit and params.size >= 2:
        mask = (params > 0) & (errors > 0)
        if mask.sum() >= 2:
            res = linregress(np.log(params[mask]), np.log(errors[mask]))
            slope, intercept, r2 = float(res.slope), float(res.intercept), float(res.rvalue**2)
    return ConvergenceTable(params, errors, slope, intercept, r2)


# Periods

def zero_crossings(times: np.ndarray, signal: np.ndarray, direction: str = "up") -> np.ndarray:
    """Linearly interpolated crossing times of zero (``up``, ``down`` or ``both``)."""
    times = np.asarray(times, dtype=float)
    s = np.asarray(signal, dtype=float)
    a, b = s[:-1], s[1:]
    up = (a < 0) & (b >= 0)
    down = (a > 0) & (b <= 0)
    if direction == "up":
        hit = up
    elif direction == "down":
        hit = down
    elif direction == "both":
        hit = up | down
    else:
        raise ValueError(f"Unknown direction: {direction}")
    i = np.nonzero(hit)[0]
    return times[i] - a[i] * (times[i + 1] - times[i]) / (b[i] - a[i])


def relaxation_period(times: np.ndarray, signal: np.ndarray) -> float:
    """Mean spacing of upward zero crossings."""
    ups = zero_crossings(times, signal, "up")
    if ups.size < 2:
        raise WindowTooSmall(f"need two upward zero crossings, found {ups.size}")
    return float(np.mean(np.diff(ups)))


def exchange_period(
    times: np.ndarray,
    energy: np.ndarray,
    guess: float,
    search: tuple = (0.5, 1.5),
    smooth: Optional[float] = None,
) -> float:
    """Time of the largest smoothed value of ``energy`` in
    [search[0] * guess, search[1] * guess]."""
    times = np.asarray(times, dtype=float)
    e = np.asarray(energy, dtype=float)
    width = guess / 50.0 if smooth is None else smooth
    dt = float(np.median(np.diff(times)))
    k = max(1, int(round(width / dt)))
    smoothed = np.convolve(e, np.ones(k) / k, mode="same")
    lo, hi = search[0] * guess, search[1] * guess
    inside = (times >= lo) & (times <= hi)
    if not np.any(inside):
        raise WindowTooSmall(f"no samples between {lo:g} and {hi:g}")
    idx = np.nonzero(inside)[0]
    return float(times[idx[np.argmax(smoothed[idx])]])


def exact_linear_flow(matrix: np.ndarray, u0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """States exp(A t) u0 for each t; rows align with ``times``."""
    a = np.asarray(matrix, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    return np.vstack([expm(a * t) @ u0 for t in np.asarray(times, dtype=float)])


def exact_linear_trajectory(matrix: np.ndarray, u0: np.ndarray, like: Trajectory) -> Trajectory:
    """Closed-form trajectory on the sample grid of ``like``."""
    return Trajectory(
        times=like.times.copy(),
        states=exact_linear_flow(matrix, u0, like.times),
        steps=like.steps.copy(),
        fast_clock=like.times.copy(),
    )
