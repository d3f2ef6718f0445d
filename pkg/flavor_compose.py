"""FLAVOR steppers: legacy one-step maps composed with the stiff parameter
switched on for a microstep tau and off for the rest of a mesostep delta.

A stepper is an immutable recipe of substeps. ``integrate`` drives it and
owns the per-trajectory state (mesostep index, rng stream).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from config import REGIME_EXPONENT_BY_KIND, STEP_COUNT_SLACK
from core_types import (
    AdjointMissing,
    ConstraintRankDeficient,
    EnsembleRecord,
    ForcedHamiltonian,
    LangevinSystem,
    NoExactFastFlow,
    NoisePlacement,
    NonFiniteState,
    SeparatedHamiltonian,
    StepSchedule,
    Trajectory,
    check_finite,
)
from legacy_integrators import (
    AnyMap,
    OneStepMap,
    StochasticOneStepMap,
    forced_symplectic_euler,
    ou_exact_flow,
    symplectic_euler,
)


class StepperKind(Enum):
    LEGACY = "legacy"
    NONINTRUSIVE = "nonintrusive"
    REVERSIBLE = "reversible"
    ARTIFICIAL = "artificial"
    NATURAL = "natural"
    NONAUTONOMOUS = "nonautonomous"
    SDE = "sde"
    LANGEVIN_SLOW = "langevin_slow"
    LANGEVIN_FAST = "langevin_fast"
    LANGEVIN_REVERSIBLE_SLOW = "langevin_reversible_slow"
    LANGEVIN_REVERSIBLE_FAST = "langevin_reversible_fast"


REVERSIBLE_KINDS = {
    StepperKind.REVERSIBLE,
    StepperKind.LANGEVIN_REVERSIBLE_SLOW,
    StepperKind.LANGEVIN_REVERSIBLE_FAST,
}


@dataclass(frozen=True, eq=False)
class Substep:
    map: AnyMap
    h: float
    alpha: float
    # which clock a nonautonomous map reads
    clock: Literal["slow", "fast"] = "slow"
    # splitting pieces that share time with another substep do not advance the slow clock
    advances: bool = True

    @property
    def noisy(self) -> bool:
        return isinstance(self.map, StochasticOneStepMap)


@dataclass(frozen=True, eq=False)
class FlavorStepper:
    kind: StepperKind
    recipe: Tuple[Substep, ...]
    schedule: StepSchedule
    epsilon: float
    hamiltonian: Optional[SeparatedHamiltonian] = None

    @property
    def stochastic(self) -> bool:
        return any(s.noisy for s in self.recipe)

    @property
    def map_calls_per_step(self) -> int:
        return sum(1 for s in self.recipe if s.h > 0 and not _is_ou(s.map))

    @property
    def stiff_calls_per_step(self) -> int:
        return sum(1 for s in self.recipe if s.h > 0 and s.alpha != 0 and not _is_ou(s.map))

    @property
    def palindromic(self) -> bool:
        n = len(self.recipe)
        for i in range(n // 2):
            a, b = self.recipe[i], self.recipe[n - 1 - i]
            if a.h != b.h or a.alpha != b.alpha:
                return False
            if a.noisy or b.noisy:
                if a.map.name != b.map.name:
                    return False
            elif not a.map.adjoint_available or a.map.adjoint.name != b.map.name:
                return False
        return True

    def regime_ok(self) -> bool:
        return self.schedule.regime_ok(self.epsilon, REGIME_EXPONENT_BY_KIND.get(self.kind.value, 1.0))

    def step(self, u: np.ndarray, k: int = 0, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Advance mesostep k -> k+1."""
        t = k * self.schedule.delta
        fast = k * self.schedule.tau
        for s in self.recipe:
            when = fast if s.clock == "fast" else t
            if s.noisy:
                if rng is None:
                    raise ValueError(f"{self.kind.value} stepper needs an rng stream")
                u = s.map.apply(u, s.h, s.alpha, when, rng)
            else:
                u = s.map.apply(u, s.h, s.alpha, when)
            if s.advances:
                t += s.h
        return u

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.step(u, 0)


def _is_ou(m: AnyMap) -> bool:
    return m.name == "ou_exact_flow"


def _deterministic(legacy: AnyMap, what: str) -> OneStepMap:
    if not isinstance(legacy, OneStepMap):
        raise ValueError(f"{what} needs a deterministic legacy map, got {legacy.name}")
    return legacy


# Deterministic FLAVORs

def legacy_stepper(legacy: AnyMap, h: float, epsilon: float, alpha: Optional[float] = None) -> FlavorStepper:
    """The fine single-scale run: one legacy step of size h at alpha = 1/eps."""
    a = 1.0 / epsilon if alpha is None else alpha
    return FlavorStepper(
        StepperKind.LEGACY,
        (Substep(legacy, h, a),),
        StepSchedule(tau=h, delta=h),
        epsilon,
        legacy.hamiltonian,
    )


def _collapsed(kind: StepperKind, legacy: OneStepMap, schedule: StepSchedule, epsilon: float) -> FlavorStepper:
    # tau == delta: one legacy step over delta
    return FlavorStepper(kind, (Substep(legacy, schedule.delta, 1.0 / epsilon),), schedule, epsilon, legacy.hamiltonian)


def flavor_step(legacy: OneStepMap, schedule: StepSchedule, epsilon: float) -> FlavorStepper:
    """Theta_delta = Phi^0_{delta-tau} o Phi^{1/eps}_tau."""
    legacy = _deterministic(legacy, "flavor_step")
    if schedule.tau == schedule.delta:
        return _collapsed(StepperKind.NONINTRUSIVE, legacy, schedule, epsilon)
    recipe = (
        Substep(legacy, schedule.tau, 1.0 / epsilon),
        Substep(legacy, schedule.off_step, 0.0),
    )
    return FlavorStepper(StepperKind.NONINTRUSIVE, recipe, schedule, epsilon, legacy.hamiltonian)


def flavor_reversible_step(legacy: OneStepMap, schedule: StepSchedule, epsilon: float) -> FlavorStepper:
    """Phi*^{1/eps}_{tau/2} o Phi*^0_{(delta-tau)/2} o Phi^0_{(delta-tau)/2} o Phi^{1/eps}_{tau/2}."""
    legacy = _deterministic(legacy, "flavor_reversible_step")
    recipe = _reversible_recipe(legacy, schedule, epsilon)
    if schedule.tau == schedule.delta:
        return _collapsed(StepperKind.REVERSIBLE, legacy, schedule, epsilon)
    return FlavorStepper(StepperKind.REVERSIBLE, recipe, schedule, epsilon, legacy.hamiltonian)


def _reversible_recipe(legacy: OneStepMap, schedule: StepSchedule, epsilon: float) -> Tuple[Substep, ...]:
    if not legacy.adjoint_available:
        raise AdjointMissing(f"{legacy.name} has no adjoint; reversible FLAVOR needs one")
    adj = legacy.adjoint
    half_on, half_off = 0.5 * schedule.tau, 0.5 * schedule.off_step
    return (
        Substep(legacy, half_on, 1.0 / epsilon),
        Substep(legacy, half_off, 0.0),
        Substep(adj, half_off, 0.0),
        Substep(adj, half_on, 1.0 / epsilon),
    )


def natural_flavor_step(
    stiff_map: OneStepMap,
    soft_map: OneStepMap,
    schedule: StepSchedule,
    epsilon: float,
) -> FlavorStepper:
    """theta^G_{delta-tau} o theta^eps_tau from two user maps: one integrating
    the full system, one integrating the soft-only system."""
    stiff_map = _deterministic(stiff_map, "natural_flavor_step")
    soft_map = _deterministic(soft_map, "natural_flavor_step")
    if schedule.tau == schedule.delta:
        return _collapsed(StepperKind.NATURAL, stiff_map, schedule, epsilon)
    recipe = (
        Substep(stiff_map, schedule.tau, 1.0 / epsilon),
        Substep(soft_map, schedule.off_step, 0.0),
    )
    return FlavorStepper(StepperKind.NATURAL, recipe, schedule, epsilon, stiff_map.hamiltonian)


def flavor_nonautonomous_step(sys: ForcedHamiltonian, schedule: StepSchedule) -> FlavorStepper:
    """The fast forcing is read on the fast clock (k * tau) and omitted in
    the off phase."""
    legacy = forced_symplectic_euler(sys)
    if schedule.tau == schedule.delta:
        return _collapsed(StepperKind.NONAUTONOMOUS, legacy, schedule, sys.epsilon)
    recipe = (
        Substep(legacy, schedule.tau, 1.0 / sys.epsilon, clock="fast"),
        Substep(legacy, schedule.off_step, 0.0),
    )
    return FlavorStepper(StepperKind.NONAUTONOMOUS, recipe, schedule, sys.epsilon, sys.hamiltonian)


def macro_schedule(h: float, m: int, tau: float) -> StepSchedule:
    """Mesostep schedule of the macro flow (Phi^0_{h/M-tau} o Phi^{1/eps}_tau)^M."""
    if m < 1:
        raise ValueError(f"M must be >= 1, got {m}")
    return StepSchedule(tau=tau, delta=h / m)


def macro_step(stepper: FlavorStepper, u: np.ndarray, m: int, k0: int = 0, rng=None) -> np.ndarray:
    for k in range(k0, k0 + m):
        u = stepper.step(u, k, rng)
    return u


# Artificial FLAVOR

FlightFn = Callable[[np.ndarray, np.ndarray, float], Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    """Directions frozen during the off phase.

    ``linear_freeze``: rows of ``matrix`` are frozen directions A q.
    ``custom``: ``project(q, p) -> (p_free, stored)``,
    ``drift(q, p_free, h) -> (q', p_free')`` and
    ``lift(q', p_free', stored) -> p'``. Symplecticity of a custom free
    flight is up to the callbacks.
    """
    kind: Literal["linear_freeze", "custom"]
    matrix: Optional[np.ndarray] = None
    mass_weighted: bool = True
    project: Optional[Callable] = None
    drift: Optional[Callable] = None
    lift: Optional[Callable] = None

    @classmethod
    def linear_freeze(cls, matrix, mass_weighted: bool = True) -> "ConstraintSpec":
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        if a.size and np.linalg.matrix_rank(a) < a.shape[0]:
            raise ConstraintRankDeficient(f"constraint rows are linearly dependent (rank {np.linalg.matrix_rank(a)} < {a.shape[0]})")
        return cls("linear_freeze", matrix=a, mass_weighted=mass_weighted)

    @classmethod
    def free(cls, n_dof: int) -> "ConstraintSpec":
        return cls("linear_freeze", matrix=np.zeros((0, n_dof)))

    @classmethod
    def custom(cls, project, drift, lift) -> "ConstraintSpec":
        return cls("custom", project=project, drift=drift, lift=lift)

    def flight(self, ham: SeparatedHamiltonian) -> FlightFn:
        """Constrained free flight over h for this Hamiltonian's mass."""
        if self.kind == "custom":
            def custom_flight(q, p, h):
                p_free, stored = self.project(q, p)
                q1, p_free1 = self.drift(q, p_free, h)
                return q1, self.lift(q1, p_free1, stored)
            return custom_flight

        a = self.matrix
        if a.shape[1] != ham.n_dof:
            raise ConstraintRankDeficient(f"constraint matrix has {a.shape[1]} columns, expected {ham.n_dof}")
        if a.shape[0] == 0:
            return lambda q, p, h: (q + h * ham.velocity(p), p)

        m_inv = ham.inverse_mass
        if self.mass_weighted:
            gram = a @ m_inv @ a.T
            try:
                factor = cho_factor(gram)
            except np.linalg.LinAlgError as e:
                raise ConstraintRankDeficient(f"constraint Gram matrix is singular: {e}") from e
            # momentum removed along frozen directions: A^T G^-1 A M^-1 p
            removal = a.T @ cho_solve(factor, a @ m_inv)

            def flight(q, p, h):
                p_proj = p - removal @ p
                return q + h * ham.velocity(p_proj), p
        else:
            factor = cho_factor(a @ a.T)
            v_removal = a.T @ cho_solve(factor, a)

            def flight(q, p, h):
                v = ham.velocity(p)
                return q + h * (v - v_removal @ v), p
        return flight


def artificial_flavor_step(
    ham: SeparatedHamiltonian,
    constraints: ConstraintSpec,
    schedule: StepSchedule,
    fast_substep: Literal["exact", "symplectic_euler"] = "symplectic_euler",
    legacy: Optional[OneStepMap] = None,
) -> FlavorStepper:
    """theta^tr_{delta-tau} o theta^eps_tau o theta^V_delta:
    soft kick over delta, stiff-only substep over tau, then free flight
    over delta - tau with the constrained momentum stored and restored.

    With tau == delta the stepper is ``legacy`` (symplectic Euler by
    default) over delta.
    """
    if fast_substep == "exact" and ham.fast_flow is None:
        raise NoExactFastFlow("artificial FLAVOR with an exact fast substep needs a registered fast flow")
    if fast_substep not in ("exact", "symplectic_euler"):
        raise ValueError(f"Unknown fast_substep: {fast_substep}")

    def soft_kick(u, h, alpha, t):
        q, p = ham.split(u)
        return ham.join(q, p - h * ham.soft_gradient(q))

    if fast_substep == "exact":
        def fast(u, h, alpha, t):
            q, p = ham.split(u)
            return ham.join(*ham.fast_flow(q, p, h))
    else:
        def fast(u, h, alpha, t):
            q, p = ham.split(u)
            p1 = p - h * alpha * ham.stiff_gradient(q)
            return ham.join(q + h * ham.velocity(p1), p1)

    flight_fn = constraints.flight(ham)
    if schedule.tau == schedule.delta:
        legacy = _deterministic(legacy or symplectic_euler(ham), "artificial_flavor_step")
        return _collapsed(StepperKind.ARTIFICIAL, legacy, schedule, ham.epsilon)

    def flight(u, h, alpha, t):
        q, p = ham.split(u)
        return ham.join(*flight_fn(q, p, h))

    recipe = (
        Substep(OneStepMap("soft_kick", soft_kick, hamiltonian=ham), schedule.delta, 0.0, advances=False),
        Substep(OneStepMap(f"fast[{fast_substep}]", fast, hamiltonian=ham), schedule.tau, 1.0 / ham.epsilon),
        Substep(OneStepMap("constrained_flight", flight, hamiltonian=ham), schedule.off_step, 0.0),
    )
    return FlavorStepper(StepperKind.ARTIFICIAL, recipe, schedule, ham.epsilon, ham)


# Stochastic FLAVORs

def flavor_sde_step(legacy: StochasticOneStepMap, schedule: StepSchedule, epsilon: float) -> FlavorStepper:
    """Noise block omega_k feeds the tau substep, omega'_k the off substep,
    drawn in that order from the trajectory's stream."""
    if not isinstance(legacy, StochasticOneStepMap):
        raise ValueError("flavor_sde_step needs a stochastic legacy map")
    recipe = (
        Substep(legacy, schedule.tau, 1.0 / epsilon),
        Substep(legacy, schedule.off_step, 0.0),
    )
    return FlavorStepper(StepperKind.SDE, recipe, schedule, epsilon, legacy.hamiltonian)


def _ou_for(ls: LangevinSystem) -> StochasticOneStepMap:
    return ou_exact_flow(ls.friction, ls.temperature)


def flavor_langevin_step(ls: LangevinSystem, legacy: OneStepMap, schedule: StepSchedule) -> FlavorStepper:
    """SLOW: OU(tau), stiff(tau), OU(delta-tau), soft(delta-tau).
    FAST: OU at rate 1/eps over tau, stiff(tau), soft(delta-tau)."""
    legacy = _deterministic(legacy, "flavor_langevin_step")
    eps = ls.epsilon
    ou = _ou_for(ls)
    if ls.noise_placement is NoisePlacement.SLOW:
        recipe = (
            Substep(ou, schedule.tau, 1.0, advances=False),
            Substep(legacy, schedule.tau, 1.0 / eps),
            Substep(ou, schedule.off_step, 1.0, advances=False),
            Substep(legacy, schedule.off_step, 0.0),
        )
        kind = StepperKind.LANGEVIN_SLOW
    else:
        recipe = (
            Substep(ou, schedule.tau, 1.0 / eps, advances=False),
            Substep(legacy, schedule.tau, 1.0 / eps),
            Substep(legacy, schedule.off_step, 0.0),
        )
        kind = StepperKind.LANGEVIN_FAST
    return FlavorStepper(kind, recipe, schedule, eps, ls.hamiltonian)


def flavor_langevin_reversible_step(ls: LangevinSystem, legacy: OneStepMap, schedule: StepSchedule) -> FlavorStepper:
    """Strang split: OU half at each end around the reversible Hamiltonian
    composition (delta/2 at rate 1 for SLOW, tau/2 at rate 1/eps for FAST)."""
    inner = _reversible_recipe(_deterministic(legacy, "flavor_langevin_reversible_step"), schedule, ls.epsilon)
    ou = _ou_for(ls)
    if ls.noise_placement is NoisePlacement.SLOW:
        edge = Substep(ou, 0.5 * schedule.delta, 1.0, advances=False)
        kind = StepperKind.LANGEVIN_REVERSIBLE_SLOW
    else:
        edge = Substep(ou, 0.5 * schedule.tau, 1.0 / ls.epsilon, advances=False)
        kind = StepperKind.LANGEVIN_REVERSIBLE_FAST
    return FlavorStepper(kind, (edge,) + inner + (edge,), schedule, ls.epsilon, ls.hamiltonian)


# Trajectory driver

@dataclass(frozen=True)
class SamplingPolicy:
    """Record every ``stride``-th mesostep boundary (plus the first and last)."""
    stride: int = 1

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


def trajectory_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Stream for trajectory ``index`` of an ensemble seeded by ``seed``.
    Independent of the ensemble size."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def mesostep_count(t_end: float, delta: float) -> int:
    return int(np.floor(t_end / delta + STEP_COUNT_SLACK))


def integrate(
    stepper: FlavorStepper,
    u0,
    t_end: float,
    sampler: SamplingPolicy = SamplingPolicy(),
    seed: Optional[int] = None,
    stream: int = 0,
) -> Trajectory:
    """Run floor(t_end/delta) mesosteps. A non-finite state stops the run and
    returns the partial trajectory with ``failure`` set."""
    if not t_end > 0:
        raise ValueError(f"t_end must be > 0, got {t_end}")
    if stepper.stochastic and seed is None:
        raise ValueError("stochastic steppers need a seed")
    rng = trajectory_rng(seed, stream) if seed is not None else None
    delta, tau = stepper.schedule.delta, stepper.schedule.tau
    n_steps = mesostep_count(t_end, delta)

    u = check_finite(np.array(u0, dtype=float), "initial state")
    states: List[np.ndarray] = [u]
    steps: List[int] = [0]
    failure: Optional[NonFiniteState] = None
    done = 0
    for k in range(n_steps):
        try:
            u = stepper.step(u, k, rng)
        except NonFiniteState as e:
            failure = e.at_step(k + 1)
            break
        done = k + 1
        if done % sampler.stride == 0 or done == n_steps:
            states.append(u)
            steps.append(done)

    step_idx = np.asarray(steps)
    arr = np.vstack(states)
    energies = None
    if stepper.hamiltonian is not None:
        energies = np.array([stepper.hamiltonian.energy_of(s) for s in arr])
    return Trajectory(
        times=step_idx * delta,
        states=arr,
        steps=step_idx,
        fast_clock=step_idx * tau,
        energies=energies,
        seed=seed,
        step_counts={
            "mesosteps": done,
            "map_calls": done * stepper.map_calls_per_step,
            "stiff_calls": done * stepper.stiff_calls_per_step,
        },
        failure=str(failure) if failure else None,
        failure_step=failure.step if failure else None,
    )


def run_ensemble(
    stepper: FlavorStepper,
    u0,
    t_end: float,
    n: int,
    base_seed: int,
    sampler: SamplingPolicy = SamplingPolicy(),
    workers: int = 1,
    initial_states: Optional[Sequence[np.ndarray]] = None,
) -> EnsembleRecord:
    """N trajectories; trajectory i uses stream i of ``base_seed``.
    Results do not depend on ``workers``."""
    if n < 1:
        raise ValueError(f"ensemble size must be >= 1, got {n}")

    def one(i: int) -> Trajectory:
        start = u0 if initial_states is None else initial_states[i]
        return integrate(stepper, start, t_end, sampler, seed=base_seed, stream=i)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(one, range(n)))
    else:
        trajectories = [one(i) for i in range(n)]
    return EnsembleRecord(trajectories=trajectories, base_seed=base_seed, seeds=list(range(n)))
