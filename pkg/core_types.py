"""Problem-description data model shared by the integrators, the analysis
helpers and the experiment runner.

States are flat float64 vectors. Hamiltonian states are ``concat(q, p)``
with ``len(q) == len(p) == n_dof``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from config import FD_STEP_DEFAULT, GRADIENT_REL_FLOOR

VectorField = Callable[[np.ndarray], np.ndarray]
ScalarField = Callable[[np.ndarray], float]
MatrixField = Callable[[np.ndarray], np.ndarray]
# exact flow of the fast Hamiltonian 1/2 p^T M^-1 p + U/eps: (q, p, h) -> (q, p)
FastFlow = Callable[[np.ndarray, np.ndarray, float], Tuple[np.ndarray, np.ndarray]]


# Errors

class FlavorError(Exception):
    pass


class ScheduleInfeasible(FlavorError):
    """Raised when (tau, delta) cannot satisfy 0 < tau <= delta."""
    pass


class InvalidSystem(FlavorError):
    pass


class NonFiniteState(FlavorError):
    def __init__(self, map_name: str, step: Optional[int] = None):
        self.map_name = map_name
        self.step = step
        where = f" at mesostep {step}" if step is not None else ""
        super().__init__(f"non-finite state produced by {map_name}{where}")

    def at_step(self, step: int) -> "NonFiniteState":
        return NonFiniteState(self.map_name, step)


class DecompositionFailure(FlavorError):
    pass


class NoExactFastFlow(FlavorError):
    pass


class AdjointMissing(FlavorError):
    pass


class ConstraintRankDeficient(FlavorError):
    pass


class NotLinear(FlavorError):
    pass


class EigenFailure(FlavorError):
    pass


class WindowTooSmall(FlavorError):
    pass


class TimeGridMismatch(FlavorError):
    pass


class GridMismatch(FlavorError):
    pass


class LayoutMismatch(FlavorError):
    pass


class UnknownBenchmark(FlavorError):
    def __init__(self, name: str, suggestions: Sequence[str] = ()):
        self.name = name
        self.suggestions = list(suggestions)
        hint = f" (did you mean: {', '.join(self.suggestions)}?)" if self.suggestions else ""
        super().__init__(f"Unknown benchmark: {name}{hint}")


class ConfigError(FlavorError):
    pass


def check_finite(u: np.ndarray, map_name: str) -> np.ndarray:
    if not np.all(np.isfinite(u)):
        raise NonFiniteState(map_name)
    return u


def zero_potential(q: np.ndarray) -> float:
    return 0.0


def zero_gradient(q: np.ndarray) -> np.ndarray:
    return np.zeros_like(q)


# Systems

@dataclass(frozen=True, eq=False)
class StiffSplitSystem:
    """u' = G(u) + (1/eps) F(u)."""
    dim: int
    soft_drift: VectorField
    stiff_drift: VectorField
    epsilon: float

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidSystem(f"dim must be >= 1, got {self.dim}")
        if not self.epsilon > 0:
            raise InvalidSystem(f"epsilon must be > 0, got {self.epsilon}")

    def drift(self, u: np.ndarray, alpha: float) -> np.ndarray:
        return self.soft_drift(u) + alpha * self.stiff_drift(u)


@dataclass(frozen=True, eq=False)
class ParametricSystem:
    """u' = F(u, alpha, eps), optionally with explicit time and a diffusion
    matrix K(u, alpha, eps). alpha=0 must be a valid evaluation."""
    dim: int
    drift: Callable[..., np.ndarray]
    epsilon: float
    diffusion: Optional[Callable[..., np.ndarray]] = None
    time_dependent: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidSystem(f"dim must be >= 1, got {self.dim}")
        if not self.epsilon > 0:
            raise InvalidSystem(f"epsilon must be > 0, got {self.epsilon}")

    def evaluate(self, u: np.ndarray, alpha: float, t: float = 0.0) -> np.ndarray:
        if self.time_dependent:
            return self.drift(u, alpha, self.epsilon, t)
        return self.drift(u, alpha, self.epsilon)

    def evaluate_diffusion(self, u: np.ndarray, alpha: float, t: float = 0.0) -> np.ndarray:
        if self.diffusion is None:
            return np.zeros((self.dim, self.dim))
        if self.time_dependent:
            mat = self.diffusion(u, alpha, self.epsilon, t)
        else:
            mat = self.diffusion(u, alpha, self.epsilon)
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (self.dim, self.dim):
            raise InvalidSystem(f"diffusion must be {self.dim}x{self.dim}, got {mat.shape}")
        return mat


@dataclass(frozen=True, eq=False)
class SdeSplitSystem:
    """du = (G + F/eps) dt + (H + K/sqrt(eps)) dW."""
    dim: int
    soft_drift: VectorField
    stiff_drift: VectorField
    soft_diffusion: MatrixField
    stiff_diffusion: MatrixField
    epsilon: float

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidSystem(f"dim must be >= 1, got {self.dim}")
        if not self.epsilon > 0:
            raise InvalidSystem(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class SeparatedHamiltonian:
    """H(q, p) = 1/2 p^T M^-1 p + V(q) + U(q)/eps.

    ``mass`` may be a scalar, a diagonal (1-D) or a full SPD matrix. The
    inverse is precomputed: elementwise for diagonal masses, a Cholesky
    factor otherwise.
    """
    n_dof: int
    mass: np.ndarray
    soft_potential: ScalarField
    soft_gradient: VectorField
    stiff_potential: ScalarField
    stiff_gradient: VectorField
    epsilon: float
    fast_flow: Optional[FastFlow] = None
    # coordinate permutation the energy is invariant under (applied to q and p)
    symmetry: Optional[Tuple[int, ...]] = None
    _inv_diag: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _cho: Optional[tuple] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.n_dof < 1:
            raise InvalidSystem(f"n_dof must be >= 1, got {self.n_dof}")
        if not self.epsilon > 0:
            raise InvalidSystem(f"epsilon must be > 0, got {self.epsilon}")
        m = np.asarray(self.mass, dtype=float)
        if m.ndim == 0:
            m = np.full(self.n_dof, float(m))
        if m.ndim == 2 and np.count_nonzero(m - np.diag(np.diag(m))) == 0:
            m = np.diag(m).copy()
        if m.ndim == 1:
            if m.shape != (self.n_dof,) or np.any(m <= 0):
                raise InvalidSystem("diagonal mass must be positive with length n_dof")
            object.__setattr__(self, "_inv_diag", 1.0 / m)
            object.__setattr__(self, "mass", np.diag(m))
        else:
            if m.shape != (self.n_dof, self.n_dof) or not np.allclose(m, m.T):
                raise InvalidSystem("mass must be a symmetric n_dof x n_dof matrix")
            try:
                object.__setattr__(self, "_cho", cho_factor(m))
            except LinAlgError as e:
                raise InvalidSystem(f"mass matrix is not positive definite: {e}") from e
            object.__setattr__(self, "mass", m)
        if self.symmetry is not None and sorted(self.symmetry) != list(range(self.n_dof)):
            raise InvalidSystem("symmetry must be a permutation of range(n_dof)")

    @property
    def dim(self) -> int:
        return 2 * self.n_dof

    @property
    def inverse_mass(self) -> np.ndarray:
        if self._inv_diag is not None:
            return np.diag(self._inv_diag)
        return cho_solve(self._cho, np.eye(self.n_dof))

    def split(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return u[: self.n_dof], u[self.n_dof:]

    def join(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        return np.concatenate((q, p))

    def velocity(self, p: np.ndarray) -> np.ndarray:
        if self._inv_diag is not None:
            return self._inv_diag * p
        return cho_solve(self._cho, p)

    def kinetic(self, p: np.ndarray) -> float:
        return 0.5 * float(p @ self.velocity(p))

    def energy(self, q: np.ndarray, p: np.ndarray) -> float:
        return (
            self.kinetic(p)
            + float(self.soft_potential(q))
            + float(self.stiff_potential(q)) / self.epsilon
        )

    def energy_of(self, u: np.ndarray) -> float:
        q, p = self.split(u)
        return self.energy(q, p)

    def total_force(self, q: np.ndarray, alpha: float) -> np.ndarray:
        return -(self.soft_gradient(q) + alpha * self.stiff_gradient(q))

    def permute(self, u: np.ndarray) -> np.ndarray:
        """Apply the declared coordinate symmetry to a (q, p) state."""
        if self.symmetry is None:
            raise InvalidSystem("no symmetry declared for this Hamiltonian")
        idx = np.asarray(self.symmetry)
        q, p = self.split(u)
        return self.join(q[idx], p[idx])


@dataclass(frozen=True, eq=False)
class ForcedHamiltonian:
    """Separated Hamiltonian plus a fast nonautonomous force.

    The full fast force is ``forcing(q, t) / eps``; legacy maps scale it by
    alpha like the stiff gradient, so alpha=0 switches it off.
    """
    hamiltonian: SeparatedHamiltonian
    forcing: Callable[[np.ndarray, float], np.ndarray]

    @property
    def epsilon(self) -> float:
        return self.hamiltonian.epsilon


class NoisePlacement(Enum):
    SLOW = auto()
    FAST = auto()


@dataclass(frozen=True, eq=False)
class LangevinSystem:
    """dq = M^-1 p dt,
    dp = -grad V dt - (1/eps) grad U dt - a c p dt + sqrt(a) sqrt(2/beta) c^1/2 dW
    with a = 1 (SLOW placement) or a = 1/eps (FAST placement).
    ``beta = inf`` is the zero-noise limit.
    """
    hamiltonian: SeparatedHamiltonian
    friction: np.ndarray
    beta: float
    noise_placement: NoisePlacement = NoisePlacement.SLOW

    def __post_init__(self):
        n = self.hamiltonian.n_dof
        c = np.asarray(self.friction, dtype=float)
        if c.ndim == 0:
            c = float(c) * np.eye(n)
        elif c.ndim == 1:
            c = np.diag(c)
        if c.shape != (n, n) or not np.allclose(c, c.T):
            raise InvalidSystem("friction must be a symmetric n_dof x n_dof matrix")
        if np.linalg.eigvalsh(c).min() < -1e-12:
            raise InvalidSystem("friction must be positive semidefinite")
        if not self.beta > 0:
            raise InvalidSystem(f"beta must be > 0, got {self.beta}")
        object.__setattr__(self, "friction", c)

    @property
    def temperature(self) -> float:
        return 0.0 if np.isinf(self.beta) else 1.0 / self.beta

    @property
    def epsilon(self) -> float:
        return self.hamiltonian.epsilon

    @classmethod
    def from_noise_amplitude(
        cls,
        hamiltonian: SeparatedHamiltonian,
        friction,
        sigma: float,
        noise_placement: NoisePlacement = NoisePlacement.SLOW,
    ) -> "LangevinSystem":
        """Build from dp = ... - c p dt + sigma dW along every damped direction:
        beta^-1 = sigma^2 / (2 c_ref) with c_ref the largest friction eigenvalue."""
        n = hamiltonian.n_dof
        c = np.asarray(friction, dtype=float)
        c_mat = float(c) * np.eye(n) if c.ndim == 0 else (np.diag(c) if c.ndim == 1 else c)
        c_ref = float(np.linalg.eigvalsh(c_mat).max()) if c_mat.size else 0.0
        if sigma == 0:
            return cls(hamiltonian, c_mat, np.inf, noise_placement)
        if c_ref <= 0:
            raise InvalidSystem("noise without friction has no stationary law")
        return cls(hamiltonian, c_mat, 2.0 * c_ref / sigma**2, noise_placement)


# Schedules

@dataclass(frozen=True)
class StepSchedule:
    tau: float
    delta: float
    gamma: Optional[float] = None

    def __post_init__(self):
        if not (self.tau > 0 and self.delta > 0):
            raise ScheduleInfeasible(f"tau and delta must be positive (tau={self.tau}, delta={self.delta})")
        if self.tau > self.delta:
            raise ScheduleInfeasible(f"tau={self.tau} exceeds delta={self.delta}")

    @property
    def off_step(self) -> float:
        return self.delta - self.tau

    @property
    def speedup(self) -> float:
        return self.delta / self.tau

    def regime_ok(self, epsilon: float, stiffness_exponent: float = 1.0) -> bool:
        """(tau/eps^s)^2 < delta < tau/eps^s. A query only; never enforced."""
        ratio = self.tau / epsilon**stiffness_exponent
        return ratio**2 < self.delta < ratio


def make_schedule_rule_of_thumb(epsilon: float, gamma: float, stiffness_exponent: float = 1.0) -> StepSchedule:
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if stiffness_exponent not in (1, 1.0, 0.5):
        raise ValueError(f"stiffness_exponent must be 1 or 0.5, got {stiffness_exponent}")
    scale = epsilon**stiffness_exponent
    if scale >= gamma:
        raise ScheduleInfeasible(
            f"eps^s={scale:g} >= gamma={gamma:g}: stiffness too weak for a multiscale schedule"
        )
    tau = gamma * scale
    return StepSchedule(tau=tau, delta=gamma * tau / scale, gamma=gamma)


# Observables and records

@dataclass(frozen=True, eq=False)
class SlowObservable:
    name: str
    map: Callable[[np.ndarray], np.ndarray]
    lipschitz_hint: Optional[float] = None

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.map(u), dtype=float))

    def series(self, states: np.ndarray) -> np.ndarray:
        """Evaluate on every row; returns (n_samples, k)."""
        return np.vstack([self(u) for u in states])


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    steps: np.ndarray
    fast_clock: np.ndarray
    energies: Optional[np.ndarray] = None
    seed: Optional[int] = None
    step_counts: Dict[str, int] = field(default_factory=dict)
    failure: Optional[str] = None
    failure_step: Optional[int] = None

    @property
    def completed(self) -> bool:
        return self.failure is None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class EnsembleRecord:
    trajectories: List[Trajectory]
    base_seed: int
    seeds: List[int] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.trajectories)


# Gradient self-check

@dataclass
class GradientReport:
    max_rel_err_V: float
    max_rel_err_U: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_err_V, self.max_rel_err_U)


def _fd_gradient(f: ScalarField, q: np.ndarray, step: float) -> np.ndarray:
    g = np.empty_like(q)
    for i in range(q.size):
        e = np.zeros_like(q)
        e[i] = step
        g[i] = (float(f(q + e)) - float(f(q - e))) / (2.0 * step)
    return g


def _rel_err(analytic: np.ndarray, fd: np.ndarray) -> float:
    # componentwise errors measured against the gradient's sup norm
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(fd))), GRADIENT_REL_FLOOR)
    return float(np.max(np.abs(analytic - fd)) / scale)


def check_gradient(h: SeparatedHamiltonian, q: np.ndarray, fd_step: float = FD_STEP_DEFAULT) -> GradientReport:
    if not 0 < fd_step < 1e-2:
        raise ValueError(f"fd_step must lie in (0, 1e-2), got {fd_step}")
    q = np.asarray(q, dtype=float)
    err_v = _rel_err(np.asarray(h.soft_gradient(q), dtype=float), _fd_gradient(h.soft_potential, q, fd_step))
    err_u = _rel_err(np.asarray(h.stiff_gradient(q), dtype=float), _fd_gradient(h.stiff_potential, q, fd_step))
    return GradientReport(max_rel_err_V=err_v, max_rel_err_U=err_u)
