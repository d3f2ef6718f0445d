"""Single-scale one-step maps with a switchable stiffness parameter alpha.

Every map obeys ``apply(u, 0, alpha, t) is u`` (the zero step is the
identity). Step sizes are passed per call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, eigh, expm

from core_types import (
    AdjointMissing,
    DecompositionFailure,
    ForcedHamiltonian,
    LangevinSystem,
    NoExactFastFlow,
    NoisePlacement,
    ParametricSystem,
    SdeSplitSystem,
    SeparatedHamiltonian,
    StiffSplitSystem,
    check_finite,
)

Advance = Callable[[np.ndarray, float, float, float], np.ndarray]
StochasticAdvance = Callable[[np.ndarray, float, float, float, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class OneStepMap:
    name: str
    advance: Advance
    adjoint_factory: Optional[Callable[[], "OneStepMap"]] = None
    hamiltonian: Optional[SeparatedHamiltonian] = None
    deterministic = True

    @property
    def adjoint_available(self) -> bool:
        return self.adjoint_factory is not None

    @property
    def adjoint(self) -> "OneStepMap":
        if self.adjoint_factory is None:
            raise AdjointMissing(f"{self.name} has no registered adjoint")
        return self.adjoint_factory()

    def apply(self, u: np.ndarray, h: float, alpha: float, t: float = 0.0) -> np.ndarray:
        if h == 0:
            return u
        return check_finite(self.advance(u, h, alpha, t), self.name)


@dataclass(frozen=True, eq=False)
class StochasticOneStepMap:
    """``advance`` receives a block of ``noise_dim`` standard Gaussians.

    The block is drawn even for a zero step, so the position of a stream
    depends only on how many substeps were taken.
    """
    name: str
    advance: StochasticAdvance
    noise_dim: int
    hamiltonian: Optional[SeparatedHamiltonian] = None
    deterministic = False

    def apply(
        self,
        u: np.ndarray,
        h: float,
        alpha: float,
        t: float,
        rng: np.random.Generator,
    ) -> np.ndarray:
        xi = rng.standard_normal(self.noise_dim)
        if h == 0:
            return u
        return check_finite(self.advance(u, h, alpha, t, xi), self.name)


AnyMap = Union[OneStepMap, StochasticOneStepMap]


# ODE maps

def forward_euler(sys: Union[StiffSplitSystem, ParametricSystem]) -> OneStepMap:
    if isinstance(sys, ParametricSystem):
        def advance(u, h, alpha, t):
            return u + h * sys.evaluate(u, alpha, t)
    elif isinstance(sys, StiffSplitSystem):
        def advance(u, h, alpha, t):
            return u + h * sys.drift(u, alpha)
    else:
        raise ValueError(f"forward_euler does not accept {type(sys).__name__}")
    return OneStepMap("forward_euler", advance)


# Hamiltonian maps

def symplectic_euler(ham: SeparatedHamiltonian) -> OneStepMap:
    """Momentum first: p' = p - h(grad V + alpha grad U)(q), q' = q + h M^-1 p'."""
    def advance(u, h, alpha, t):
        q, p = ham.split(u)
        p1 = p + h * ham.total_force(q, alpha)
        q1 = q + h * ham.velocity(p1)
        return ham.join(q1, p1)

    return OneStepMap("symplectic_euler", advance, lambda: symplectic_euler_adjoint(ham), ham)


def symplectic_euler_adjoint(ham: SeparatedHamiltonian) -> OneStepMap:
    """Position first: q' = q + h M^-1 p, p' = p - h(grad V + alpha grad U)(q')."""
    def advance(u, h, alpha, t):
        q, p = ham.split(u)
        q1 = q + h * ham.velocity(p)
        p1 = p + h * ham.total_force(q1, alpha)
        return ham.join(q1, p1)

    return OneStepMap("symplectic_euler_adjoint", advance, lambda: symplectic_euler(ham), ham)


def velocity_verlet(ham: SeparatedHamiltonian) -> OneStepMap:
    def advance(u, h, alpha, t):
        q, p = ham.split(u)
        p_half = p + 0.5 * h * ham.total_force(q, alpha)
        q1 = q + h * ham.velocity(p_half)
        p1 = p_half + 0.5 * h * ham.total_force(q1, alpha)
        return ham.join(q1, p1)

    return OneStepMap("velocity_verlet", advance, lambda: velocity_verlet(ham), ham)


def forced_symplectic_euler(sys: ForcedHamiltonian) -> OneStepMap:
    """Symplectic Euler with a fast time-dependent force (discrete d'Alembert):
    p' = p + h[-(grad V + alpha grad U)(q) + alpha f(q, t)], q' = q + h M^-1 p'."""
    ham = sys.hamiltonian

    def advance(u, h, alpha, t):
        q, p = ham.split(u)
        p1 = p + h * (ham.total_force(q, alpha) + alpha * sys.forcing(q, t))
        q1 = q + h * ham.velocity(p1)
        return ham.join(q1, p1)

    return OneStepMap("forced_symplectic_euler", advance, None, ham)


def free_flight(ham: SeparatedHamiltonian):
    """Exact flow of the kinetic term alone, usable as a fast flow when U = 0."""
    def flow(q, p, h):
        return q + h * ham.velocity(p), p
    return flow


def impulse_method(
    ham: SeparatedHamiltonian,
    fast_flow: Literal["exact", "numeric"] = "exact",
    fast_substeps: int = 10,
) -> OneStepMap:
    """Kick with the soft force for h/2, evolve the stiff subsystem
    (kinetic + alpha U) for h, kick h/2."""
    if fast_flow == "exact" and ham.fast_flow is None:
        raise NoExactFastFlow("impulse_method(exact) needs a registered fast flow")
    if fast_flow not in ("exact", "numeric"):
        raise ValueError(f"Unknown fast_flow: {fast_flow}")
    if fast_substeps < 1:
        raise ValueError("fast_substeps must be >= 1")

    def stiff_flow(q, p, h, alpha):
        if fast_flow == "exact":
            if alpha == 0:
                return q + h * ham.velocity(p), p
            if not np.isclose(alpha * ham.epsilon, 1.0):
                raise ValueError("the registered fast flow is only valid at alpha = 1/eps")
            return ham.fast_flow(q, p, h)
        dt = h / fast_substeps
        for _ in range(fast_substeps):
            p = p - 0.5 * dt * alpha * ham.stiff_gradient(q)
            q = q + dt * ham.velocity(p)
            p = p - 0.5 * dt * alpha * ham.stiff_gradient(q)
        return q, p

    def advance(u, h, alpha, t):
        q, p = ham.split(u)
        p = p - 0.5 * h * ham.soft_gradient(q)
        q, p = stiff_flow(q, p, h, alpha)
        p = p - 0.5 * h * ham.soft_gradient(q)
        return ham.join(q, p)

    # kick-oscillate-kick is symmetric when the fast flow is exact or self-adjoint
    return OneStepMap(f"impulse_method[{fast_flow}]", advance, lambda: impulse_method(ham, fast_flow, fast_substeps), ham)


# Stochastic maps

def euler_maruyama(sys: Union[SdeSplitSystem, ParametricSystem]) -> StochasticOneStepMap:
    """u' = u + h (G + alpha F)(u) + sqrt(h) (H(u) + sqrt(alpha) K(u)) xi."""
    if isinstance(sys, SdeSplitSystem):
        def drift(u, alpha, t):
            return sys.soft_drift(u) + alpha * sys.stiff_drift(u)

        def diffusion(u, alpha, t):
            return sys.soft_diffusion(u) + np.sqrt(alpha) * sys.stiff_diffusion(u)
    elif isinstance(sys, ParametricSystem):
        def drift(u, alpha, t):
            return sys.evaluate(u, alpha, t)

        def diffusion(u, alpha, t):
            return sys.evaluate_diffusion(u, alpha, t)
    else:
        raise ValueError(f"euler_maruyama does not accept {type(sys).__name__}")

    def advance(u, h, alpha, t, xi):
        out = u + h * drift(u, alpha, t)
        noise = diffusion(u, alpha, t) @ xi
        if np.any(noise):
            out = out + np.sqrt(h) * noise
        return out

    return StochasticOneStepMap("euler_maruyama", advance, sys.dim)


def ou_exact_flow(friction, stationary_var, n_dof: Optional[int] = None) -> StochasticOneStepMap:
    """Exact flow of dp = -alpha c p dt + noise with stationary covariance
    ``stationary_var`` on the momentum half of a (q, p) state.

    p' = e^{-Gamma h} p + N(0, S (I - e^{-2 Gamma h})), Gamma = alpha c.
    """
    c = np.asarray(friction, dtype=float)
    if c.ndim == 0:
        if n_dof is None:
            raise ValueError("scalar friction needs n_dof")
        c = c * np.eye(n_dof)
    elif c.ndim == 1:
        c = np.diag(c)
    n = c.shape[0]
    if c.shape != (n, n) or not np.allclose(c, c.T):
        raise DecompositionFailure("friction must be a symmetric square matrix")

    s = np.asarray(stationary_var, dtype=float)
    scalar_var = s.ndim == 0
    if not scalar_var and s.shape != (n, n):
        raise ValueError(f"stationary_var must be scalar or {n}x{n}")

    diagonal = np.count_nonzero(c - np.diag(np.diag(c))) == 0
    if diagonal:
        rates, basis = np.diag(c).copy(), None
    else:
        try:
            rates, basis = eigh(c)
        except LinAlgError as e:
            raise DecompositionFailure(f"friction eigendecomposition failed: {e}") from e
    if np.any(rates < -1e-12):
        raise DecompositionFailure("friction must be positive semidefinite")
    rates = np.clip(rates, 0.0, None)
    silent = not np.any(rates)

    root = None
    if not scalar_var:
        # S (I - e^{-2 Gamma h}) is a covariance only when S and c commute;
        # then its square root is S^{1/2} times a diagonal in the friction modes
        if not (np.allclose(s, s.T) and np.allclose(s @ c, c @ s)):
            raise DecompositionFailure("matrix stationary_var must be symmetric and commute with the friction")
        try:
            w, v = eigh(s)
        except LinAlgError as e:
            raise DecompositionFailure(f"stationary_var eigendecomposition failed: {e}") from e
        if np.any(w < -1e-12):
            raise DecompositionFailure("stationary_var must be positive semidefinite")
        root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T

    def to_modes(p):
        return p if basis is None else basis.T @ p

    def from_modes(x):
        return x if basis is None else basis @ x

    def advance(u, h, alpha, t, xi):
        if silent:
            return u
        q, p = u[:n], u[n:]
        decay = np.exp(-alpha * rates * h)
        if scalar_var:
            std = np.sqrt(float(s) * (1.0 - decay**2))
            p1 = from_modes(decay * to_modes(p) + std * xi)
        else:
            kick = from_modes(np.sqrt(1.0 - decay**2) * to_modes(xi))
            p1 = from_modes(decay * to_modes(p)) + root @ kick
        return np.concatenate((q, p1))

    return StochasticOneStepMap("ou_exact_flow", advance, n)


def ou_moments(friction, stationary_var, p0: np.ndarray, h: float, alpha: float = 1.0):
    """Closed-form mean and covariance of one exact OU step from p0."""
    n = p0.size
    c = np.asarray(friction, dtype=float)
    if c.ndim == 0:
        c = c * np.eye(n)
    elif c.ndim == 1:
        c = np.diag(c)
    e1 = expm(-alpha * c * h)
    e2 = expm(-2.0 * alpha * c * h)
    s = np.asarray(stationary_var, dtype=float)
    s = s * np.eye(n) if s.ndim == 0 else s
    return e1 @ p0, s @ (np.eye(n) - e2)


def gla_step(ls: LangevinSystem) -> StochasticOneStepMap:
    """Geometric Langevin Algorithm: exact OU over h, then symplectic Euler
    over h at the given alpha. Under FAST noise placement the OU rate is
    scaled by the same alpha, so alpha = 1/eps gives the full dynamics."""
    ham = ls.hamiltonian
    ou = ou_exact_flow(ls.friction, ls.temperature)
    se = symplectic_euler(ham)

    def advance(u, h, alpha, t, xi):
        ou_alpha = 1.0 if ls.noise_placement is NoisePlacement.SLOW else alpha
        u = ou.advance(u, h, ou_alpha, t, xi)
        return se.advance(u, h, alpha, t)

    return StochasticOneStepMap("gla", advance, ham.n_dof, ham)


def consistency_defect(step: OneStepMap, drift: Callable[[np.ndarray], np.ndarray], u: np.ndarray, h: float, alpha: float) -> float:
    """|apply(u, h) - u - h drift(u)|, the local defect whose h^2 scaling is the
    first-order consistency contract."""
    return float(np.linalg.norm(step.apply(u, h, alpha) - u - h * drift(u)))


def hamiltonian_drift(ham: SeparatedHamiltonian, alpha: float) -> Callable[[np.ndarray], np.ndarray]:
    def drift(u):
        q, p = ham.split(u)
        return ham.join(ham.velocity(p), ham.total_force(q, alpha))
    return drift
