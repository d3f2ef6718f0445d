"""Bundled benchmark systems with their reference parameters, initial
states, slow observables and reference recipes.

Naming: every state is (q, p); initial momenta sometimes quoted as "y(0)"
are stored as p here.
"""
from __future__ import annotations

import difflib
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh

from core_types import (
    ConfigError,
    ForcedHamiltonian,
    InvalidSystem,
    LangevinSystem,
    NoisePlacement,
    ParametricSystem,
    SdeSplitSystem,
    SeparatedHamiltonian,
    SlowObservable,
    StepSchedule,
    StiffSplitSystem,
    UnknownBenchmark,
    zero_gradient,
    zero_potential,
)
from flavor_compose import (
    ConstraintSpec,
    FlavorStepper,
    StepperKind,
    artificial_flavor_step,
    flavor_langevin_reversible_step,
    flavor_langevin_step,
    flavor_nonautonomous_step,
    flavor_reversible_step,
    flavor_sde_step,
    flavor_step,
    legacy_stepper,
)
from legacy_integrators import (
    AnyMap,
    euler_maruyama,
    forced_symplectic_euler,
    forward_euler,
    gla_step,
    symplectic_euler,
    velocity_verlet,
)

SQRT2 = np.sqrt(2.0)

HAMILTONIAN_KINDS = ("legacy", "nonintrusive", "reversible", "artificial")


@dataclass(frozen=True, eq=False)
class Benchmark:
    name: str
    system: Any
    default_schedule: StepSchedule
    initial_state: np.ndarray
    horizon: float
    slow_observables: Tuple[SlowObservable, ...]
    # "fine": a fine run of ``legacy`` at ``reference_h``; "closed_form": exp(linear_matrix t)
    reference_recipe: str
    legacy: str
    citation: str
    reference_h: Optional[float] = None
    default_kind: str = "nonintrusive"
    kinds: Tuple[str, ...] = ("legacy", "nonintrusive", "reversible")
    fast_observables: Tuple[SlowObservable, ...] = ()
    constraints: Optional[ConstraintSpec] = None
    linear_matrix: Optional[np.ndarray] = None
    ensemble: int = 1
    task: str = "trajectory"
    parameters: Dict[str, Any] = field(default_factory=dict)
    extras: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        u0 = np.asarray(self.initial_state, dtype=float)
        object.__setattr__(self, "initial_state", u0)
        dim = system_dim(self.system)
        if u0.shape != (dim,):
            raise InvalidSystem(f"{self.name}: initial state has shape {u0.shape}, system dim is {dim}")
        if not self.horizon > 0:
            raise InvalidSystem(f"{self.name}: horizon must be > 0")
        if self.reference_recipe not in ("fine", "closed_form"):
            raise InvalidSystem(f"{self.name}: unknown reference recipe {self.reference_recipe}")
        if self.default_kind not in self.kinds:
            raise InvalidSystem(f"{self.name}: default kind {self.default_kind} is not supported")

    @property
    def epsilon(self) -> float:
        return float(self.system.epsilon)

    @property
    def hamiltonian(self) -> Optional[SeparatedHamiltonian]:
        return hamiltonian_of(self.system)

    @property
    def stochastic(self) -> bool:
        return isinstance(self.system, (LangevinSystem, SdeSplitSystem)) or (
            isinstance(self.system, ParametricSystem) and self.system.diffusion is not None
        )

    def observable(self, name: Optional[str] = None) -> SlowObservable:
        pool = self.slow_observables + self.fast_observables
        if name is None:
            return self.slow_observables[0]
        for ob in pool:
            if ob.name == name:
                return ob
        raise ConfigError(f"{self.name} has no observable {name!r} (available: {', '.join(o.name for o in pool)})")


def system_dim(system: Any) -> int:
    if isinstance(system, (StiffSplitSystem, ParametricSystem, SdeSplitSystem)):
        return system.dim
    ham = hamiltonian_of(system)
    if ham is None:
        raise InvalidSystem(f"unsupported system type {type(system).__name__}")
    return ham.dim


def hamiltonian_of(system: Any) -> Optional[SeparatedHamiltonian]:
    if isinstance(system, SeparatedHamiltonian):
        return system
    if isinstance(system, (ForcedHamiltonian, LangevinSystem)):
        return system.hamiltonian
    return None


def _component(name: str, index: int) -> SlowObservable:
    return SlowObservable(name, lambda u: u[index])


def _hamiltonian_generator(ham: SeparatedHamiltonian, hessian: np.ndarray) -> np.ndarray:
    """u' = A u for a quadratic Hamiltonian with the given potential Hessian."""
    n = ham.n_dof
    a = np.zeros((2 * n, 2 * n))
    a[:n, n:] = ham.inverse_mass
    a[n:, :n] = -hessian
    return a


def pair_rotation_flow(pairs: Sequence[Tuple[int, int]], frequency: float):
    """Exact flow of unit-mass pairs joined by a spring: the centre drifts
    and the relative coordinate q_b - q_a rotates at ``frequency``."""
    idx = np.asarray(pairs, dtype=int)
    ia, ib = idx[:, 0], idx[:, 1]

    def flow(q, p, h):
        q, p = q.copy(), p.copy()
        vc = 0.5 * (p[ia] + p[ib])
        c = 0.5 * (q[ia] + q[ib]) + h * vc
        r, vr = q[ib] - q[ia], p[ib] - p[ia]
        if frequency > 0:
            cs, sn = np.cos(frequency * h), np.sin(frequency * h)
            r, vr = r * cs + vr * sn / frequency, -r * frequency * sn + vr * cs
        else:
            r = r + h * vr
        q[ia], q[ib] = c - 0.5 * r, c + 0.5 * r
        p[ia], p[ib] = vc - 0.5 * vr, vc + 0.5 * vr
        return q, p

    return flow


# Linear test problem

def linear_hamiltonian(omega: float) -> SeparatedHamiltonian:
    """H = 1/2 |p|^2 + 1/2 x^2 + (omega^2/2)(y - x)^2 with q = (x, y),
    eps = 1/omega^2 (eps = 1 and no coupling when omega = 0)."""
    if omega < 0:
        raise ValueError(f"omega must be >= 0, got {omega}")
    eps = 1.0 / omega**2 if omega > 0 else 1.0
    kappa = omega**2 * eps   # 1, or 0 for the uncoupled case

    def soft(q):
        return 0.5 * float(q[0] ** 2)

    def soft_grad(q):
        return np.array([q[0], 0.0])

    def stiff(q):
        return 0.5 * kappa * float((q[1] - q[0]) ** 2)

    def stiff_grad(q):
        d = kappa * (q[1] - q[0])
        return np.array([-d, d])

    return SeparatedHamiltonian(
        2, 1.0, soft, soft_grad, stiff, stiff_grad, eps,
        fast_flow=pair_rotation_flow([(0, 1)], np.sqrt(2.0 * kappa / eps)),
    )


def linear_stability_problem(omega: float = 1000.0, x0: float = 0.8, horizon: float = 10.0) -> Benchmark:
    ham = linear_hamiltonian(omega)
    eps = ham.epsilon
    kappa = omega**2 * eps
    hessian = np.array([[1.0 + kappa / eps, -kappa / eps], [-kappa / eps, kappa / eps]])
    y0 = x0 + 1.1 / omega if omega > 0 else x0
    return Benchmark(
        name="linear",
        system=ham,
        default_schedule=StepSchedule(tau=2e-5, delta=0.01) if omega > 0 else StepSchedule(tau=0.01, delta=0.01),
        initial_state=[x0, y0, 0.0, 0.0],
        horizon=horizon,
        slow_observables=(SlowObservable("mean_xy", lambda u: 0.5 * (u[0] + u[1]), 1.0),),
        fast_observables=(SlowObservable("y_minus_x", lambda u: u[1] - u[0]),),
        reference_recipe="closed_form",
        legacy="symplectic_euler",
        citation="two masses, soft harmonic anchor plus a stiff coupling spring; stability and error analysis",
        kinds=HAMILTONIAN_KINDS,
        constraints=ConstraintSpec.linear_freeze([[-1.0, 1.0]]),
        linear_matrix=_hamiltonian_generator(ham, hessian),
        parameters={"omega": omega, "epsilon": eps, "x0": x0, "y0": y0},
    )


def linear_stability_scan_problem(omega: float = 1000.0) -> Benchmark:
    bench = linear_stability_problem(omega)
    return replace(
        bench,
        name="linear-stability-scan",
        task="stability_scan",
        citation="stability domain of nonintrusive and artificial FLAVOR over delta and tau/eps",
        parameters={**bench.parameters, "kinds": "nonintrusive, artificial"},
    )


# Triple chain

def triple_chain_problem(eps: float = 1e-6, omega1: float = 1.1, omega2: float = 0.97) -> Benchmark:
    """H = 1/2|p|^2 + x^4 + eps^-1 (omega1/2)(y-x)^2 + eps^-1 (omega2/2)(z-y)^2."""
    def soft(q):
        return float(q[0] ** 4)

    def soft_grad(q):
        return np.array([4.0 * q[0] ** 3, 0.0, 0.0])

    def stiff(q):
        return 0.5 * omega1 * float((q[1] - q[0]) ** 2) + 0.5 * omega2 * float((q[2] - q[1]) ** 2)

    def stiff_grad(q):
        a, b = omega1 * (q[1] - q[0]), omega2 * (q[2] - q[1])
        return np.array([-a, a - b, b])

    ham = SeparatedHamiltonian(3, 1.0, soft, soft_grad, stiff, stiff_grad, eps)
    return Benchmark(
        name="triple-chain",
        system=ham,
        default_schedule=StepSchedule(tau=5e-4, delta=0.01),
        initial_state=[0.8, 0.811, 0.721, 0.0, 0.0, 0.0],
        horizon=50.0,
        slow_observables=(SlowObservable("mean_xyz", lambda u: (u[0] + u[1] + u[2]) / 3.0, 1.0),),
        fast_observables=(
            SlowObservable("y_minus_x", lambda u: u[1] - u[0]),
            SlowObservable("z_minus_y", lambda u: u[2] - u[1]),
            SlowObservable("q", lambda u: u[:3]),
        ),
        reference_recipe="fine",
        reference_h=5e-4,
        legacy="symplectic_euler",
        citation="quartic anchor with two stiff springs; first-order error in 1/M, linear growth in T, plateau in omega",
        default_kind="artificial",
        kinds=HAMILTONIAN_KINDS,
        constraints=ConstraintSpec.linear_freeze([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0]]),
        parameters={"epsilon": eps, "omega1": omega1, "omega2": omega2},
    )


# Nonlinear stiff and soft potentials

def nonlinear_stiff_soft_problem(eps: float = 1e-6) -> Benchmark:
    """H = 1/2|p|^2 + eps^-1 y^6 + (x - y)^4 with q = (x, y)."""
    def soft(q):
        return float((q[0] - q[1]) ** 4)

    def soft_grad(q):
        d3 = 4.0 * (q[0] - q[1]) ** 3
        return np.array([d3, -d3])

    def stiff(q):
        return float(q[1] ** 6)

    def stiff_grad(q):
        return np.array([0.0, 6.0 * q[1] ** 5])

    ham = SeparatedHamiltonian(2, 1.0, soft, soft_grad, stiff, stiff_grad, eps)
    return Benchmark(
        name="nonlinear",
        system=ham,
        default_schedule=StepSchedule(tau=1e-5, delta=1e-3),
        initial_state=[2.2, 1.1, 0.0, 0.0],
        horizon=2.0,
        slow_observables=(_component("x", 0),),
        fast_observables=(_component("y", 1),),
        reference_recipe="fine",
        reference_h=1e-5,
        legacy="symplectic_euler",
        citation="sextic stiff potential coupled to a quartic soft spring",
        kinds=HAMILTONIAN_KINDS,
        constraints=ConstraintSpec.linear_freeze([[0.0, 1.0]]),
        parameters={"epsilon": eps},
    )


# Fermi-Pasta-Ulam chain

def _padded(q: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], q, [0.0]))


def fpu_hamiltonian(m: int, omega: float, soft_power: int = 4) -> SeparatedHamiltonian:
    """2m unit masses: soft springs d_i = z_{2i+1} - z_{2i} (walls at both ends,
    potential d^soft_power) alternate with stiff springs s_j = q_2j - q_2j-1
    with U = 1/4 sum s^2 and eps = 1/omega^2."""
    if m < 1:
        raise InvalidSystem(f"m must be >= 1, got {m}")
    n = 2 * m
    k = soft_power

    def soft(q):
        z = _padded(q)
        return float(np.sum((z[1::2] - z[0::2]) ** k))

    def soft_grad(q):
        z = _padded(q)
        f = k * (z[1::2] - z[0::2]) ** (k - 1)
        g = np.zeros(n + 2)
        g[1::2] += f
        g[0::2] -= f
        return g[1:-1]

    def stiff(q):
        return 0.25 * float(np.sum((q[1::2] - q[0::2]) ** 2))

    def stiff_grad(q):
        s = 0.5 * (q[1::2] - q[0::2])
        g = np.zeros(n)
        g[1::2] = s
        g[0::2] = -s
        return g

    return SeparatedHamiltonian(
        n, 1.0, soft, soft_grad, stiff, stiff_grad, 1.0 / omega**2,
        fast_flow=pair_rotation_flow([(2 * j, 2 * j + 1) for j in range(m)], omega),
        symmetry=tuple(n - 1 - i for i in range(n)),
    )


def _fpu_observables(m: int) -> Tuple[SlowObservable, ...]:
    return (
        SlowObservable("x1", lambda u: (u[0] + u[1]) / SQRT2, 1.0 / SQRT2),
        SlowObservable("centres", lambda u: (u[0: 2 * m: 2] + u[1: 2 * m: 2]) / SQRT2),
    )


def _stiff_freeze(m: int) -> ConstraintSpec:
    a = np.zeros((m, 2 * m))
    for j in range(m):
        a[j, 2 * j], a[j, 2 * j + 1] = -1.0, 1.0
    return ConstraintSpec.linear_freeze(a)


def fpu_problem(
    m: int = 3,
    omega: float = 1000.0,
    q0: Optional[Sequence[float]] = None,
    horizon: Optional[float] = None,
    schedule: Optional[StepSchedule] = None,
    reference_h: float = 5e-5,
    name: str = "fpu-short",
) -> Benchmark:
    if q0 is None:
        q0 = [0.4642, -0.4202, 0.0344, 0.1371, 0.0626, 0.0810] if m == 3 else [0.0] * (2 * m)
    q0 = np.asarray(q0, dtype=float)
    ham = fpu_hamiltonian(m, omega)
    return Benchmark(
        name=name,
        system=ham,
        default_schedule=schedule or StepSchedule(tau=1e-4, delta=0.002),
        initial_state=np.concatenate((q0, np.zeros(2 * m))),
        horizon=horizon if horizon is not None else 2.0 * omega,
        slow_observables=_fpu_observables(m),
        reference_recipe="fine",
        reference_h=reference_h,
        legacy="velocity_verlet",
        citation="Fermi-Pasta-Ulam chain: stiff harmonic springs alternating with soft quartic springs",
        default_kind="artificial",
        kinds=HAMILTONIAN_KINDS,
        constraints=_stiff_freeze(m),
        parameters={"m": m, "omega": omega, "epsilon": ham.epsilon},
        extras={"m": m, "omega": omega},
    )


def fpu_long_problem(omega: float = 200.0) -> Benchmark:
    return fpu_problem(
        3,
        omega,
        q0=[1.0, 0.0, 0.0, 1.0 / omega, 0.0, 0.0],
        horizon=omega**2 / 4.0,
        schedule=StepSchedule(tau=5e-4, delta=0.002),
        reference_h=1e-5,
        name="fpu-long",
    )


def _fpu_hessian(m: int, omega: float) -> np.ndarray:
    """Potential Hessian of the chain with quadratic soft springs."""
    n = 2 * m
    soft = np.zeros((m + 1, n))
    for i in range(m + 1):
        if 2 * i < n:
            soft[i, 2 * i] += 1.0
        if 2 * i - 1 >= 0:
            soft[i, 2 * i - 1] -= 1.0
    stiff = np.zeros((m, n))
    for j in range(m):
        stiff[j, 2 * j], stiff[j, 2 * j + 1] = -1.0, 1.0
    return 2.0 * soft.T @ soft + 0.5 * omega**2 * stiff.T @ stiff


def harmonic_fpu_beat_period(m: int, omega: float) -> float:
    """Stiff-energy exchange period 2 pi / Delta, Delta the mean spacing of
    the m stiff normal-mode frequencies of the quadratic-soft chain."""
    if m < 2:
        raise ValueError("energy exchange needs at least two stiff springs")
    nu = np.sqrt(np.clip(eigh(_fpu_hessian(m, omega), eigvals_only=True), 0.0, None))
    top = np.sort(nu)[-m:]
    spacing = (top[-1] - top[0]) / (m - 1)
    return float(2.0 * np.pi / spacing)


def harmonic_fpu_problem(m: int = 3, omega: float = 50.0, periods: float = 1.5) -> Benchmark:
    """Quadratic soft springs; only the first stiff spring is excited."""
    ham = fpu_hamiltonian(m, omega, soft_power=2)
    beat = harmonic_fpu_beat_period(m, omega)
    q0 = np.zeros(2 * m)
    q0[0], q0[1] = -1.0 / omega, 1.0 / omega
    return Benchmark(
        name="fpu-harmonic",
        system=ham,
        default_schedule=StepSchedule(tau=0.002, delta=0.01),
        initial_state=np.concatenate((q0, np.zeros(2 * m))),
        horizon=periods * beat,
        slow_observables=_fpu_observables(m),
        reference_recipe="closed_form",
        legacy="velocity_verlet",
        citation="FPU chain with quadratic soft springs, analytically solvable by normal modes",
        default_kind="artificial",
        kinds=HAMILTONIAN_KINDS,
        constraints=_stiff_freeze(m),
        linear_matrix=_hamiltonian_generator(ham, _fpu_hessian(m, omega)),
        parameters={"m": m, "omega": omega, "beat_period": beat},
        extras={"m": m, "omega": omega, "beat_period": beat},
    )


# Van der Pol with hidden slow variable

def van_der_pol_hidden(eps: float = 1e-3, form: str = "polar") -> Benchmark:
    """Relaxation oscillator x' = -eps y, y' = (1/eps)(x + y - y^3/3).

    ``polar`` integrates (r, theta) with x = r sin theta, y = r cos theta,
    where neither coordinate is slow. The origin is a stationary point.
    """
    def cartesian_soft(u):
        return np.array([-eps * u[1], 0.0])

    def cartesian_stiff(u):
        x, y = u
        return np.array([0.0, x + y - y**3 / 3.0])

    def polar_soft(u):
        r, th = u
        c, s = np.cos(th), np.sin(th)
        return np.array([-eps * r * c * s, -eps * c * c])

    def polar_stiff(u):
        r, th = u
        c, s = np.cos(th), np.sin(th)
        return np.array([(r * c + r * s - r**3 * c**3 / 3.0) * c, -(c + s - r**2 * c**3 / 3.0) * s])

    def to_cartesian(u):
        return np.array([u[0] * np.sin(u[1]), u[0] * np.cos(u[1])])

    cartesian = StiffSplitSystem(2, cartesian_soft, cartesian_stiff, eps)
    if form == "polar":
        system = StiffSplitSystem(2, polar_soft, polar_stiff, eps)
        u0 = [SQRT2, np.pi / 4.0]
        slow = (
            SlowObservable("x", lambda u: u[0] * np.sin(u[1])),
            SlowObservable("y", lambda u: u[0] * np.cos(u[1])),
        )
    elif form == "cartesian":
        system = cartesian
        u0 = [1.0, 1.0]
        slow = (_component("x", 0), _component("y", 1))
    else:
        raise ValueError(f"Unknown form: {form}")
    return Benchmark(
        name="van-der-pol",
        system=system,
        default_schedule=StepSchedule(tau=5e-5, delta=0.01),
        initial_state=u0,
        horizon=5.0 / eps,
        slow_observables=slow,
        reference_recipe="fine",
        reference_h=5e-5,
        legacy="forward_euler",
        citation="Van der Pol relaxation oscillator integrated in polar coordinates without identifying slow variables",
        kinds=("legacy", "nonintrusive"),
        parameters={"epsilon": eps, "form": form},
        extras={"cartesian": cartesian, "to_cartesian": to_cartesian, "period_signal": "y"},
    )


# Primitive molecular dynamics

def _polar_freeze() -> ConstraintSpec:
    """Radius frozen, angle free. Radial momentum is stored on projection and
    restored along the new radial direction. The drift is the exact flow of
    p_theta^2 / (2 r^2) at fixed r, centrifugal kick on p_r included."""
    def project(q, p):
        e_r = q / np.linalg.norm(q)
        pr = float(p @ e_r)
        return p - pr * e_r, pr

    def drift(q, p_free, h):
        r = float(np.linalg.norm(q))
        th = np.arctan2(q[1], q[0])
        ang = q[0] * p_free[1] - q[1] * p_free[0]
        th1 = th + h * ang / r**2
        e_th = np.array([-np.sin(th1), np.cos(th1)])
        e_r1 = np.array([np.cos(th1), np.sin(th1)])
        return r * e_r1, (ang / r) * e_th + (h * ang**2 / r**3) * e_r1

    def lift(q1, p_free1, stored):
        return p_free1 + stored * q1 / np.linalg.norm(q1)

    return ConstraintSpec.custom(project, drift, lift)


def primitive_md_problem(omega: float = 500.0, r0: float = 1.0, x0: float = 1.1, y0: float = 0.8) -> Benchmark:
    """Mass on a stiff spring to a fixed hinge at the origin:
    H = 1/2|p|^2 + 1/2 omega^2 (r - r0)^2 + x^2 / r^2."""
    if x0 == 0 and y0 == 0:
        raise InvalidSystem("the hinge (x = y = 0) is a singularity of the potential")

    def soft(q):
        return float(q[0] ** 2 / (q @ q))

    def soft_grad(q):
        x, y = q
        r4 = float(q @ q) ** 2
        return np.array([2.0 * x * y * y / r4, -2.0 * x * x * y / r4])

    def stiff(q):
        return 0.5 * (float(np.linalg.norm(q)) - r0) ** 2

    def stiff_grad(q):
        r = float(np.linalg.norm(q))
        return (r - r0) * q / r

    ham = SeparatedHamiltonian(2, 1.0, soft, soft_grad, stiff, stiff_grad, 1.0 / omega**2)
    return Benchmark(
        name="primitive-md",
        system=ham,
        default_schedule=StepSchedule(tau=2e-4, delta=0.01),
        initial_state=[x0, y0, 0.0, 0.0],
        horizon=100.0,
        slow_observables=(SlowObservable("angle", lambda u: np.arctan2(u[1], u[0])),),
        fast_observables=(SlowObservable("radius", lambda u: np.hypot(u[0], u[1])),),
        reference_recipe="fine",
        reference_h=2e-4,
        legacy="symplectic_euler",
        citation="mass linked through a stiff spring to a fixed hinge with a soft angular potential",
        kinds=HAMILTONIAN_KINDS,
        constraints=_polar_freeze(),
        parameters={"omega": omega, "r0": r0},
    )


# Propane

def _cos_angle(q: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray, float, float]:
    a, b = q[0:2] - q[2:4], q[4:6] - q[2:4]
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    return float(a @ b) / (na * nb), a, b, na, nb


def propane_problem(
    k_r: float = 8370.0,
    k_theta: float = 4.31,
    r0: float = 1.53,
    theta0_deg: float = 109.5,
    horizon: float = 20.0,
) -> Benchmark:
    """United-atom three-bead chain in the plane. eps = 1/K_r,
    U = 1/2 sum (r_i - r0)^2, V = 1/2 K_theta (cos theta - cos theta0)^2."""
    cos0 = float(np.cos(np.deg2rad(theta0_deg)))

    def soft(q):
        c = _cos_angle(q)[0]
        return 0.5 * k_theta * (c - cos0) ** 2

    def soft_grad(q):
        c, a, b, na, nb = _cos_angle(q)
        da = b / (na * nb) - c * a / na**2
        db = a / (na * nb) - c * b / nb**2
        return k_theta * (c - cos0) * np.concatenate((da, -(da + db), db))

    def stiff(q):
        r1 = np.linalg.norm(q[2:4] - q[0:2])
        r2 = np.linalg.norm(q[4:6] - q[2:4])
        return 0.5 * float((r1 - r0) ** 2 + (r2 - r0) ** 2)

    def stiff_grad(q):
        g = np.zeros(6)
        for i, j in ((0, 2), (2, 4)):
            d = q[j: j + 2] - q[i: i + 2]
            r = float(np.linalg.norm(d))
            f = (r - r0) * d / r
            g[j: j + 2] += f
            g[i: i + 2] -= f
        return g

    masses = np.array([15.0, 15.0, 14.0, 14.0, 15.0, 15.0])
    ham = SeparatedHamiltonian(6, masses, soft, soft_grad, stiff, stiff_grad, 1.0 / k_r)
    q0 = [0.0, 0.0, 1.533, 0.0, 2.6136, 1.0826]
    p0 = [-0.4326, -1.6656, 0.1253, 0.2877, -1.1465, 1.1909]
    return Benchmark(
        name="propane",
        system=ham,
        default_schedule=StepSchedule(tau=0.01, delta=0.1),
        initial_state=q0 + p0,
        horizon=horizon,
        slow_observables=(SlowObservable("cos_angle", lambda u: _cos_angle(u[:6])[0]),),
        fast_observables=(
            SlowObservable("bond1", lambda u: np.linalg.norm(u[2:4] - u[0:2])),
            SlowObservable("bond2", lambda u: np.linalg.norm(u[4:6] - u[2:4])),
        ),
        reference_recipe="fine",
        reference_h=0.01,
        legacy="symplectic_euler",
        citation="united-atom propane with exaggerated bond and angle constants",
        parameters={"K_r": k_r, "K_theta": k_theta, "r0": r0, "theta0_deg": theta0_deg},
    )


# Kapitza pendulum

def kapitza_problem(
    omega: float = 1000.0,
    g: float = 9.8,
    length: float = 9.0,
    theta0: float = 0.2,
    amplitude: float = 1.0,
    horizon: float = 10.0,
) -> Benchmark:
    """l theta'' = [g + amplitude omega^2 sin(2 pi omega t)] sin theta,
    theta measured from the upright position. amplitude=0 is the bare
    inverted pendulum."""
    def soft(q):
        return g * float(np.cos(q[0]))

    def soft_grad(q):
        return np.array([-g * np.sin(q[0])])

    ham = SeparatedHamiltonian(1, length, soft, soft_grad, zero_potential, zero_gradient, 1.0 / omega**2)

    def forcing(q, t):
        return amplitude * np.sin(2.0 * np.pi * omega * t) * np.sin(q)

    tau = 0.2 / (omega * np.sqrt(length))
    return Benchmark(
        name="kapitza",
        system=ForcedHamiltonian(ham, forcing),
        default_schedule=StepSchedule(tau=tau, delta=0.002),
        initial_state=[theta0, 0.0],
        horizon=horizon,
        slow_observables=(_component("theta", 0),),
        reference_recipe="fine",
        reference_h=tau,
        legacy="forced_symplectic_euler",
        citation="inverted pendulum stabilized by fast vertical forcing of the hinge",
        default_kind="nonautonomous",
        kinds=("legacy", "nonautonomous"),
        parameters={"omega": omega, "g": g, "l": length, "amplitude": amplitude},
    )


# SDE with hidden slow variable

def _hidden_xy(u: np.ndarray, c: float) -> Tuple[float, float]:
    s = 0.5 * (u[0] + u[1])
    return s**3 + c, 0.5 * (u[1] - u[0])


def hidden_sde_separated(eps: float = 1e-4) -> ParametricSystem:
    """dx = (-1/2 y^2 + 5 sin 2 pi t) dt, dy = alpha (x - y) dt + sqrt(2 alpha) dW."""
    def drift(u, alpha, eps_, t):
        x, y = u
        return np.array([-0.5 * y * y + 5.0 * np.sin(2.0 * np.pi * t), alpha * (x - y)])

    def diffusion(u, alpha, eps_, t):
        return np.array([[0.0, 0.0], [np.sqrt(2.0 * alpha), 0.0]])

    return ParametricSystem(2, drift, eps, diffusion, time_dependent=True)


def hidden_sde_problem(eps: float = 1e-4, c: float = 10.0, paths: int = 100) -> Benchmark:
    """The separated system seen through u = (x - c)^(1/3) - y,
    v = (x - c)^(1/3) + y. Both components share one Brownian increment."""
    def drift(u, alpha, eps_, t):
        x, y = _hidden_xy(u, c)
        s = 0.5 * (u[0] + u[1])
        a = (-0.5 * y * y + 5.0 * np.sin(2.0 * np.pi * t)) / (3.0 * s * s)
        b = alpha * (x - y)
        return np.array([a - b, a + b])

    def diffusion(u, alpha, eps_, t):
        g = np.sqrt(2.0 * alpha)
        return np.array([[-g, 0.0], [g, 0.0]])

    x0, y0 = 1.0 + eps, 1.0
    s0 = float(np.cbrt(x0 - c))
    return Benchmark(
        name="hidden-sde",
        system=ParametricSystem(2, drift, eps, diffusion, time_dependent=True),
        default_schedule=StepSchedule(tau=1e-5, delta=0.01),
        initial_state=[s0 - y0, s0 + y0],
        horizon=2.0,
        slow_observables=(SlowObservable("x", lambda u: _hidden_xy(u, c)[0]),),
        fast_observables=(SlowObservable("y", lambda u: _hidden_xy(u, c)[1]),),
        reference_recipe="fine",
        reference_h=1e-4,
        legacy="euler_maruyama",
        citation="nonautonomous SDE whose slow variable is hidden by a nonlinear change of coordinates",
        default_kind="sde",
        kinds=("legacy", "sde"),
        ensemble=paths,
        parameters={"epsilon": eps, "c": c, "x0": x0, "y0": y0},
        extras={"separated": hidden_sde_separated(eps), "separated_initial": np.array([x0, y0])},
    )


# Langevin

def langevin_slow_problem(eps: float = 1e-8, c: float = 0.1, sigma: float = 0.5) -> Benchmark:
    """Quartic chain q = (x, y): U = y^4/4, V = (y - x)^4, friction c and
    noise sigma dW on both momenta."""
    def soft(q):
        return float((q[1] - q[0]) ** 4)

    def soft_grad(q):
        d3 = 4.0 * (q[1] - q[0]) ** 3
        return np.array([-d3, d3])

    def stiff(q):
        return 0.25 * float(q[1] ** 4)

    def stiff_grad(q):
        return np.array([0.0, q[1] ** 3])

    ham = SeparatedHamiltonian(2, 1.0, soft, soft_grad, stiff, stiff_grad, eps)
    ls = LangevinSystem.from_noise_amplitude(ham, c, sigma, NoisePlacement.SLOW)
    y0 = 2.1 * np.sqrt(eps)
    return Benchmark(
        name="langevin-slow",
        system=ls,
        default_schedule=StepSchedule(tau=1e-3, delta=0.01),
        initial_state=[y0 + 1.8, y0, 0.0, 0.0],
        horizon=30.0,
        slow_observables=_langevin_observables(),
        reference_recipe="fine",
        reference_h=1e-3,
        legacy="gla",
        citation="stiff quartic chain with slow friction and noise; compared against GLA",
        default_kind="langevin_slow",
        kinds=("legacy", "langevin_slow", "langevin_reversible_slow"),
        ensemble=100,
        parameters={"epsilon": eps, "c": c, "sigma": sigma, "temperature": ls.temperature},
    )


def langevin_fast_problem(omega: float = 100.0, c: float = 0.1, sigma: float = 1.0) -> Benchmark:
    """H = 1/2|p|^2 + 1/4 omega^4 y^4 + e^y (x - y)^2 with friction omega^2 c
    and noise omega sigma on p_y only."""
    def soft(q):
        return float(np.exp(q[1]) * (q[0] - q[1]) ** 2)

    def soft_grad(q):
        d = q[0] - q[1]
        ey = np.exp(q[1])
        return np.array([2.0 * ey * d, ey * d * d - 2.0 * ey * d])

    def stiff(q):
        return 0.25 * omega**2 * float(q[1] ** 4)

    def stiff_grad(q):
        return np.array([0.0, omega**2 * q[1] ** 3])

    ham = SeparatedHamiltonian(2, 1.0, soft, soft_grad, stiff, stiff_grad, 1.0 / omega**2)
    ls = LangevinSystem.from_noise_amplitude(ham, [0.0, c], sigma, NoisePlacement.FAST)
    y0 = 1.1 / omega
    return Benchmark(
        name="langevin-fast",
        system=ls,
        default_schedule=StepSchedule(tau=1e-4, delta=0.01),
        initial_state=[y0 + 1.8, y0, 0.0, 0.0],
        horizon=10.0,
        slow_observables=_langevin_observables(),
        reference_recipe="fine",
        reference_h=1e-4,
        legacy="gla",
        citation="stiff chain with fast friction and noise on the stiff mass only; compared against GLA",
        default_kind="langevin_fast",
        kinds=("legacy", "langevin_fast", "langevin_reversible_fast"),
        ensemble=50,
        parameters={"omega": omega, "c": c, "sigma": sigma, "temperature": ls.temperature},
    )


def _langevin_observables() -> Tuple[SlowObservable, ...]:
    return (
        SlowObservable("x_minus_y", lambda u: u[0] - u[1]),
        _component("y", 1),
        SlowObservable("x_minus_y_sq", lambda u: (u[0] - u[1]) ** 2),
    )


# Registry

REGISTRY: Dict[str, Callable[..., Benchmark]] = {
    "linear": linear_stability_problem,
    "linear-stability-scan": linear_stability_scan_problem,
    "triple-chain": triple_chain_problem,
    "nonlinear": nonlinear_stiff_soft_problem,
    "fpu-short": fpu_problem,
    "fpu-long": fpu_long_problem,
    "fpu-harmonic": harmonic_fpu_problem,
    "van-der-pol": van_der_pol_hidden,
    "primitive-md": primitive_md_problem,
    "propane": propane_problem,
    "kapitza": kapitza_problem,
    "hidden-sde": hidden_sde_problem,
    "langevin-slow": langevin_slow_problem,
    "langevin-fast": langevin_fast_problem,
}


def get_benchmark(name: str, **overrides: Any) -> Benchmark:
    factory = REGISTRY.get(name)
    if factory is None:
        raise UnknownBenchmark(name, difflib.get_close_matches(name, list(REGISTRY), n=3, cutoff=0.5))
    try:
        return factory(**overrides)
    except TypeError as e:
        raise ConfigError(f"{name} does not accept {sorted(overrides)}: {e}") from e


# Steppers

def legacy_map(bench: Benchmark) -> AnyMap:
    """The single-scale integrator of the full system."""
    name, system = bench.legacy, bench.system
    if name == "symplectic_euler":
        return symplectic_euler(bench.hamiltonian)
    if name == "velocity_verlet":
        return velocity_verlet(bench.hamiltonian)
    if name == "forward_euler":
        return forward_euler(system)
    if name == "forced_symplectic_euler":
        return forced_symplectic_euler(system)
    if name == "euler_maruyama":
        return euler_maruyama(system)
    if name == "gla":
        return gla_step(system)
    raise ValueError(f"Unknown legacy integrator: {name}")


def stepper_for(
    bench: Benchmark,
    kind: Optional[str] = None,
    schedule: Optional[StepSchedule] = None,
    fast_substep: str = "symplectic_euler",
) -> FlavorStepper:
    kind = StepperKind(kind or bench.default_kind)
    schedule = schedule or bench.default_schedule
    if kind.value not in bench.kinds:
        raise InvalidSystem(
            f"{bench.name} does not support the {kind.value} stepper (supported: {', '.join(bench.kinds)})"
        )
    eps = bench.epsilon

    if kind is StepperKind.LEGACY:
        return legacy_stepper(legacy_map(bench), schedule.delta, eps)
    if kind is StepperKind.NONINTRUSIVE:
        return flavor_step(legacy_map(bench), schedule, eps)
    if kind is StepperKind.REVERSIBLE:
        return flavor_reversible_step(legacy_map(bench), schedule, eps)
    if kind is StepperKind.ARTIFICIAL:
        if bench.constraints is None:
            raise InvalidSystem(f"{bench.name} declares no frozen directions")
        return artificial_flavor_step(bench.hamiltonian, bench.constraints, schedule, fast_substep, legacy_map(bench))
    if kind is StepperKind.NONAUTONOMOUS:
        return flavor_nonautonomous_step(bench.system, schedule)
    if kind is StepperKind.SDE:
        return flavor_sde_step(legacy_map(bench), schedule, eps)

    ls = bench.system
    se = symplectic_euler(ls.hamiltonian)
    if kind in (StepperKind.LANGEVIN_SLOW, StepperKind.LANGEVIN_FAST):
        return flavor_langevin_step(ls, se, schedule)
    if kind in (StepperKind.LANGEVIN_REVERSIBLE_SLOW, StepperKind.LANGEVIN_REVERSIBLE_FAST):
        return flavor_langevin_reversible_step(ls, se, schedule)
    raise InvalidSystem(f"no benchmark builder for the {kind.value} stepper")


def reference_stepper(bench: Benchmark, h: Optional[float] = None) -> FlavorStepper:
    """Fine legacy run used as ground truth."""
    h = h if h is not None else bench.reference_h
    if h is None:
        raise ValueError(f"{bench.name} has a closed-form reference; pass h for a fine legacy run")
    return legacy_stepper(legacy_map(bench), h, bench.epsilon)
