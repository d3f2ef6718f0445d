import numpy as np
import pytest

import legacy_integrators
from core_types import (
    AdjointMissing,
    DecompositionFailure,
    LangevinSystem,
    NoExactFastFlow,
    NonFiniteState,
    SdeSplitSystem,
    SeparatedHamiltonian,
    StiffSplitSystem,
    zero_gradient,
    zero_potential,
)
from legacy_integrators import (
    consistency_defect,
    euler_maruyama,
    forward_euler,
    gla_step,
    hamiltonian_drift,
    impulse_method,
    ou_exact_flow,
    ou_moments,
    symplectic_euler,
    velocity_verlet,
)
from problems import fpu_hamiltonian, nonlinear_stiff_soft_problem


def _canonical(n):
    z = np.zeros((2 * n, 2 * n))
    z[:n, n:] = np.eye(n)
    z[n:, :n] = -np.eye(n)
    return z


def _fd_jacobian(f, u, step=1e-7):
    cols = []
    for i in range(u.size):
        e = np.zeros_like(u)
        e[i] = step
        cols.append((f(u + e) - f(u - e)) / (2 * step))
    return np.column_stack(cols)


def _nonlinear():
    return nonlinear_stiff_soft_problem(eps=1e-2).hamiltonian


@pytest.mark.parametrize("factory", [symplectic_euler, velocity_verlet, impulse_method])
def test_zero_step_is_identity(factory):
    m = factory(fpu_hamiltonian(2, 10.0))
    u = np.linspace(0.1, 0.8, 8)
    assert m.apply(u, 0.0, 100.0) is u


def test_forward_euler_switches_stiff_part_off():
    sys_ = StiffSplitSystem(2, lambda u: np.array([1.0, 0.0]), lambda u: np.array([0.0, 1.0]), 0.1)
    fe = forward_euler(sys_)
    np.testing.assert_allclose(fe.apply(np.zeros(2), 0.5, 0.0), [0.5, 0.0])
    np.testing.assert_allclose(fe.apply(np.zeros(2), 0.5, 10.0), [0.5, 5.0])
    assert not fe.adjoint_available
    with pytest.raises(AdjointMissing):
        fe.adjoint


def test_symplectic_euler_adjoint_inverts_negative_step():
    ham = _nonlinear()
    se = symplectic_euler(ham)
    u = np.array([1.2, 0.4, -0.3, 0.5])
    back = se.adjoint.apply(se.apply(u, -0.01, 1.0 / ham.epsilon), 0.01, 1.0 / ham.epsilon)
    np.testing.assert_allclose(back, u, atol=1e-12)
    assert se.adjoint.adjoint.name == "symplectic_euler"


def test_velocity_verlet_is_self_adjoint():
    ham = _nonlinear()
    vv = velocity_verlet(ham)
    u = np.array([1.2, 0.4, -0.3, 0.5])
    a = 1.0 / ham.epsilon
    np.testing.assert_allclose(vv.apply(vv.apply(u, 0.01, a), -0.01, a), u, atol=1e-12)


@pytest.mark.parametrize("factory", [symplectic_euler, velocity_verlet])
def test_hamiltonian_maps_are_symplectic(factory):
    ham = _nonlinear()
    m = factory(ham)
    u = np.array([1.0, 0.6, 0.2, -0.4])
    j = _fd_jacobian(lambda v: m.apply(v, 0.005, 1.0 / ham.epsilon), u)
    omega = _canonical(2)
    assert np.max(np.abs(j.T @ omega @ j - omega)) < 1e-6


def test_first_order_consistency():
    ham = _nonlinear()
    se = symplectic_euler(ham)
    drift = hamiltonian_drift(ham, 1.0)
    u = np.array([1.0, 0.6, 0.2, -0.4])
    ratio = consistency_defect(se, drift, u, 1e-3, 1.0) / consistency_defect(se, drift, u, 5e-4, 1.0)
    assert 3.5 < ratio < 4.5


def test_non_finite_state_detected():
    ham = SeparatedHamiltonian(1, 1.0, lambda q: 0.0, lambda q: np.array([np.inf]), zero_potential, zero_gradient, 1.0)
    with pytest.raises(NonFiniteState):
        symplectic_euler(ham).apply(np.array([0.0, 0.0]), 0.1, 1.0)


def test_impulse_method_exact_matches_numeric_fast_flow():
    ham = fpu_hamiltonian(2, 20.0)
    u = np.array([0.1, 0.15, -0.05, 0.0, 0.0, 0.2, 0.0, -0.1])
    a = 1.0 / ham.epsilon
    exact = impulse_method(ham, "exact").apply(u, 0.01, a)
    numeric = impulse_method(ham, "numeric", fast_substeps=400).apply(u, 0.01, a)
    np.testing.assert_allclose(exact, numeric, atol=1e-6)


def test_impulse_method_exact_only_at_full_stiffness():
    ham = fpu_hamiltonian(2, 20.0)
    with pytest.raises(ValueError):
        impulse_method(ham, "exact").apply(np.full(8, 0.1), 0.01, 3.0)


def test_impulse_method_needs_fast_flow():
    with pytest.raises(NoExactFastFlow):
        impulse_method(_nonlinear(), "exact")


def test_euler_maruyama_drift_and_noise():
    sys_ = SdeSplitSystem(
        1,
        soft_drift=lambda u: -u,
        stiff_drift=lambda u: -2.0 * u,
        soft_diffusion=lambda u: np.zeros((1, 1)),
        stiff_diffusion=lambda u: np.ones((1, 1)),
        epsilon=0.01,
    )
    em = euler_maruyama(sys_)
    rng = np.random.default_rng(3)
    xi = np.random.default_rng(3).standard_normal(1)
    out = em.apply(np.array([1.0]), 0.01, 4.0, 0.0, rng)
    np.testing.assert_allclose(out, [1.0 - 0.01 * 9.0 + np.sqrt(0.01) * 2.0 * xi[0]])

    rng = np.random.default_rng(3)
    np.testing.assert_allclose(em.apply(np.array([1.0]), 0.01, 0.0, 0.0, rng), [0.99])


def test_stochastic_zero_step_still_draws_noise():
    sys_ = SdeSplitSystem(2, lambda u: u, lambda u: u, lambda u: np.eye(2), lambda u: np.eye(2), 1.0)
    em = euler_maruyama(sys_)
    rng = np.random.default_rng(5)
    u = np.ones(2)
    assert em.apply(u, 0.0, 1.0, 0.0, rng) is u
    expected = np.random.default_rng(5)
    expected.standard_normal(2)
    assert rng.standard_normal() == expected.standard_normal()


def _ou_samples(friction, var, p0, h, n, seed=11):
    ou = ou_exact_flow(friction, var)
    rng = np.random.default_rng(seed)
    u = np.concatenate((np.zeros(p0.size), p0))
    return np.array([ou.apply(u, h, 1.0, 0.0, rng)[p0.size:] for _ in range(n)])


def _check_ou_moments(friction, var, p0, h, n):
    samples = _ou_samples(friction, var, p0, h, n)
    mean, cov = ou_moments(friction, var, p0, h)
    se = samples.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(samples.mean(axis=0) - mean) <= 4 * se)
    emp = np.cov(samples.T)
    # variance of a sample covariance entry is about (S_ii S_jj + S_ij^2)/n
    tol = 4 * np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
    assert np.all(np.abs(emp - cov) <= tol)


def test_ou_exact_flow_moments():
    friction = np.array([[0.5, 0.2], [0.2, 0.3]])
    _check_ou_moments(friction, 1.25, np.array([1.0, -0.5]), 0.7, 20_000)


@pytest.mark.slow
def test_ou_exact_flow_moments_large_ensemble():
    _check_ou_moments(np.diag([0.1, 2.0]), 5.0, np.array([2.0, 1.0]), 1.5, 100_000)


def test_ou_without_friction_is_silent():
    ou = ou_exact_flow(np.zeros(2), 1.0)
    u = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_array_equal(ou.apply(u, 0.5, 1.0, 0.0, np.random.default_rng(0)), u)


def test_ou_partial_friction_leaves_undamped_momentum():
    ou = ou_exact_flow([0.0, 0.1], 5.0)
    u = np.array([0.0, 0.0, 0.3, 0.4])
    out = ou.apply(u, 0.5, 1.0, 0.0, np.random.default_rng(0))
    assert out[2] == 0.3
    assert out[3] != 0.4


def test_ou_rejects_nonsymmetric_friction():
    with pytest.raises(DecompositionFailure):
        ou_exact_flow(np.array([[1.0, 0.5], [0.0, 1.0]]), 1.0)


_COUPLED_FRICTION = np.array([[0.5, 0.2], [0.2, 0.3]])


def test_ou_matrix_variance_moments():
    var = 2.0 * np.eye(2) + 0.5 * _COUPLED_FRICTION
    _check_ou_moments(_COUPLED_FRICTION, var, np.array([1.0, -0.5]), 0.7, 20_000)


def test_ou_rejects_variance_that_does_not_commute_with_friction():
    with pytest.raises(DecompositionFailure):
        ou_exact_flow(np.diag([0.5, 0.3]), np.array([[1.0, 0.4], [0.4, 2.0]]))


def test_ou_matrix_variance_is_factored_once(monkeypatch):
    ou = ou_exact_flow(_COUPLED_FRICTION, 2.0 * np.eye(2) + 0.5 * _COUPLED_FRICTION)

    def boom(*args, **kwargs):
        raise AssertionError("decomposition inside a step")

    monkeypatch.setattr(legacy_integrators, "eigh", boom)
    monkeypatch.setattr(np.linalg, "eigh", boom)
    rng = np.random.default_rng(3)
    u = np.array([0.0, 0.0, 1.0, -0.5])
    for _ in range(5):
        u = ou.apply(u, 0.1, 1.0, 0.0, rng)
    assert np.all(np.isfinite(u))


def test_gla_zero_temperature_damps_momentum():
    ham = SeparatedHamiltonian(1, 1.0, zero_potential, zero_gradient, zero_potential, zero_gradient, 1.0)
    ls = LangevinSystem.from_noise_amplitude(ham, 0.5, 0.0)
    out = gla_step(ls).apply(np.array([0.0, 1.0]), 0.2, 1.0, 0.0, np.random.default_rng(0))
    p1 = np.exp(-0.1)
    np.testing.assert_allclose(out, [0.2 * p1, p1])
