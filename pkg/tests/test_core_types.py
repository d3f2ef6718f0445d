import numpy as np
import pytest

from core_types import (
    InvalidSystem,
    LangevinSystem,
    NonFiniteState,
    NoisePlacement,
    ParametricSystem,
    ScheduleInfeasible,
    SeparatedHamiltonian,
    SlowObservable,
    StepSchedule,
    UnknownBenchmark,
    check_finite,
    check_gradient,
    make_schedule_rule_of_thumb,
    zero_gradient,
    zero_potential,
)
from problems import fpu_hamiltonian, propane_problem


def _oscillator(mass=1.0):
    return SeparatedHamiltonian(
        1, mass, lambda q: 0.5 * float(q @ q), lambda q: q.copy(), zero_potential, zero_gradient, 1.0
    )


def test_schedule_rejects_tau_above_delta():
    with pytest.raises(ScheduleInfeasible):
        StepSchedule(tau=0.02, delta=0.01)
    with pytest.raises(ScheduleInfeasible):
        StepSchedule(tau=0.0, delta=0.01)


def test_schedule_off_step_and_speedup():
    s = StepSchedule(tau=1e-4, delta=0.01)
    assert s.off_step == pytest.approx(0.0099)
    assert s.speedup == pytest.approx(100.0)


def test_regime_query():
    s = StepSchedule(tau=5e-8, delta=0.01)
    # tau/eps = 0.05: 0.0025 < 0.01 < 0.05
    assert s.regime_ok(1e-6)
    assert not StepSchedule(tau=1e-5, delta=0.01).regime_ok(1e-6)


def test_rule_of_thumb_schedule():
    s = make_schedule_rule_of_thumb(1e-6, 0.1)
    assert s.tau == pytest.approx(1e-7)
    assert s.delta == pytest.approx(0.01)
    assert s.gamma == 0.1


def test_rule_of_thumb_artificial_exponent():
    s = make_schedule_rule_of_thumb(1e-6, 0.1, 0.5)
    assert s.tau == pytest.approx(1e-4)
    assert s.delta == pytest.approx(0.01)


def test_rule_of_thumb_errors():
    with pytest.raises(ValueError):
        make_schedule_rule_of_thumb(1e-6, 1.5)
    with pytest.raises(ScheduleInfeasible):
        make_schedule_rule_of_thumb(0.5, 0.1)


def test_mass_variants():
    scalar = _oscillator(2.0)
    np.testing.assert_allclose(scalar.mass, [[2.0]])
    np.testing.assert_allclose(scalar.velocity(np.array([4.0])), [2.0])

    m = np.array([[2.0, 0.5], [0.5, 1.0]])
    ham = SeparatedHamiltonian(2, m, zero_potential, zero_gradient, zero_potential, zero_gradient, 1.0)
    p = np.array([1.0, -2.0])
    np.testing.assert_allclose(ham.velocity(p), np.linalg.solve(m, p))
    assert ham.kinetic(p) == pytest.approx(0.5 * p @ np.linalg.solve(m, p))


def test_mass_must_be_positive_definite():
    with pytest.raises(InvalidSystem):
        SeparatedHamiltonian(2, np.array([[1.0, 2.0], [2.0, 1.0]]), zero_potential, zero_gradient, zero_potential, zero_gradient, 1.0)
    with pytest.raises(InvalidSystem):
        SeparatedHamiltonian(2, [1.0, -1.0], zero_potential, zero_gradient, zero_potential, zero_gradient, 1.0)


def test_epsilon_must_be_positive():
    with pytest.raises(InvalidSystem):
        SeparatedHamiltonian(1, 1.0, zero_potential, zero_gradient, zero_potential, zero_gradient, 0.0)


def test_energy_includes_scaled_stiff_part():
    ham = fpu_hamiltonian(1, 10.0)
    q, p = np.array([0.1, 0.3]), np.array([0.0, 1.0])
    # soft: 0.1^4 + (0 - 0.3)^4 ; stiff: (omega^2/4)(0.3 - 0.1)^2
    expected = 0.5 + 0.1**4 + 0.3**4 + 25.0 * 0.2**2
    assert ham.energy(q, p) == pytest.approx(expected)


def test_fpu_symmetry_preserves_energy():
    ham = fpu_hamiltonian(3, 50.0)
    u = np.random.default_rng(1).standard_normal(12) * 0.1
    assert ham.energy_of(ham.permute(u)) == pytest.approx(ham.energy_of(u))


def test_permute_needs_symmetry():
    with pytest.raises(InvalidSystem):
        _oscillator().permute(np.zeros(2))


@pytest.mark.parametrize("ham", [fpu_hamiltonian(3, 100.0), propane_problem().hamiltonian])
def test_gradients_match_finite_differences(ham):
    rng = np.random.default_rng(7)
    q = rng.standard_normal(ham.n_dof) * 0.1
    if ham.n_dof == 6:
        q = np.array([0.0, 0.0, 1.533, 0.0, 2.6136, 1.0826]) + q
    report = check_gradient(ham, q)
    assert report.worst < 1e-6


def test_check_gradient_catches_wrong_gradient():
    ham = SeparatedHamiltonian(
        1, 1.0, lambda q: float(q[0] ** 3), lambda q: q.copy(), zero_potential, zero_gradient, 1.0
    )
    assert check_gradient(ham, np.array([0.7])).max_rel_err_V > 0.1


def test_check_gradient_step_range():
    with pytest.raises(ValueError):
        check_gradient(_oscillator(), np.array([0.1]), fd_step=0.1)


def test_langevin_from_noise_amplitude():
    ham = _oscillator()
    ls = LangevinSystem.from_noise_amplitude(ham, 0.1, 0.5)
    assert ls.temperature == pytest.approx(1.25)
    assert ls.noise_placement is NoisePlacement.SLOW
    cold = LangevinSystem.from_noise_amplitude(ham, 0.1, 0.0)
    assert np.isinf(cold.beta)
    assert cold.temperature == 0.0


def test_langevin_friction_validation():
    ham = SeparatedHamiltonian(2, 1.0, zero_potential, zero_gradient, zero_potential, zero_gradient, 1.0)
    with pytest.raises(InvalidSystem):
        LangevinSystem(ham, np.array([[1.0, 0.5], [0.0, 1.0]]), 1.0)
    with pytest.raises(InvalidSystem):
        LangevinSystem(ham, [1.0, -1.0], 1.0)


def test_parametric_diffusion_shape_checked():
    sys_ = ParametricSystem(2, lambda u, a, e: -u, 1.0, diffusion=lambda u, a, e: np.eye(3))
    with pytest.raises(InvalidSystem):
        sys_.evaluate_diffusion(np.zeros(2), 1.0)
    quiet = ParametricSystem(2, lambda u, a, e: -u, 1.0)
    np.testing.assert_array_equal(quiet.evaluate_diffusion(np.zeros(2), 1.0), np.zeros((2, 2)))


def test_slow_observable_series():
    ob = SlowObservable("pair", lambda u: u[:2])
    states = np.arange(12.0).reshape(3, 4)
    assert ob.series(states).shape == (3, 2)
    assert SlowObservable("first", lambda u: u[0]).series(states).shape == (3, 1)


def test_non_finite_state():
    with pytest.raises(NonFiniteState) as info:
        check_finite(np.array([1.0, np.nan]), "symplectic_euler")
    located = info.value.at_step(12)
    assert located.step == 12
    assert "mesostep 12" in str(located)


def test_unknown_benchmark_message():
    err = UnknownBenchmark("fpu-shrt", ["fpu-short"])
    assert "fpu-short" in str(err)
    assert err.suggestions == ["fpu-short"]
