import numpy as np
import pytest
from scipy.integrate import solve_ivp

from analysis import (
    artificial_asymptotic_polynomial,
    characteristic_polynomial,
    convergence_study,
    energy_series,
    ensemble_stats,
    error_report,
    exact_linear_flow,
    exact_linear_trajectory,
    exchange_period,
    f_error,
    fpu_diagnostics,
    linear_test_stepper,
    nonintrusive_asymptotic_polynomial,
    relaxation_period,
    slow_error,
    stability_domain_scan,
    stability_verdict,
    transfer_matrix,
    zero_crossings,
)
from core_types import (
    GridMismatch,
    LayoutMismatch,
    NotLinear,
    SeparatedHamiltonian,
    SlowObservable,
    StepSchedule,
    StiffSplitSystem,
    TimeGridMismatch,
    Trajectory,
    WindowTooSmall,
    zero_gradient,
    zero_potential,
)
from flavor_compose import SamplingPolicy, integrate, legacy_stepper, mesostep_count, run_ensemble
from legacy_integrators import forward_euler, symplectic_euler
from problems import (
    fpu_problem,
    harmonic_fpu_problem,
    hidden_sde_problem,
    langevin_fast_problem,
    langevin_slow_problem,
    linear_stability_problem,
    nonlinear_stiff_soft_problem,
    reference_stepper,
    stepper_for,
    triple_chain_problem,
    van_der_pol_hidden,
)

X = SlowObservable("x", lambda u: u[0])


def _traj(times, values):
    times = np.asarray(times, dtype=float)
    states = np.asarray(values, dtype=float).reshape(times.size, -1)
    steps = np.arange(times.size)
    return Trajectory(times=times, states=states, steps=steps, fast_clock=times.copy())


def _oscillator():
    return SeparatedHamiltonian(1, 1.0, lambda q: 0.5 * float(q @ q), lambda q: q.copy(), zero_potential, zero_gradient, 1.0)


# Stability

def test_identity_and_rotation_verdicts():
    assert stability_verdict(np.eye(4)).stable
    c, s = np.cos(0.3), np.sin(0.3)
    rot = np.array([[c, -s], [s, c]])
    v = stability_verdict(rot)
    assert v.stable
    assert v.spectral_radius == pytest.approx(1.0)
    assert not stability_verdict(1.01 * rot).stable


def test_verdict_needs_square_matrix():
    with pytest.raises(ValueError):
        stability_verdict(np.zeros((2, 3)))


def test_transfer_matrix_reproduces_step():
    stepper = linear_test_stepper("nonintrusive", 100.0, StepSchedule(tau=1e-5, delta=1e-2))
    t = transfer_matrix(stepper)
    u = np.array([0.3, -0.2, 0.5, 0.1])
    np.testing.assert_allclose(t @ u, stepper.step(u), atol=1e-12)


def test_transfer_matrix_rejects_nonlinear_stepper():
    bench = nonlinear_stiff_soft_problem(eps=1e-2)
    with pytest.raises(NotLinear):
        transfer_matrix(stepper_for(bench, "nonintrusive", StepSchedule(1e-3, 1e-2)))


@pytest.mark.parametrize(
    "kind, tau, stable_delta, unstable_delta",
    [("nonintrusive", 1e-8, 1.9, 2.1), ("artificial", 1e-5, 2.7, 2.9)],
)
def test_stability_boundary(kind, tau, stable_delta, unstable_delta):
    def verdict(delta):
        stepper = linear_test_stepper(kind, 1000.0, StepSchedule(tau=tau, delta=delta))
        return stability_verdict(transfer_matrix(stepper), tol=1e-6)

    assert verdict(stable_delta).stable
    assert not verdict(unstable_delta).stable


def test_nonintrusive_characteristic_polynomial_limit():
    def deviation(tau):
        stepper = linear_test_stepper("nonintrusive", 1000.0, StepSchedule(tau=tau, delta=1.0))
        coeffs = characteristic_polynomial(transfer_matrix(stepper))
        return np.max(np.abs(coeffs - nonintrusive_asymptotic_polynomial(1.0)))

    # at tau = 1e-8 the tau omega^2 terms are still about 0.02
    assert deviation(1e-8) < 0.1
    assert deviation(1e-10) < 1e-3
    assert deviation(1e-10) < deviation(1e-8)


def test_artificial_characteristic_polynomial_limit():
    stepper = linear_test_stepper("artificial", 1000.0, StepSchedule(tau=1e-5, delta=1.0))
    coeffs = characteristic_polynomial(transfer_matrix(stepper))
    np.testing.assert_allclose(coeffs, artificial_asymptotic_polynomial(1.0), atol=1e-3)


def test_stability_scan_is_downward_closed_in_delta():
    deltas = [0.5, 1.0, 1.5, 2.5, 3.0]
    scan = stability_domain_scan("nonintrusive", 100.0, deltas, [1e-2, 1e-1])
    assert scan.valid.all()
    for j in range(scan.ratios.size):
        column = list(scan.stable[:, j])
        # once unstable, every larger delta stays unstable
        first_bad = column.index(False) if False in column else len(column)
        assert all(column[:first_bad]) and not any(column[first_bad:])
    assert scan.stable[0, 0] and not scan.stable[-1, 0]
    assert len(scan.rows()) == 10


def test_stability_scan_skips_infeasible_cells():
    scan = stability_domain_scan("artificial", 100.0, [0.5], [1e4])
    assert not scan.valid.any()
    assert scan.rows() == []


def test_stability_scan_rejects_nonfinite_grid():
    with pytest.raises(ValueError):
        stability_domain_scan("nonintrusive", 100.0, [np.nan], [1.0])


@pytest.mark.parametrize("kind", ["nonintrusive", "artificial"])
def test_uncoupled_system_is_stable_below_two(kind):
    scan = stability_domain_scan(kind, 0.0, [0.5, 1.0, 1.5, 1.9], [0.01, 0.1], tol=1e-6)
    assert scan.valid.all()
    assert scan.stable.all()


def test_full_step_cell_matches_symplectic_euler_limit():
    omega = 1000.0
    hessian = np.array([[1.0 + omega**2, -(omega**2)], [-(omega**2), omega**2]])
    h_crit = 2.0 / np.sqrt(np.linalg.eigvalsh(hessian).max())
    assert h_crit == pytest.approx(np.sqrt(2.0) / omega, rel=1e-6)

    def verdict(h):
        stepper = linear_test_stepper("nonintrusive", omega, StepSchedule(tau=h, delta=h))
        return stability_verdict(transfer_matrix(stepper))

    assert verdict(0.999 * h_crit).stable
    assert not verdict(1.001 * h_crit).stable


def test_linear_test_stepper_kinds():
    with pytest.raises(ValueError):
        linear_test_stepper("reversible", 10.0, StepSchedule(1e-3, 1e-2))


# Accuracy

def test_f_error_of_identical_and_shifted_paths():
    times = np.linspace(0.0, 2.0, 201)
    a = _traj(times, np.sin(times))
    assert f_error(a, a, X, 0.5) == 0.0
    b = _traj(times, np.sin(times) + 0.25)
    assert f_error(a, b, X, 0.5) == pytest.approx(0.25, abs=1e-12)


def test_f_error_averages_out_fast_oscillation():
    times = np.linspace(0.0, 2.0, 201)
    fast = _traj(times, np.sin(2.0 * np.pi * 10.0 * times))
    still = _traj(times, np.zeros_like(times))
    assert f_error(fast, still, X, 1.0) < 1e-9
    assert slow_error(fast, still, X) > 0.9


def test_f_error_window_checks():
    times = np.linspace(0.0, 2.0, 201)
    a = _traj(times, times)
    with pytest.raises(WindowTooSmall):
        f_error(a, a, X, 0.05)
    with pytest.raises(WindowTooSmall):
        f_error(a, a, X, 3.0)
    with pytest.raises(ValueError):
        f_error(a, a, X, 0.0)


def test_slow_error_on_coarser_grid():
    coarse = np.linspace(0.0, 1.0, 11)
    fine = np.linspace(0.0, 1.0, 21)
    a = _traj(coarse, coarse)
    b = _traj(fine, fine + 0.5 * fine**2)
    assert slow_error(a, b, X) == pytest.approx(0.5)
    assert slow_error(b, a, X) == slow_error(a, b, X)


def test_slow_error_needs_common_horizon():
    a = _traj(np.linspace(0.0, 1.0, 11), np.zeros(11))
    b = _traj(np.linspace(0.0, 2.0, 11), np.zeros(11))
    with pytest.raises(TimeGridMismatch):
        slow_error(a, b, X)


def test_energy_slope_separates_symplectic_from_forward_euler():
    ham = _oscillator()
    u0 = np.array([1.0, 0.0])
    se = integrate(legacy_stepper(symplectic_euler(ham), 0.01, 1.0), u0, 100.0)
    osc = StiffSplitSystem(2, lambda u: np.array([u[1], -u[0]]), lambda u: np.zeros(2), 1.0)
    fe = integrate(legacy_stepper(forward_euler(osc), 0.01, 1.0), u0, 100.0)
    se_series = energy_series(se)
    fe_series = energy_series(fe, ham)
    assert fe_series.slope > 0.005
    assert abs(se_series.slope) < 0.1 * fe_series.slope
    assert se_series.amplitude < 0.02


def test_energy_series_needs_hamiltonian():
    with pytest.raises(ValueError):
        energy_series(_traj([0.0, 1.0], [0.0, 0.0]))


def test_error_report_against_closed_form():
    bench = linear_stability_problem(horizon=2.0)
    traj = integrate(stepper_for(bench), bench.initial_state, bench.horizon)
    exact = exact_linear_trajectory(bench.linear_matrix, bench.initial_state, traj)
    report = error_report(traj, exact, bench.observable(), 1.0)
    assert report.slow_error_sup < 0.05
    assert report.f_error <= report.slow_error_sup + 1e-12
    assert report.runtime_step_counts["mesosteps"] == 200


def test_exact_linear_flow_of_oscillator():
    times = np.linspace(0.0, 3.0, 7)
    out = exact_linear_flow(np.array([[0.0, 1.0], [-1.0, 0.0]]), [1.0, 0.0], times)
    np.testing.assert_allclose(out[:, 0], np.cos(times), atol=1e-12)
    np.testing.assert_allclose(out[:, 1], -np.sin(times), atol=1e-12)


# FPU springs

def test_fpu_diagnostics():
    omega, a = 50.0, 0.02
    traj = _traj([0.0, 1.0], [[-a, a, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]])
    diag = fpu_diagnostics(traj, omega, 1)
    assert diag.spring_energies[0, 0] == pytest.approx(omega**2 * a**2)
    assert diag.total[1] == 0.0
    with pytest.raises(LayoutMismatch):
        fpu_diagnostics(traj, omega, 2)


def test_fpu_total_cv_of_constant_total():
    traj = _traj([0.0, 1.0], [[-0.1, 0.1, 0.0, 0.0], [0.1, -0.1, 0.0, 0.0]])
    assert fpu_diagnostics(traj, 10.0, 1).total_cv() == 0.0


# Ensembles

def test_ensemble_of_identical_paths():
    times = np.linspace(0.0, 1.0, 5)
    paths = [_traj(times, np.cos(times)) for _ in range(4)]
    stats = ensemble_stats(paths, X)
    np.testing.assert_allclose(stats.mean[:, 0], np.cos(times))
    assert np.all(stats.var == 0.0)
    assert np.all(stats.mean_se == 0.0)
    np.testing.assert_allclose(stats.autocorr[:, 0], np.cos(times))
    lo, hi = stats.interval95()
    assert lo == hi == pytest.approx(np.cos(1.0))


def test_ensemble_stats_ignore_order():
    times = np.linspace(0.0, 1.0, 5)
    rng = np.random.default_rng(2)
    paths = [_traj(times, rng.standard_normal(5)) for _ in range(6)]
    a = ensemble_stats(paths, X)
    b = ensemble_stats(paths[::-1], X)
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-15)
    np.testing.assert_allclose(a.var, b.var, atol=1e-14)
    assert a.size == 6


def test_ensemble_stats_checks():
    times = np.linspace(0.0, 1.0, 5)
    with pytest.raises(ValueError):
        ensemble_stats([_traj(times, times)], X)
    with pytest.raises(GridMismatch):
        ensemble_stats([_traj(times, times), _traj(times * 2, times)], X)


# Convergence and periods

def test_convergence_fit_and_spikes():
    table = convergence_study(lambda m: 3.0 / m, [10, 20, 40, 80])
    assert table.slope == pytest.approx(-1.0)
    assert table.r_squared == pytest.approx(1.0)
    assert table.plateau_ratio() == pytest.approx(8.0)
    spiky = convergence_study(lambda p: 10.0 if p == 4 else 1.0, [1, 2, 3, 4, 5, 6], fit=False)
    assert spiky.spikes() == [3]
    assert np.isnan(spiky.slope)


def test_zero_crossings_of_sine():
    times = np.linspace(0.1, 13.0, 2000)
    s = np.sin(times)
    np.testing.assert_allclose(zero_crossings(times, s, "up"), [2 * np.pi, 4 * np.pi], atol=1e-5)
    np.testing.assert_allclose(zero_crossings(times, s, "down"), [np.pi, 3 * np.pi], atol=1e-5)
    assert zero_crossings(times, s, "both").size == 4
    assert relaxation_period(times, s) == pytest.approx(2 * np.pi, abs=1e-5)
    with pytest.raises(ValueError):
        zero_crossings(times, s, "sideways")


def test_relaxation_period_needs_two_crossings():
    times = np.linspace(0.1, 7.0, 500)
    with pytest.raises(WindowTooSmall):
        relaxation_period(times, np.sin(times))


def test_exchange_period_finds_return_peak():
    times = np.linspace(0.0, 20.0, 2001)
    energy = 0.5 * (1.0 + np.cos(2.0 * np.pi * times / 10.0))
    assert exchange_period(times, energy, guess=9.0) == pytest.approx(10.0, abs=0.02)
    with pytest.raises(WindowTooSmall):
        exchange_period(times, energy, guess=100.0)


# Reproductions

@pytest.mark.slow
def test_triple_chain_error_is_first_order_in_delta():
    bench = triple_chain_problem()
    horizon = 10.0
    q = bench.observable("q")
    reference = integrate(reference_stepper(bench), bench.initial_state, horizon)

    def error_of(m):
        stepper = stepper_for(bench, "artificial", StepSchedule(tau=5e-4, delta=1.0 / m))
        return f_error(integrate(stepper, bench.initial_state, horizon), reference, q, 1.0)

    table = convergence_study(error_of, [1.0 / m for m in (10, 20, 40, 80, 160)])
    assert 0.75 <= table.slope <= 1.25
    assert table.r_squared >= 0.95


@pytest.mark.slow
def test_triple_chain_error_plateaus_in_omega():
    def error_at(omega):
        bench = triple_chain_problem(eps=1.0 / omega**2)
        tau = 0.5 / omega
        q = bench.observable("q")
        flavor = integrate(stepper_for(bench, "artificial", StepSchedule(tau=tau, delta=0.01)), bench.initial_state, 10.0)
        reference = integrate(reference_stepper(bench, tau), bench.initial_state, 10.0, SamplingPolicy(stride=5))
        return f_error(flavor, reference, q, 1.0)

    table = convergence_study(error_at, [1e3, 3e3, 1e4, 3e4], fit=False)
    assert table.plateau_ratio() <= 2.0


@pytest.mark.slow
def test_harmonic_fpu_energy_exchange_period():
    bench = harmonic_fpu_problem()
    beat = bench.extras["beat_period"]
    assert beat == pytest.approx(8.886 * 50.0, rel=0.01)
    traj = integrate(stepper_for(bench), bench.initial_state, bench.horizon, SamplingPolicy(stride=10))
    springs = fpu_diagnostics(traj, 50.0, 3)
    period = exchange_period(traj.times, springs.spring_energies[:, 0], beat)
    assert period == pytest.approx(beat, rel=0.05)


@pytest.mark.slow
def test_van_der_pol_period_without_slow_variables():
    bench = van_der_pol_hidden()
    eps, horizon = bench.epsilon, bench.horizon
    stepper = stepper_for(bench, "nonintrusive")
    flavor = integrate(stepper, bench.initial_state, horizon, SamplingPolicy(stride=10))
    p_flavor = relaxation_period(flavor.times, bench.observable("y").series(flavor.states)[:, 0])

    reference = solve_ivp(
        lambda t, u: [-eps * u[1], (u[0] + u[1] - u[1] ** 3 / 3.0) / eps],
        (0.0, horizon),
        [1.0, 1.0],
        method="Radau",
        t_eval=np.linspace(0.0, horizon, 50_001),
        rtol=1e-8,
        atol=1e-10,
    )
    p_ref = relaxation_period(reference.t, reference.y[1])
    # the effective stiffness eps delta / tau stretches the period by about 1.5% here
    assert p_flavor == pytest.approx(p_ref, rel=0.03)

    fine_steps = mesostep_count(horizon, stepper.schedule.tau)
    assert fine_steps / flavor.step_counts["stiff_calls"] == pytest.approx(200.0, rel=1e-2)


@pytest.mark.slow
def test_hidden_sde_mean_follows_averaged_dynamics():
    bench = hidden_sde_problem(paths=100)
    x0 = bench.parameters["x0"]
    rec = run_ensemble(stepper_for(bench), bench.initial_state, 1.0, bench.ensemble, base_seed=3)
    stats = ensemble_stats(rec.trajectories, bench.observable("x"))

    averaged = solve_ivp(
        lambda t, x: -0.5 * (x**2 + 1.0) + 5.0 * np.sin(2.0 * np.pi * t),
        (0.0, 1.0),
        [x0],
        rtol=1e-9,
        atol=1e-12,
    )
    assert stats.mean[-1, 0] == pytest.approx(averaged.y[0, -1], abs=0.15)


@pytest.mark.slow
def test_langevin_slow_matches_gla_ensemble():
    bench = langevin_slow_problem()
    horizon, paths = 1.0, 50
    phi = bench.observable("x_minus_y")
    flavor = run_ensemble(stepper_for(bench), bench.initial_state, horizon, paths, base_seed=7)
    gla = run_ensemble(
        reference_stepper(bench), bench.initial_state, horizon, paths, base_seed=8, sampler=SamplingPolicy(stride=10)
    )
    a = ensemble_stats(flavor.trajectories, phi)
    b = ensemble_stats(gla.trajectories, phi)
    spread = 4.0 * np.hypot(a.mean_se[-1, 0], b.mean_se[-1, 0])
    assert abs(a.mean[-1, 0] - b.mean[-1, 0]) < spread + 0.1


@pytest.mark.slow
def test_langevin_fast_matches_gla_ensemble():
    bench = langevin_fast_problem()
    horizon, paths = 1.0, 50
    phi = bench.observable("x_minus_y")
    flavor = run_ensemble(stepper_for(bench), bench.initial_state, horizon, paths, base_seed=7)
    gla = run_ensemble(
        reference_stepper(bench), bench.initial_state, horizon, paths, base_seed=8, sampler=SamplingPolicy(stride=100)
    )
    a = ensemble_stats(flavor.trajectories, phi)
    b = ensemble_stats(gla.trajectories, phi)
    spread = 4.0 * np.hypot(a.mean_se[-1, 0], b.mean_se[-1, 0])
    assert abs(a.mean[-1, 0] - b.mean[-1, 0]) < spread + 0.1


@pytest.mark.slow
def test_fpu_short_flavor_tracks_velocity_verlet():
    horizon = 40.0
    bench = fpu_problem(horizon=horizon)
    flavor = integrate(stepper_for(bench), bench.initial_state, horizon)
    reference = integrate(reference_stepper(bench), bench.initial_state, horizon, SamplingPolicy(stride=40))
    x1 = bench.observable("x1")
    crossings = [
        zero_crossings(tr.times, x1.series(tr.states)[:, 0], "both").size for tr in (flavor, reference)
    ]
    assert crossings[0] == crossings[1]
    assert crossings[0] > 0
    assert fpu_diagnostics(flavor, bench.extras["omega"], bench.extras["m"]).total_cv() <= 0.2
