import numpy as np
import pytest

from gpe2d import minimize as mz
from gpe2d.basis import TensorBasis2D
from gpe2d.energy import EnergyModel
from gpe2d.minimize import (
    CollapsedToGround,
    InitialGuess,
    LineSearchFailure,
    NonConvergence,
    SolverConfig,
    continuation_schedule,
    newton_step,
    parity_masks,
    solve_continued,
    solve_excited,
    solve_ground,
    stationarity_residual,
    update_multiplier,
)
from gpe2d.model import CoefficientField, SystemParams, normalize, synthesize_on_grid

MIXED = SystemParams(theta=[[40.0, 10.0], [10.0, 20.0]], centers=[[0.5, 0.0], [-0.5, 0.3]],
                     omega=[[1.0, 1.2], [0.9, 1.0]], N=[1.0, 2.0])


@pytest.fixture(scope="module")
def basis12():
    return TensorBasis2D.build(12)


@pytest.fixture(scope="module")
def mixed_solution(basis12):
    return solve_ground(MIXED, basis12)


def check_identity(fields, report, params):
    br = EnergyModel(fields[0].basis, params).breakdown([f.coeffs for f in fields])
    for i, f in enumerate(fields):
        assert abs(f.mass - params.N[i]) <= 1e-10
        rhs = br.per_component[i] + br.quartic[i] + br.coupling
        assert params.N[i] * report.chemical_potentials[i] == pytest.approx(rhs, rel=1e-8)


def test_schedule_two_by_two():
    cfg = SolverConfig(continuation_steps_rho=2, continuation_steps_theta=2)
    target = SystemParams(theta=[[400.0, 0.0], [0.0, 0.0]])
    s = continuation_schedule(target, cfg)
    assert [x.rho for x in s] == [0.5, 1.0, 1.0, 1.0]
    assert [x.theta[0, 0] for x in s] == [0.0, 0.0, 200.0, 400.0]


def test_schedule_single_stage():
    cfg = SolverConfig(continuation_steps_rho=1, continuation_steps_theta=1)
    s = continuation_schedule(SystemParams(), cfg)
    assert len(s) == 1 and s[0].rho == 1.0 and not np.any(s[0].theta)


def test_schedule_ramps_theta_jointly():
    target = SystemParams(theta=[[40.0, 10.0], [10.0, 20.0]])
    s = continuation_schedule(target, SolverConfig(continuation_steps_theta=4))[5:]
    for k, p in enumerate(s, start=1):
        assert np.allclose(p.theta, np.asarray(target.theta) * k / 4)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(armijo_c=1.5)
    with pytest.raises(ValueError):
        SolverConfig(backtrack_factor=1.0)
    with pytest.raises(ValueError):
        SolverConfig(grad_tol=0.0)


def test_guess_outside_basis(basis12):
    with pytest.raises(ValueError):
        solve_excited(SystemParams(), basis12, guess=InitialGuess(((12, 0), (0, 0))))


def test_linear_ground_state(basis12):
    fields, report = solve_ground(SystemParams(), basis12)
    for f in fields:
        off = f.coeffs.copy()
        assert f.coeffs[0, 0] == pytest.approx(1.0, abs=1e-8)
        off[0, 0] = 0.0
        assert np.sum(off**2) < 1e-12
    assert report.energies_per_component == pytest.approx((1.0, 1.0), abs=1e-8)
    assert report.chemical_potentials == pytest.approx((1.0, 1.0), abs=1e-8)
    assert report.converged


def test_linear_ground_state_with_heavy_atoms():
    basis = TensorBasis2D.build(24)
    p = SystemParams(m=[2.0, 0.5])
    _, report = solve_ground(p, basis)
    # -Lap/(2m) + m |x|^2 / 2 has ground energy 1 for any m
    assert report.energies_per_component == pytest.approx((1.0, 1.0), abs=1e-8)


def test_linear_excited_state(basis12):
    fields, report = solve_excited(SystemParams(), basis12, guess=InitialGuess(((1, 0), (0, 0))))
    assert abs(fields[0].coeffs[1, 0]) == pytest.approx(1.0, abs=1e-8)
    assert report.energies_per_component[0] == pytest.approx(2.0, abs=1e-8)


def test_ground_state_properties(mixed_solution):
    fields, report = mixed_solution
    check_identity(fields, report, MIXED)
    assert report.residual_norm <= SolverConfig().grad_tol
    res = stationarity_residual(fields, MIXED)
    assert max(float(np.max(np.abs(r))) for r in res) <= 10 * SolverConfig().grad_tol
    x = np.linspace(-4, 4, 81)
    for f in fields:
        assert np.all(synthesize_on_grid(f, x, x) > 0)
        # outermost quadrature nodes sit beyond the resolved tail: sign noise
        # there is bounded by the truncation error
        s = f.node_samples()
        assert s.min() >= -1e-3 * s.max()


def test_multiplier_matches_report(mixed_solution):
    fields, report = mixed_solution
    assert update_multiplier(fields, MIXED) == pytest.approx(report.chemical_potentials, rel=1e-10)


def test_multiplier_linear(basis12):
    fields = tuple(CoefficientField.mode(basis12, 0, 0) for _ in range(2))
    assert update_multiplier(fields, SystemParams()) == pytest.approx((1.0, 1.0), abs=1e-13)


def test_newton_step_fixed_point(basis12):
    fields = tuple(CoefficientField.mode(basis12, 0, 0) for _ in range(2))
    new, t = newton_step(fields, SystemParams(), (1.0, 1.0))
    assert t == 1.0
    for a, b in zip(fields, new):
        assert np.allclose(a.coeffs, b.coeffs, atol=1e-14)


def test_newton_step_descends():
    basis = TensorBasis2D.build(8)
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = SystemParams(theta=[[rng.uniform(0, 5), 1.0], [1.0, rng.uniform(0, 5)]],
                         centers=rng.uniform(-1, 1, (2, 2)))
        fields = tuple(normalize(CoefficientField(
            rng.normal(size=basis.shape) * np.exp(-np.add.outer(np.arange(8), np.arange(8))),
            basis)) for _ in range(2))
        lam = update_multiplier(fields, p)
        new, t = newton_step(fields, p, lam)
        m = EnergyModel(basis, p)
        before = m.energy([f.coeffs for f in fields])
        after = m.energy([f.coeffs for f in new])
        assert 0 < t <= 1
        assert after <= before + 1e-12 * abs(before)
        for f in new:
            assert abs(f.mass - 1.0) <= 1e-10


def test_zero_diagonal_gives_finite_step():
    g = [np.array([[1.0, -2.0]])]
    J = [np.array([[0.0, -0.0]])]
    d = mz._step_direction(g, J, 1e-12)
    assert np.all(np.isfinite(d[0]))
    assert d[0][0, 0] == pytest.approx(-1e12)


def test_line_search_failure_is_reported(basis12):
    fields = tuple(normalize(CoefficientField(np.ones(basis12.shape), basis12)) for _ in range(2))
    with pytest.raises(LineSearchFailure):
        newton_step(fields, SystemParams(theta=[[50.0, 0.0], [0.0, 50.0]]), (-1e6, -1e6),
                    SolverConfig(max_backtracks=1, armijo_c=0.99))


def test_continuation_halves_on_failure(basis12, monkeypatch):
    real = mz._iterate
    calls = {"failures": 0}

    def flaky(model, phis, tol, config, masks=None):
        if model.params.theta[0, 0] == 40.0 and calls["failures"] < 2:
            calls["failures"] += 1
            raise LineSearchFailure("forced")
        return real(model, phis, tol, config, masks)

    monkeypatch.setattr(mz, "_iterate", flaky)
    cfg = SolverConfig(continuation_steps_theta=1)
    _, report = solve_ground(SystemParams(theta=[[40.0, 0.0], [0.0, 0.0]]), basis12, cfg)
    assert calls["failures"] == 2 and report.converged


def test_continuation_gives_up_after_max_halvings(basis12, monkeypatch):
    def broken(model, phis, tol, config, masks=None):
        if model.params.theta[0, 0] > 0:
            raise LineSearchFailure("forced")
        return mz.__dict__["_real_iterate"](model, phis, tol, config, masks)

    monkeypatch.setitem(mz.__dict__, "_real_iterate", mz._iterate)
    monkeypatch.setattr(mz, "_iterate", broken)
    with pytest.raises(LineSearchFailure):
        solve_ground(SystemParams(theta=[[40.0, 0.0], [0.0, 0.0]]), basis12,
                     SolverConfig(max_halvings=2))


def test_nonconvergence_carries_partial_result(basis12):
    with pytest.raises(NonConvergence) as info:
        solve_ground(MIXED, basis12, SolverConfig(max_newton_iters=3))
    exc = info.value
    assert exc.report is not None and not exc.report.converged
    assert len(exc.fields) == 2
    assert abs(exc.fields[0].mass - 1.0) <= 1e-10


def test_solves_are_deterministic(basis12):
    a, ra = solve_ground(MIXED, basis12)
    b, rb = solve_ground(MIXED, basis12)
    assert ra == rb
    assert all(np.array_equal(x.coeffs, y.coeffs) for x, y in zip(a, b))


def test_minima_nondecreasing_in_coupling(basis12):
    energies = []
    for kappa in (0.0, 5.0, 20.0, 60.0):
        _, r = solve_ground(MIXED.with_kappa(kappa), basis12)
        energies.append(r.energy)
    assert all(b >= a - 1e-7 for a, b in zip(energies, energies[1:]))


def test_warm_started_solve_matches_cold(mixed_solution, basis12):
    fields, report = mixed_solution
    target = MIXED.with_kappa(12.0)
    _, warm = solve_continued(fields, MIXED, target)
    _, cold = solve_ground(target, basis12)
    assert warm.energy == pytest.approx(cold.energy, rel=1e-9)


def test_parity_masks():
    basis = TensorBasis2D.build(4)
    centred = SystemParams()
    masks = parity_masks(centred, basis, InitialGuess(((1, 0), (0, 0))))
    assert masks[0][1, 0] == 1 and masks[0][0, 0] == 0 and masks[0][1, 1] == 0
    assert masks[1][0, 2] == 1 and masks[1][1, 0] == 0
    shifted = SystemParams(centers=[[1.0, 0.0], [0.0, 0.0]])
    only_y = parity_masks(shifted, basis, InitialGuess(((1, 0), (0, 0))))
    assert only_y[0][0, 0] == 1 and only_y[0][0, 1] == 0
    moved = SystemParams(centers=[[1.0, 1.0], [0.0, 0.0]])
    assert parity_masks(moved, basis, InitialGuess()) is None


def test_excited_energy_above_ground():
    basis = TensorBasis2D.build(16)
    p = SystemParams(theta=[[30.0, 0.0], [0.0, 5.0]])
    _, ground = solve_ground(p, basis)
    fields, excited = solve_excited(p, basis, ground_energy=ground.energy)
    assert excited.energy > ground.energy
    check_identity(fields, excited, p)


def test_collapse_is_warned(basis12):
    p = SystemParams(theta=[[10.0, 0.0], [0.0, 5.0]])
    _, ground = solve_ground(p, basis12)
    with pytest.warns(CollapsedToGround):
        solve_excited(p, basis12, guess=InitialGuess(((0, 0), (0, 0))), ground_energy=ground.energy)


def test_coupled_excited_state_segregates():
    basis = TensorBasis2D.build(24)
    free = SystemParams(theta=[[50.0, 0.0], [0.0, 5.0]])
    _, r0 = solve_excited(free, basis)
    _, r1 = solve_excited(free.with_kappa(120.0), basis)
    assert r1.overlap_integral < r0.overlap_integral
