import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmnl.errors import CflViolation, NotBlowingUp, OrderViolationInInputs
from pmnl.geometry import Ball, GridField, Interval, build_grid
from pmnl.model import ConstantKernel, ConstantValue, validate
from pmnl.solver import (BLOWUP, COMPLETED, INCONCLUSIVE, Series, SolverConfig, compare_evolutions,
                         detect_blowup, solve, solve_inner, stable_timestep, step_explicit)

from conftest import make_spec

FAST = SolverConfig(n_cells=40, m_schedule=(8, 16), j_tol=1e-4, n_output=20)


def _series(t, s):
    t = np.asarray(t, float)
    return Series(t, np.asarray(s, float), np.asarray(s, float), np.zeros_like(t))


# ---------------------------------------------------------------- step


def test_floor_is_fixed_point():
    spec = make_spec(k0=0.0, nu=1.5)
    g = build_grid(Interval(0, 1), 20)
    m = 8
    f = GridField(np.full(20, 1.0 / m))
    dt = stable_timestep(f, spec, g, 0.9)
    out = step_explicit(f, spec, g, dt, m, 0.0)
    assert np.array_equal(out.values, f.values)
    assert out.time == pytest.approx(dt)


def test_pure_absorption_step():
    spec = make_spec(k0=0.0, nu=2, a=0.5)
    g = build_grid(Interval(0, 1), 20)
    m, c = 8, 3.0
    f = GridField(np.full(20, c))
    dt = 0.5 * stable_timestep(f, spec, g)
    out = step_explicit(f, spec, g, dt, m, 0.0)
    expected = c + dt * 0.5 * (1 / m**2 - c**2)
    assert np.allclose(out.values, expected, rtol=1e-14)
    assert np.all(out.values < c)


def test_boundary_cell_gain():
    # u = 2, k0 = 1, l = 2: flux integral 4, boundary gain mu u^(mu-1) * 4 / h
    spec = make_spec(mu=2, nu=1, a=0.1, l=2, k0=1.0)
    n = 10
    g = build_grid(Interval(0, 1), n)
    f = GridField(np.full(n, 2.0))
    dt = 0.5 * stable_timestep(f, spec, g)
    m = 16
    out = step_explicit(f, spec, g, dt, m, np.array([4.0, 4.0]))
    interior = 2.0 + dt * 0.1 * (1 / m - 2.0)
    gain = dt * 2 * 2.0 * 4.0 / g.h
    assert out.values[0] == pytest.approx(interior + gain, rel=1e-13)
    assert out.values[-1] == pytest.approx(interior + gain, rel=1e-13)
    assert np.allclose(out.values[1:-1], interior, rtol=1e-13)


def test_cfl_violation():
    spec = make_spec()
    g = build_grid(Interval(0, 1), 20)
    f = GridField(np.full(20, 2.0))
    with pytest.raises(CflViolation):
        step_explicit(f, spec, g, 10 * stable_timestep(f, spec, g), 8, 0.0)


def test_stable_timestep_formula():
    spec = make_spec(mu=2, nu=4, a=1)
    g = build_grid(Interval(0, 1), 20)
    u = np.full(20, 2.0)
    dt = stable_timestep(u, spec, g, 0.9)
    expected = 0.9 * g.h**2 / (2 * 2 * 2.0 + 1 * 4 * 2.0**3 * g.h**2)
    assert dt == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------- inner ladder


def test_zero_kernel_converges_in_two():
    spec = make_spec(k0=0.0, u0=1.0, horizon=0.2)
    res = solve_inner(spec, None, 8, FAST)
    assert res.status == COMPLETED
    assert max(row["j"] for row in res.trace) == 2
    assert res.trace[-1]["delta"] == 0.0


def test_global_ladder_is_monotone():
    spec = make_spec(mu=2, nu=4, a=1, l=2, u0=1.0, horizon=0.2)
    res = solve_inner(spec, None, 8, FAST)
    assert res.status == COMPLETED
    assert min(row["min_diff"] for row in res.trace) >= -10 * FAST.j_tol
    assert res.trace[-1]["delta"] < FAST.j_tol * max(1, res.trace[-1]["sup"])


def test_blowup_escalates():
    spec = make_spec(mu=2, nu=1, a=0.1, l=2, u0=5.0, horizon=0.05)
    res = solve_inner(spec, None, 16, SolverConfig(n_cells=40, j_tol=1e-4))
    assert res.status == BLOWUP
    assert 0 < res.t_cross < 0.05


# ---------------------------------------------------------------- outer loop


def test_zero_data_zero_kernel():
    spec = make_spec(k0=0.0, u0=0.0, horizon=0.1)
    cfg = SolverConfig(n_cells=20, m_schedule=(16, 64, 1024, 2**16), m_tol=1e-3, n_output=10)
    out = solve(spec, cfg)
    assert out.status == COMPLETED
    # the lifted data 1/m is a stationary state, so the limit is the zero solution
    assert np.max(out.final_field.values) == pytest.approx(1.0 / out.m_final)
    assert np.max(out.final_field.values) < cfg.m_tol


def test_blowup_outcome():
    spec = make_spec(mu=2, nu=1, a=0.1, l=2, u0=5.0, horizon=0.05)
    out = solve(spec, SolverConfig(n_cells=50, m_schedule=(16, 32), j_tol=1e-4))
    assert out.status == BLOWUP
    assert out.m_converged
    assert out.blowup.conclusive
    assert out.t_star == pytest.approx(0.00228, rel=0.05)
    # the spatially constant ODE u' = 2 u^2 (boundary gain, zero diffusion) blows up at 1/(2*5*... )
    assert out.blowup.exponent == pytest.approx(0.5, abs=0.1)


def test_inconclusive_when_dt_floor_is_absurd():
    spec = make_spec(mu=2, nu=4, a=1, l=2, u0=1.0, horizon=0.1)
    out = solve(spec, SolverConfig(n_cells=20, m_schedule=(8,), dt_min=1.0))
    assert out.status == INCONCLUSIVE
    assert "dt_min" in out.message


def test_series_invariants():
    spec = make_spec(mu=2, nu=4, a=1, l=2, u0=1.0, horizon=0.2)
    out = solve(spec, FAST)
    s = out.series
    assert np.all(np.diff(s.t) > 0)
    assert np.all(s.sup_norm >= s.l1_norm / 1.0 - 1e-12)
    assert np.all(out.trajectory.u >= 1.0 / out.m_final - 1e-14)


def test_deterministic():
    spec = make_spec(mu=2, nu=4, a=1, l=2, u0=1.0, horizon=0.1)
    a = solve(spec, FAST)
    b = solve(spec, FAST)
    assert np.array_equal(a.trajectory.u, b.trajectory.u)
    assert np.array_equal(a.series.sup_norm, b.series.sup_norm)


def test_zero_kernel_mass_law():
    spec = make_spec(mu=2, nu=2, a=1.0, k0=0.0, horizon=0.05,
                     initial=ConstantValue(2.0))
    out = solve(spec, SolverConfig(n_cells=20, m_schedule=(8,), n_output=10))
    s = out.series
    m = out.m_final
    # constant data stays constant: exact ODE u' = a/m^2 - a u^2
    u0 = 2.0
    c = 1.0 / m
    t = s.t[-1]
    # closed-form solution of u' = a(c^2 - u^2)
    k = math.atanh(c / u0) if u0 != c else 0
    exact = c / math.tanh(c * t + math.atanh(c / u0)) if False else \
        c * (1 + ((u0 - c) / (u0 + c)) * math.exp(-2 * c * t)) / (1 - ((u0 - c) / (u0 + c)) * math.exp(-2 * c * t))
    assert s.l1_norm[-1] == pytest.approx(exact, rel=1e-3)
    # per-step mass change matches the quadrature of the right side to O(dt)
    dm = np.diff(s.l1_norm)
    dt = np.diff(s.t)
    rhs = 1.0 * (c**2 - s.sup_norm[:-1] ** 2)
    assert np.max(np.abs(dm / dt - rhs)) <= 10 * np.max(dt) * np.max(np.abs(rhs)) * 4 * 2.0 + 1e-9


def test_ball_runs():
    spec = make_spec(mu=2, nu=4, a=1, l=2, u0=1.0, horizon=0.05, domain=Ball(3, 1.0))
    out = solve(spec, SolverConfig(n_cells=20, m_schedule=(8, 16), j_tol=1e-4, n_output=10))
    assert out.status == COMPLETED
    assert np.all(out.final_field.values > 0)


# ---------------------------------------------------------------- blow-up fit


def test_fit_simple_pole():
    t = 1 - np.geomspace(0.1, 1e-3, 60)
    est = detect_blowup(_series(t, 1 / (1 - t)))
    assert est.t_star == pytest.approx(1.0, abs=1e-3)
    assert est.exponent == pytest.approx(1.0, rel=0.05)
    assert est.conclusive


def test_fit_double_pole():
    t = 0.5 - np.geomspace(0.1, 1e-3, 60)
    est = detect_blowup(_series(t, (0.5 - t) ** -2.0))
    assert est.t_star == pytest.approx(0.5, abs=1e-3)
    assert est.exponent == pytest.approx(2.0, rel=0.05)


def test_exponential_is_not_blowup():
    t = np.linspace(0, 10, 200)
    with pytest.raises(NotBlowingUp):
        detect_blowup(_series(t, np.exp(t)))


def test_too_few_samples():
    with pytest.raises(NotBlowingUp):
        detect_blowup(_series([0.1, 0.2, 0.3], [1, 10, 1000]))


@settings(max_examples=25, deadline=None)
@given(T=st.floats(0.1, 10), p=st.floats(0.3, 3))
def test_fit_recovers_power_laws(T, p):
    t = T - T * np.geomspace(0.5, 1e-7, 120)
    est = detect_blowup(_series(t, (T - t) ** -p))
    assert est.t_star == pytest.approx(T, rel=1e-3)
    assert est.exponent == pytest.approx(p, rel=0.05)


# ---------------------------------------------------------------- comparison


def test_identical_data_zero_gap():
    spec = make_spec(mu=2, nu=4, a=1, l=2, horizon=0.1)
    rep, _, _ = compare_evolutions(spec, ConstantValue(1.0), ConstantValue(1.0), FAST)
    assert rep.min_gap == 0.0
    assert rep.passed


def test_ordered_data_stay_ordered():
    spec = make_spec(mu=2, nu=4, a=1, l=2, horizon=0.1)
    rep, low, high = compare_evolutions(spec, ConstantValue(1.0), ConstantValue(2.0), FAST)
    assert rep.passed
    assert rep.min_gap >= -1e-6 * rep.sup_scale


def test_unordered_inputs_rejected():
    spec = make_spec(horizon=0.1)
    with pytest.raises(OrderViolationInInputs):
        compare_evolutions(spec, ConstantValue(2.0), ConstantValue(1.0), FAST)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(cfl_safety=1.5)
    with pytest.raises(ValueError):
        SolverConfig(m_schedule=())
    with pytest.raises(ValueError):
        SolverConfig(j_tol=0)
