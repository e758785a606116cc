import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from pmnl.barriers import (CERTIFIED, FAMILIES, SUB, SUPER, VIOLATED, BlowupSub, BoundaryLayerSub,
                           BoundaryLayerSuper, Exponents, ExpBlowupSub, LocalBound, OdeBarrier,
                           StationarySuper, SubcriticalSuper, certify, compatible, evaluate,
                           initial_ordering, residual_boundary, residual_interior, suggest_parameters)
from pmnl.errors import FamilyIncompatible, InvalidBarrier, OutsideValidityWindow
from pmnl.geometry import Ball, Interval, build_grid

from conftest import make_spec

GRID = build_grid(Interval(0, 1), 200)


# ---------------------------------------------------------------- evaluate


def test_subcritical_unit_value():
    spec = make_spec(mu=1.4, nu=0.5, l=0.5)
    bar = SubcriticalSuper(Exponents.of(spec), alpha=1.0, beta=1.0, b=0.0)
    # psi is the constant 1, exponent (1-l)/(2-l-mu) = 5
    assert evaluate(bar, spec, 0.3, 0.0) == pytest.approx(1.0, rel=1e-14)


def test_layer_sub_unit_value():
    spec = make_spec(mu=2, nu=1, l=3)
    bar = BoundaryLayerSub(Exponents.of(spec), C=1.0, sigma=2.0 + 0.5, t0=1.0, gamma_depth=0.2)
    assert evaluate(bar, spec, 0.0, 0.0) == pytest.approx(1.0)
    bar2 = BoundaryLayerSub(Exponents.of(make_spec(mu=2, nu=1, l=3)), C=1.0, sigma=2.0 + 1e-9, t0=1.0,
                            gamma_depth=0.2)
    assert evaluate(bar2, spec, 1.0, 0.0) == pytest.approx(1.0)


def test_ode_exponential_value():
    spec = make_spec(nu=1, a=0.5)
    bar = OdeBarrier(Exponents.of(spec), A=2.0)
    assert evaluate(bar, spec, 0.5, 1.0) == pytest.approx(2 * math.exp(-1), rel=1e-14)


def test_ode_window_edge_allowed():
    spec = make_spec(nu=0.5, a=1.0)
    bar = OdeBarrier(Exponents.of(spec), A=4.0)
    assert evaluate(bar, spec, 0.5, bar.window(spec)) == 0.0


def test_outside_window():
    spec = make_spec(mu=2, nu=1, l=2, a=0.1)
    bar = BlowupSub(Exponents.of(spec), gamma_tilde=0.5, alpha=2.0, A=1.0, T=1.0, b=2.0)
    with pytest.raises(OutsideValidityWindow):
        evaluate(bar, spec, 0.5, 1.0)
    with pytest.raises(OutsideValidityWindow):
        evaluate(bar, spec, 0.5, -0.1)
    lb = LocalBound(Exponents.of(spec), alpha=1.0, c1=1.0, c2=1.0, b=1.0)
    with pytest.raises(OutsideValidityWindow):
        evaluate(lb, spec, 0.5, 1.0)


def test_exponent_mismatch_rejected():
    bar = OdeBarrier(Exponents(2, 1, 2), A=2.0)
    with pytest.raises(InvalidBarrier):
        evaluate(bar, make_spec(nu=3), 0.5, 0.0)


# ---------------------------------------------------------------- residuals


def test_constant_stationary_residual():
    spec = make_spec(mu=2, nu=3, l=0.5, a=1.5)
    bar = StationarySuper(Exponents.of(spec), b=0.0, beta=1.0)
    c = evaluate(bar, spec, 0.5, 0.0)
    r = residual_interior(bar, spec, GRID, 0.0)
    assert np.allclose(r, 1.5 * c**3, rtol=1e-12)


def test_ode_residual_value():
    spec = make_spec(nu=2, a=1.0)
    bar = OdeBarrier(Exponents.of(spec), t0=0.5)
    r = residual_interior(bar, spec, GRID, 0.0)
    assert np.allclose(r, -1.0, atol=1e-12)


def test_zero_kernel_boundary_residual():
    spec = make_spec(mu=2, nu=3, l=0.5, k0=0.0)
    b = 3.0
    bar = StationarySuper(Exponents.of(spec), b=b, beta=1.0)
    ub = evaluate(bar, spec, np.array([0.0, 1.0]), 0.0)
    rb = residual_boundary(bar, spec, GRID, 0.0)
    # |Omega| = 1, |dOmega| = 2
    assert np.allclose(rb, b / 2 * ub**0.5, rtol=1e-12)
    assert np.all(rb > 0)


def test_blowup_sub_needs_positive_kernel():
    spec = make_spec(mu=2, nu=1, l=2, a=0.1, k0=0.0)
    bar = BlowupSub(Exponents.of(spec), gamma_tilde=0.5, alpha=2.0, A=1.0, T=1.0, b=2.0,
                    psi_min=2.0**-10)
    assert np.all(residual_boundary(bar, spec, GRID, 0.5) > 0)
    assert certify(bar, spec, GRID).verdict == VIOLATED


def test_exp_blowup_boundary_sign():
    spec = make_spec(mu=2, nu=2, l=1, a=1.0)
    bar = suggest_parameters(spec, "ExpBlowupSub")
    for t in (0.0, 0.5 * bar.T, 0.99 * bar.T):
        assert np.all(residual_boundary(bar, spec, GRID, t) <= 0)


def _richardson_order(bar, spec, x, t, eta):
    from pmnl.barriers import _interior
    from pmnl.model import validate
    v = validate(spec)
    r = [_interior(bar, v, x, t, eta / 2**k)[0] for k in range(3)]
    return np.log2(np.abs(r[0] - r[1]) / np.abs(r[1] - r[2]))


@pytest.mark.parametrize("domain", [Interval(0, 1), Ball(3, 1.0)])
def test_residual_convergence_order(domain):
    spec = make_spec(mu=1.4, nu=0.5, l=0.5, domain=domain)
    bar = SubcriticalSuper(Exponents.of(spec), alpha=1.0, beta=1.0, b=2.0)
    x = np.linspace(0.2, 0.8, 7)
    order = _richardson_order(bar, spec, x, 0.3, 0.05)
    assert np.all(order >= 1.9)


def test_ball_residual_interior():
    spec = make_spec(mu=2, nu=3, l=0.5, domain=Ball(2, 1.0))
    bar = suggest_parameters(spec, "StationarySuper", n_probe=60)
    g = build_grid(spec.domain, 60)
    assert certify(bar, spec, g).verdict == CERTIFIED


# ---------------------------------------------------------------- certify / suggest


def test_subcritical_certified_then_violated():
    spec = make_spec(mu=1.4, nu=0.5, l=0.5)
    bar = suggest_parameters(spec, "SubcriticalSuper")
    assert certify(bar, spec, GRID).verdict == CERTIFIED
    rep = certify(replace(bar, beta=bar.beta * 1e-6), spec, GRID)
    assert rep.verdict == VIOLATED
    assert rep.location["kind"] in ("interior", "boundary", "initial")


def test_ode_certified_in_zero_kernel_context():
    spec = make_spec(nu=1.5, a=1.0, k0=0.0, u0=5.0)
    for bar in (OdeBarrier(Exponents.of(spec), t0=0.25),):
        assert certify(bar, spec, GRID).verdict == CERTIFIED
    spec = make_spec(nu=1, a=0.3, k0=0.0, u0=5.0)
    assert certify(OdeBarrier(Exponents.of(spec), A=3.0), spec, GRID).verdict == CERTIFIED


def test_stationary_incompatible():
    with pytest.raises(FamilyIncompatible):
        suggest_parameters(make_spec(mu=2, nu=4, l=2), "StationarySuper")


def test_unknown_family():
    with pytest.raises(FamilyIncompatible):
        compatible(make_spec(), "Nope")


def test_layer_sub_search():
    spec = make_spec(mu=2, nu=1, l=2, a=1.0, u0=5.0)
    bar = suggest_parameters(spec, "BoundaryLayerSub")
    assert bar.sigma == pytest.approx(2.5)
    rep = certify(bar, spec, GRID)
    assert rep.verdict == CERTIFIED
    r = residual_interior(bar, spec, GRID, 0.5 * bar.t0)
    outside = GRID.distance_to_boundary >= bar.gamma_depth
    assert np.all(np.isnan(r[outside])) and not np.any(np.isnan(r[~outside]))


def test_blowup_sub_search_and_shrink():
    spec = make_spec(mu=2, nu=1, l=2, a=0.1, u0=5.0)
    bar = suggest_parameters(spec, "BlowupSub")
    assert bar.role == SUB
    assert certify(bar, spec, GRID).verdict == CERTIFIED
    assert np.max(residual_interior(bar, spec, GRID, 0.5)) <= 0
    assert certify(replace(bar, A=bar.A * 1e-6), spec, GRID).verdict == VIOLATED


def test_search_deterministic():
    spec = make_spec(mu=1.4, nu=0.5, l=0.5)
    assert suggest_parameters(spec, "SubcriticalSuper") == suggest_parameters(spec, "SubcriticalSuper")


def test_report_record_is_json():
    spec = make_spec(mu=2, nu=4, l=2)
    bar = suggest_parameters(spec, "BoundaryLayerSuper")
    rec = certify(bar, spec, GRID).to_record()
    back = json.loads(json.dumps(rec))
    assert back["family"] == "BoundaryLayerSuper" and back["verdict"] == CERTIFIED
    assert back["role"] == SUPER and back["param_A"] == bar.A
    assert all(not isinstance(v, (dict, list)) for v in back.values())


# ---------------------------------------------------------------- properties


@settings(max_examples=80, deadline=None)
@given(mu=st.floats(0.2, 3), l=st.floats(0.05, 3), alpha=st.floats(-1, 2), beta=st.floats(-1, 2))
def test_subcritical_constructor(mu, l, alpha, beta):
    ok = l + mu < 2 and alpha > 0 and beta > 0
    try:
        SubcriticalSuper(Exponents(mu, 0.5, l), alpha, beta, b=1.0)
    except InvalidBarrier:
        assert not ok
    else:
        assert ok


@settings(max_examples=80, deadline=None)
@given(nu=st.floats(0.1, 4), l=st.floats(1.05, 4), sigma=st.floats(0.1, 40))
def test_layer_sub_constructor(nu, l, sigma):
    mu = 2.0
    assume(abs(nu - (mu + l - 1)) > 1e-9)
    lo = 2 / (l - 1)
    ok = sigma > lo if nu <= mu else lo < sigma < 2 / (nu - mu)
    try:
        BoundaryLayerSub(Exponents(mu, nu, l), C=1.0, sigma=sigma, t0=1.0, gamma_depth=0.1)
    except InvalidBarrier:
        assert not ok
    else:
        assert ok


@settings(max_examples=80, deadline=None)
@given(g=st.floats(0.01, 0.99), nu=st.floats(0.05, 2), alpha=st.floats(0.01, 20))
def test_blowup_sub_constructor(g, nu, alpha):
    mu, l = 2.0, 2.0
    ok = nu < mu + g - 1 and g + mu > 2 and alpha > (1 - g) / (g + mu - 2)
    try:
        BlowupSub(Exponents(mu, nu, l), g, alpha, A=1.0, T=1.0, b=1.0)
    except InvalidBarrier:
        assert not ok
    else:
        assert ok


@settings(max_examples=60, deadline=None)
@given(eps=st.floats(0.001, 0.6), omega=st.floats(0.001, 0.6), gamma=st.floats(0.01, 3))
def test_layer_super_constructor(eps, omega, gamma):
    delta, rho, beta = 0.5, 1.0, 3.0
    ok = eps < omega < min(delta * rho, 1.0) and gamma < beta / 2
    try:
        BoundaryLayerSuper(Exponents(2, 4, 2), rho, eps, omega, beta, gamma, A=1.0, delta=delta)
    except InvalidBarrier:
        assert not ok
    else:
        assert ok


@pytest.mark.parametrize("make", [
    lambda e: BlowupSub(e, gamma_tilde=0.5, alpha=2.0, A=1.0, T=1.0, b=2.0),
    lambda e: BoundaryLayerSub(e, C=1.0, sigma=2.5, t0=1.0, gamma_depth=0.25),
])
def test_monotone_blowup_mu2(make):
    spec = make_spec(mu=2, nu=1, l=2, a=0.1)
    _monotone(make(Exponents.of(spec)), spec)


def test_monotone_blowup_exp():
    spec = make_spec(mu=2, nu=2, l=1, a=1.0)
    _monotone(ExpBlowupSub(Exponents.of(spec), B=1.0, alpha=2.0, T=1.0, b=1.0), spec)


def _monotone(bar, spec):
    edge = bar.window(spec)
    x = np.array([0.0, 0.1, 0.5])
    ts = edge * (1 - np.geomspace(1, 1e-7, 30))
    vals = np.array([evaluate(bar, spec, x, t) for t in ts])
    assert np.all(np.diff(vals, axis=0) >= 0)
    assert vals[-1].max() > 1e6 * vals[0].max()


@settings(max_examples=30, deadline=None)
@given(u0=st.floats(0.0, 20.0), superlinear=st.booleans())
def test_local_bound_dominates_data(u0, superlinear):
    # with l > 1 the quadratic zeta family only covers data up to about 1.2
    spec = make_spec(mu=2, nu=4, l=2, u0=min(u0, 1.2)) if superlinear else make_spec(mu=2, nu=1.5, l=0.5, u0=u0)
    u0 = spec.initial.c
    bar = suggest_parameters(spec, "LocalBound", n_probe=40, n_times=3)
    from pmnl.model import validate
    zeta = bar.zeta(validate(spec), GRID.centers)
    assert np.all(zeta >= max(1.0, u0))
    assert initial_ordering(bar, spec, GRID)


def test_families_registry():
    assert set(FAMILIES) == {"LocalBound", "SubcriticalSuper", "CriticalExpSuper", "StationarySuper",
                             "BoundaryLayerSuper", "BlowupSub", "ExpBlowupSub", "BoundaryLayerSub",
                             "OdeBarrier"}
