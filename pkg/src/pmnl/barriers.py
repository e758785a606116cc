"""Explicit super- and subsolution families and their numerical certification.

Every family is a frozen dataclass holding its parameters together with the
exponents it was built for, so the constructor can reject parameter tuples
that violate the family's inequalities.  Conditions that also involve the
domain, the kernel or the initial data are checked by :func:`certify`.

Sign conventions: with ``L u = u_t - Lap(u^mu) + a u^nu`` a supersolution
needs ``L u >= 0`` inside and ``du/dn >= int k u^l`` on the boundary; a
subsolution needs both reversed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import FamilyIncompatible, InvalidBarrier, OutsideValidityWindow, SearchExhausted
from .geometry import (Ball, Grid, Interval, build_grid, distance_to_boundary, kernel_matrix,
                       measures, solve_auxiliary_psi)
from .model import ProblemSpec, ValidatedSpec, compare, validate

SUPER = "super"
SUB = "sub"
CERTIFIED = "Certified"
VIOLATED = "Violated"

_MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class Exponents:
    mu: float | Fraction
    nu: float | Fraction
    l: float | Fraction

    @classmethod
    def of(cls, spec) -> Exponents:
        s = spec.spec if isinstance(spec, ValidatedSpec) else spec
        return cls(s.mu, s.nu, s.l)

    def floats(self) -> tuple[float, float, float]:
        return float(self.mu), float(self.nu), float(self.l)

    def rel(self, x, y) -> str:
        return compare(x, y)


def _require(cond: bool, msg: str):
    if not cond:
        raise InvalidBarrier(msg)


def _positive(**kw):
    for k, v in kw.items():
        _require(v is not None and float(v) > 0, f"{k} must be positive, got {v}")


# --------------------------------------------------------------------------
# families
# --------------------------------------------------------------------------

class _Family:
    role = SUPER

    @property
    def name(self) -> str:
        return type(self).__name__

    def params(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "exponents":
                out.update({k: float(x) for k, x in asdict(v).items()})
            elif v is not None:
                out[f.name] = float(v)
        return out

    # closed form pieces, overridden per family
    def window(self, spec) -> float:
        """Supremum of admissible times for evaluation."""
        return math.inf

    def certification_window(self, spec) -> float:
        return self.window(spec)

    def _psi(self, spec):
        return solve_auxiliary_psi(spec.domain, self.b, self.psi_min)

    def interior_mask(self, grid: Grid) -> np.ndarray:
        return np.ones(grid.n_cells, dtype=bool)

    def flux_mask(self, grid: Grid) -> np.ndarray:
        return np.ones(grid.n_cells, dtype=bool)

    def regularization(self, spec) -> float:
        """Constant subtracted from the operator (the ``a/m^nu`` source)."""
        return 0.0


def _psi_form(g_total, l):
    """``{(1-l) Phi}^(1/(1-l))`` for ``Phi > 0``."""
    return ((1.0 - l) * g_total) ** (1.0 / (1.0 - l))


@dataclass(frozen=True)
class LocalBound(_Family):
    """``w = [1 - alpha (mu-1) t]^(-1/(mu-1)) zeta``, ``zeta = c1 + c2 psi``.

    It bounds the regularized iterates for every ``m``; the residual keeps
    the ``a/m^nu`` source at its worst case ``m = 1``.
    """

    exponents: Exponents
    alpha: float
    c1: float
    c2: float
    b: float
    psi_min: float = 1.0

    def __post_init__(self):
        _positive(alpha=self.alpha, psi_min=self.psi_min)
        _require(self.c2 >= 0 and self.b >= 0, "c2 and b must be nonnegative")
        _require(self.c1 + self.c2 * self.psi_min >= 1, "zeta must be at least 1")
        _require(float(self.exponents.mu) > 1, "mu must exceed 1")

    def window(self, spec):
        mu = float(self.exponents.mu)
        return 1.0 / (self.alpha * (mu - 1.0))

    def certification_window(self, spec):
        return 0.5 * self.window(spec)

    def regularization(self, spec):
        return float(spec.a)

    def zeta(self, spec, x):
        return self.c1 + self.c2 * self._psi(spec).value(x)

    def _amp(self, t):
        mu = float(self.exponents.mu)
        return (1.0 - self.alpha * (mu - 1.0) * t) ** (-1.0 / (mu - 1.0))

    def value(self, spec, x, t):
        return self._amp(t) * self.zeta(spec, x)

    def time_derivative(self, spec, x, t):
        mu = float(self.exponents.mu)
        return self.alpha * self._amp(t) ** mu * self.zeta(spec, x)

    def normal_derivative(self, spec, t):
        psi = self._psi(spec)
        return np.full(len(_faces(spec.domain)), self._amp(t) * self.c2 * psi.normal_derivative)


@dataclass(frozen=True)
class SubcriticalSuper(_Family):
    """``{(1-l)[psi + (alpha t + beta)^q]}^(1/(1-l))``, ``q = (1-l)/(2-l-mu)``."""

    exponents: Exponents
    alpha: float
    beta: float
    b: float
    psi_min: float = 1.0

    def __post_init__(self):
        e = self.exponents
        _require(compare(e.l + e.mu, 2) == "<", "needs l + mu < 2")
        _positive(alpha=self.alpha, beta=self.beta, psi_min=self.psi_min)
        _require(self.b >= 0, "b must be nonnegative")

    def _q(self):
        mu, _, l = self.exponents.floats()
        return (1 - l) / (2 - l - mu)

    def value(self, spec, x, t):
        l = float(self.exponents.l)
        return _psi_form(self._psi(spec).value(x) + (self.alpha * t + self.beta) ** self._q(), l)

    def time_derivative(self, spec, x, t):
        l = float(self.exponents.l)
        q = self._q()
        return self.value(spec, x, t) ** l * self.alpha * q * (self.alpha * t + self.beta) ** (q - 1)

    def normal_derivative(self, spec, t):
        return _psi_boundary_flux(self, spec, t, float(self.exponents.l))


@dataclass(frozen=True)
class CriticalExpSuper(_Family):
    """``{(1-l)[psi + beta e^(alpha t)]}^(1/(1-l))`` for ``l + mu = 2``."""

    exponents: Exponents
    alpha: float
    beta: float
    b: float
    psi_min: float = 1.0

    def __post_init__(self):
        e = self.exponents
        _require(compare(e.l + e.mu, 2) == "=", "needs l + mu = 2")
        _positive(alpha=self.alpha, beta=self.beta, psi_min=self.psi_min)
        _require(self.b >= 0, "b must be nonnegative")

    def value(self, spec, x, t):
        l = float(self.exponents.l)
        return _psi_form(self._psi(spec).value(x) + self.beta * math.exp(self.alpha * t), l)

    def time_derivative(self, spec, x, t):
        l = float(self.exponents.l)
        return self.value(spec, x, t) ** l * self.alpha * self.beta * math.exp(self.alpha * t)

    def normal_derivative(self, spec, t):
        return _psi_boundary_flux(self, spec, t, float(self.exponents.l))


@dataclass(frozen=True)
class StationarySuper(_Family):
    """Time-independent supersolution.

    ``{(1-l)[psi + beta]}^(1/(1-l))`` when ``l < 1``; ``[psi + B]^(1/mu)``
    when ``l = 1`` and ``nu = mu``.
    """

    exponents: Exponents
    b: float
    beta: float | None = None
    B: float | None = None
    psi_min: float = 1.0

    def __post_init__(self):
        e = self.exponents
        _require(self.b >= 0, "b must be nonnegative")
        _positive(psi_min=self.psi_min)
        lrel = compare(e.l, 1)
        if lrel == "<":
            _require(compare(e.nu, e.mu + e.l - 1) != "<", "needs nu >= mu + l - 1")
            _require(self.B is None, "use beta when l < 1")
            _positive(beta=self.beta)
        elif lrel == "=":
            _require(compare(e.nu, e.mu) == "=", "needs nu = mu when l = 1")
            _require(self.beta is None, "use B when l = 1")
            _positive(B=self.B)
        else:
            raise InvalidBarrier("needs l < 1, or l = 1 with nu = mu")

    @property
    def _unit_l(self) -> bool:
        return compare(self.exponents.l, 1) == "="

    def value(self, spec, x, t):
        psi = self._psi(spec).value(x)
        if self._unit_l:
            return (psi + self.B) ** (1.0 / float(self.exponents.mu))
        return _psi_form(psi + self.beta, float(self.exponents.l))

    def time_derivative(self, spec, x, t):
        return np.zeros_like(np.asarray(x, dtype=float))

    def normal_derivative(self, spec, t):
        if self._unit_l:
            mu = float(self.exponents.mu)
            psi = self._psi(spec)
            ub = self.value(spec, np.array(_faces(spec.domain)), t)
            return psi.normal_derivative * ub ** (1.0 - mu) / mu
        return _psi_boundary_flux(self, spec, t, float(self.exponents.l))


@dataclass(frozen=True)
class BoundaryLayerSuper(_Family):
    """``u^mu = [(rho s + eps)^(-gamma) - omega^(-gamma)]_+^(beta/gamma) + A``.

    ``s`` is the distance to the boundary.  With ``nu = mu + l - 1`` and
    ``l > 1`` the exponent sits at its endpoint ``beta = 2 mu/(l-1)``.
    """

    exponents: Exponents
    rho: float
    eps: float
    omega: float
    beta: float
    gamma: float
    A: float
    delta: float

    def __post_init__(self):
        e = self.exponents
        mu, nu, l = e.floats()
        _positive(rho=self.rho, eps=self.eps, A=self.A, delta=self.delta, gamma=self.gamma)
        _require(self.eps < self.omega < min(self.delta * self.rho, 1.0),
                 "needs 0 < eps < omega < min(delta rho, 1)")
        _require(compare(e.l, 1) != "<", "needs l >= 1")
        critical = compare(e.nu, e.mu + e.l - 1) == "="
        _require(critical or compare(e.nu, e.mu + e.l - 1) == ">", "needs nu >= mu + l - 1")
        if critical:
            _require(l > 1, "the critical layer barrier needs l > 1")
            _require(math.isclose(self.beta, 2 * mu / (l - 1), rel_tol=1e-12),
                     "critical case fixes beta = 2 mu/(l-1)")
        else:
            lower = mu / l
            if nu > mu:
                lower = max(lower, 2 * mu / (nu - mu))
            _require(self.beta > lower, f"needs beta > {lower}")
            if l > 1:
                _require(self.beta < 2 * mu / (l - 1), "needs beta < 2 mu/(l-1)")
        _require(self.gamma < self.beta / 2, "needs 0 < gamma < beta/2")

    @property
    def layer_width(self) -> float:
        return (self.omega - self.eps) / self.rho

    def _bracket(self, s):
        s = np.asarray(s, dtype=float)
        return np.maximum((self.rho * s + self.eps) ** (-self.gamma) - self.omega ** (-self.gamma), 0.0)

    def power_mu(self, spec, x):
        s = distance_to_boundary(spec.domain, x)
        return self._bracket(s) ** (self.beta / self.gamma) + self.A

    def value(self, spec, x, t):
        return self.power_mu(spec, x) ** (1.0 / float(self.exponents.mu))

    def time_derivative(self, spec, x, t):
        return np.zeros_like(np.asarray(x, dtype=float))

    def normal_derivative(self, spec, t):
        mu = float(self.exponents.mu)
        b0 = self.eps ** (-self.gamma) - self.omega ** (-self.gamma)
        v0 = b0 ** (self.beta / self.gamma) + self.A
        d = (self.rho * self.beta / mu) * self.eps ** (-self.gamma - 1) \
            * b0 ** ((self.beta - self.gamma) / self.gamma) * v0 ** ((1 - mu) / mu)
        return np.full(len(_faces(spec.domain)), d)


@dataclass(frozen=True)
class BlowupSub(_Family):
    """``{(1-g)[psi + (T-t)^(-alpha) + A]}^(1/(1-g))`` with ``g = gamma_tilde < 1``."""

    role = SUB
    exponents: Exponents
    gamma_tilde: float
    alpha: float
    A: float
    T: float
    b: float
    psi_min: float = 1.0

    def __post_init__(self):
        e = self.exponents
        g = self.gamma_tilde
        _positive(gamma_tilde=g, A=self.A, T=self.T, b=self.b, psi_min=self.psi_min)
        _require(g < 1, "the closed form needs gamma_tilde < 1")
        critical = compare(e.l, 1) == "<" and compare(e.nu, e.mu + e.l - 1) == "="
        if critical:
            _require(math.isclose(g, float(e.l), rel_tol=1e-12), "critical case fixes gamma_tilde = l")
        else:
            _require(g < float(e.l), "needs gamma_tilde < l")
            _require(float(e.nu) < float(e.mu) + g - 1, "needs nu < mu + gamma_tilde - 1")
        _require(g + float(e.mu) > 2, "needs gamma_tilde + mu > 2")
        bound = (1 - g) / (g + float(e.mu) - 2)
        _require(self.alpha > bound, f"needs alpha > {bound}")

    def window(self, spec):
        return self.T

    def value(self, spec, x, t):
        if t >= self.T:
            raise OutsideValidityWindow(f"t={t} outside [0, {self.T})")
        return _psi_form(self._psi(spec).value(x) + (self.T - t) ** (-self.alpha) + self.A, self.gamma_tilde)

    def time_derivative(self, spec, x, t):
        return self.value(spec, x, t) ** self.gamma_tilde * self.alpha * (self.T - t) ** (-self.alpha - 1)

    def normal_derivative(self, spec, t):
        return _psi_boundary_flux(self, spec, t, self.gamma_tilde)


@dataclass(frozen=True)
class ExpBlowupSub(_Family):
    """``B (T-t)^(-alpha) exp(psi)`` for ``l = 1``, ``nu = mu``."""

    role = SUB
    exponents: Exponents
    B: float
    alpha: float
    T: float
    b: float
    psi_min: float = 1.0

    def __post_init__(self):
        e = self.exponents
        _require(compare(e.l, 1) == "=" and compare(e.nu, e.mu) == "=", "needs l = 1 and nu = mu")
        _require(self.B >= 1, "needs B >= 1")
        _positive(T=self.T, b=self.b, psi_min=self.psi_min)
        bound = 1.0 / (float(e.mu) - 1)
        _require(self.alpha > bound, f"needs alpha > {bound}")

    def window(self, spec):
        return self.T

    def value(self, spec, x, t):
        if t >= self.T:
            raise OutsideValidityWindow(f"t={t} outside [0, {self.T})")
        return self.B * (self.T - t) ** (-self.alpha) * np.exp(self._psi(spec).value(x))

    def time_derivative(self, spec, x, t):
        return self.alpha * self.value(spec, x, t) / (self.T - t)

    def normal_derivative(self, spec, t):
        return _psi_boundary_flux(self, spec, t, 1.0)


@dataclass(frozen=True)
class BoundaryLayerSub(_Family):
    """``C (t0 + s - t)^(-sigma)`` on the strip ``s < gamma_depth``."""

    role = SUB
    exponents: Exponents
    C: float
    sigma: float
    t0: float
    gamma_depth: float

    def __post_init__(self):
        e = self.exponents
        mu, nu, l = e.floats()
        _positive(C=self.C, t0=self.t0, gamma_depth=self.gamma_depth)
        _require(l > 1, "needs l > 1")
        if compare(e.nu, e.mu + e.l - 1) == "=":
            _require(math.isclose(self.sigma, 2 / (l - 1), rel_tol=1e-12),
                     "critical case fixes sigma = 2/(l-1)")
        elif nu <= mu:
            _require(self.sigma > 2 / (l - 1), "needs sigma > 2/(l-1)")
        else:
            _require(2 / (l - 1) < self.sigma < 2 / (nu - mu), "needs 2/(l-1) < sigma < 2/(nu-mu)")

    def window(self, spec):
        return self.t0

    def interior_mask(self, grid):
        return grid.distance_to_boundary < self.gamma_depth

    flux_mask = interior_mask

    def value(self, spec, x, t):
        s = distance_to_boundary(spec.domain, x)
        arg = self.t0 + s - t
        if np.any(arg <= 0):
            raise OutsideValidityWindow(f"t0 + s - t must be positive (t={t})")
        return self.C * arg ** (-self.sigma)

    def time_derivative(self, spec, x, t):
        s = distance_to_boundary(spec.domain, x)
        return self.sigma * self.C * (self.t0 + s - t) ** (-self.sigma - 1)

    def normal_derivative(self, spec, t):
        if t >= self.t0:
            raise OutsideValidityWindow(f"t={t} outside [0, {self.t0})")
        return np.full(len(_faces(spec.domain)), self.sigma * self.C * (self.t0 - t) ** (-self.sigma - 1))


@dataclass(frozen=True)
class OdeBarrier(_Family):
    """Spatially constant ``w`` with ``w' = -2 a w^nu``.

    ``A`` sets ``w(0)`` when ``nu <= 1``; ``t0`` shifts time when ``nu > 1``.
    """

    role = SUB
    exponents: Exponents
    A: float | None = None
    t0: float | None = None

    def __post_init__(self):
        nu = self.exponents.nu
        if compare(nu, 1) == ">":
            _positive(t0=self.t0)
            _require(self.A is None, "use t0 when nu > 1")
        else:
            _require(self.A is not None and self.A > 1, "needs A > 1 when nu <= 1")
            _require(self.t0 is None, "use A when nu <= 1")

    def window(self, spec):
        nu, a = float(self.exponents.nu), float(spec.a)
        if nu < 1:
            return self.A ** (1 - nu) / (2 * (1 - nu) * a)
        return math.inf

    def certification_window(self, spec):
        return min(self.window(spec), 1.0 / (2.0 * float(spec.a)))

    def amplitude(self, spec, t) -> float:
        nu, a = float(self.exponents.nu), float(spec.a)
        if t > self.window(spec):
            raise OutsideValidityWindow(f"t={t} beyond extinction time {self.window(spec)}")
        rel = compare(self.exponents.nu, 1)
        if rel == "<":
            return max(self.A ** (1 - nu) - 2 * (1 - nu) * a * t, 0.0) ** (1 / (1 - nu))
        if rel == "=":
            return self.A * math.exp(-2 * a * t)
        return (2 * (nu - 1) * a * (t + self.t0)) ** (-1 / (nu - 1))

    def value(self, spec, x, t):
        return np.full_like(np.asarray(x, dtype=float), self.amplitude(spec, t))

    def time_derivative(self, spec, x, t):
        nu, a = float(self.exponents.nu), float(spec.a)
        return np.full_like(np.asarray(x, dtype=float), -2 * a * self.amplitude(spec, t) ** nu)

    def normal_derivative(self, spec, t):
        return np.zeros(len(_faces(spec.domain)))


BarrierSpec = Union[LocalBound, SubcriticalSuper, CriticalExpSuper, StationarySuper, BoundaryLayerSuper,
                    BlowupSub, ExpBlowupSub, BoundaryLayerSub, OdeBarrier]

FAMILIES = {cls.__name__: cls for cls in (LocalBound, SubcriticalSuper, CriticalExpSuper, StationarySuper,
                                           BoundaryLayerSuper, BlowupSub, ExpBlowupSub, BoundaryLayerSub,
                                           OdeBarrier)}


def _faces(domain) -> tuple[float, ...]:
    if isinstance(domain, Interval):
        return (domain.x_left, domain.x_right)
    return (domain.radius,)


def _psi_boundary_flux(barrier, spec, t, power):
    # u^(1-p) is affine in psi, so du/dn = u^p dpsi/dn
    psi = barrier._psi(spec)
    ub = barrier.value(spec, np.array(_faces(spec.domain)), t)
    return psi.normal_derivative * ub**power


# --------------------------------------------------------------------------
# evaluation and residuals
# --------------------------------------------------------------------------

def _check(barrier, spec) -> ValidatedSpec:
    vspec = validate(spec)
    if Exponents.of(vspec) != barrier.exponents and Exponents.of(vspec).floats() != barrier.exponents.floats():
        raise InvalidBarrier(f"{barrier.name} was built for exponents {barrier.exponents}, "
                             f"not {Exponents.of(vspec)}")
    return vspec


def _check_time(barrier, spec, t):
    if t < 0 or t >= barrier.window(spec) and not (math.isinf(barrier.window(spec))):
        if not (isinstance(barrier, OdeBarrier) and t <= barrier.window(spec)):
            raise OutsideValidityWindow(f"{barrier.name}: t={t} outside [0, {barrier.window(spec)})")


def evaluate(barrier: BarrierSpec, spec, x, t: float):
    """Closed-form value at domain coordinates ``x`` (radius for a ball) and time ``t``.

    Layer families depend on ``x`` through the distance to the boundary.
    """
    vspec = _check(barrier, spec)
    _check_time(barrier, vspec, t)
    out = barrier.value(vspec, np.asarray(x, dtype=float), t)
    return float(out) if np.ndim(out) == 0 else out


def _laplacian(fn, domain, x, eta):
    """Central-difference Laplacian of a radial / 1D profile with step ``eta``."""
    if isinstance(domain, Ball):
        lo, hi = fn(np.abs(x - eta)), fn(x + eta)
        mid = fn(x)
        lap = (hi - 2 * mid + lo) / eta**2
        return lap + (domain.space_dim - 1) / x * (hi - lo) / (2 * eta)
    return (fn(x + eta) - 2 * fn(x) + fn(x - eta)) / eta**2


def _interior(barrier, vspec, x, t, eta):
    mu, nu = float(vspec.mu), float(vspec.nu)
    a = float(vspec.a)
    if isinstance(barrier, BoundaryLayerSuper):
        vfun = lambda z: barrier.power_mu(vspec, z)
    else:
        vfun = lambda z: barrier.value(vspec, z, t) ** mu
    u = barrier.value(vspec, x, t)
    ut = barrier.time_derivative(vspec, x, t)
    lap = _laplacian(vfun, vspec.domain, x, eta)
    absorb = a * u**nu
    reg = barrier.regularization(vspec)
    scale = np.abs(ut) + np.abs(lap) + absorb + reg
    return ut - lap + absorb - reg, scale


def residual_interior(barrier: BarrierSpec, spec, grid: Grid, t: float, eta: float | None = None):
    """``u_t - Lap(u^mu) + a u^nu`` at the cell centres of ``grid``.

    The time derivative is analytic; the Laplacian is a central difference
    with step ``eta`` (default ``h/2``, which keeps every stencil inside the
    domain).  Cells outside the family's region are ``nan``.
    """
    vspec = _check(barrier, spec)
    _check_time(barrier, vspec, t)
    eta = grid.h / 2 if eta is None else eta
    r, _ = _interior(barrier, vspec, grid.centers, t, eta)
    r = np.asarray(r, dtype=float).copy()
    r[~barrier.interior_mask(grid)] = np.nan
    return r


def _flux_integral(barrier, vspec, grid, t):
    l = float(vspec.l)
    u = barrier.value(vspec, grid.centers, t)
    mask = barrier.flux_mask(grid)
    k = kernel_matrix(grid, vspec.kernel)
    return k[:, mask] @ (grid.weights[mask] * u[mask] ** l)


def residual_boundary(barrier: BarrierSpec, spec, grid: Grid, t: float):
    """Outward normal derivative minus the nonlocal flux, one value per boundary face."""
    vspec = _check(barrier, spec)
    _check_time(barrier, vspec, t)
    return barrier.normal_derivative(vspec, t) - _flux_integral(barrier, vspec, grid, t)


# --------------------------------------------------------------------------
# certification
# --------------------------------------------------------------------------

@dataclass
class BarrierCheckReport:
    family: str
    role: str
    parameters: dict
    interior_residual: float
    boundary_residual: float
    interior_tolerance: float
    boundary_tolerance: float
    initial_ordered: bool | None
    verdict: str
    location: dict = field(default_factory=dict)
    n_cells: int = 0
    n_times: int = 0

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_record(self) -> dict:
        """Flat JSON-ready record."""
        rec = {"family": self.family, "role": self.role, "verdict": self.verdict,
               "interior_residual": self.interior_residual, "boundary_residual": self.boundary_residual,
               "interior_tolerance": self.interior_tolerance, "boundary_tolerance": self.boundary_tolerance,
               "initial_ordered": self.initial_ordered, "n_cells": self.n_cells, "n_times": self.n_times}
        rec.update({f"param_{k}": v for k, v in self.parameters.items()})
        rec.update({f"location_{k}": v for k, v in self.location.items()})
        return rec


def default_times(barrier: BarrierSpec, spec, n: int = 9) -> np.ndarray:
    w = barrier.certification_window(spec)
    if math.isinf(w):
        return np.linspace(0.0, float(spec.horizon), n)
    if isinstance(barrier, (LocalBound, OdeBarrier)):
        return np.linspace(0.0, w, n)
    # the window end itself is singular for the blow-up families
    return w * (1.0 - np.geomspace(1.0, 1e-3, n))


_ROUNDOFF = 1e-9


def _sample_checks(barrier, vspec, grid, grid2, t):
    eta = grid.h / 2
    r1, scale = _interior(barrier, vspec, grid.centers, t, eta)
    r2, _ = _interior(barrier, vspec, grid.centers, t, eta / 2)
    mask = barrier.interior_mask(grid)
    tol_i = 10 * np.abs(r1 - r2) + _ROUNDOFF * scale
    nd = barrier.normal_derivative(vspec, t)
    f1 = _flux_integral(barrier, vspec, grid, t)
    f2 = _flux_integral(barrier, vspec, grid2, t)
    b1 = nd - f1
    tol_b = 10 * np.abs(f1 - f2) + _ROUNDOFF * (np.abs(nd) + np.abs(f1))
    return r1[mask], tol_i[mask], grid.centers[mask], b1, tol_b


def initial_ordering(barrier: BarrierSpec, spec, grid: Grid) -> bool:
    """Whether the barrier is ordered against the initial data in its role's direction."""
    vspec = validate(spec)
    x = np.concatenate([grid.centers, np.array(_faces(vspec.domain))])
    u0 = vspec.initial(x)
    if isinstance(barrier, LocalBound):
        return bool(np.all(barrier.zeta(vspec, x) >= max(1.0, vspec.u0_sup)))
    if isinstance(barrier, BoundaryLayerSub):
        x = x[distance_to_boundary(vspec.domain, x) < barrier.gamma_depth]
        u0 = vspec.initial(x)
    w = barrier.value(vspec, x, 0.0)
    slack = 1e-12 * np.maximum(np.abs(w), 1.0)
    if barrier.role == SUPER:
        return bool(np.all(w >= u0 - slack))
    return bool(np.all(w <= u0 + slack))


def certify(barrier: BarrierSpec, spec, grid: Grid, time_samples=None) -> BarrierCheckReport:
    """Check the interior and boundary inequalities at every time sample.

    The interior margin at each point is ten times the change of the
    residual when the difference step is halved; the boundary margin is ten
    times the change of the flux quadrature under one mesh doubling.  A
    supersolution must also dominate the initial data; for subsolutions the
    ordering is reported but is a condition on the data, not the barrier.
    """
    vspec = _check(barrier, spec)
    times = default_times(barrier, vspec) if time_samples is None else np.asarray(time_samples, float)
    grid2 = build_grid(grid.domain, 2 * grid.n_cells)
    sign = 1.0 if barrier.role == SUPER else -1.0
    worst_i = worst_b = math.inf
    rec_i = rec_b = (math.nan, math.nan, math.nan, math.nan)
    failure = None
    for t in times:
        _check_time(barrier, vspec, float(t))
        r, tol_i, xs, bres, tol_b = _sample_checks(barrier, vspec, grid, grid2, float(t))
        if len(r):
            k = int(np.argmin(sign * r))
            if sign * r[k] < worst_i:
                worst_i = sign * r[k]
                rec_i = (float(r[k]), float(tol_i[k]), float(xs[k]), float(t))
            bad = sign * r + tol_i < 0
            if failure is None and np.any(bad):
                j = int(np.argmax(bad))
                failure = dict(kind="interior", x=float(xs[j]), t=float(t), residual=float(r[j]))
        k = int(np.argmin(sign * bres))
        if sign * bres[k] < worst_b:
            worst_b = sign * bres[k]
            rec_b = (float(bres[k]), float(tol_b[k]), float(_faces(vspec.domain)[k]), float(t))
        bad = sign * bres + tol_b < 0
        if failure is None and np.any(bad):
            j = int(np.argmax(bad))
            failure = dict(kind="boundary", x=float(_faces(vspec.domain)[j]), t=float(t),
                           residual=float(bres[j]))
    ordered = initial_ordering(barrier, vspec, grid)
    if failure is None and barrier.role == SUPER and not ordered:
        failure = dict(kind="initial", x=math.nan, t=0.0, residual=math.nan)
    if failure is None:
        location = dict(kind="interior", x=rec_i[2], t=rec_i[3])
    else:
        location = failure
    return BarrierCheckReport(
        barrier.name, barrier.role, barrier.params(),
        rec_i[0], rec_b[0], rec_i[1], rec_b[1], ordered,
        CERTIFIED if failure is None else VIOLATED, location, grid.n_cells, len(times))


# --------------------------------------------------------------------------
# parameter search
# --------------------------------------------------------------------------

def _doublings(start: float):
    v = start
    for _ in range(_MAX_DOUBLINGS):
        yield v
        v *= 2.0


def _incompatible(family: str, why: str):
    raise FamilyIncompatible(f"{family}: {why}", family=family)


def compatible(spec, family: str) -> None:
    """Raise ``FamilyIncompatible`` unless the exponents admit the family."""
    e = Exponents.of(spec)
    lpm = compare(e.l + e.mu, 2)
    crit = compare(e.nu, e.mu + e.l - 1)
    lrel = compare(e.l, 1)
    mu, nu, l = e.floats()
    if family not in FAMILIES:
        raise FamilyIncompatible(f"unknown family {family!r}; known: {sorted(FAMILIES)}", family=family)
    if family == "SubcriticalSuper" and lpm != "<":
        _incompatible(family, "needs l + mu < 2")
    if family == "CriticalExpSuper" and lpm != "=":
        _incompatible(family, "needs l + mu = 2")
    if family == "StationarySuper":
        ok = (lrel == "<" and crit != "<") or (lrel == "=" and compare(e.nu, e.mu) == "=")
        if not ok:
            _incompatible(family, "needs l < 1 with nu >= mu + l - 1, or l = 1 with nu = mu")
    if family == "BoundaryLayerSuper":
        ok = (lrel != "<" and crit == ">") or (lrel == ">" and crit == "=")
        if not ok:
            _incompatible(family, "needs l >= 1 with nu > mu + l - 1, or l > 1 with nu = mu + l - 1")
    if family == "BlowupSub":
        if lpm != ">":
            _incompatible(family, "needs l + mu > 2")
        if not (lrel == "<" and crit == "="):
            lo, hi = max(0.0, nu - mu + 1, 2 - mu), min(l, 1.0)
            if crit != "<" or not lo < hi:
                _incompatible(family, "no gamma_tilde with max(0, nu-mu+1, 2-mu) < gamma_tilde < min(l, 1)")
    if family == "ExpBlowupSub" and not (lrel == "=" and compare(e.nu, e.mu) == "="):
        _incompatible(family, "needs l = 1 and nu = mu")
    if family == "BoundaryLayerSub" and not (lrel == ">" and crit != ">"):
        _incompatible(family, "needs l > 1 and nu <= mu + l - 1")


def _probe(vspec, n_probe):
    return build_grid(vspec.domain, n_probe)


def suggest_parameters(spec, family: str, geometry=None, u0_bound: float | None = None,
                       n_probe: int = 200, n_times: int = 9) -> BarrierSpec:
    """Search the family's free constants until :func:`certify` passes on a probe grid.

    Scalars are found by doubling (or halving) from fixed starting values in
    a fixed order, so the result is deterministic.  ``u0_bound`` overrides
    the bound on the data used by the search (sup for supersolutions, inf
    for the ODE barrier).
    """
    vspec = validate(spec)
    compatible(vspec, family)
    geometry = geometry or measures(vspec.domain)
    grid = _probe(vspec, n_probe)
    e = Exponents.of(vspec)

    def ok(barrier):
        times = default_times(barrier, vspec, n_times)
        return certify(barrier, vspec, grid, times).certified

    search = _SEARCHES[family]
    found = search(vspec, e, geometry, u0_bound, ok)
    if found is None:
        raise SearchExhausted(f"{family}: no certified parameters within {_MAX_DOUBLINGS} doublings",
                              family=family)
    return found


def _k_sup(vspec):
    return max(float(vspec.K_inf), 0.0)


def _search_local(vspec, e, geo, u0_bound, ok):
    mu, _, l = e.floats()
    top = max(1.0, vspec.u0_sup if u0_bound is None else u0_bound)
    for c2 in (2.0 ** k for k in range(-20, 40)):
        # a small psi offset lets the slope dominate the boundary integral
        zeta_probe = LocalBound(e, alpha=1.0, c1=top, c2=c2, b=1.0, psi_min=2.0**-20)
        x = np.linspace(*_extent(vspec.domain), 513)
        z = zeta_probe.zeta(vspec, x)
        vfun = lambda y: zeta_probe.zeta(vspec, y) ** mu
        lap = _laplacian(vfun, vspec.domain, x[1:-1] if isinstance(vspec.domain, Interval) else x[1:],
                         1e-4)
        zz = z[1:-1] if isinstance(vspec.domain, Interval) else z[1:]
        alpha = 2.0 * float(np.max(np.abs(lap) / zz)) + 1e-3
        cand = replace(zeta_probe, alpha=alpha)
        if ok(cand):
            return cand
    return None


def _extent(domain):
    if isinstance(domain, Interval):
        return domain.x_left, domain.x_right
    return 0.0, domain.radius


def _search_psi_super(cls):
    def run(vspec, e, geo, u0_bound, ok):
        b0 = max(_k_sup(vspec) * geo.perim, 1e-3)
        for fb in (1.01, 1.1, 1.5, 2.0, 4.0, 8.0):
            for k in range(_MAX_DOUBLINGS):
                v = 2.0**k
                cand = cls(e, alpha=v, beta=v, b=b0 * fb)
                if ok(cand):
                    return cand
        return None
    return run


def _search_stationary(vspec, e, geo, u0_bound, ok):
    unit = compare(e.l, 1) == "="
    kp = _k_sup(vspec) * geo.perim
    b_list = [max(kp, 1e-3) * f for f in (1.01, 1.05, 1.1, 1.25, 1.5, 2.0, 4.0)]
    if unit:
        b_list = [float(vspec.mu) * kp * f for f in (1.01, 1.1, 1.5, 2.0, 4.0, 8.0)] or b_list
    for psi_min in (1.0, 2.0**-6):
        for b in b_list:
            if b <= 0:
                continue
            for v in _doublings(2.0**-10):
                cand = StationarySuper(e, b=b, B=v, psi_min=psi_min) if unit else \
                    StationarySuper(e, b=b, beta=v, psi_min=psi_min)
                if ok(cand):
                    return cand
    return None


def _search_layer_super(vspec, e, geo, u0_bound, ok):
    mu, nu, l = e.floats()
    delta = 0.5 * vspec.domain.inradius
    rho = 1.0
    omega = 0.5 * min(delta * rho, 1.0)
    if compare(e.nu, e.mu + e.l - 1) == "=":
        beta = 2 * mu / (l - 1)
    else:
        lower = max(mu / l, 2 * mu / (nu - mu) if nu > mu else 0.0)
        upper = 2 * mu / (l - 1) if l > 1 else lower + 2.0
        beta = 0.5 * (lower + upper)
    gamma = beta / 4
    top = vspec.u0_sup if u0_bound is None else u0_bound
    a_min = max(top, 1.0) ** mu
    eps = omega / 2
    for _ in range(_MAX_DOUBLINGS):
        for A in _doublings(a_min):
            cand = BoundaryLayerSuper(e, rho, eps, omega, beta, gamma, A, delta)
            rep_ok = ok(cand)
            if rep_ok:
                return cand
            if not _interior_fails(cand, vspec):
                break  # interior fine, boundary needs a thinner layer
        eps /= 2
    return None


def _interior_fails(barrier, vspec, n=200):
    grid = build_grid(vspec.domain, n)
    r = residual_interior(barrier, vspec, grid, 0.0)
    r2 = residual_interior(barrier, vspec, grid, 0.0, grid.h / 4)
    tol = 10 * np.abs(r - r2)
    sign = 1.0 if barrier.role == SUPER else -1.0
    return bool(np.nanmin(sign * r + tol) < 0)


def _gamma_candidates(e):
    mu, nu, l = e.floats()
    if compare(e.l, 1) == "<" and compare(e.nu, e.mu + e.l - 1) == "=":
        return [l]
    lo, hi = max(0.0, nu - mu + 1, 2 - mu), min(l, 1.0)
    return [lo + f * (hi - lo) for f in (0.5, 0.25, 0.75, 0.125, 0.875)]


def _search_blowup(vspec, e, geo, u0_bound, ok):
    # psi and A enter only through psi + A, so psi is pinned near zero and A
    # carries the level; among feasible (b, A) keep the smallest initial sup
    mu = float(e.mu)
    psi_min = 2.0**-10
    for g in _gamma_candidates(e):
        alpha = 2.0 * (1 - g) / (g + mu - 2)
        best, best_sup, since = None, math.inf, 0
        for b in _doublings(2.0**-6):
            for A in _doublings(2.0**-10):
                cand = BlowupSub(e, g, alpha, A, T=1.0, b=b, psi_min=psi_min)
                if ok(cand):
                    sup = float(cand.value(vspec, np.array(_faces(vspec.domain)), 0.0).max())
                    if sup < best_sup:
                        best, best_sup, since = cand, sup, 0
                    else:
                        since += 1
                    break
                if A > 2.0**40:
                    break
            if since >= 3 or b > 2.0**30:
                break
        if best is not None:
            return best
    return None


def _search_exp_blowup(vspec, e, geo, u0_bound, ok):
    mu = float(e.mu)
    a = float(vspec.a)
    alpha = 2.0 / (mu - 1)
    for f in (1.5, 1.25, 1.1, 1.05, 1.01, 2.0, 4.0):
        b = f * a / mu
        for B in _doublings(1.0):
            cand = ExpBlowupSub(e, B, alpha, T=1.0, b=b)
            if ok(cand):
                return cand
    return None


def _search_layer_sub(vspec, e, geo, u0_bound, ok):
    mu, nu, l = e.floats()
    if compare(e.nu, e.mu + e.l - 1) == "=":
        sigma = 2 / (l - 1)
    elif nu <= mu:
        sigma = 2 / (l - 1) + 0.5
    else:
        sigma = 0.5 * (2 / (l - 1) + 2 / (nu - mu))
    depth = 0.25 * vspec.domain.inradius
    t0 = 1.0
    for _ in range(_MAX_DOUBLINGS):
        for C in _doublings(2.0**-20):
            cand = BoundaryLayerSub(e, C, sigma, t0, depth)
            if ok(cand):
                return cand
            if C > 2.0**20:
                break
        t0 /= 2
    return None


def _search_ode(vspec, e, geo, u0_bound, ok):
    low = vspec.u0_inf if u0_bound is None else u0_bound
    nu, a = float(e.nu), float(vspec.a)
    if compare(e.nu, 1) == ">":
        if low <= 0:
            return None
        t0 = low ** (-(nu - 1)) / (2 * (nu - 1) * a)
        cand = OdeBarrier(e, t0=t0)
    else:
        if low <= 1:
            return None
        cand = OdeBarrier(e, A=low)
    return cand if ok(cand) else None


_SEARCHES = {
    "LocalBound": _search_local,
    "SubcriticalSuper": _search_psi_super(SubcriticalSuper),
    "CriticalExpSuper": _search_psi_super(CriticalExpSuper),
    "StationarySuper": _search_stationary,
    "BoundaryLayerSuper": _search_layer_super,
    "BlowupSub": _search_blowup,
    "ExpBlowupSub": _search_exp_blowup,
    "BoundaryLayerSub": _search_layer_sub,
    "OdeBarrier": _search_ode,
}
