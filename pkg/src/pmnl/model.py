"""Problem data for ``u_t = Lap(u^mu) - a u^nu`` with the nonlocal flux condition
``du/dn = int_Omega k(x, y) u(y)^l dy`` on the boundary and ``u(., 0) = u0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from numbers import Rational
from typing import Union

import numpy as np

from .errors import ExponentOutOfRange, NegativeInitialData, NegativeKernel
from .geometry import Ball, DomainRef, Interval

Real = Union[float, int, Fraction]

REL_TOL = 1e-12
_PROBE_POINTS = 2049


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantKernel:
    k0: float

    def sample(self, x_faces, y, domain) -> np.ndarray:
        return np.full((len(x_faces), len(y)), float(self.k0))

    def bounds(self, domain) -> tuple[float, float]:
        return float(self.k0), float(self.k0)


@dataclass(frozen=True)
class SpaceProductKernel:
    """``k(x, y) = boundary[face] * p(y)``, ``p`` a polynomial in the coordinate.

    ``interior`` lists polynomial coefficients in ascending order.  A single
    ``boundary`` entry is broadcast to every face.
    """

    boundary: tuple[float, ...]
    interior: tuple[float, ...] = (1.0,)

    def _faces(self, n_faces: int) -> np.ndarray:
        b = np.asarray(self.boundary, dtype=float)
        if b.size == 1:
            return np.full(n_faces, b[0])
        if b.size != n_faces:
            raise ValueError(f"kernel has {b.size} boundary weights, domain has {n_faces} faces")
        return b

    def profile(self, y) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(y, dtype=float), self.interior)

    def sample(self, x_faces, y, domain) -> np.ndarray:
        return np.outer(self._faces(len(x_faces)), self.profile(y))

    def bounds(self, domain) -> tuple[float, float]:
        p = self.profile(_probe(domain))
        f = self._faces(2 if isinstance(domain, Interval) else 1)
        hi = float(max(f.max() * p.max(), f.min() * p.max()))
        lo = float(min(f.min() * p.min(), f.max() * p.min()))
        return hi, lo


@dataclass(frozen=True)
class TabulatedKernel:
    """Kernel rows per boundary face, tabulated on ``nodes`` and linearly interpolated."""

    nodes: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]

    def sample(self, x_faces, y, domain) -> np.ndarray:
        rows = np.asarray(self.values, dtype=float)
        if rows.shape[0] == 1:
            rows = np.repeat(rows, len(x_faces), axis=0)
        if rows.shape[0] != len(x_faces):
            raise ValueError(f"kernel has {rows.shape[0]} rows, domain has {len(x_faces)} faces")
        return np.vstack([np.interp(y, self.nodes, r) for r in rows])

    def bounds(self, domain) -> tuple[float, float]:
        v = np.asarray(self.values, dtype=float)
        return float(v.max()), float(v.min())


Kernel = Union[ConstantKernel, SpaceProductKernel, TabulatedKernel]


# --------------------------------------------------------------------------
# initial data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantValue:
    c: float

    def __call__(self, x) -> np.ndarray:
        return np.full_like(np.asarray(x, dtype=float), float(self.c))


@dataclass(frozen=True)
class Sampled:
    """Piecewise-linear data through ``(nodes, values)``; constant beyond the ends."""

    nodes: tuple[float, ...]
    values: tuple[float, ...]

    def __call__(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.nodes, self.values)


_CLOSED_FORMS = {
    # name: (required parameters, evaluator)
    "gaussian": (("amplitude", "center", "width"),
                 lambda x, p: p["amplitude"] * np.exp(-((x - p["center"]) / p["width"]) ** 2)),
    "barenblatt_cap": (("amplitude", "center", "width"),
                       lambda x, p: p["amplitude"] * np.clip(1 - ((x - p["center"]) / p["width"]) ** 2, 0, None)),
    "linear": (("c0", "c1"), lambda x, p: p["c0"] + p["c1"] * x),
    "cosine": (("mean", "amplitude", "wavenumber"),
               lambda x, p: p["mean"] + p["amplitude"] * np.cos(p["wavenumber"] * x)),
}


@dataclass(frozen=True)
class ClosedForm:
    name: str
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.name not in _CLOSED_FORMS:
            raise ValueError(f"unknown closed form {self.name!r}; known: {sorted(_CLOSED_FORMS)}")
        missing = set(_CLOSED_FORMS[self.name][0]) - dict(self.params).keys()
        if missing:
            raise ValueError(f"closed form {self.name!r} missing parameters {sorted(missing)}")

    def __call__(self, x) -> np.ndarray:
        return _CLOSED_FORMS[self.name][1](np.asarray(x, dtype=float), dict(self.params))


InitialData = Union[ConstantValue, Sampled, ClosedForm]


def _probe(domain: DomainRef) -> np.ndarray:
    if isinstance(domain, Interval):
        return np.linspace(domain.x_left, domain.x_right, _PROBE_POINTS)
    return np.linspace(0.0, domain.radius, _PROBE_POINTS)


def initial_bounds(initial: InitialData, domain: DomainRef) -> tuple[float, float]:
    if isinstance(initial, ConstantValue):
        return float(initial.c), float(initial.c)
    x = _probe(domain)
    if isinstance(initial, Sampled):
        x = np.concatenate([x, np.clip(initial.nodes, x[0], x[-1])])
    v = initial(x)
    return float(np.max(v)), float(np.min(v))


# --------------------------------------------------------------------------
# problem
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    mu: Real
    nu: Real
    a: Real
    l: Real
    kernel: Kernel
    domain: DomainRef
    initial: InitialData
    horizon: float

    def with_initial(self, initial: InitialData) -> ProblemSpec:
        return replace(self, initial=initial)


@dataclass(frozen=True)
class ValidatedSpec:
    """A checked :class:`ProblemSpec` with kernel and data bounds cached."""

    spec: ProblemSpec
    K_inf: float
    k0: float
    u0_sup: float
    u0_inf: float

    def __getattr__(self, name):
        # forward field access (mu, nu, domain, ...) to the wrapped spec
        if name.startswith("__") or name == "spec":
            raise AttributeError(name)
        return getattr(self.spec, name)

    def floats(self) -> tuple[float, float, float, float]:
        s = self.spec
        return float(s.mu), float(s.nu), float(s.a), float(s.l)


def validate(spec: ProblemSpec | ValidatedSpec) -> ValidatedSpec:
    if isinstance(spec, ValidatedSpec):
        spec = spec.spec
    for name in ("mu", "nu", "a", "l", "horizon"):
        v = getattr(spec, name)
        if not math.isfinite(float(v)):
            raise ExponentOutOfRange(f"{name} must be finite, got {v}", field=name)
    if not spec.mu > 1:
        raise ExponentOutOfRange(f"mu must exceed 1, got {spec.mu}", field="mu")
    for name in ("nu", "a", "l", "horizon"):
        if not getattr(spec, name) > 0:
            raise ExponentOutOfRange(f"{name} must be positive, got {getattr(spec, name)}", field=name)
    K_inf, k0 = spec.kernel.bounds(spec.domain)
    if not (math.isfinite(K_inf) and math.isfinite(k0)):
        raise NegativeKernel("kernel must be bounded")
    if k0 < 0:
        raise NegativeKernel(f"kernel takes negative value {k0}")
    u_sup, u_inf = initial_bounds(spec.initial, spec.domain)
    if not math.isfinite(u_sup):
        raise NegativeInitialData("initial data must be bounded")
    if u_inf < 0:
        raise NegativeInitialData(f"initial data takes negative value {u_inf}")
    return ValidatedSpec(spec, K_inf, k0, u_sup, u_inf)


# --------------------------------------------------------------------------
# exponent relations
# --------------------------------------------------------------------------

def compare(x: Real, y: Real) -> str:
    """Three-way comparison returning ``'<'``, ``'='`` or ``'>'``.

    Exact when both sides are rationals, otherwise ties within a relative
    tolerance of 1e-12 count as equality.
    """
    if isinstance(x, Rational) and isinstance(y, Rational):
        return "<" if x < y else ">" if x > y else "="
    fx, fy = float(x), float(y)
    if abs(fx - fy) <= REL_TOL * max(abs(fx), abs(fy), 1.0):
        return "="
    return "<" if fx < fy else ">"


def _exact(v: Real) -> Real:
    return v if isinstance(v, Rational) else float(v)


@dataclass(frozen=True)
class ExponentReport:
    l_plus_mu: Real
    mu_plus_l_minus_1: Real
    l_plus_mu_vs_2: str
    nu_vs_mu_plus_l_minus_1: str
    l_vs_1: str
    nu_vs_mu: str
    nu_vs_1: str

    @property
    def flags(self) -> dict[str, bool]:
        out = {}
        for name, rel in (("l+mu", self.l_plus_mu_vs_2),):
            out.update({f"{name}<2": rel == "<", f"{name}=2": rel == "=", f"{name}>2": rel == ">"})
        rel = self.nu_vs_mu_plus_l_minus_1
        out.update({"nu<mu+l-1": rel == "<", "nu=mu+l-1": rel == "=", "nu>mu+l-1": rel == ">"})
        return out


def exponent_relations(spec: ValidatedSpec | ProblemSpec) -> ExponentReport:
    s = spec.spec if isinstance(spec, ValidatedSpec) else spec
    mu, nu, l = _exact(s.mu), _exact(s.nu), _exact(s.l)
    lpm = l + mu
    crit = mu + l - 1
    return ExponentReport(
        l_plus_mu=lpm,
        mu_plus_l_minus_1=crit,
        l_plus_mu_vs_2=compare(lpm, 2),
        nu_vs_mu_plus_l_minus_1=compare(nu, crit),
        l_vs_1=compare(l, 1),
        nu_vs_mu=compare(nu, mu),
        nu_vs_1=compare(nu, 1),
    )
