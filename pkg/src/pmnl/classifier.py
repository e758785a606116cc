"""Regime verdicts from exponents, absorption strength, kernel bounds and geometry.

Comparisons run through :func:`pmnl.model.compare`, so rational inputs are
decided exactly and floats are converted to the exact rational they denote.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

from .errors import SpecMismatch
from .geometry import GeometryConstants, geometry_constants
from .model import ProblemSpec, ValidatedSpec, compare, validate
from .solver import BLOWUP, COMPLETED, SimulationOutcome

GLOBAL = "GlobalForAllData"
BLOWUP_LARGE = "BlowUpForLargeData"
CRITICAL = "CriticalUndetermined"
OUTSIDE = "OutsideTheorems"

CONSISTENT = "Consistent"
CONTRADICTION = "Contradiction"
SMALL_DATA = "ConsistentSmallData"
NO_CLAIM = "NoClaim"


def _exact(v):
    """Exact rational for ints, Fractions and finite floats; other values pass through."""
    if isinstance(v, Rational):
        return Fraction(v)
    if isinstance(v, float) and math.isfinite(v):
        return Fraction(v)
    return v


def _ratio(num, den):
    if den == 0:
        return math.inf
    n, d = _exact(num), _exact(den)
    if isinstance(n, Fraction) and isinstance(d, Fraction):
        return n / d
    return float(num) / float(den)


@dataclass(frozen=True)
class RegimeInputs:
    mu: float | Fraction
    nu: float | Fraction
    l: float | Fraction
    a: float | Fraction
    K_inf: float
    k0: float
    geometry: GeometryConstants
    gamma_depth: float | None = None
    strip_jac_inf: float | None = None

    def __post_init__(self):
        if not self.K_inf >= self.k0 >= 0:
            raise ValueError(f"need K_inf >= k0 >= 0, got K_inf={self.K_inf}, k0={self.k0}")

    @property
    def theta(self):
        mu, l = _exact(self.mu), _exact(self.l)
        if isinstance(mu, Fraction) and isinstance(l, Fraction):
            e = l / mu - 1
            if e.denominator == 1:
                return max(Fraction(2) ** int(e), Fraction(1))
        return max(2.0 ** (float(self.l) / float(self.mu) - 1), 1.0)

    @classmethod
    def from_spec(cls, spec: ProblemSpec | ValidatedSpec, delta: float | None = None,
                  gamma_depth: float | None = None) -> RegimeInputs:
        """Inputs for ``spec``; layer depths default to the ones the barrier search uses."""
        vspec = validate(spec)
        dom = vspec.domain
        delta = 0.5 * dom.inradius if delta is None else delta
        gamma_depth = 0.25 * dom.inradius if gamma_depth is None else gamma_depth
        geo = geometry_constants(dom, delta)
        strip = geometry_constants(dom, gamma_depth)
        return cls(vspec.mu, vspec.nu, vspec.l, vspec.a, vspec.K_inf, vspec.k0, geo,
                   gamma_depth, strip.jac_inf)


@dataclass(frozen=True)
class RegimeVerdict:
    verdict: str
    clause: str | None
    thresholds: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {"verdict": self.verdict, "clause": self.clause}
        for k, v in self.thresholds.items():
            rec[k] = str(v) if isinstance(v, Fraction) else v
        return rec


def critical_thresholds(inputs: RegimeInputs) -> tuple:
    """``(T_global, T_blowup)`` for the critical line ``nu = mu + l - 1``."""
    mu, l = _exact(inputs.mu), _exact(inputs.l)
    geo = inputs.geometry
    if compare(inputs.l, 1) != ">":
        t = mu * _exact(geo.perim)
        return t, t
    jac_sup = _exact(geo.jac_sup)
    jac_inf = _exact(inputs.strip_jac_inf if inputs.strip_jac_inf is not None else geo.jac_inf)
    shape = mu * (2 * mu + l - 1) / (l + 1)
    theta = inputs.theta
    if isinstance(theta, float):
        t_global = theta * float(shape) * float(jac_sup)
    else:
        t_global = theta * shape * jac_sup
    return t_global, shape * jac_inf


def classify(inputs: RegimeInputs) -> RegimeVerdict:
    mu, nu, l = inputs.mu, inputs.nu, inputs.l
    lpm = compare(l + mu, 2)
    crit = compare(nu, mu + l - 1)
    base = {"l+mu": _exact(l + mu), "mu+l-1": _exact(mu + l - 1)}
    if lpm != ">":
        return RegimeVerdict(GLOBAL, "global: l+mu<=2", base)
    if crit == ">":
        return RegimeVerdict(GLOBAL, "global: nu>mu+l-1", base)
    if crit == "<":
        if inputs.k0 > 0:
            return RegimeVerdict(BLOWUP_LARGE, "blowup: l+mu>2, nu<mu+l-1, k0>0", base)
        return RegimeVerdict(OUTSIDE, None, {**base, "k0": inputs.k0})
    t_global, t_blowup = critical_thresholds(inputs)
    r_global = _ratio(inputs.a, inputs.K_inf)
    r_blowup = _ratio(inputs.a, inputs.k0)
    info = {**base, "T_global": t_global, "T_blowup": t_blowup, "a/K_inf": r_global, "a/k0": r_blowup,
            "delta": inputs.geometry.delta, "gamma_depth": inputs.gamma_depth}
    if math.isinf(r_global) or compare(r_global, t_global) == ">":
        return RegimeVerdict(GLOBAL, "global: nu=mu+l-1, a/K_inf>T_global", info)
    if inputs.k0 > 0 and compare(r_blowup, t_blowup) == "<":
        return RegimeVerdict(BLOWUP_LARGE, "blowup: nu=mu+l-1, a/k0<T_blowup", info)
    return RegimeVerdict(CRITICAL, "critical: T_blowup<=a/k0, a/K_inf<=T_global", info)


@dataclass(frozen=True)
class ConsistencyReport:
    status: str
    verdict: str
    simulation_status: str
    note: str = ""


def cross_check(inputs: RegimeInputs, simulation: SimulationOutcome) -> ConsistencyReport:
    """Compare a regime verdict with what the solver observed for the same problem."""
    if simulation.spec is not None:
        other = RegimeInputs.from_spec(simulation.spec)
        for name in ("mu", "nu", "l", "a"):
            if compare(getattr(other, name), getattr(inputs, name)) != "=":
                raise SpecMismatch(f"simulation has {name}={getattr(other, name)}, "
                                   f"inputs have {getattr(inputs, name)}", field=name)
    verdict = classify(inputs).verdict
    sim = simulation.status
    if verdict == GLOBAL:
        if sim == BLOWUP:
            return ConsistencyReport(CONTRADICTION, verdict, sim, "blow-up where every solution is global")
        if sim == COMPLETED:
            return ConsistencyReport(CONSISTENT, verdict, sim)
    if verdict == BLOWUP_LARGE:
        if sim == BLOWUP:
            return ConsistencyReport(CONSISTENT, verdict, sim)
        if sim == COMPLETED:
            return ConsistencyReport(SMALL_DATA, verdict, sim, "bounded run; the blow-up claim needs large data")
    return ConsistencyReport(NO_CLAIM, verdict, sim)
