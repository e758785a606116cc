"""Domains, finite-volume meshes and boundary-layer geometry.

Two domain shapes are supported: a 1D interval and a radially symmetric
ball in ``R^N``.  Ball fields live on a radial mesh ``0 < r < R`` whose cell
weights are the exact shell volumes, so quadrature sums reproduce ``|Omega|``
to round-off.  For both shapes the inward-normal coordinates ``(xbar, s)``
are exact, which makes the curvature sum and the layer Jacobian closed-form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.linalg import solve_banded

from .errors import InvalidDomain, LayerTooDeep, TooFewCells


@dataclass(frozen=True)
class Interval:
    x_left: float
    x_right: float

    def __post_init__(self):
        if not (math.isfinite(self.x_left) and math.isfinite(self.x_right)):
            raise InvalidDomain("interval end points must be finite")
        if not self.x_left < self.x_right:
            raise InvalidDomain(f"need x_left < x_right, got {self.x_left} >= {self.x_right}")

    @property
    def length(self) -> float:
        return self.x_right - self.x_left

    @property
    def inradius(self) -> float:
        return 0.5 * self.length


@dataclass(frozen=True)
class Ball:
    space_dim: int
    radius: float

    def __post_init__(self):
        if int(self.space_dim) != self.space_dim or self.space_dim < 1:
            raise InvalidDomain(f"space_dim must be an integer >= 1, got {self.space_dim}")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise InvalidDomain(f"radius must be positive, got {self.radius}")

    @property
    def inradius(self) -> float:
        return self.radius


DomainRef = Union[Interval, Ball]


def unit_sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in ``R^n`` (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True)
class GeometryConstants:
    vol: float
    perim: float
    jac_sup: float | None = None
    jac_inf: float | None = None
    curvature_bound: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if not (self.vol > 0 and self.perim > 0):
            raise InvalidDomain("vol and perim must be positive")
        if self.jac_sup is not None and self.jac_inf is not None and self.jac_inf > self.jac_sup:
            raise InvalidDomain("jac_inf must not exceed jac_sup")


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform cell-centred mesh.

    ``weights`` are cell measures (shell volumes for a ball), ``face_areas``
    has ``n_cells + 1`` entries including both end faces, and
    ``boundary_cells``/``boundary_areas``/``boundary_points`` describe the
    faces that lie on the physical boundary, in a fixed order (left, right
    for an interval; the single outer sphere for a ball).
    """

    domain: DomainRef
    n_cells: int
    h: float
    centers: np.ndarray
    faces: np.ndarray
    weights: np.ndarray
    face_areas: np.ndarray
    boundary_cells: tuple[int, ...]
    boundary_areas: tuple[float, ...]
    boundary_points: tuple[float, ...]

    @property
    def dim(self) -> int:
        return self.domain.space_dim if isinstance(self.domain, Ball) else 1

    @property
    def n_faces(self) -> int:
        return len(self.boundary_cells)

    @property
    def distance_to_boundary(self) -> np.ndarray:
        return distance_to_boundary(self.domain, self.centers)

    def stability_factor(self) -> float:
        """``max_i sum_f A_f / (h V_i)``; equals ``2/h^2`` on an interval."""
        inner = self.face_areas.copy()
        for c in self.boundary_cells:
            # physical boundary faces carry prescribed flux, not a stencil link
            if c == 0:
                inner[0] = 0.0
            if c == self.n_cells - 1:
                inner[-1] = 0.0
        if isinstance(self.domain, Ball):
            inner[0] = 0.0
        links = inner[:-1] + inner[1:]
        return float(np.max(links / (self.h * self.weights)))


@dataclass
class GridField:
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


def build_grid(domain: DomainRef, n_cells: int) -> Grid:
    if n_cells < 4:
        raise TooFewCells(f"need at least 4 cells, got {n_cells}")
    n = int(n_cells)
    if isinstance(domain, Interval):
        h = domain.length / n
        faces = domain.x_left + h * np.arange(n + 1)
        faces[-1] = domain.x_right
        centers = 0.5 * (faces[:-1] + faces[1:])
        weights = np.diff(faces)
        face_areas = np.ones(n + 1)
        return Grid(domain, n, h, centers, faces, weights, face_areas,
                    (0, n - 1), (1.0, 1.0), (domain.x_left, domain.x_right))
    if isinstance(domain, Ball):
        N, R = domain.space_dim, domain.radius
        h = R / n
        faces = h * np.arange(n + 1)
        faces[-1] = R
        centers = 0.5 * (faces[:-1] + faces[1:])
        omega = unit_sphere_area(N)
        weights = omega * np.diff(faces**N) / N
        face_areas = omega * faces ** (N - 1)
        if N == 1:
            face_areas[0] = 0.0  # symmetry plane: zero flux through the origin
        return Grid(domain, n, h, centers, faces, weights, face_areas,
                    (n - 1,), (float(face_areas[-1]),), (R,))
    raise InvalidDomain(f"unsupported domain {domain!r}")


def measures(domain: DomainRef) -> GeometryConstants:
    if isinstance(domain, Interval):
        return GeometryConstants(vol=domain.length, perim=2.0)
    N, R = domain.space_dim, domain.radius
    omega = unit_sphere_area(N)
    return GeometryConstants(vol=omega * R**N / N, perim=omega * R ** (N - 1))


def distance_to_boundary(domain: DomainRef, x) -> np.ndarray:
    """Inward normal distance ``s``; ``x`` is the coordinate (radius for a ball)."""
    x = np.asarray(x, dtype=float)
    if isinstance(domain, Interval):
        return np.minimum(x - domain.x_left, domain.x_right - x)
    return domain.radius - np.abs(x)


def jacobian_bounds(domain: DomainRef, delta: float) -> tuple[float, float]:
    """Sup and inf over ``0 < s < delta`` of the boundary-integrated layer Jacobian."""
    if not 0 < delta < domain.inradius:
        raise LayerTooDeep(f"layer depth {delta} must lie in (0, {domain.inradius})")
    if isinstance(domain, Interval):
        return 2.0, 2.0
    N, R = domain.space_dim, domain.radius
    perim = measures(domain).perim
    return perim, perim * (1.0 - delta / R) ** (N - 1)


def layer_jacobian(domain: DomainRef, s) -> np.ndarray:
    """``int_{dOmega} |J(ybar, s)| dybar`` as a function of depth ``s``."""
    s = np.asarray(s, dtype=float)
    if isinstance(domain, Interval):
        return np.full_like(s, 2.0)
    N, R = domain.space_dim, domain.radius
    return measures(domain).perim * (1.0 - s / R) ** (N - 1)


def curvature_term(domain: DomainRef, s):
    """Sum over principal curvatures of ``H_j / (1 - s H_j)`` at depth ``s``."""
    if isinstance(domain, Interval):
        return np.zeros_like(np.asarray(s, dtype=float)) if np.ndim(s) else 0.0
    N, R = domain.space_dim, domain.radius
    return (N - 1) / (R - np.asarray(s, dtype=float)) if np.ndim(s) else (N - 1) / (R - s)


def curvature_bound(domain: DomainRef, delta: float) -> float:
    """Bound ``cbar`` on the curvature sum over ``0 <= s <= delta``."""
    if not 0 <= delta < domain.inradius:
        raise LayerTooDeep(f"layer depth {delta} must lie in [0, {domain.inradius})")
    return float(curvature_term(domain, delta))


def geometry_constants(domain: DomainRef, delta: float) -> GeometryConstants:
    m = measures(domain)
    js, ji = jacobian_bounds(domain, delta)
    return GeometryConstants(m.vol, m.perim, js, ji, curvature_bound(domain, delta), delta)


@dataclass(frozen=True)
class AuxiliaryPsi:
    """Positive solution of ``Lap psi = b``, ``d psi/dn = b|Omega|/|dOmega|``.

    ``value``/``radial_derivative`` are closed forms in the domain coordinate
    (radius for a ball).  ``numeric`` holds the finite-volume solution when a
    grid was supplied.
    """

    domain: DomainRef
    b: float
    psi_min: float
    numeric: GridField | None = field(default=None, compare=False)

    @property
    def normal_derivative(self) -> float:
        m = measures(self.domain)
        return self.b * m.vol / m.perim

    @property
    def maximum(self) -> float:
        return float(self.value(np.array(boundary_coordinates(self.domain)[0])))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if isinstance(self.domain, Interval):
            c = 0.5 * (self.domain.x_left + self.domain.x_right)
            return 0.5 * self.b * (x - c) ** 2 + self.psi_min
        return self.b * x**2 / (2 * self.domain.space_dim) + self.psi_min

    def gradient(self, x):
        """Derivative along the coordinate axis (d/dx, or d/dr for a ball)."""
        x = np.asarray(x, dtype=float)
        if isinstance(self.domain, Interval):
            c = 0.5 * (self.domain.x_left + self.domain.x_right)
            return self.b * (x - c)
        return self.b * x / self.domain.space_dim

    def gradient_squared(self, x):
        return self.gradient(x) ** 2


def boundary_coordinates(domain: DomainRef) -> tuple[float, ...]:
    if isinstance(domain, Interval):
        return (domain.x_left, domain.x_right)
    return (domain.radius,)


def _solve_psi_fv(grid: Grid, b: float, psi_min: float) -> np.ndarray:
    n = grid.n_cells
    lower = np.zeros(n)
    upper = np.zeros(n)
    diag = np.zeros(n)
    rhs = b * grid.weights.copy()
    inner = grid.face_areas[1:-1] / grid.h  # links between cells i and i+1
    diag[:-1] -= inner
    diag[1:] -= inner
    upper[:-1] = inner
    lower[1:] = inner
    g = b * measures(grid.domain).vol / measures(grid.domain).perim
    for c, area in zip(grid.boundary_cells, grid.boundary_areas):
        rhs[c] -= area * g
    # Neumann problem: fix the gauge by pinning the first cell
    diag[0], upper[0], rhs[0] = 1.0, 0.0, 0.0
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    psi = solve_banded((1, 1), ab, rhs)
    return psi - psi.min() + psi_min


def solve_auxiliary_psi(domain: DomainRef, b: float, psi_min: float = 1.0,
                        grid: Grid | None = None) -> AuxiliaryPsi:
    if not b >= 0:
        raise ValueError(f"b must be nonnegative, got {b}")
    if not psi_min > 0:
        raise ValueError(f"psi_min must be positive, got {psi_min}")
    numeric = None
    if grid is not None:
        numeric = GridField(_solve_psi_fv(grid, b, psi_min))
    return AuxiliaryPsi(domain, float(b), float(psi_min), numeric)


def nonlocal_flux(grid: Grid, kernel, field: GridField | np.ndarray, l: float,
                  boundary_face: int | None = None):
    """Midpoint quadrature of ``int k(x, y) u(y)^l dy`` at boundary faces.

    Returns a scalar when ``boundary_face`` is given, else one value per face.
    """
    u = field.values if isinstance(field, GridField) else np.asarray(field, dtype=float)
    if np.any(u < 0):
        raise ValueError("nonlocal_flux needs a nonnegative field")
    k = kernel_matrix(grid, kernel)
    flux = k @ (grid.weights * u**l)
    if boundary_face is None:
        return flux
    return float(flux[boundary_face])


def kernel_matrix(grid: Grid, kernel) -> np.ndarray:
    """Kernel samples ``k(x_face, y_i)`` with shape ``(n_faces, n_cells)``."""
    return np.asarray(kernel.sample(grid.boundary_points, grid.centers, grid.domain), dtype=float)


def quadrature_nodes(domain: DomainRef, n_cells: int, order: int = 4,
                     s_max: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights for radial or interval integrals.

    With ``s_max`` the rule covers only the boundary strip ``0 < s < s_max``
    (both end strips for an interval).  Weights include the radial measure.
    """
    g, gw = np.polynomial.legendre.leggauss(order)
    if isinstance(domain, Interval):
        if s_max is None:
            return _composite(np.linspace(domain.x_left, domain.x_right, n_cells + 1), g, gw)
        strips = (np.linspace(domain.x_left, domain.x_left + s_max, n_cells + 1),
                  np.linspace(domain.x_right - s_max, domain.x_right, n_cells + 1))
        parts = [_composite(e, g, gw) for e in strips]
        return np.concatenate([p for p, _ in parts]), np.concatenate([w for _, w in parts])
    N, R = domain.space_dim, domain.radius
    lo = 0.0 if s_max is None else R - s_max
    p, w = _composite(np.linspace(lo, R, n_cells + 1), g, gw)
    return p, w * unit_sphere_area(N) * p ** (N - 1)


def _composite(edges: np.ndarray, g: np.ndarray, gw: np.ndarray):
    a, b = edges[:-1, None], edges[1:, None]
    pts = 0.5 * (a + b) + 0.5 * (b - a) * g[None, :]
    wts = 0.5 * (b - a) * gw[None, :]
    return pts.ravel(), wts.ravel()


def integrate(fn: Callable[[np.ndarray], np.ndarray], domain: DomainRef,
              n_cells: int = 200, order: int = 4, s_max: float | None = None) -> float:
    p, w = quadrature_nodes(domain, n_cells, order, s_max)
    return float(np.sum(w * fn(p)))
