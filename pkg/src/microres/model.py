"""Shared domain types and conventions.

All fields are time-harmonic with convention e^{-i omega t}, so passive
materials have nonnegative imaginary parts and outgoing/decaying transverse
exponents sit in the upper half plane.  Lengths are nondimensional: the unit
cell is Q = [0,1]^2 and the slab period in x2 is 2*pi.

The rotated gradient used throughout is grad_perp = (-d/dx2, d/dx1).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray

__all__ = [
    "GeometryError",
    "WoodAnomalyWarning",
    "WaveParams",
    "SimpleRing",
    "SrrPhenomenological",
    "SrrGeometric",
    "SurfaceModel",
    "MaterialSet",
    "CellGeometry",
    "SlabLattice",
    "nu_exponent",
    "surface_sigma",
    "validate_lattice",
]

TOL_WOOD = 1e-8


class GeometryError(ValueError):
    """Invalid resonator geometry or lattice layout."""


class WoodAnomalyWarning(UserWarning):
    """A diffraction order is within tol_wood of grazing (nu_m ~ 0)."""


def _as_tensor(value) -> Array:
    """Promote a scalar or 2x2 array-like to a complex symmetric 2x2 tensor."""
    a = np.asarray(value, dtype=complex)
    if a.shape == ():
        a = a * np.eye(2)
    if a.shape != (2, 2):
        raise ValueError(f"material tensor must be scalar or 2x2, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-14 * max(1.0, abs(a).max())):
        raise ValueError("material tensor must be symmetric")
    a = 0.5 * (a + a.T)
    a.flags.writeable = False
    return a


def _check_tensor_bounds(name: str, a: Array) -> None:
    re_eigs = np.linalg.eigvalsh(a.real)
    im_eigs = np.linalg.eigvalsh(a.imag)
    if re_eigs.min() <= 0.0:
        raise ValueError(f"{name}: real part must be positive definite (eigs {re_eigs})")
    if im_eigs.min() < -1e-14 * max(1.0, abs(im_eigs).max()):
        raise ValueError(f"{name}: imaginary part must be positive semidefinite (eigs {im_eigs})")


@dataclass(frozen=True)
class WaveParams:
    """Incident Bloch wave data: frequency, quasi-momentum and exterior media.

    Args:
        omega: angular frequency, > 0.
        kappa: Bloch wavevector in x2, in [-1/2, 1/2).
        incident_order: integer order m_bar of the incoming propagating mode.
        eps0: exterior permittivity (real, > 0).
        mu0: exterior permeability (real, > 0).
    """

    omega: float
    kappa: float = 0.0
    incident_order: int = 0
    eps0: float = 1.0
    mu0: float = 1.0

    def __post_init__(self):
        if not self.omega > 0.0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if not (-0.5 <= self.kappa < 0.5):
            raise ValueError(f"kappa must lie in [-1/2, 1/2), got {self.kappa}")
        if not (self.eps0 > 0.0 and self.mu0 > 0.0):
            raise ValueError("eps0 and mu0 must be real and positive")
        mb = self.incident_order
        nu_sq = self.eps0 * self.mu0 * self.omega**2 - (mb + self.kappa) ** 2
        if not nu_sq > 0.0:
            raise ValueError(
                f"incident order m={mb} does not propagate: nu^2 = {nu_sq:.3e} <= 0"
            )

    @property
    def nu_incident(self) -> float:
        return float(nu_exponent(self, self.incident_order).real)


def nu_exponent(wave: WaveParams, m: int, tol_wood: float = TOL_WOOD) -> complex:
    """Transverse exponent nu_m of diffraction order m.

    nu_m^2 = eps0*mu0*omega^2 - (m+kappa)^2.  Propagating orders return the
    positive real root; evanescent orders return i*t with t > 0 so that
    e^{i nu_m |x1|} decays.  Emits WoodAnomalyWarning when |nu_m| < tol_wood.
    """
    nu_sq = wave.eps0 * wave.mu0 * wave.omega**2 - (m + wave.kappa) ** 2
    if nu_sq > 0.0:
        nu = complex(math.sqrt(nu_sq))
    else:
        nu = 1j * math.sqrt(-nu_sq)
    if abs(nu) < tol_wood:
        warnings.warn(
            f"order m={m} is within {tol_wood:g} of a Rayleigh-Wood anomaly "
            f"(nu_m^2 = {nu_sq:.3e}); DtN conditioning degrades",
            WoodAnomalyWarning,
            stacklevel=2,
        )
    return nu


@dataclass(frozen=True)
class SimpleRing:
    """Resistive ring: sigma = 1/rho."""

    rho: float

    def __post_init__(self):
        if not self.rho > 0.0:
            raise ValueError(f"rho must be > 0, got {self.rho}")


@dataclass(frozen=True)
class SrrPhenomenological:
    """Split ring with phenomenological reactance: sigma = (rho + i tau)^{-1}."""

    rho: float
    tau: float = 0.0

    def __post_init__(self):
        if not self.rho > 0.0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if self.tau < 0.0:
            raise ValueError(
                f"tau must be >= 0 (Im sigma <= 0 bound), got {self.tau}"
            )


@dataclass(frozen=True)
class SrrGeometric:
    """Split ring with gap capacitance from geometry.

    The reactive part is 3*delta/(2 pi^2 omega eps_gap R^2) with delta the
    (fixed, nondimensional) gap width, eps_gap the gap permittivity and R the
    resonator radius; sigma = (rho + i * reactance)^{-1}.
    """

    rho: float
    delta: float
    eps_gap: float
    radius: float

    def __post_init__(self):
        if not self.rho > 0.0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if not (self.delta > 0.0 and self.eps_gap > 0.0 and self.radius > 0.0):
            raise ValueError("delta, eps_gap and radius must all be > 0")


SurfaceModel = SimpleRing | SrrPhenomenological | SrrGeometric


def surface_sigma(model: SurfaceModel, wave: WaveParams) -> complex:
    """Surface conductivity coefficient sigma (the solver applies sigma/eta).

    Satisfies Re sigma > 0 and Im sigma <= 0 for all admissible models.
    """
    if isinstance(model, SimpleRing):
        return complex(1.0 / model.rho)
    if isinstance(model, SrrPhenomenological):
        return 1.0 / complex(model.rho, model.tau)
    if isinstance(model, SrrGeometric):
        tau_eff = 3.0 * model.delta / (
            2.0 * math.pi**2 * wave.omega * model.eps_gap * model.radius**2
        )
        return 1.0 / complex(model.rho, tau_eff)
    raise TypeError(f"unknown surface model {type(model).__name__}")


@dataclass(frozen=True)
class MaterialSet:
    """Piecewise-constant materials: matrix region D*, resonator interior D.

    eps tensors are complex symmetric 2x2 (scalars are promoted); mu values
    are complex scalars.  Passivity bounds (positive real part, nonnegative
    imaginary part) are enforced at construction.
    """

    eps_matrix: Array = field(default=1.0)  # type: ignore[assignment]
    eps_interior: Array = field(default=1.0)  # type: ignore[assignment]
    mu_matrix: complex = 1.0
    mu_interior: complex = 1.0
    surface: SurfaceModel = field(default_factory=lambda: SimpleRing(rho=1.0))

    def __post_init__(self):
        object.__setattr__(self, "eps_matrix", _as_tensor(self.eps_matrix))
        object.__setattr__(self, "eps_interior", _as_tensor(self.eps_interior))
        object.__setattr__(self, "mu_matrix", complex(self.mu_matrix))
        object.__setattr__(self, "mu_interior", complex(self.mu_interior))
        _check_tensor_bounds("eps_matrix", self.eps_matrix)
        _check_tensor_bounds("eps_interior", self.eps_interior)
        for name in ("mu_matrix", "mu_interior"):
            mu = getattr(self, name)
            if not mu.real > 0.0:
                raise ValueError(f"{name}: Re mu must be > 0, got {mu}")
            if mu.imag < 0.0:
                raise ValueError(f"{name}: Im mu must be >= 0, got {mu}")

    @property
    def eps_lower(self) -> float:
        """Coercivity constant: least eigenvalue of Re(eps) over both regions."""
        return float(
            min(
                np.linalg.eigvalsh(self.eps_matrix.real).min(),
                np.linalg.eigvalsh(self.eps_interior.real).min(),
            )
        )

    def eps_isotropic_matrix(self) -> complex | None:
        """Scalar matrix permittivity if eps_matrix is isotropic, else None."""
        e = self.eps_matrix
        if abs(e[0, 1]) <= 1e-14 * abs(e).max() and abs(e[0, 0] - e[1, 1]) <= 1e-14 * abs(e).max():
            return complex(e[0, 0])
        return None


def _polygon_signed_area(v: Array) -> float:
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def _polygon_is_simple(v: Array) -> bool:
    """Check a closed polygon for self-intersection (brute force, O(n^2))."""
    n = len(v)
    a = v
    b = np.roll(v, -1, axis=0)
    for i in range(n):
        # compare edge i against all non-adjacent later edges
        js = np.arange(i + 2, n if i > 0 else n - 1)
        if len(js) == 0:
            continue
        p, r = a[i], b[i] - a[i]
        q, s = a[js], b[js] - a[js]
        rxs = r[0] * s[:, 1] - r[1] * s[:, 0]
        qp = q - p
        t_num = qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]
        u_num = qp[:, 0] * r[1] - qp[:, 1] * r[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = t_num / rxs
            u = u_num / rxs
        hit = (np.abs(rxs) > 1e-15) & (t > 1e-12) & (t < 1 - 1e-12) & (u > 1e-12) & (u < 1 - 1e-12)
        if hit.any():
            return False
    return True


@dataclass(frozen=True)
class CellGeometry:
    """Resonator cross-section D inside the unit cell Q = [0,1]^2.

    The boundary is a simple closed polyline oriented counter-clockwise and
    strictly inside Q.  Circles built with `CellGeometry.circle` carry exact
    area/perimeter; the polyline is what meshing and quadrature consume, and
    `area_tolerance` declares the polygonal approximation defect.
    """

    vertices: Array
    kind: str = "polyline"
    radius: float = 0.0
    center: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise GeometryError(f"boundary needs >= 3 planar vertices, got shape {v.shape}")
        if v.min() <= 0.0 or v.max() >= 1.0:
            raise GeometryError("boundary must be strictly inside the unit cell")
        sa = _polygon_signed_area(v)
        if sa <= 0.0:
            raise GeometryError(
                "boundary must be oriented counter-clockwise (signed area "
                f"{sa:.3e}); clockwise input is rejected, not reversed"
            )
        if not _polygon_is_simple(v):
            raise GeometryError("boundary polyline is self-intersecting")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        if self.kind not in ("polyline", "circle"):
            raise GeometryError(f"unknown geometry kind {self.kind!r}")
        if self.kind == "circle" and not (0.0 < self.radius < 0.5):
            raise GeometryError(f"circle radius must lie in (0, 0.5), got {self.radius}")

    def as_polyline(self) -> "CellGeometry":
        """The same boundary viewed as a plain polyline.

        Drops a circle's exact-area/perimeter bookkeeping so every derived
        quantity refers to the polygon that meshing actually resolves.
        """
        if self.kind == "polyline":
            return self
        return CellGeometry(vertices=self.vertices, kind="polyline", center=self.center)

    @classmethod
    def circle(
        cls, radius: float, n_segments: int = 96, center: tuple[float, float] = (0.5, 0.5)
    ) -> "CellGeometry":
        """Regular-polygon approximation of the circle |y - center| = radius."""
        if n_segments < 16 or n_segments % 8 != 0:
            raise GeometryError(
                f"n_segments must be >= 16 and divisible by 8, got {n_segments}"
            )
        if not (0.0 < radius < 0.5):
            raise GeometryError(f"circle radius must lie in (0, 0.5), got {radius}")
        th = 2.0 * np.pi * np.arange(n_segments) / n_segments
        v = np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])
        return cls(vertices=v, kind="circle", radius=radius, center=center)

    @property
    def n_segments(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        """area(D): exact pi R^2 for circles, shoelace area otherwise."""
        if self.kind == "circle":
            return math.pi * self.radius**2
        return _polygon_signed_area(self.vertices)

    @property
    def area_exterior(self) -> float:
        """area(D*) = 1 - area(D)."""
        return 1.0 - self.area

    @property
    def polygon_area(self) -> float:
        return _polygon_signed_area(self.vertices)

    @property
    def perimeter(self) -> float:
        """Length of the boundary: exact 2 pi R for circles, polyline length otherwise."""
        if self.kind == "circle":
            return 2.0 * math.pi * self.radius
        d = np.roll(self.vertices, -1, axis=0) - self.vertices
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    @property
    def polygon_perimeter(self) -> float:
        d = np.roll(self.vertices, -1, axis=0) - self.vertices
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    @property
    def area_tolerance(self) -> float:
        """Declared polygonal-approximation defect |area - polygon_area|."""
        return abs(self.area - self.polygon_area)

    def chi_interior(self, points: Array) -> Array:
        """Indicator of D sampled at points (n, 2), by polygon ray casting."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        v = self.vertices
        a = v
        b = np.roll(v, -1, axis=0)
        x, y = p[:, 0:1], p[:, 1:2]
        ya, yb = a[:, 1][None, :], b[:, 1][None, :]
        xa, xb = a[:, 0][None, :], b[:, 0][None, :]
        cross = (ya > y) != (yb > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_hit = xa + (y - ya) * (xb - xa) / (yb - ya)
        inside = np.sum(cross & (x_hit > x), axis=1) % 2 == 1
        return inside

    def chi_exterior(self, points: Array) -> Array:
        return ~self.chi_interior(points)


@dataclass(frozen=True)
class SlabLattice:
    """Slab of N1 x N2 micro-cells: N1 through the thickness, N2 per period.

    eta = 2*pi/N2 and b - a = eta*N1 hold exactly by construction (both
    admissible-scale conditions).  The slab is centered at x1 = 0 and the
    artificial boundaries sit margin_cells cells outside the slab faces.
    """

    n1: int
    n2: int
    margin_cells: int = 2

    def __post_init__(self):
        for name in ("n1", "n2", "margin_cells"):
            value = getattr(self, name)
            if not (isinstance(value, (int, np.integer)) and value >= 1):
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def eta(self) -> float:
        return 2.0 * math.pi / self.n2

    @property
    def thickness(self) -> float:
        return self.eta * self.n1

    @property
    def a(self) -> float:
        """Left slab face Sigma-."""
        return -0.5 * self.thickness

    @property
    def b(self) -> float:
        """Right slab face Sigma+."""
        return +0.5 * self.thickness

    @property
    def gamma_minus(self) -> float:
        """Left artificial boundary."""
        return self.a - self.margin_cells * self.eta

    @property
    def gamma_plus(self) -> float:
        """Right artificial boundary."""
        return self.b + self.margin_cells * self.eta

    @property
    def margin_width(self) -> float:
        return self.margin_cells * self.eta


def validate_lattice(lat: SlabLattice) -> SlabLattice:
    """Validate and return the lattice (construction already enforces both
    admissible-scale conditions; this re-checks them explicitly)."""
    if not isinstance(lat, SlabLattice):
        raise TypeError(f"expected SlabLattice, got {type(lat).__name__}")
    assert abs(lat.eta * lat.n2 - 2.0 * math.pi) < 1e-12
    assert abs(lat.b - lat.a - lat.eta * lat.n1) < 1e-12
    return lat
