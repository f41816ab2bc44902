"""Plane-layered scattering for the homogenized slab.

Once every layer is uniform along x2 the slab problem decouples into
independent transverse orders, and each order sees a one-dimensional
Helmholtz problem along x1 with piecewise-constant coefficients. That
problem is solved here by scattering-matrix (Redheffer) composition,
which stays well conditioned when a layer carries an evanescent wave,
unlike naive transfer matrices.

Conventions. The stack is centered on the slab midplane: a stack of total
thickness L occupies x1 in (-L/2, +L/2). The incident wave comes from
below with unit amplitude at x1 = 0, the reflected amplitude multiplies
e^{-i nu_m x1} and the transmitted amplitude multiplies e^{+i nu_m x1},
both also referenced to x1 = 0. The microstructure solver reports its
amplitudes in the same frame, so the two can be compared entrywise.

A layer permittivity may be a scalar or a diagonal 2x2 tensor. For the
tensor case the x1 wavenumber in the layer is

    q_m^2 = e22 (omega^2 mu - (m + kappa)^2 / e11),

and the interface admittance is q_m / e22; both reduce to the familiar
scalar expressions when e11 = e22.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cell import SolverError
from .model import WaveParams, nu_exponent

_PASSIVITY_TOL = 1e-10


def _diag_eps(eps) -> tuple[complex, complex]:
    """Normalize a scalar or diagonal-tensor permittivity to (e11, e22)."""
    arr = np.asarray(eps, dtype=complex)
    if arr.shape == ():
        e11 = e22 = complex(arr)
    elif arr.shape == (2, 2):
        scale = max(abs(arr[0, 0]), abs(arr[1, 1]))
        if max(abs(arr[0, 1]), abs(arr[1, 0])) > 1e-10 * scale:
            raise ValueError("layer permittivity must be scalar or diagonal")
        e11, e22 = complex(arr[0, 0]), complex(arr[1, 1])
    else:
        raise ValueError(f"permittivity must be scalar or 2x2, got shape {arr.shape}")
    for e in (e11, e22):
        if e.real <= 0.0 or e.imag < -_PASSIVITY_TOL * abs(e):
            raise ValueError(f"permittivity {e} is not passive")
    return e11, e22


@dataclass(frozen=True)
class Layer:
    """One homogeneous slice of the stack."""

    thickness: float
    eps: complex | np.ndarray
    mu: complex

    e11: complex = field(init=False, repr=False)
    e22: complex = field(init=False, repr=False)

    def __post_init__(self):
        if self.thickness <= 0.0:
            raise ValueError(f"layer thickness must be positive, got {self.thickness}")
        e11, e22 = _diag_eps(self.eps)
        object.__setattr__(self, "e11", e11)
        object.__setattr__(self, "e22", e22)
        mu = complex(self.mu)
        if mu == 0.0 or mu.imag < -_PASSIVITY_TOL * abs(mu):
            raise ValueError(f"permeability {mu} is not passive")
        object.__setattr__(self, "mu", mu)

    def wavenumber(self, wave: WaveParams, order: int) -> complex:
        """x1 wavenumber of transverse order `order` inside this layer."""
        kpm = order + wave.kappa
        q2 = self.e22 * (wave.omega**2 * complex(self.mu) - kpm**2 / self.e11)
        q = np.sqrt(q2)
        if q.imag < 0.0 or (q.imag == 0.0 and q.real < 0.0):
            q = -q
        return complex(q)


@dataclass(frozen=True)
class LayerStack:
    """Layers listed bottom to top; the exterior on both sides is the
    background medium carried by WaveParams."""

    layers: tuple[Layer, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a stack needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))

    @classmethod
    def uniform_slab(cls, thickness: float, eps, mu) -> "LayerStack":
        return cls(layers=(Layer(thickness, eps, mu),))

    @property
    def thickness(self) -> float:
        return sum(layer.thickness for layer in self.layers)


@dataclass(frozen=True)
class ModeAmplitudes:
    """Outgoing amplitudes per transverse order, midplane-referenced.

    `a` multiplies the down-going wave e^{-i nu_m x1} below the slab and
    `b` the up-going wave e^{+i nu_m x1} above it.
    """

    orders: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def order_index(self, order: int) -> int:
        hits = np.nonzero(self.orders == order)[0]
        if hits.size != 1:
            raise KeyError(f"order {order} not present")
        return int(hits[0])

    def flux_balance(self, wave: WaveParams) -> float:
        """Outgoing power in propagating orders over the incident power.

        Equals 1 for a lossless slab and drops below 1 with absorption.
        """
        nu_inc = nu_exponent(wave, wave.incident_order)
        total = 0.0
        for i, m in enumerate(self.orders):
            nu = nu_exponent(wave, int(m))
            if nu.imag == 0.0:
                total += nu.real * (abs(self.a[i]) ** 2 + abs(self.b[i]) ** 2)
        return total / nu_inc.real


def _star(sa, sb):
    """Redheffer product of two scattering 4-tuples (r, t, rp, tp)."""
    ra, ta, rpa, tpa = sa
    rb, tb, rpb, tpb = sb
    den = 1.0 - rpa * rb
    return (
        ra + tpa * rb * ta / den,
        tb * ta / den,
        rpb + tb * rpa * tpb / den,
        tpa * tpb / den,
    )


def _interface(y1: complex, y2: complex):
    den = y1 + y2
    r = (y1 - y2) / den
    return (r, 2.0 * y1 / den, -r, 2.0 * y2 / den)


def _face_coefficients(stack: LayerStack, wave: WaveParams, order: int):
    """Face-referenced (r, t) for one transverse order: r at the bottom
    face, t at the top face, incident amplitude measured at the bottom."""
    nu = nu_exponent(wave, order)
    y_out = nu / wave.eps0
    s = (0.0 + 0.0j, 1.0 + 0.0j, 0.0 + 0.0j, 1.0 + 0.0j)
    y_prev = y_out
    for layer in stack.layers:
        q = layer.wavenumber(wave, order)
        y = q / layer.e22
        phase = np.exp(1j * q * layer.thickness)
        s = _star(s, _interface(y_prev, y))
        s = _star(s, (0.0, phase, 0.0, phase))
        y_prev = y
    s = _star(s, _interface(y_prev, y_out))
    return s


def solve_layered(stack: LayerStack, wave: WaveParams, orders=None) -> ModeAmplitudes:
    """Scatter the incident order off the stack.

    Uniform layers do not couple transverse orders, so every order other
    than the incident one comes back with zero amplitude; they are still
    listed so the result aligns with microstructure output.
    """
    if orders is None:
        orders = (wave.incident_order,)
    orders = np.asarray(list(orders), dtype=int)
    a = np.zeros(orders.size, dtype=complex)
    b = np.zeros(orders.size, dtype=complex)

    m_inc = wave.incident_order
    if m_inc in orders:
        r, t, _, _ = _face_coefficients(stack, wave, m_inc)
        nu = nu_exponent(wave, m_inc)
        half = 0.5 * stack.thickness
        i = int(np.nonzero(orders == m_inc)[0][0])
        a[i] = r * np.exp(-2j * nu * half)
        b[i] = t * np.exp(-2j * nu * half)
    return ModeAmplitudes(orders=orders, a=a, b=b)


@dataclass(frozen=True)
class FieldProfile:
    """Evaluable 1D profile h(x1) of a layered solve, unit incident wave.

    The transverse factor e^{i (m_inc + kappa) x2} is left to the caller.
    Inside each layer the field is stored as two exponentials referenced
    to the layer's bottom face; thick strongly-evanescent layers would
    overflow that representation, which the construction-time consistency
    check turns into an error rather than silent garbage.
    """

    wave: WaveParams
    faces: np.ndarray  # layer interfaces, bottom to top (L + 1 values)
    q: np.ndarray  # wavenumber per layer
    coef: np.ndarray  # (L, 2) up/down coefficients per layer
    a: complex
    b: complex

    def __call__(self, x1) -> np.ndarray:
        x = np.asarray(x1, dtype=float)
        nu = nu_exponent(self.wave, self.wave.incident_order)
        out = np.empty(x.shape, dtype=complex)
        below = x <= self.faces[0]
        above = x >= self.faces[-1]
        out[below] = np.exp(1j * nu * x[below]) + self.a * np.exp(-1j * nu * x[below])
        out[above] = self.b * np.exp(1j * nu * x[above])
        inside = ~(below | above)
        if np.any(inside):
            layer = np.clip(np.searchsorted(self.faces, x[inside], side="right") - 1,
                            0, len(self.q) - 1)
            dx = x[inside] - self.faces[layer]
            out[inside] = self.coef[layer, 0] * np.exp(1j * self.q[layer] * dx) + self.coef[
                layer, 1
            ] * np.exp(-1j * self.q[layer] * dx)
        return out


def field_profile(stack: LayerStack, wave: WaveParams) -> FieldProfile:
    """Solve the stack and reconstruct the field layer by layer.

    Marches value and flux (h, (1/e22) dh/dx1) upward from the reflected
    exterior expression; the arrival value at the top face must reproduce
    the transmitted amplitude, which is asserted to 10^-9.
    """
    amps = solve_layered(stack, wave)
    i = amps.order_index(wave.incident_order)
    a_amp, b_amp = amps.a[i], amps.b[i]
    nu = nu_exponent(wave, wave.incident_order)
    half = 0.5 * stack.thickness

    faces = np.concatenate([[-half], -half + np.cumsum([ly.thickness for ly in stack.layers])])
    value = np.exp(-1j * nu * half) + a_amp * np.exp(1j * nu * half)
    flux = (1j * nu / wave.eps0) * (np.exp(-1j * nu * half) - a_amp * np.exp(1j * nu * half))

    qs = np.empty(len(stack.layers), dtype=complex)
    coef = np.empty((len(stack.layers), 2), dtype=complex)
    for k, layer in enumerate(stack.layers):
        q = layer.wavenumber(wave, wave.incident_order)
        y = q / layer.e22
        qs[k] = q
        coef[k, 0] = 0.5 * (value + flux / (1j * y))
        coef[k, 1] = 0.5 * (value - flux / (1j * y))
        up = np.exp(1j * q * layer.thickness)
        value = coef[k, 0] * up + coef[k, 1] / up
        flux = 1j * y * (coef[k, 0] * up - coef[k, 1] / up)

    top = b_amp * np.exp(1j * nu * half)
    gap = abs(value - top) / max(abs(top), 1.0)
    if not gap < 1e-9:
        raise SolverError(
            f"profile reconstruction mismatch {gap:.2e} at the top face; "
            "a layer is too thick/lossy for the two-exponential representation"
        )
    return FieldProfile(wave=wave, faces=faces, q=qs, coef=coef, a=a_amp, b=b_amp)


def airy_slab(thickness: float, eps, mu, wave: WaveParams) -> tuple[complex, complex]:
    """Closed-form face-referenced (r, t) of a single uniform slab.

    Independent of the scattering-matrix path on purpose: the two are
    checked against each other in the test suite and in `selftest`.
    """
    layer = Layer(thickness, eps, mu)
    nu = nu_exponent(wave, wave.incident_order)
    q = layer.wavenumber(wave, wave.incident_order)
    y0 = nu / wave.eps0
    y1 = q / layer.e22
    r01 = (y0 - y1) / (y0 + y1)
    t01 = 2.0 * y0 / (y0 + y1)
    t10 = 2.0 * y1 / (y0 + y1)
    phi = np.exp(1j * q * thickness)
    den = 1.0 - r01**2 * phi**2
    r = r01 * (1.0 - phi**2) / den
    t = t01 * t10 * phi / den
    return complex(r), complex(t)
