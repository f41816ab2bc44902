"""Multipole (lattice-sum) value of eps* for a square array of perfectly
conducting circular cylinders.

This is a deliberately independent check on the cell-problem FEM: the only
shared ingredient is the geometry.  The classical construction expands the
potential around one cylinder in odd circular harmonics, couples the array
through square-lattice sums S_n, and reads eps* off the dipole coefficient.

Lattice sums: S_2 = pi (the standard conditionally-convergent assignment for
this summation order); S_4 = Gamma(1/4)^8 / (960 pi^2); S_6, S_10, ... vanish
by square symmetry; higher S_{4k} follow from the even-lattice-sum recursion
  (n-3)(2n+1)(2n-1) S_{2n} = 3 * sum_{m=2}^{n-2} (2m-1)(2n-2m-1) S_{2m} S_{2n-2m}.
"""
from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np

__all__ = [
    "MultipoleDivergenceWarning",
    "square_lattice_sum",
    "rayleigh_oracle_eps_star",
]

# Gamma(1/4)^8 / (960 pi^2), cross-checked against direct summation in tests
S4_SQUARE = 3.1512120021538975


class MultipoleDivergenceWarning(UserWarning):
    """Successive multipole truncations disagree beyond the certification tol."""


@lru_cache(maxsize=None)
def _sums_through(n_max: int) -> tuple[float, ...]:
    """S_2, S_4, ..., S_{n_max} for the unit square lattice (S_2 treated
    specially; odd sums never arise)."""
    s = {2: math.pi, 4: S4_SQUARE, 6: 0.0}
    for two_n in range(8, n_max + 1, 2):
        n = two_n // 2
        acc = 0.0
        for m in range(2, n - 1):
            acc += (2 * m - 1) * (2 * n - 2 * m - 1) * s[2 * m] * s[2 * n - 2 * m]
        s[two_n] = 3.0 * acc / ((n - 3) * (2 * n + 1) * (2 * n - 1))
    return tuple(s[k] for k in range(2, n_max + 1, 2))


def square_lattice_sum(n: int) -> float:
    """S_n = sum over nonzero lattice points z of z^{-n} (even n >= 2)."""
    if n < 2 or n % 2 != 0:
        raise ValueError(f"lattice sums defined for even n >= 2, got {n}")
    return _sums_through(max(n, 8))[(n - 2) // 2]


def _dipole_coefficient(radius: float, n_harmonics: int) -> float:
    """Solve the truncated multipole system; returns the dipole coefficient B1
    for unit applied field and perfectly conducting cylinders."""
    ls = np.arange(1, 2 * n_harmonics, 2)  # odd harmonic orders
    n = len(ls)
    a = np.eye(n)
    for i, l in enumerate(ls):
        for j, m in enumerate(ls):
            s_lm = square_lattice_sum(int(l + m))
            if s_lm != 0.0:
                a[i, j] -= radius ** (2 * l) * math.comb(int(m + l - 1), int(l)) * s_lm
    rhs = np.zeros(n)
    rhs[0] = radius**2
    return float(np.linalg.solve(a, rhs)[0])


def rayleigh_oracle_eps_star(
    R: float, eps1: float = 1.0, order: int = 6, divergence_tol: float = 1e-6
) -> float:
    """Effective permittivity of a square array of perfectly conducting
    cylinders of radius R in a matrix of permittivity eps1.

    Args:
        R: cylinder radius, 0 < R <= 0.35 (series converges comfortably).
        eps1: matrix permittivity (real).
        order: number of retained odd multipole harmonics, >= 2.
        divergence_tol: flag threshold on the change from order-1 to order.

    Returns:
        eps* as a real scalar; warns MultipoleDivergenceWarning if the last
        truncation step moved the value by more than divergence_tol.
    """
    if not 0.0 < R <= 0.35:
        raise ValueError(f"oracle certified for 0 < R <= 0.35, got {R}")
    if order < 2:
        raise ValueError(f"order must be >= 2, got {order}")
    prev = eps1 * (1.0 + 2.0 * math.pi * _dipole_coefficient(R, order - 1))
    value = eps1 * (1.0 + 2.0 * math.pi * _dipole_coefficient(R, order))
    if abs(value - prev) > divergence_tol * max(1.0, abs(value)):
        warnings.warn(
            f"multipole truncation not settled at order {order} "
            f"(last step {abs(value - prev):.3e}); increase order",
            MultipoleDivergenceWarning,
            stacklevel=2,
        )
    return value
