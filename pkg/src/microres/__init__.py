"""Effective media and slab scattering for 2D lattices of conducting
micro-resonators.

Modules:
    model       shared types and conventions
    effective   closed-form effective permeability (mu*, m, hat quantities)
    cellmesh    unit-cell mesh generation
    cell        exterior cell problem (corrector P_e, eps*)
    rayleigh    multipole oracle for eps* of circular inclusions
    layered     homogenized slab scattering (DtN, S-matrix, closed-form check)
    strip       strip mesh for the micro problem (double-noded interfaces)
    micro       micro FEM solve, amplitude extraction, energy bookkeeping
    averages    cell averaging and constitutive diagnostics
    config      run configuration files
    harness     batch runs, sweeps and reports
    cli         command-line entry point
"""
from __future__ import annotations

from .model import (
    CellGeometry,
    GeometryError,
    MaterialSet,
    SimpleRing,
    SlabLattice,
    SrrGeometric,
    SrrPhenomenological,
    SurfaceModel,
    WaveParams,
    WoodAnomalyWarning,
    nu_exponent,
    surface_sigma,
    validate_lattice,
)

__version__ = "0.1.0"
