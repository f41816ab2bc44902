"""End-to-end acceptance battery for the whole pipeline.

Nine checks, one test each, ordered from closed-form identities to the
full scale sweep. Every test prints a single PASS/FAIL line with the
measured numbers; run `pytest tests/test_acceptance.py -v -s` to see
the lines for passing checks too.

The sweep scene is the lossy ring lattice used throughout the test
suite: circle of radius 0.3, sheet resistivity 0.1, omega = 0.8 (one
propagating order), kappa = 0, slab thickness pi held fixed while the
cell count doubles. The homogenized reference uses the cell constants
of the identically discretized cell problem, so the sweep isolates the
finite-scale error from the fixed cell-mesh offset.
"""
import math
from dataclasses import dataclass

import numpy as np
import pytest

from microres.averages import (
    ConstitutiveReport,
    EffectiveMedia,
    compute_cell_averages,
    constitutive_checks,
    twoscale_field_error,
)
from microres.cell import solve_exterior_cell
from microres.effective import mu_star_quadrature, mu_star_ring
from microres.layered import LayerStack, airy_slab, field_profile, solve_layered
from microres.micro import assemble_and_solve, discrete_energy_identity
from microres.model import (
    CellGeometry,
    MaterialSet,
    SimpleRing,
    SlabLattice,
    WaveParams,
)
from microres.rayleigh import rayleigh_oracle_eps_star
from microres.strip import build_strip_mesh

WAVE = WaveParams(omega=0.8, kappa=0.0, incident_order=0)
GEOM = CellGeometry.circle(0.3, n_segments=32)
GEOM_DEFAULT = CellGeometry.circle(0.3)
RING = MaterialSet(surface=SimpleRing(rho=0.1))
TRANSPARENT = MaterialSet(surface=None)
SWEEP_N2 = (8, 16, 32)


def verdict(ok: bool, name: str, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, f"{name}: {detail}"


def decreasing(values) -> bool:
    return all(x > y for x, y in zip(values, values[1:]))


def arrow(values) -> str:
    return " -> ".join(f"{v:.1e}" for v in values)


@dataclass(frozen=True)
class SweepPoint:
    n2: int
    a: complex
    b: complex
    report: ConstitutiveReport
    l2_error: float
    l2_control: float
    imbalance_rel: float


@pytest.fixture(scope="module")
def randomized_rings():
    rng = np.random.default_rng(7)
    draws = []
    for _ in range(100):
        radius = rng.uniform(0.05, 0.45)
        rho = rng.uniform(0.01, 10.0)
        omega = rng.uniform(0.1, 5.0)
        mu0 = rng.uniform(0.5, 2.0)
        geom = CellGeometry.circle(radius, n_segments=96)
        mats = MaterialSet(mu_matrix=mu0, mu_interior=mu0, surface=SimpleRing(rho=rho))
        quad = mu_star_quadrature(geom, mats, WaveParams(omega=omega, mu0=mu0))
        ring = mu_star_ring(radius, rho, omega, mu0)
        draws.append((abs(quad - ring), ring.imag))
    return draws


@pytest.fixture(scope="module")
def homogenized_reference():
    eff = EffectiveMedia.from_scene(GEOM, RING, WAVE, refine=1)
    stack = LayerStack.uniform_slab(math.pi, eff.eps_star, eff.mu_star)
    amps = solve_layered(stack, WAVE)
    i = amps.order_index(0)
    return eff, stack, complex(amps.a[i]), complex(amps.b[i])


@pytest.fixture(scope="module")
def sweep(homogenized_reference):
    eff, stack, _, _ = homogenized_reference
    prof = field_profile(stack, WAVE)
    points = []
    for n2 in SWEEP_N2:
        lat = SlabLattice(n1=n2 // 2, n2=n2)
        sol = assemble_and_solve(build_strip_mesh(GEOM, lat, refine=1), RING, WAVE)
        amps = sol.amplitudes
        i = amps.order_index(0)
        points.append(
            SweepPoint(
                n2=n2,
                a=complex(amps.a[i]),
                b=complex(amps.b[i]),
                report=constitutive_checks(compute_cell_averages(sol), eff),
                l2_error=twoscale_field_error(sol, eff, prof),
                l2_control=twoscale_field_error(sol, eff, prof, m_value=1.0),
                imbalance_rel=discrete_energy_identity(sol).imbalance_rel,
            )
        )
    return points


def test_1_mu_star_quadrature_matches_closed_form(randomized_rings):
    gap = max(g for g, _ in randomized_rings)
    verdict(
        gap <= 1e-12,
        "mu* quadrature vs closed form",
        f"max abs gap {gap:.2e} over 100 randomized draws (tol 1e-12)",
    )


def test_2_mu_star_is_passive(randomized_rings):
    worst = min(im for _, im in randomized_rings)
    verdict(
        worst > 0.0,
        "mu* positive imaginary part",
        f"min Im mu* {worst:.2e} over 100 randomized draws",
    )


def test_3_eps_star_oracle_match_and_convergence_order():
    details = []
    worst_rel, worst_order = 0.0, math.inf
    for radius in (0.1, 0.2, 0.3):
        poly = CellGeometry.circle(radius).as_polyline()
        es = [
            solve_exterior_cell(poly, RING, refine=k).eps_star[0, 0].real
            for k in (1, 2, 3)
        ]
        oracle = rayleigh_oracle_eps_star(radius)
        rel = abs(es[-1] - oracle) / oracle
        order = math.log2(abs(es[0] - es[1]) / abs(es[1] - es[2]))
        worst_rel = max(worst_rel, rel)
        worst_order = min(worst_order, order)
        details.append(f"R={radius}: rel {rel:.1e}, order {order:.2f}")
    verdict(
        worst_rel < 1e-2 and worst_order >= 1.5,
        "eps* vs multipole oracle",
        "; ".join(details) + " (tol 1e-2, order >= 1.5)",
    )


def test_4_discrete_energy_identity(sweep):
    imbalance = sweep[0].imbalance_rel
    verdict(
        imbalance <= 1e-8,
        "discrete energy identity",
        f"relative imbalance {imbalance:.2e} at n1=4, n2=8 (tol 1e-8)",
    )


def test_5_amplitudes_converge_to_homogenized_slab(homogenized_reference, sweep):
    _, _, ref_a, ref_b = homogenized_reference
    da = [abs(p.a - ref_a) for p in sweep]
    db = [abs(p.b - ref_b) for p in sweep]
    ok = decreasing(da) and decreasing(db) and da[-1] <= 5e-2 and db[-1] <= 5e-2
    verdict(
        ok,
        "reflection/transmission convergence",
        f"|dR| {arrow(da)}; |dT| {arrow(db)} (strictly decreasing, finest tol 5e-2)",
    )


def test_6_two_scale_field_convergence_with_control(sweep):
    l2 = [p.l2_error for p in sweep]
    control = [p.l2_control for p in sweep]
    above = all(c > e for c, e in zip(control, l2))
    verdict(
        decreasing(l2) and above,
        "two-scale field convergence",
        f"L2 {arrow(l2)} strictly decreasing; control with ratio 1 stays above "
        f"at {arrow(control)}",
    )


def test_7_deep_interior_ratio_locks_to_m(sweep):
    worst = sweep[-1].report.ratio_err_max
    verdict(
        worst <= 0.1,
        "deep-interior field ratio",
        f"max relative gap of h_i/h_e to the sheet ratio {worst:.2e} "
        f"at n2={sweep[-1].n2} (tol 0.1)",
    )


def test_8_constitutive_averages_and_jumps_improve(sweep):
    reports = [p.report for p in sweep]
    d = [r.d_err_median for r in reports]
    b = [r.b_err_median for r in reports]
    j = [r.j_cv_median for r in reports]
    et = [r.et_max for r in reports]
    ok = decreasing(d) and decreasing(b) and decreasing(j) and decreasing(et)
    verdict(
        ok,
        "constitutive averages and jump scalings",
        f"D err {arrow(d)}; b err {arrow(b)}; jump cv {arrow(j)}; "
        f"max E.t {arrow(et)} (all strictly decreasing)",
    )


def test_9_transparent_and_closed_form_controls(homogenized_reference):
    errors = []
    for refine in (1, 2):
        strip = build_strip_mesh(GEOM_DEFAULT, SlabLattice(n1=4, n2=8), refine=refine)
        amps = assemble_and_solve(strip, TRANSPARENT, WAVE).amplitudes
        i = amps.order_index(0)
        errors.append(max(abs(amps.a[i]), abs(amps.b[i] - 1.0)))
    eff, stack, ref_a, ref_b = homogenized_reference
    r, t = airy_slab(stack.thickness, complex(eff.eps_star[0, 0]), eff.mu_star, WAVE)
    carrier = np.exp(-1j * WAVE.nu_incident * stack.thickness)
    airy_gap = max(abs(ref_a - r * carrier), abs(ref_b - t * carrier))
    ok = errors[0] < 1e-3 and errors[1] < errors[0] and airy_gap <= 1e-12
    verdict(
        ok,
        "transparent and closed-form controls",
        f"plane-wave error {arrow(errors)} (tol 1e-3, decreasing); "
        f"layered vs Airy oracle {airy_gap:.1e} (tol 1e-12)",
    )
