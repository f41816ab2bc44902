"""Experiment orchestration: single solves, scale sweeps, reports.

Every run_* function takes a validated RunConfig, performs the numeric
work, optionally writes CSV and gnuplot-ready .dat files into an output
directory, and returns the computed objects for programmatic use. All
numeric output is written with 17 significant digits, complex values as
re/im column pairs, so a re-run of an identical configuration produces
bitwise-identical files.

The convergence sweep compares each micro solve against one shared
homogenized reference built from the identically discretized cell
problem (see RunConfig.reference_cell_refine); near-singular solves are
skipped and reported instead of aborting the sweep.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .averages import (
    EffectiveMedia,
    compute_cell_averages,
    constitutive_checks,
    twoscale_field_error,
    write_cell_averages_csv,
)
from .cell import SolverError, solve_exterior_cell
from .cellmesh import dump_mesh
from .config import ConfigError, RunConfig
from .effective import mu_star_quadrature, mu_star_ring, mu_star_srr
from .layered import LayerStack, airy_slab, field_profile, solve_layered
from .micro import (
    assemble_and_solve,
    discrete_energy_identity,
    export_fields,
    galerkin_residual,
)
from .model import (
    CellGeometry,
    MaterialSet,
    SimpleRing,
    SlabLattice,
    SrrPhenomenological,
    WaveParams,
)
from .rayleigh import rayleigh_oracle_eps_star
from .strip import build_strip_mesh


def _fmt(x: float) -> str:
    return f"{float(x):.17e}"


def _write_csv(path: str, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_dat(path: str, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(row) + "\n")


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _micro_solve(cfg: RunConfig, n2: int):
    strip = build_strip_mesh(cfg.geometry, cfg.lattice_for(n2), refine=cfg.refine)
    return assemble_and_solve(
        strip,
        cfg.materials,
        cfg.wave,
        m_modes=cfg.m_modes,
        residual_tol=cfg.residual_tol,
    )


def _scalar_quantities(pairs) -> tuple[list[str], list[list[str]]]:
    rows = [[name, _fmt(complex(z).real), _fmt(complex(z).imag)] for name, z in pairs]
    return ["quantity", "re", "im"], rows


def _effective_media(cfg: RunConfig) -> EffectiveMedia:
    try:
        return EffectiveMedia.from_scene(
            cfg.geometry, cfg.materials, cfg.wave, refine=cfg.reference_cell_refine
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def effective_report(cfg: RunConfig) -> dict:
    """Effective constants plus every applicable independent cross-check."""
    geom, mats, wave = cfg.geometry, cfg.materials, cfg.wave
    eff = _effective_media(cfg)
    report: dict = {
        "eff": eff,
        "mu_quadrature": None,
        "mu_closed_form": None,
        "eps_rayleigh": None,
        "tau_scan": None,
    }
    if mats.surface is None:
        return report
    report["mu_quadrature"] = mu_star_quadrature(geom, mats, wave)
    surf = mats.surface
    uniform_mu = (
        mats.mu_matrix == mats.mu_interior and mats.mu_matrix.imag == 0.0
    )
    if geom.kind == "circle" and uniform_mu:
        mu0 = mats.mu_matrix.real
        if isinstance(surf, SimpleRing):
            report["mu_closed_form"] = mu_star_ring(geom.radius, surf.rho, wave.omega, mu0)
        elif isinstance(surf, SrrPhenomenological):
            report["mu_closed_form"] = mu_star_srr(
                geom.radius, surf.rho, surf.tau, wave.omega, mu0
            )
            top = 2.0 * surf.tau if surf.tau > 0.0 else 1.0
            taus = np.linspace(0.0, top, 41)
            report["tau_scan"] = (
                taus,
                np.array(
                    [mu_star_srr(geom.radius, surf.rho, t, wave.omega, mu0) for t in taus]
                ),
            )
    eps_scalar = mats.eps_isotropic_matrix()
    if geom.kind == "circle" and eps_scalar is not None and eps_scalar.imag == 0.0:
        if geom.radius <= 0.35:
            report["eps_rayleigh"] = rayleigh_oracle_eps_star(
                geom.radius, eps1=eps_scalar.real
            )
    return report


def run_effective(cfg: RunConfig, out_dir: str | None = None) -> dict:
    """Compute, print and optionally export the effective-media report."""
    report = effective_report(cfg)
    eff = report["eff"]
    e = eff.eps_star
    label = (
        "uniform medium, no sheet"
        if cfg.materials.surface is None
        else f"cell FEM, refine={cfg.reference_cell_refine}"
    )
    print(f"eps* ({label}): "
          f"[[{e[0, 0]:.12g}, {e[0, 1]:.12g}], [{e[1, 0]:.12g}, {e[1, 1]:.12g}]]")
    if report["eps_rayleigh"] is not None:
        gap = abs(e[0, 0] - report["eps_rayleigh"]) / abs(report["eps_rayleigh"])
        print(f"eps* (multipole oracle):  {report['eps_rayleigh']:.12g}   rel gap {gap:.2e}")
    print(f"mu_hat = {eff.mu.mu_hat:.12g}   rho_hat = {eff.mu.rho_hat:.12g}")
    print(f"m = {eff.m:.12g}")
    print(f"mu* (polygon chain):      {eff.mu_star:.12g}")
    if report["mu_quadrature"] is not None:
        print(f"mu* (quadrature):         {report['mu_quadrature']:.12g}")
    if report["mu_closed_form"] is not None:
        gap = abs(report["mu_quadrature"] - report["mu_closed_form"])
        print(f"mu* (closed form):        {report['mu_closed_form']:.12g}   abs gap {gap:.2e}")
    if out_dir is not None:
        _ensure_dir(out_dir)
        pairs = [
            ("eps_star_11", e[0, 0]),
            ("eps_star_12", e[0, 1]),
            ("eps_star_21", e[1, 0]),
            ("eps_star_22", e[1, 1]),
            ("mu_hat", eff.mu.mu_hat),
            ("rho_hat", eff.mu.rho_hat),
            ("m", eff.m),
            ("mu_star", eff.mu_star),
        ]
        if report["mu_quadrature"] is not None:
            pairs.append(("mu_star_quadrature", report["mu_quadrature"]))
        if report["mu_closed_form"] is not None:
            pairs.append(("mu_star_closed_form", report["mu_closed_form"]))
        if report["eps_rayleigh"] is not None:
            pairs.append(("eps_star_rayleigh", report["eps_rayleigh"]))
        header, rows = _scalar_quantities(pairs)
        _write_csv(os.path.join(out_dir, "effective.csv"), header, rows)
        if report["tau_scan"] is not None:
            taus, values = report["tau_scan"]
            rows = [[_fmt(t), _fmt(v.real), _fmt(v.imag)] for t, v in zip(taus, values)]
            _write_csv(
                os.path.join(out_dir, "tau_scan.csv"), ["tau", "re_mu_star", "im_mu_star"], rows
            )
            _write_dat(os.path.join(out_dir, "tau_scan.dat"),
                       ["tau", "re_mu_star", "im_mu_star"], rows)
    return report


def run_cell(cfg: RunConfig, out_dir: str | None = None):
    """Solve the exterior cell problem and report eps*."""
    poly = cfg.geometry.as_polyline()
    corr = solve_exterior_cell(poly, cfg.materials, refine=cfg.refine)
    e = corr.eps_star
    print(f"eps* = [[{e[0, 0]:.12g}, {e[0, 1]:.12g}], [{e[1, 0]:.12g}, {e[1, 1]:.12g}]]")
    print(f"corrector residual {corr.residual_rel:.2e}, exterior area {corr.area_exterior:.12g}")
    if out_dir is not None:
        _ensure_dir(out_dir)
        pairs = [
            ("eps_star_11", e[0, 0]),
            ("eps_star_12", e[0, 1]),
            ("eps_star_21", e[1, 0]),
            ("eps_star_22", e[1, 1]),
            ("residual_rel", corr.residual_rel),
            ("area_exterior", corr.area_exterior),
        ]
        header, rows = _scalar_quantities(pairs)
        _write_csv(os.path.join(out_dir, "cell.csv"), header, rows)
        if cfg.write_fields:
            dump_mesh(corr.mesh, os.path.join(out_dir, "cell_mesh.dat"))
    return corr


def _reference_stack(cfg: RunConfig, eff: EffectiveMedia) -> LayerStack:
    thickness = cfg.lattice_for(cfg.n2_list[0]).thickness
    try:
        return LayerStack.uniform_slab(thickness, eff.eps_star, eff.mu_star)
    except ValueError as exc:
        raise SolverError(f"homogenized reference stack: {exc}") from exc


def run_homogenized(cfg: RunConfig, out_dir: str | None = None):
    """Solve the homogenized slab; returns (amplitudes, profile, eff)."""
    eff = _effective_media(cfg)
    stack = _reference_stack(cfg, eff)
    amps = solve_layered(stack, cfg.wave)
    prof = field_profile(stack, cfg.wave)
    i = amps.order_index(cfg.wave.incident_order)
    print(f"homogenized slab, thickness {stack.thickness:.12g}: "
          f"a = {amps.a[i]:.12g}, b = {amps.b[i]:.12g}, "
          f"flux balance {amps.flux_balance(cfg.wave):.12g}")
    if out_dir is not None:
        _ensure_dir(out_dir)
        pairs = [
            ("eps_star_11", eff.eps_star[0, 0]),
            ("eps_star_22", eff.eps_star[1, 1]),
            ("mu_star", eff.mu_star),
            ("m", eff.m),
            ("thickness", stack.thickness),
            ("a", amps.a[i]),
            ("b", amps.b[i]),
            ("flux_balance", amps.flux_balance(cfg.wave)),
        ]
        header, rows = _scalar_quantities(pairs)
        _write_csv(os.path.join(out_dir, "homogenized.csv"), header, rows)
        lat = cfg.lattice_for(cfg.n2_list[0])
        xs = np.linspace(lat.gamma_minus - 1.0, lat.gamma_plus + 1.0, 1201)
        hs = prof(xs)
        _write_dat(
            os.path.join(out_dir, "homogenized_profile.dat"),
            ["x1", "re_h", "im_h"],
            [[_fmt(x), _fmt(h.real), _fmt(h.imag)] for x, h in zip(xs, hs)],
        )
    return amps, prof, eff


def run_micro(cfg: RunConfig, n2: int, out_dir: str | None = None):
    """One micro solve at eta = 2*pi/n2 with field and amplitude export."""
    t0 = time.perf_counter()
    sol = _micro_solve(cfg, n2)
    wall = time.perf_counter() - t0
    amps = sol.amplitudes
    i = amps.order_index(cfg.wave.incident_order)
    budget = discrete_energy_identity(sol)
    print(f"micro n2={n2}: a = {amps.a[i]:.12g}, b = {amps.b[i]:.12g}, "
          f"imbalance {budget.imbalance_rel:.2e}, {wall:.1f}s")
    if out_dir is not None:
        _ensure_dir(out_dir)
        rows = [
            [str(int(m)), _fmt(amps.a[k].real), _fmt(amps.a[k].imag),
             _fmt(amps.b[k].real), _fmt(amps.b[k].imag)]
            for k, m in enumerate(amps.orders)
        ]
        _write_csv(
            os.path.join(out_dir, f"amplitudes_n2_{n2}.csv"),
            ["order", "re_a", "im_a", "re_b", "im_b"],
            rows,
        )
        pairs = [
            ("a", amps.a[i]),
            ("b", amps.b[i]),
            ("input_flux", budget.input_flux),
            ("reflected_flux", budget.reflected_flux),
            ("transmitted_flux", budget.transmitted_flux),
            ("volume_absorption", budget.volume_absorption),
            ("interface_absorption", budget.interface_absorption),
            ("imbalance_rel", budget.imbalance_rel),
            ("residual_rel", sol.residual_rel),
        ]
        header, srows = _scalar_quantities(pairs)
        _write_csv(os.path.join(out_dir, f"summary_n2_{n2}.csv"), header, srows)
        if cfg.write_fields:
            export_fields(sol, os.path.join(out_dir, f"fields_n2_{n2}.dat"))
        if cfg.write_averages:
            avgs = compute_cell_averages(sol, offsets=cfg.offsets)
            write_cell_averages_csv(avgs, os.path.join(out_dir, f"cells_n2_{n2}.csv"))
    return sol


@dataclass(frozen=True)
class ConvergenceRow:
    """One sweep point; NaN-filled when the solve was skipped."""

    n2: int
    eta: float
    a: complex
    b: complex
    abs_da: float
    abs_db: float
    l2_error: float
    l2_control: float
    d_err_median: float
    b_err_median: float
    ratio_err_median: float
    j_cv_median: float
    et_max: float
    offset_gap_max: float
    imbalance_rel: float
    wall_s: float
    skipped: bool = False
    note: str = ""


@dataclass(frozen=True)
class ConvergenceReport:
    """Sweep table plus the shared homogenized reference it was built on."""

    ref_a: complex
    ref_b: complex
    eff: EffectiveMedia
    rows: list[ConvergenceRow]
    flags: list[str]

    @property
    def active_rows(self) -> list[ConvergenceRow]:
        return [r for r in self.rows if not r.skipped]

    @property
    def monotone_amplitudes(self) -> bool:
        rows = self.active_rows
        return all(
            rows[k + 1].abs_da < rows[k].abs_da and rows[k + 1].abs_db < rows[k].abs_db
            for k in range(len(rows) - 1)
        )

    @property
    def monotone_l2(self) -> bool:
        rows = self.active_rows
        return all(rows[k + 1].l2_error < rows[k].l2_error for k in range(len(rows) - 1))


_CONVERGE_COLUMNS = [
    "n2", "eta",
    "re_a", "im_a", "re_b", "im_b",
    "re_a_ref", "im_a_ref", "re_b_ref", "im_b_ref",
    "abs_dR", "abs_dT",
    "l2_error", "l2_control",
    "d_err_median", "b_err_median", "ratio_err_median",
    "j_cv_median", "et_max", "offset_gap_max",
    "imbalance_rel", "wall_s", "skipped", "note",
]


def _converge_row_cells(row: ConvergenceRow, ref_a: complex, ref_b: complex) -> list[str]:
    return [
        str(row.n2), _fmt(row.eta),
        _fmt(row.a.real), _fmt(row.a.imag), _fmt(row.b.real), _fmt(row.b.imag),
        _fmt(ref_a.real), _fmt(ref_a.imag), _fmt(ref_b.real), _fmt(ref_b.imag),
        _fmt(row.abs_da), _fmt(row.abs_db),
        _fmt(row.l2_error), _fmt(row.l2_control),
        _fmt(row.d_err_median), _fmt(row.b_err_median), _fmt(row.ratio_err_median),
        _fmt(row.j_cv_median), _fmt(row.et_max), _fmt(row.offset_gap_max),
        _fmt(row.imbalance_rel), _fmt(row.wall_s), str(int(row.skipped)), row.note,
    ]


def run_converge(
    cfg: RunConfig,
    out_dir: str | None = None,
    threads: int = 1,
    deterministic: bool = False,
) -> ConvergenceReport:
    """Sweep the scale list against one shared homogenized reference.

    With deterministic=True the sweep runs single threaded and the wall
    time column is zeroed so identical configurations produce
    bitwise-identical files.
    """
    if len(cfg.n2_list) < 2:
        raise ConfigError("a convergence run needs at least two n2 values")
    eff = _effective_media(cfg)
    stack = _reference_stack(cfg, eff)
    amps_ref = solve_layered(stack, cfg.wave)
    prof = field_profile(stack, cfg.wave)
    iref = amps_ref.order_index(cfg.wave.incident_order)
    ref_a, ref_b = complex(amps_ref.a[iref]), complex(amps_ref.b[iref])

    nan = float("nan")

    def job(n2: int) -> ConvergenceRow:
        t0 = time.perf_counter()
        try:
            sol = _micro_solve(cfg, n2)
        except SolverError as exc:
            return ConvergenceRow(
                n2=n2, eta=2.0 * math.pi / n2, a=complex(nan, nan), b=complex(nan, nan),
                abs_da=nan, abs_db=nan, l2_error=nan, l2_control=nan,
                d_err_median=nan, b_err_median=nan, ratio_err_median=nan,
                j_cv_median=nan, et_max=nan, offset_gap_max=nan, imbalance_rel=nan,
                wall_s=time.perf_counter() - t0, skipped=True, note=str(exc),
            )
        amps = sol.amplitudes
        i = amps.order_index(cfg.wave.incident_order)
        a, b = complex(amps.a[i]), complex(amps.b[i])
        rep = constitutive_checks(compute_cell_averages(sol, offsets=cfg.offsets), eff)
        l2 = twoscale_field_error(sol, eff, prof)
        l2c = twoscale_field_error(sol, eff, prof, m_value=1.0)
        budget = discrete_energy_identity(sol)
        return ConvergenceRow(
            n2=n2, eta=sol.strip.eta, a=a, b=b,
            abs_da=abs(a - ref_a), abs_db=abs(b - ref_b),
            l2_error=l2, l2_control=l2c,
            d_err_median=rep.d_err_median, b_err_median=rep.b_err_median,
            ratio_err_median=rep.ratio_err_median, j_cv_median=rep.j_cv_median,
            et_max=rep.et_max, offset_gap_max=rep.offset_gap_max,
            imbalance_rel=budget.imbalance_rel,
            wall_s=time.perf_counter() - t0,
        )

    order = sorted(cfg.n2_list)
    workers = 1 if deterministic else max(1, int(threads))
    if workers == 1:
        rows = [job(n2) for n2 in order]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, order))
    if deterministic:
        rows = [replace(r, wall_s=0.0) for r in rows]

    flags = []
    for row in rows:
        if row.skipped:
            flags.append(f"n2={row.n2} skipped: {row.note}")
    report = ConvergenceReport(ref_a=ref_a, ref_b=ref_b, eff=eff, rows=rows, flags=flags)
    if not report.monotone_amplitudes:
        flags.append("amplitude errors |dR|, |dT| are not strictly decreasing")
    if not report.monotone_l2:
        flags.append("two-scale L2 errors are not strictly decreasing")

    print(f"reference: a = {ref_a:.12g}, b = {ref_b:.12g} "
          f"(eps* = {eff.eps_star[0, 0]:.12g}, mu* = {eff.mu_star:.12g})")
    print("  n2      |dR|        |dT|        L2          L2(m=1)     imbalance   wall")
    for row in rows:
        if row.skipped:
            print(f"  {row.n2:<6d} skipped: {row.note}")
        else:
            print(f"  {row.n2:<6d} {row.abs_da:<11.4e} {row.abs_db:<11.4e} "
                  f"{row.l2_error:<11.4e} {row.l2_control:<11.4e} "
                  f"{row.imbalance_rel:<11.4e} {row.wall_s:.1f}s")
    for flag in flags:
        print(f"  flag: {flag}")

    if out_dir is not None:
        _ensure_dir(out_dir)
        cells = [_converge_row_cells(row, ref_a, ref_b) for row in rows]
        _write_csv(os.path.join(out_dir, "converge.csv"), _CONVERGE_COLUMNS, cells)
        numeric = [c[:-2] for c in cells if c[-2] == "0"]
        _write_dat(os.path.join(out_dir, "converge.dat"), _CONVERGE_COLUMNS[:-2], numeric)
    return report


def run_diagnose(cfg: RunConfig, out_dir: str | None = None, threads: int = 1) -> list[dict]:
    """Per-scale solver health: residuals, power balance, law residuals."""
    eff = _effective_media(cfg)

    def job(n2: int) -> dict:
        t0 = time.perf_counter()
        sol = _micro_solve(cfg, n2)
        rep = constitutive_checks(compute_cell_averages(sol, offsets=cfg.offsets), eff)
        budget = discrete_energy_identity(sol)
        return {
            "n2": n2,
            "eta": sol.strip.eta,
            "residual_rel": sol.residual_rel,
            "galerkin_residual": galerkin_residual(sol),
            "imbalance_rel": budget.imbalance_rel,
            "d_err_median": rep.d_err_median,
            "b_err_median": rep.b_err_median,
            "ratio_err_median": rep.ratio_err_median,
            "j_cv_median": rep.j_cv_median,
            "et_max": rep.et_max,
            "offset_gap_max": rep.offset_gap_max,
            "wall_s": time.perf_counter() - t0,
        }

    order = sorted(cfg.n2_list)
    workers = max(1, int(threads))
    if workers == 1:
        results = [job(n2) for n2 in order]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, order))
    for r in results:
        print(f"n2={r['n2']}: residual {r['residual_rel']:.2e}, "
              f"galerkin {r['galerkin_residual']:.2e}, imbalance {r['imbalance_rel']:.2e}, "
              f"D err {r['d_err_median']:.3e}, b err {r['b_err_median']:.3e}, "
              f"ratio err {r['ratio_err_median']:.3e}")
    if out_dir is not None:
        _ensure_dir(out_dir)
        keys = list(results[0].keys())
        rows = [
            [str(r["n2"])] + [_fmt(r[k]) for k in keys[1:]]
            for r in results
        ]
        _write_csv(os.path.join(out_dir, "diagnose.csv"), keys, rows)
        _write_dat(os.path.join(out_dir, "diagnose.dat"), keys, rows)
    return results


def run_selftest() -> tuple[bool, list[str]]:
    """Built-in quick checks; independent of any configuration file.

    Returns (all_ok, report lines). Each check exercises one dual route:
    quadrature vs closed form, FEM vs multipole oracle, scattering matrix
    vs closed form, micro solver vs exact transparency and conservation.
    """
    lines: list[str] = []
    ok = True

    def record(passed: bool, name: str, detail: str):
        nonlocal ok
        ok = ok and passed
        lines.append(f"{'pass' if passed else 'FAIL'}  {name}: {detail}")

    rng = np.random.default_rng(0)
    gap_max, im_min = 0.0, np.inf
    for _ in range(20):
        r = rng.uniform(0.05, 0.45)
        rho = rng.uniform(0.01, 10.0)
        omega = rng.uniform(0.1, 5.0)
        mu0 = rng.uniform(0.5, 2.0)
        geom = CellGeometry.circle(r, n_segments=96)
        mats = MaterialSet(mu_matrix=mu0, mu_interior=mu0, surface=SimpleRing(rho=rho))
        wave = WaveParams(omega=omega, mu0=mu0)
        quad = mu_star_quadrature(geom, mats, wave)
        ring = mu_star_ring(r, rho, omega, mu0)
        gap_max = max(gap_max, abs(quad - ring))
        im_min = min(im_min, ring.imag)
    record(gap_max <= 1e-12, "mu* quadrature vs closed form", f"max gap {gap_max:.2e}")
    record(im_min > 0.0, "mu* passivity", f"min Im mu* {im_min:.2e}")

    geom = CellGeometry.circle(0.2, n_segments=32)
    mats = MaterialSet(surface=SimpleRing(rho=0.1))
    fem = solve_exterior_cell(geom.as_polyline(), mats, refine=1).eps_star[0, 0].real
    oracle = rayleigh_oracle_eps_star(0.2)
    rel = abs(fem - oracle) / oracle
    record(rel < 1e-2, "eps* FEM vs multipole oracle", f"rel gap {rel:.2e}")

    wave = WaveParams(omega=0.8)
    stack = LayerStack.uniform_slab(np.pi, 1.79, 0.8331 + 0.1391j)
    amps = solve_layered(stack, wave)
    r_af, _ = airy_slab(np.pi, 1.79, 0.8331 + 0.1391j, wave)
    nu = wave.nu_incident
    gap = abs(amps.a[0] - r_af * np.exp(-1j * nu * np.pi))
    record(gap <= 1e-12, "layered vs closed-form slab", f"abs gap {gap:.2e}")

    lat = SlabLattice(n1=4, n2=8)
    geom = CellGeometry.circle(0.3, n_segments=32)
    strip = build_strip_mesh(geom, lat, refine=1)
    tsol = assemble_and_solve(strip, MaterialSet(surface=None), wave)
    tamps = tsol.amplitudes
    i0 = tamps.order_index(0)
    worst = max(abs(tamps.a[i0]), abs(tamps.b[i0] - 1.0))
    record(worst < 2e-3, "transparent strip control", f"max amplitude error {worst:.2e}")

    sol = assemble_and_solve(strip, MaterialSet(surface=SimpleRing(rho=0.1)), wave)
    budget = discrete_energy_identity(sol)
    record(budget.imbalance_rel <= 1e-8, "discrete energy identity",
           f"relative imbalance {budget.imbalance_rel:.2e}")
    record(budget.interface_absorption > 0.0, "resistive sheet absorbs",
           f"interface absorption {budget.interface_absorption:.3e}")
    return ok, lines
