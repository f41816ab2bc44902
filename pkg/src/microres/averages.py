"""Cell-by-cell field averages and effective-law diagnostics.

The homogenized constitutive laws relate non-standard averages: h is
averaged over the exterior (resp. interior) area of each micro-cell, b
over the whole cell, while E and D are averaged along line segments that
stay clear of the resonator. This module computes all of them from a
strip solution, exploiting that every cell is an exact scaled translate
of one template, so each line's element-crossing pattern is computed
once and reused for the whole slab.

Sign convention for the loop current: j = sigma_s E.t = h_i - h_e, the
interior trace minus the exterior one.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .cell import ROT, _p1_geometry, solve_exterior_cell
from .cellmesh import INTERIOR, MeshError
from .effective import EffectiveMu
from .micro import MicroSolution, _scalar_eps
from .model import CellGeometry, MaterialSet, WaveParams, surface_sigma
from .strip import StripMesh

DEFAULT_OFFSETS = (0.05, 0.95)
ZERO_DENOM = 1e-14


@dataclass(frozen=True)
class EffectiveMedia:
    """Everything the homogenized description needs for one scene."""

    eps_star: np.ndarray
    mu: EffectiveMu

    @property
    def mu_star(self) -> complex:
        return self.mu.mu_star

    @property
    def m(self) -> complex:
        return self.mu.m_ratio

    @classmethod
    def from_scene(
        cls, geom: CellGeometry, mats: MaterialSet, wave: WaveParams, refine: int = 2
    ) -> "EffectiveMedia":
        """Effective constants of the meshed polygon.

        The polyline view keeps the reference consistent with what the
        strip solver discretizes; an exact-circle mu* would differ at the
        polygon-approximation level and pollute convergence floors.

        A transparent scene (surface None) is the vanishing-conductivity
        limit rho_hat -> infinity, m -> 1: with matched bulk materials the
        composite is the uniform matrix medium and needs no cell solve.
        """
        if mats.surface is None:
            if not (
                np.array_equal(mats.eps_matrix, mats.eps_interior)
                and mats.mu_matrix == mats.mu_interior
            ):
                raise ValueError(
                    "surface = none with mismatched bulk materials has no "
                    "homogenized description here; matched materials give "
                    "the uniform matrix medium"
                )
            mu = EffectiveMu(
                mu_hat=mats.mu_interior * geom.as_polyline().area,
                rho_hat=complex(np.inf),
                m_ratio=1.0 + 0.0j,
                mu_star=mats.mu_matrix,
            )
            return cls(eps_star=mats.eps_matrix.astype(complex), mu=mu)
        poly = geom.as_polyline()
        corr = solve_exterior_cell(poly, mats, refine=refine)
        return cls(eps_star=corr.eps_star, mu=EffectiveMu.from_scene(poly, mats, wave))


@dataclass(frozen=True)
class CellAverages:
    """Field averages of one micro-cell; complex unless noted.

    e_avg / d_avg come from the first line offset, e_avg_alt / d_avg_alt
    from the second; offset_gap is the largest entrywise difference and
    measures the fine-scale variation the averages are supposed to kill.
    """

    i1: int
    i2: int
    center: tuple
    deep: bool
    h_e_avg: complex
    h_i_avg: complex
    b_avg: complex
    e_avg: np.ndarray
    d_avg: np.ndarray
    e_avg_alt: np.ndarray
    d_avg_alt: np.ndarray
    offset_gap: float
    j_mean: complex
    j_std: float
    et_max: float


def _line_cover(tpl_nodes, tpl_tris, offset: float, horizontal: bool):
    """Element crossings of the unit-cell line {y2 = offset} (horizontal)
    or {y1 = offset}: returns (tri_ids, lengths) with lengths summing to 1."""
    v = tpl_nodes[tpl_tris]  # (t, 3, 2)
    lo = np.zeros(len(tpl_tris))
    hi = np.ones(len(tpl_tris))
    run, cross = (0, 1) if horizontal else (1, 0)
    for k in range(3):
        vi = v[:, k]
        vj = v[:, (k + 1) % 3]
        d = vj - vi
        # inside condition d x (p - vi) >= 0 is linear in the line parameter
        coeff = d[:, cross] * (1.0 if horizontal else -1.0) * (-1.0)
        const = d[:, run] * (offset - vi[:, cross]) * (1.0 if horizontal else -1.0)
        const = const + d[:, cross] * vi[:, run] * (1.0 if horizontal else -1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = -const / coeff
        pos = coeff > 0.0
        neg = coeff < 0.0
        lo = np.where(pos, np.maximum(lo, bound), lo)
        hi = np.where(neg, np.minimum(hi, bound), hi)
        empty = (coeff == 0.0) & (const < 0.0)
        hi = np.where(empty, lo, hi)
    lengths = np.maximum(hi - lo, 0.0)
    keep = lengths > 1e-12
    return np.nonzero(keep)[0], lengths[keep]


def _checked_cover(tpl, offset: float, horizontal: bool):
    for c in (offset, offset + 1e-7, offset - 1e-7):
        ids, lens = _line_cover(tpl.nodes, tpl.triangles, c, horizontal)
        if abs(lens.sum() - 1.0) < 1e-9:
            break
    else:
        raise MeshError(f"line at offset {offset} does not tile the cell cleanly")
    if np.any(tpl.tri_region[ids] == INTERIOR):
        y = tpl.master.nodes[tpl.master.ring, 1 if horizontal else 0]
        raise MeshError(
            f"line offset {offset} crosses the inclusion; choose an offset "
            f"outside [{y.min():.3f}, {y.max():.3f}]"
        )
    return ids, lens


def compute_cell_averages(
    sol: MicroSolution,
    mesh: StripMesh | None = None,
    offsets: tuple = DEFAULT_OFFSETS,
    values: np.ndarray | None = None,
) -> list[CellAverages]:
    """Averages for every slab cell.

    `values` substitutes the nodal field (same layout as sol.u_full), so
    re-read exports can be fed through the identical reduction.
    """
    strip = sol.strip if mesh is None else mesh
    if mesh is not None and mesh is not sol.strip and mesh.n_nodes != len(sol.u_full):
        raise ValueError("mesh does not match the solution's node layout")
    u = sol.u_full if values is None else np.asarray(values, dtype=complex)
    tpl = strip.template
    wave, mats, eta = sol.wave, sol.mats, strip.eta
    n1, n2 = strip.lattice.n1, strip.lattice.n2

    cells = u[strip.cell_nodes]  # (n1, n2, T)
    areas, grads = _p1_geometry(tpl.nodes, tpl.triangles)  # unit-cell scale
    tri_mean = cells[:, :, tpl.triangles].mean(axis=3)  # (n1, n2, t)

    ext = tpl.tri_region != INTERIOR
    int_ = ~ext
    area_ext = areas[ext].sum()
    area_int = areas[int_].sum()
    int_h_ext = np.einsum("t,abt->ab", areas[ext], tri_mean[:, :, ext])
    int_h_int = np.einsum("t,abt->ab", areas[int_], tri_mean[:, :, int_])
    h_e = int_h_ext / area_ext
    h_i = int_h_int / area_int
    mu_mat, mu_int = complex(mats.mu_matrix), complex(mats.mu_interior)
    b_cell = mu_mat * int_h_ext + mu_int * int_h_int  # unit areas sum to 1

    eps_mat = _scalar_eps(mats.eps_matrix, "eps_matrix")
    e_factor = 1.0 / (1j * wave.omega * eps_mat * eta)

    def line_e(offset, horizontal):
        ids, lens = _checked_cover(tpl, offset, horizontal)
        g = np.einsum("tvk,abtv->abtk", grads[ids], cells[:, :, tpl.triangles[ids]])
        e_el = np.einsum("kl,abtl->abtk", ROT, g) * e_factor
        return np.einsum("t,abtk->abk", lens, e_el)  # (n1, n2, 2)

    e_lines = {}
    for c in offsets:
        e_lines[(c, True)] = line_e(c, True)
        e_lines[(c, False)] = line_e(c, False)

    def assemble(c):
        e_av = np.stack(
            [e_lines[(c, True)][..., 0], e_lines[(c, False)][..., 1]], axis=-1
        )
        d_av = eps_mat * np.stack(
            [e_lines[(c, False)][..., 0], e_lines[(c, True)][..., 1]], axis=-1
        )
        return e_av, d_av

    e_main, d_main = assemble(offsets[0])
    e_alt, d_alt = assemble(offsets[1])
    gap = np.maximum(
        np.abs(e_main - e_alt).max(axis=-1), np.abs(d_main - d_alt).max(axis=-1)
    )

    ring = tpl.master.ring
    dup = tpl.master.n_nodes + np.arange(len(ring))
    jumps = cells[:, :, dup] - cells[:, :, ring]  # (n1, n2, K)
    seg = tpl.sheet_len  # unit lengths, segment k = (ring_k, ring_{k+1})
    w = 0.5 * (seg + np.roll(seg, 1))
    w = w / w.sum()
    j_mean = np.einsum("k,abk->ab", w, jumps)
    j_var = np.einsum("k,abk->ab", w, np.abs(jumps - j_mean[:, :, None]) ** 2)
    j_std = np.sqrt(np.maximum(j_var.real, 0.0))
    if mats.surface is None:
        et_max = np.zeros((n1, n2))
    else:
        sigma = surface_sigma(mats.surface, wave)
        et_max = np.abs(jumps).max(axis=2) * eta / abs(sigma)

    out = []
    for i1 in range(n1):
        for i2 in range(n2):
            out.append(
                CellAverages(
                    i1=i1,
                    i2=i2,
                    center=(
                        strip.lattice.a + (i1 + 0.5) * eta,
                        (i2 + 0.5) * eta,
                    ),
                    deep=1 <= i1 <= n1 - 2,
                    h_e_avg=complex(h_e[i1, i2]),
                    h_i_avg=complex(h_i[i1, i2]),
                    b_avg=complex(b_cell[i1, i2]),
                    e_avg=e_main[i1, i2].copy(),
                    d_avg=d_main[i1, i2].copy(),
                    e_avg_alt=e_alt[i1, i2].copy(),
                    d_avg_alt=d_alt[i1, i2].copy(),
                    offset_gap=float(gap[i1, i2]),
                    j_mean=complex(j_mean[i1, i2]),
                    j_std=float(j_std[i1, i2]),
                    et_max=float(et_max[i1, i2]),
                )
            )
    return out


@dataclass(frozen=True)
class ConstitutiveReport:
    """Summary of the effective-law residuals over the deep-interior cells."""

    n_deep: int
    d_err_median: float
    d_err_max: float
    b_err_median: float
    b_err_max: float
    ratio_err_median: float
    ratio_err_max: float
    j_cv_median: float
    et_max: float
    offset_gap_max: float


def _rel_err(lhs, rhs) -> float:
    denom = np.linalg.norm(np.atleast_1d(lhs))
    diff = np.linalg.norm(np.atleast_1d(lhs) - np.atleast_1d(rhs))
    if denom < ZERO_DENOM and diff < ZERO_DENOM:
        return 0.0
    return float(diff / denom)


def constitutive_checks(avgs: list[CellAverages], eff: EffectiveMedia) -> ConstitutiveReport:
    """Per deep cell: D_avg against eps* E_avg, b_avg against mu* h_e_avg,
    the interior/exterior ratio against m, and the jump statistics."""
    deep = [c for c in avgs if c.deep]
    if not deep:
        raise ValueError("no deep-interior cells; need n1 >= 3")
    d_errs = [_rel_err(c.d_avg, eff.eps_star @ c.e_avg) for c in deep]
    b_errs = [_rel_err(c.b_avg, eff.mu_star * c.h_e_avg) for c in deep]
    r_errs = [
        _rel_err(c.h_i_avg / c.h_e_avg, eff.m) if abs(c.h_e_avg) > ZERO_DENOM else 0.0
        for c in deep
    ]
    j_cv = [
        c.j_std / abs(c.j_mean) if abs(c.j_mean) > ZERO_DENOM else 0.0 for c in deep
    ]
    return ConstitutiveReport(
        n_deep=len(deep),
        d_err_median=float(np.median(d_errs)),
        d_err_max=float(np.max(d_errs)),
        b_err_median=float(np.median(b_errs)),
        b_err_max=float(np.max(b_errs)),
        ratio_err_median=float(np.median(r_errs)),
        ratio_err_max=float(np.max(r_errs)),
        j_cv_median=float(np.median(j_cv)),
        et_max=float(np.max([c.et_max for c in deep])),
        offset_gap_max=float(np.max([c.offset_gap for c in deep])),
    )


def twoscale_field_error(sol: MicroSolution, eff: EffectiveMedia, hom,
                         m_value: complex | None = None) -> float:
    """L2 distance between the micro field and the two-scale reconstruction
    M(x, y) h0(x1) e^{i (m_inc + kappa) x2}, where M is 1 outside the
    resonators and m inside.

    `hom` is the homogenized 1D profile (see layered.field_profile).
    Passing m_value=1 gives the negative control that ignores the
    interior field drop.
    """
    strip = sol.strip
    m = eff.m if m_value is None else complex(m_value)
    kap = sol.wave.incident_order + sol.wave.kappa
    h0 = hom(strip.nodes[:, 0]) * np.exp(1j * kap * strip.nodes[:, 1])
    mult = np.where(strip.node_region == INTERIOR, m, 1.0 + 0.0j)
    err = sol.u_full - mult * h0
    areas, _ = _p1_geometry(strip.nodes, strip.triangles)
    return float(
        np.sqrt(np.sum(areas / 3.0 * np.sum(np.abs(err[strip.triangles]) ** 2, axis=1)))
    )


_COMPLEX_COLS = ("h_e_avg", "h_i_avg", "b_avg", "j_mean")
_VECTOR_COLS = ("e_avg", "d_avg", "e_avg_alt", "d_avg_alt")
_REAL_COLS = ("offset_gap", "j_std", "et_max")


def averages_header() -> list[str]:
    cols = ["i1", "i2", "center_x1", "center_x2", "deep"]
    for name in _COMPLEX_COLS:
        cols += [f"re_{name}", f"im_{name}"]
    for name in _VECTOR_COLS:
        for k in (1, 2):
            cols += [f"re_{name}_{k}", f"im_{name}_{k}"]
    cols += list(_REAL_COLS)
    return cols


def write_cell_averages_csv(avgs: list[CellAverages], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(averages_header())
        for c in avgs:
            row = [c.i1, c.i2, f"{c.center[0]:.17e}", f"{c.center[1]:.17e}", int(c.deep)]
            for name in _COMPLEX_COLS:
                z = getattr(c, name)
                row += [f"{z.real:.17e}", f"{z.imag:.17e}"]
            for name in _VECTOR_COLS:
                v = getattr(c, name)
                for k in range(2):
                    row += [f"{v[k].real:.17e}", f"{v[k].imag:.17e}"]
            row += [f"{getattr(c, name):.17e}" for name in _REAL_COLS]
            writer.writerow(row)


def read_cell_averages_csv(path: str) -> list[CellAverages]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != averages_header():
            raise ValueError(f"unexpected header in {path}")
        out = []
        for raw in reader:
            it = iter(raw)
            i1, i2 = int(next(it)), int(next(it))
            center = (float(next(it)), float(next(it)))
            deep = bool(int(next(it)))
            kw = {}
            for name in _COMPLEX_COLS:
                kw[name] = complex(float(next(it)), float(next(it)))
            for name in _VECTOR_COLS:
                kw[name] = np.array(
                    [complex(float(next(it)), float(next(it))) for _ in range(2)]
                )
            for name in _REAL_COLS:
                kw[name] = float(next(it))
            out.append(CellAverages(i1=i1, i2=i2, center=center, deep=deep, **kw))
    return out


def averages_equal(x: CellAverages, y: CellAverages) -> bool:
    """Exact field-by-field equality (CSV round trips are lossless)."""
    for f in fields(CellAverages):
        a, b = getattr(x, f.name), getattr(y, f.name)
        if isinstance(a, np.ndarray):
            if not np.array_equal(a, b):
                return False
        elif a != b:
            return False
    return True
