"""Cell-average diagnostics: line covers, effective laws, CSV round trips."""
import dataclasses

import numpy as np
import pytest

from microres.averages import (
    EffectiveMedia,
    averages_equal,
    averages_header,
    compute_cell_averages,
    constitutive_checks,
    read_cell_averages_csv,
    twoscale_field_error,
    write_cell_averages_csv,
)
from microres.cellmesh import MeshError
from microres.effective import EffectiveMu
from microres.layered import LayerStack, field_profile
from microres.micro import assemble_and_solve, export_fields, read_fields
from microres.model import (
    CellGeometry,
    MaterialSet,
    SimpleRing,
    SlabLattice,
    WaveParams,
    nu_exponent,
)
from microres.strip import build_strip_mesh

WAVE = WaveParams(omega=0.8, kappa=0.0, incident_order=0)
GEOM = CellGeometry.circle(0.3, n_segments=32)
LAT = SlabLattice(n1=4, n2=8)
TRANSPARENT = MaterialSet(surface=None)
LOSSY = MaterialSet(surface=SimpleRing(rho=0.1))


@pytest.fixture(scope="module")
def eff():
    return EffectiveMedia.from_scene(GEOM, LOSSY, WAVE, refine=1)


@pytest.fixture(scope="module")
def strip():
    return build_strip_mesh(GEOM, LAT, refine=1)


@pytest.fixture(scope="module")
def lossy_sol(strip):
    return assemble_and_solve(strip, LOSSY, WAVE)


@pytest.fixture(scope="module")
def lossy_avgs(lossy_sol):
    return compute_cell_averages(lossy_sol)


@pytest.fixture(scope="module")
def profile(eff):
    stack = LayerStack.uniform_slab(
        LAT.n1 * 2.0 * np.pi / LAT.n2, eff.eps_star[0, 0], eff.mu_star
    )
    return field_profile(stack, WAVE)


class TestEffectiveMedia:
    def test_reference_constants(self, eff):
        assert np.isclose(eff.eps_star[0, 0], 1.7597985225139272, rtol=1e-12)
        assert np.isclose(eff.mu_star, 0.834861738242488 + 0.13828107932427006j, rtol=1e-12)
        assert np.isclose(eff.m, 0.4121730526784608 + 0.4922259921257507j, rtol=1e-12)

    def test_property_plumbing(self, eff):
        assert eff.mu_star == eff.mu.mu_star
        assert eff.m == eff.mu.m_ratio

    def test_uses_polyline_view(self, eff):
        assert eff.mu == EffectiveMu.from_scene(GEOM.as_polyline(), LOSSY, WAVE)
        exact_circle = EffectiveMu.from_scene(GEOM, LOSSY, WAVE)
        assert abs(eff.mu_star - exact_circle.mu_star) > 1e-4

    def test_refine_moves_eps_only(self, eff):
        fine = EffectiveMedia.from_scene(GEOM, LOSSY, WAVE, refine=2)
        assert abs(fine.eps_star[0, 0] - eff.eps_star[0, 0]) > 1e-3
        assert fine.mu_star == eff.mu_star


class TestCellAverages:
    def test_layout(self, strip, lossy_avgs):
        assert len(lossy_avgs) == LAT.n1 * LAT.n2
        assert [(c.i1, c.i2) for c in lossy_avgs] == [
            (i1, i2) for i1 in range(LAT.n1) for i2 in range(LAT.n2)
        ]
        assert sum(c.deep for c in lossy_avgs) == (LAT.n1 - 2) * LAT.n2
        for c in lossy_avgs:
            assert c.center[0] == pytest.approx(strip.lattice.a + (c.i1 + 0.5) * strip.eta)
            assert c.center[1] == pytest.approx((c.i2 + 0.5) * strip.eta)

    def test_linear_field_along_x1(self, strip, lossy_sol):
        # h = x1 is P1-exact and the template regions are point symmetric,
        # so every average has a closed form.
        avgs = compute_cell_averages(lossy_sol, values=strip.nodes[:, 0].astype(complex))
        e2 = 1.0 / (1j * WAVE.omega)
        for c in avgs:
            assert c.h_e_avg == pytest.approx(c.center[0], abs=1e-12)
            assert c.h_i_avg == pytest.approx(c.center[0], abs=1e-12)
            assert c.b_avg == pytest.approx(c.center[0], abs=1e-12)
            assert np.allclose(c.e_avg, [0.0, e2], atol=1e-12)
            assert np.allclose(c.d_avg, [0.0, e2], atol=1e-12)
            assert c.offset_gap < 1e-12
            assert c.j_mean == pytest.approx(0.0, abs=1e-13)

    def test_linear_field_along_x2(self, strip, lossy_sol):
        avgs = compute_cell_averages(lossy_sol, values=strip.nodes[:, 1].astype(complex))
        e1 = -1.0 / (1j * WAVE.omega)
        for c in avgs:
            assert c.h_e_avg == pytest.approx(c.center[1], abs=1e-12)
            assert np.allclose(c.e_avg, [e1, 0.0], atol=1e-12)
            assert np.allclose(c.d_avg, [e1, 0.0], atol=1e-12)

    def test_scaling_linearity(self, lossy_sol, lossy_avgs):
        alpha = 2.0j
        scaled = compute_cell_averages(lossy_sol, values=alpha * lossy_sol.u_full)
        for c, s in zip(lossy_avgs, scaled):
            assert np.isclose(s.h_e_avg, alpha * c.h_e_avg)
            assert np.isclose(s.b_avg, alpha * c.b_avg)
            assert np.allclose(s.e_avg, alpha * c.e_avg)
            assert np.allclose(s.d_avg, alpha * c.d_avg)
            assert np.isclose(s.j_mean, alpha * c.j_mean)
            assert np.isclose(s.j_std, abs(alpha) * c.j_std)
            assert np.isclose(s.et_max, abs(alpha) * c.et_max)

    def test_jump_sign_tracks_interior_drop(self, lossy_avgs, eff):
        # j = h_i - h_e, so its cell mean should sit near (m - 1) h_e.
        for c in lossy_avgs:
            if c.deep:
                pred = (eff.m - 1.0) * c.h_e_avg
                assert abs(c.j_mean - pred) < 0.1 * abs(pred)

    def test_transparent_cells(self, strip):
        sol = assemble_and_solve(strip, TRANSPARENT, WAVE)
        for c in compute_cell_averages(sol):
            assert c.j_mean == 0.0
            assert c.j_std == 0.0
            assert c.et_max == 0.0
            assert abs(c.h_e_avg - c.h_i_avg) < 0.025
            assert abs(c.b_avg - c.h_e_avg) < 0.01

    def test_mesh_mismatch_rejected(self, lossy_sol):
        other = build_strip_mesh(GEOM, LAT, refine=2)
        with pytest.raises(ValueError, match="node layout"):
            compute_cell_averages(lossy_sol, mesh=other)


class TestLineCovers:
    def test_offset_through_inclusion(self, lossy_sol):
        with pytest.raises(MeshError, match="crosses the inclusion"):
            compute_cell_averages(lossy_sol, offsets=(0.5, 0.95))

    def test_offset_outside_cell(self, lossy_sol):
        with pytest.raises(MeshError, match="does not tile"):
            compute_cell_averages(lossy_sol, offsets=(1.5, 0.95))

    def test_band_edges_and_vertex_aligned_offsets(self, lossy_sol, lossy_avgs, eff):
        # 0.125 lands on mesh vertices; the cover must survive the nudge.
        for offsets in ((0.1, 0.9), (0.125, 0.875)):
            avgs = compute_cell_averages(lossy_sol, offsets=offsets)
            assert len(avgs) == len(lossy_avgs)
            rep = constitutive_checks(avgs, eff)
            assert rep.d_err_median < 0.6


class TestConstitutive:
    def test_report_windows(self, lossy_avgs, eff):
        rep = constitutive_checks(lossy_avgs, eff)
        assert rep.n_deep == (LAT.n1 - 2) * LAT.n2
        assert 0.3 < rep.d_err_median < 0.55
        assert rep.d_err_max < 0.6
        assert rep.b_err_median < 0.01
        assert rep.ratio_err_median < 0.03
        assert rep.ratio_err_max < 0.05
        assert 0.15 < rep.j_cv_median < 0.4
        assert 0.05 < rep.et_max < 0.12
        assert 0.3 < rep.offset_gap_max < 0.8

    def test_requires_deep_cells(self, lossy_avgs, eff):
        skin = [c for c in lossy_avgs if not c.deep]
        with pytest.raises(ValueError, match="deep"):
            constitutive_checks(skin, eff)

    def test_per_cell_ratio(self, lossy_avgs, eff):
        for c in lossy_avgs:
            if c.deep:
                assert abs(c.h_i_avg / c.h_e_avg - eff.m) < 0.05 * abs(eff.m)


class TestTwoscale:
    def test_reconstruction_beats_control(self, lossy_sol, eff, profile):
        err = twoscale_field_error(lossy_sol, eff, profile)
        ctrl = twoscale_field_error(lossy_sol, eff, profile, m_value=1.0)
        assert 0.2 < err < 0.4
        assert 1.5 < ctrl < 2.5
        assert err < ctrl / 3.0

    def test_default_multiplier_is_m(self, lossy_sol, eff, profile):
        err = twoscale_field_error(lossy_sol, eff, profile)
        assert err == twoscale_field_error(lossy_sol, eff, profile, m_value=eff.m)

    def test_plain_callable_profile(self, strip, eff):
        sol = assemble_and_solve(strip, TRANSPARENT, WAVE)
        nu = nu_exponent(WAVE, 0)
        err = twoscale_field_error(
            sol, eff, lambda x1: np.exp(1j * nu * x1), m_value=1.0
        )
        assert err < 0.1


class TestCsvRoundTrip:
    def test_header_layout(self):
        cols = averages_header()
        assert cols[:5] == ["i1", "i2", "center_x1", "center_x2", "deep"]
        assert len(cols) == 32

    def test_lossless_round_trip(self, lossy_avgs, tmp_path):
        path = tmp_path / "cells.csv"
        write_cell_averages_csv(lossy_avgs, str(path))
        back = read_cell_averages_csv(str(path))
        assert len(back) == len(lossy_avgs)
        assert all(averages_equal(a, b) for a, b in zip(lossy_avgs, back))

    def test_header_guard(self, lossy_avgs, tmp_path):
        path = tmp_path / "cells.csv"
        write_cell_averages_csv(lossy_avgs, str(path))
        lines = path.read_text().splitlines()
        lines[0] = lines[0].replace("i1", "col1", 1)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="header"):
            read_cell_averages_csv(str(path))

    def test_equality_is_strict(self, lossy_avgs):
        bumped = dataclasses.replace(lossy_avgs[0], j_std=lossy_avgs[0].j_std + 1.0)
        assert not averages_equal(lossy_avgs[0], bumped)
        assert averages_equal(lossy_avgs[0], lossy_avgs[0])


class TestFieldRoundTrip:
    def test_reread_export_reproduces_statistics(self, lossy_sol, lossy_avgs, tmp_path):
        path = tmp_path / "fields.dat"
        export_fields(lossy_sol, str(path))
        _, _, h, _ = read_fields(str(path))
        again = compute_cell_averages(lossy_sol, values=h)
        assert all(averages_equal(a, b) for a, b in zip(lossy_avgs, again))
