"""Configuration parsing, harness runs, file outputs and CLI exit codes."""
import csv
import math

import numpy as np
import pytest

from microres import cli
from microres.config import ConfigError, load_config, parse_config
from microres.harness import (
    effective_report,
    run_cell,
    run_converge,
    run_diagnose,
    run_effective,
    run_homogenized,
    run_micro,
)
from microres.model import SimpleRing, SrrGeometric, SrrPhenomenological

BASE = """\
[wave]
omega = 0.8

[cell]
shape = circle
radius = 0.3
n_segments = 32

[materials]
surface = ring
rho = 0.1

[lattice]
n1 = 4
n2 = 8, 16
"""

# Reference slab amplitudes for the BASE scene, thickness pi, built from
# the refine=1 cell constants that the sweep uses by default.
REF_EPS = 1.7597985225139272
REF_MU = 0.834861738242488 + 0.13828107932427006j
REF_A = -0.06270501506517528 - 0.04752351842978368j
REF_B = 0.6549773267267771 + 0.39824566223932495j


def amend(old: str, new: str, text: str = BASE) -> str:
    assert old in text
    return text.replace(old, new)


def read_quantities(path) -> dict[str, complex]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["quantity", "re", "im"]
    return {name: complex(float(re), float(im)) for name, re, im in rows[1:]}


@pytest.fixture(scope="module")
def base_cfg():
    return parse_config(BASE)


@pytest.fixture(scope="module")
def ring_report(base_cfg):
    return effective_report(base_cfg)


@pytest.fixture(scope="module")
def sweep(base_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    report = run_converge(base_cfg, str(out), deterministic=True)
    return out, report


class TestConfigParsing:
    def test_base_scene(self, base_cfg):
        cfg = base_cfg
        assert cfg.wave.omega == 0.8
        assert cfg.geometry.kind == "circle"
        assert cfg.geometry.radius == 0.3
        assert cfg.geometry.n_segments == 32
        assert isinstance(cfg.materials.surface, SimpleRing)
        assert cfg.materials.surface.rho == 0.1
        assert cfg.n1_base == 4 and cfg.n2_list == (8, 16)

    def test_defaults(self, base_cfg):
        cfg = base_cfg
        assert cfg.margin_cells == 2
        assert cfg.refine == 1 and cfg.reference_cell_refine == 1
        assert cfg.m_modes is None
        assert cfg.residual_tol == 1e-8
        assert cfg.offsets == (0.05, 0.95)
        assert cfg.out_dir == "out"
        assert cfg.write_fields and cfg.write_averages
        assert cfg.geometry.center == (0.5, 0.5)

    def test_lattice_scaling_keeps_thickness(self, base_cfg):
        lats = base_cfg.lattices()
        assert [(l.n1, l.n2) for l in lats] == [(4, 8), (8, 16)]
        assert lats[0].thickness == pytest.approx(lats[1].thickness, abs=1e-15)
        assert lats[0].thickness == pytest.approx(math.pi, abs=1e-15)

    def test_fractional_scaling_rejected(self):
        bad = amend("n1 = 4", "n1 = 3").replace("n2 = 8, 16", "n2 = 8, 12")
        with pytest.raises(ConfigError, match="thickness fixed"):
            parse_config(bad)

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match=r"unknown section \[solver\]"):
            parse_config(BASE + "\n[solver]\ntol = 1\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key 'omga'"):
            parse_config(amend("omega = 0.8", "omga = 0.8"))

    def test_missing_required_key(self):
        with pytest.raises(ConfigError, match="missing required key 'omega'"):
            parse_config(amend("omega = 0.8", "kappa = 0.0"))

    def test_missing_required_section(self):
        text = "\n".join(
            line for line in BASE.splitlines() if line not in ("[lattice]", "n1 = 4", "n2 = 8, 16")
        )
        with pytest.raises(ConfigError, match=r"missing required section \[lattice\]"):
            parse_config(text)

    def test_key_for_other_surface_rejected(self):
        with pytest.raises(ConfigError, match="'tau' does not apply"):
            parse_config(amend("rho = 0.1", "rho = 0.1\ntau = 0.3"))

    def test_key_for_other_shape_rejected(self):
        with pytest.raises(ConfigError, match="'vertices' does not apply"):
            parse_config(amend("radius = 0.3", "radius = 0.3\nvertices = 0,0; 1,0; 1,1"))

    def test_malformed_number(self):
        with pytest.raises(ConfigError, match=r"\[wave\] omega = 'fast'"):
            parse_config(amend("omega = 0.8", "omega = fast"))

    def test_radius_out_of_cell(self):
        with pytest.raises(ConfigError, match="radius"):
            parse_config(amend("radius = 0.3", "radius = 0.7"))

    def test_duplicate_n2(self):
        with pytest.raises(ConfigError, match="distinct"):
            parse_config(amend("n2 = 8, 16", "n2 = 8, 8"))

    def test_numerics_options(self):
        cfg = parse_config(
            BASE + "\n[numerics]\nm_modes = 6\nreference_refine = 2\noffsets = 0.1, 0.9\n"
        )
        assert cfg.m_modes == 6
        assert cfg.reference_refine == 2 and cfg.reference_cell_refine == 2
        assert cfg.offsets == (0.1, 0.9)

    def test_bad_m_modes(self):
        with pytest.raises(ConfigError, match="m_modes must be 'auto' or an integer"):
            parse_config(BASE + "\n[numerics]\nm_modes = many\n")

    def test_bad_residual_tol(self):
        with pytest.raises(ConfigError, match="residual_tol must be > 0"):
            parse_config(BASE + "\n[numerics]\nresidual_tol = 0\n")

    def test_complex_material_value(self):
        cfg = parse_config(
            amend("rho = 0.1", "rho = 0.1\neps_interior = 2.0 + 0.5j\nmu_interior = 2.0+0.5j")
        )
        assert cfg.materials.mu_interior == 2.0 + 0.5j

    def test_surface_variants(self):
        srr = parse_config(amend("surface = ring\nrho = 0.1", "surface = srr\nrho = 0.1\ntau = 0.3"))
        assert isinstance(srr.materials.surface, SrrPhenomenological)
        assert srr.materials.surface.tau == 0.3
        geo = parse_config(
            amend(
                "surface = ring\nrho = 0.1",
                "surface = srr_geometric\nrho = 0.1\ndelta = 0.02\neps_gap = 10\nsrr_radius = 0.28",
            )
        )
        assert isinstance(geo.materials.surface, SrrGeometric)
        none = parse_config(amend("surface = ring\nrho = 0.1", "surface = none"))
        assert none.materials.surface is None

    def test_srr_geometric_missing_keys(self):
        with pytest.raises(ConfigError, match="srr_geometric needs"):
            parse_config(amend("surface = ring\nrho = 0.1", "surface = srr_geometric\nrho = 0.1"))

    def test_polyline_shape(self):
        cfg = parse_config(
            amend(
                "shape = circle\nradius = 0.3\nn_segments = 32",
                "shape = polyline\nvertices = 0.3,0.3; 0.7,0.3; 0.7,0.7; 0.3,0.7",
            )
        )
        assert cfg.geometry.kind == "polyline"
        assert cfg.geometry.vertices.shape == (4, 2)

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config file"):
            load_config(str(tmp_path / "absent.ini"))


class TestEffectiveReport:
    def test_quadrature_matches_closed_form(self, ring_report):
        gap = abs(ring_report["mu_quadrature"] - ring_report["mu_closed_form"])
        assert gap <= 1e-12

    def test_polygon_chain_near_closed_form(self, ring_report):
        gap = abs(ring_report["eff"].mu_star - ring_report["mu_closed_form"])
        assert 0.0 < gap < 5e-3

    def test_multipole_oracle_in_reach(self, ring_report):
        oracle = ring_report["eps_rayleigh"]
        assert oracle is not None
        rel = abs(ring_report["eff"].eps_star[0, 0] - oracle) / oracle
        assert rel < 2.5e-2

    def test_ring_has_no_tau_scan(self, ring_report):
        assert ring_report["tau_scan"] is None

    def test_srr_tau_scan(self):
        cfg = parse_config(
            amend("surface = ring\nrho = 0.1", "surface = srr\nrho = 0.1\ntau = 0.3")
        )
        report = effective_report(cfg)
        taus, values = report["tau_scan"]
        assert taus.shape == (41,) and values.shape == (41,)
        assert taus[0] == 0.0 and taus[-1] == pytest.approx(0.6)
        k = int(np.argmin(np.abs(taus - 0.3)))
        assert taus[k] == pytest.approx(0.3)
        assert values[k] == report["mu_closed_form"]

    def test_transparent_scene_is_uniform_matrix(self):
        cfg = parse_config(amend("surface = ring\nrho = 0.1", "surface = none"))
        report = effective_report(cfg)
        eff = report["eff"]
        assert eff.m == 1.0 + 0.0j
        assert eff.mu_star == 1.0 + 0.0j
        assert np.array_equal(eff.eps_star, np.eye(2, dtype=complex))
        assert math.isinf(eff.mu.rho_hat.real)
        assert report["mu_quadrature"] is None

    def test_transparent_with_mismatched_bulk_rejected(self):
        cfg = parse_config(
            amend("surface = ring\nrho = 0.1", "surface = none\neps_interior = 2.0")
        )
        with pytest.raises(ConfigError, match="mismatched bulk"):
            effective_report(cfg)


class TestRunOutputs:
    def test_effective_files(self, base_cfg, tmp_path):
        report = run_effective(base_cfg, str(tmp_path))
        values = read_quantities(tmp_path / "effective.csv")
        assert values["eps_star_11"] == complex(report["eff"].eps_star[0, 0])
        assert values["mu_star_quadrature"] == report["mu_quadrature"]
        assert "eps_star_rayleigh" in values
        assert not (tmp_path / "tau_scan.csv").exists()

    def test_effective_tau_scan_files(self, tmp_path):
        cfg = parse_config(
            amend("surface = ring\nrho = 0.1", "surface = srr\nrho = 0.1\ntau = 0.3")
        )
        run_effective(cfg, str(tmp_path))
        with open(tmp_path / "tau_scan.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["tau", "re_mu_star", "im_mu_star"]
        assert len(rows) == 42
        dat = (tmp_path / "tau_scan.dat").read_text().splitlines()
        assert dat[0] == "# tau re_mu_star im_mu_star"
        assert len(dat) == 42

    def test_cell_files(self, base_cfg, tmp_path):
        corr = run_cell(base_cfg, str(tmp_path))
        values = read_quantities(tmp_path / "cell.csv")
        assert values["eps_star_11"].real == pytest.approx(REF_EPS, abs=1e-12)
        assert values["residual_rel"].real == corr.residual_rel
        assert (tmp_path / "cell_mesh.dat").exists()

    def test_cell_without_field_dump(self, tmp_path):
        cfg = parse_config(BASE + "\n[output]\nfields = no\n")
        run_cell(cfg, str(tmp_path))
        assert (tmp_path / "cell.csv").exists()
        assert not (tmp_path / "cell_mesh.dat").exists()

    def test_homogenized_files(self, base_cfg, tmp_path):
        amps, prof, eff = run_homogenized(base_cfg, str(tmp_path))
        i = amps.order_index(0)
        assert amps.a[i] == pytest.approx(REF_A, abs=1e-12)
        assert amps.b[i] == pytest.approx(REF_B, abs=1e-12)
        values = read_quantities(tmp_path / "homogenized.csv")
        assert values["a"] == pytest.approx(REF_A, abs=1e-12)
        assert values["thickness"].real == pytest.approx(math.pi, abs=1e-15)
        profile = (tmp_path / "homogenized_profile.dat").read_text().splitlines()
        assert profile[0] == "# x1 re_h im_h"
        assert len(profile) == 1202

    def test_micro_files(self, base_cfg, tmp_path):
        sol = run_micro(base_cfg, 8, str(tmp_path))
        amps = sol.amplitudes
        with open(tmp_path / "amplitudes_n2_8.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["order", "re_a", "im_a", "re_b", "im_b"]
        assert len(rows) == 1 + len(amps.orders)
        values = read_quantities(tmp_path / "summary_n2_8.csv")
        i = amps.order_index(0)
        assert values["b"] == complex(amps.b[i])
        assert values["imbalance_rel"].real < 1e-8
        assert (tmp_path / "fields_n2_8.dat").exists()
        assert (tmp_path / "cells_n2_8.csv").exists()

    def test_diagnose_files(self, tmp_path):
        cfg = parse_config(amend("n2 = 8, 16", "n2 = 8"))
        results = run_diagnose(cfg, str(tmp_path))
        assert [r["n2"] for r in results] == [8]
        assert results[0]["residual_rel"] < 1e-8
        assert results[0]["imbalance_rel"] < 1e-8
        with open(tmp_path / "diagnose.csv", newline="") as fh:
            header = next(csv.reader(fh))
        assert header[:3] == ["n2", "eta", "residual_rel"]
        assert (tmp_path / "diagnose.dat").exists()


class TestConvergeSweep:
    def test_reference_is_frozen_slab(self, sweep):
        _, report = sweep
        assert report.ref_a == pytest.approx(REF_A, abs=1e-12)
        assert report.ref_b == pytest.approx(REF_B, abs=1e-12)
        assert report.eff.eps_star[0, 0] == pytest.approx(REF_EPS, abs=1e-12)
        assert report.eff.mu_star == pytest.approx(REF_MU, abs=1e-12)

    def test_rows_sorted_and_clean(self, sweep):
        _, report = sweep
        assert [r.n2 for r in report.rows] == [8, 16]
        assert report.active_rows == report.rows
        assert report.flags == []
        for row in report.rows:
            assert row.eta == pytest.approx(2.0 * math.pi / row.n2)
            assert row.imbalance_rel < 1e-8

    def test_errors_shrink(self, sweep):
        _, report = sweep
        assert report.monotone_amplitudes
        assert report.monotone_l2
        r8, r16 = report.rows
        assert r16.abs_da < 0.6 * r8.abs_da
        assert r16.abs_db < 0.6 * r8.abs_db
        assert r16.l2_control > r16.l2_error

    def test_deterministic_zeroes_wall_time(self, sweep):
        _, report = sweep
        assert all(r.wall_s == 0.0 for r in report.rows)

    def test_csv_layout(self, sweep):
        out, report = sweep
        with open(out / "converge.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        assert header[:2] == ["n2", "eta"] and header[-2:] == ["skipped", "note"]
        assert len(body) == 2
        ia = header.index("re_a_ref")
        assert body[0][ia] == body[1][ia]
        assert float(body[0][ia]) == report.ref_a.real
        dat = (out / "converge.dat").read_text().splitlines()
        assert dat[0].startswith("# n2 eta ")
        assert len(dat) == 3

    def test_bitwise_reproducible(self, base_cfg, sweep, tmp_path):
        out, _ = sweep
        run_converge(base_cfg, str(tmp_path), deterministic=True)
        for name in ("converge.csv", "converge.dat"):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()

    def test_single_scale_rejected(self):
        cfg = parse_config(amend("n2 = 8, 16", "n2 = 8"))
        with pytest.raises(ConfigError, match="at least two"):
            run_converge(cfg)

    def test_near_singular_rows_skipped(self, tmp_path):
        cfg = parse_config(BASE + "\n[numerics]\nresidual_tol = 1e-18\n")
        report = run_converge(cfg, str(tmp_path), deterministic=True)
        assert report.active_rows == []
        assert all(r.skipped and r.note for r in report.rows)
        assert len(report.flags) == 2
        assert all("skipped" in flag for flag in report.flags)
        with open(tmp_path / "converge.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert [r[-2] for r in rows[1:]] == ["1", "1"]
        dat = (tmp_path / "converge.dat").read_text().splitlines()
        assert len(dat) == 1


class TestCli:
    @pytest.fixture()
    def config_file(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(BASE)
        return str(path)

    def test_selftest_passes(self, capsys):
        assert cli.main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "pass" in out and "FAIL" not in out

    def test_selftest_failure_exit_code(self, monkeypatch, capsys):
        monkeypatch.setattr(cli.harness, "run_selftest", lambda: (False, ["FAIL  forced"]))
        assert cli.main(["selftest"]) == 4
        assert "FAIL  forced" in capsys.readouterr().out

    def test_effective_writes_to_out(self, config_file, tmp_path):
        out = tmp_path / "results"
        assert cli.main(["effective", "--config", config_file, "--out", str(out)]) == 0
        assert (out / "effective.csv").exists()

    def test_missing_config_flag(self, capsys):
        assert cli.main(["converge"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path, capsys):
        assert cli.main(["cell", "--config", str(tmp_path / "absent.ini")]) == 2
        assert "cannot read config file" in capsys.readouterr().err

    def test_invalid_config(self, tmp_path, capsys):
        path = tmp_path / "bad.ini"
        path.write_text(amend("omega = 0.8", "omga = 0.8"))
        assert cli.main(["homogenized", "--config", str(path)]) == 2
        assert "unknown key" in capsys.readouterr().err

    def test_solver_failure_exit_code(self, tmp_path, capsys):
        path = tmp_path / "singular.ini"
        path.write_text(
            amend("n2 = 8, 16", "n2 = 8") + "\n[numerics]\nresidual_tol = 1e-18\n"
        )
        assert cli.main(["micro", "--config", str(path), "--out", str(tmp_path)]) == 3
        assert "solver error" in capsys.readouterr().err

    def test_micro_writes_per_scale_files(self, config_file, tmp_path):
        out = tmp_path / "micro"
        assert cli.main(["micro", "--config", config_file, "--out", str(out)]) == 0
        for n2 in (8, 16):
            assert (out / f"amplitudes_n2_{n2}.csv").exists()
            assert (out / f"summary_n2_{n2}.csv").exists()
