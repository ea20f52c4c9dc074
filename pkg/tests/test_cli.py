"""End-to-end checks of the command line front end.

Every test drives ``main`` in process with a JSON document written to a
temporary directory, then inspects exit codes, stderr, and the emitted
files. Numeric oracles: Lebesgue's scaling function is the exact line
t -> t - 1; the inverse-problem overlay must reproduce the target
spectrum to float precision because the environment is built from the
rescaled prescription; the exhaustion reparametrization of the wide tent
under p = 2 is hand-derived knot by knot. Estimation tolerances for the
binomial fields were measured once at depth 14 and frozen with wide
margin (mass-coefficient field 3.7e-9, saturating field 2.0e-3).
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from mfract.cli import main
from mfract.convex import NEGINF, legendre
from mfract.measures import MoranMeasure
from mfract.saturation import saturation_coefficients
from mfract.wavelets import (WaveletField, make_wavelet, save_signal,
                             synthesize)

TENT = [[0.8, 0.0], [1.0, 1.0], [1.25, 0.0]]
WIDE_TENT = [[0.5, 0.0], [1.5, 1.0], [2.5, 0.0]]


def run_cli(tmp_path: Path, command: str, doc: dict, out_name: str = "out",
            extra_flags: tuple[str, ...] = ()) -> tuple[int, Path]:
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(doc), encoding="utf-8")
    out = tmp_path / out_name
    code = main([command, "--config", str(cfg), "--out", str(out),
                 *extra_flags])
    return code, out


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def tokens(rows: list[dict], column: str) -> list[str]:
    return [r[column] for r in rows]


# --------------------------------------------------------------------------
# configuration validation and exit codes


class TestConfigValidation:
    def test_empty_grid_names_the_field(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "prescribe-measure",
                          {"spectrum": {"knots": [[1.0, 1.0]]}, "t_grid": []})
        assert code == 2
        assert "t_grid" in capsys.readouterr().err

    def test_unknown_key_is_rejected(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "prescribe-measure",
                          {"spectrum": {"knots": [[1.0, 1.0]]}, "dpeth": 8})
        assert code == 2
        assert "dpeth" in capsys.readouterr().err

    def test_missing_spectrum(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "prescribe-measure", {"depth": 8})
        assert code == 2
        assert "spectrum" in capsys.readouterr().err

    def test_depth_budget_scales_with_dimension(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "prescribe-measure",
                          {"spectrum": {"knots": [[2.0, 2.0]]},
                           "d": 2, "depth": 32})
        assert code == 2
        assert "depth" in capsys.readouterr().err

    def test_decreasing_knots(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "prescribe-measure",
                          {"spectrum": {"knots": [[1.0, 1.0], [0.5, 0.0]]}})
        assert code == 2
        assert "spectrum.knots" in capsys.readouterr().err

    def test_missing_signal_file(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "analyze-signal",
                          {"signal": {"file": "nope.txt"}})
        assert code == 2
        assert "signal.file" in capsys.readouterr().err

    def test_bad_moment_exponent(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "frisch-parisi",
                          {"spectrum": {"knots": TENT}, "p": 0.5})
        assert code == 2
        assert '"p"' in capsys.readouterr().err

    def test_spectrum_from_file(self, tmp_path):
        spec_csv = tmp_path / "spec.csv"
        spec_csv.write_text("argument,value\n0.8,0.0\n1.0,1.0\n1.25,0.0\n")
        code, out = run_cli(tmp_path, "prescribe-measure",
                            {"spectrum": {"file": "spec.csv"}, "depth": 6,
                             "t_grid": {"lo": -2.0, "hi": 2.0, "n": 9}})
        assert code == 0
        echo = json.loads((out / "resolved_config.json").read_text())
        assert echo["spectrum_knots"] == TENT
        assert echo["spectrum_source"].endswith("spec.csv")

    def test_defaults_are_echoed(self, tmp_path):
        code, out = run_cli(tmp_path, "prescribe-measure",
                            {"spectrum": {"knots": [[1.0, 1.0]]}, "depth": 4})
        assert code == 0
        echo = json.loads((out / "resolved_config.json").read_text())
        assert echo["p"] == "inf" and echo["q"] == 2.0
        assert echo["tilts"] == [0.0] and echo["seed"] == 0
        assert len(echo["t_grid"]) == 101 and echo["depth"] == 4

    def test_threads_env_honored_only_without_flag(self, tmp_path, monkeypatch):
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            monkeypatch.setenv(var, "1")
        monkeypatch.setenv("MFRACT_THREADS", "4")
        doc = {"spectrum": {"knots": [[1.0, 1.0]]}, "depth": 4}
        code, out = run_cli(tmp_path, "prescribe-measure", doc, "env_out")
        assert code == 0
        assert json.loads((out / "resolved_config.json").read_text())["threads"] == 4
        code, out = run_cli(tmp_path, "prescribe-measure", doc, "flag_out",
                            extra_flags=("--threads", "2"))
        assert code == 0
        assert json.loads((out / "resolved_config.json").read_text())["threads"] == 2

    def test_seed_flag_overrides_config(self, tmp_path):
        code, out = run_cli(tmp_path, "prescribe-measure",
                            {"spectrum": {"knots": [[1.0, 1.0]]}, "depth": 4,
                             "seed": 7},
                            extra_flags=("--seed", "11"))
        assert code == 0
        assert json.loads((out / "resolved_config.json").read_text())["seed"] == 11


# --------------------------------------------------------------------------
# prescribe-measure


class TestPrescribeMeasure:
    def test_lebesgue_scaling_function_is_exact(self, tmp_path):
        code, out = run_cli(tmp_path, "prescribe-measure",
                            {"spectrum": {"knots": [[1.0, 1.0]]}, "depth": 10,
                             "t_grid": {"lo": -3.0, "hi": 3.0, "n": 13}})
        assert code == 0
        rows = read_rows(out / "tau_comparison.csv")
        assert len(rows) == 13
        for r in rows:
            t = float(r["t"])
            assert float(r["tau_empirical"]) == t - 1.0
            assert float(r["tau_target"]) == t - 1.0
            assert float(r["sup_gap"]) == 0.0

    def test_tent_comparison_outputs(self, tmp_path):
        code, out = run_cli(tmp_path, "prescribe-measure",
                            {"spectrum": {"knots": TENT}, "depth": 12,
                             "t_grid": {"lo": -5.0, "hi": 5.0, "n": 41},
                             "alpha_grid": {"lo": 0.5, "hi": 1.5, "n": 21}})
        assert code == 0
        rows = read_rows(out / "tau_comparison.csv")
        gaps = [float(r["abs_gap"]) for r in rows]
        sup = float(rows[0]["sup_gap"])
        assert sup == pytest.approx(max(gaps), abs=0.0)
        assert 0.0 < sup < 0.3
        report = json.loads((out / "property_P.json").read_text())
        assert report[0]["ok"] is True
        assert report[0]["s1"] <= report[0]["s2"]
        descriptor = json.loads((out / "measure.json").read_text())["descriptor"]
        rebuilt = MoranMeasure.from_descriptor(descriptor)
        assert rebuilt.d == 1 and rebuilt.spectrum is not None
        for name in ("tau_comparison.png", "sigma_comparison.png", "plots.gp"):
            assert (out / name).stat().st_size > 0

    def test_sigma_comparison_marks_outside_support(self, tmp_path):
        code, out = run_cli(tmp_path, "prescribe-measure",
                            {"spectrum": {"knots": TENT}, "depth": 8,
                             "alpha_grid": {"lo": 0.2, "hi": 1.8, "n": 17}})
        assert code == 0
        target = tokens(read_rows(out / "sigma_comparison.csv"), "sigma_target")
        assert "-inf" in target
        assert any(tok != "-inf" for tok in target)

    def test_inadmissible_spectrum_reports_and_fails(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "prescribe-measure",
                          {"spectrum": {"knots": [[0.5, 0.0], [1.0, 0.5],
                                                  [1.5, 0.0]]}})
        assert code == 3
        err = capsys.readouterr().err
        assert "not admissible" in err and "maximum equals d" in err


# --------------------------------------------------------------------------
# frisch-parisi


class TestFrischParisi:
    def test_sup_norm_route_reproduces_target(self, tmp_path):
        code, out = run_cli(tmp_path, "frisch-parisi",
                            {"spectrum": {"knots": TENT}, "depth": 10,
                             "h_grid": {"lo": 0.75, "hi": 1.3, "n": 56}})
        assert code == 0
        rows = read_rows(out / "overlay.csv")
        checked = 0
        for r in rows:
            if r["sigma_target"] == "-inf" or r["zeta_star_predicted"] == "-inf":
                continue
            assert abs(float(r["sigma_target"])
                       - float(r["zeta_star_predicted"])) <= 1e-6
            checked += 1
        assert checked > 30
        env = json.loads((out / "environment.json").read_text())
        assert env["scale_solved"] == 1.0 and env["power_applied"] == 1.0
        assert env["exhaustion"] is None
        assert (out / "typical_spectrum.csv").exists()

    def test_point_target_rescales(self, tmp_path):
        code, out = run_cli(tmp_path, "frisch-parisi",
                            {"spectrum": {"knots": [[0.7, 1.0]]}, "depth": 8,
                             "h_grid": {"lo": 0.3, "hi": 1.1, "n": 9}})
        assert code == 0
        env = json.loads((out / "environment.json").read_text())
        assert env["scale_solved"] == pytest.approx(1.0 / 0.7, rel=1e-12)
        assert env["power_applied"] == pytest.approx(0.7, rel=1e-12)
        (knot,) = env["scaled_knots"]
        assert knot[0] == pytest.approx(1.0, abs=1e-12) and knot[1] == 1.0

    def test_finite_p_emits_reparametrized_target(self, tmp_path):
        code, out = run_cli(tmp_path, "frisch-parisi",
                            {"spectrum": {"knots": WIDE_TENT}, "depth": 10,
                             "p": 2.0,
                             "h_grid": {"lo": 0.4, "hi": 2.6, "n": 45}})
        assert code == 0
        report = json.loads((out / "exhaustion.json").read_text())
        assert report["ok"] is True and report["case"] == "strictly-increasing"
        rows = read_rows(out / "sigma_tilde.csv")
        knots = [(float(r["alpha"]), float(r["sigma_tilde"])) for r in rows]
        # each knot (H, y) moves to (H - y/p, y)
        assert knots == [(0.5, 0.0), (1.0, 1.0), (2.5, 0.0)]
        for r in read_rows(out / "overlay.csv"):
            if r["sigma_target"] == "-inf" or r["zeta_star_predicted"] == "-inf":
                continue
            assert abs(float(r["sigma_target"])
                       - float(r["zeta_star_predicted"])) <= 1e-6

    def test_finite_p_precondition_failure_is_verbatim(self, tmp_path, capsys):
        code, _ = run_cli(tmp_path, "frisch-parisi",
                          {"spectrum": {"knots": [[0.5, 0.2], [1.5, 1.0],
                                                  [2.5, 0.0]]}, "p": 2.0})
        assert code == 3
        err = capsys.readouterr().err
        assert "precondition-failed" in err
        assert "sigma(0.5) = 0.2, expected 0" in err

    def test_synthesis_emits_field_signal_and_estimate(self, tmp_path):
        code, out = run_cli(tmp_path, "frisch-parisi",
                            {"spectrum": {"knots": TENT}, "depth": 10,
                             "synthesize": True,
                             "t_grid": {"lo": -5.0, "hi": 5.0, "n": 21},
                             "h_grid": {"lo": 0.7, "hi": 1.35, "n": 14}})
        assert code == 0
        for name in ("saturation_field.dat", "signal.txt",
                     "leaders_spectrum.csv", "overlay.png"):
            assert (out / name).exists()
        assert json.loads((out / "environment.json").read_text())["order"] >= 2
        rows = read_rows(out / "leaders_spectrum.csv")
        assert len(rows) == 14
        signal = (out / "signal.txt").read_text().strip().splitlines()
        assert len(signal) == 1 << 10

    def test_overlay_is_deterministic(self, tmp_path):
        doc = {"spectrum": {"knots": TENT}, "depth": 9,
               "h_grid": {"lo": 0.7, "hi": 1.35, "n": 27}}
        code_a, out_a = run_cli(tmp_path, "frisch-parisi", doc, "run_a")
        code_b, out_b = run_cli(tmp_path, "frisch-parisi", doc, "run_b")
        assert code_a == 0 and code_b == 0
        assert (out_a / "overlay.csv").read_bytes() \
            == (out_b / "overlay.csv").read_bytes()
        assert (out_a / "typical_spectrum.csv").read_bytes() \
            == (out_b / "typical_spectrum.csv").read_bytes()


# --------------------------------------------------------------------------
# analyze-signal


def _write_signal(path: Path, field: WaveletField) -> None:
    save_signal(path, synthesize(field, make_wavelet(field.order)))


class TestAnalyzeSignal:
    def test_monofractal_line_gives_point_spectrum(self, tmp_path):
        J = 12
        details = [np.full((1, 1 << j), 2.0 ** (-0.6 * j)) for j in range(J)]
        field = WaveletField(d=1, J=J, order=3, scaling=np.zeros((1,)),
                             details=details)
        _write_signal(tmp_path / "mono.txt", field)
        code, out = run_cli(tmp_path, "analyze-signal",
                            {"signal": {"file": "mono.txt"}, "order": 3,
                             "t_grid": {"lo": -5.0, "hi": 5.0, "n": 41},
                             "h_grid": {"lo": 0.1, "hi": 1.1, "n": 101}})
        assert code == 0
        rows = read_rows(out / "zeta_estimate.csv")
        for r in rows:
            t = float(r["t"])
            assert float(r["zeta_estimate"]) == pytest.approx(0.6 * t - 1.0,
                                                              abs=1e-9)
            assert float(r["r_squared"]) == pytest.approx(1.0, abs=1e-12)
        finite = [(float(r["H"]), float(r["sigma_estimate"]))
                  for r in read_rows(out / "spectrum.csv")
                  if r["sigma_estimate"] != "-inf"]
        assert len(finite) == 1
        assert finite[0][0] == pytest.approx(0.6, abs=1e-12)
        assert finite[0][1] == pytest.approx(1.0, abs=1e-9)

    def test_binomial_mass_coefficients_match_closed_form(self, tmp_path):
        # leaders of the cascade-mass field scale exactly like the
        # partition sums; measured once at depth 14: sup gap 3.7e-9
        J = 14
        mb = MoranMeasure.homogeneous((0.25, 0.75), d=1, depth_budget=J + 2)
        levels = mb.factor_logmass_levels(J)
        details = [np.exp2(levels[j])[None, :] for j in range(J)]
        field = WaveletField(d=1, J=J, order=3, scaling=np.zeros((1,)),
                             details=details)
        _write_signal(tmp_path / "binomial.txt", field)
        code, out = run_cli(tmp_path, "analyze-signal",
                            {"signal": {"file": "binomial.txt"}, "order": 3,
                             "t_grid": {"lo": -5.0, "hi": 5.0, "n": 41}})
        assert code == 0
        for r in read_rows(out / "zeta_estimate.csv"):
            t = float(r["t"])
            closed = -math.log2(0.25 ** t + 0.75 ** t)
            assert abs(float(r["zeta_estimate"]) - closed) <= 1e-7

    def test_saturating_signal_recovers_spectrum(self, tmp_path):
        # field built from the binomial environment at p = inf, q = 2;
        # measured spectrum gap at depth 14: 2.0e-3 where sigma >= 0.3
        J = 14
        mb = MoranMeasure.homogeneous((0.25, 0.75), d=1, depth_budget=J + 2)
        field = saturation_coefficients(mb, math.inf, 2.0, 3, J)
        _write_signal(tmp_path / "saturating.txt", field)
        code, out = run_cli(tmp_path, "analyze-signal",
                            {"signal": {"file": "saturating.txt"}, "order": 3,
                             "detrend_log": True,
                             "t_grid": {"lo": -8.0, "hi": 8.0, "n": 81},
                             "h_grid": {"lo": 0.3, "hi": 2.2, "n": 96}})
        assert code == 0
        rows = read_rows(out / "spectrum.csv")
        H = np.array([float(r["H"]) for r in rows])
        ref = np.maximum(mb.sigma_values(H), 0.0)
        checked = 0
        for r, target in zip(rows, ref):
            if r["sigma_estimate"] == "-inf" or target < 0.3:
                continue
            assert abs(float(r["sigma_estimate"]) - target) <= 0.05
            checked += 1
        assert checked > 40
        drift = tokens(read_rows(out / "zeta_estimate.csv"), "log_drift")
        assert drift and all(tok not in ("", "nan") for tok in drift)

    def test_structure_functions_cover_fit_window(self, tmp_path):
        J = 10
        details = [np.full((1, 1 << j), 2.0 ** (-0.5 * j)) for j in range(J)]
        field = WaveletField(d=1, J=J, order=2, scaling=np.zeros((1,)),
                             details=details)
        _write_signal(tmp_path / "flat.txt", field)
        code, out = run_cli(tmp_path, "analyze-signal",
                            {"signal": {"file": "flat.txt"}, "order": 2,
                             "j_range": [3, 7],
                             "t_grid": {"lo": -2.0, "hi": 2.0, "n": 9}})
        assert code == 0
        info = json.loads((out / "analysis.json").read_text())
        assert info["j_range"] == [3, 7]
        assert info["levels_used"] == [3, 4, 5, 6, 7]
        levels = {int(r["j"]) for r in read_rows(out / "structure_functions.csv")}
        assert levels == {3, 4, 5, 6, 7}

    def test_non_power_of_two_length_fails(self, tmp_path, capsys):
        sig = tmp_path / "odd.txt"
        sig.write_text("\n".join(str(float(v)) for v in range(1000)) + "\n")
        code, _ = run_cli(tmp_path, "analyze-signal",
                          {"signal": {"file": "odd.txt"}})
        assert code == 3
        assert "power of two" in capsys.readouterr().err

    def test_outputs_are_deterministic(self, tmp_path):
        J = 10
        details = [np.full((1, 1 << j), 2.0 ** (-0.7 * j)) for j in range(J)]
        field = WaveletField(d=1, J=J, order=2, scaling=np.zeros((1,)),
                             details=details)
        _write_signal(tmp_path / "sig.txt", field)
        doc = {"signal": {"file": "sig.txt"}, "order": 2,
               "t_grid": {"lo": -3.0, "hi": 3.0, "n": 13}}
        code_a, out_a = run_cli(tmp_path, "analyze-signal", doc, "run_a")
        code_b, out_b = run_cli(tmp_path, "analyze-signal", doc, "run_b")
        assert code_a == 0 and code_b == 0
        for name in ("zeta_estimate.csv", "spectrum.csv",
                     "structure_functions.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
