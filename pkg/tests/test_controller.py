"""
Integration tests for src/controller.py
Focus: Option parsing, artifact writing, manifests and exit behaviour.
"""

import json

import numpy as np
import pandas as pd
import pytest

from src import controller
from src.config import Params, RunConfig
from src.controller import (
    OUT_ENV,
    OracleResult,
    RunManifest,
    _darboux_from,
    _fitted_constant,
    _guarded,
    _oracle_eigenfunctions,
    _oracle_field_round_trip,
    _oracle_fish_hamiltonian,
    _oracle_fixed_point_expansion,
    _oracle_fixed_points,
    _oracle_gradient_grid_points,
    _oracle_grid_doubling,
    _oracle_normal_form_expansion,
    _oracle_normal_form_unperturbed,
    _oracle_two_pair_surface,
    apply_overrides,
    execute,
    parse_range,
    parse_scalar,
    resolve_out_dir,
    run,
)
from src.darboux import DarbouxData, HomoclinicOrbits
from src.errors import ConfigError, DomainError
from src.melnikov import MelnikovIntegrals


class TestOptionParsing:
    def test_inclusive_range(self):
        assert np.allclose(parse_range("0.5:0.7:0.1"), [0.5, 0.6, 0.7])

    def test_comma_list_and_number(self):
        assert parse_range("1e-2,1e-3").tolist() == [1e-2, 1e-3]
        assert parse_range(0.9).tolist() == [0.9]

    @pytest.mark.parametrize("text", ["abc", "1:0:0.1", "0:1:-0.1"])
    def test_bad_range(self, text):
        with pytest.raises(ConfigError, match="range"):
            parse_range(text)

    def test_scalar_rejects_list(self):
        with pytest.raises(ConfigError, match="single value"):
            parse_scalar("0.5,0.6", "omega")

    # --- OVERRIDES ---
    def test_overrides(self):
        config = apply_overrides(RunConfig(), {"omega": "0.9", "dt": 1e-3, "grid": 64,
                                               "epsilon": None})
        assert config.params.omega == 0.9
        assert config.params.epsilon == 0.0
        assert config.evolution.dt == 1e-3
        assert config.grid.size == 64

    def test_range_keys_left_alone(self):
        config = apply_overrides(RunConfig(), {"omega": "0.6:0.9:0.1"}, ("omega",))
        assert config.params.omega == 0.8

    def test_overrides_validated(self):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), {"grid": 100})

    def test_out_dir_env_wins(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUT_ENV, str(tmp_path))
        assert resolve_out_dir("elsewhere") == tmp_path
        monkeypatch.delenv(OUT_ENV)
        assert str(resolve_out_dir(None)) == "results"


class TestManifest:
    def test_hash_deterministic(self):
        a = RunManifest("fish", {"omega": 0.8}, {}, {"points": 10})
        b = RunManifest("fish", {"omega": 0.8}, {}, {"points": 10})
        c = RunManifest("fish", {"omega": 0.8}, {}, {"points": 11})
        assert a.input_hash == b.input_hash
        assert a.input_hash != c.input_hash
        assert len(a.input_hash) == 64

    def test_passed_follows_oracles(self):
        m = RunManifest("fish", {}, {}, {})
        m.oracles = [OracleResult.below("ok", 1e-12, 1e-10)]
        assert m.passed
        m.oracles.append(OracleResult.below("nan", float("nan"), 1.0))
        assert not m.passed
        assert m.to_dict()["passed"] is False


class TestExecute:
    def test_spectrum_artifacts(self, tmp_path):
        manifest = execute("spectrum", RunConfig(), {"k_max": 4}, tmp_path)
        assert manifest.passed
        assert (tmp_path / "spectrum_spectrum.csv").exists()
        saved = json.loads((tmp_path / "spectrum_manifest.json").read_text())
        assert saved["command"] == "spectrum"
        assert saved["input_hash"] == manifest.input_hash
        assert saved["outputs"][0]["file"] == "spectrum_spectrum.csv"

    def test_rerun_is_byte_identical(self, tmp_path):
        first = execute("second-distance", RunConfig(), {"points": 21}, tmp_path / "a")
        second = execute("second-distance", RunConfig(), {"points": 21}, tmp_path / "b")
        assert first.input_hash == second.input_hash
        assert first.outputs == second.outputs

    def test_plane_portrait_nullclines(self, tmp_path):
        manifest = execute("plane-portrait", RunConfig(), {"t_span": 2.0, "step": 1e-2}, tmp_path)
        files = [o["file"] for o in manifest.outputs]
        assert "plane_portrait_nullclines.csv" in files
        frame = pd.read_csv(tmp_path / "plane_portrait_nullclines.csv")
        assert list(frame.columns) == ["curve", "theta", "j"]
        assert set(frame["curve"]) == {"theta_dot", "j_dot"}
        trajectory = pd.read_csv(tmp_path / "plane_portrait_trajectory.csv")
        assert "hamiltonian" in trajectory.columns
        assert np.ptp(trajectory["hamiltonian"]) < 1e-5

    def test_unknown_command(self, tmp_path):
        with pytest.raises(ConfigError, match="Unknown command"):
            execute("optimize", RunConfig(), {}, tmp_path)


class TestDarbouxOptions:
    """Homoclinic phase and shift options reach DarbouxData."""

    def _config(self, omega):
        return RunConfig(params=Params(omega=omega))

    def test_one_pair_shift_and_phase(self):
        d = _darboux_from(self._config(0.8), {"rho": 0.5, "vartheta": 0.1}, 1)
        assert (d.rho, d.vartheta) == (0.5, 0.1)
        assert not d.is_even

    def test_defaults_are_even(self):
        assert _darboux_from(self._config(0.8), {"even": True}, 1).is_even
        d = _darboux_from(self._config(1.2), {}, 2)
        assert d.is_even
        assert d.delta_rho == pytest.approx(0.0, abs=1e-14)

    def test_two_pair_explicit(self):
        options = {"rho": 0.4, "vartheta": 0.3, "rho_hat": -0.2, "vartheta_hat": 0.7}
        d = _darboux_from(self._config(1.2), options, 2)
        assert (d.rho, d.vartheta, d.rho_hat, d.vartheta_hat) == (0.4, 0.3, -0.2, 0.7)

    def test_delta_rho_sets_rho_hat(self):
        d = _darboux_from(self._config(1.2), {"rho": 0.4, "delta_rho": 0.5}, 2)
        assert d.rho == 0.4
        assert d.delta_rho == pytest.approx(0.5, abs=1e-14)

    @pytest.mark.parametrize("pairs, options", [
        (1, {"even": True, "vartheta": 0.2}),
        (1, {"rho_hat": 0.1}),
        (1, {"delta_rho": 0.5}),
        (2, {"delta_rho": 0.5, "rho_hat": 0.1}),
    ])
    def test_conflicts_rejected(self, pairs, options):
        with pytest.raises(ConfigError):
            _darboux_from(self._config(1.2), options, pairs)

    def test_two_pair_phases_translate_orbit(self):
        """Shifting ϑ by c and ϑ̂ by 2c translates the orbit by c."""
        p, n, m = Params(omega=1.2), 64, 5
        shift = 2 * np.pi * m / n
        even = DarbouxData.build(1.2)
        moved = _darboux_from(self._config(1.2), {"vartheta": even.vartheta + shift,
                                                  "vartheta_hat": even.vartheta_hat + 2 * shift}, 2)
        base = HomoclinicOrbits.orbit(2, 0.3, n, even, p).values
        translated = HomoclinicOrbits.orbit(2, 0.3, n, moved, p).values
        assert np.max(np.abs(translated - np.roll(base, -m))) < 1e-11

    def test_noneven_two_pair_command(self, tmp_path):
        even = DarbouxData.build(1.2)
        phases = {"vartheta": even.vartheta + 0.8, "vartheta_hat": even.vartheta_hat + 1.6}
        manifest = execute("homoclinic", RunConfig(),
                           {"pairs": 2, "omega": "1.2", "tau": "-1:1:1", **phases}, tmp_path)
        assert manifest.passed
        saved = json.loads((tmp_path / "homoclinic_manifest.json").read_text())
        assert saved["options"]["vartheta_hat"] == phases["vartheta_hat"]


class TestRun:
    def test_success_returns_zero(self, monkeypatch, tmp_path, capsys):
        monkeypatch.setenv(OUT_ENV, str(tmp_path))
        assert run("fish", options={"points": 50}) == 0
        out = capsys.readouterr().out
        assert "NLS HOMOCLINIC: fish" in out
        assert "RUN: fish" in out
        assert (tmp_path / "fish_fish.csv").exists()

    def test_bad_config_exits(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"params": {"omgea": 0.9}}))
        with pytest.raises(SystemExit) as info:
            run("fish", config_path=str(path), out=str(tmp_path))
        assert info.value.code == 1
        assert "CRITICAL ERROR" in capsys.readouterr().out

    def test_mistyped_config_exits(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"params": {"omega": "0.8"}}))
        with pytest.raises(SystemExit) as info:
            run("fish", config_path=str(path), out=str(tmp_path))
        assert info.value.code == 1
        out = capsys.readouterr().out
        assert "CRITICAL ERROR" in out
        assert "params.omega" in out

    def test_saddle_required(self, tmp_path, capsys):
        with pytest.raises(SystemExit):
            run("fish", out=str(tmp_path), options={"alpha": "3.0"})
        assert "saddle" in capsys.readouterr().out


class TestOracles:
    @pytest.mark.parametrize("oracle", [
        _oracle_field_round_trip, _oracle_eigenfunctions, _oracle_fish_hamiltonian,
        _oracle_fixed_points, _oracle_fixed_point_expansion, _oracle_normal_form_expansion,
        _oracle_normal_form_unperturbed, _oracle_gradient_grid_points,
    ])
    def test_quick_oracles_pass(self, oracle):
        assert oracle().passed

    def test_guard_turns_errors_into_failures(self):
        def _oracle_broken():
            raise DomainError("outside")

        result = _guarded(_oracle_broken)
        assert result.name == "broken"
        assert not result.passed

    # --- EXPANSION FITS ---
    def test_fitted_constant_accepts_second_order(self):
        c_fit, growth = _fitted_constant({1e-2: 3e-4, 1e-3: 3.1e-6, 1e-4: 3.0e-8})
        assert c_fit == pytest.approx(3.0)
        assert growth == pytest.approx(3.1 / 3.0)

    def test_fitted_constant_rejects_first_order(self):
        _, growth = _fitted_constant({1e-2: 1e-2, 1e-3: 1e-3, 1e-4: 1e-4})
        assert growth == pytest.approx(100.0)

    def test_expansion_records_constant(self):
        result = _oracle_fixed_point_expansion()
        assert result.details["C"] > 0
        assert set(result.details["errors"]) == {"0.01", "0.001", "0.0001"}

    # --- GRID DOUBLING ---
    def test_grid_doubling(self):
        result = _oracle_grid_doubling()
        assert result.passed
        assert {"kappa", "double_points", "orbit_residuals", "floquet_delta"} <= set(result.details)
        assert result.details["N"] == 256

    # --- TWO-PAIR SURFACE ---
    @pytest.mark.parametrize("condition, passed", [(1e3, True), (1e7, False)])
    def test_two_pair_surface_thresholds(self, monkeypatch, condition, passed):
        row = {"converged": True, "M1_residual": 1e-12, "M2_residual": -1e-12,
               "d_residual": 0.0, "condition": condition}
        monkeypatch.setattr(MelnikovIntegrals, "existence_surface_report",
                            staticmethod(lambda *args, **kwargs: pd.DataFrame([row])))
        result = _oracle_two_pair_surface()
        assert result.passed is passed
        assert result.details["condition"] == condition

    def test_two_pair_surface_without_root(self, monkeypatch):
        empty = pd.DataFrame([{"converged": False}])
        monkeypatch.setattr(MelnikovIntegrals, "existence_surface_report",
                            staticmethod(lambda *args, **kwargs: empty))
        assert not _oracle_two_pair_surface().passed

    # --- VERIFY ARTIFACTS ---
    def test_details_go_to_certificates(self, monkeypatch, tmp_path):
        def _oracle_detailed():
            return OracleResult.below("detailed", 1e-12, 1e-8, {"kappa": 1e-12})

        monkeypatch.setattr(controller, "QUICK_SUITE", (_oracle_detailed,))
        manifest = execute("verify", RunConfig(), {"quick": True}, tmp_path)
        assert manifest.certificates == {"detailed": {"kappa": 1e-12}}
        frame = pd.read_csv(tmp_path / "verify_verify.csv")
        assert list(frame.columns) == ["name", "value", "tolerance", "passed"]
        saved = json.loads((tmp_path / "verify_manifest.json").read_text())
        assert saved["certificates"]["detailed"]["kappa"] == 1e-12
        assert "details" not in saved["oracles"][0]
