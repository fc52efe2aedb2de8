"""
Unit tests for src/melnikov.py
Focus: Quadrature rule, constraint-surface algebra, the second distance and existence solves.
"""

import math

import numpy as np
import pytest

from src.config import Params, QuadratureSpec
from src.darboux import DarbouxData
from src.errors import DomainError, QuadratureError
from src.melnikov import MelnikovIntegrals, MelnikovReport, time_rule

CHEAP = QuadratureSpec(t_max_factor=20, nodes_per_unit=16, x_grid=64)


def _one_pair_report(M, omega=0.8):
    d = DarbouxData.build(omega)
    return MelnikovReport(omega=omega, pairs=1, M=np.asarray(M, dtype=complex),
                          delta_gamma=MelnikovIntegrals.delta_gamma(d, 1))


def _two_pair_report(M, omega=1.2, delta_rho=0.5):
    d = DarbouxData.from_delta_rho(omega, delta_rho)
    return MelnikovReport(omega=omega, pairs=2, M=np.asarray(M, dtype=complex),
                          delta_gamma=MelnikovIntegrals.delta_gamma(d, 2), delta_rho=delta_rho)


class TestQuadratureRule:
    def test_gaussian_integral(self):
        """A wide window integrates e^{−t²} to √π."""
        t, w, meta = time_rule([0.0], [1.0], QuadratureSpec(t_max_factor=10, nodes_per_unit=16))
        assert np.sum(w * np.exp(-t**2)) == pytest.approx(math.sqrt(math.pi), abs=1e-12)
        assert meta["panels"] == 20
        assert meta["t_nodes"] == t.size

    def test_window_covers_all_centers(self):
        t, w, meta = time_rule([-1.0, 3.0], [2.0, 4.0], QuadratureSpec(t_max_factor=4))
        assert meta["t_min"] == pytest.approx(-3.0)
        assert meta["t_max"] == pytest.approx(5.0)
        assert np.sum(w) == pytest.approx(8.0)


class TestPhases:
    def test_delta_gamma(self):
        d = DarbouxData.build(1.2)
        assert MelnikovIntegrals.delta_gamma(d, 1) == pytest.approx(-4 * d.theta0)
        assert MelnikovIntegrals.delta_gamma(d, 2) == pytest.approx(-4 * (d.theta0 + d.theta0_hat))

    def test_phase_gain_singular(self):
        with pytest.raises(DomainError, match="vanishes"):
            MelnikovIntegrals.phase_gain(0.8, 0.0)


class TestOnePair:
    # --- ALGEBRA ---
    def test_kappa_formula(self):
        """κ = −(M² + gM³)/M¹ with g = ωΔγ/(2 sin(Δγ/2))."""
        report = _one_pair_report([-1.0, 2.0, 0.5, 0.0])
        g = MelnikovIntegrals.phase_gain(0.8, report.delta_gamma)
        assert MelnikovIntegrals.kappa(report) == pytest.approx(2.0 + 0.5 * g)

    def test_row_closes_constraint(self):
        row = MelnikovIntegrals.kappa_row(_one_pair_report([-1.0, 2.0, 0.5, 0.1]))
        assert abs(row["closure"]) < 1e-14
        assert row["alpha"] == pytest.approx(1.0 / row["kappa"])
        assert not row["singular"]

    def test_singular_kappa(self):
        report = _one_pair_report([0.0, 2.0, 0.5, 0.0])
        assert MelnikovIntegrals.kappa(report) is None
        row = MelnikovIntegrals.kappa_row(report)
        assert row["singular"] and row["flagged"]

    # --- QUADRATURE ---
    def test_certified_integrals(self):
        """Doubling the window or the x grid leaves the integrals unchanged."""
        report = MelnikovIntegrals.melnikov_one_pair(Params(omega=0.8), CHEAP)
        assert report.M.shape == (4,)
        assert np.all(np.isfinite(report.M))
        assert set(report.certificate) == {"t_max", "x_grid"}
        assert not report.flagged

    def test_strict_certificate(self):
        """A window far too short fails the refinement check."""
        tiny = QuadratureSpec(t_max_factor=0.5, nodes_per_unit=8, x_grid=32)
        with pytest.raises(QuadratureError, match="refinement"):
            MelnikovIntegrals.melnikov_one_pair(Params(omega=0.8), tiny, strict=True)

    def test_kappa_curve(self):
        frame = MelnikovIntegrals.kappa_curve([0.7, 0.8], Params(), CHEAP, certify=False)
        assert list(frame["omega"]) == [0.7, 0.8]
        assert frame["closure"].abs().max() < 1e-8

    # --- IMAGINARY RESIDUE ---
    def test_imaginary_residue_flagged(self):
        """M^(3), M^(4) are real; a residue above 1e-10 flags the report."""
        report = _one_pair_report([-1.0, 2.0, 0.5 + 1e-8j, 0.0])
        assert report.imaginary_residue == pytest.approx(1e-8)
        assert report.review()
        assert MelnikovIntegrals.kappa_row(report)["flagged"]

    def test_residue_outside_real_channels_ignored(self):
        report = _one_pair_report([-1.0 + 1e-6j, 2.0, 0.5, 1e-12j])
        assert not report.review()

    def test_quadrature_residue_flags(self, monkeypatch):
        exact = MelnikovIntegrals._one_pair_raw

        def with_residue(d, omega, quad):
            values, meta = exact(d, omega, quad)
            return values + np.array([0.0, 0.0, 0.0, 1e-9j]), meta

        monkeypatch.setattr(MelnikovIntegrals, "_one_pair_raw", staticmethod(with_residue))
        report = MelnikovIntegrals.melnikov_one_pair(Params(omega=0.8), CHEAP, certify=False)
        assert report.flagged
        assert report.to_dict()["imag_residue"] > 1e-10


class TestTwoPair:
    M = np.array([[0.4, -1.1, 0.7, 0.9], [-0.3, 0.8, 0.2, -0.6]])

    def test_solution_closes_both_constraints(self):
        report = MelnikovIntegrals.solve_two_pair(_two_pair_report(self.M))
        assert not report.flagged
        m = MelnikovIntegrals.two_pair_closure(report, report.alpha, report.beta, report.gamma)
        assert np.max(np.abs(m)) < 1e-12
        assert report.alpha == pytest.approx(1.0 / report.chi_tilde)
        assert 0 <= report.gamma < 2 * math.pi

    def test_surface_row_residuals(self):
        solved = MelnikovIntegrals.solve_two_pair(_two_pair_report(self.M))
        row = MelnikovIntegrals.surface_row(solved)
        assert abs(row["M1_residual"]) < 1e-12
        assert abs(row["M2_residual"]) < 1e-12
        assert abs(row["d_residual"]) < 1e-12

    def test_degenerate_denominator(self):
        M = np.array([[1.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 1.0]])
        report = MelnikovIntegrals.solve_two_pair(_two_pair_report(M))
        assert report.flagged
        assert report.alpha is None

    def test_single_pair_regime_rejected(self):
        with pytest.raises(DomainError, match="two-pair"):
            MelnikovIntegrals.melnikov_two_pairs(Params(omega=0.8), 0.5)

    def test_existence_two_pair(self):
        row = MelnikovIntegrals.existence_two_pair(_two_pair_report(self.M))
        assert row["converged"]
        assert np.isfinite(row["condition"])


class TestSecondDistance:
    @pytest.mark.parametrize("theta_start", [-2.0, -0.3, 0.4, 1.7])
    def test_hamiltonian_form(self, params_one_pair, theta_start):
        """d̃ equals the fish-Hamiltonian difference along j = 0."""
        direct = MelnikovIntegrals.second_distance(theta_start, -1.3, params_one_pair)
        via_h = MelnikovIntegrals.second_distance_hamiltonian(theta_start, -1.3, params_one_pair)
        assert direct == pytest.approx(via_h, abs=1e-12)

    def test_scan_columns(self, params_one_pair):
        frame = MelnikovIntegrals.second_distance_scan(np.linspace(-1, 1, 5), -1.3, params_one_pair)
        assert list(frame.columns) == ["theta_start", "theta_shift", "d_tilde", "hamiltonian_form"]

    def test_consistent_phase_zeroes_distance(self, params_one_pair):
        """With β cos γ = α g the consistent phase gives d̃ = 0."""
        dg = MelnikovIntegrals.delta_gamma(DarbouxData.build(0.8), 1)
        g = MelnikovIntegrals.phase_gain(0.8, dg)
        gamma = math.acos(params_one_pair.alpha * g / params_one_pair.beta)
        theta = MelnikovIntegrals.consistent_phase(gamma, dg)
        assert abs(MelnikovIntegrals.second_distance(theta, dg, params_one_pair)) < 1e-12


class TestExistence:
    def test_root_found(self):
        report = _one_pair_report([-1.0, 2.0, 0.5, 0.0])
        row = MelnikovIntegrals.existence_one_pair(report, beta=2.0)
        assert row["converged"]
        assert row["alpha"] == pytest.approx(1.0 / MelnikovIntegrals.kappa(report))
        assert row["physical"]
        assert abs(row["M1_residual"]) < 1e-8

    def test_no_root_for_small_beta(self):
        report = _one_pair_report([-1.0, 2.0, 0.5, 0.0])
        row = MelnikovIntegrals.existence_one_pair(report, beta=0.1)
        assert not row["converged"]
        assert "no root" in row["note"]

    def test_singular_kappa(self):
        row = MelnikovIntegrals.existence_one_pair(_one_pair_report([0.0, 2.0, 0.5, 0.0]), beta=2.0)
        assert row["note"] == "κ singular"

    def test_stalled_line_search_keeps_iterate(self, monkeypatch):
        """No damped step lowers the residual: stop and report, never accept a worse point."""
        report = _one_pair_report([-1.0, 2.0, 0.5, 0.0])
        alpha0 = 1.0 / MelnikovIntegrals.kappa(report)
        gain = MelnikovIntegrals.phase_gain(report.omega, report.delta_gamma)
        seed = np.array([alpha0, math.acos(alpha0 * gain / 2.0)])

        def kinked(report, beta):
            def system(v):
                dv = np.asarray(v) - seed
                return 1.0 + np.abs(dv) + 0.5 * dv

            return system

        monkeypatch.setattr(MelnikovIntegrals, "_one_pair_system", staticmethod(kinked))
        row = MelnikovIntegrals.existence_one_pair(report, beta=2.0)
        assert not row["converged"]
        assert row["note"] == "line search stalled"
        assert row["M1_residual"] == pytest.approx(1.0)
        assert row["alpha"] == pytest.approx(seed[0])
