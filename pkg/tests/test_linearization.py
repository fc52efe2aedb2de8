"""
Unit tests for src/linearization.py
Focus: Resonance coordinates, the operator L_ε and the eigen-split.
"""

import numpy as np
import pytest

from src.errors import DomainError
from src.field_core import SpectralField
from src.linearization import ResonanceLinearization


class TestResonanceCoords:
    def test_round_trip(self, params_one_pair, smooth_field):
        """q → (J, θ, f) → q is exact."""
        q = SpectralField.from_values(0.8 * np.exp(0.3j) + smooth_field.values)
        c = ResonanceLinearization.to_resonance_coords(q, params_one_pair)
        back = ResonanceLinearization.from_resonance_coords(c)
        assert back.sup_distance(q) < 1e-13
        assert abs(c.f.mode(0)) < 1e-15

    def test_zero_mean_rejected(self, params_one_pair, smooth_field):
        with pytest.raises(DomainError, match="undefined"):
            ResonanceLinearization.to_resonance_coords(smooth_field, params_one_pair)

    def test_remainders_vanish_on_circle(self, params_perturbed):
        """f = 0 leaves nothing nonlinear."""
        q = SpectralField.constant(0.8 * np.exp(0.4j), 32)
        c = ResonanceLinearization.to_resonance_coords(q, params_perturbed)
        terms = ResonanceLinearization.nonlinear_terms(c, params_perturbed)
        assert terms.r2_J == pytest.approx(0.0, abs=1e-15)
        assert terms.r2_theta == pytest.approx(0.0, abs=1e-15)
        assert np.max(np.abs(terms.n2.values)) < 1e-15
        assert np.max(np.abs(terms.n3.values)) < 1e-15


class TestOperator:
    # --- EIGENFUNCTIONS ---
    @pytest.mark.parametrize("sign", [1, -1])
    def test_eigenfunction_residual(self, params_perturbed, sign):
        """L_ε e_1^± = μ_1^± e_1^±."""
        p = params_perturbed
        e = ResonanceLinearization.eigenfunction(1, sign, p, 32)
        mu = ResonanceLinearization.eigenvalues(1, p)[0 if sign == 1 else 1]
        residual = ResonanceLinearization.l_epsilon_apply(e, p) - mu * e
        assert np.max(np.abs(residual.values)) < 1e-10

    def test_mode_matrix_eigenvalues(self, params_perturbed):
        """The 2×2 mode block carries the same pair."""
        p = params_perturbed
        numeric = np.sort_complex(np.linalg.eigvals(ResonanceLinearization.mode_matrix(1, p)))
        exact = np.sort_complex(np.array(ResonanceLinearization.eigenvalues(1, p)))
        assert np.max(np.abs(numeric - exact)) < 1e-12

    def test_eigen_phase_on_unit_circle(self):
        assert abs(ResonanceLinearization.eigen_phase(1, 0.8)) == pytest.approx(1.0)
        with pytest.raises(DomainError, match="hyperbolic"):
            ResonanceLinearization.eigen_phase(2, 0.8)

    # --- SPECTRUM ---
    def test_spectrum_real_pairs(self, params_one_pair, params_two_pair):
        """k² < 4ω² gives a real pair, the rest sit on the imaginary axis at ε = 0."""
        entries = ResonanceLinearization.spectrum_l_epsilon(params_one_pair, 3)
        assert [e.is_real for e in entries] == [True, False, False]
        assert entries[0].mu_plus.real == pytest.approx(np.sqrt(4 * 0.64 - 1))
        assert entries[1].mu_plus.real == pytest.approx(0.0)
        entries = ResonanceLinearization.spectrum_l_epsilon(params_two_pair, 3)
        assert [e.is_real for e in entries] == [True, True, False]

    def test_spectrum_shifted_by_damping(self, params_perturbed):
        entries = ResonanceLinearization.spectrum_l_epsilon(params_perturbed, 4)
        for e in entries:
            assert (e.mu_plus + e.mu_minus).real == pytest.approx(-2e-3 * (1 + e.k**2))

    def test_spectrum_frame(self, params_one_pair):
        frame = ResonanceLinearization.spectrum_frame(params_one_pair, 4)
        assert len(frame) == 8
        assert set(frame["branch"]) == {"plus", "minus"}

    def test_k_max_too_small(self, params_one_pair):
        with pytest.raises(ValueError, match="k_max"):
            ResonanceLinearization.spectrum_l_epsilon(params_one_pair, 1)

    def test_unstable_modes(self):
        assert ResonanceLinearization.unstable_modes(0.8) == (1,)
        assert ResonanceLinearization.unstable_modes(1.2) == (1, 2)
        with pytest.raises(DomainError, match="degenerate"):
            ResonanceLinearization.unstable_modes(1.0)


class TestEigenSplit:
    def test_split_merge_round_trip(self, params_two_pair, smooth_field):
        split = ResonanceLinearization.eigen_split(smooth_field, params_two_pair)
        assert split.modes == (1, 2)
        back = ResonanceLinearization.eigen_merge(split, params_two_pair)
        assert back.sup_distance(smooth_field) < 1e-14

    def test_split_of_eigenfunction(self, params_one_pair):
        """e_1^+ has coordinates ξ⁺ = 1, ξ⁻ = 0 and no remainder."""
        e = ResonanceLinearization.eigenfunction(1, 1, params_one_pair, 32)
        split = ResonanceLinearization.eigen_split(e, params_one_pair)
        assert split.xi_plus[0] == pytest.approx(1.0)
        assert split.xi_minus[0] == pytest.approx(0.0, abs=1e-14)
        assert np.max(np.abs(split.h.values)) < 1e-14

    def test_split_needs_zero_mean(self, params_one_pair):
        with pytest.raises(DomainError, match="zero-mean"):
            ResonanceLinearization.eigen_split(SpectralField.constant(1.0, 16), params_one_pair)

    def test_couplings_vanish_on_circle(self, params_perturbed, smooth_field):
        """J = 0 and θ = 0 switch both coupling terms off."""
        q = SpectralField.from_values(0.8 + smooth_field.values)
        c = ResonanceLinearization.to_resonance_coords(q, params_perturbed)
        c = type(c)(J=0.0, theta=0.0, f=c.f, omega=c.omega)
        split = ResonanceLinearization.eigen_split(c.f, params_perturbed)
        v_plus, v_minus = ResonanceLinearization.mode_couplings(c, split, params_perturbed)[1]
        assert v_plus == 0.0
        assert v_minus == 0.0
