"""
Unit tests for src/integrable.py
Focus: Transfer matrices, the Floquet discriminant, critical points and gradients.
"""

import math

import numpy as np
import pytest

from src.darboux import DarbouxData, HomoclinicOrbits
from src.errors import AccuracyError, ConvergenceError
from src.field_core import SpectralField
from src.integrable import ZakharovShabat


@pytest.fixture
def plane():
    return SpectralField.constant(0.8, 64)


class TestTransfer:
    # --- PLANE WAVE ---
    def test_discriminant_matches_closed_form(self, plane):
        """Δ(λ, q_c) = 2cos(2π√(a² + λ²)) on real and imaginary λ."""
        lams = np.array([0.0, 0.3, -0.7, 0.4j, 1.1j, 0.2 + 0.3j])
        delta = ZakharovShabat.floquet_discriminant(plane, lams)
        exact = ZakharovShabat.plane_wave_discriminant(lams, 0.8)
        assert np.max(np.abs(delta - exact)) < 1e-6

    def test_magnus_exact_for_constant_field(self):
        """The exponential midpoint step is exact when q does not vary."""
        q = SpectralField.constant(1.2, 16)
        lams = np.array([0.5, 0.9j])
        delta = ZakharovShabat.floquet_discriminant(q, lams, method="magnus2")
        exact = ZakharovShabat.plane_wave_discriminant(lams, 1.2)
        assert np.max(np.abs(delta - exact)) < 1e-10

    def test_unimodular(self, plane):
        tm = ZakharovShabat.zs_transfer(plane, np.array([0.3, 0.5j]))
        assert np.max(np.abs(tm.det - 1.0)) < 1e-8

    def test_scalar_lambda(self, plane):
        value = ZakharovShabat.floquet_discriminant(plane, 0.25)
        assert isinstance(value, complex)

    def test_step_halving_check(self):
        q = SpectralField.constant(0.8, 16)
        with pytest.raises(AccuracyError, match="Step halving"):
            ZakharovShabat.zs_transfer(q, 0.3, check=True, tol=1e-16)

    def test_unknown_method(self, plane):
        with pytest.raises(ValueError, match="method"):
            ZakharovShabat.zs_transfer(plane, 0.3, method="euler")

    def test_discriminant_frame(self, plane):
        frame = ZakharovShabat.discriminant_frame(plane, [0.1, 0.2j], a=0.8)
        assert list(frame.columns) == [
            "re_lambda", "im_lambda", "re_delta", "im_delta", "abs_error",
        ]
        assert frame["abs_error"].max() < 1e-6


class TestCriticalPoints:
    def test_complex_double_point(self, plane):
        """a = 0.8: iσ with σ² = a² − 1/4 is a critical point with Δ = −2."""
        target = 1j * math.sqrt(0.64 - 0.25)
        point = ZakharovShabat.refine_critical_point(plane, target + 0.01)
        assert abs(point.lam - target) < 1e-6
        assert abs(point.delta + 2) < 1e-6

    def test_real_double_point(self, plane):
        """λ² = 1 − a² gives k = 1 and Δ = 2."""
        point = ZakharovShabat.refine_critical_point(plane, 0.55)
        assert abs(point.lam - 0.6) < 1e-6
        assert abs(point.delta - 2) < 1e-6

    def test_duplicates_dropped(self, plane):
        points = ZakharovShabat.critical_points(plane, [0.58, 0.62])
        assert len([p for p in points if p.converged]) == 1

    def test_stalled_seed(self, plane):
        with pytest.raises(ConvergenceError, match="No critical point"):
            ZakharovShabat.refine_critical_point(plane, 0.3j, max_iter=1)

    def test_second_derivative(self):
        value = ZakharovShabat.second_derivative(lambda z: z**3, 2.0)
        assert abs(value - 12.0) < 1e-4


class TestGradient:
    def test_monodromy_matches_plane_wave(self, plane):
        lam = 0.3 + 0.1j
        generic = ZakharovShabat.melnikov_vector_generic(plane, lam)
        closed = ZakharovShabat.plane_wave_gradient(lam, plane)
        for a, b in zip(generic, closed, strict=True):
            assert np.max(np.abs(a - b)) < 1e-6

    def test_bloch_matches_monodromy(self):
        """Away from double points both assemblies agree."""
        q = SpectralField.from_function(lambda x: 0.8 + 0.1 * np.cos(x) + 0.05j * np.sin(2 * x), 32)
        lam = 0.3 + 0.2j
        mono = ZakharovShabat.melnikov_vector_generic(q, lam, method="monodromy")
        bloch = ZakharovShabat.melnikov_vector_generic(q, lam, method="bloch")
        for a, b in zip(mono, bloch, strict=True):
            assert np.max(np.abs(a - b)) < 1e-8

    def test_gradient_predicts_variation(self):
        """⟨∇Δ, δq⟩ matches a centered difference of Δ."""
        q = SpectralField.from_function(lambda x: 0.8 + 0.1 * np.cos(x), 32)
        dq = 0.2 * np.exp(1j * q.x) + 0.1j * np.cos(2 * q.x)
        lam = 0.4 + 0.15j
        grad = ZakharovShabat.melnikov_vector_generic(q, lam)
        predicted = ZakharovShabat.pairing(grad, dq)
        s = 1e-5
        discriminant = ZakharovShabat.floquet_discriminant
        plus = discriminant(SpectralField.from_values(q.values + s * dq), lam)
        minus = discriminant(SpectralField.from_values(q.values - s * dq), lam)
        assert abs((plus - minus) / (2 * s) - predicted) < 1e-6

    def test_family_matches_single_transfers(self):
        q = SpectralField.from_function(lambda x: 0.8 + 0.1 * np.cos(x), 32)
        rows = np.stack([q.values, 0.5 * q.values, np.full(32, 1.1 + 0j)])
        lam = 0.4 + 0.15j
        family = ZakharovShabat.discriminant_family(rows, lam)
        single = [ZakharovShabat.floquet_discriminant(SpectralField.from_values(r), lam)
                  for r in rows]
        assert np.max(np.abs(family - np.array(single))) < 1e-12

    # --- GRID POINTS ---
    def test_grid_point_differences_match_gradient(self, params_one_pair):
        """Real and imaginary nudges of every q_m move Δ by (2π/N) times the gradient."""
        d = DarbouxData.build(0.8)
        q = HomoclinicOrbits.homoclinic_one_pair(0.3 / (2 * d.sigma), 64, d, params_one_pair)
        assert ZakharovShabat.grid_gradient_error(q, d.nu) < 1e-4

    def test_grid_point_differences_generic_field(self):
        q = SpectralField.from_function(
            lambda x: 0.8 + 0.1 * np.cos(x) + 0.05j * np.sin(2 * x), 32)
        assert ZakharovShabat.grid_gradient_error(q, 0.3 + 0.2j) < 1e-4

    def test_unknown_gradient_method(self, plane):
        with pytest.raises(ValueError):
            ZakharovShabat.melnikov_vector_generic(plane, 0.3, method="adjoint")
