"""
Unit tests for src/plane_dynamics.py
Focus: Fixed points on the plane, the fish Hamiltonian and RK4 integration.
"""

import math

import numpy as np
import pytest

from src.config import Params
from src.errors import DomainError
from src.plane_dynamics import PlaneDynamics, PlaneState


def _by_kind(points):
    return {fp.kind: fp for fp in points}


class TestFixedPoints:
    # --- EXPANSIONS ---
    def test_saddle_intensity_expansion(self, params_perturbed):
        """Q_ε sits at I = ω² − (ε/2ω)√(β² − α²ω²) + O(ε²)."""
        p = params_perturbed
        q = _by_kind(PlaneDynamics.fixed_points(p))["Q_eps"]
        root = math.sqrt(p.beta**2 - (p.alpha * p.omega) ** 2)
        expected = p.omega**2 - p.epsilon / (2 * p.omega) * root
        assert abs(q.I - expected) < 2 * p.epsilon**2
        assert q.residual < 1e-12

    def test_expansion_at_unit_omega(self):
        """ω = 1, α = 1, β = 2, ε = 1e-3: I ≈ 1 − 5e-4·√3."""
        p = Params(omega=1.0, epsilon=1e-3)
        q = _by_kind(PlaneDynamics.fixed_points(p))["Q_eps"]
        assert abs(q.I - (1 - 5e-4 * math.sqrt(3))) < 2e-6

    def test_focus_near_origin(self, params_perturbed):
        o = _by_kind(PlaneDynamics.fixed_points(params_perturbed))["O_eps"]
        assert o.I < 1e-5

    # --- STABILITY ---
    def test_closed_form_eigenvalues_match_jacobian(self, params_perturbed):
        """Closed-form and finite-difference spectra agree at every point."""
        for fp in PlaneDynamics.fixed_points(params_perturbed):
            for exact, numeric in zip(fp.eigenvalues, fp.numerical_eigenvalues, strict=True):
                assert abs(exact - numeric) < 1e-6, fp.kind

    def test_saddle_is_hyperbolic(self, params_perturbed):
        q = _by_kind(PlaneDynamics.fixed_points(params_perturbed))["Q_eps"]
        assert q.eigenvalues[0].real > 0 > q.eigenvalues[1].real

    def test_rescaled_points(self, params_one_pair):
        """Q_* is a saddle, P_* a center, both at j = 0."""
        pts = _by_kind(PlaneDynamics.rescaled_fixed_points(params_one_pair))
        theta_star = math.acos(0.4)
        assert pts["Q_star"].theta == pytest.approx(theta_star)
        assert pts["P_star"].theta == pytest.approx(-theta_star)
        assert abs(pts["Q_star"].eigenvalues[0] - pts["Q_star"].numerical_eigenvalues[0]) < 1e-6
        assert abs(pts["P_star"].eigenvalues[0].real) < 1e-12

    # --- ERRORS ---
    def test_unperturbed_rejected(self, params_one_pair):
        with pytest.raises(DomainError, match="epsilon"):
            PlaneDynamics.fixed_points(params_one_pair)

    def test_no_saddle_angle(self):
        with pytest.raises(DomainError, match="αω < β"):
            PlaneDynamics.saddle_angle(Params(omega=0.8, alpha=3.0))


class TestFish:
    def test_hamiltonian_at_saddle(self):
        """ℋ(0, π/3) = 2(√3 − π/3) for ω = 1, α = 1, β = 2."""
        p = Params(omega=1.0)
        theta_star = PlaneDynamics.saddle_angle(p)
        assert theta_star == pytest.approx(math.pi / 3)
        value = PlaneDynamics.fish_hamiltonian(0.0, theta_star, p)
        assert value == pytest.approx(2 * (math.sqrt(3) - math.pi / 3), abs=1e-12)

    def test_head_on_singular_level(self, params_one_pair):
        """θ̂ lies on the level set of Q_*."""
        p = params_one_pair
        head = PlaneDynamics.fish_head(p)
        theta_star = PlaneDynamics.saddle_angle(p)
        assert -1.5 * math.pi < head < 0
        h_head = PlaneDynamics.fish_hamiltonian(0.0, head, p)
        h_star = PlaneDynamics.fish_hamiltonian(0.0, theta_star, p)
        assert abs(h_head - h_star) < 1e-10

    def test_separatrix_on_level_set(self, params_one_pair):
        p = params_one_pair
        head = PlaneDynamics.fish_head(p)
        theta_star = PlaneDynamics.saddle_angle(p)
        theta = np.linspace(head + 1e-3, theta_star + 2 * math.pi, 50)
        unstable, stable = PlaneDynamics.separatrix_curves(theta, p, head=head)
        h_star = PlaneDynamics.fish_hamiltonian(0.0, theta_star, p)
        assert np.max(np.abs(PlaneDynamics.fish_hamiltonian(unstable, theta, p) - h_star)) < 1e-10
        assert np.allclose(unstable, -stable)

    def test_separatrix_outside_range(self, params_one_pair):
        with pytest.raises(DomainError):
            PlaneDynamics.separatrix_curves(np.array([-6.0]), params_one_pair)


class TestIntegration:
    def test_leading_flow_conserves_hamiltonian(self, params_one_pair):
        """An orbit around the center P_* keeps ℋ fixed up to RK4 error."""
        p = params_one_pair
        start = PlaneState(0.3, -PlaneDynamics.saddle_angle(p))
        traj = PlaneDynamics.integrate_plane(start, (0.0, 10.0), p, mode="leading", step=1e-3)
        h = PlaneDynamics.fish_hamiltonian(traj.first, traj.theta, p)
        assert not traj.halted
        assert np.max(np.abs(h - h[0])) < 1e-9

    def test_step_halving(self, params_one_pair):
        start = PlaneState(0.3, 0.0)
        err = PlaneDynamics.step_halving_error(start, (0.0, 2.0), params_one_pair, step=1e-2)
        assert err < 1e-6

    def test_trajectory_frame_labels(self, params_one_pair):
        traj = PlaneDynamics.integrate_plane(PlaneState(0.0, 0.5), (0.0, 0.1), params_one_pair,
                                             step=1e-2, stride=5)
        assert list(traj.to_frame().columns) == ["tau", "j", "theta", "hamiltonian"]
        assert len(traj.times) == 3

    def test_bad_mode(self, params_one_pair):
        with pytest.raises(ValueError, match="mode"):
            PlaneDynamics.integrate_plane(PlaneState(0.0, 0.0), (0.0, 1.0), params_one_pair,
                                          mode="bogus")

    def test_hamiltonian_column(self, params_one_pair):
        p = params_one_pair
        traj = PlaneDynamics.integrate_plane(PlaneState(0.2, -1.0), (0.0, 1.0), p,
                                             mode="leading", step=1e-2, stride=10)
        frame = traj.to_frame()
        j, theta = frame["j"].to_numpy(), frame["theta"].to_numpy()
        expected = PlaneDynamics.fish_hamiltonian(j, theta, p)
        assert np.allclose(frame["hamiltonian"], expected, rtol=0, atol=1e-14)

    def test_full_mode_hamiltonian_rescales_J(self, params_perturbed):
        p = params_perturbed
        traj = PlaneDynamics.integrate_plane(PlaneState(1e-3, -1.0), (0.0, 0.5), p,
                                             mode="full", step=1e-2, stride=10)
        frame = traj.to_frame()
        j = frame["J"].to_numpy() / math.sqrt(p.epsilon)
        expected = PlaneDynamics.fish_hamiltonian(j, frame["theta"].to_numpy(), p)
        assert np.allclose(frame["hamiltonian"], expected, rtol=0, atol=1e-12)

    def test_full_mode_hamiltonian_undefined_without_epsilon(self, params_one_pair):
        traj = PlaneDynamics.integrate_plane(PlaneState(0.0, -1.0), (0.0, 0.1), params_one_pair,
                                             mode="full", step=1e-2)
        assert np.isnan(traj.to_frame()["hamiltonian"]).all()


class TestNullclines:
    """Points on each nullcline zero the matching component of the rescaled field."""

    @pytest.mark.parametrize("mode", ["leading", "rescaled"])
    def test_components_vanish(self, mode):
        p = Params(omega=0.8, alpha=1.0, beta=2.0, epsilon=1e-2)
        frame = PlaneDynamics.nullclines(p, np.linspace(-3 * np.pi, np.pi, 201),
                                         np.linspace(-2.0, 2.0, 101), mode)
        leading = mode == "leading"
        flat = frame[frame["curve"] == "theta_dot"]
        still = frame[frame["curve"] == "j_dot"]
        assert len(flat) == 201
        assert len(still) > 0
        for j, theta in zip(flat["j"], flat["theta"], strict=True):
            assert abs(PlaneDynamics.rescaled_rhs(j, theta, p, leading)[1]) < 1e-12
        for j, theta in zip(still["j"], still["theta"], strict=True):
            assert abs(PlaneDynamics.rescaled_rhs(j, theta, p, leading)[0]) < 1e-12

    def test_leading_j_dot_branches(self, params_one_pair):
        p = params_one_pair
        frame = PlaneDynamics.nullclines(p, np.linspace(-np.pi, np.pi, 11), np.array([0.0, 1.0]))
        still = frame[frame["curve"] == "j_dot"]
        root = math.acos(p.alpha * p.omega / p.beta)
        found = sorted(set(np.round(still["theta"], 12)))
        assert found == sorted({round(root, 12), round(-root, 12)})
        assert (frame.loc[frame["curve"] == "theta_dot", "j"] == 0).all()

    def test_full_mode_rejected(self, params_one_pair):
        with pytest.raises(ValueError, match="rescaled"):
            PlaneDynamics.nullclines(params_one_pair, np.zeros(3), np.zeros(3), mode="full")
