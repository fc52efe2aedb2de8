"""
Core Logic: Melnikov integrals along the unperturbed homoclinic orbits,
the constraint surfaces κ(ω), χ̃(ω, Δρ), β(ω, Δρ), and the second distance d̃.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .config import Params, QuadratureSpec
from .darboux import DarbouxData, HomoclinicOrbits, _u_pair
from .errors import DomainError, QuadratureError
from .field_core import grid_points, spectral_derivative
from .plane_dynamics import PlaneDynamics

logger = logging.getLogger(__name__)

CERTIFICATE_TOL = 1e-6
IMAGINARY_TOL = 1e-10
SINGULAR_TOL = 1e-10
T_CHUNK = 256


@dataclass
class MelnikovReport:
    """Complex integrals M_j^(l); the surface formulas read their real parts."""

    omega: float
    pairs: int
    M: np.ndarray
    delta_gamma: float
    delta_rho: float | None = None
    kappa: float | None = None
    chi_tilde: float | None = None
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    quadrature: dict = field(default_factory=dict)
    certificate: dict = field(default_factory=dict)
    flagged: bool = False

    @property
    def max_imaginary(self) -> float:
        return float(np.max(np.abs(self.M.imag)))

    @property
    def imaginary_residue(self) -> float:
        """Largest |Im| in the M^(3), M^(4) channels, which are real as printed."""
        return float(np.max(np.abs(self.M[..., 2:].imag)))

    def review(self) -> bool:
        """Flags a failed refinement certificate or an imaginary residue above IMAGINARY_TOL."""
        failed = bool(self.certificate) and max(self.certificate.values()) > CERTIFICATE_TOL
        residue = self.imaginary_residue > IMAGINARY_TOL
        if residue:
            logger.warning("Imaginary residue %.3e in M^(3)/M^(4) at ω = %.4f",
                           self.imaginary_residue, self.omega)
        self.flagged = self.flagged or failed or residue
        return self.flagged

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "pairs": self.pairs,
            "M_real": self.M.real.tolist(),
            "M_imag": self.M.imag.tolist(),
            "imag_residue": self.imaginary_residue,
            "delta_gamma": self.delta_gamma,
            "delta_rho": self.delta_rho,
            "kappa": self.kappa,
            "chi_tilde": self.chi_tilde,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "quadrature": self.quadrature,
            "certificate": self.certificate,
            "flagged": self.flagged,
        }


def time_rule(centers, rates, quad: QuadratureSpec) -> tuple[np.ndarray, np.ndarray, dict]:
    """
    Composite Gauss-Legendre nodes on [min(c) − T, max(c) + T], T = t_max_factor / min(rate),
    panels of width 1/max(rate) with nodes_per_unit nodes each.
    """
    slow, fast = min(rates), max(rates)
    half = quad.t_max_factor / slow
    lo, hi = min(centers) - half, max(centers) + half
    panels = int(math.ceil((hi - lo) * fast))
    width = (hi - lo) / panels
    nodes, weights = np.polynomial.legendre.leggauss(quad.nodes_per_unit)
    starts = lo + width * np.arange(panels)
    t = (starts[:, None] + 0.5 * width * (nodes + 1)[None, :]).ravel()
    w = np.tile(0.5 * width * weights, panels)
    meta = {"t_min": lo, "t_max": hi, "panels": panels, "t_nodes": int(t.size),
            "x_grid": quad.x_grid}
    return t, w, meta


def _integrate(integrand, t: np.ndarray, w: np.ndarray, n: int) -> np.ndarray:
    """Σ_t w(t) · 2π⟨integrand(t, ·)⟩, evaluated in chunks of time nodes."""
    x = grid_points(n)
    total = None
    for start in range(0, t.size, T_CHUNK):
        tc = t[start:start + T_CHUNK, None]
        wc = w[start:start + T_CHUNK]
        values = integrand(tc, x)
        part = np.array([2 * np.pi * np.sum(wc * np.mean(v, axis=-1)) for v in values])
        total = part if total is None else total + part
    return total


def _one_pair_integrand(d: DarbouxData, omega: float):
    def integrand(t, x):
        u1, u2 = _u_pair(d.tau(t), x / 2 + d.vartheta / 2, d.theta0)
        weight = (np.abs(u1) ** 2 + np.abs(u2) ** 2) ** -2
        a, b = np.conj(u1) ** 2, np.conj(u2) ** 2
        P = HomoclinicOrbits.one_pair_profile(t, x, d)
        P_xx = spectral_derivative(P, 2)
        return (
            omega**2 * weight * (a * P_xx - b * np.conj(P_xx)),
            omega**2 * weight * (b * np.conj(P) - a * P),
            omega * weight * (a - b),
            1j * omega * weight * (a + b),
        )

    return integrand


def _two_pair_integrand(d: DarbouxData, omega: float):
    def block(first, second, P, P_xx):
        a, b = first**2, second**2
        return (
            omega**2 * (a * P_xx - b * np.conj(P_xx)),
            omega**2 * (b * np.conj(P) - a * P),
            omega * (a - b),
            1j * omega * (a + b),
        )

    def integrand(t, x):
        f = HomoclinicOrbits.s_fields(t, x, d)
        P = HomoclinicOrbits.two_pair_profile(f, d)
        P_xx = spectral_derivative(P, 2)
        return block(f["S2"], f["S1"], P, P_xx) + block(f["S2_hat"], f["S1_hat"], P, P_xx)

    return integrand


class MelnikovIntegrals:
    """Quadrature of the Melnikov integrals and the surfaces they define."""

    # --- PHASES ---

    @staticmethod
    def delta_gamma(d: DarbouxData, pairs: int = 1) -> float:
        """Δγ = −4ϑ₀ (one pair) or Δ̃γ = −4(ϑ₀ + ϑ̂₀) (two pairs)."""
        return -4 * d.theta0 if pairs == 1 else -4 * (d.theta0 + d.theta0_hat)

    @staticmethod
    def phase_gain(omega: float, delta_gamma: float) -> float:
        """ωΔγ / (2 sin(Δγ/2))."""
        half = math.sin(delta_gamma / 2)
        if abs(half) < SINGULAR_TOL:
            raise DomainError(f"sin(Δγ/2) vanishes at Δγ = {delta_gamma:.6f}.")
        return omega * delta_gamma / (2 * half)

    # --- ONE PAIR ---

    @staticmethod
    def _one_pair_raw(d: DarbouxData, omega: float, quad: QuadratureSpec):
        t, w, meta = time_rule([d.rho / (2 * d.sigma)], [2 * d.sigma], quad)
        values = _integrate(_one_pair_integrand(d, omega), t, w, quad.x_grid)
        return values, meta

    @staticmethod
    def melnikov_one_pair(
        p: Params,
        quad: QuadratureSpec | None = None,
        vartheta: float | None = None,
        certify: bool = True,
        strict: bool = False,
    ) -> MelnikovReport:
        """
        (M^(1), M^(2), M^(3)) along the one-pair orbit at a = ω, plus the
        diagnostic M^(4). Even orbit unless `vartheta` is given.
        """
        quad = quad or QuadratureSpec()
        d = DarbouxData.build(p.omega, vartheta=vartheta)
        values, meta = MelnikovIntegrals._one_pair_raw(d, p.omega, quad)
        certificate = {}
        if certify:
            certificate = MelnikovIntegrals._certify(
                values, lambda q: MelnikovIntegrals._one_pair_raw(d, p.omega, q)[0], quad, strict)
        logger.debug("one-pair Melnikov at ω=%.4f: %s", p.omega, values)
        report = MelnikovReport(
            omega=p.omega, pairs=1, M=values,
            delta_gamma=MelnikovIntegrals.delta_gamma(d, 1),
            quadrature=meta, certificate=certificate,
        )
        report.review()
        return report

    @staticmethod
    def _certify(values, evaluate, quad: QuadratureSpec, strict: bool) -> dict:
        scale = max(float(np.max(np.abs(values))), 1e-300)
        longer = evaluate(quad.refined(t_max=True))
        finer = evaluate(quad.refined(x_grid=True))
        certificate = {
            "t_max": float(np.max(np.abs(longer - values)) / scale),
            "x_grid": float(np.max(np.abs(finer - values)) / scale),
        }
        if max(certificate.values()) > CERTIFICATE_TOL:
            message = f"Melnikov refinement changed values by {max(certificate.values()):.3e}"
            if strict:
                raise QuadratureError(message, certificate)
            logger.warning(message)
        return certificate

    @staticmethod
    def kappa(report: MelnikovReport) -> float | None:
        """κ = −[2M^(2) sin(Δγ/2) + M^(3) ωΔγ] / [2M^(1) sin(Δγ/2)]; None when singular."""
        M1, M2, M3 = report.M.real[:3]
        dg = report.delta_gamma
        denominator = 2 * M1 * math.sin(dg / 2)
        if abs(denominator) < SINGULAR_TOL:
            return None
        return -(2 * M2 * math.sin(dg / 2) + M3 * report.omega * dg) / denominator

    @staticmethod
    def one_pair_closure(report: MelnikovReport, alpha: float, beta_cos_gamma: float) -> float:
        """M₁ = M^(1) + αM^(2) + β cos γ M^(3)."""
        M1, M2, M3 = report.M.real[:3]
        return float(M1 + alpha * M2 + beta_cos_gamma * M3)

    @staticmethod
    def kappa_curve(omega_grid, p: Params, quad: QuadratureSpec | None = None,
                    certify: bool = True) -> pd.DataFrame:
        rows = []
        for omega in np.asarray(omega_grid, dtype=float):
            report = MelnikovIntegrals.melnikov_one_pair(p.with_(omega=float(omega)), quad,
                                                         certify=certify)
            rows.append(MelnikovIntegrals.kappa_row(report))
        return pd.DataFrame(rows)

    @staticmethod
    def kappa_row(report: MelnikovReport) -> dict:
        kappa = MelnikovIntegrals.kappa(report)
        gain = MelnikovIntegrals.phase_gain(report.omega, report.delta_gamma)
        singular = kappa is None or abs(kappa) < SINGULAR_TOL
        alpha = None if singular else 1.0 / kappa
        beta_cos_gamma = None if singular else alpha * gain
        closure = (
            None if singular else MelnikovIntegrals.one_pair_closure(report, alpha, beta_cos_gamma)
        )
        if singular:
            logger.warning("κ singular at ω = %.6f", report.omega)
        row = {
            "omega": report.omega,
            "kappa": kappa,
            "alpha": alpha,
            "beta_cos_gamma": beta_cos_gamma,
            "delta_gamma": report.delta_gamma,
            "M1": report.M.real[0], "M2": report.M.real[1], "M3": report.M.real[2],
            "M4": report.M.real[3],
            "max_imag": report.max_imaginary,
            "imag_residue": report.imaginary_residue,
            "closure": closure,
            "singular": singular,
            "flagged": report.flagged or singular,
        }
        row.update({f"cert_{k}": v for k, v in report.certificate.items()})
        return row

    # --- TWO PAIRS ---

    @staticmethod
    def _two_pair_raw(d: DarbouxData, omega: float, quad: QuadratureSpec):
        centers = [d.rho / (2 * d.sigma), d.rho_hat / (4 * d.sigma_hat)]
        t, w, meta = time_rule(centers, [2 * d.sigma, 4 * d.sigma_hat], quad)
        values = _integrate(_two_pair_integrand(d, omega), t, w, quad.x_grid)
        return values.reshape(2, 4), meta

    @staticmethod
    def melnikov_two_pairs(
        p: Params,
        delta_rho: float,
        quad: QuadratureSpec | None = None,
        rho: float = 0.0,
        certify: bool = True,
        strict: bool = False,
    ) -> MelnikovReport:
        """2×4 complex M_j^(l) along Q̃ at a = ω ∈ (1, 3/2), gauge ρ fixed."""
        if not 1.0 < p.omega < 1.5:
            raise DomainError(f"The two-pair regime needs ω ∈ (1, 3/2), got {p.omega}.")
        quad = quad or QuadratureSpec()
        d = DarbouxData.from_delta_rho(p.omega, delta_rho, rho)
        values, meta = MelnikovIntegrals._two_pair_raw(d, p.omega, quad)
        certificate = {}
        if certify:
            certificate = MelnikovIntegrals._certify(
                values, lambda q: MelnikovIntegrals._two_pair_raw(d, p.omega, q)[0], quad, strict)
        report = MelnikovReport(
            omega=p.omega, pairs=2, M=values,
            delta_gamma=MelnikovIntegrals.delta_gamma(d, 2), delta_rho=delta_rho,
            quadrature=meta, certificate=certificate,
        )
        report.review()
        return report

    @staticmethod
    def solve_two_pair(report: MelnikovReport) -> MelnikovReport:
        """
        Fills χ̃, α = 1/χ̃, β and γ from M₁ = M₂ = 0 with β cos γ = αωΔ̃γ/(2 sin(Δ̃γ/2)).
        Degenerate denominators flag the report.
        """
        M = report.M.real
        try:
            gain = MelnikovIntegrals.phase_gain(report.omega, report.delta_gamma)
        except DomainError as e:
            logger.warning("%s", e)
            report.flagged = True
            return report
        denominator = M[1, 0] * M[0, 3] - M[0, 0] * M[1, 3]
        if abs(denominator) < SINGULAR_TOL or abs(M[0, 3]) < SINGULAR_TOL:
            logger.warning("Degenerate two-pair denominators at ω=%.4f, Δρ=%.4f",
                           report.omega, report.delta_rho)
            report.flagged = True
            return report
        chi = ((M[0, 1] * M[1, 3] - M[1, 1] * M[0, 3])
               + gain * (M[0, 2] * M[1, 3] - M[1, 2] * M[0, 3])) / denominator
        if abs(chi) < SINGULAR_TOL:
            report.chi_tilde = chi
            report.flagged = True
            return report
        alpha = 1.0 / chi
        X = alpha * gain
        Y = -(M[0, 0] + alpha * (M[0, 1] + gain * M[0, 2])) / M[0, 3]
        report.chi_tilde = float(chi)
        report.alpha = float(alpha)
        report.beta = float(math.hypot(X, Y))
        report.gamma = float(math.atan2(Y, X) % (2 * math.pi))
        return report

    @staticmethod
    def two_pair_closure(report: MelnikovReport, alpha: float, beta: float,
                         gamma: float) -> np.ndarray:
        """(M₁, M₂) with M_j = M_j^(1) + αM_j^(2) + β cos γ M_j^(3) + β sin γ M_j^(4)."""
        M = report.M.real
        coeffs = np.array([1.0, alpha, beta * math.cos(gamma), beta * math.sin(gamma)])
        return M @ coeffs

    @staticmethod
    def surface_two_pairs(omega_grid, delta_rho_grid, p: Params,
                          quad: QuadratureSpec | None = None, certify: bool = True,
                          executor=None) -> pd.DataFrame:
        points = [(float(w), float(r)) for w in np.asarray(omega_grid, dtype=float)
                  for r in np.asarray(delta_rho_grid, dtype=float)]

        def evaluate(point):
            omega, delta_rho = point
            report = MelnikovIntegrals.melnikov_two_pairs(
                p.with_(omega=omega), delta_rho, quad, certify=certify)
            return MelnikovIntegrals.surface_row(MelnikovIntegrals.solve_two_pair(report))

        mapper = executor.map if executor is not None else map
        return pd.DataFrame(list(mapper(evaluate, points)))

    @staticmethod
    def surface_row(report: MelnikovReport) -> dict:
        row = {
            "omega": report.omega,
            "delta_rho": report.delta_rho,
            "chi_tilde": report.chi_tilde,
            "alpha": report.alpha,
            "beta": report.beta,
            "gamma": report.gamma,
            "max_imag": report.max_imaginary,
            "imag_residue": report.imaginary_residue,
            "flagged": report.flagged,
        }
        if report.alpha is not None:
            m = MelnikovIntegrals.two_pair_closure(report, report.alpha, report.beta, report.gamma)
            theta_start = MelnikovIntegrals.consistent_phase(report.gamma, report.delta_gamma)
            d_tilde = MelnikovIntegrals.second_distance(
                theta_start, report.delta_gamma,
                Params(omega=report.omega, alpha=report.alpha, beta=report.beta))
            row.update({
                "M1_residual": float(m[0]), "M2_residual": float(m[1]),
                "d_residual": d_tilde,
                "physical": bool(report.alpha > 0 and report.alpha * report.omega < report.beta),
            })
        row.update({f"cert_{k}": v for k, v in report.certificate.items()})
        return row

    # --- SECOND MEASUREMENT ---

    @staticmethod
    def second_distance(theta_start: float, theta_shift: float, p: Params) -> float:
        """d̃ = 2ω[αωθ₁ + β(sin θ₀ − sin(θ₀ + θ₁))]."""
        w = p.omega
        drop = math.sin(theta_start) - math.sin(theta_start + theta_shift)
        return float(2 * w * (p.alpha * w * theta_shift + p.beta * drop))

    @staticmethod
    def second_distance_hamiltonian(theta_start: float, theta_shift: float, p: Params,
                                    j0: float = 0.0) -> float:
        """The same distance as ℋ(j₀, θ₀) − ℋ(j₀, θ₀ + θ₁)."""
        h = PlaneDynamics.fish_hamiltonian
        return float(h(j0, theta_start, p) - h(j0, theta_start + theta_shift, p))

    @staticmethod
    def consistent_phase(gamma: float, delta_gamma: float) -> float:
        """θ⁰(0) = −γ − Δγ/2: the plane-wave phase halfway along the orbit's phase jump."""
        return -gamma - delta_gamma / 2

    @staticmethod
    def second_distance_scan(theta_grid, theta_shift: float, p: Params) -> pd.DataFrame:
        theta_grid = np.asarray(theta_grid, dtype=float)
        direct = MelnikovIntegrals.second_distance
        energy = MelnikovIntegrals.second_distance_hamiltonian
        return pd.DataFrame({
            "theta_start": theta_grid,
            "theta_shift": theta_shift,
            "d_tilde": [direct(th, theta_shift, p) for th in theta_grid],
            "hamiltonian_form": [energy(th, theta_shift, p) for th in theta_grid],
        })

    # --- EXISTENCE ---

    @staticmethod
    def _one_pair_system(report: MelnikovReport, beta: float):
        dg = report.delta_gamma

        def system(v):
            alpha, gamma = v
            pp = Params(omega=report.omega, alpha=alpha, beta=beta)
            m1 = MelnikovIntegrals.one_pair_closure(report, alpha, beta * math.cos(gamma))
            d_tilde = MelnikovIntegrals.second_distance(
                MelnikovIntegrals.consistent_phase(gamma, dg), dg, pp)
            return np.array([m1, d_tilde])

        return system

    @staticmethod
    def existence_one_pair(report: MelnikovReport, beta: float, tol: float = 1e-12,
                           max_iter: int = 50) -> dict:
        """
        Damped Newton on (α, γ) for M₁ = d̃ = 0 at fixed (ω, β), seeded by
        α = 1/κ and cos γ = αωΔγ/(2β sin(Δγ/2)).
        """
        kappa = MelnikovIntegrals.kappa(report)
        row = {"omega": report.omega, "beta": beta, "kappa": kappa, "converged": False}
        if kappa is None:
            row["note"] = "κ singular"
            return row
        gain = MelnikovIntegrals.phase_gain(report.omega, report.delta_gamma)
        alpha0 = 1.0 / kappa
        cos_gamma = alpha0 * gain / beta
        if abs(cos_gamma) > 1:
            row["note"] = "no root: |cos γ| > 1 at this β"
            return row

        system = MelnikovIntegrals._one_pair_system(report, beta)
        v = np.array([alpha0, math.acos(cos_gamma)])
        res = system(v)
        for _ in range(max_iter):
            if np.max(np.abs(res)) < tol:
                break
            jac = PlaneDynamics.finite_difference_jacobian(system, v)
            step = np.linalg.solve(jac, -res)
            damping = 1.0
            while damping > 1e-4:
                trial = v + damping * step
                trial_res = system(trial)
                if np.max(np.abs(trial_res)) < np.max(np.abs(res)):
                    break
                damping /= 2
            else:
                logger.warning("Damped Newton stalled at ω = %.4f (|res| = %.3e)",
                               report.omega, np.max(np.abs(res)))
                row["note"] = "line search stalled"
                break
            v, res = trial, trial_res

        jac = PlaneDynamics.finite_difference_jacobian(system, v)
        alpha, gamma = float(v[0]), float(v[1] % (2 * math.pi))
        row.update({
            "alpha": alpha,
            "gamma": gamma,
            "M1_residual": float(res[0]),
            "d_residual": float(res[1]),
            "condition": float(np.linalg.cond(jac)),
            "converged": bool(np.max(np.abs(res)) < 1e-8),
            "physical": bool(alpha > 0 and alpha * report.omega < beta),
        })
        return row

    @staticmethod
    def existence_two_pair(report: MelnikovReport) -> dict:
        """Residuals of (M₁, M₂, d̃) and the (α, β, γ) Jacobian condition at the surface point."""
        report = MelnikovIntegrals.solve_two_pair(report) if report.alpha is None else report
        row = MelnikovIntegrals.surface_row(report)
        if report.alpha is None:
            row["converged"] = False
            return row
        dg = report.delta_gamma

        def system(v):
            alpha, beta, gamma = v
            m = MelnikovIntegrals.two_pair_closure(report, alpha, beta, gamma)
            d_tilde = MelnikovIntegrals.second_distance(
                MelnikovIntegrals.consistent_phase(gamma, dg), dg,
                Params(omega=report.omega, alpha=alpha, beta=beta))
            return np.array([m[0], m[1], d_tilde])

        v = np.array([report.alpha, report.beta, report.gamma])
        jac = PlaneDynamics.finite_difference_jacobian(system, v)
        res = system(v)
        row["condition"] = float(np.linalg.cond(jac))
        row["converged"] = bool(np.max(np.abs(res)) < 1e-6)
        return row

    @staticmethod
    def existence_surface_report(omega_grid, p: Params, pairs: int = 1, delta_rho_grid=(0.0,),
                                 quad: QuadratureSpec | None = None, certify: bool = False,
                                 executor=None) -> pd.DataFrame:
        """Codimension-one surface samples with their zero residuals."""
        points = [(float(w), float(r)) for w in np.asarray(omega_grid, dtype=float)
                  for r in (delta_rho_grid if pairs == 2 else (None,))]

        def evaluate(point):
            omega, delta_rho = point
            pp = p.with_(omega=omega)
            if pairs == 1:
                report = MelnikovIntegrals.melnikov_one_pair(pp, quad, certify=certify)
                return MelnikovIntegrals.existence_one_pair(report, p.beta)
            report = MelnikovIntegrals.melnikov_two_pairs(pp, delta_rho, quad, certify=certify)
            return MelnikovIntegrals.existence_two_pair(report)

        mapper = executor.map if executor is not None else map
        return pd.DataFrame(list(mapper(evaluate, points)))
