"""
Core Logic: Bäcklund-Darboux transformations at the plane wave q_c = a e^{iθ}.
One- and two-pair homoclinic orbits (closed forms and the iterated gauge),
and the explicit Melnikov vectors along them.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import Params
from .errors import DomainError, SingularTransformError
from .field_core import SpectralField, grid_points, spectral_derivative
from .integrable import ZakharovShabat

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DarbouxData:
    """
    Double points ν = iσ (σ² = a² − 1/4) and ν̂ = iσ̂ (σ̂² = a² − 1) of the
    plane wave, and the Bäcklund parameters c⁺/c⁻ = e^{ρ+iϑ}, ĉ⁺/ĉ⁻ = e^{ρ̂+iϑ̂}.
    """

    a: float
    rho: float
    vartheta: float
    rho_hat: float = 0.0
    vartheta_hat: float = 0.0

    @classmethod
    def build(cls, a: float, rho: float = 0.0, vartheta: float | None = None,
              rho_hat: float = 0.0, vartheta_hat: float | None = None) -> "DarbouxData":
        """Missing ϑ, ϑ̂ select the even orbit, ϑ = ϑ₀ − π/2."""
        if not 0.5 < a < 1.5:
            raise DomainError(f"Amplitude a = {a} must lie in (1/2, 3/2).")
        sigma = math.sqrt(a**2 - 0.25)
        theta0 = math.atan2(sigma, 0.5)
        if vartheta is None:
            vartheta = theta0 - math.pi / 2
        if vartheta_hat is None:
            vartheta_hat = (math.atan2(math.sqrt(a**2 - 1), 1.0) - math.pi / 2) if a > 1 else 0.0
        return cls(a=a, rho=rho, vartheta=vartheta, rho_hat=rho_hat, vartheta_hat=vartheta_hat)

    @classmethod
    def from_delta_rho(cls, a: float, delta_rho: float, rho: float = 0.0) -> "DarbouxData":
        """Even data with 2σ̂σ⁻¹ρ − ρ̂ = Δρ."""
        base = cls.build(a)
        rho_hat = 2 * base.sigma_hat / base.sigma * rho - delta_rho
        return cls.build(a, rho=rho, rho_hat=rho_hat)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.a**2 - 0.25)

    @property
    def nu(self) -> complex:
        return 1j * self.sigma

    @property
    def theta0(self) -> float:
        return math.atan2(self.sigma, 0.5)

    @property
    def has_second_pair(self) -> bool:
        return self.a > 1.0 + 1e-12

    @property
    def sigma_hat(self) -> float:
        if not self.has_second_pair:
            raise DomainError(f"a = {self.a} has a single pair of complex double points.")
        return math.sqrt(self.a**2 - 1.0)

    @property
    def nu_hat(self) -> complex:
        return 1j * self.sigma_hat

    @property
    def theta0_hat(self) -> float:
        return math.atan2(self.sigma_hat, 1.0)

    @property
    def delta_rho(self) -> float:
        return 2 * self.sigma_hat / self.sigma * self.rho - self.rho_hat

    def tau(self, t) -> np.ndarray:
        return 2 * self.sigma * np.asarray(t) - self.rho

    def tau_hat(self, t) -> np.ndarray:
        return 4 * self.sigma_hat * np.asarray(t) - self.rho_hat

    @property
    def is_even(self) -> bool:
        shift = (self.vartheta - self.theta0 + math.pi / 2) % math.pi
        return min(shift, math.pi - shift) < 1e-12


def _u_pair(tau, z, theta0):
    """(u₁, u₂) for growth variable τ and phase z."""
    ch, sh = np.cosh(tau / 2), np.sinh(tau / 2)
    u1 = ch * np.cos(z) - 1j * sh * np.sin(z)
    u2 = -sh * np.cos(z - theta0) + 1j * ch * np.sin(z - theta0)
    return u1, u2


class HomoclinicOrbits:
    """Orbits homoclinic to the plane wave and their Melnikov vectors."""

    # --- PLANE WAVE ---

    @staticmethod
    def phase(t: float, a: float, p: Params) -> float:
        """θ(t) = −[2(a² − ω²)t + γ]."""
        return -(2 * (a**2 - p.omega**2) * t + p.gamma)

    @staticmethod
    def plane_wave(t: float, n: int, a: float, p: Params) -> SpectralField:
        return SpectralField.constant(a * np.exp(1j * HomoclinicOrbits.phase(t, a, p)), n)

    @staticmethod
    def bloch_functions(lam: complex, t: float, x: np.ndarray, a: float, theta: float):
        """ψ^± = (a e^{iθ/2}, (±k − λ) e^{−iθ/2}) e^{±i(2λkt + kx)}, k = √(a² + λ²)."""
        k = np.sqrt(a**2 + complex(lam) ** 2)
        out = []
        for sign in (1, -1):
            growth = np.exp(sign * 1j * (2 * lam * k * t + k * x))
            out.append(np.array([
                a * np.exp(0.5j * theta) * growth,
                (sign * k - lam) * np.exp(-0.5j * theta) * growth,
            ]))
        return out[0], out[1]

    # --- TRANSFORMS ---

    @staticmethod
    def bd_transform(q: SpectralField, nu: complex, phi: np.ndarray) -> SpectralField:
        """Q = q + 2(ν − ν̄) φ₁φ̄₂ / (|φ₁|² + |φ₂|²)."""
        norm = np.abs(phi[0]) ** 2 + np.abs(phi[1]) ** 2
        if np.min(norm) <= 1e-14 * max(float(np.max(norm)), 1e-300):
            raise SingularTransformError("|φ₁|² + |φ₂|² vanishes on the grid.")
        return SpectralField.from_values(
            q.values + 2 * (nu - np.conj(nu)) * phi[0] * np.conj(phi[1]) / norm
        )

    @staticmethod
    def gauge_apply(lam: complex, nu: complex, phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
        """G(λ; ν, φ)ψ with G = (λ − ν̄)I + (ν̄ − ν) φφ*/|φ|²."""
        norm = np.abs(phi[0]) ** 2 + np.abs(phi[1]) ** 2
        if np.min(norm) <= 0:
            raise SingularTransformError("Gauge built from a vanishing eigenfunction.")
        projection = (np.conj(phi[0]) * psi[0] + np.conj(phi[1]) * psi[1]) / norm
        return (lam - np.conj(nu)) * psi + (np.conj(nu) - nu) * phi * projection

    @staticmethod
    def _eigenfunction(lam: complex, t: float, x, a: float, theta: float,
                       rho: float, vartheta: float) -> np.ndarray:
        psi_p, psi_m = HomoclinicOrbits.bloch_functions(lam, t, x, a, theta)
        c = np.exp(0.5 * (rho + 1j * vartheta))
        return c * psi_p + psi_m / c

    # --- ONE PAIR ---

    @staticmethod
    def one_pair_profile(t: float, x: np.ndarray, d: DarbouxData) -> np.ndarray:
        """P = Q/q_c = [cos 2ϑ₀ − i sin 2ϑ₀ tanh τ − h] / (1 + h), h = sin ϑ₀ sech τ cos y."""
        tau = d.tau(t)
        y = x + d.vartheta - d.theta0 + math.pi / 2
        s = math.sin(d.theta0)
        sech = 1.0 / np.cosh(tau)
        head = s * sech * np.cos(y)
        numer = math.cos(2 * d.theta0) - 1j * math.sin(2 * d.theta0) * np.tanh(tau) - head
        return numer / (1 + head)

    @staticmethod
    def homoclinic_one_pair(t: float, n: int, d: DarbouxData, p: Params) -> SpectralField:
        x = grid_points(n)
        qc = d.a * np.exp(1j * HomoclinicOrbits.phase(t, d.a, p))
        return SpectralField.from_values(qc * HomoclinicOrbits.one_pair_profile(t, x, d))

    @staticmethod
    def homoclinic_one_pair_bd(t: float, n: int, d: DarbouxData, p: Params) -> SpectralField:
        """The same orbit through bd_transform on the Bloch functions at ν."""
        x = grid_points(n)
        theta = HomoclinicOrbits.phase(t, d.a, p)
        phi = HomoclinicOrbits._eigenfunction(d.nu, t, x, d.a, theta, d.rho, d.vartheta)
        return HomoclinicOrbits.bd_transform(
            HomoclinicOrbits.plane_wave(t, n, d.a, p), d.nu, phi)

    # --- TWO PAIRS ---

    @staticmethod
    def homoclinic_two_pair(t: float, n: int, d: DarbouxData, p: Params) -> SpectralField:
        """
        Iterated transform: Q from φ at ν, then Q̃ from Φ̂ = G(ν̂; ν, φ) φ̂.
        """
        x = grid_points(n)
        theta = HomoclinicOrbits.phase(t, d.a, p)
        phi = HomoclinicOrbits._eigenfunction(d.nu, t, x, d.a, theta, d.rho, d.vartheta)
        phi_hat = HomoclinicOrbits._eigenfunction(
            d.nu_hat, t, x, d.a, theta, d.rho_hat, d.vartheta_hat)
        Q = HomoclinicOrbits.bd_transform(HomoclinicOrbits.plane_wave(t, n, d.a, p), d.nu, phi)
        Phi_hat = HomoclinicOrbits.gauge_apply(d.nu_hat, d.nu, phi, phi_hat)
        return HomoclinicOrbits.bd_transform(Q, d.nu_hat, Phi_hat)

    @staticmethod
    def w_functions(t: float, x: np.ndarray, d: DarbouxData) -> tuple[np.ndarray, np.ndarray]:
        """𝒲₁, 𝒲₂ of the closed two-pair formula."""
        s, c = math.sin(d.theta0), math.cos(d.theta0)
        sh, ch = math.sin(d.theta0_hat), math.cos(d.theta0_hat)
        s2, sh2 = math.sin(2 * d.theta0), math.sin(2 * d.theta0_hat)

        tau, tau_h = d.tau(t), d.tau_hat(t)
        y = x + d.vartheta - d.theta0 + math.pi / 2
        y_h = 2 * x + d.vartheta_hat - d.theta0_hat + math.pi / 2
        S, T = 1.0 / np.cosh(tau), np.tanh(tau)
        Sh, Th = 1.0 / np.cosh(tau_h), np.tanh(tau_h)
        cy, sy = np.cos(y), np.sin(y)
        cyh, syh = np.cos(y_h), np.sin(y_h)

        A = 1 + s * S * cy
        Ah = 1 + sh * Sh * cyh
        breather = (s2 * S) ** 2 * (1 - np.cos(2 * y))
        cross = s2 * S * Sh * sy * syh

        w1 = (
            (sh**2 * A**2 + breather / 8) * Ah
            - 0.5 * sh2 * A * cross
            + s**2 * (1 + 2 * s * S * cy + (cy**2 - c**2) * S**2) * Ah
            - 2 * sh * s * (ch * c * Th * T + (s + S * cy) * (sh + Sh * cyh)) * A
        )
        w2 = (
            (-2 * sh**2 * A**2 + breather / 4) * (sh + Sh * cyh + 1j * ch * Th)
            + 2 * s**2 * (-c * T + 1j * s + 1j * S * cy) ** 2 * (sh + Sh * cyh - 1j * ch * Th)
            + 2 * s * (s + S * cy + 1j * c * T) * (2 * sh * A * Ah - ch * cross)
        )
        return w1, w2

    @staticmethod
    def homoclinic_two_pair_closed(t: float, n: int, d: DarbouxData, p: Params) -> SpectralField:
        """Q̃ = Q + q_c 𝒲₂ sin ϑ̂₀ / 𝒲₁."""
        x = grid_points(n)
        w1, w2 = HomoclinicOrbits.w_functions(t, x, d)
        if np.min(np.abs(w1)) < 1e-14:
            raise SingularTransformError("𝒲₁ vanishes on the grid.")
        qc = d.a * np.exp(1j * HomoclinicOrbits.phase(t, d.a, p))
        profile = HomoclinicOrbits.one_pair_profile(t, x, d) + w2 * math.sin(d.theta0_hat) / w1
        return SpectralField.from_values(qc * profile)

    @staticmethod
    def two_pair_profile(fields: dict, d: DarbouxData) -> np.ndarray:
        """P̃ = Q̃/q_c from the s_fields of the iterated transform."""
        one = 1 + 4j * math.sin(d.theta0) * fields["u1"] * np.conj(fields["u2"]) / fields["u_norm"]
        two = 4j * math.sin(d.theta0_hat) * fields["V1"] * np.conj(fields["V2"]) / fields["V_norm"]
        return one + two

    @staticmethod
    def orbit(pairs: int, t: float, n: int, d: DarbouxData, p: Params) -> SpectralField:
        if pairs == 1:
            return HomoclinicOrbits.homoclinic_one_pair(t, n, d, p)
        if pairs == 2:
            return HomoclinicOrbits.homoclinic_two_pair(t, n, d, p)
        raise ValueError("pairs must be 1 or 2.")

    # --- MELNIKOV VECTORS ---

    @staticmethod
    def sqrt_delta_ddelta(lam_c: complex, a: float) -> complex:
        """
        √(Δ Δ″) at a plane-wave critical point, the root taken on the side of
        4πi cos(2πk_c) λ_c / k_c so it matches the Bloch labelling ψ^±.
        """
        k_c = np.sqrt(a**2 + lam_c**2)
        reference = 4j * np.pi * np.cos(2 * np.pi * k_c) * lam_c / k_c

        def delta(lam):
            return ZakharovShabat.plane_wave_discriminant(lam, a)

        product = delta(lam_c) * ZakharovShabat.second_derivative(delta, lam_c)
        root = np.sqrt(complex(product))
        return complex(root if abs(root - reference) <= abs(root + reference) else -root)

    @staticmethod
    def s_fields(t: float, x: np.ndarray, d: DarbouxData, two_pair: bool = True) -> dict:
        """u, v, V, S and Ŝ fields; none of them depends on γ."""
        u1, u2 = _u_pair(d.tau(t), x / 2 + d.vartheta / 2, d.theta0)
        u_norm = np.abs(u1) ** 2 + np.abs(u2) ** 2
        out = {"u1": u1, "u2": u2, "u_norm": u_norm}
        if not two_pair:
            return out

        nu, nh = d.nu, d.nu_hat
        nu_c, nh_c = np.conj(nu), np.conj(nh)
        v1, v2 = _u_pair(d.tau_hat(t), x + d.vartheta_hat / 2, d.theta0_hat)
        a1, a2 = np.abs(u1) ** 2, np.abs(u2) ** 2
        cross, gap = u1 * np.conj(u2), nu_c - nu
        V1 = (((nh - nu) * a1 + (nh - nu_c) * a2) * v1 + gap * cross * v2) / u_norm
        V2 = (gap * np.conj(cross) * v1 + ((nh - nu_c) * a1 + (nh - nu) * a2) * v2) / u_norm
        b1, b2 = np.abs(V1) ** 2, np.abs(V2) ** 2
        V_norm = b1 + b2
        denom = u_norm * V_norm
        S1 = (((nu - nh) * b1 + (nu - nh_c) * b2) * np.conj(u2)
              - (nh_c - nh) * V1 * np.conj(V2) * np.conj(u1)) / denom
        S2 = ((nh_c - nh) * np.conj(V1) * V2 * np.conj(u2)
              - ((nu - nh_c) * b1 + (nu - nh) * b2) * np.conj(u1)) / denom
        out.update({
            "v1": v1, "v2": v2, "V1": V1, "V2": V2, "V_norm": V_norm,
            "S1": S1, "S2": S2, "S1_hat": np.conj(V2) / V_norm, "S2_hat": np.conj(V1) / V_norm,
        })
        return out

    @staticmethod
    def melnikov_vector_explicit(t: float, n: int, d: DarbouxData, p: Params,
                                 which: int = 1, pairs: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """(δF/δq, δF/δq̄) along Q (pairs=1) or Q̃ (pairs=2), at ν (which=1) or ν̂ (which=2)."""
        if pairs == 1 and which != 1:
            raise DomainError("The one-pair orbit carries a single Melnikov vector.")
        x = grid_points(n)
        qc = d.a * np.exp(1j * HomoclinicOrbits.phase(t, d.a, p))
        a2 = d.a**2
        nu, nu_c = d.nu, np.conj(d.nu)
        f = HomoclinicOrbits.s_fields(t, x, d, two_pair=pairs == 2)

        if pairs == 1:
            pref = 0.25 / a2 * 1j * (nu - nu_c) * HomoclinicOrbits.sqrt_delta_ddelta(nu, d.a)
            w = f["u_norm"] ** -2
            return (pref * np.conj(qc) * np.conj(f["u1"]) ** 2 * w,
                    -pref * qc * np.conj(f["u2"]) ** 2 * w)

        nh, nh_c = d.nu_hat, np.conj(d.nu_hat)
        if which == 1:
            pref = (0.25 / a2 * 1j * (nu - nu_c) / ((nu - nh) * (nu - nh_c))
                    * HomoclinicOrbits.sqrt_delta_ddelta(nu, d.a))
            first, second = f["S2"], f["S1"]
        elif which == 2:
            pref = (0.5 / a2 * 1j * (nh - nh_c) * (nh - nu) * (nh - nu_c)
                    * HomoclinicOrbits.sqrt_delta_ddelta(nh, d.a))
            first, second = f["S2_hat"], f["S1_hat"]
        else:
            raise ValueError("which must be 1 or 2.")
        return pref * np.conj(qc) * first**2, -pref * qc * second**2

    # --- RESIDUAL ORACLE ---

    @staticmethod
    def nls_residual(orbit, t: float, p: Params, h: float = 1e-4) -> float:
        """
        sup |iQ_t − Q_xx − 2(|Q|² − ω²)Q| with spectral x-derivatives and a
        Richardson-extrapolated central difference in t. `orbit(t)` returns a SpectralField.
        """

        def central(step):
            return (orbit(t + step).values - orbit(t - step).values) / (2 * step)

        q_t = (4 * central(h / 2) - central(h)) / 3
        q = orbit(t).values
        q_xx = spectral_derivative(q, 2)
        residual = 1j * q_t - q_xx - 2 * (np.abs(q) ** 2 - p.omega**2) * q
        return float(np.max(np.abs(residual)))
