"""
Core Logic: resonance coordinates q = (ρ + f) e^{iθ} around the circle |q| = ω,
the nonlinear remainders, the operator L_ε and its eigen-directions.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .config import Params
from .errors import DomainError
from .field_core import SpectralField, spatial_average, spectral_derivative


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResonanceCoords:
    J: float
    theta: float
    f: SpectralField
    omega: float

    @property
    def mean_f2(self) -> float:
        return float(np.mean(np.abs(self.f.values) ** 2))

    @property
    def rho(self) -> float:
        radicand = self.J + self.omega**2 - self.mean_f2
        if radicand <= 0:
            raise DomainError(f"J + ω² − ⟨|f|²⟩ = {radicand:.3e} must be positive.")
        return float(np.sqrt(radicand))


@dataclass(frozen=True)
class NonlinearTerms:
    r2_J: float
    r2_theta: float
    n2: SpectralField
    n3: SpectralField


@dataclass(frozen=True)
class SpectrumEntry:
    k: int
    mu_plus: complex
    mu_minus: complex
    is_real: bool


@dataclass(frozen=True)
class EigenSplit:
    modes: tuple[int, ...]
    xi_plus: tuple[float, ...]
    xi_minus: tuple[float, ...]
    h: SpectralField


class ResonanceLinearization:
    """Coordinate change, remainders and the linear operator near S_ω."""

    # --- COORDINATES ---

    @staticmethod
    def to_resonance_coords(q: SpectralField, p: Params) -> ResonanceCoords:
        mean = q.mode(0)
        if abs(mean) == 0.0:
            raise DomainError("⟨q⟩ = 0: the angle θ is undefined.")
        theta = float(np.angle(mean))
        rho = abs(mean)
        f_values = q.values * np.exp(-1j * theta) - rho
        f_modes = np.fft.fft(f_values) / q.grid_size
        f_modes[0] = 0.0
        f = SpectralField.from_modes(f_modes)
        J = rho**2 + float(np.mean(np.abs(f.values) ** 2)) - p.omega**2
        return ResonanceCoords(J=J, theta=theta, f=f, omega=p.omega)

    @staticmethod
    def from_resonance_coords(c: ResonanceCoords) -> SpectralField:
        return SpectralField.from_values((c.rho + c.f.values) * np.exp(1j * c.theta))

    # --- NONLINEAR TERMS ---

    @staticmethod
    def nonlinear_terms(c: ResonanceCoords, p: Params) -> NonlinearTerms:
        """R₂^J, R₂^θ, N₂, N₃ of the (J, θ, f) system."""
        f = c.f.values
        rho = c.rho
        I = c.J + p.omega**2
        mean_f2 = c.mean_f2
        abs2 = np.abs(f) ** 2
        f_plus_conj = f + np.conj(f)
        fx = spectral_derivative(f)
        eb = p.epsilon * p.beta

        root_full = np.sqrt(I)
        root_reduced = np.sqrt(I - mean_f2)
        inverse_gap = 1.0 / root_reduced - 1.0 / root_full
        cubic_mean = spatial_average(abs2 * f_plus_conj).real

        r2_J = -2 * float(np.mean(np.abs(fx) ** 2)) + 2 * p.beta * np.cos(c.theta) * (
            root_reduced - root_full
        )
        r2_theta = (
            -float(np.mean(f_plus_conj**2).real)
            - cubic_mean / rho
            - eb * np.sin(c.theta) * inverse_gap
        )

        n2 = 2 * rho * (2 * (abs2 - mean_f2) + (f**2 - np.mean(f**2)))
        n3 = (
            -np.mean(f**2 + np.conj(f) ** 2 + 6 * abs2) * f
            + 2 * (abs2 * f - np.mean(abs2 * f))
            - cubic_mean / rho * f
            - 2 * mean_f2 * np.conj(f)
            - eb * np.sin(c.theta) * inverse_gap * f
        )
        return NonlinearTerms(
            r2_J=float(r2_J),
            r2_theta=float(r2_theta),
            n2=SpectralField.from_values(n2),
            n3=SpectralField.from_values(n3),
        )

    @staticmethod
    def coupling_apply(c: ResonanceCoords, p: Params) -> SpectralField:
        """V_ε f = −2iJ(f + f̄) + iεβ f sin θ / √(J + ω²)."""
        f = c.f.values
        values = -2j * c.J * (f + np.conj(f)) + 1j * p.epsilon * p.beta * f * np.sin(
            c.theta
        ) / np.sqrt(c.J + p.omega**2)
        return SpectralField.from_values(values)

    # --- L_eps ---

    @staticmethod
    def l_epsilon_apply(f: SpectralField, p: Params) -> SpectralField:
        """(L_ε f)^(k) = (ik² − ε(α+k²) − 2iω²) f̂(k) − 2iω² conj f̂(−k)."""
        n = f.grid_size
        k = f.k
        reflected = np.conj(f.modes[(-np.arange(n)) % n])
        w2 = p.omega**2
        out = (1j * k**2 - p.epsilon * (p.alpha + k**2) - 2j * w2) * f.modes - 2j * w2 * reflected
        return SpectralField.from_modes(out)

    @staticmethod
    def mode_matrix(k: int, p: Params) -> np.ndarray:
        """Action of L_ε on (Re z, Im z) for f = z cos kx."""
        d = -p.epsilon * (p.alpha + k**2)
        return np.array([[d, -(k**2)], [k**2 - 4 * p.omega**2, d]], dtype=float)

    @staticmethod
    def eigenvalues(k: int, p: Params) -> tuple[complex, complex]:
        """μ_k^± = −ε(α+k²) ± k√(4ω² − k²)."""
        branch = k * np.sqrt(complex(4 * p.omega**2 - k**2))
        base = -p.epsilon * (p.alpha + k**2)
        return base + branch, base - branch

    @staticmethod
    def eigen_phase(k: int, omega: float, sign: int = 1) -> complex:
        """e^{±iϑ_k} = (k ∓ i√(4ω² − k²)) / (2ω), defined for k² < 4ω²."""
        if k**2 >= 4 * omega**2:
            raise DomainError(f"Mode k = {k} is not hyperbolic for ω = {omega}.")
        return (k - sign * 1j * np.sqrt(4 * omega**2 - k**2)) / (2 * omega)

    @staticmethod
    def eigenfunction(k: int, sign: int, p: Params, n: int) -> SpectralField:
        phase = ResonanceLinearization.eigen_phase(k, p.omega, sign)
        return SpectralField.from_function(lambda x: phase * np.cos(k * x), n)

    @staticmethod
    def spectrum_l_epsilon(p: Params, k_max: int) -> list[SpectrumEntry]:
        if k_max < 2:
            raise ValueError("k_max must be at least 2.")
        entries = []
        for k in range(1, k_max + 1):
            mu_plus, mu_minus = ResonanceLinearization.eigenvalues(k, p)
            entries.append(SpectrumEntry(k, mu_plus, mu_minus, k**2 < 4 * p.omega**2))
        return entries

    @staticmethod
    def spectrum_frame(p: Params, k_max: int) -> pd.DataFrame:
        rows = []
        for e in ResonanceLinearization.spectrum_l_epsilon(p, k_max):
            for label, mu in (("plus", e.mu_plus), ("minus", e.mu_minus)):
                rows.append(
                    {"k": e.k, "branch": label, "re_mu": mu.real, "im_mu": mu.imag,
                     "real_pair": e.is_real, "epsilon": p.epsilon}
                )
        return pd.DataFrame(rows)

    @staticmethod
    def unstable_modes(omega: float) -> tuple[int, ...]:
        """Cos-modes carrying a real eigenvalue pair: k = 1 for ω < 1, k = 1, 2 for ω > 1."""
        if np.isclose(omega, 1.0, atol=1e-12):
            raise DomainError("ω = 1: the k = 2 eigenvalue pair is degenerate.")
        return (1,) if omega < 1 else (1, 2)

    # --- EIGEN SPLIT ---

    @staticmethod
    def split_constants(k: int, omega: float) -> tuple[float, float, float]:
        """(c_k, c_k⁺, c_k⁻)."""
        r = np.sqrt(4 * omega**2 - k**2)
        return k / r, (2 * omega**2 - k**2) / (k * r), 2 * omega**2 / (k * r)

    @staticmethod
    def eigen_split(g: SpectralField, p: Params) -> EigenSplit:
        """g = Σ_k (ξ_k⁺ e_k⁺ + ξ_k⁻ e_k⁻) + h with h free of the hyperbolic cos-modes."""
        if abs(g.mode(0)) > 1e-12 * max(1.0, float(np.max(np.abs(g.modes)))):
            raise DomainError("eigen_split expects a zero-mean field.")
        modes = ResonanceLinearization.unstable_modes(p.omega)
        n = g.grid_size
        h_modes = g.modes.copy()
        xi_plus, xi_minus = [], []
        for k in modes:
            z = h_modes[k] + h_modes[n - k]
            r = np.sqrt(4 * p.omega**2 - k**2)
            total = 2 * p.omega * z.real / k
            difference = 2 * p.omega * z.imag / r
            xi_plus.append(float(0.5 * (total - difference)))
            xi_minus.append(float(0.5 * (total + difference)))
            h_modes[k] -= 0.5 * z
            h_modes[n - k] -= 0.5 * z
        return EigenSplit(
            modes=modes,
            xi_plus=tuple(xi_plus),
            xi_minus=tuple(xi_minus),
            h=SpectralField.from_modes(h_modes),
        )

    @staticmethod
    def eigen_merge(split: EigenSplit, p: Params) -> SpectralField:
        x = split.h.x
        values = split.h.values.copy()
        for k, xp, xm in zip(split.modes, split.xi_plus, split.xi_minus, strict=True):
            z = xp * ResonanceLinearization.eigen_phase(k, p.omega, 1) + xm * (
                ResonanceLinearization.eigen_phase(k, p.omega, -1)
            )
            values = values + z * np.cos(k * x)
        return SpectralField.from_values(values)

    @staticmethod
    def mode_couplings(c: ResonanceCoords, split: EigenSplit, p: Params) -> dict[int, tuple]:
        """First-order couplings (V_k⁺, V_k⁻) of the eigen-coordinates."""
        s = p.epsilon * p.beta * np.sin(c.theta) / np.sqrt(c.J + p.omega**2)
        out = {}
        for k, xp, xm in zip(split.modes, split.xi_plus, split.xi_minus, strict=True):
            ck, ck_plus, ck_minus = ResonanceLinearization.split_constants(k, p.omega)
            v_plus = 2 * ck * c.J * (xp + xm) + s * (ck_plus * xp - ck_minus * xm)
            v_minus = -2 * ck * c.J * (xp + xm) + s * (ck_minus * xp - ck_plus * xm)
            out[k] = (float(v_plus), float(v_minus))
        return out
