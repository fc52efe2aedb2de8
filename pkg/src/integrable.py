"""
Core Logic: Zakharov-Shabat spatial problem ψ_x = U ψ, U = i[[λ, q], [q̄, −λ]].
Transfer matrices, the Floquet discriminant, critical points and the
functional gradient of Δ.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import AccuracyError, ConvergenceError, DegenerateEigenbasisError
from .field_core import SpectralField, interpolate

logger = logging.getLogger(__name__)

OVERSAMPLE = 8
METHODS = ("rk4", "magnus2")


@dataclass
class TransferMatrix:
    """M(2π) for one or several λ; `path` holds M(x_m) on the grid when requested."""

    lam: np.ndarray
    entries: np.ndarray
    path: np.ndarray | None = field(default=None, repr=False)

    @property
    def trace(self) -> np.ndarray:
        return self.entries[..., 0, 0] + self.entries[..., 1, 1]

    @property
    def det(self) -> np.ndarray:
        m = self.entries
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


@dataclass(frozen=True)
class CriticalPoint:
    lam: complex
    delta: complex
    residual: float
    iterations: int
    converged: bool


def _generator(lam: np.ndarray, q: complex) -> np.ndarray:
    out = np.empty(lam.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = 1j * lam
    out[..., 0, 1] = 1j * q
    out[..., 1, 0] = 1j * np.conj(q)
    out[..., 1, 1] = -1j * lam
    return out


def _rk4_step(M: np.ndarray, h: float, U0, Uh, U1) -> np.ndarray:
    k1 = U0 @ M
    k2 = Uh @ (M + 0.5 * h * k1)
    k3 = Uh @ (M + 0.5 * h * k2)
    k4 = U1 @ (M + h * k3)
    return M + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _expm_traceless(a: np.ndarray) -> np.ndarray:
    """exp(A) = cosh(d) I + sinh(d)/d A with d² = −det A."""
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    d = np.sqrt(-det + 0j)
    small = np.abs(d) < 1e-8
    ratio = np.where(small, 1 + d**2 / 6, np.sinh(d) / np.where(small, 1, d))
    out = ratio[..., None, None] * a
    out[..., 0, 0] += np.cosh(d)
    out[..., 1, 1] += np.cosh(d)
    return out


class ZakharovShabat:
    """Transfer matrices and Floquet theory for periodic q on [0, 2π)."""

    # --- TRANSFER ---

    @staticmethod
    def zs_transfer(
        q: SpectralField,
        lam,
        oversample: int = OVERSAMPLE,
        method: str = "rk4",
        store_path: bool = False,
        check: bool = False,
        tol: float = 1e-8,
    ) -> TransferMatrix:
        """
        M(2π) for every λ in `lam` (scalar or array). Step 2π/(oversample·N),
        q band-limited interpolated onto the half-step grid.
        """
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}.")
        lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))
        n = q.grid_size
        steps = oversample * n
        h = 2 * np.pi / steps
        fine = interpolate(q.values, 2 * oversample)

        M = np.broadcast_to(np.eye(2, dtype=complex), lam_arr.shape + (2, 2)).copy()
        path = np.empty((n,) + M.shape, dtype=complex) if store_path else None

        for j in range(steps):
            if store_path and j % oversample == 0:
                path[j // oversample] = M
            if method == "rk4":
                M = _rk4_step(M, h, _generator(lam_arr, fine[2 * j]),
                              _generator(lam_arr, fine[2 * j + 1]),
                              _generator(lam_arr, fine[(2 * j + 2) % (2 * steps)]))
            else:
                M = _expm_traceless(h * _generator(lam_arr, fine[2 * j + 1])) @ M

        result = TransferMatrix(lam=lam_arr, entries=M, path=path)
        if check:
            finer = ZakharovShabat.zs_transfer(q, lam_arr, 2 * oversample, method)
            gap = float(np.max(np.abs(finer.entries - M)))
            if gap > tol:
                raise AccuracyError(f"Step halving changed M(2π) by {gap:.3e} > {tol:g}.")
        return result

    @staticmethod
    def floquet_discriminant(q: SpectralField, lam, **kwargs):
        """Δ(λ) = tr M(2π); a scalar for scalar λ."""
        delta = ZakharovShabat.zs_transfer(q, lam, **kwargs).trace
        return complex(delta[0]) if np.ndim(lam) == 0 else delta

    @staticmethod
    def discriminant_family(values: np.ndarray, lam: complex,
                            oversample: int = OVERSAMPLE) -> np.ndarray:
        """
        Δ(λ) at one λ for every row of `values` (shape (B, N)), marched together
        with the same RK4 scheme as zs_transfer.
        """
        values = np.atleast_2d(np.asarray(values, dtype=complex))
        batch, n = values.shape
        steps = oversample * n
        h = 2 * np.pi / steps
        fine = interpolate(values, 2 * oversample)
        lam_arr = np.full(batch, complex(lam))
        M = np.broadcast_to(np.eye(2, dtype=complex), (batch, 2, 2)).copy()
        for j in range(steps):
            M = _rk4_step(M, h, _generator(lam_arr, fine[:, 2 * j]),
                          _generator(lam_arr, fine[:, 2 * j + 1]),
                          _generator(lam_arr, fine[:, (2 * j + 2) % (2 * steps)]))
        return M[:, 0, 0] + M[:, 1, 1]

    @staticmethod
    def plane_wave_discriminant(lam, a: float):
        """Δ(λ, q_c) = 2 cos(2π√(a² + λ²)); even in the root, so the branch is immaterial."""
        k = np.sqrt(a**2 + np.asarray(lam, dtype=complex) ** 2)
        return 2 * np.cos(2 * np.pi * k)

    @staticmethod
    def discriminant_frame(q: SpectralField, lams, a: float | None = None) -> pd.DataFrame:
        lams = np.asarray(lams, dtype=complex)
        delta = ZakharovShabat.floquet_discriminant(q, lams)
        frame = pd.DataFrame({
            "re_lambda": lams.real, "im_lambda": lams.imag,
            "re_delta": delta.real, "im_delta": delta.imag,
        })
        if a is not None:
            exact = ZakharovShabat.plane_wave_discriminant(lams, a)
            frame["abs_error"] = np.abs(delta - exact)
        return frame

    # --- CRITICAL POINTS ---

    @staticmethod
    def _stencil(lam: complex, h: float) -> np.ndarray:
        return lam + h * np.arange(-2, 3)

    @staticmethod
    def _derivatives(values: np.ndarray, h: float) -> tuple[complex, complex]:
        m2, m1, c0, p1, p2 = values
        first = (-p2 + 8 * p1 - 8 * m1 + m2) / (12 * h)
        second = (-p2 + 16 * p1 - 30 * c0 + 16 * m1 - m2) / (12 * h**2)
        return complex(first), complex(second)

    @staticmethod
    def critical_points(
        q: SpectralField,
        seeds,
        h: float = 1e-3,
        tol: float = 1e-10,
        max_iter: int = 40,
        dedupe: float = 1e-6,
    ) -> list[CriticalPoint]:
        """
        Newton on the centered five-point ∂Δ/∂λ from each seed. All seeds
        advance together through one batched transfer per iteration.
        Non-converged seeds are returned with converged=False.
        """
        lam = np.asarray(seeds, dtype=complex).ravel()
        active = np.ones(lam.size, dtype=bool)
        residual = np.full(lam.size, np.inf)
        delta = np.zeros(lam.size, dtype=complex)
        iterations = np.zeros(lam.size, dtype=int)

        for _ in range(max_iter):
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            stencils = np.concatenate([ZakharovShabat._stencil(lam[i], h) for i in idx])
            values = ZakharovShabat.floquet_discriminant(q, stencils).reshape(idx.size, 5)
            for row, i in enumerate(idx):
                first, second = ZakharovShabat._derivatives(values[row], h)
                residual[i] = abs(first)
                delta[i] = values[row, 2]
                iterations[i] += 1
                if residual[i] < tol:
                    active[i] = False
                    continue
                if second == 0 or not np.isfinite(second):
                    active[i] = False
                    continue
                lam[i] = lam[i] - first / second

        found: list[CriticalPoint] = []
        for i in range(lam.size):
            converged = residual[i] < tol
            if not converged:
                logger.warning("Critical-point Newton stalled at λ = %s (|Δ'| = %.3e)",
                               lam[i], residual[i])
            point = CriticalPoint(complex(lam[i]), complex(delta[i]), float(residual[i]),
                                  int(iterations[i]), bool(converged))
            if converged and any(abs(point.lam - f.lam) < dedupe for f in found if f.converged):
                continue
            found.append(point)
        return found

    @staticmethod
    def refine_critical_point(q: SpectralField, seed: complex, **kwargs) -> CriticalPoint:
        point = ZakharovShabat.critical_points(q, [seed], **kwargs)[0]
        if not point.converged:
            raise ConvergenceError(f"No critical point near {seed}.", [point.residual])
        return point

    @staticmethod
    def second_derivative(func, lam: complex, h: float = 1e-4) -> complex:
        """Δ″ by five-point central differences at h and h/2, Richardson-extrapolated."""

        def five_point(step):
            values = np.array([func(lam + step * m) for m in range(-2, 3)])
            return ZakharovShabat._derivatives(values, step)[1]

        coarse, fine = five_point(h), five_point(h / 2)
        return complex((16 * fine - coarse) / 15)

    # --- GRADIENT ---

    @staticmethod
    def melnikov_vector_generic(q: SpectralField, lam: complex, method: str = "monodromy",
                                **kwargs) -> tuple[np.ndarray, np.ndarray]:
        """
        (δΔ/δq, δΔ/δq̄)(x_m) at fixed λ. The monodromy form i(N₂₁, N₁₂) with
        N(x) = M(x) M(2π) M(x)⁻¹ stays valid at double points; the Bloch form
        needs two independent Floquet eigenvectors.
        """
        tm = ZakharovShabat.zs_transfer(q, lam, store_path=True, **kwargs)
        Mx = tm.path[:, 0]
        M2pi = tm.entries[0]

        if method == "monodromy":
            inv = np.empty_like(Mx)
            inv[:, 0, 0] = Mx[:, 1, 1]
            inv[:, 1, 1] = Mx[:, 0, 0]
            inv[:, 0, 1] = -Mx[:, 0, 1]
            inv[:, 1, 0] = -Mx[:, 1, 0]
            inv /= (Mx[:, 0, 0] * Mx[:, 1, 1] - Mx[:, 0, 1] * Mx[:, 1, 0])[:, None, None]
            N = Mx @ M2pi @ inv
            return 1j * N[:, 1, 0], 1j * N[:, 0, 1]

        if method == "bloch":
            mu, vecs = np.linalg.eig(M2pi)
            psi_p = Mx @ vecs[:, 0]
            psi_m = Mx @ vecs[:, 1]
            wronskian = vecs[0, 0] * vecs[1, 1] - vecs[1, 0] * vecs[0, 1]
            if abs(wronskian) < 1e-8 or abs(mu[0] - mu[1]) < 1e-10:
                raise DegenerateEigenbasisError(
                    f"Floquet eigenvectors dependent at λ = {lam} (W = {abs(wronskian):.2e})."
                )
            factor = 1j * (mu[0] - mu[1]) / wronskian
            return factor * psi_p[:, 1] * psi_m[:, 1], -factor * psi_p[:, 0] * psi_m[:, 0]

        raise ValueError("method must be 'monodromy' or 'bloch'.")

    @staticmethod
    def plane_wave_gradient(lam: complex, q: SpectralField) -> tuple[np.ndarray, np.ndarray]:
        """
        Gradient assembled from the plane-wave Bloch functions:
        i(μ⁺ − μ⁻)/W (ψ₂⁺ψ₂⁻, −ψ₁⁺ψ₁⁻) with μ^± = e^{±2πik}, W = −2ak,
        ψ₁⁺ψ₁⁻ = a q_c and ψ₂⁺ψ₂⁻ = −a q̄_c.
        """
        qc = q.mode(0)
        a = abs(qc)
        k = np.sqrt(a**2 + complex(lam) ** 2)
        factor = 1j * (2j * np.sin(2 * np.pi * k)) / (-2 * a * k)
        ones = np.ones(q.grid_size)
        return factor * (-a * np.conj(qc)) * ones, -factor * (a * qc) * ones

    @staticmethod
    def pairing(gradient: tuple[np.ndarray, np.ndarray], dq: np.ndarray) -> complex:
        """⟨∇F, δq⟩ = ∫ (δF/δq δq + δF/δq̄ δq̄) dx by the trapezoid rule."""
        g_q, g_qbar = gradient
        return complex(2 * np.pi * np.mean(g_q * dq + g_qbar * np.conj(dq)))

    @staticmethod
    def grid_gradient_error(q: SpectralField, lam: complex, h: float = 1e-6,
                            oversample: int = OVERSAMPLE) -> float:
        """
        Relative sup gap between centered differences of Δ under q_m → q_m ± h and
        q_m → q_m ± ih at every grid point and the monodromy gradient weighted by 2π/N.
        """
        g_q, g_qbar = ZakharovShabat.melnikov_vector_generic(q, lam, oversample=oversample)
        n = q.grid_size
        weight = 2 * np.pi / n
        predicted = np.concatenate([weight * (g_q + g_qbar), 1j * weight * (g_q - g_qbar)])
        eye = np.eye(n, dtype=complex)
        directions = np.concatenate([eye, 1j * eye])
        plus = ZakharovShabat.discriminant_family(q.values + h * directions, lam, oversample)
        minus = ZakharovShabat.discriminant_family(q.values - h * directions, lam, oversample)
        gap = np.max(np.abs((plus - minus) / (2 * h) - predicted))
        return float(gap / np.max(np.abs(predicted)))
