"""
Core Logic: periodic complex fields on [0, 2π).
Convention q(x) = Σ_k q̂(k) e^{ikx}, k ∈ {−N/2, …, N/2−1}, stored in FFT order.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .config import is_power_of_two
from .errors import ConfigError


def require_grid(n: int) -> int:
    if not is_power_of_two(n):
        raise ConfigError(f"Grid size {n} is not a power of two.")
    return n


def grid_points(n: int) -> np.ndarray:
    """x_m = 2πm/N."""
    return 2 * np.pi * np.arange(require_grid(n)) / n


def wavenumbers(n: int) -> np.ndarray:
    """Integer wavenumbers in FFT order."""
    return np.fft.fftfreq(n, d=1.0 / n)


def to_modes(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    return np.fft.fft(values, axis=-1) / n


def to_values(modes: np.ndarray) -> np.ndarray:
    n = modes.shape[-1]
    return np.fft.ifft(modes, axis=-1) * n


def spectral_derivative(values: np.ndarray, order: int = 1) -> np.ndarray:
    """d^order/dx^order along the last axis. The Nyquist mode is dropped for odd orders."""
    n = values.shape[-1]
    k = wavenumbers(n)
    factor = (1j * k) ** order
    if order % 2 == 1:
        factor[n // 2] = 0.0
    return np.fft.ifft(np.fft.fft(values, axis=-1) * factor, axis=-1)


def spatial_average(values: np.ndarray) -> np.ndarray:
    """⟨·⟩ over the last axis; equals the trapezoid rule divided by 2π."""
    return np.mean(values, axis=-1)


def interpolate(values: np.ndarray, factor: int) -> np.ndarray:
    """Band-limited interpolation onto a grid `factor` times finer (zero padding)."""
    n = values.shape[-1]
    m = n * factor
    modes = np.fft.fft(values, axis=-1)
    padded = np.zeros(values.shape[:-1] + (m,), dtype=complex)
    half = n // 2
    padded[..., :half] = modes[..., :half]
    padded[..., m - half + 1:] = modes[..., half + 1:]
    # split the Nyquist coefficient symmetrically
    padded[..., half] = 0.5 * modes[..., half]
    padded[..., m - half] = 0.5 * modes[..., half]
    return np.fft.ifft(padded, axis=-1) * factor


@dataclass(frozen=True)
class SpectralField:
    """Samples of q on the uniform grid together with their Fourier coefficients."""

    values: np.ndarray
    modes: np.ndarray = field(repr=False)

    @classmethod
    def from_values(cls, values) -> "SpectralField":
        values = np.asarray(values, dtype=complex)
        require_grid(values.shape[-1])
        return cls(values=values, modes=to_modes(values))

    @classmethod
    def from_modes(cls, modes) -> "SpectralField":
        modes = np.asarray(modes, dtype=complex)
        require_grid(modes.shape[-1])
        return cls(values=to_values(modes), modes=modes)

    @classmethod
    def from_function(cls, func, n: int) -> "SpectralField":
        return cls.from_values(func(grid_points(n)))

    @classmethod
    def constant(cls, c: complex, n: int) -> "SpectralField":
        return cls.from_values(np.full(require_grid(n), c, dtype=complex))

    @property
    def grid_size(self) -> int:
        return self.values.shape[-1]

    @property
    def x(self) -> np.ndarray:
        return grid_points(self.grid_size)

    @property
    def k(self) -> np.ndarray:
        return wavenumbers(self.grid_size)

    def mode(self, k: int) -> complex:
        return complex(self.modes[int(k) % self.grid_size])

    def derivative(self, order: int = 1) -> "SpectralField":
        return SpectralField.from_values(spectral_derivative(self.values, order))

    def conj(self) -> "SpectralField":
        return SpectralField.from_values(np.conj(self.values))

    def __add__(self, other):
        other_values = other.values if isinstance(other, SpectralField) else other
        return SpectralField.from_values(self.values + other_values)

    def __sub__(self, other):
        other_values = other.values if isinstance(other, SpectralField) else other
        return SpectralField.from_values(self.values - other_values)

    def __mul__(self, other):
        other_values = other.values if isinstance(other, SpectralField) else other
        return SpectralField.from_values(self.values * other_values)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField.from_values(-self.values)

    def sup_distance(self, other: "SpectralField") -> float:
        return float(np.max(np.abs(self.values - other.values)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.x, "re_q": self.values.real, "im_q": self.values.imag})

    def modes_dict(self) -> dict:
        return {
            "k": self.k.astype(int).tolist(),
            "re": self.modes.real.tolist(),
            "im": self.modes.imag.tolist(),
        }


def fft_forward(field_: SpectralField) -> SpectralField:
    """Recomputes the modes from the samples."""
    return SpectralField.from_values(field_.values)


def sobolev_norm(field_: SpectralField, n: int) -> float:
    """‖q‖_n = (Σ_k (1+k²)^n |q̂(k)|²)^{1/2}."""
    if n < 0:
        raise ValueError("Sobolev index must be non-negative.")
    weights = (1.0 + field_.k**2) ** n
    return float(np.sqrt(np.sum(weights * np.abs(field_.modes) ** 2)))


def spatial_mean(field_: SpectralField) -> complex:
    return field_.mode(0)


def parseval_defect(field_: SpectralField) -> float:
    """Relative mismatch between the trapezoid ∫|q|² and 2πΣ|q̂|²."""
    quad = 2 * np.pi * np.mean(np.abs(field_.values) ** 2)
    modal = 2 * np.pi * np.sum(np.abs(field_.modes) ** 2)
    scale = max(abs(modal), 1e-300)
    return float(abs(quad - modal) / scale)
