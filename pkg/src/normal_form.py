"""
Core Logic: the normal-form transformation g = f + K(f, f).
Coefficients K̂₁, K̂₂, K̂₃ per mode pair, the exceptional-set scan,
and application/inversion of the transform.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy import optimize

from .config import Params
from .errors import ConvergenceError, DomainError, ExceptionalParameterError
from .field_core import SpectralField, sobolev_norm

logger = logging.getLogger(__name__)

DENOMINATOR_THRESHOLD = 1e-8


@dataclass(frozen=True)
class ModePairCoeffs:
    k: int
    l: int
    b: float
    sigma: float
    sigma1: float
    sigma2: float
    sigma3: float
    sigma4: float
    U: complex
    V: complex
    W: complex
    K: complex
    D: float
    K1: complex
    K2_kl: complex
    K2_lk: complex
    K3: complex

    def as_dict(self) -> dict:
        out = {}
        for name in ("K", "K1", "K2_kl", "K2_lk", "K3"):
            value = getattr(self, name)
            out[name] = [value.real, value.imag]
        out["D"] = self.D
        return out


def _pair_quantities(k, l, p: Params) -> dict:
    """Vectorized over integer arrays k, l. No threshold checks."""
    k = np.asarray(k, dtype=float)
    l = np.asarray(l, dtype=float)
    w2 = p.omega**2
    b = -2 * w2
    sigma = p.epsilon * (2 * k * l - p.alpha)
    s1 = 2 * (k * l + w2)
    s2 = 2 * (l**2 + k * l - w2)
    s3 = 2 * (k**2 + k * l - w2)
    s4 = 2 * (k**2 + l**2 + k * l - 3 * w2)
    denominators = [s**2 + sigma**2 - b**2 for s in (s1, s2, s3, s4)]
    return {"b": b, "sigma": sigma, "s": (s1, s2, s3, s4), "den": denominators}


def _solve(q: dict, omega: float) -> dict:
    b, sigma = q["b"], q["sigma"]
    s1, s2, s3, s4 = q["s"]
    A1, A2, A3, A4 = (1.0 / d for d in q["den"])

    U = b**2 * (A1 + A2 + A3) + (s4**2 + sigma**2) * A4
    V = (
        -b * (s1 + 1j * sigma) * A1
        + b * (s2 - 1j * sigma) * A2
        + b * (s3 - 1j * sigma) * A3
        - b * (s4 + 1j * sigma) * A4
    )
    W = 2 * omega * A4 * (s4**2 + sigma**2 - b * (s4 + 1j * sigma))
    det = np.abs(U) ** 2 - np.abs(V) ** 2
    K = (W * np.conj(U) - np.conj(W) * V) / det

    K1 = A1 * (b * np.conj(K) - (s1 - 1j * sigma) * K)
    K2_kl = A2 * (-b * K - (s2 - 1j * sigma) * np.conj(K))
    K2_lk = A3 * (-b * K - (s3 - 1j * sigma) * np.conj(K))
    K3 = A4 * ((s4 - 1j * sigma) * (K - 2 * omega) - b * (np.conj(K) - 2 * omega))
    D = b / (s1 - b) - b / (s2 + b) - b / (s3 + b) + s4 / (s4 - b)
    return {"U": U, "V": V, "W": W, "det": det, "K": K, "D": D,
            "K1": K1, "K2_kl": K2_kl, "K2_lk": K2_lk, "K3": K3}


class NormalForm:
    """Solves the linear system for the quadratic normal-form coefficients."""

    # --- COEFFICIENTS ---

    @staticmethod
    def solve_coeffs(k: int, l: int, p: Params,
                     threshold: float = DENOMINATOR_THRESHOLD) -> ModePairCoeffs:
        if k == 0 or l == 0 or k + l == 0:
            raise DomainError(f"(k, l) = ({k}, {l}) needs k, l, k + l nonzero.")
        q = _pair_quantities(k, l, p)
        for j, den in enumerate(q["den"], start=1):
            if abs(den) < threshold:
                raise ExceptionalParameterError(f"σ{j}² + σ² − b²", float(abs(den)), k, l)
        sol = _solve(q, p.omega)
        if abs(sol["det"]) < threshold:
            raise ExceptionalParameterError("|U|² − |V|²", float(abs(sol["det"])), k, l)

        s1, s2, s3, s4 = (float(s) for s in q["s"])
        return ModePairCoeffs(
            k=k, l=l, b=q["b"], sigma=float(q["sigma"]),
            sigma1=s1, sigma2=s2, sigma3=s3, sigma4=s4,
            U=complex(sol["U"]), V=complex(sol["V"]), W=complex(sol["W"]),
            K=complex(sol["K"]), D=float(sol["D"]),
            K1=complex(sol["K1"]), K2_kl=complex(sol["K2_kl"]),
            K2_lk=complex(sol["K2_lk"]), K3=complex(sol["K3"]),
        )

    @staticmethod
    def leading_order_K(c: ModePairCoeffs) -> complex:
        """K = 2ω[1 + iσ b(A₁ + A₂ + A₃)/D] + O(ε²), with A_j taken at σ = 0."""
        omega = np.sqrt(-c.b / 2)
        a_sum = sum(1.0 / (s**2 - c.b**2) for s in (c.sigma1, c.sigma2, c.sigma3))
        return complex(2 * omega * (1 + 1j * c.sigma * c.b * a_sum / c.D))

    @staticmethod
    def system_terms(c: ModePairCoeffs) -> list[list[complex]]:
        """Left-hand side terms of the four coupled mode equations."""
        b, s = c.b, c.sigma
        K1, K2, K2r, K3 = c.K1, c.K2_kl, c.K2_lk, c.K3
        return [
            [(c.sigma1 + 1j * s) * K1, b * K2, b * K2r, b * np.conj(K3)],
            [-b * K1, (c.sigma2 + 1j * s) * K2, b * np.conj(K2r), b * K3],
            [-b * K1, b * np.conj(K2), (c.sigma3 + 1j * s) * K2r, b * K3],
            [b * np.conj(K1), -b * K2, -b * K2r, (c.sigma4 + 1j * s) * K3],
        ]

    @staticmethod
    def residual(c: ModePairCoeffs) -> float:
        """Max residual of the four equations relative to the size of their terms."""
        omega = np.sqrt(-c.b / 2)
        rhs = (-2 * omega, -2 * omega, -2 * omega, 0.0)
        worst = 0.0
        for terms, r in zip(NormalForm.system_terms(c), rhs, strict=True):
            scale = max(1.0, max(abs(t) for t in terms))
            worst = max(worst, abs(sum(terms) - r) / scale)
        return float(worst)

    @staticmethod
    def solve_linear_system(k: int, l: int, p: Params) -> tuple[complex, ...]:
        """
        (K̂₁, K̂₂(k,l), K̂₂(l,k), K̂₃) from a direct 8×8 real solve of the
        four conjugate-linear equations.
        """
        w2 = p.omega**2
        b = -2 * w2
        s = p.epsilon * (2 * k * l - p.alpha)
        s1 = 2 * (k * l + w2)
        s2 = 2 * (l**2 + k * l - w2)
        s3 = 2 * (k**2 + k * l - w2)
        s4 = 2 * (k**2 + l**2 + k * l - 3 * w2)
        # rows: (coefficient of z_j, coefficient of conj z_j) for each unknown
        lin = np.array([
            [s1 + 1j * s, b, b, 0],
            [-b, s2 + 1j * s, 0, b],
            [-b, 0, s3 + 1j * s, b],
            [0, -b, -b, s4 + 1j * s],
        ], dtype=complex)
        con = np.array([
            [0, 0, 0, b],
            [0, 0, b, 0],
            [0, b, 0, 0],
            [b, 0, 0, 0],
        ], dtype=complex)
        rhs = np.array([-2 * p.omega, -2 * p.omega, -2 * p.omega, 0.0], dtype=complex)

        big = np.zeros((8, 8))
        for i in range(4):
            for j in range(4):
                a, c = lin[i, j], con[i, j]
                big[2 * i, 2 * j] = a.real + c.real
                big[2 * i, 2 * j + 1] = -a.imag + c.imag
                big[2 * i + 1, 2 * j] = a.imag + c.imag
                big[2 * i + 1, 2 * j + 1] = a.real - c.real
        vec = np.empty(8)
        vec[0::2] = rhs.real
        vec[1::2] = rhs.imag
        sol = np.linalg.solve(big, vec)
        return tuple(complex(sol[2 * j], sol[2 * j + 1]) for j in range(4))

    @staticmethod
    def coefficient_dict(p: Params, k_max: int) -> dict[str, dict]:
        """JSON-ready coefficient table keyed by "k,l"."""
        out = {}
        for k in range(-k_max, k_max + 1):
            for l in range(-k_max, k_max + 1):
                if k == 0 or l == 0 or k + l == 0:
                    continue
                out[f"{k},{l}"] = NormalForm.solve_coeffs(k, l, p).as_dict()
        return out

    # --- EXCEPTIONAL SET ---

    @staticmethod
    def _signed_quantities(omega: float, p: Params, k: np.ndarray, l: np.ndarray) -> dict:
        q = _pair_quantities(k, l, p.with_(omega=omega))
        sol = _solve(q, omega)
        out = {f"den{j}": d for j, d in enumerate(q["den"], start=1)}
        out["det"] = sol["det"]
        out["D"] = sol["D"]
        return out

    @staticmethod
    def denominator_scan(p: Params, omega_grid, k_max: int, flag_distance: float = 1e-6):
        """
        Per ω: min over pairs of |D|, |σ_j² + σ² − b²| and ||U|² − |V|²|.
        Sign changes between neighbouring ω are refined with brentq; returns the
        per-ω DataFrame and the sorted list of located exceptional ω.
        """
        omega_grid = np.asarray(omega_grid, dtype=float)
        if omega_grid.size == 0 or omega_grid.min() <= 0.5 or omega_grid.max() >= 1.5:
            raise DomainError("omega_grid must lie inside (1/2, 3/2).")

        ks, ls = np.meshgrid(np.arange(-k_max, k_max + 1), np.arange(-k_max, k_max + 1),
                             indexing="ij")
        valid = (ks != 0) & (ls != 0) & (ks + ls != 0)
        k, l = ks[valid], ls[valid]

        rows = []
        zeros: set[float] = set()
        previous = None
        with np.errstate(divide="ignore", invalid="ignore"):
            for i, omega in enumerate(omega_grid):
                current = NormalForm._signed_quantities(omega, p, k, l)
                den_min = min(float(np.min(np.abs(current[f"den{j}"]))) for j in range(1, 5))
                rows.append({
                    "omega": omega,
                    "min_abs_D": float(np.nanmin(np.abs(current["D"]))),
                    "min_abs_sigma_den": den_min,
                    "min_abs_uv": float(np.nanmin(np.abs(current["det"]))),
                })
                if previous is not None:
                    zeros.update(NormalForm._locate_zeros(
                        previous, current, omega_grid[i - 1], omega, p, k, l))
                previous = current

        frame = pd.DataFrame(rows)
        located = sorted(zeros)
        near = np.zeros(len(frame), dtype=bool)
        for z in located:
            near |= np.abs(frame["omega"].to_numpy() - z) <= flag_distance
        smallest = frame[["min_abs_D", "min_abs_sigma_den", "min_abs_uv"]].min(axis=1)
        tiny = smallest < DENOMINATOR_THRESHOLD
        frame["flagged"] = near | tiny.to_numpy()
        if frame["flagged"].any():
            logger.warning("%d ω grid points flagged as exceptional", int(frame["flagged"].sum()))
        logger.debug("located %d exceptional ω values", len(located))
        return frame, located

    @staticmethod
    def _locate_zeros(prev: dict, cur: dict, w0: float, w1: float, p: Params, k, l) -> list[float]:
        found = []
        for name in prev:
            a, b_ = np.real(prev[name]), np.real(cur[name])
            # a pole flips the sign of D too; only finite endpoints of both signs are kept
            hits = np.nonzero(np.isfinite(a) & np.isfinite(b_) & (np.sign(a) * np.sign(b_) < 0))[0]
            for idx in hits:
                kk, ll = int(k[idx]), int(l[idx])

                def func(w, name=name, kk=kk, ll=ll):
                    vals = NormalForm._signed_quantities(
                        w, p, np.array([kk]), np.array([ll]))
                    return float(np.real(vals[name][0]))

                root = optimize.brentq(func, w0, w1, xtol=1e-14)
                # reject poles: a genuine zero has a small value at the root
                if abs(func(root)) < 1e-6:
                    found.append(round(root, 12))
        return found

    @staticmethod
    def asymptotic_D(omega: float, p: Params, k: int) -> float:
        """D at (k, k); tends to 1 as k grows."""
        q = _pair_quantities(k, k, p.with_(omega=omega))
        return float(_solve(q, omega)["D"])

    # --- TRANSFORM ---

    @staticmethod
    def default_k_max(n: int) -> int:
        return n // 4

    @staticmethod
    def apply_transform(f: SpectralField, p: Params, k_max: int | None = None) -> SpectralField:
        """g = f + K(f, f) truncated to |k|, |l| ≤ k_max."""
        return f + NormalForm.bilinear(f, p, k_max)

    @staticmethod
    def bilinear(f: SpectralField, p: Params, k_max: int | None = None) -> SpectralField:
        n = f.grid_size
        k_max = NormalForm.default_k_max(n) if k_max is None else k_max
        if not 1 <= k_max < n // 2:
            raise ValueError(f"k_max must lie in [1, {n // 2 - 1}].")
        if abs(f.mode(0)) > 1e-12 * max(1.0, float(np.max(np.abs(f.modes)))):
            raise DomainError("The normal-form transform acts on zero-mean fields.")

        K1, K2_kl, K2_lk, K3, m = _coefficient_tables(p, k_max)
        ks = np.arange(-k_max, k_max + 1)
        F = f.modes[ks % n]
        G = np.conj(f.modes[(-ks) % n])

        terms = (
            K1 * np.outer(F, F)
            + K2_kl * np.outer(F, G)
            + K2_lk * np.outer(G, F)
            + K3 * np.outer(G, G)
        )
        keep = (np.abs(m) < n // 2) & (m != 0)
        out = np.zeros(n, dtype=complex)
        np.add.at(out, m[keep] % n, terms[keep])
        return SpectralField.from_modes(out)

    @staticmethod
    def bilinear_direct(f: SpectralField, p: Params, k_max: int | None = None) -> SpectralField:
        """The same sum as `bilinear`, assembled pair by pair."""
        n = f.grid_size
        k_max = NormalForm.default_k_max(n) if k_max is None else k_max
        out = np.zeros(n, dtype=complex)
        for k in range(-k_max, k_max + 1):
            for l in range(-k_max, k_max + 1):
                m = k + l
                if k == 0 or l == 0 or m == 0 or abs(m) >= n // 2:
                    continue
                c = NormalForm.solve_coeffs(k, l, p)
                Fk, Fl = f.mode(k), f.mode(l)
                Gk, Gl = np.conj(f.mode(-k)), np.conj(f.mode(-l))
                out[m % n] += (c.K1 * Fk * Fl + c.K2_kl * Fk * Gl
                               + c.K2_lk * Gk * Fl + c.K3 * Gk * Gl)
        return SpectralField.from_modes(out)

    @staticmethod
    def invert_transform(
        g: SpectralField,
        p: Params,
        k_max: int | None = None,
        tol: float = 1e-12,
        max_iter: int = 200,
        radius: float | None = None,
    ) -> SpectralField:
        """Fixed-point iteration f ← g − K(f, f)."""
        if radius is not None and sobolev_norm(g, 1) > radius:
            logger.warning("‖g‖₁ = %.3e exceeds the contraction radius %.3e",
                           sobolev_norm(g, 1), radius)
        f = g
        history = []
        for _ in range(max_iter):
            f_next = g - NormalForm.bilinear(f, p, k_max)
            step = float(np.max(np.abs(f_next.modes - f.modes)))
            history.append(step)
            f = f_next
            if not np.isfinite(step) or (len(history) > 3 and step > 10 * history[0]):
                raise ConvergenceError("Normal-form inversion diverged: ‖g‖ too large.", history)
            if step < tol:
                logger.debug("normal-form inversion converged in %d iterations", len(history))
                return f
        raise ConvergenceError(f"Normal-form inversion did not reach {tol:g}.", history)

    @staticmethod
    def contraction_radius(p: Params, n: int = 64, k_max: int | None = None,
                           samples: int = 8, seed: int = 42) -> float:
        """min(0.1, 1/(4C)) with C the measured ratio ‖K(f,f)‖₁ / ‖f‖₁²."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(samples):
            f = smooth_random_field(rng, n, scale=1e-2)
            ratio = sobolev_norm(NormalForm.bilinear(f, p, k_max), 1) / sobolev_norm(f, 1) ** 2
            worst = max(worst, ratio)
        return min(0.1, 1.0 / (4 * worst)) if worst > 0 else 0.1


@lru_cache(maxsize=32)
def _coefficient_tables(p: Params, k_max: int):
    ks = np.arange(-k_max, k_max + 1)
    k, l = np.meshgrid(ks, ks, indexing="ij")
    valid = (k != 0) & (l != 0) & (k + l != 0)
    q = _pair_quantities(np.where(valid, k, 1), np.where(valid, l, 1), p)
    for j, den in enumerate(q["den"], start=1):
        bad = valid & (np.abs(den) < DENOMINATOR_THRESHOLD)
        if bad.any():
            i = np.argwhere(bad)[0]
            raise ExceptionalParameterError(
                f"σ{j}² + σ² − b²", float(abs(den[tuple(i)])), int(k[tuple(i)]), int(l[tuple(i)]))
    sol = _solve(q, p.omega)
    bad = valid & (np.abs(sol["det"]) < DENOMINATOR_THRESHOLD)
    if bad.any():
        i = tuple(np.argwhere(bad)[0])
        raise ExceptionalParameterError(
            "|U|² − |V|²", float(abs(sol["det"][i])), int(k[i]), int(l[i]))
    tables = tuple(np.where(valid, sol[name], 0.0) for name in ("K1", "K2_kl", "K2_lk", "K3"))
    return (*tables, k + l)


def smooth_random_field(rng: np.random.Generator, n: int, scale: float = 1.0,
                        band: int | None = None) -> SpectralField:
    """Zero-mean random field with modes decaying like 1/(1+k²) up to |k| ≤ band."""
    band = n // 8 if band is None else band
    k = np.fft.fftfreq(n, d=1.0 / n)
    modes = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / (1 + k**2)
    modes[np.abs(k) > band] = 0.0
    modes[0] = 0.0
    field_ = SpectralField.from_modes(modes)
    return SpectralField.from_modes(modes * scale / sobolev_norm(field_, 1))
