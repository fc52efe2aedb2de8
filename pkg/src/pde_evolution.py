"""
Core Logic: split-step pseudospectral evolution of
iq_t = q_xx + 2(|q|² − ω²)q + iε(q_xx − αq + β) on [0, 2π),
and the tracking experiment comparing perturbed and unperturbed runs.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import optimize

from .config import EvolutionSpec, Params
from .darboux import DarbouxData, HomoclinicOrbits
from .errors import ConvergenceError, DomainError, ResolutionError
from .field_core import (
    SpectralField,
    sobolev_norm,
    spectral_derivative,
    to_modes,
    to_values,
    wavenumbers,
)
from .linearization import ResonanceLinearization

logger = logging.getLogger(__name__)

TAIL_TOL = 1e-10
TAIL_ABORT = 1e-6
EQUATIONS = ("nls", "pnls")

_CBRT2 = 2 ** (1 / 3)
YOSHIDA_WEIGHTS = (1 / (2 - _CBRT2), -_CBRT2 / (2 - _CBRT2), 1 / (2 - _CBRT2))


def tail_fraction(modes: np.ndarray) -> float:
    """ℓ² share of the coefficients with |k| ≥ N/3."""
    n = modes.shape[-1]
    k = np.abs(wavenumbers(n))
    total = float(np.sqrt(np.sum(np.abs(modes) ** 2)))
    if total == 0.0:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(modes[k >= n / 3]) ** 2)) / total)


def mass(values: np.ndarray) -> float:
    return float(np.mean(np.abs(values) ** 2))


def hamiltonian(values: np.ndarray, omega: float) -> float:
    """H = ⟨−|q_x|² + |q|⁴ − 2ω²|q|²⟩."""
    q_x = spectral_derivative(values)
    abs2 = np.abs(values) ** 2
    return float(np.mean(-np.abs(q_x) ** 2 + abs2**2 - 2 * omega**2 * abs2))


@dataclass
class EvolutionTrajectory:
    times: np.ndarray
    snapshots: np.ndarray
    params: Params
    spec: EvolutionSpec
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> SpectralField:
        return SpectralField.from_values(self.snapshots[-1])

    def field_at(self, index: int) -> SpectralField:
        return SpectralField.from_values(self.snapshots[index])

    @property
    def mass_drift(self) -> float:
        masses = [mass(s) for s in self.snapshots]
        return float(max(abs(m - masses[0]) for m in masses))

    @property
    def hamiltonian_drift(self) -> float:
        energies = [hamiltonian(s, self.params.omega) for s in self.snapshots]
        return float(max(abs(h - energies[0]) for h in energies))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.times,
            "mass": [mass(s) for s in self.snapshots],
            "hamiltonian": [hamiltonian(s, self.params.omega) for s in self.snapshots],
            "sup_abs_q": np.max(np.abs(self.snapshots), axis=1),
            "mean_re": np.mean(self.snapshots, axis=1).real,
            "mean_im": np.mean(self.snapshots, axis=1).imag,
        })

    def snapshot_frame(self, index: int = -1) -> pd.DataFrame:
        frame = self.field_at(index).to_frame()
        frame.insert(0, "t", self.times[index])
        return frame


class SplitStep:
    """Strang splitting: exact Fourier linear flow, exact pointwise phase rotation."""

    def __init__(self, n: int, dt: float, p: Params):
        self.n = n
        self.dt = dt
        self.p = p
        self._k2 = wavenumbers(n) ** 2
        self._cache: dict[float, tuple[np.ndarray, complex]] = {}

    def _linear_factors(self, h: float) -> tuple[np.ndarray, complex]:
        if h not in self._cache:
            p = self.p
            rate = 1j * self._k2 - p.epsilon * (self._k2 + p.alpha)
            z = rate[0] * h
            # εβ forcing on the mean, integrated exactly: ∫₀ʰ e^{L₀ s} ds
            phi1 = h if abs(z) < 1e-14 else (np.exp(z) - 1) / rate[0]
            self._cache[h] = (np.exp(rate * h), p.epsilon * p.beta * phi1)
        return self._cache[h]

    def linear(self, modes: np.ndarray, h: float) -> np.ndarray:
        factor, forcing = self._linear_factors(h)
        out = factor * modes
        out[0] += forcing
        return out

    def nonlinear(self, values: np.ndarray, h: float) -> np.ndarray:
        return values * np.exp(-2j * (np.abs(values) ** 2 - self.p.omega**2) * h)

    def strang(self, modes: np.ndarray, h: float) -> np.ndarray:
        modes = self.linear(modes, h / 2)
        values = self.nonlinear(to_values(modes), h)
        return self.linear(to_modes(values), h / 2)

    def step(self, modes: np.ndarray, scheme: str) -> np.ndarray:
        if scheme == "strang":
            return self.strang(modes, self.dt)
        for w in YOSHIDA_WEIGHTS:
            modes = self.strang(modes, w * self.dt)
        return modes


class PDEEvolution:
    """Evolution drivers and the experiments built on them."""

    # --- DRIVERS ---

    @staticmethod
    def _run(q0: SpectralField, spec: EvolutionSpec, p: Params,
             tail_tol: float) -> EvolutionTrajectory:
        if spec.scheme == "yoshida4" and p.epsilon > 0:
            raise DomainError("yoshida4 takes negative substeps; use strang when ε > 0.")
        initial_tail = tail_fraction(q0.modes)
        if initial_tail > tail_tol:
            raise ResolutionError(
                f"Initial data under-resolved: tail fraction {initial_tail:.3e} > {tail_tol:g}."
            )

        stepper = SplitStep(q0.grid_size, spec.dt, p)
        modes = q0.modes.copy()
        steps = spec.steps
        times, snapshots = [0.0], [q0.values.copy()]
        worst_tail = initial_tail
        for n in range(1, steps + 1):
            modes = stepper.step(modes, spec.scheme)
            if n % spec.record_stride == 0 or n == steps:
                tail = tail_fraction(modes)
                worst_tail = max(worst_tail, tail)
                if not np.isfinite(tail) or tail > TAIL_ABORT:
                    raise ResolutionError(
                        f"Spectral tail grew to {tail:.3e} at t = {n * spec.dt:.4f}; run aborted."
                    )
                times.append(n * spec.dt)
                snapshots.append(to_values(modes))

        trajectory = EvolutionTrajectory(
            times=np.array(times), snapshots=np.array(snapshots), params=p, spec=spec,
            meta={"steps": steps, "max_tail_fraction": worst_tail},
        )
        trajectory.meta["mass_drift"] = trajectory.mass_drift
        if p.epsilon == 0:
            trajectory.meta["hamiltonian_drift"] = trajectory.hamiltonian_drift
        logger.debug("Evolved %d steps (%s, ε=%g), tail %.2e",
                     steps, spec.scheme, p.epsilon, worst_tail)
        return trajectory

    @staticmethod
    def evolve_nls(q0: SpectralField, spec: EvolutionSpec, p: Params,
                   tail_tol: float = TAIL_TOL) -> EvolutionTrajectory:
        return PDEEvolution._run(q0, spec, p.with_(epsilon=0.0), tail_tol)

    @staticmethod
    def evolve_pnls(q0: SpectralField, spec: EvolutionSpec, p: Params,
                    tail_tol: float = TAIL_TOL) -> EvolutionTrajectory:
        """ε q_xx sits in the linear factor e^{−ε(k²+α)h}; ε = 0 reduces to the NLS path."""
        if p.epsilon < 0:
            raise DomainError("epsilon must be non-negative.")
        return PDEEvolution._run(q0, spec, p, tail_tol)

    @staticmethod
    def evolve(q0: SpectralField, spec: EvolutionSpec, p: Params, equation: str = "nls",
               tail_tol: float = TAIL_TOL) -> EvolutionTrajectory:
        if equation not in EQUATIONS:
            raise ValueError(f"equation must be one of {EQUATIONS}.")
        if equation == "nls":
            return PDEEvolution.evolve_nls(q0, spec, p, tail_tol)
        return PDEEvolution.evolve_pnls(q0, spec, p, tail_tol)

    # --- CERTIFICATES ---

    @staticmethod
    def convergence_certificate(q0: SpectralField, spec: EvolutionSpec, p: Params,
                                equation: str = "nls", with_ratio: bool = False) -> dict:
        """
        H¹ gap between terminal states at dt and dt/2; with_ratio adds dt/4 and
        the observed error ratio (≈4 for Strang, ≈16 for Yoshida).
        """
        finals = []
        for level in range(3 if with_ratio else 2):
            refined = replace(spec, dt=spec.dt / 2**level, record_stride=spec.steps * 2**level)
            finals.append(PDEEvolution.evolve(q0, refined, p, equation).final)
        gaps = [sobolev_norm(finals[i] - finals[i + 1], 1) for i in range(len(finals) - 1)]
        certificate = {"dt": spec.dt, "h1_gap": gaps[0]}
        if with_ratio:
            certificate["h1_gap_fine"] = gaps[1]
            certificate["ratio"] = gaps[0] / gaps[1] if gaps[1] > 0 else math.inf
        return certificate

    @staticmethod
    def growth_rate(trajectory: EvolutionTrajectory, k: int, start_fraction: float = 0.5) -> float:
        """Least-squares slope of ln(|q̂(k)|² + |q̂(−k)|²)^{1/2} over the later records."""
        n = trajectory.snapshots.shape[1]
        modes = np.fft.fft(trajectory.snapshots, axis=1) / n
        amplitude = np.sqrt(np.abs(modes[:, k]) ** 2 + np.abs(modes[:, n - k]) ** 2)
        first = int(start_fraction * len(trajectory.times))
        slope, _ = np.polyfit(trajectory.times[first:], np.log(amplitude[first:]), 1)
        return float(slope)

    # --- TRACKING ---

    @staticmethod
    def instability_rate(omega: float) -> float:
        """μ = √(4ω² − 1), the k = 1 rate that sets the window length for ω ∈ (1/2, 1)."""
        if not 0.5 < omega < 1.0:
            raise DomainError(f"The tracking window is defined for ω ∈ (1/2, 1), got {omega}.")
        return math.sqrt(4 * omega**2 - 1)

    @staticmethod
    def default_window_start(p: Params, tau_start: float = -4.0, tau_end: float = 4.0) -> float:
        """Time for the even orbit to pass from τ = tau_start to τ = tau_end."""
        d = DarbouxData.build(p.omega)
        return (tau_end - tau_start) / (2 * d.sigma)

    @staticmethod
    def distance_to_plane(q: SpectralField) -> float:
        """H¹ norm of q − ⟨q⟩."""
        return sobolev_norm(q - q.mode(0), 1)

    @staticmethod
    def _unstable_coordinate(q: SpectralField, p: Params) -> float:
        coords = ResonanceLinearization.to_resonance_coords(q, p)
        return ResonanceLinearization.eigen_split(coords.f, p).xi_plus[0]

    @staticmethod
    def tracking_run(epsilon: float, T: float, p: Params, spec: EvolutionSpec, n: int = 128,
                     tau_start: float = -4.0, window: float | None = None,
                     max_shots: int = 10) -> dict:
        """
        One ε: q₀ and q_ε start on the even orbit at τ = tau_start; the initial
        k = 1 unstable coordinate of q_ε is shot (bracket, then Brent) so both
        runs agree in ξ₁⁺ at the window end.
        """
        mu = PDEEvolution.instability_rate(p.omega)
        if window is None:
            if epsilon <= 0:
                raise DomainError("ε = 0 needs an explicit window length.")
            window = abs(math.log(epsilon)) / mu
        d = DarbouxData.build(p.omega)
        base = p.with_(epsilon=0.0, gamma=0.0)
        t_start = (tau_start + d.rho) / (2 * d.sigma)
        q_start = HomoclinicOrbits.homoclinic_one_pair(t_start, n, d, base)
        theta = HomoclinicOrbits.phase(t_start, d.a, base)
        direction = np.exp(1j * theta) * ResonanceLinearization.eigenfunction(1, 1, base, n).values

        horizon = T + window
        run_spec = replace(spec, t_end=horizon, scheme="strang")
        reference = PDEEvolution.evolve_nls(q_start, run_spec, base)
        target = PDEEvolution._unstable_coordinate(reference.final, base)
        perturbed = p.with_(epsilon=epsilon, gamma=0.0)

        def shoot(delta):
            traj = PDEEvolution.evolve_pnls(q_start + delta * direction, run_spec, perturbed)
            return traj, PDEEvolution._unstable_coordinate(traj.final, base) - target

        history = []

        def residual(delta):
            r = shoot(delta)[1]
            history.append(abs(r))
            return r

        delta = 0.0
        r0 = residual(0.0)
        if r0 != 0.0:
            # the end-of-window response saturates, so bracket before refining
            width = max(epsilon, 1e-12)
            for _ in range(max_shots):
                lo, hi = residual(-width), residual(width)
                if np.sign(lo) != np.sign(r0) or np.sign(hi) != np.sign(r0):
                    break
                width *= 4
            else:
                raise ConvergenceError(f"No shooting bracket at ε = {epsilon}.", history)
            left, right = (-width, 0.0) if np.sign(lo) != np.sign(r0) else (0.0, width)
            delta = optimize.brentq(residual, left, right, xtol=1e-15 * max(1.0, width))
        traj, r = shoot(delta)

        in_window = reference.times >= T - 1e-12
        pairs = zip(traj.snapshots[in_window], reference.snapshots[in_window], strict=True)
        gaps = [sobolev_norm(SpectralField.from_values(a - b), 1) for a, b in pairs]
        sup_gap = float(max(gaps))
        scale = epsilon * math.log(epsilon) ** 2 if epsilon > 0 else math.nan
        closed_end = HomoclinicOrbits.homoclinic_one_pair(t_start + horizon, n, d, base)
        distance = PDEEvolution.distance_to_plane(closed_end)
        return {
            "epsilon": epsilon,
            "window_start": T,
            "window_end": horizon,
            "mu": mu,
            "delta": delta,
            "shots": len(history) + 1,
            "shot_residual": abs(r),
            "sup_h1_gap": sup_gap,
            "ratio": sup_gap / scale if epsilon > 0 else math.nan,
            "distance_to_plane": distance,
            "distance_ratio": distance / epsilon if epsilon > 0 else math.nan,
            "status": "ok",
        }

    @staticmethod
    def tracking_experiment(epsilons, T: float, p: Params, spec: EvolutionSpec | None = None,
                            n: int = 128, executor=None, **kwargs) -> pd.DataFrame:
        """Scaling table of sup-window ‖q_ε − q₀‖₁ / (ε ln²ε), one row per ε."""
        spec = spec or EvolutionSpec(dt=1e-3, record_stride=10)

        def evaluate(epsilon):
            try:
                return PDEEvolution.tracking_run(float(epsilon), T, p, spec, n, **kwargs)
            except (ResolutionError, ConvergenceError) as e:
                logger.warning("Tracking at ε = %g failed: %s", epsilon, e)
                return {"epsilon": float(epsilon), "status": f"failed: {e}"}

        mapper = executor.map if executor is not None else map
        return pd.DataFrame(list(mapper(evaluate, epsilons)))
