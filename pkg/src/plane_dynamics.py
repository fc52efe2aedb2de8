"""
Core Logic: dynamics on the invariant plane of spatially constant states.
Fixed points, the rescaled fish system, its Hamiltonian and separatrices.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import optimize

from .config import Params
from .errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

MODES = ("full", "rescaled", "leading")


@dataclass(frozen=True)
class PlaneState:
    """J = I − ω² and an unwrapped angle θ."""

    J: float
    theta: float

    def intensity(self, omega: float) -> float:
        return self.J + omega**2


@dataclass(frozen=True)
class FixedPointInfo:
    kind: str
    I: float
    theta: float
    eigenvalues: tuple[complex, complex]
    numerical_eigenvalues: tuple[complex, complex]
    residual: float = 0.0


@dataclass
class PlaneTrajectory:
    mode: str
    times: np.ndarray
    first: np.ndarray
    theta: np.ndarray
    halted: bool = False
    meta: dict = field(default_factory=dict)
    params: Params | None = None

    def hamiltonian(self) -> np.ndarray:
        """ℋ along the path; full-mode J is rescaled to j = J/√ε first."""
        if self.params is None or (self.mode == "full" and self.params.epsilon == 0):
            return np.full(self.times.shape, np.nan)
        j = self.first if self.mode != "full" else self.first / math.sqrt(self.params.epsilon)
        return PlaneDynamics.fish_hamiltonian(j, self.theta, self.params)

    def to_frame(self) -> pd.DataFrame:
        label = "J" if self.mode == "full" else "j"
        time_label = "t" if self.mode == "full" else "tau"
        return pd.DataFrame({time_label: self.times, label: self.first, "theta": self.theta,
                             "hamiltonian": self.hamiltonian()})


def _sorted_pair(values) -> tuple[complex, complex]:
    ordered = sorted((complex(v) for v in values), key=lambda z: (z.real, z.imag))
    return ordered[1], ordered[0]


class PlaneDynamics:
    """
    The plane Π = {∂_x q = 0}: i q̇ = 2(|q|² − ω²) q + iε(−αq + β).
    """

    # --- VECTOR FIELDS ---

    @staticmethod
    def plane_rhs(state: PlaneState, p: Params) -> tuple[float, float]:
        """(dI/dt, dθ/dt) in polar coordinates q = √I e^{iθ}."""
        I = state.intensity(p.omega)
        if I <= 0:
            raise DomainError(f"Intensity I = {I} must be positive.")
        root = math.sqrt(I)
        d_I = p.epsilon * (-2 * p.alpha * I + 2 * p.beta * root * math.cos(state.theta))
        d_theta = -2 * (I - p.omega**2) - p.epsilon * p.beta * math.sin(state.theta) / root
        return d_I, d_theta

    @staticmethod
    def cartesian_rhs(xy: np.ndarray, p: Params) -> np.ndarray:
        q = complex(xy[0], xy[1])
        dq = -2j * (abs(q) ** 2 - p.omega**2) * q + p.epsilon * (-p.alpha * q + p.beta)
        return np.array([dq.real, dq.imag])

    @staticmethod
    def cartesian_jacobian(xy: np.ndarray, p: Params) -> np.ndarray:
        x, y = xy
        r2 = x * x + y * y
        w2 = p.omega**2
        ea = p.epsilon * p.alpha
        # q̇ = 2(r² − ω²)(y − ix) − εα(x + iy) + εβ
        return np.array(
            [
                [4 * x * y - ea, 2 * (r2 - w2) + 4 * y * y],
                [-2 * (r2 - w2) - 4 * x * x, -4 * x * y - ea],
            ]
        )

    @staticmethod
    def rescaled_rhs(j: float, theta: float, p: Params,
                     leading: bool = False) -> tuple[float, float]:
        """(dj/dτ, dθ/dτ) with J = √ε j, τ = √ε t; `leading` drops the √ε corrections."""
        w2 = p.omega**2
        if leading:
            return (
                2 * (-p.alpha * w2 + p.beta * p.omega * math.cos(theta)),
                -2 * j,
            )
        s = math.sqrt(p.epsilon)
        I = w2 + s * j
        if I <= 0:
            raise DomainError(f"Intensity I = {I} must be positive.")
        root = math.sqrt(I)
        d_j = 2 * (-p.alpha * I + p.beta * root * math.cos(theta))
        d_theta = -2 * j - s * p.beta * math.sin(theta) / root
        return d_j, d_theta

    # --- EQUILIBRIA ---

    @staticmethod
    def saddle_angle(p: Params) -> float:
        """θ_* ∈ (0, π/2) with cos θ_* = αω/β."""
        ratio = p.alpha * p.omega / p.beta
        if ratio >= 1:
            raise DomainError(f"αω < β required (αω/β = {ratio:.4g}).")
        return math.acos(ratio)

    @staticmethod
    def _newton_cartesian(seed: complex, p: Params, tol: float = 1e-12, max_iter: int = 60):
        xy = np.array([seed.real, seed.imag])
        history = []
        for _ in range(max_iter):
            f = PlaneDynamics.cartesian_rhs(xy, p)
            res = float(np.max(np.abs(f)))
            history.append(res)
            if res < tol:
                return xy, res
            step = np.linalg.solve(PlaneDynamics.cartesian_jacobian(xy, p), -f)
            xy = xy + step
        raise ConvergenceError(f"Newton did not converge from seed {seed}", history)

    @staticmethod
    def finite_difference_jacobian(func, point: np.ndarray, h: float = 1e-6) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        n = point.size
        jac = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            jac[:, i] = (func(point + e) - func(point - e)) / (2 * h)
        return jac

    @staticmethod
    def _closed_form_eigenvalues(kind: str, I: float, theta: float, p: Params):
        eps, a, b, w = p.epsilon, p.alpha, p.beta, p.omega
        root = math.sqrt(I)
        s = b * math.sin(theta)
        if kind == "O_eps":
            rad = complex(4 * (w**2 - I) ** 2 - 4 * eps * root * s)
            branch = 1j * np.sqrt(rad)
        elif kind == "P_eps":
            rad = complex(-4 * root * s + eps * (s / root) ** 2)
            branch = 1j * math.sqrt(eps) * np.sqrt(rad)
        else:
            rad = complex(4 * root * s - eps * (s / root) ** 2)
            branch = math.sqrt(eps) * np.sqrt(rad)
        return _sorted_pair((-eps * a + branch, -eps * a - branch))

    @staticmethod
    def fixed_points(p: Params) -> list[FixedPointInfo]:
        """
        O_ε, P_ε, Q_ε of the full plane system (Newton-refined from their
        leading-order expansions) and P_*, Q_* of the leading rescaled system.
        """
        if p.epsilon <= 0:
            raise DomainError("epsilon must be positive for the perturbed fixed points.")

        eps, a, b, w = p.epsilon, p.alpha, p.beta, p.omega
        seeds = {"O_eps": (eps**2 * b**2 / (4 * w**4), math.pi / 2)}

        has_saddle = a * w < b
        if has_saddle:
            theta_star = PlaneDynamics.saddle_angle(p)
            shift = eps / (2 * w) * math.sqrt(b**2 - a**2 * w**2)
            seeds["P_eps"] = (w**2 + shift, -theta_star)
            seeds["Q_eps"] = (w**2 - shift, theta_star)
        else:
            logger.warning("αω >= β: only the focus O_ε exists on the plane.")

        points = []
        for kind, (I0, th0) in seeds.items():
            seed = math.sqrt(I0) * complex(math.cos(th0), math.sin(th0))
            xy, res = PlaneDynamics._newton_cartesian(seed, p)
            I = float(xy @ xy)
            theta = math.atan2(xy[1], xy[0])
            jac = PlaneDynamics.finite_difference_jacobian(
                lambda v: PlaneDynamics.cartesian_rhs(v, p), xy
            )
            points.append(
                FixedPointInfo(
                    kind=kind,
                    I=I,
                    theta=theta,
                    eigenvalues=PlaneDynamics._closed_form_eigenvalues(kind, I, theta, p),
                    numerical_eigenvalues=_sorted_pair(np.linalg.eigvals(jac)),
                    residual=res,
                )
            )

        if has_saddle:
            points.extend(PlaneDynamics.rescaled_fixed_points(p))
        return points

    @staticmethod
    def rescaled_fixed_points(p: Params) -> list[FixedPointInfo]:
        """P_* (center) and Q_* (saddle) at j = 0, cos θ = αω/β."""
        theta_star = PlaneDynamics.saddle_angle(p)
        scale = 2 * math.sqrt(p.omega) * (p.beta**2 - p.alpha**2 * p.omega**2) ** 0.25

        def field_(v):
            return np.array(PlaneDynamics.rescaled_rhs(v[0], v[1], p, leading=True))

        result = []
        for kind, theta, pair in (
            ("P_star", -theta_star, (1j * scale, -1j * scale)),
            ("Q_star", theta_star, (scale, -scale)),
        ):
            jac = PlaneDynamics.finite_difference_jacobian(field_, np.array([0.0, theta]))
            result.append(
                FixedPointInfo(
                    kind=kind,
                    I=0.0,
                    theta=theta,
                    eigenvalues=_sorted_pair(pair),
                    numerical_eigenvalues=_sorted_pair(np.linalg.eigvals(jac)),
                )
            )
        return result

    # --- FISH ---

    @staticmethod
    def fish_hamiltonian(j, theta, p: Params):
        """ℋ = j² + 2ω(−αωθ + β sin θ)."""
        return j**2 + 2 * p.omega * (-p.alpha * p.omega * theta + p.beta * np.sin(theta))

    @staticmethod
    def _head_function(theta, p: Params, theta_star: float):
        drop = np.sin(theta) - np.sin(theta_star)
        return p.alpha * p.omega * (theta - theta_star) - p.beta * drop

    @staticmethod
    def fish_head(p: Params, scan_step: float = 1e-3) -> float:
        """θ̂ ∈ (−3π/2, 0): the closing point of the singular level set through Q_*."""
        theta_star = PlaneDynamics.saddle_angle(p)
        grid = np.arange(-1.5 * np.pi, 0.0 + scan_step / 2, scan_step)
        values = PlaneDynamics._head_function(grid, p, theta_star)
        changes = np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]
        if changes.size == 0:
            raise DomainError(
                f"No sign change of the head equation on (−3π/2, 0) "
                f"(min {values.min():.3e}, max {values.max():.3e})."
            )
        i = changes[-1]
        root = optimize.brentq(
            PlaneDynamics._head_function, grid[i], grid[i + 1], args=(p, theta_star),
            xtol=1e-15, rtol=4 * np.finfo(float).eps,
        )
        logger.debug("fish head at θ̂ = %.15f (%d sign changes)", root, changes.size)
        return float(root)

    @staticmethod
    def separatrix_curves(theta, p: Params, delta_hat: float = 1e-3, head: float | None = None):
        """(φ_*^u(θ), φ_*^s(θ)) on θ ∈ [θ̂ + δ̂, θ_* + 2π]."""
        theta_star = PlaneDynamics.saddle_angle(p)
        if head is None:
            head = PlaneDynamics.fish_head(p)
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < head + delta_hat) or np.any(theta > theta_star + 2 * np.pi):
            raise DomainError("θ outside [θ̂ + δ̂, θ_* + 2π].")
        radicand = 2 * p.omega * PlaneDynamics._head_function(theta, p, theta_star)
        if np.any(radicand < -1e-14):
            raise DomainError("Negative radicand: θ lies outside the fish.")
        unstable = -np.sign(theta - theta_star) * np.sqrt(np.clip(radicand, 0.0, None))
        return unstable, -unstable

    # --- NULLCLINES ---

    @staticmethod
    def nullclines(p: Params, theta, j, mode: str = "leading") -> pd.DataFrame:
        """
        j̇ = 0 and θ̇ = 0 of the rescaled system inside the window spanned by
        `theta` and `j`. θ̇ = 0 is sampled along `theta`, j̇ = 0 along `j`.
        """
        if mode not in ("rescaled", "leading"):
            raise ValueError("nullclines live in the rescaled plane: mode 'rescaled' or 'leading'.")
        theta = np.asarray(theta, dtype=float)
        j = np.asarray(j, dtype=float)
        s = 0.0 if mode == "leading" else math.sqrt(p.epsilon)
        w2 = p.omega**2

        # θ̇ = 0: j = −sβ sin θ / (2√I), a contraction in j for small s
        j_flat = np.zeros_like(theta)
        for _ in range(60):
            root = np.sqrt(np.maximum(w2 + s * j_flat, 1e-300))
            j_flat = -s * p.beta * np.sin(theta) / (2 * root)

        # j̇ = 0: cos θ = α√I / β, both branches repeated over the θ window
        intensity = w2 + s * j
        ok = intensity > 0
        ratio = np.full(j.shape, np.inf)
        ratio[ok] = p.alpha * np.sqrt(intensity[ok]) / p.beta
        ok &= ratio <= 1
        base, j_ok = np.arccos(ratio[ok]), j[ok]
        lo, hi = float(theta.min()), float(theta.max())
        thetas, js = [], []
        first = math.floor((lo - np.pi) / (2 * np.pi))
        last = math.ceil((hi + np.pi) / (2 * np.pi))
        for n in range(first, last + 1):
            for branch in (base, -base):
                shifted = branch + 2 * np.pi * n
                inside = (shifted >= lo) & (shifted <= hi)
                thetas.append(shifted[inside])
                js.append(j_ok[inside])

        return pd.concat([
            pd.DataFrame({"curve": "theta_dot", "theta": theta, "j": j_flat}),
            pd.DataFrame(
                {"curve": "j_dot", "theta": np.concatenate(thetas), "j": np.concatenate(js)}
            ),
        ], ignore_index=True)

    # --- INTEGRATION ---

    @staticmethod
    def _field(mode: str, p: Params):
        if mode == "full":
            return lambda u, v: PlaneDynamics.plane_rhs(PlaneState(u, v), p)
        if mode == "rescaled":
            return lambda u, v: PlaneDynamics.rescaled_rhs(u, v, p)
        if mode == "leading":
            return lambda u, v: PlaneDynamics.rescaled_rhs(u, v, p, leading=True)
        raise ValueError(f"mode must be one of {MODES}.")

    @staticmethod
    def integrate_plane(
        state: PlaneState,
        t_span: tuple[float, float],
        p: Params,
        mode: str = "leading",
        step: float = 1e-3,
        stride: int = 1,
    ) -> PlaneTrajectory:
        """
        Classic RK4 at fixed step. `state.J` is J in full mode and j otherwise.
        Reaching I <= 0 halts and returns the partial trajectory.
        """
        rhs = PlaneDynamics._field(mode, p)
        t0, t1 = t_span
        n_steps = int(round((t1 - t0) / step))
        if n_steps <= 0:
            raise ValueError("t_span must have positive length.")

        u, v = float(state.J), float(state.theta)
        times, us, vs = [t0], [u], [v]
        halted = False
        for n in range(1, n_steps + 1):
            try:
                k1 = rhs(u, v)
                k2 = rhs(u + 0.5 * step * k1[0], v + 0.5 * step * k1[1])
                k3 = rhs(u + 0.5 * step * k2[0], v + 0.5 * step * k2[1])
                k4 = rhs(u + step * k3[0], v + step * k3[1])
            except DomainError:
                logger.warning("Plane integration halted at step %d: I <= 0 reached", n)
                halted = True
                break
            u += step / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            v += step / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            if n % stride == 0 or n == n_steps:
                times.append(t0 + n * step)
                us.append(u)
                vs.append(v)

        return PlaneTrajectory(
            mode=mode,
            times=np.array(times),
            first=np.array(us),
            theta=np.array(vs),
            halted=halted,
            meta={"step": step},
            params=p,
        )

    @staticmethod
    def step_halving_error(state: PlaneState, t_span, p: Params, mode: str = "leading",
                           step: float = 1e-3) -> float:
        coarse = PlaneDynamics.integrate_plane(state, t_span, p, mode, step)
        fine = PlaneDynamics.integrate_plane(state, t_span, p, mode, step / 2)
        return float(max(abs(coarse.first[-1] - fine.first[-1]),
                         abs(coarse.theta[-1] - fine.theta[-1])))
