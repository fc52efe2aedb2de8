"""
Orchestrator for the experiment harness.
Maps each subcommand onto the numerical modules, writes the artifacts and the
run manifest, and runs the verify oracle suites.
"""

import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .config import (
    EvolutionSpec,
    Params,
    QuadratureSpec,
    RunConfig,
    config_load,
    require_saddle,
)
from .darboux import DarbouxData, HomoclinicOrbits
from .errors import ConfigError, ExceptionalParameterError, HomoclinicError
from .field_core import SpectralField, parseval_defect, to_modes, to_values
from .integrable import ZakharovShabat
from .linearization import ResonanceLinearization
from .melnikov import MelnikovIntegrals
from .normal_form import NormalForm
from .pde_evolution import PDEEvolution
from .plane_dynamics import PlaneDynamics, PlaneState
from .reporting import (
    canonical_json,
    content_hash,
    print_artifacts,
    print_oracle_report,
    print_run_header,
    print_summary,
    write_frame,
    write_json,
)

logger = logging.getLogger(__name__)

OUT_ENV = "NLS_HOMOCLINIC_OUT"
COMMANDS = (
    "plane-portrait", "fish", "spectrum", "normal-form-scan", "floquet", "homoclinic",
    "melnikov-kappa", "melnikov-surface", "second-distance", "evolve", "track", "verify",
)
PARAM_KEYS = ("omega", "alpha", "beta", "epsilon", "gamma", "amplitude")
EVOLUTION_KEYS = ("dt", "t_end", "scheme")


@dataclass(frozen=True)
class OracleResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict, compare=False)

    @classmethod
    def below(cls, name: str, value: float, tolerance: float,
              details: dict | None = None) -> "OracleResult":
        value = float(value)
        return cls(name, value, tolerance, bool(np.isfinite(value) and value < tolerance),
                   details or {})

    def row(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "passed": self.passed}


@dataclass
class RunManifest:
    command: str
    parameters: dict
    specs: dict
    options: dict
    input_hash: str = ""
    outputs: list = field(default_factory=list)
    oracles: list = field(default_factory=list)
    certificates: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.input_hash:
            inputs = {"command": self.command, "parameters": self.parameters,
                      "specs": self.specs, "options": self.options}
            self.input_hash = content_hash(canonical_json(inputs))

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.oracles)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "parameters": self.parameters,
            "specs": self.specs,
            "options": self.options,
            "input_hash": self.input_hash,
            "outputs": self.outputs,
            "oracles": [r.row() for r in self.oracles],
            "certificates": self.certificates,
            "passed": self.passed,
        }


@dataclass
class CommandResult:
    frames: dict = field(default_factory=dict)
    oracles: list = field(default_factory=list)
    certificates: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


# --- OPTION PARSING ---


def parse_range(text) -> np.ndarray:
    """'start:stop:step' (stop included), a comma list, or a single number."""
    if isinstance(text, int | float):
        return np.array([float(text)])
    text = str(text).strip()
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0 or stop < start:
                raise ConfigError(f"Range '{text}' needs step > 0 and stop >= start.")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return start + step * np.arange(count)
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as e:
        raise ConfigError(f"Cannot parse range '{text}': {e}") from e


def parse_scalar(text, name: str) -> float:
    values = parse_range(text)
    if values.size != 1:
        raise ConfigError(f"--{name} takes a single value here, got '{text}'.")
    return float(values[0])


def apply_overrides(config: RunConfig, options: dict, range_keys: tuple = ()) -> RunConfig:
    """Command-line values replace config values; range-valued keys are left to the command."""
    params = {k: parse_scalar(options[k], k) for k in PARAM_KEYS
              if options.get(k) is not None and k not in range_keys}
    evolution = {k: options[k] for k in EVOLUTION_KEYS if options.get(k) is not None}
    grid = {"size": int(options["grid"])} if options.get("grid") is not None else {}
    config = replace(
        config,
        params=replace(config.params, **params),
        evolution=replace(config.evolution, **evolution),
        grid=replace(config.grid, **grid),
    )
    return config.validate()


def resolve_out_dir(out: str | None) -> Path:
    """NLS_HOMOCLINIC_OUT wins over --out."""
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    return Path(out or "results")


# --- COMMANDS ---


def cmd_plane_portrait(config: RunConfig, options: dict, executor) -> CommandResult:
    p = require_saddle(config.params)
    mode = options.get("mode") or "leading"
    t_end = float(options.get("t_span") or 50.0)
    step = float(options.get("step") or 1e-3)
    result = CommandResult()
    if p.epsilon > 0:
        points = PlaneDynamics.fixed_points(p)
        result.frames["fixed_points"] = pd.DataFrame([
            {"kind": f.kind, "I": f.I, "theta": f.theta,
             "mu_plus": str(f.eigenvalues[0]), "mu_minus": str(f.eigenvalues[1]),
             "eig_gap": max(abs(a - b) for a, b in zip(f.eigenvalues, f.numerical_eigenvalues,
                                                       strict=True)),
             "residual": f.residual}
            for f in points
        ])
        gap = float(result.frames["fixed_points"]["eig_gap"].max())
        result.oracles.append(OracleResult.below(
            "fixed_point_eigenvalues", gap, max(1e-6, 10 * p.epsilon**2)))

    theta_star = PlaneDynamics.saddle_angle(p)
    start = PlaneState(0.0, -theta_star + 0.3)
    if mode == "full":
        start = PlaneState(0.0, theta_star + 0.1)
    traj = PlaneDynamics.integrate_plane(start, (0.0, t_end), p, mode, step,
                                         stride=max(1, int(round(0.05 / step))))
    result.frames["trajectory"] = traj.to_frame()
    if mode != "full":
        result.frames["nullclines"] = PlaneDynamics.nullclines(
            p, np.linspace(float(traj.theta.min()), float(traj.theta.max()), 400),
            np.linspace(float(traj.first.min()), float(traj.first.max()), 400), mode)
    if mode == "leading":
        energy = PlaneDynamics.fish_hamiltonian(traj.first, traj.theta, p)
        result.oracles.append(OracleResult.below(
            "fish_hamiltonian_drift", float(np.max(np.abs(energy - energy[0]))), 1e-8))
    result.certificates["step_halving"] = PlaneDynamics.step_halving_error(
        start, (0.0, min(t_end, 10.0)), p, mode, step)
    result.summary = {"mode": mode, "points": len(traj.times), "halted": traj.halted}
    return result


def cmd_fish(config: RunConfig, options: dict, executor) -> CommandResult:
    p = require_saddle(config.params)
    count = int(options.get("points") or 400)
    delta_hat = 1e-3
    head = PlaneDynamics.fish_head(p)
    theta_star = PlaneDynamics.saddle_angle(p)
    theta = np.linspace(head + delta_hat, theta_star, count)
    unstable, stable = PlaneDynamics.separatrix_curves(theta, p, delta_hat, head)
    level = PlaneDynamics.fish_hamiltonian(unstable, theta, p)
    saddle_level = PlaneDynamics.fish_hamiltonian(0.0, theta_star, p)
    frame = pd.DataFrame({"theta": theta, "phi_unstable": unstable, "phi_stable": stable,
                          "hamiltonian": level})
    return CommandResult(
        frames={"fish": frame},
        oracles=[OracleResult.below("separatrix_level_set",
                                    float(np.max(np.abs(level - saddle_level))), 1e-10)],
        summary={"fish_head": head, "theta_star": theta_star},
    )


def cmd_spectrum(config: RunConfig, options: dict, executor) -> CommandResult:
    p = config.params
    k_max = int(options.get("k_max") or 8)
    n = config.grid.size
    frame = ResonanceLinearization.spectrum_frame(p, k_max)
    oracles = []
    modes = ResonanceLinearization.unstable_modes(p.omega)
    for k in modes:
        mu_plus, _ = ResonanceLinearization.eigenvalues(k, p)
        e = ResonanceLinearization.eigenfunction(k, 1, p, n)
        residual = ResonanceLinearization.l_epsilon_apply(e, p) - mu_plus * e
        oracles.append(OracleResult.below(f"eigenfunction_residual_k{k}",
                                          float(np.max(np.abs(residual.values))), 1e-10))
    real_pairs = int(frame.loc[frame["branch"] == "plus", "real_pair"].sum())
    oracles.append(
        OracleResult.below("real_pair_count_mismatch", abs(real_pairs - len(modes)), 0.5)
    )
    return CommandResult(frames={"spectrum": frame}, oracles=oracles,
                         summary={"real_pairs": real_pairs})


def cmd_normal_form_scan(config: RunConfig, options: dict, executor) -> CommandResult:
    grid = parse_range(options.get("omega") or "0.51:1.49:0.01")
    k_max = int(options.get("k_max") or 16)
    frame, zeros = NormalForm.denominator_scan(config.params, grid, k_max)
    zeros_frame = pd.DataFrame({"omega": zeros})
    return CommandResult(
        frames={"normal_form_scan": frame, "exceptional_omega": zeros_frame},
        summary={"grid_points": len(frame), "exceptional": len(zeros),
                 "flagged": int(frame["flagged"].sum())},
    )


def cmd_floquet(config: RunConfig, options: dict, executor) -> CommandResult:
    p = config.params
    a = p.a
    count = int(options.get("points") or 50)
    q = SpectralField.constant(a * np.exp(-1j * p.gamma), config.grid.size)
    lams = np.concatenate([1j * np.linspace(0.0, 1.2, count), np.linspace(-1.0, 1.0, count)])
    frame = ZakharovShabat.discriminant_frame(q, lams, a)

    seeds = [1j * math.sqrt(a**2 - 0.25) + 0.01]
    if a > 1:
        seeds.append(1j * math.sqrt(a**2 - 1) + 0.01)
    points = ZakharovShabat.critical_points(q, seeds)
    exact = [1j * math.sqrt(a**2 - 0.25), 1j * math.sqrt(a**2 - 1)]
    crit = pd.DataFrame([{"re_lambda": c.lam.real, "im_lambda": c.lam.imag,
                          "re_delta": c.delta.real, "im_delta": c.delta.imag,
                          "residual": c.residual, "converged": c.converged,
                          "error": abs(c.lam - exact[i])} for i, c in enumerate(points)])
    return CommandResult(
        frames={"discriminant": frame, "critical_points": crit},
        oracles=[
            OracleResult.below("plane_wave_discriminant", float(frame["abs_error"].max()), 1e-8),
            OracleResult.below("double_point_location", float(crit["error"].max()), 1e-8),
        ],
    )


def _optional_float(options: dict, key: str) -> float | None:
    value = options.get(key)
    return None if value is None else float(value)


def _darboux_from(config: RunConfig, options: dict, pairs: int) -> DarbouxData:
    """
    Darboux data from --rho, --vartheta, --rho-hat, --vartheta-hat, --delta-rho and --even.
    Missing phases select the even orbit; --delta-rho fixes ρ̂ from ρ.
    """
    a = config.params.a
    rho = _optional_float(options, "rho") or 0.0
    vartheta = _optional_float(options, "vartheta")
    rho_hat = _optional_float(options, "rho_hat")
    vartheta_hat = _optional_float(options, "vartheta_hat")
    delta_rho = _optional_float(options, "delta_rho")
    if options.get("even") and (vartheta is not None or vartheta_hat is not None):
        raise ConfigError("--even conflicts with an explicit --vartheta/--vartheta-hat.")
    if pairs == 1:
        extra = [k for k, v in (("rho_hat", rho_hat), ("vartheta_hat", vartheta_hat),
                                ("delta_rho", delta_rho)) if v is not None]
        if extra:
            raise ConfigError(f"{', '.join(extra)} only apply to the two-pair orbit.")
        return DarbouxData.build(a, rho=rho, vartheta=vartheta)
    if delta_rho is not None and rho_hat is not None:
        raise ConfigError("Give either --delta-rho or --rho-hat, not both.")
    if rho_hat is None:
        rho_hat = DarbouxData.from_delta_rho(a, delta_rho or 0.0, rho).rho_hat
    return DarbouxData.build(a, rho=rho, vartheta=vartheta, rho_hat=rho_hat,
                             vartheta_hat=vartheta_hat)


def cmd_homoclinic(config: RunConfig, options: dict, executor) -> CommandResult:
    p = config.params
    n = config.grid.size
    pairs = int(options.get("pairs") or 1)
    d = _darboux_from(config, options, pairs)
    taus = parse_range(options.get("tau") or "-5:5:0.5")
    times = (taus + d.rho) / (2 * d.sigma)

    rows, cross, residuals = [], [], []
    for t in times:
        q = HomoclinicOrbits.orbit(pairs, float(t), n, d, p)
        if pairs == 1:
            check = HomoclinicOrbits.homoclinic_one_pair_bd(float(t), n, d, p)
        else:
            check = HomoclinicOrbits.homoclinic_two_pair_closed(float(t), n, d, p)
        cross.append(q.sup_distance(check))
        residuals.append(HomoclinicOrbits.nls_residual(
            lambda s: HomoclinicOrbits.orbit(pairs, s, n, d, p), float(t), p))
        frame = q.to_frame()
        frame.insert(0, "t", float(t))
        rows.append(frame)

    tolerance_cross = 1e-10 if pairs == 1 else 1e-8
    tolerance_pde = 1e-6 if pairs == 1 else 1e-5
    return CommandResult(
        frames={f"homoclinic_{pairs}": pd.concat(rows, ignore_index=True)},
        oracles=[
            OracleResult.below("construction_cross_check", max(cross), tolerance_cross),
            OracleResult.below("nls_residual", max(residuals), tolerance_pde),
        ],
        summary={"pairs": pairs, "snapshots": len(times), "even": d.is_even},
    )


def cmd_melnikov_kappa(config: RunConfig, options: dict, executor) -> CommandResult:
    grid = parse_range(options.get("omega") or "0.55:0.95:0.01")
    frame = MelnikovIntegrals.kappa_curve(grid, config.params, config.quadrature,
                                          certify=not options.get("no_certify"))
    result = CommandResult(frames={"kappa": frame})
    closure = frame["closure"].abs().max()
    result.oracles.append(OracleResult.below("kappa_closure_M1", closure, 1e-8))
    cert_columns = [c for c in frame.columns if c.startswith("cert_")]
    if cert_columns:
        worst = float(frame[cert_columns].max().max())
        result.certificates["melnikov_refinement"] = worst
        result.oracles.append(OracleResult.below("melnikov_refinement", worst, 1e-6))
    result.summary = {"grid_points": len(frame), "flagged": int(frame["flagged"].sum())}
    return result


def cmd_melnikov_surface(config: RunConfig, options: dict, executor) -> CommandResult:
    omega = parse_range(options.get("omega") or "1.05:1.45:0.05")
    delta_rho = parse_range(options.get("delta_rho") or "-2:2:0.5")
    frame = MelnikovIntegrals.surface_two_pairs(
        omega, delta_rho, config.params, config.quadrature,
        certify=not options.get("no_certify"), executor=executor)
    result = CommandResult(frames={"surface": frame})
    solved = frame[frame["alpha"].notna()] if "alpha" in frame else frame.iloc[0:0]
    if len(solved):
        worst = float(solved[["M1_residual", "M2_residual", "d_residual"]].abs().max().max())
        result.oracles.append(OracleResult.below("surface_closure", worst, 1e-6))
    cert_columns = [c for c in frame.columns if c.startswith("cert_")]
    if cert_columns:
        worst = float(frame[cert_columns].max().max())
        result.certificates["melnikov_refinement"] = worst
        result.oracles.append(OracleResult.below("melnikov_refinement", worst, 1e-6))
    result.summary = {"grid_points": len(frame), "solved": len(solved)}
    return result


def cmd_second_distance(config: RunConfig, options: dict, executor) -> CommandResult:
    p = config.params
    count = int(options.get("points") or 200)
    shift = options.get("theta_shift")
    if shift is None:
        shift = MelnikovIntegrals.delta_gamma(DarbouxData.build(p.omega), 1)
    theta = np.linspace(-math.pi, math.pi, count)
    frame = MelnikovIntegrals.second_distance_scan(theta, float(shift), p)
    gap = float(np.max(np.abs(frame["d_tilde"] - frame["hamiltonian_form"])))
    return CommandResult(
        frames={"second_distance": frame},
        oracles=[OracleResult.below("hamiltonian_difference_form", gap, 1e-10)],
        summary={"theta_shift": float(shift)},
    )


def initial_field(config: RunConfig, options: dict) -> tuple[SpectralField, object]:
    """Initial data and, when one exists, the closed-form solution q(t) it starts."""
    p, n = config.params, config.grid.size
    init = options.get("init") or "homoclinic-1"
    if init == "plane":
        a = p.a
        base = HomoclinicOrbits.plane_wave(0.0, n, a, p)
        return base, lambda t: HomoclinicOrbits.plane_wave(t, n, a, p)
    if init in ("homoclinic-1", "homoclinic-2"):
        pairs = 1 if init == "homoclinic-1" else 2
        d = _darboux_from(config, options, pairs)
        tau0 = options.get("tau0")
        t0 = ((-5.0 if tau0 is None else float(tau0)) + d.rho) / (2 * d.sigma)
        return (HomoclinicOrbits.orbit(pairs, t0, n, d, p),
                lambda t: HomoclinicOrbits.orbit(pairs, t0 + t, n, d, p))
    if init == "file":
        path = options.get("init_file")
        if not path:
            raise ConfigError("--init file needs --init-file PATH.")
        frame = pd.read_csv(path)
        if "t" in frame.columns:
            frame = frame[frame["t"] == frame["t"].iloc[-1]]
        values = frame["re_q"].to_numpy() + 1j * frame["im_q"].to_numpy()
        return SpectralField.from_values(values), None
    raise ConfigError(f"Unknown --init '{init}'.")


def cmd_evolve(config: RunConfig, options: dict, executor) -> CommandResult:
    p, spec = config.params, config.evolution
    equation = options.get("equation") or ("pnls" if p.epsilon > 0 else "nls")
    q0, exact = initial_field(config, options)
    traj = PDEEvolution.evolve(q0, spec, p, equation)
    result = CommandResult(frames={
        "evolution": traj.to_frame(),
        "final_snapshot": traj.snapshot_frame(-1),
    })
    if equation == "nls":
        result.oracles.append(OracleResult.below("mass_drift", traj.mass_drift, 1e-10))
        result.oracles.append(OracleResult.below("hamiltonian_drift", traj.hamiltonian_drift, 1e-8))
        if exact is not None:
            gap = max(traj.field_at(i).sup_distance(exact(float(t)))
                      for i, t in enumerate(traj.times))
            result.oracles.append(OracleResult.below("closed_form_gap", gap, 1e-5))
    certificate = PDEEvolution.convergence_certificate(q0, spec, p, equation)
    result.certificates["convergence"] = certificate
    result.oracles.append(OracleResult.below("dt_halving_h1_gap", certificate["h1_gap"], 1e-8))
    result.summary = {"equation": equation, "steps": spec.steps,
                      "max_tail": traj.meta["max_tail_fraction"]}
    return result


def cmd_track(config: RunConfig, options: dict, executor) -> CommandResult:
    p = config.params
    epsilons = parse_range(options.get("epsilons") or "1e-2,1e-3,1e-4")
    T = options.get("window_start")
    T = PDEEvolution.default_window_start(p) if T is None else float(T)
    spec = replace(config.evolution, dt=options.get("dt") or 1e-3, record_stride=10)
    frame = PDEEvolution.tracking_experiment(epsilons, T, p, spec, min(config.grid.size, 128),
                                             executor=executor)
    result = CommandResult(frames={"tracking": frame})
    ok = frame[frame["status"] == "ok"] if "status" in frame else frame.iloc[0:0]
    result.oracles.append(OracleResult.below("failed_epsilons", len(frame) - len(ok), 0.5))
    if len(ok) > 1:
        spread = float(ok["ratio"].max() / ok["ratio"].min())
        result.oracles.append(OracleResult.below("tracking_ratio_spread", spread, 10.0))
        result.summary = {"max_ratio": float(ok["ratio"].max()), "spread": spread}
    return result


# --- VERIFY ---


EXPANSION_EPSILONS = (1e-2, 1e-3, 1e-4)


def _fitted_constant(errors: dict) -> tuple[float, float]:
    """
    C from the largest ε, and the worst ratio (|err|/ε²)/C over the rest.
    A ratio that grows as ε shrinks means the error is not O(ε²).
    """
    ratios = {eps: err / eps**2 for eps, err in errors.items()}
    c_fit = ratios[max(ratios)]
    if c_fit == 0:
        return 0.0, (0.0 if max(ratios.values()) == 0 else math.inf)
    return c_fit, max(ratios.values()) / c_fit


def _oracle_field_round_trip() -> OracleResult:
    rng = np.random.default_rng(42)
    values = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    gap = float(np.max(np.abs(to_values(to_modes(values)) - values)))
    return OracleResult.below("field_round_trip", max(gap, parseval_defect(
        SpectralField.from_values(values))), 1e-12)


def _oracle_eigenfunctions() -> OracleResult:
    worst = 0.0
    for omega, eps in ((0.8, 0.0), (1.2, 1e-3)):
        p = Params(omega=omega, epsilon=eps)
        for k in ResonanceLinearization.unstable_modes(omega):
            for sign, mu in zip((1, -1), ResonanceLinearization.eigenvalues(k, p), strict=True):
                e = ResonanceLinearization.eigenfunction(k, sign, p, 64)
                residual = ResonanceLinearization.l_epsilon_apply(e, p) - mu * e
                worst = max(worst, float(np.max(np.abs(residual.values))))
    return OracleResult.below("l_epsilon_eigenfunctions", worst, 1e-10)


def _oracle_normal_form(samples: int = 500) -> OracleResult:
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(samples):
        k, l = (int(v) for v in rng.integers(-32, 33, size=2))
        if k == 0 or l == 0 or k + l == 0:
            continue
        p = Params(omega=float(rng.uniform(0.51, 1.49)), epsilon=float(rng.uniform(0.0, 1e-2)))
        try:
            c = NormalForm.solve_coeffs(k, l, p)
        except ExceptionalParameterError:
            continue
        worst = max(worst, NormalForm.residual(c))
    return OracleResult.below("normal_form_residual", worst, 1e-12)


def _oracle_normal_form_expansion() -> OracleResult:
    worst, fits = 0.0, {}
    for k, l in ((1, 2), (-3, 1), (2, 2)):
        errors = {}
        for eps in EXPANSION_EPSILONS:
            c = NormalForm.solve_coeffs(k, l, Params(omega=0.8, epsilon=eps))
            errors[eps] = abs(c.K - NormalForm.leading_order_K(c))
        c_fit, growth = _fitted_constant(errors)
        fits[f"{k},{l}"] = c_fit
        worst = max(worst, growth)
    return OracleResult.below("normal_form_K_expansion", worst, 2.0, {"C": fits})


def _oracle_normal_form_unperturbed() -> OracleResult:
    """ω = 0.8, (k, l) = (1, 2) at ε = 0: K = 2ω, K̂₁ = −0.4, K̂₂ = −0.8/6, −0.8/3, K̂₃ = 0."""
    c = NormalForm.solve_coeffs(1, 2, Params(omega=0.8))
    expected = {"K": 1.6, "K1": -0.4, "K2_kl": -0.8 / 6, "K2_lk": -0.8 / 3, "K3": 0.0}
    gaps = {name: abs(getattr(c, name) - value) for name, value in expected.items()}
    return OracleResult.below("normal_form_unperturbed", max(gaps.values()), 1e-12)


def _oracle_plane_discriminant() -> OracleResult:
    lams = np.concatenate([1j * np.linspace(0.0, 1.2, 50), np.linspace(-1.0, 1.0, 50)])
    worst = 0.0
    for a in (0.8, 1.2):
        q = SpectralField.constant(a, 256)
        frame = ZakharovShabat.discriminant_frame(q, lams, a)
        worst = max(worst, float(frame["abs_error"].max()))
    return OracleResult.below("plane_wave_discriminant", worst, 1e-8)


def _oracle_double_points() -> OracleResult:
    worst = 0.0
    for a in (0.8, 1.2):
        q = SpectralField.constant(a, 128)
        exact = [1j * math.sqrt(a**2 - 0.25)] + ([1j * math.sqrt(a**2 - 1)] if a > 1 else [])
        for lam in exact:
            point = ZakharovShabat.refine_critical_point(q, lam + 0.01)
            worst = max(worst, abs(point.lam - lam))
    return OracleResult.below("double_point_location", worst, 1e-8)


def _oracle_gradient_grid_points() -> OracleResult:
    p = Params(omega=0.8)
    d = DarbouxData.build(0.8)
    q = HomoclinicOrbits.homoclinic_one_pair(0.3 / (2 * d.sigma), 64, d, p)
    return OracleResult.below("gradient_grid_points", ZakharovShabat.grid_gradient_error(q, d.nu),
                              1e-4)


def _orbit_residual(pairs: int, t: float, n: int, d: DarbouxData, p: Params) -> float:
    return HomoclinicOrbits.nls_residual(lambda s: HomoclinicOrbits.orbit(pairs, s, n, d, p), t, p)


def _oracle_grid_doubling(n: int = 256) -> OracleResult:
    """Each acceptance quantity recomputed at 2N moves by less than 1e-8."""
    gaps = {}

    p = Params(omega=0.8)
    quad = QuadratureSpec(t_max_factor=20.0, nodes_per_unit=16, x_grid=n)
    kappas = [MelnikovIntegrals.kappa(MelnikovIntegrals.melnikov_one_pair(p, spec, certify=False))
              for spec in (quad, quad.refined(x_grid=True))]
    gaps["kappa"] = abs(kappas[1] - kappas[0])

    worst = 0.0
    for a in (0.8, 1.2):
        seed = 1j * math.sqrt(a**2 - 0.25) + 0.01
        coarse, fine = (ZakharovShabat.refine_critical_point(SpectralField.constant(a, m), seed)
                        for m in (n, 2 * n))
        worst = max(worst, abs(coarse.lam - fine.lam))
    gaps["double_points"] = worst

    worst = 0.0
    for pairs, omega in ((1, 0.8), (2, 1.2)):
        pp = Params(omega=omega)
        d = DarbouxData.build(omega)
        for tau in (-1.0, 0.0, 2.0):
            t = tau / (2 * d.sigma)
            worst = max(worst, abs(_orbit_residual(pairs, t, 2 * n, d, pp)
                                   - _orbit_residual(pairs, t, n, d, pp)))
    gaps["orbit_residuals"] = worst

    d = DarbouxData.build(0.8)
    t = 0.3 / (2 * d.sigma)
    lams = np.array([0.3j, 0.2 + 0.5j, -0.4, 0.7])
    coarse, fine = (ZakharovShabat.floquet_discriminant(
        HomoclinicOrbits.homoclinic_one_pair(t, m, d, p), lams) for m in (n, 2 * n))
    gaps["floquet_delta"] = float(np.max(np.abs(fine - coarse)))

    details = {"N": n, **{k: float(v) for k, v in gaps.items()}}
    return OracleResult.below("grid_doubling", max(gaps.values()), 1e-8, details)


def _oracle_fish_hamiltonian() -> OracleResult:
    p = Params(omega=0.8, alpha=1.0, beta=2.0)
    theta_star = PlaneDynamics.saddle_angle(p)
    traj = PlaneDynamics.integrate_plane(PlaneState(0.0, -theta_star + 0.3), (0.0, 50.0), p,
                                         "leading", 1e-3, stride=100)
    energy = PlaneDynamics.fish_hamiltonian(traj.first, traj.theta, p)
    return OracleResult.below("fish_hamiltonian_drift", float(np.max(np.abs(energy - energy[0]))),
                              1e-8)


def _oracle_fixed_points() -> OracleResult:
    worst = 0.0
    for eps in EXPANSION_EPSILONS:
        for f in PlaneDynamics.fixed_points(Params(omega=0.8, epsilon=eps)):
            if f.kind.endswith("eps"):
                gap = max(abs(a - b) for a, b in zip(f.eigenvalues, f.numerical_eigenvalues,
                                                     strict=True))
                worst = max(worst, gap / max(1e-6, 10 * eps**2))
    return OracleResult.below("fixed_point_eigenvalues_scaled", worst, 1.0)


def _oracle_fixed_point_expansion() -> OracleResult:
    """|I_Q − ω² + (ε/2ω)√(β² − α²ω²)| ≤ Cε² with C fitted at the largest ε."""
    errors = {}
    for eps in EXPANSION_EPSILONS:
        p = Params(omega=0.8, epsilon=eps)
        q = next(f for f in PlaneDynamics.fixed_points(p) if f.kind == "Q_eps")
        shift = eps / (2 * p.omega) * math.sqrt(p.beta**2 - (p.alpha * p.omega) ** 2)
        errors[eps] = abs(q.I - (p.omega**2 - shift))
    c_fit, growth = _fitted_constant(errors)
    return OracleResult.below("fixed_point_expansion", growth, 2.0,
                              {"C": c_fit, "errors": {str(k): v for k, v in errors.items()}})


def _oracle_darboux() -> OracleResult:
    p = Params(omega=0.8)
    d = DarbouxData.build(0.8, vartheta=0.3)
    worst = 0.0
    for tau in np.linspace(-5, 5, 20):
        t = float(tau / (2 * d.sigma))
        gap = HomoclinicOrbits.homoclinic_one_pair(t, 256, d, p).sup_distance(
            HomoclinicOrbits.homoclinic_one_pair_bd(t, 256, d, p))
        worst = max(worst, gap)
    return OracleResult.below("darboux_one_pair_cross_check", worst, 1e-10)


def _oracle_darboux_two_pair() -> OracleResult:
    p = Params(omega=1.2)
    d = DarbouxData.from_delta_rho(1.2, 0.5)
    worst = 0.0
    for tau in np.linspace(-5, 5, 11):
        t = float(tau / (2 * d.sigma))
        gap = HomoclinicOrbits.homoclinic_two_pair(t, 256, d, p).sup_distance(
            HomoclinicOrbits.homoclinic_two_pair_closed(t, 256, d, p))
        worst = max(worst, gap)
    return OracleResult.below("darboux_two_pair_cross_check", worst, 1e-8)


def _oracle_orbit_residuals() -> OracleResult:
    worst = 0.0
    for pairs, omega, tol in ((1, 0.8, 1e-6), (2, 1.2, 1e-5)):
        p = Params(omega=omega)
        d = DarbouxData.build(omega)
        for tau in (-5.0, -1.0, 0.0, 2.0, 5.0):
            t = tau / (2 * d.sigma)
            worst = max(worst, _orbit_residual(pairs, t, 256, d, p) / tol)
    return OracleResult.below("orbit_nls_residual_scaled", worst, 1.0)


def _oracle_asymptotic_phases() -> OracleResult:
    worst = 0.0
    for pairs, omega in ((1, 0.8), (2, 1.2)):
        p = Params(omega=omega)
        d = DarbouxData.build(omega)
        total = d.theta0 + (d.theta0_hat if pairs == 2 else 0.0)
        for sign in (-1, 1):
            t = sign * 40.0 / (2 * d.sigma)
            if pairs == 1:
                q = HomoclinicOrbits.homoclinic_one_pair(t, 256, d, p)
            else:
                q = HomoclinicOrbits.homoclinic_two_pair_closed(t, 256, d, p)
            qc = HomoclinicOrbits.plane_wave(t, 256, d.a, p)
            target = qc.values * np.exp(-2j * sign * total)
            worst = max(worst, float(np.max(np.abs(q.values - target))))
    return OracleResult.below("asymptotic_phases", worst, 1e-10)


def _oracle_melnikov_vector() -> OracleResult:
    p = Params(omega=0.8)
    d = DarbouxData.build(0.8)
    t = 0.3 / (2 * d.sigma)
    q = HomoclinicOrbits.homoclinic_one_pair(t, 64, d, p)
    explicit = HomoclinicOrbits.melnikov_vector_explicit(t, 64, d, p)
    generic = ZakharovShabat.melnikov_vector_generic(q, d.nu)
    scale = max(float(np.max(np.abs(g))) for g in generic)
    gap = max(float(np.max(np.abs(a - b))) for a, b in zip(explicit, generic, strict=True))
    return OracleResult.below("melnikov_vector_explicit_vs_monodromy", gap / scale, 1e-4)


def _oracle_isospectrality() -> OracleResult:
    p = Params(omega=0.8)
    d = DarbouxData.build(0.8)
    q0 = HomoclinicOrbits.homoclinic_one_pair(-5.0 / (2 * d.sigma), 128, d, p)
    traj = PDEEvolution.evolve_nls(q0, EvolutionSpec(dt=1e-4, t_end=1.0, record_stride=10000), p)
    lams = np.array([0.3j, 0.2 + 0.5j, -0.4, 0.7, 0.1 + 0.9j])
    before = ZakharovShabat.floquet_discriminant(q0, lams)
    after = ZakharovShabat.floquet_discriminant(traj.final, lams)
    return OracleResult.below("isospectrality", float(np.max(np.abs(after - before))), 1e-6)


def _oracle_mass() -> OracleResult:
    p = Params(omega=0.8)
    d = DarbouxData.build(0.8)
    q0 = HomoclinicOrbits.homoclinic_one_pair(-5.0 / (2 * d.sigma), 128, d, p)
    traj = PDEEvolution.evolve_nls(q0, EvolutionSpec(dt=1e-3, t_end=10.0, record_stride=500), p)
    return OracleResult.below("nls_mass_drift", traj.mass_drift, 1e-10)


def _oracle_kappa_closure() -> OracleResult:
    p = Params(omega=0.8)
    frame = MelnikovIntegrals.kappa_curve([0.6, 0.7, 0.8, 0.9], p, certify=False)
    return OracleResult.below("kappa_closure_M1", float(frame["closure"].abs().max()), 1e-8)


def _oracle_two_pair_surface() -> OracleResult:
    """ω = 1.2, Δρ = 0.5: (M₁, M₂, d̃) closure below 1e-6, Jacobian condition below 1e6."""
    quad = QuadratureSpec(t_max_factor=20.0, nodes_per_unit=16, x_grid=128)
    frame = MelnikovIntegrals.existence_surface_report([1.2], Params(omega=1.2), pairs=2,
                                                       delta_rho_grid=(0.5,), quad=quad)
    row = frame.iloc[0]
    if not row.get("converged", False):
        return OracleResult("two_pair_surface", math.inf, 1.0, False)
    closure = max(abs(row["M1_residual"]), abs(row["M2_residual"]), abs(row["d_residual"]))
    details = {"closure": float(closure), "condition": float(row["condition"])}
    return OracleResult.below("two_pair_surface", max(closure / 1e-6, row["condition"] / 1e6),
                              1.0, details)


def _oracle_tracking() -> OracleResult:
    p = Params(omega=0.8)
    T = PDEEvolution.default_window_start(p)
    frame = PDEEvolution.tracking_experiment([1e-2, 1e-3, 1e-4], T, p)
    if "ratio" not in frame or frame["status"].ne("ok").any():
        return OracleResult("tracking_ratio_spread", math.inf, 10.0, False)
    return OracleResult.below("tracking_ratio_spread",
                              float(frame["ratio"].max() / frame["ratio"].min()), 10.0)


QUICK_SUITE = (
    _oracle_field_round_trip,
    _oracle_eigenfunctions,
    _oracle_normal_form,
    _oracle_normal_form_expansion,
    _oracle_normal_form_unperturbed,
    _oracle_plane_discriminant,
    _oracle_double_points,
    _oracle_gradient_grid_points,
    _oracle_grid_doubling,
    _oracle_fish_hamiltonian,
    _oracle_fixed_points,
    _oracle_fixed_point_expansion,
)
FULL_SUITE = QUICK_SUITE + (
    _oracle_darboux,
    _oracle_darboux_two_pair,
    _oracle_orbit_residuals,
    _oracle_asymptotic_phases,
    _oracle_melnikov_vector,
    _oracle_isospectrality,
    _oracle_mass,
    _oracle_kappa_closure,
    _oracle_two_pair_surface,
    _oracle_tracking,
)


def _guarded(oracle) -> OracleResult:
    name = oracle.__name__.removeprefix("_oracle_")
    try:
        return oracle()
    except (HomoclinicError, ValueError, RuntimeError) as e:
        logger.warning("Oracle %s raised: %s", name, e)
        return OracleResult(name, math.inf, 0.0, False)


def run_verify(full: bool = False, executor=None) -> list[OracleResult]:
    suite = FULL_SUITE if full else QUICK_SUITE
    mapper = executor.map if executor is not None else map
    return list(mapper(_guarded, suite))


def cmd_verify(config: RunConfig, options: dict, executor) -> CommandResult:
    full = bool(options.get("full"))
    results = run_verify(full, executor)
    frame = pd.DataFrame([r.row() for r in results])
    certificates = {r.name: r.details for r in results if r.details}
    return CommandResult(frames={"verify": frame}, oracles=results, certificates=certificates,
                         summary={"suite": "full" if full else "quick"})


HANDLERS = {
    "plane-portrait": cmd_plane_portrait,
    "fish": cmd_fish,
    "spectrum": cmd_spectrum,
    "normal-form-scan": cmd_normal_form_scan,
    "floquet": cmd_floquet,
    "homoclinic": cmd_homoclinic,
    "melnikov-kappa": cmd_melnikov_kappa,
    "melnikov-surface": cmd_melnikov_surface,
    "second-distance": cmd_second_distance,
    "evolve": cmd_evolve,
    "track": cmd_track,
    "verify": cmd_verify,
}
RANGE_OPTIONS = {"normal-form-scan": ("omega",), "melnikov-kappa": ("omega",),
                 "melnikov-surface": ("omega",)}


def execute(command: str, config: RunConfig, options: dict, out_dir: Path,
            threads: int = 1) -> RunManifest:
    """Runs one subcommand and writes its artifacts; no exit handling."""
    if command not in HANDLERS:
        raise ConfigError(f"Unknown command '{command}' (choose from {', '.join(COMMANDS)}).")
    config = apply_overrides(config, options, RANGE_OPTIONS.get(command, ()))
    clean_options = {k: v for k, v in sorted(options.items()) if v is not None}
    manifest = RunManifest(
        command=command,
        parameters=asdict(config.params),
        specs={"grid": asdict(config.grid), "quadrature": asdict(config.quadrature),
               "evolution": asdict(config.evolution)},
        options=clean_options,
    )
    print_run_header(command, config.params)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            result = HANDLERS[command](config, options, pool)
    else:
        result = HANDLERS[command](config, options, None)

    paths = []
    for name, frame in result.frames.items():
        path = write_frame(frame, out_dir, f"{command.replace('-', '_')}_{name}")
        paths.append(path)
        manifest.outputs.append({"file": path.name, "sha256": content_hash(path.read_text())})
    manifest.oracles = list(result.oracles)
    manifest.certificates = result.certificates
    paths.append(write_json(manifest.to_dict(), out_dir, f"{command.replace('-', '_')}_manifest"))

    print_summary(result.summary)
    print_oracle_report(manifest.oracles)
    print_artifacts(paths)
    return manifest


def run(command: str, config_path: str | None = None, out: str | None = None,
        threads: int = 1, options: dict | None = None) -> int:
    """
    Main flow: Config -> Command -> Artifacts -> Manifest.
    Exits 1 on errors and on failed oracles.
    """
    print(f"--- 🚀 NLS HOMOCLINIC: {command} ---")
    try:
        config = config_load(config_path)
        manifest = execute(command, config, options or {}, resolve_out_dir(out), threads)
    except (HomoclinicError, ValueError, RuntimeError) as e:
        print(f"❌ CRITICAL ERROR: {str(e)}")
        sys.exit(1)

    if not manifest.passed:
        sys.exit(1)
    return 0
