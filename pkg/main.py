"""
NLS Homoclinic Orbit Toolkit - Entry Point.
"""

import argparse
import logging

from src.controller import run


def _param_flags(parser: argparse.ArgumentParser, omega_help: str = "ω (default from config)"):
    parser.add_argument("--omega", type=str, default=None, help=omega_help)
    parser.add_argument("--alpha", type=float, default=None, help="Damping α")
    parser.add_argument("--beta", type=float, default=None, help="Forcing β")
    parser.add_argument("--epsilon", type=float, default=None, help="Perturbation size ε")
    parser.add_argument("--gamma", type=float, default=None, help="Plane-wave phase γ")
    parser.add_argument("--amplitude", "--a", type=float, default=None,
                        help="Plane-wave amplitude a (default: a = ω)")
    parser.add_argument("--grid", type=int, default=None, help="Grid size N (power of two)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description=(
            "NLS Homoclinic Orbit Toolkit: plane dynamics, normal forms, Floquet theory, "
            "Darboux orbits, Melnikov integrals and PDE tracking for the perturbed NLS."
        )
    )
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--out", type=str, default="results",
                        help="Output directory (NLS_HOMOCLINIC_OUT overrides it)")
    parser.add_argument("--threads", type=int, default=1,
                        help="Worker threads for independent grid points (default: 1)")
    parser.add_argument("--log-level", type=str, default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("plane-portrait", help="Fixed points and a trajectory on the plane Π")
    _param_flags(p)
    p.add_argument("--mode", choices=["full", "rescaled", "leading"], default="leading")
    p.add_argument("--t-span", type=float, default=50.0, help="Integration length")
    p.add_argument("--step", type=float, default=1e-3, help="RK4 step")

    p = sub.add_parser("fish", help="Fish head θ̂ and the separatrix curves")
    _param_flags(p)
    p.add_argument("--points", type=int, default=400)

    p = sub.add_parser("spectrum", help="Spectrum of L_ε")
    _param_flags(p)
    p.add_argument("--k-max", type=int, default=8)

    p = sub.add_parser("normal-form-scan", help="Exceptional ω of the normal-form denominators")
    _param_flags(p, "ω range start:stop:step (default 0.51:1.49:0.01)")
    p.add_argument("--k-max", type=int, default=16)

    p = sub.add_parser("floquet", help="Plane-wave Floquet discriminant and double points")
    _param_flags(p)
    p.add_argument("--points", type=int, default=50)

    p = sub.add_parser("homoclinic", help="Homoclinic orbit snapshots with cross-checks")
    _param_flags(p)
    p.add_argument("--pairs", type=int, choices=[1, 2], default=1)
    p.add_argument("--tau", type=str, default="-5:5:0.5", help="τ values start:stop:step")
    p.add_argument("--even", action="store_true", help="Even orbit: ϑ, ϑ̂ from the double points")
    p.add_argument("--rho", type=float, default=None, help="Time shift ρ (default 0)")
    p.add_argument("--vartheta", type=float, default=None, help="Noneven orbit phase ϑ")
    p.add_argument("--rho-hat", type=float, default=None, help="Second-pair time shift ρ̂")
    p.add_argument("--vartheta-hat", type=float, default=None, help="Second-pair phase ϑ̂")
    p.add_argument("--delta-rho", type=float, default=None,
                   help="Two-pair Δρ; sets ρ̂ from ρ (exclusive with --rho-hat)")

    p = sub.add_parser("melnikov-kappa", help="κ(ω) from the one-pair Melnikov integrals")
    _param_flags(p, "ω range start:stop:step (default 0.55:0.95:0.01)")
    p.add_argument("--no-certify", action="store_true", help="Skip the refinement certificate")

    p = sub.add_parser("melnikov-surface", help="χ̃(ω, Δρ), β(ω, Δρ) for two pairs")
    _param_flags(p, "ω range start:stop:step (default 1.05:1.45:0.05)")
    p.add_argument("--delta-rho", type=str, default=None, help="Δρ range (default -2:2:0.5)")
    p.add_argument("--no-certify", action="store_true", help="Skip the refinement certificate")

    p = sub.add_parser("second-distance", help="Second measurement d̃ on Π")
    _param_flags(p)
    p.add_argument("--theta-shift", type=float, default=None, help="θ₁ (default: Δγ at ω)")
    p.add_argument("--points", type=int, default=200)

    p = sub.add_parser("evolve", help="Split-step evolution of NLS or the perturbed equation")
    _param_flags(p)
    p.add_argument("--equation", choices=["nls", "pnls"], default=None)
    p.add_argument("--init", choices=["plane", "homoclinic-1", "homoclinic-2", "file"],
                   default="homoclinic-1")
    p.add_argument("--init-file", type=str, default=None, help="CSV with re_q, im_q columns")
    p.add_argument("--tau0", type=float, default=None, help="Initial τ on the orbit (default -5)")
    p.add_argument("--delta-rho", type=float, default=None, help="Two-pair Δρ")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--scheme", choices=["strang", "yoshida4"], default=None)

    p = sub.add_parser("track", help="ε|ln ε|² tracking experiment")
    _param_flags(p)
    p.add_argument("--epsilons", type=str, default="1e-2,1e-3,1e-4")
    p.add_argument("--window-start", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)

    p = sub.add_parser("verify", help="Run the oracle suites")
    level = p.add_mutually_exclusive_group()
    level.add_argument("--quick", action="store_true", help="Sub-minute suite (default)")
    level.add_argument("--full", action="store_true", help="Adds PDE, Melnikov and tracking")

    return parser


GLOBAL_KEYS = ("config", "out", "threads", "log_level", "command")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    options = {k: v for k, v in vars(args).items() if k not in GLOBAL_KEYS}

    # Pass control to the Logic Controller in src/
    return run(
        command=args.command,
        config_path=args.config,
        out=args.out,
        threads=args.threads,
        options=options,
    )


if __name__ == "__main__":
    main()
