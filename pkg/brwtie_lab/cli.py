"""
Command-line front end.

    brwtie speed      --env configs/gaussian_decreasing.toml
    brwtie constants  --env configs/homogeneous_unit.toml
    brwtie psi        --h 0 0.5 1
    brwtie pde        --h 1 --domain interval
    brwtie simulate   --env configs/simulate_binary.toml --trials 50
    brwtie verify     --profile quick

Exit status 0 on success, 1 on a numeric failure, 2 on a configuration error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv

from brwtie_lab.airy import psi
from brwtie_lab.errors import (
    EXIT_CONFIG_ERROR,
    BrwLabError,
    ConfigError,
    ConvergenceError,
    VerificationError,
)
from brwtie_lab.logging_config import configure_logging
from brwtie_lab.ode import (
    cmd_spec,
    find_lambda_c,
    find_lambda_star,
    optimal_path_spec,
    selection_frontier,
    sweep_lambda,
    write_ode_solution,
)
from brwtie_lab.optimal_path import (
    check_optimality,
    solve_optimal_profile,
    write_optimal_path,
)
from brwtie_lab.pde import run_feynman_kac, write_pde_run
from brwtie_lab.reporting import config_hash, write_csv, write_json
from brwtie_lab.settings import (
    ExperimentConfig,
    build_environment,
    killing_set,
    load_config,
)
from brwtie_lab.simulate import (
    BrwConfig,
    PopulationControl,
    brw_run,
    collect,
    write_trials,
)
from brwtie_lab.verify import run_checks

logger = logging.getLogger(__name__)


def _emit(report: Dict[str, Any]) -> None:
    print(json.dumps(report, indent=2, sort_keys=True, default=str))


def _load(
    args: argparse.Namespace, required: bool = True
) -> Optional[ExperimentConfig]:
    if args.env is None:
        if required:
            raise ConfigError(f"{args.command} needs --env")
        return None
    config = load_config(args.env)
    return config.with_overrides(
        seed=args.seed,
        output_dir=args.out,
        **{
            "speed.grid": args.grid,
            "speed.tol": args.tol,
            "simulate.trials": args.trials,
        },
    )


def _out_dir(args: argparse.Namespace, config: Optional[ExperimentConfig]) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(config.output_dir if config else "results")


def _hash(config: Optional[ExperimentConfig], args: argparse.Namespace) -> str:
    if config is not None:
        return config_hash(config)
    return config_hash({k: v for k, v in vars(args).items() if k != "handler"})


def _solve_path(config: ExperimentConfig, out: Path, digest: str):
    env = build_environment(config.environment)
    try:
        path = solve_optimal_profile(env, config.speed.grid, config.speed.method)
    except ConvergenceError as exc:
        write_json(
            out / "optimal_path_residuals.json",
            {"message": exc.message, "residuals": exc.residuals},
            digest,
        )
        raise
    return env, path


def cmd_speed(args: argparse.Namespace) -> int:
    """Natural speed, optimal profile, contact set and optimality report."""
    config = _load(args)
    out, digest = _out_dir(args, config), _hash(config, args)
    env, path = _solve_path(config, out, digest)
    t = path.grid
    speed, theta_bar = env.natural_speed_fields()
    write_csv(
        out / "natural_speed.csv",
        {"t": t, "v": speed(t), "theta_bar": theta_bar(t)},
        digest,
    )
    write_optimal_path(path, out, digest)
    kkt = check_optimality(env, path, config.speed.tol)
    _emit(
        {
            "v_star": path.v_star,
            "l_star": path.l_star,
            "contact_set": list(path.contact_set.intervals),
            "kkt": kkt.residuals(),
            "kkt_passed": kkt.passed,
        }
    )
    return 0


def _homogeneous_lambda_star(env, path) -> Optional[float]:
    if not env.is_homogeneous():
        return None
    theta = float(path.theta(0.0))
    variance = float(env.d2_kappa(0.0, theta))
    return float((3.0 * np.pi**2 * variance / (2.0 * theta)) ** (1.0 / 3.0))


def cmd_constants(args: argparse.Namespace) -> int:
    """l*, lambda_c, lambda* and the selection frontier g^0_1."""
    config = _load(args)
    out, digest = _out_dir(args, config), _hash(config, args)
    env, path = _solve_path(config, out, digest)
    l_star = float(path.l_star)

    consistent = cmd_spec(env, path, mu=config.constants.mu)
    lam_c = find_lambda_c(consistent)
    lam_star = find_lambda_star(consistent, l_star)
    frontier = selection_frontier(optimal_path_spec(env, path))
    closed = _homogeneous_lambda_star(env, path)

    report = {
        "l_star": l_star,
        "lambda_c": lam_c,
        "lambda_star": lam_star,
        "g0_1": frontier,
        "mu": config.constants.mu,
        "lambda_star_closed_form": closed,
    }
    write_json(out / "constants.json", report, digest)
    if config.constants.lambdas:
        for solution in sweep_lambda(consistent, config.constants.lambdas):
            write_ode_solution(solution, out, digest)
    _emit(report)

    if lam_star < -l_star - 1e-6:
        raise VerificationError(
            f"lambda* = {lam_star:.8g} is below -l* = {-l_star:.8g}"
        )
    return 0


def _psi_grid(
    args: argparse.Namespace, config: Optional[ExperimentConfig]
) -> List[float]:
    if args.h:
        return list(args.h)
    if args.h_range:
        start, stop, num = args.h_range
        return list(np.linspace(start, stop, int(num)))
    return list(config.psi.h) if config else [0.0]


def cmd_psi(args: argparse.Namespace) -> int:
    """Psi on a list or range of h."""
    config = _load(args, required=False)
    out, digest = _out_dir(args, config), _hash(config, args)
    h = np.asarray(_psi_grid(args, config), dtype=float)
    values = np.asarray(psi(h), dtype=float).reshape(h.shape)
    write_csv(out / "psi.csv", {"h": h, "psi": values}, digest)
    for row in zip(h, values):
        print(f"{row[0]:.12g},{row[1]:.12g}")
    return 0


def cmd_pde(args: argparse.Namespace) -> int:
    """Feynman-Kac decay rate and profile."""
    config = _load(args, required=False)
    out, digest = _out_dir(args, config), _hash(config, args)
    section = config.pde if config else None
    h_values = args.h or (section.h if section else [1.0])
    domain = args.domain or (section.domain if section else "interval")
    resolution = args.resolution or (section.resolution if section else 1.0)
    length = section.length if section else None

    report = []
    for h in h_values:
        run = run_feynman_kac(h, domain, resolution, length)
        write_pde_run(run, out, digest)
        report.append({"h": h, "domain": domain, "decay_rate": run.decay_rate})
    _emit({"runs": report})
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    """Branching random walk trials against the optimal path."""
    config = _load(args)
    if config.seed is None:
        raise ConfigError("simulate needs a seed (config `seed` or --seed)")
    out, digest = _out_dir(args, config), _hash(config, args)
    env, path = _solve_path(config, out, digest)
    section = config.simulate

    control = PopulationControl(
        mode=section.mode,
        barrier=section.barrier.build() if section.barrier else None,
        F=killing_set(section),
        **({"max_pop": section.max_pop} if section.max_pop else {}),
    )
    brw = BrwConfig(
        env=env,
        n=section.n,
        population_control=control,
        trials=section.trials,
        seed=config.seed,
    )
    result = collect(brw, brw_run(brw, path.a))
    write_trials(result, out, digest)
    maxima = result.max_displacements()
    _emit(
        {
            "n": brw.n,
            "trials": brw.trials,
            "completed": len(result.completed),
            "survival_rate": result.survival_rate(),
            "mean_max_displacement_over_n": (
                float(maxima.mean()) / brw.n if maxima.size else None
            ),
            "v_star": path.v_star,
        }
    )
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    """Acceptance suite; nonzero exit on any failure."""
    config = _load(args, required=False)
    out, digest = _out_dir(args, config), _hash(config, args)
    profile = args.profile or (config.verify.profile if config else "quick")
    seed = args.seed if args.seed is not None else (config.seed if config else 0)
    results = run_checks(profile, seed or 0)
    write_json(out / "verify.json", {"profile": profile, "checks": results}, digest)
    failed = [r.name for r in results if not r.passed]
    _emit({"profile": profile, "passed": not failed, "failed": failed})
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--env", type=Path, help="experiment config (TOML or JSON)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="Monte Carlo seed")
    common.add_argument("--grid", type=int, help="optimal-path grid size")
    common.add_argument("--tol", type=float, help="optimality tolerance")
    common.add_argument("--trials", type=int, help="Monte Carlo trials")

    parser = argparse.ArgumentParser(
        prog="brwtie",
        description="Branching random walks in time-inhomogeneous environments",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("speed", parents=[common]).set_defaults(handler=cmd_speed)
    commands.add_parser("constants", parents=[common]).set_defaults(
        handler=cmd_constants
    )

    psi_parser = commands.add_parser("psi", parents=[common])
    psi_parser.add_argument("--h", type=float, nargs="+")
    psi_parser.add_argument(
        "--h-range", type=float, nargs=3, metavar=("START", "STOP", "NUM")
    )
    psi_parser.set_defaults(handler=cmd_psi)

    pde_parser = commands.add_parser("pde", parents=[common])
    pde_parser.add_argument("--h", type=float, nargs="+")
    pde_parser.add_argument("--domain", choices=("interval", "halfline"))
    pde_parser.add_argument("--resolution", type=float)
    pde_parser.set_defaults(handler=cmd_pde)

    commands.add_parser("simulate", parents=[common]).set_defaults(
        handler=cmd_simulate
    )

    verify_parser = commands.add_parser("verify", parents=[common])
    verify_parser.add_argument("--profile", choices=("quick", "full"))
    verify_parser.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except BrwLabError as exc:
        logger.error("%s failed: %s", args.command, exc.message)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
