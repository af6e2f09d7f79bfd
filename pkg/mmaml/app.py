# This file is the main entry point for the command line.
# It sets up logging, resolves the experiment settings and dispatches to a subcommand.
#

import argparse
import sys
from pathlib import Path

import yaml

if not __package__:
    project_root = Path(__file__).resolve().parent.parent
    if str(project_root) not in sys.path:
        sys.path.insert(0, str(project_root))

from mmaml.config import EXIT_CHECK_FAILED, EXIT_CONFIG_ERROR, EXIT_DIVERGED, EXIT_OK
from mmaml.errors import DivergenceError, MamlError
from mmaml.logger import APP_DATA_DIR, logger, setup_logger
from mmaml.queue_manager import SweepQueue
from mmaml.settings_manager import ExperimentSettings
from mmaml.tasks import (
    SamplingCase,
    load_family,
    make_finite_sum_mse,
    make_quadratic_family,
    make_trig_family,
    save_family,
)
from mmaml.theory import (
    StepsizePlan,
    constants_for,
    corollary1_batch_sizes,
    default_alpha,
    inner_stepsize_bound,
    smoothness_constants,
)
from mmaml.trainer import RunConfig, attach_theorem_bound, run_maml, save_run
from mmaml.utils import ensure_dir
from mmaml.verifier import VerifyConfig, format_reports, run_suite, suite_passed, write_reports
from mmaml.workers import run_jobs

VERSION_FILE = Path(__file__).resolve().parent.parent / "VERSION.txt"


def read_version():
    try:
        return VERSION_FILE.read_text(encoding="utf-8").strip() or "unknown"
    except OSError:
        return "unknown"


# ---------------------------------------------------------------------------
# Settings -> domain objects
# ---------------------------------------------------------------------------

def build_family(values):
    path = values["family/path"]
    if path:
        logger.info("Loading task family from %s", path)
        return load_family(path)

    kind = values["family/kind"]
    common = {
        "d": values["family/d"],
        "num_tasks": values["family/num_tasks"],
        "R": values["family/radius"],
        "seed": values["family/seed"],
    }
    if kind == "quadratic":
        return make_quadratic_family(
            L_target=values["family/L_target"], sigma=values["family/sigma"],
            sigma_g=values["family/sigma_g"], sigma_H=values["family/sigma_H"], **common,
        )
    if kind == "trig":
        return make_trig_family(
            c_max=values["family/c_max"], a_max=values["family/a_max"], lam=values["family/lam"],
            sigma_g=values["family/sigma_g"], sigma_H=values["family/sigma_H"], **common,
        )
    return make_finite_sum_mse(
        support_size=values["family/support_size"], query_size=values["family/query_size"],
        noise_std=values["family/noise_std"], **common,
    )


def resolve_alpha(value, N, L):
    """``auto`` means 1/(8NL); with N = 0 there is no inner loop and alpha is 0."""
    if value == "auto":
        return default_alpha(N, L) if N >= 1 else 0.0
    return float(value)


def build_run_config(values, dist):
    N = values["run/N"]
    return RunConfig(
        case=dist.case,
        N=N,
        K=values["run/K"],
        B=values["run/B"],
        alpha=resolve_alpha(values["run/alpha"], N, dist.profile.L),
        C_beta=values["run/C_beta"],
        seed=values["run/seed"],
        S=values["run/S"],
        D=values["run/D"],
        T=values["run/T"],
        Bprime=values["run/Bprime"],
        DL=values["run/DL"],
        record_exact_grad=values["run/record_exact_grad"],
        allow_unsafe_alpha=values["run/allow_unsafe_alpha"],
        init_radius_fraction=values["run/init_radius_fraction"],
        workers=values["run/workers"],
        zeta_draws=values["run/zeta_draws"],
    )


def build_verify_config(values, dist):
    N = values["run/N"]
    return VerifyConfig(
        alpha=resolve_alpha(values["run/alpha"], N, dist.profile.L),
        N=N,
        C_beta=values["run/C_beta"],
        S=values["run/S"],
        D=values["run/D"],
        T=values["run/T"],
        B=values["run/B"],
        Bprime=values["run/Bprime"],
        DL=values["run/DL"],
        path_trials=values["verify/path_trials"],
        bias_trials=values["verify/bias_trials"],
        stepsize_trials=values["verify/stepsize_trials"],
        lemma_trials=values["verify/lemma_trials"],
        smoothness_pairs=values["verify/smoothness_pairs"],
        fd_points=values["verify/fd_points"],
        slope_S=values["verify/slope_S"],
        slope_trials=values["verify/slope_trials"],
        path_factor=values["verify/path_factor"],
        seed=values["run/seed"],
        workers=values["run/workers"],
    )


def load_settings(args):
    settings = ExperimentSettings(args.config) if args.config else ExperimentSettings()
    shorthands = []
    if args.seed is not None:
        shorthands.append(f"run/seed={args.seed}")
    if args.workers is not None:
        shorthands.append(f"run/workers={args.workers}")
    if args.allow_unsafe_alpha:
        shorthands.append("run/allow_unsafe_alpha=true")
    settings.apply_overrides(list(args.set or []) + shorthands)
    return settings


def output_dir(args):
    return ensure_dir(args.out if args.out else APP_DATA_DIR / "output" / args.command)


def _dump(document):
    sys.stdout.write(yaml.safe_dump(document, sort_keys=False, default_flow_style=None, width=120))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_make_family(args):
    settings = load_settings(args)
    values = settings.load()
    out = output_dir(args)
    dist = build_family(values)
    path = save_family(dist, out / "family.yaml")
    settings.save_resolved(out)
    logger.info("Wrote task family to %s", path)
    _dump({"family": dist.family.value, "case": dist.case.value, "d": dist.dim, "tasks": len(dist),
           "profile": dist.profile.to_document(), "path": str(path)})
    return EXIT_OK


def cmd_run(args):
    settings = load_settings(args)
    values = settings.load()
    out = output_dir(args)
    dist = build_family(values)
    config = build_run_config(values, dist)
    metrics = run_maml(config, dist)
    if not metrics.diverged:
        attach_theorem_bound(metrics, dist)
    save_run(metrics, out)
    save_family(dist, out / "family.yaml")
    settings.save_resolved(out)

    summary = metrics.summary()
    _dump({key: summary[key] for key in ("K_completed", "zeta_grad_norm", "initial_grad_norm",
                                         "final_grad_norm", "theorem_rhs", "diverged")})
    if metrics.diverged and not config.allow_unsafe_alpha:
        logger.error("Run diverged at k=%s; pass --allow-unsafe-alpha to accept diverging runs",
                     metrics.divergence_step)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_verify(args):
    settings = load_settings(args)
    values = settings.load()
    out = output_dir(args)
    dist = build_family(values)
    reports = run_suite(dist, build_verify_config(values, dist))
    write_reports(reports, out / "reports.csv")
    settings.save_resolved(out)
    sys.stdout.write(format_reports(reports) + "\n")
    return EXIT_OK if suite_passed(reports) else EXIT_CHECK_FAILED


def cmd_constants(args):
    settings = load_settings(args)
    values = settings.load()
    dist = build_family(values)
    N = values["run/N"]
    alpha = resolve_alpha(values["run/alpha"], N, dist.profile.L)
    unsafe = N > 0 and alpha >= inner_stepsize_bound(N, dist.profile.L)
    if unsafe and values["run/allow_unsafe_alpha"]:
        constants = smoothness_constants(dist.profile, dist.case, alpha, N, values["run/C_beta"], values["run/B"])
        plan = None
    else:
        constants = constants_for(dist.profile, dist.case, alpha, N, values["run/C_beta"], values["run/B"],
                                  S=values["run/S"], D=values["run/D"], T=values["run/T"])
        plan = StepsizePlan.from_constants(constants)

    document = {"profile": dist.profile.to_document(), "constants": constants.to_document()}
    if plan is not None:
        document["plan"] = {"alpha": plan.alpha, "alpha_max": plan.alpha_max, "C_beta": plan.C_beta,
                            "Bprime_min": plan.Bprime_min, "DL_min": plan.DL_min}
    if dist.case is SamplingCase.RESAMPLING and dist.profile.L > 0:
        S_min, D_min = corollary1_batch_sizes(dist.profile)
        document["batch_sizes"] = {"S_min": S_min, "D_min": D_min}
    _dump(document)
    if args.out:
        out = ensure_dir(args.out)
        with open(out / "constants.yaml", "w", encoding="utf-8") as handle:
            yaml.safe_dump(document, handle, sort_keys=False)
        settings.save_resolved(out)
    return EXIT_OK


def _sweep_point(values, point, dist, out):
    point_values = dict(values)
    for axis, value in point.items():
        point_values["run/" + axis] = value
    # points already run side by side
    point_values["run/workers"] = 1
    config = build_run_config(point_values, dist)
    metrics = run_maml(config, dist)
    if not metrics.diverged:
        attach_theorem_bound(metrics, dist)
    save_run(metrics, out)
    return {
        "final_grad_norm": metrics.final_grad_norm,
        "zeta_grad_norm": metrics.zeta_grad_norm,
        "theorem_rhs": metrics.theorem_rhs,
        "grad_evals_per_iter": metrics.grad_evals_per_iter(),
        "hess_evals_per_iter": metrics.hess_evals_per_iter(),
        "diverged": metrics.diverged,
    }


def cmd_sweep(args):
    settings = load_settings(args)
    values = settings.load()
    queue = SweepQueue.from_axes(settings.sweep_axes())
    out = output_dir(args)
    dist = build_family(values)
    # fail on a bad base config before any point starts
    build_run_config(values, dist)
    logger.info("Sweep over %s: %s points", ", ".join(queue.axes), len(queue))

    jobs = [
        (lambda point=item["point"], index=index: _sweep_point(values, point, dist, out / "points" / f"{index:04d}"))
        for index, item in enumerate(queue.get_all())
    ]
    for index, result in enumerate(run_jobs(jobs, values["run/workers"])):
        queue.set_result(index, result)

    queue.to_csv(out / "sweep.csv")
    save_family(dist, out / "family.yaml")
    settings.save_resolved(out)
    sys.stdout.write(queue.to_frame().to_string(index=False) + "\n")

    diverged = queue.count_status("diverged")
    if diverged and not values["run/allow_unsafe_alpha"]:
        logger.error("%s sweep points diverged", diverged)
        return EXIT_DIVERGED
    return EXIT_OK


COMMANDS = {
    "make-family": cmd_make_family,
    "run": cmd_run,
    "verify": cmd_verify,
    "constants": cmd_constants,
    "sweep": cmd_sweep,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="mmaml", description="Multi-step MAML experiments and bound checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {read_version()}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment INI file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", metavar="GROUP/KEY=VALUE", help="override a config key")
    common.add_argument("--seed", type=int, help="shorthand for --set run/seed=...")
    common.add_argument("--workers", type=int, help="shorthand for --set run/workers=...")
    common.add_argument("--allow-unsafe-alpha", action="store_true",
                        help="run with an inner stepsize above the safe bound")
    common.add_argument("-v", "--verbose", action="store_true", help="log INFO to the console")

    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("make-family", parents=[common], help="build a task family and write family.yaml")
    subparsers.add_parser("run", parents=[common], help="train and write metrics.csv and summary.yaml")
    subparsers.add_parser("verify", parents=[common], help="run the bound verification suite")
    subparsers.add_parser("constants", parents=[common], help="print every theoretical constant")
    subparsers.add_parser("sweep", parents=[common], help="run a grid of training runs")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    app_logger = setup_logger(enable_console=True, verbose=args.verbose)
    app_logger.info("mmaml %s starting: %s", read_version(), args.command)

    exit_code = EXIT_CONFIG_ERROR
    try:
        exit_code = COMMANDS[args.command](args)
        return exit_code
    except DivergenceError as e:
        app_logger.error("%s", e)
        exit_code = EXIT_DIVERGED
        return exit_code
    except (MamlError, ValueError, OSError) as e:
        app_logger.error("%s", e)
        exit_code = EXIT_CONFIG_ERROR
        return exit_code
    finally:
        app_logger.info("mmaml exiting (code=%s)", exit_code)


if __name__ == "__main__":
    raise SystemExit(main())
