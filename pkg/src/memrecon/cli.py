"""Command line entry points.

    memrecon solve        --config c.toml --out dir [--seed N]
    memrecon rate-n       --config c.toml --out dir [--seed N]
    memrecon rate-m       --config c.toml --out dir [--seed N]
    memrecon feasibility  --config c.toml --out dir [--seed N]
    memrecon demo-deconv  --config c.toml --out dir [--seed N]

Exit codes: 0 success, 2 infeasible problem, 3 solver non-convergence
above the exclusion budget, 4 configuration error.
"""

import argparse
import json
import os
import sys

from . import config as config_mod
from . import dual, experiments, measures, reconstruction
from .config import ConfigError
from .dual import AT_ORIGIN, CONVERGED, INFEASIBLE_DIRECTION
from .experiments import StudyError

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NONCONVERGED = 3
EXIT_CONFIG = 4


def _write_summary(out_dir, payload):
    with open(os.path.join(out_dir, "summary.json"), "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _cmd_solve(cfg, out_dir):
    prior = cfg.prior_measure()
    prob = experiments.generate_problem(cfg, cfg.n, rep=0)
    problem = dual.DualProblem(
        phi_matrix=prob.phi_matrix,
        y_obs=prob.observation.y_obs,
        eta=cfg.eta,
        prior=prior,
    )
    trace = os.path.join(out_dir, "trace.csv")
    sol = dual.solve(
        problem, tolerance=cfg.tolerance, max_iters=cfg.max_iters, trace_path=trace
    )
    if sol.status == INFEASIBLE_DIRECTION:
        print("solve: infeasible problem (objective unbounded along a ray)")
        return EXIT_INFEASIBLE
    estimate = reconstruction.amem_estimate(sol.v_hat, prob.atoms, prob.phi_matrix, prior)
    res = reconstruction.residual(estimate, prob.phi_matrix, prob.observation)
    ent = measures.entropy(estimate, prior)
    measures.to_csv(estimate, os.path.join(out_dir, "estimate.csv"))
    reconstruction.write_summary(
        os.path.join(out_dir, "summary.json"),
        study="solve",
        status=sol.status,
        objective=sol.objective_value,
        grad_norm=sol.grad_norm,
        iterations=sol.iterations,
        residual=res,
        entropy=ent,
        v_hat=sol.v_hat,
    )
    print(
        f"solve: status={sol.status} iters={sol.iterations} "
        f"residual={res:.3e} entropy={ent:.6g}"
    )
    if sol.status not in (CONVERGED, AT_ORIGIN):
        return EXIT_NONCONVERGED
    return EXIT_OK


def _cmd_rate(cfg, out_dir, which):
    study = experiments.rate_study_n(cfg) if which == "n" else experiments.rate_study_m(cfg)
    experiments.write_records(os.path.join(out_dir, "records.csv"), study.records)
    _write_summary(out_dir, study.summary())
    print(
        f"rate-{which}: slope={study.slope:.4f} r2={study.r2:.4f} "
        f"exclusions={study.exclusions}"
    )
    return EXIT_OK


def _cmd_feasibility(cfg, out_dir):
    report = experiments.feasibility_study(cfg)
    experiments.write_records(os.path.join(out_dir, "records.csv"), report.records)
    _write_summary(out_dir, report.summary())
    for (n, h), freq in zip(report.cells, report.frequencies):
        tag = f"n={n}" if h is None else f"n={n} h={h}"
        print(f"feasibility: {tag} frequency={freq:.4f}")
    return EXIT_OK


def _cmd_demo(cfg, out_dir):
    result = experiments.demo_deconv(cfg)
    measures.to_csv(result.estimate, os.path.join(out_dir, "estimate.csv"))
    measures.to_csv(result.truth, os.path.join(out_dir, "truth.csv"))
    experiments.write_records(os.path.join(out_dir, "records.csv"), result.records)
    _write_summary(out_dir, result.summary())
    print(
        f"demo-deconv: status={result.status} tv_error={result.tv_error:.4f} "
        f"residual={result.residual:.3e}"
    )
    if result.status == INFEASIBLE_DIRECTION:
        return EXIT_INFEASIBLE
    if result.status not in (CONVERGED, AT_ORIGIN):
        return EXIT_NONCONVERGED
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="memrecon", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "rate-n", "rate-m", "feasibility", "demo-deconv"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load(args.config, seed_override=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(args.out, exist_ok=True)
    try:
        if args.command == "solve":
            return _cmd_solve(cfg, args.out)
        if args.command == "rate-n":
            return _cmd_rate(cfg, args.out, "n")
        if args.command == "rate-m":
            return _cmd_rate(cfg, args.out, "m")
        if args.command == "feasibility":
            return _cmd_feasibility(cfg, args.out)
        if args.command == "demo-deconv":
            return _cmd_demo(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StudyError as exc:
        print(f"study failed: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
