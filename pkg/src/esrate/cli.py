"""Command-line surface: run, experiment, bounds, verify.

Exit codes: 0 success, 1 configuration/usage error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, harness, rates, theory
from .engine import init_default, params_for_rule, params_for_target, run
from .objectives import sphere

__all__ = ["cli_main", "main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 1
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise _UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="esrate", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="simulate one trajectory and write it as CSV")
    p_run.add_argument("--objective", required=True, choices=harness.OBJECTIVE_KINDS)
    p_run.add_argument("--dim", type=int, required=True)
    p_run.add_argument("--kappa", type=int, default=0)
    p_run.add_argument("--alpha-rule", choices=("const", "sqrt", "dim"), default="const")
    p_run.add_argument("--c", type=float, default=1.0)
    p_run.add_argument("--budget", type=int, default=None)
    p_run.add_argument("--f-floor", type=float, default=1e-100)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", default="trajectory.csv")
    p_run.add_argument("--thin", type=int, default=1)

    p_exp = sub.add_parser("experiment", help="run a config grid; emit CSV and plots")
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--out-dir", required=True)

    p_bounds = sub.add_parser("bounds", help="print the theory constants as JSON")
    p_bounds.add_argument("--dim", type=int, required=True)
    p_bounds.add_argument("--L", type=float, default=1.0)
    p_bounds.add_argument("--U", type=float, default=1.0)
    p_bounds.add_argument("--v-std", type=float, default=0.0)
    p_bounds.add_argument("--kappa-inf", type=float, default=2.0)
    p_bounds.add_argument("--e-q", type=float, default=None,
                          help="mean-curvature supremum; defaults to dim*U")
    p_bounds.add_argument("--alpha-rule", choices=("const", "sqrt", "dim"), default="const")
    p_bounds.add_argument("--c", type=float, default=1.0)
    p_bounds.add_argument("--p-target", type=float, default=None,
                          help="pick alpha_down to hit this success probability")
    p_bounds.add_argument("--q-low", type=float, required=True)
    p_bounds.add_argument("--q-high", type=float, required=True)
    p_bounds.add_argument("--sup", action="store_true",
                          help="also maximise the rate bound over (q_low, q_high)")
    p_bounds.add_argument("--trace-out", default=None,
                          help="CSV path for the grid-search trace (with --sup)")

    p_verify = sub.add_parser("verify", help="run a verification suite; exit 2 on failure")
    p_verify.add_argument("--suite", required=True,
                          choices=("invariance", "lemmas", "assumption2", "drift"))
    p_verify.add_argument("--n", type=int, default=None)
    p_verify.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args) -> int:
    spec = harness.objective_for(args.objective, args.dim, args.kappa)
    params = params_for_rule(args.alpha_rule, args.dim, args.c)
    budget = args.budget if args.budget is not None else 10000 + 1000 * args.dim
    init = init_default(spec, args.seed)
    traj = run(spec, params, init, budget, args.f_floor, args.seed)
    traj.to_csv(args.out, thin=args.thin)
    try:
        est = rates.estimate_cr(traj)
        rate_txt = f"cr_hat={est.cr_hat:.6g} stderr={est.stderr:.3g}"
    except ValueError as exc:
        rate_txt = f"rate unavailable ({exc})"
    print(
        f"wrote {args.out}: T={traj.t_final} stop={traj.stop_reason} {rate_txt}"
    )
    return 0


def _cmd_experiment(args) -> int:
    cfg = harness.ExperimentConfig.from_json(json.loads(Path(args.config).read_text()))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = harness.run_experiment(cfg)
    harness.emit_csv(rows, out_dir / "results.csv")
    harness.emit_plot(rows, out_dir / "scaled_rate.svg", y_field="scaled_rate")
    harness.emit_plot(rows, out_dir / "cr_hat.svg", y_field="cr_hat")
    n_agg = sum(1 for r in rows if r.is_aggregate)
    print(f"wrote {out_dir}/results.csv ({len(rows) - n_agg} trials, {n_agg} cells)")
    return 0


def _cmd_bounds(args) -> int:
    e_q = args.e_q if args.e_q is not None else args.dim * args.U
    extremes = theory.QExtremes(
        v_std_sup=args.v_std, kappa_inf=args.kappa_inf, e_q=e_q,
        strong_convexity=args.L,
    )
    if args.p_target is not None:
        base = params_for_rule(args.alpha_rule, args.dim, args.c)
        params = params_for_target(base.alpha_up, args.p_target)
    else:
        params = params_for_rule(args.alpha_rule, args.dim, args.c)
    constants = theory.build_constants(extremes, params, args.q_low, args.q_high)
    out = constants.as_dict()
    out["p_target"] = theory.p_target(params)
    out["w_over_l_ratio"] = constants.w / (args.L / e_q)
    if args.sup:
        trace = [] if args.trace_out else None
        out["b_upper_sup"] = theory.b_upper(extremes, params, trace=trace)
        if args.trace_out:
            with open(args.trace_out, "w") as fh:
                fh.write("q_low,q_high,objective\n")
                for ql, qh, obj in trace:
                    fh.write(f"{ql!r},{qh!r},{obj!r}\n")
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _suite_lemmas(n: int | None, seed: int) -> dict:
    n = n or 100_000
    spec = sphere(10)
    draw = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(3,)))
    m = draw.standard_normal(10)
    states = [
        analysis.state_at_sigma_bar(spec, m, sbar)
        for sbar in np.geomspace(0.1, 10.0, 5)
    ]
    report = analysis.check_lemma_suite(spec, states, n, seed)
    return report.to_json() | {"suite": "lemmas"}


def _suite_assumption2(n: int | None, seed: int) -> dict:
    ok = True
    out = {"suite": "assumption2", "cases": {}}
    for dim, expected in ((1000, True), (2, False)):
        report = analysis.check_assumption2(sphere(dim), n=n or 100_000, seed=seed)
        oracle = 2.0 / dim < theory.assumption_margin_rhs(2.0)
        case_ok = report.holds == expected == oracle
        ok = ok and case_ok
        out["cases"][f"sphere_d{dim}"] = {
            "holds": report.holds,
            "margin": report.margin,
            "expected": expected,
            "ok": case_ok,
        }
    out["ok"] = ok
    return out


def _cmd_verify(args) -> int:
    if args.suite == "invariance":
        report = harness.invariance_report(
            n_seeds=args.n or 20, base_seed=args.seed or 20240
        )
    elif args.suite == "lemmas":
        report = _suite_lemmas(args.n, args.seed)
    elif args.suite == "assumption2":
        report = _suite_assumption2(args.n, args.seed)
    else:
        report = harness.drift_report(n=args.n or 20_000, seed=args.seed or 77)
    print(json.dumps(report, indent=2, default=float))
    return 0 if report["ok"] else 2


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "experiment":
            return _cmd_experiment(args)
        if args.command == "bounds":
            return _cmd_bounds(args)
        return _cmd_verify(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
