"""Command-line entry point.

Subcommands:
    run           execute an experiment config; writes report.json, one CSV
                  trace per seed, and summary figures under the output dir
    derive-params print the derived optimizer knobs for given constants
    measure-delta empirically measure the oracle inexactness of a config
    accept        run one acceptance suite (or all) and print pass/fail
    trace-dump    print the CSV trace of a single seed

Exit codes: 0 success, 1 runtime or acceptance failure, 2 bad config or
usage. The default output directory can be set via BYZPGD_OUT.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import acceptance, harness, optimizer, problems
from .errors import ConfigError


def _load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    if path.endswith(".toml"):
        try:
            import tomllib  # py >= 3.11
        except ImportError:
            try:
                import tomli as tomllib
            except ImportError:
                raise ConfigError(
                    "TOML configs need python >= 3.11 or the tomli package; "
                    "use JSON instead") from None
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        import json
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return harness.ExperimentSpec.from_dict(raw)


def _out_dir(args):
    out = args.out or os.environ.get("BYZPGD_OUT") or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _apply_overrides(spec, args):
    if getattr(args, "seeds", None):
        seeds = tuple(int(s) for s in args.seeds.split(","))
        spec = harness.ExperimentSpec(**{**spec.__dict__, "seeds": seeds})
        spec.validate()
    return spec


def cmd_run(args):
    spec = _apply_overrides(_load_config(args.config), args)
    out = _out_dir(args)
    report, traces = harness.run_experiment(spec, keep_traces=True,
                                            threads=args.threads)
    harness.write_report(report, os.path.join(out, "report.json"))
    trace_dir = os.path.join(out, "traces")
    for seed, trace in traces.items():
        harness.write_trace_csv(
            trace, os.path.join(trace_dir, f"seed_{seed}.csv"))
    from . import plots
    plots.render_run_figures(report, traces, out)
    exceeded = report["aggregate"]["budget_exceeded_seeds"]
    if exceeded:
        print(harness.to_json({"error": "budget_exceeded",
                               "seeds_affected": exceeded}))
        return 1
    print(harness.to_json({"report": os.path.join(out, "report.json"),
                           "num_seeds": len(spec.seeds)}))
    return 0


def cmd_derive_params(args):
    meta = problems.ProblemMeta(dim=args.dim, smoothness=args.smoothness,
                                hessian_lipschitz=args.rho,
                                initial_gap=args.gap)
    if args.mode == "theorem1":
        if args.delta is None:
            raise ConfigError("theorem1 mode needs --delta")
        cfg = optimizer.derive_config(meta, args.delta, args.delta_fail)
    else:
        if args.eps is None:
            raise ConfigError("theorem2 mode needs --eps")
        cfg = optimizer.derive_exact_config(meta, args.eps, args.delta_fail)
    payload = {
        "eta": cfg.eta, "eps": cfg.eps, "r": cfg.r, "R": cfg.R,
        "Q": cfg.Q, "T_th": cfg.T_th, "delta_inexact": cfg.delta_inexact,
        "delta_fail": cfg.delta_fail,
        "iter_bound": cfg.guarantee.iter_bound,
        "grad_norm_bound": cfg.guarantee.grad_norm_bound,
        "min_eig_bound": cfg.guarantee.min_eig_bound,
    }
    print(harness.to_json(payload))
    return 0


def cmd_measure_delta(args):
    spec = _apply_overrides(_load_config(args.config), args)
    prob = problems.make_problem(spec.problem, **spec.problem_params)
    per_seed = []
    for seed in spec.seeds:
        streams = harness._seed_streams(seed)
        w0 = harness._initial_iterate(spec, prob, streams["w0"])
        pool = harness.shard_data(prob, spec.m, spec.n, spec.alpha,
                                  streams["data"], streams["assign"])
        probe_ws = harness.probe_grid(prob, w0, spec.delta_inexact,
                                      streams["perturb"], count=args.probes,
                                      bound_constant=spec.bound_constant)
        if spec.oracle_mode == "exact":
            per_seed.append(0.0)
        elif spec.oracle_mode == "oracle_override":
            from . import adversaries
            worst = 0.0
            for w in probe_ws:
                g = prob.grad(w)
                g_hat = adversaries.oracle_override(
                    spec.adversary, w, g, spec.delta_inexact,
                    streams["adversary"])
                worst = max(worst, float(np.linalg.norm(g_hat - g)))
            per_seed.append(worst)
        else:
            per_seed.append(harness.measure_inexactness(
                prob, pool, spec.adversary, spec.aggregator, probe_ws,
                spec.alpha, streams["adversary"]))
    print(harness.to_json({
        "schema_version": harness.SCHEMA_VERSION,
        "delta_hat_per_seed": per_seed,
        "delta_hat_max": max(per_seed),
    }))
    return 0


def cmd_accept(args):
    names = list(acceptance.SUITES) if args.suite == "all" else [args.suite]
    all_passed = True
    for name in names:
        result = acceptance.run_suite(name)
        print(acceptance.format_result(result))
        all_passed = all_passed and result["passed"]
    return 0 if all_passed else 1


def cmd_trace_dump(args):
    spec = _load_config(args.config)
    seed = args.seed if args.seed is not None else spec.seeds[0]
    _, trace = harness.run_single_seed(spec, seed, keep_records=True)
    text = harness.trace_csv_text(trace)
    if args.out:
        harness.write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="byzpgd",
        description="Deterministic simulator of Byzantine-robust perturbed "
                    "gradient descent")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seeds", default=None,
                       help="comma-separated seed override")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.set_defaults(fn=cmd_run)

    p_dp = sub.add_parser("derive-params",
                          help="print derived optimizer parameters")
    p_dp.add_argument("--mode", choices=("theorem1", "theorem2"),
                      default="theorem1")
    p_dp.add_argument("--delta", type=float, default=None,
                      help="oracle inexactness (theorem1 mode)")
    p_dp.add_argument("--eps", type=float, default=None,
                      help="gradient target (theorem2 mode)")
    p_dp.add_argument("--dim", type=int, required=True)
    p_dp.add_argument("--smoothness", type=float, required=True)
    p_dp.add_argument("--rho", type=float, required=True)
    p_dp.add_argument("--gap", type=float, required=True)
    p_dp.add_argument("--delta-fail", type=float, default=0.1)
    p_dp.set_defaults(fn=cmd_derive_params)

    p_md = sub.add_parser("measure-delta",
                          help="measure empirical oracle inexactness")
    p_md.add_argument("--config", required=True)
    p_md.add_argument("--seeds", default=None)
    p_md.add_argument("--probes", type=int, default=200)
    p_md.set_defaults(fn=cmd_measure_delta)

    p_ac = sub.add_parser("accept", help="run an acceptance suite")
    p_ac.add_argument("--suite", required=True,
                      help="suite name or 'all'")
    p_ac.set_defaults(fn=cmd_accept)

    p_td = sub.add_parser("trace-dump",
                          help="print one seed's trace as CSV")
    p_td.add_argument("--config", required=True)
    p_td.add_argument("--seed", type=int, default=None)
    p_td.add_argument("--out", default=None)
    p_td.set_defaults(fn=cmd_trace_dump)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(harness.to_json({"error": "config", "message": str(exc)}),
              file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure, still machine readable
        print(harness.to_json({"error": "runtime",
                               "message": f"{type(exc).__name__}: {exc}"}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
