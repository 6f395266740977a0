"""Experiment orchestration: worker pools, message rounds, inexactness
measurement, seeded multi-run experiments, and deterministic output
serialization (JSON reports, CSV traces).

Seeding: every experiment seed expands through numpy SeedSequence into
independent substreams for data generation, Byzantine assignment, the
optimizer's perturbations, adversary randomness, and the initial iterate,
so any one source of randomness can be varied without disturbing the rest.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, asdict

import numpy as np

from . import adversaries, aggregators, optimizer, problems
from .errors import ConfigError

SCHEMA_VERSION = 1

TRACE_COLUMNS = ("schema_version", "iteration", "phase", "grad_norm_hat",
                 "grad_norm_true", "dist_from_round_start", "escaped")


# ---------------------------------------------------------------------------
# worker pool and message rounds

@dataclass
class WorkerPool:
    """m workers, each holding n samples; exactly alpha*m are corrupted."""

    shards: np.ndarray | None      # (m, n, d) or None for sample-free losses
    byzantine_mask: np.ndarray     # (m,) bool
    shard_means: np.ndarray | None = None

    @property
    def m(self):
        return self.byzantine_mask.shape[0]


def _n_byz(alpha, m):
    n_byz = alpha * m
    if abs(n_byz - round(n_byz)) > 1e-9:
        raise ConfigError(f"alpha*m = {n_byz} is not integral")
    return int(round(n_byz))


def shard_data(problem, m, n, alpha, rng_data, rng_assign):
    """Draw m disjoint shards of n samples each and pick the corrupted set.

    Sample-free problems (everything except mean_estimation) get shards of
    None; their honest workers all report the population gradient.
    """
    if m < 1 or n < 1:
        raise ConfigError("need m >= 1 and n >= 1")
    n_byz = _n_byz(alpha, m)
    mask = np.zeros(m, dtype=bool)
    mask[rng_assign.permutation(m)[:n_byz]] = True
    if hasattr(problem, "draw_samples"):
        flat = problem.draw_samples(m * n, rng_data)
        shards = flat.reshape(m, n, problem.dim)
        return WorkerPool(shards, mask, shards.mean(axis=1))
    return WorkerPool(None, mask)


def worker_grad_from_samples(problem, shard, w):
    """Average of per-sample gradients over one shard (reference path)."""
    grads = [problem.sample_grad(w, z) for z in shard]
    return np.mean(grads, axis=0)


def honest_grads(problem, pool, w):
    """All m workers' honest messages, shape (m, d).

    For sample-based losses this is the shard-mean gradient (closed form
    for the quadratic per-sample loss); otherwise every honest worker
    reports the population gradient.
    """
    w = problems.as_vector(w, problem.dim)
    if pool.shard_means is not None:
        return w[None, :] - pool.shard_means
    return np.tile(problem.grad(w), (pool.m, 1))


def run_round(problem, pool, w, adversary, agg_spec, alpha, rng):
    """One master-worker round trip: collect messages, aggregate, audit.

    Returns (g_hat, audit) where audit records the deviation from the true
    population gradient and whether filtering fell back to the median.
    """
    w = problems.as_vector(w, problem.dim)
    all_honest = honest_grads(problem, pool, w)
    mask = pool.byzantine_mask
    true_grad = problem.grad(w)
    ctx = adversaries.RoundContext(
        w=w,
        honest_grads=all_honest[~mask],
        byz_honest_grads=all_honest[mask],
        true_population_grad=true_grad,
    )
    msgs = adversaries.craft(adversary, ctx, alpha, pool.m, rng)
    batch = np.array(all_honest, copy=True)
    batch[mask] = msgs
    g_hat, fallback = agg_spec.aggregate(batch)
    audit = {
        "dev_from_true": float(np.linalg.norm(g_hat - true_grad)),
        "fallback": bool(fallback),
    }
    return g_hat, audit


def measure_inexactness(problem, pool, adversary, agg_spec, probe_ws, alpha,
                        rng):
    """Empirical oracle inexactness: the max aggregate-vs-true gradient
    deviation over the probe points."""
    worst = 0.0
    for w in probe_ws:
        _, audit = run_round(problem, pool, w, adversary, agg_spec, alpha,
                             rng)
        worst = max(worst, audit["dev_from_true"])
    return worst


def probe_grid(problem, w0, delta_inexact, rng, count=200, bound_constant=10.0):
    """Seeded uniform probe points in the ball the iterates provably stay
    in (radius C*(F0-F*)/Delta, halved); for an exact oracle or a zero gap
    the problem's own domain radius is used instead."""
    w0 = problems.as_vector(w0, problem.dim)
    gap = max(problem.value(w0) - problem.min_value, 0.0)
    if delta_inexact > 0 and gap > 0:
        radius = 0.5 * bound_constant * gap / delta_inexact
    else:
        radius = problem.domain_radius
    return [w0 + optimizer.sample_ball(rng, radius, problem.dim)
            for _ in range(count)]


# ---------------------------------------------------------------------------
# experiment specification

_ORACLE_MODES = ("workers", "oracle_override", "exact")
_OPT_SOURCES = ("theorem1", "theorem2", "manual")


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one experiment."""

    problem: str
    problem_params: dict = field(default_factory=dict)
    m: int = 1
    n: int = 1
    alpha: float = 0.0
    aggregator: aggregators.AggregatorSpec = field(
        default_factory=lambda: aggregators.AggregatorSpec("median"))
    adversary: adversaries.AdversaryStrategy = field(
        default_factory=lambda: adversaries.AdversaryStrategy("none"))
    oracle_mode: str = "exact"
    optimizer_source: str = "theorem2"
    delta_inexact: float = 0.0   # theorem1 / oracle_override budget
    eps: float = 0.01            # theorem2 threshold
    delta_fail: float = 0.1
    manual_config: dict | None = None
    seeds: tuple = (0,)
    w0: object = None            # explicit list, or {"ball": radius}
    max_parallel_iters: int | None = None
    bound_constant: float = 10.0

    def validate(self):
        if self.problem not in problems._REGISTRY:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.m < 1 or self.n < 1:
            raise ConfigError("need m >= 1 and n >= 1")
        if not 0.0 <= self.alpha < 0.5:
            raise ConfigError(
                f"alpha = {self.alpha} violates alpha in (0, 1/2); "
                "corrupted fraction must stay below one half")
        _n_byz(self.alpha, self.m)
        if self.aggregator.kind == "iterative_filter" and self.alpha > 0.25:
            raise ConfigError("iterative filtering requires alpha <= 1/4")
        if self.oracle_mode not in _ORACLE_MODES:
            raise ConfigError(f"unknown oracle_mode {self.oracle_mode!r}")
        if self.optimizer_source not in _OPT_SOURCES:
            raise ConfigError(
                f"unknown optimizer_source {self.optimizer_source!r}")
        if self.optimizer_source == "manual" and not self.manual_config:
            raise ConfigError("manual optimizer_source needs manual_config")
        if len(self.seeds) == 0:
            raise ConfigError("seed list must be non-empty")
        if self.oracle_mode == "oracle_override" and self.delta_inexact <= 0:
            raise ConfigError("oracle_override needs delta_inexact > 0")
        return self

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        kw = dict(raw)
        if "aggregator" in kw:
            kw["aggregator"] = aggregators.AggregatorSpec(**kw["aggregator"])
        if "adversary" in kw:
            adv = dict(kw["adversary"])
            if adv.get("shift_vector") is not None:
                adv["shift_vector"] = np.asarray(adv["shift_vector"], float)
            kw["adversary"] = adversaries.AdversaryStrategy(**adv)
        if "seeds" in kw:
            kw["seeds"] = tuple(int(s) for s in kw["seeds"])
        try:
            spec = cls(**kw)
        except TypeError as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc
        return spec.validate()

    def to_dict(self):
        d = asdict(self)
        adv = d["adversary"]
        if adv.get("shift_vector") is not None:
            adv["shift_vector"] = [float(x) for x in adv["shift_vector"]]
        d["seeds"] = list(self.seeds)
        if isinstance(d["w0"], tuple):
            d["w0"] = list(d["w0"])
        return d


def _seed_streams(seed):
    """Independent substreams for one experiment seed."""
    children = np.random.SeedSequence(seed).spawn(5)
    names = ("data", "assign", "perturb", "adversary", "w0")
    return {name: np.random.default_rng(ss)
            for name, ss in zip(names, children)}


def _initial_iterate(spec, problem, rng_w0):
    if spec.w0 is None:
        return np.zeros(problem.dim)
    if isinstance(spec.w0, dict):
        if set(spec.w0) - {"ball", "center"}:
            raise ConfigError("w0 sampler accepts only 'ball' and 'center'")
        center = np.asarray(spec.w0.get("center", np.zeros(problem.dim)),
                            dtype=float)
        radius = float(spec.w0["ball"])
        return center + optimizer.sample_ball(rng_w0, radius, problem.dim)
    return problems.as_vector(spec.w0, problem.dim)


def build_oracle(spec, problem, pool, rng_adversary, audits=None):
    """Turn a spec into the oracle callable the optimizer consumes."""
    if spec.oracle_mode == "exact":
        return lambda w, phase, k: problem.grad(w)
    if spec.oracle_mode == "oracle_override":
        def oracle(w, phase, k):
            return adversaries.oracle_override(
                spec.adversary, w, problem.grad(w), spec.delta_inexact,
                rng_adversary)
        return oracle

    def oracle(w, phase, k):
        g_hat, audit = run_round(problem, pool, w, spec.adversary,
                                 spec.aggregator, spec.alpha, rng_adversary)
        if audits is not None:
            audits.append(audit)
        return g_hat
    return oracle


def _optimizer_config(spec, meta):
    if spec.optimizer_source == "theorem1":
        cfg = optimizer.derive_config(meta, spec.delta_inexact,
                                      spec.delta_fail)
    elif spec.optimizer_source == "theorem2":
        cfg = optimizer.derive_exact_config(meta, spec.eps, spec.delta_fail)
    else:
        cfg = optimizer.OptimizerConfig(**spec.manual_config)
    if spec.max_parallel_iters is not None:
        cfg = optimizer.OptimizerConfig(
            eta=cfg.eta, eps=cfg.eps, r=cfg.r, R=cfg.R, Q=cfg.Q,
            T_th=cfg.T_th, delta_inexact=cfg.delta_inexact,
            delta_fail=cfg.delta_fail,
            max_parallel_iters=spec.max_parallel_iters,
            guarantee=cfg.guarantee)
    return cfg


def run_single_seed(spec, seed, keep_records=True):
    """One seeded end-to-end run. Returns (summary_dict, trace)."""
    problem = problems.make_problem(spec.problem, **spec.problem_params)
    streams = _seed_streams(seed)
    w0 = _initial_iterate(spec, problem, streams["w0"])
    pool = shard_data(problem, spec.m, spec.n, spec.alpha, streams["data"],
                      streams["assign"])
    audits = []
    oracle = build_oracle(spec, problem, pool, streams["adversary"], audits)
    meta = problem.meta(w0)
    cfg = _optimizer_config(spec, meta)

    w_tilde, trace, guarantee = optimizer.byzantine_pgd(
        oracle, cfg, w0, streams["perturb"], true_grad_fn=problem.grad,
        keep_records=keep_records)

    # boundedness monitor (meaningful only for an inexact oracle)
    bound_violated = False
    if cfg.delta_inexact > 0 and meta.initial_gap > 0 and keep_records:
        radius = spec.bound_constant * meta.initial_gap / cfg.delta_inexact
        for rec in trace.records:
            dw = np.asarray(rec["w"]) - w0
            if float(np.linalg.norm(dw)) > radius:
                bound_violated = True
                break

    summary = dict(trace.summary)
    summary.update({
        "seed": int(seed),
        "w0": [float(x) for x in w0],
        "w_tilde": [float(x) for x in w_tilde],
        "grad_norm_true_at_output": float(
            np.linalg.norm(problem.grad(w_tilde))),
        "hessian_min_eig_at_output": problem.hessian_min_eig(w_tilde),
        "bound_violated": bound_violated,
        "max_round_deviation": max((a["dev_from_true"] for a in audits),
                                   default=None) if audits else None,
        "aggregator_fallbacks": sum(a["fallback"] for a in audits),
        "iter_bound": None if guarantee is None else guarantee.iter_bound,
        "within_iter_bound": None if guarantee is None else
        summary_within_bound(trace.summary, guarantee),
    })
    trace.summary = summary
    return summary, trace


def summary_within_bound(run_summary, guarantee):
    return bool(run_summary["parallel_iterations"] <= guarantee.iter_bound)


def run_experiment(spec, keep_traces=False, threads=1):
    """Run every seed in the spec and aggregate. Returns (report, traces).

    Per-seed failures (budget exhaustion, filtering trouble) are recorded
    in the per-seed summaries rather than aborting the experiment. Seeds
    are independent, so threads > 1 fans them out over a thread pool; the
    report is assembled in seed order either way.
    """
    spec.validate()
    traces = {}
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool_ex:
            results = list(pool_ex.map(
                lambda s: run_single_seed(spec, s, keep_records=keep_traces),
                spec.seeds))
    else:
        results = [run_single_seed(spec, s, keep_records=keep_traces)
                   for s in spec.seeds]
    seed_summaries = [summary for summary, _ in results]
    if keep_traces:
        traces = {seed: trace
                  for seed, (_, trace) in zip(spec.seeds, results)}

    grad_norms = [s["grad_norm_true_at_output"] for s in seed_summaries]
    min_eigs = [s["hessian_min_eig_at_output"] for s in seed_summaries]
    attempted = sum(s["escapes_attempted"] for s in seed_summaries)
    succeeded = sum(s["escapes_succeeded"] for s in seed_summaries)
    report = {
        "schema_version": SCHEMA_VERSION,
        "spec": spec.to_dict(),
        "seeds": seed_summaries,
        "aggregate": {
            "num_seeds": len(seed_summaries),
            "grad_norm_true_mean": float(np.mean(grad_norms)),
            "grad_norm_true_median": float(np.median(grad_norms)),
            "grad_norm_true_q95": float(np.quantile(grad_norms, 0.95)),
            "hessian_min_eig_mean": float(np.mean(min_eigs)),
            "hessian_min_eig_min": float(np.min(min_eigs)),
            "iterations_mean": float(np.mean(
                [s["parallel_iterations"] for s in seed_summaries])),
            "escape_success_rate": float(succeeded / attempted)
            if attempted else 0.0,
            "budget_exceeded_seeds": sum(
                s["budget_status"] == "exceeded" for s in seed_summaries),
        },
    }
    return report, traces


# ---------------------------------------------------------------------------
# deterministic serialization

def _fmt_float(x):
    if x != x:
        return "NaN"
    if x in (float("inf"), float("-inf")):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    # keep integral floats distinguishable from ints in the output
    if "e" not in s and "E" not in s and "." not in s \
            and "n" not in s and "f" not in s:
        s += ".0"
    return s


def to_json(obj, indent=0):
    """JSON with every float rendered to 17 significant digits."""
    pad = " " * indent
    if isinstance(obj, dict):
        items = ",\n".join(
            f'{pad}  {json.dumps(str(k))}: {to_json(v, indent + 2).lstrip()}'
            for k, v in obj.items())
        return f"{pad}{{\n{items}\n{pad}}}" if obj else f"{pad}{{}}"
    if isinstance(obj, (list, tuple)):
        items = ",\n".join(to_json(v, indent + 2) for v in obj)
        return f"{pad}[\n{items}\n{pad}]" if len(obj) else f"{pad}[]"
    if isinstance(obj, bool) or obj is None:
        return pad + json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return pad + str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return pad + _fmt_float(float(obj))
    return pad + json.dumps(obj)


def write_atomic(path, text):
    """Write via a sibling temp file and rename, so readers never see a
    half-written file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report, path):
    write_atomic(path, to_json(report) + "\n")


def trace_csv_text(trace):
    rows = [",".join(TRACE_COLUMNS)]
    for rec in trace.records:
        rows.append(",".join([
            str(SCHEMA_VERSION),
            str(rec["iteration"]),
            rec["phase"],
            _fmt_float(rec["grad_norm_hat"]),
            _fmt_float(rec["grad_norm_true"]),
            _fmt_float(rec["dist_from_round_start"]),
            "1" if rec["escaped"] else "0",
        ]))
    return "\n".join(rows) + "\n"


def write_trace_csv(trace, path):
    write_atomic(path, trace_csv_text(trace))
