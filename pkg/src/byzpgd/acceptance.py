"""Acceptance suites: the end-to-end checks that pin the package to its
analytic targets. Each suite returns a dict with a boolean "passed", the
measured quantities, the thresholds they were held to, and the wall-clock
runtime. The CLI accept subcommand and tests/test_acceptance.py both call
these functions.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import adversaries, aggregators, harness, optimizer, problems
from .adversaries import AdversaryStrategy
from .aggregators import AggregatorSpec
from .errors import ConfigError


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        result["runtime_s"] = time.perf_counter() - t0
        return result
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# 1. single inexact descent step never loses more than the Delta^2 slack

@_timed
def descent_lemma(trials=1000, seed=101):
    """F(w - eta(grad + e)) <= F(w) - ||grad||^2/(2L) + Delta^2/(2L) for any
    error vector with ||e|| <= Delta, on every benchmark, 100% of trials."""
    cases = [
        (problems.make_problem("convex_1d"), 10.0),
        # keep the step inside |w| <= 2 where the quartic's constants hold
        (problems.make_problem("quartic_1d"), 1.6),
        (problems.make_problem("saddle_2d"), 4.0),
        (problems.make_problem("mean_estimation",
                               mu=np.linspace(-1.0, 1.0, 8)), 10.0),
    ]
    rng = np.random.default_rng(seed)
    worst_violation = -math.inf
    failures = 0
    for prob, radius in cases:
        L = prob.smoothness
        eta = 1.0 / L
        for _ in range(trials):
            w = optimizer.sample_ball(rng, radius, prob.dim)
            delta = rng.uniform(0.0, 1.0)
            e = optimizer.sample_ball(rng, delta, prob.dim)
            g = prob.grad(w)
            w_next = w - eta * (g + e)
            lhs = prob.value(w_next)
            rhs = prob.value(w) - float(g @ g) / (2.0 * L) \
                + delta ** 2 / (2.0 * L)
            violation = lhs - rhs
            worst_violation = max(worst_violation, violation)
            if violation > 1e-9:
                failures += 1
    return {
        "suite": "descent-lemma",
        "passed": failures == 0,
        "trials_per_problem": trials,
        "failures": failures,
        "worst_violation": worst_violation,
        "slack": 1e-9,
        "runtime_limit_s": 5.0,
    }


# ---------------------------------------------------------------------------
# 2. saddle attack stuck frequency matches the closed form

def _stuck_fraction(delta, lam, r, trials, seed, max_iters=10_000):
    prob = problems.make_problem("saddle_2d", lam=lam, b=1.0)
    strategy = AdversaryStrategy("curvature_kill", delta_budget=delta,
                                 target_coord=1)
    rng = np.random.default_rng(seed)

    def oracle(w, phase, k):
        return adversaries.oracle_override(strategy, w, prob.grad(w), delta,
                                           rng)

    eta = 1.0 / prob.smoothness
    stuck = 0
    for _ in range(trials):
        w0 = optimizer.sample_ball(rng, r, 2)
        _, left, _ = optimizer.plain_inexact_gd(oracle, eta, w0, max_iters,
                                                leave_radius=r)
        stuck += not left
    return stuck / trials


@_timed
def stuck_probability(trials=2000, seed=202):
    """Without perturbation, the saddle attack freezes exactly the strip
    the closed form predicts: frequency 0.6090 +- 0.05 at x = 0.5, and
    exactly 1.0 once the budget covers the whole perturbation radius."""
    lam, r = 0.5, 0.2
    target = adversaries.stuck_probability(0.5)
    freq_half = _stuck_fraction(delta=0.5 * lam * r, lam=lam, r=r,
                                trials=trials, seed=seed)
    freq_full = _stuck_fraction(delta=lam * r, lam=lam, r=r,
                                trials=500, seed=seed + 1)
    return {
        "suite": "stuck-probability",
        "passed": abs(freq_half - target) <= 0.05 and freq_full == 1.0,
        "measured_freq_x_half": freq_half,
        "target_x_half": target,
        "tolerance": 0.05,
        "measured_freq_x_one": freq_full,
        "target_x_one": 1.0,
        "runtime_limit_s": 30.0,
    }


# ---------------------------------------------------------------------------
# 3. exact-oracle escape from the saddle

@_timed
def escape_exact(n_seeds=50):
    """From the saddle with exact gradients, the single perturbation round
    escapes in >= 90% of seeds, and every successful run ends at a point
    with tiny gradient and non-negative curvature."""
    spec = harness.ExperimentSpec(
        problem="saddle_2d",
        problem_params={"lam": 0.5, "b": 1000.0},
        oracle_mode="exact",
        optimizer_source="theorem2",
        eps=0.01,
        delta_fail=0.1,
        seeds=tuple(range(n_seeds)),
        w0=[0.0, 0.0],
    )
    report, _ = harness.run_experiment(spec)
    successes = [s for s in report["seeds"] if s["escapes_succeeded"] >= 1]
    rate = len(successes) / n_seeds
    grad_ok = all(s["grad_norm_true_at_output"] <= 0.01 for s in successes)
    eig_ok = all(s["hessian_min_eig_at_output"] >= 0.0 for s in successes)
    worst_grad = max((s["grad_norm_true_at_output"] for s in successes),
                     default=0.0)
    worst_eig = min((s["hessian_min_eig_at_output"] for s in successes),
                    default=0.0)
    return {
        "suite": "escape-exact",
        "passed": rate >= 0.9 and grad_ok and eig_ok,
        "escape_rate": rate,
        "escape_rate_threshold": 0.9,
        "worst_grad_norm": worst_grad,
        "grad_norm_threshold": 0.01,
        "worst_min_eig": worst_eig,
        "runtime_limit_s": 60.0,
    }


# ---------------------------------------------------------------------------
# 4. escape under the worst-case inexact oracle, plus the no-escape ablation

@_timed
def escape_byzantine(n_seeds=50):
    """With the saddle attack holding the aggregate inside the 0.01 ball,
    the full algorithm terminates within its iteration bound with a small
    true gradient, while plain descent from the same starts stays stuck in
    at least half the seeds."""
    delta = 0.01
    start_radius = 0.04  # = 2*delta/lam, half the mass is in the frozen strip
    adversary = AdversaryStrategy("curvature_kill", delta_budget=delta,
                                  target_coord=1)
    spec = harness.ExperimentSpec(
        problem="saddle_2d",
        oracle_mode="oracle_override",
        adversary=adversary,
        optimizer_source="theorem1",
        delta_inexact=delta,
        delta_fail=0.1,
        seeds=tuple(range(n_seeds)),
        w0={"ball": start_radius},
    )
    report, _ = harness.run_experiment(spec)
    seeds = report["seeds"]
    within_bound = all(s["budget_status"] == "ok" and s["within_iter_bound"]
                       for s in seeds)
    grad_frac = np.mean([s["grad_norm_true_at_output"] <= 4.0 * delta
                         for s in seeds])

    # ablation: identical seeds and starting points, no perturbation rounds
    prob = problems.make_problem("saddle_2d")
    r_full = optimizer.derive_config(
        prob.meta([0.0, start_radius]), delta, 0.1).r
    stuck = 0
    for seed in spec.seeds:
        streams = harness._seed_streams(seed)
        w0 = harness._initial_iterate(spec, prob, streams["w0"])
        rng_adv = streams["adversary"]

        def oracle(w, phase, k):
            return adversaries.oracle_override(adversary, w, prob.grad(w),
                                               delta, rng_adv)
        _, left, _ = optimizer.plain_inexact_gd(
            oracle, 1.0 / prob.smoothness, w0, 10_000, leave_radius=r_full)
        stuck += not left
    stuck_frac = stuck / n_seeds
    return {
        "suite": "escape-byzantine",
        "passed": within_bound and grad_frac >= 0.9 and stuck_frac >= 0.5,
        "all_within_iter_bound": within_bound,
        "grad_norm_ok_fraction": float(grad_frac),
        "grad_norm_threshold": 4.0 * delta,
        "grad_fraction_threshold": 0.9,
        "ablation_stuck_fraction": stuck_frac,
        "ablation_stuck_threshold": 0.5,
        "runtime_limit_s": 600.0,
    }


# ---------------------------------------------------------------------------
# 5. statistical scaling of the measured inexactness

def _nested_delta_hat(samples, perm, n, alpha, agg_spec, adversary, probes,
                      rng_adv):
    """Delta_hat for a sub-experiment reusing the first n samples per
    worker and the first alpha*m workers of the corruption order, so that
    comparisons across n and alpha share their randomness."""
    m = samples.shape[0]
    d = samples.shape[2]
    prob = problems.make_problem("mean_estimation", mu=np.zeros(d))
    shards = samples[:, :n, :]
    mask = np.zeros(m, dtype=bool)
    mask[perm[:int(round(alpha * m))]] = True
    pool = harness.WorkerPool(shards, mask, shards.mean(axis=1))
    return harness.measure_inexactness(prob, pool, adversary, agg_spec,
                                       probes, alpha, rng_adv)


@_timed
def scaling_laws(reps=20, probes=20):
    """Monte-Carlo checks of how the measured inexactness scales:
    (a) median Delta_hat falls as per-worker sample counts grow,
    (b) doubling the corrupted fraction roughly doubles it,
    (c) filtering beats the median in high dimension."""
    median_spec = AggregatorSpec("median")

    # (a) + (b): d=4, m=50, shift adversary on all coordinates
    d, m = 4, 50
    adversary = AdversaryStrategy("shift",
                                  shift_vector=100.0 * np.ones(d))
    wins = 0
    ratios_01 = []
    ratios_02 = []
    for rep in range(reps):
        ss = np.random.SeedSequence([501, rep]).spawn(3)
        rng_data = np.random.default_rng(ss[0])
        rng_assign = np.random.default_rng(ss[1])
        rng_probe = np.random.default_rng(ss[2])
        samples = rng_data.standard_normal((m, 200, d))
        perm = rng_assign.permutation(m)
        probe_ws = [optimizer.sample_ball(rng_probe, 1.0, d)
                    for _ in range(probes)]
        dh = {n: _nested_delta_hat(samples, perm, n, 0.1, median_spec,
                                   adversary, probe_ws, rng_data)
              for n in (50, 100, 200)}
        wins += dh[50] > dh[100]
        wins += dh[100] > dh[200]
        ratios_01.append(dh[100])
        ratios_02.append(_nested_delta_hat(samples, perm, 100, 0.2,
                                           median_spec, adversary, probe_ws,
                                           rng_data))
    comparisons = 2 * reps
    # one-sided sign test at 95%: with 40 fair coins, P(>=26 heads) < 0.05
    sign_critical = 26
    monotone_ok = wins >= sign_critical
    ratio = float(np.mean(ratios_02) / np.mean(ratios_01))
    ratio_ok = 1.3 <= ratio <= 2.7

    # (c): d=64, m=200, n=50, alpha=0.2
    d_c, m_c, n_c, alpha_c = 64, 200, 50, 0.2
    adversary_c = AdversaryStrategy("shift",
                                    shift_vector=100.0 * np.ones(d_c))
    filter_spec = AggregatorSpec("iterative_filter", alpha=alpha_c,
                                 sigma=1.0 / math.sqrt(n_c))
    med_vals = []
    fil_vals = []
    for rep in range(reps):
        ss = np.random.SeedSequence([502, rep]).spawn(3)
        rng_data = np.random.default_rng(ss[0])
        rng_assign = np.random.default_rng(ss[1])
        rng_probe = np.random.default_rng(ss[2])
        samples = rng_data.standard_normal((m_c, n_c, d_c))
        perm = rng_assign.permutation(m_c)
        probe_ws = [optimizer.sample_ball(rng_probe, 1.0, d_c)
                    for _ in range(probes)]
        med_vals.append(_nested_delta_hat(samples, perm, n_c, alpha_c,
                                          median_spec, adversary_c,
                                          probe_ws, rng_data))
        fil_vals.append(_nested_delta_hat(samples, perm, n_c, alpha_c,
                                          filter_spec, adversary_c,
                                          probe_ws, rng_data))
    median_mean = float(np.mean(med_vals))
    filter_mean = float(np.mean(fil_vals))
    crossover_ok = filter_mean <= median_mean

    return {
        "suite": "scaling-laws",
        "passed": monotone_ok and ratio_ok and crossover_ok,
        "monotone_wins": wins,
        "monotone_comparisons": comparisons,
        "sign_test_critical": sign_critical,
        "alpha_ratio": ratio,
        "alpha_ratio_range": [1.3, 2.7],
        "filter_delta_hat": filter_mean,
        "median_delta_hat": median_mean,
        "runtime_limit_s": 600.0,
    }


# ---------------------------------------------------------------------------
# 6. filtering recovers the mean against a distant cluster of outliers

@_timed
def filter_recovery(trials=100, seed=606):
    """With a fifth of 100 points shifted a distance 100 away, the filter's
    output lands within 5*sigma*sqrt(alpha) of the true mean in >= 95% of
    trials."""
    d, m, alpha, sigma = 16, 100, 0.2, 1.0
    bound = 5.0 * sigma * math.sqrt(alpha)
    shift = np.zeros(d)
    shift[0] = 100.0
    rng = np.random.default_rng(seed)
    n_byz = int(round(alpha * m))
    hits = 0
    worst = 0.0
    for _ in range(trials):
        pts = sigma * rng.standard_normal((m, d))
        pts[:n_byz] += shift
        est = aggregators.iterative_filter(pts, alpha, sigma)
        err = float(np.linalg.norm(est))
        worst = max(worst, err)
        hits += err <= bound
    return {
        "suite": "filter-recovery",
        "passed": hits >= int(0.95 * trials),
        "hits": hits,
        "trials": trials,
        "error_bound": bound,
        "worst_error": worst,
        "runtime_limit_s": 60.0,
    }


# ---------------------------------------------------------------------------
# 7. bitwise reproducibility of reports and traces

@_timed
def determinism():
    """Re-running an experiment with identical seeds must serialize to
    byte-identical report JSON and trace CSV."""
    spec = harness.ExperimentSpec(
        problem="saddle_2d",
        oracle_mode="oracle_override",
        adversary=AdversaryStrategy("curvature_kill", delta_budget=0.01,
                                    target_coord=1),
        optimizer_source="theorem1",
        delta_inexact=0.01,
        delta_fail=0.1,
        seeds=(0, 1, 2),
        w0={"ball": 0.04},
    )
    report1, traces1 = harness.run_experiment(spec, keep_traces=True)
    report2, traces2 = harness.run_experiment(spec, keep_traces=True)
    json_equal = harness.to_json(report1) == harness.to_json(report2)
    csv_equal = all(harness.trace_csv_text(traces1[s])
                    == harness.trace_csv_text(traces2[s])
                    for s in spec.seeds)
    return {
        "suite": "determinism",
        "passed": json_equal and csv_equal,
        "report_json_identical": json_equal,
        "trace_csv_identical": csv_equal,
        "runtime_limit_s": 600.0,
    }


SUITES = {
    "descent-lemma": descent_lemma,
    "stuck-probability": stuck_probability,
    "escape-exact": escape_exact,
    "escape-byzantine": escape_byzantine,
    "scaling-laws": scaling_laws,
    "filter-recovery": filter_recovery,
    "determinism": determinism,
}


def run_suite(name):
    if name not in SUITES:
        raise ConfigError(
            f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name]()


def format_result(result):
    """One human-readable pass/fail line per suite."""
    status = "PASS" if result["passed"] else "FAIL"
    detail = ", ".join(
        f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
        for k, v in result.items()
        if k not in ("suite", "passed"))
    return f"{status} {result['suite']}: {detail}"
