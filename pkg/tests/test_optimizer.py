import numpy as np
import pytest

from byzpgd import optimizer
from byzpgd.errors import ConfigError
from byzpgd.optimizer import (byzantine_pgd, derive_config,
                              derive_exact_config, descend_step, escape,
                              plain_inexact_gd, sample_ball)
from byzpgd.problems import ProblemMeta, make_problem


def meta(d=1, L=1.0, rho=1.0, gap=1.0):
    return ProblemMeta(dim=d, smoothness=L, hessian_lipschitz=rho,
                       initial_gap=gap)


def test_derive_config_examples():
    cfg = derive_config(meta(), 0.01, 0.1)
    assert cfg.eps == pytest.approx(0.03)
    assert cfg.r == pytest.approx(4 * 0.01 ** 0.6, rel=1e-6)
    assert cfg.r == pytest.approx(0.25238, abs=1e-5)
    assert cfg.R == pytest.approx(0.01 ** 0.4, rel=1e-6)
    assert cfg.R == pytest.approx(0.15849, abs=1e-5)
    assert cfg.eta == 1.0
    assert cfg.Q >= 1 and cfg.T_th >= 1
    assert cfg.guarantee.grad_norm_bound == pytest.approx(0.04)
    assert cfg.guarantee.iter_bound == int(np.ceil(
        2 * 1.0 / (3 * 0.01 ** 2) * cfg.Q))


def test_derive_config_preconditions():
    with pytest.raises(ConfigError):
        derive_config(meta(), 1.5, 0.1)
    with pytest.raises(ConfigError):
        derive_config(meta(), 0.0, 0.1)
    with pytest.raises(ConfigError):
        derive_config(meta(), 0.01, 1.0)


def test_derive_config_floors_q_at_one():
    # a tiny gap drives the log argument below 1
    cfg = derive_config(meta(gap=0.0), 0.5, 0.5)
    assert cfg.Q == 1


def test_derive_exact_config_examples():
    cfg = derive_exact_config(meta(), 0.01, 0.1)
    assert cfg.r == 0.01
    assert cfg.R == pytest.approx(0.1)
    assert cfg.T_th == 1  # ceil(1 / (12 * 0.11))
    assert cfg.Q == 1
    assert cfg.delta_inexact == 0.0
    assert cfg.guarantee.iter_bound == int(np.ceil(2 * 1.0 / 0.01 ** 2))


def test_derive_exact_config_boundary_rejected():
    # upper boundary of the admissible range is excluded
    with pytest.raises(ConfigError):
        derive_exact_config(meta(), 1.0, 0.1)
    with pytest.raises(ConfigError):
        derive_exact_config(meta(L=2.0), 1.0, 0.1)  # min is 4/(L^2 rho) = 1
    with pytest.raises(ConfigError):
        derive_exact_config(meta(), 0.0, 0.1)


def test_descend_step_examples():
    assert np.allclose(descend_step([1.0, 1.0], [2.0, 0.0], 0.5), [0.0, 1.0])
    w = np.array([0.3, -0.4])
    assert np.array_equal(descend_step(w, [0.0, 0.0], 0.7), w)
    # one exact step on the 1-d convex benchmark reaches the minimizer
    prob = make_problem("convex_1d")
    w1 = descend_step([3.0], prob.grad([3.0]), 0.5)
    assert w1[0] == pytest.approx(1.0)


def test_sample_ball_is_inside_and_seeded():
    rng = np.random.default_rng(0)
    draws = np.array([sample_ball(rng, 2.0, 3) for _ in range(2000)])
    norms = np.linalg.norm(draws, axis=1)
    assert np.all(norms <= 2.0)
    # mean radius of the uniform ball in 3-d is 3/4 * r
    assert np.mean(norms) == pytest.approx(1.5, abs=0.05)
    a = sample_ball(np.random.default_rng(7), 1.0, 4)
    b = sample_ball(np.random.default_rng(7), 1.0, 4)
    assert np.array_equal(a, b)


def exact_oracle(prob):
    return lambda w, phase, k: prob.grad(w)


def test_escape_zero_dynamics_never_escapes():
    cfg = derive_exact_config(meta(d=2), 0.01, 0.1)
    oracle = lambda w, phase, k: np.zeros(2)
    out = escape(np.zeros(2), cfg, oracle, np.random.default_rng(1))
    assert not out.escaped
    assert out.rounds_used == cfg.Q


def test_escape_fails_at_strongly_convex_minimum():
    prob = make_problem("mean_estimation", mu=[0.5, -0.5])
    cfg = derive_exact_config(prob.meta([0.5, -0.5]), 0.01, 0.1)
    for seed in range(20):
        out = escape(prob.mu, cfg, exact_oracle(prob),
                     np.random.default_rng(seed))
        assert not out.escaped


def test_escape_succeeds_at_saddle():
    prob = make_problem("saddle_2d", lam=0.5, b=1000.0)
    cfg = derive_exact_config(prob.meta([0.0, 0.0]), 0.01, 0.1)
    hits = 0
    for seed in range(50):
        out = escape(np.zeros(2), cfg, exact_oracle(prob),
                     np.random.default_rng(seed))
        hits += out.escaped
        if out.escaped:
            assert np.linalg.norm(out.iterate) >= cfg.R
    assert hits >= 45


def test_byzantine_pgd_on_convex_problem():
    prob = make_problem("convex_1d")
    cfg = derive_exact_config(prob.meta([0.0]), 0.01, 0.1)
    w_tilde, trace, guarantee = byzantine_pgd(
        exact_oracle(prob), cfg, [0.0], np.random.default_rng(0),
        true_grad_fn=prob.grad)
    assert abs(prob.grad(w_tilde)[0]) <= 0.01
    assert trace.summary["escapes_succeeded"] == 0
    assert trace.summary["budget_status"] == "ok"
    assert trace.summary["parallel_iterations"] <= guarantee.iter_bound


def test_termination_gradient_threshold_contract():
    """On normal termination the recorded aggregated gradient norm at the
    output is at most eps."""
    prob = make_problem("saddle_2d", lam=0.5, b=1000.0)
    cfg = derive_exact_config(prob.meta([0.0, 0.0]), 0.01, 0.1)
    _, trace, _ = byzantine_pgd(exact_oracle(prob), cfg, [0.0, 0.0],
                                np.random.default_rng(3),
                                true_grad_fn=prob.grad)
    assert trace.summary["g_hat_norm_at_output"] <= cfg.eps


def test_escape_soundness_in_trace():
    prob = make_problem("saddle_2d", lam=0.5, b=1000.0)
    cfg = derive_exact_config(prob.meta([0.0, 0.0]), 0.01, 0.1)
    _, trace, _ = byzantine_pgd(exact_oracle(prob), cfg, [0.0, 0.0],
                                np.random.default_rng(0),
                                true_grad_fn=prob.grad)
    escaped_recs = [r for r in trace.records if r["escaped"]]
    assert escaped_recs
    for rec in escaped_recs:
        assert rec["phase"] == "escape"
        assert rec["dist_from_round_start"] >= cfg.R


def test_budget_exhaustion_is_recorded_not_silent():
    prob = make_problem("convex_1d")
    cfg = optimizer.OptimizerConfig(eta=1e-4, eps=1e-9, r=0.01, R=0.1,
                                    Q=1, T_th=1, delta_inexact=0.0,
                                    delta_fail=0.1, max_parallel_iters=5)
    w_tilde, trace, _ = byzantine_pgd(exact_oracle(prob), cfg, [10.0],
                                      np.random.default_rng(0))
    assert trace.summary["budget_status"] == "exceeded"
    assert trace.summary["parallel_iterations"] == 5
    assert w_tilde is not None


def test_trace_is_bitwise_deterministic():
    prob = make_problem("saddle_2d", lam=0.5, b=1000.0)
    cfg = derive_exact_config(prob.meta([0.0, 0.0]), 0.01, 0.1)
    runs = []
    for _ in range(2):
        _, trace, _ = byzantine_pgd(exact_oracle(prob), cfg, [0.0, 0.0],
                                    np.random.default_rng(11),
                                    true_grad_fn=prob.grad)
        runs.append(trace)
    assert runs[0].records == runs[1].records
    assert runs[0].summary == runs[1].summary


def test_plain_gd_detects_fixed_point():
    oracle = lambda w, phase, k: np.zeros(2)
    w, left, used = plain_inexact_gd(oracle, 1.0, [0.1, 0.1], 10_000,
                                     leave_radius=1.0)
    assert not left
    assert used < 10


def test_config_validation():
    with pytest.raises(ConfigError):
        optimizer.OptimizerConfig(eta=1.0, eps=0.1, r=0.1, R=0.1, Q=0,
                                  T_th=1, delta_inexact=0.0, delta_fail=0.1)
    with pytest.raises(ConfigError):
        optimizer.OptimizerConfig(eta=-1.0, eps=0.1, r=0.1, R=0.1, Q=1,
                                  T_th=1, delta_inexact=0.0, delta_fail=0.1)
