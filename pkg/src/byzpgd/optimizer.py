"""Perturbed gradient descent under an inexact gradient oracle.

The main loop runs inexact gradient descent until the aggregated gradient
norm drops below eps, then tries to escape via up to Q rounds of uniform
ball perturbation followed by at most T_th descent steps each; moving
distance R from a round's start counts as an escape. If all Q rounds fail,
the pre-perturbation iterate is returned as the answer.

Oracles are callables g_hat = oracle(w, phase, escape_round). One oracle
call corresponds to one master-worker round trip and is what the iteration
budget counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ConvergenceGuarantee:
    """What the parameter derivation promises for the output."""

    grad_norm_bound: float
    min_eig_bound: float
    iter_bound: int


@dataclass(frozen=True)
class OptimizerConfig:
    """The knobs of the descent/escape loop.

    eps is the gradient-norm threshold that triggers an escape attempt;
    delta_inexact is the oracle inexactness the config was derived for
    (0 for an exact oracle).
    """

    eta: float
    eps: float
    r: float
    R: float
    Q: int
    T_th: int
    delta_inexact: float
    delta_fail: float
    max_parallel_iters: int | None = None
    guarantee: ConvergenceGuarantee | None = None

    def __post_init__(self):
        if min(self.eta, self.eps, self.r, self.R) <= 0:
            raise ConfigError("eta, eps, r, R must be positive")
        if self.Q < 1 or self.T_th < 1:
            raise ConfigError("Q and T_th must be at least 1")
        if self.delta_inexact < 0 or not 0 < self.delta_fail < 1:
            raise ConfigError("need delta_inexact >= 0 and delta_fail in (0,1)")


@dataclass
class EscapeOutcome:
    escaped: bool
    iterate: np.ndarray
    aggregated_grad: np.ndarray
    rounds_used: int
    steps_used: int


@dataclass
class RunTrace:
    """Per-oracle-call records plus a single run summary dict."""

    records: list
    summary: dict


class _BudgetExhausted(Exception):
    pass


def derive_config(meta, delta_inexact, delta_fail):
    """Parameter choice for a Delta-inexact oracle.

    eta = 1/L, eps = 3*Delta, r = 4 Delta^{3/5} d^{3/10} / sqrt(rho),
    R = Delta^{2/5} d^{1/5} / sqrt(rho), with Q and T_th from the same
    derivation, rounded up and floored at 1. The companion guarantee gives
    the gradient bound 4*Delta, the curvature floor, and the parallel
    iteration bound (2 (F0-F*) L / (3 Delta^2)) * Q, which also becomes the
    default iteration budget.
    """
    if not 0.0 < delta_inexact <= 1.0:
        raise ConfigError("delta_inexact must be in (0, 1]")
    if not 0.0 < delta_fail < 1.0:
        raise ConfigError("delta_fail must be in (0, 1)")
    L = meta.smoothness
    rho = meta.hessian_lipschitz
    d = meta.dim
    gap = meta.initial_gap
    dl = delta_inexact

    eta = 1.0 / L
    eps = 3.0 * dl
    r = 4.0 * dl ** 0.6 * d ** 0.3 / math.sqrt(rho)
    R = dl ** 0.4 * d ** 0.2 / math.sqrt(rho)

    denom = 48.0 * L * delta_fail * (dl ** 1.2 * d ** 0.6 + dl ** 1.4 * d ** 0.7)
    arg = rho * gap / denom
    Q = 1 if arg <= 1.0 else max(1, math.ceil(2.0 * math.log(arg)))
    T_th = max(1, math.ceil(
        L / (384.0 * (math.sqrt(rho) + L) * (dl ** 0.4 * d ** 0.2
                                             + dl ** 0.6 * d ** 0.3))))

    iter_bound = max(1, math.ceil(2.0 * gap * L / (3.0 * dl ** 2) * Q))
    min_eig_bound = -1900.0 * (math.sqrt(rho) + L) * dl ** 0.4 * d ** 0.2 \
        * math.log(10.0 / dl)
    guarantee = ConvergenceGuarantee(4.0 * dl, min_eig_bound, iter_bound)
    return OptimizerConfig(eta=eta, eps=eps, r=r, R=R, Q=Q, T_th=T_th,
                           delta_inexact=dl, delta_fail=delta_fail,
                           max_parallel_iters=iter_bound,
                           guarantee=guarantee)


def derive_exact_config(meta, eps, delta_fail):
    """Parameter choice for the exact-oracle regime.

    Requires eps strictly inside (0, min(1/rho, 4/(L^2 rho))). Uses a single
    perturbation round with r = eps, R = sqrt(eps/rho), and
    T_th = L / (12 rho (R + r)), rounded up.
    """
    if not 0.0 < delta_fail < 1.0:
        raise ConfigError("delta_fail must be in (0, 1)")
    L = meta.smoothness
    rho = meta.hessian_lipschitz
    d = meta.dim
    gap = meta.initial_gap
    hi = min(1.0 / rho, 4.0 / (L * L * rho))
    if not 0.0 < eps < hi:
        raise ConfigError(f"eps must lie strictly in (0, {hi})")

    R = math.sqrt(eps / rho)
    T_th = max(1, math.ceil(L / (12.0 * rho * (R + eps))))
    iter_bound = max(1, math.ceil(2.0 * L * gap / eps ** 2))
    if gap > 0:
        log_arg = 8.0 * rho * math.sqrt(d) * gap / (delta_fail * eps ** 2)
        min_eig_bound = -60.0 * math.sqrt(rho * eps) * math.log(log_arg)
    else:
        min_eig_bound = 0.0
    guarantee = ConvergenceGuarantee(eps, min_eig_bound, iter_bound)
    return OptimizerConfig(eta=1.0 / L, eps=eps, r=eps, R=R, Q=1, T_th=T_th,
                           delta_inexact=0.0, delta_fail=delta_fail,
                           max_parallel_iters=iter_bound,
                           guarantee=guarantee)


def descend_step(w, g_hat, eta):
    """One inexact gradient step w - eta * g_hat."""
    return np.asarray(w, dtype=float) - eta * np.asarray(g_hat, dtype=float)


def sample_ball(rng, radius, dim):
    """One draw uniform on the solid l2 ball of the given radius."""
    direction = rng.standard_normal(dim)
    n = np.linalg.norm(direction)
    while n == 0.0:
        direction = rng.standard_normal(dim)
        n = np.linalg.norm(direction)
    u = rng.uniform()
    return radius * u ** (1.0 / dim) * direction / n


def escape(w_tilde, cfg, oracle, rng, _query=None):
    """Up to Q perturb-and-descend rounds from w_tilde.

    Each round starts at w_tilde + p with p uniform on the radius-r ball
    and takes at most T_th descent steps; the distance from the round's
    start is tested against R after every step (the gradient at the tested
    point is computed first so a success returns it alongside the iterate).
    """
    if _query is None:
        def _query(wq, phase, k, dist, escaped):
            return oracle(wq, phase, k)
    w_tilde = np.asarray(w_tilde, dtype=float)
    wp = w_tilde.copy()
    g = np.zeros_like(wp)
    steps = 0
    for k in range(1, cfg.Q + 1):
        p = sample_ball(rng, cfg.r, w_tilde.shape[0])
        wp = w_tilde + p
        wp0 = wp.copy()
        for _t in range(cfg.T_th + 1):
            dist = float(np.linalg.norm(wp - wp0))
            hit = dist >= cfg.R
            g = _query(wp, "escape", k, dist, hit)
            steps += 1
            if hit:
                return EscapeOutcome(True, wp, g, k, steps)
            wp = wp - cfg.eta * g
    return EscapeOutcome(False, wp, g, cfg.Q, steps)


def byzantine_pgd(oracle, cfg, w0, rng, true_grad_fn=None,
                  keep_records=True):
    """Full descent/escape loop.

    Returns (w_tilde, trace, guarantee). w_tilde is the first iterate at
    which the aggregated gradient norm fell below eps and a full Q-round
    escape then failed. Every oracle call is recorded (when keep_records)
    and counted against cfg.max_parallel_iters; exhausting the budget ends
    the run with summary["budget_status"] == "exceeded" and the current
    iterate as a best-effort answer.
    """
    w = np.array(w0, dtype=float)
    records = []
    state = {"calls": 0, "escapes_attempted": 0, "escapes_succeeded": 0}
    budget = cfg.max_parallel_iters

    def query(wq, phase, k, dist, escaped):
        if budget is not None and state["calls"] >= budget:
            raise _BudgetExhausted
        g = oracle(wq, phase, k)
        state["calls"] += 1
        if keep_records:
            gnt = float(np.linalg.norm(true_grad_fn(wq))) \
                if true_grad_fn is not None else float("nan")
            records.append({
                "iteration": state["calls"],
                "phase": phase,
                "w": tuple(float(x) for x in wq),
                "g_hat": tuple(float(x) for x in g),
                "grad_norm_hat": float(np.linalg.norm(g)),
                "grad_norm_true": gnt,
                "escape_round": 0 if k is None else int(k),
                "dist_from_round_start": float(dist),
                "escaped": bool(escaped),
            })
        return g

    status = "ok"
    w_tilde = None
    g_tilde = None
    try:
        g = query(w, "descent", None, 0.0, False)
        while True:
            if float(np.linalg.norm(g)) <= cfg.eps:
                w_tilde, g_tilde = w.copy(), g.copy()
                state["escapes_attempted"] += 1
                out = escape(w_tilde, cfg, oracle, rng, _query=query)
                if not out.escaped:
                    break
                state["escapes_succeeded"] += 1
                w, g = out.iterate, out.aggregated_grad
            w = w - cfg.eta * g
            g = query(w, "descent", None, 0.0, False)
    except _BudgetExhausted:
        status = "exceeded"
        w_tilde = w.copy()
        g_tilde = None

    summary = {
        "w_tilde": tuple(float(x) for x in w_tilde),
        "g_hat_norm_at_output": None if g_tilde is None
        else float(np.linalg.norm(g_tilde)),
        "parallel_iterations": state["calls"],
        "escapes_attempted": state["escapes_attempted"],
        "escapes_succeeded": state["escapes_succeeded"],
        "budget_status": status,
    }
    return w_tilde, RunTrace(records, summary), cfg.guarantee


def plain_inexact_gd(oracle, eta, w0, max_iters, leave_radius=None,
                     center=None, fixed_point_exit=True):
    """Gradient descent with no perturbation (the no-escape ablation).

    Runs until max_iters, until the iterate leaves the ball of
    leave_radius around center (strictly), or until a bitwise fixed point
    is reached (from which the dynamics can never move again). Returns
    (w, left, iters_used).
    """
    w = np.array(w0, dtype=float)
    if center is None:
        center = np.zeros_like(w)
    left = False
    used = 0
    for _i in range(max_iters):
        g = oracle(w, "descent", None)
        w_new = w - eta * g
        used += 1
        if leave_radius is not None \
                and float(np.linalg.norm(w_new - center)) > leave_radius:
            w = w_new
            left = True
            break
        if fixed_point_exit and np.array_equal(w_new, w):
            break
        w = w_new
    return w, left, used
