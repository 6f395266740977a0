"""Byzantine worker strategies.

Two attack surfaces are modeled:

* message level (craft): the strategy emits the alpha*m vectors the
  corrupted workers send in one round; the aggregator sees them mixed with
  honest messages. Whether the attack actually steered the aggregate is
  asserted post hoc by the harness audit.

* oracle level (oracle_override): the strategy directly picks the
  aggregated gradient as an arbitrary vector within l2 distance
  delta_budget of the true population gradient, the cleanest realization
  of an inexact gradient oracle controlled by an adversary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

KINDS = ("none", "zero_trap", "curvature_kill", "shift", "sign_flip",
         "gaussian_noise")


@dataclass(frozen=True)
class RoundContext:
    """Everything the adversary can see in one round: the current iterate,
    all honest messages, the exact population gradient, and the phase of
    the algorithm. It never sees the master's future random draws."""

    w: np.ndarray
    honest_grads: np.ndarray          # messages of the honest workers
    byz_honest_grads: np.ndarray      # what the corrupted workers would send
    true_population_grad: np.ndarray
    phase: str = "descent"            # "descent" or "escape"
    round_index: int = 0
    escape_round: int | None = None


@dataclass(frozen=True)
class AdversaryStrategy:
    """Attack kind plus its knobs.

    delta_budget: the inexactness budget the trap attacks aim to stay
        inside (zero_trap, curvature_kill).
    target_coord: coordinate whose gradient component curvature_kill
        drives toward zero.
    shift_vector: additive offset for the shift attack; if omitted,
        shift_scale times the first basis vector.
    scale: multiplier for sign_flip (messages are -scale * honest mean).
    noise_scale: standard deviation for gaussian_noise.
    """

    kind: str
    delta_budget: float = 0.0
    target_coord: int = 0
    shift_vector: np.ndarray | None = None
    shift_scale: float = 0.0
    scale: float = 1.0
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown adversary kind {self.kind!r}")
        if self.kind in ("zero_trap", "curvature_kill") \
                and self.delta_budget <= 0:
            raise ConfigError(f"{self.kind} needs delta_budget > 0")

    def _shift(self, dim):
        if self.shift_vector is not None:
            v = np.asarray(self.shift_vector, dtype=float)
            if v.shape != (dim,):
                raise ConfigError("shift_vector dimension mismatch")
            return v
        v = np.zeros(dim)
        v[0] = self.shift_scale
        return v


def stuck_probability(x):
    """Probability that the saddle attack freezes an iterate started
    uniformly on the 2-d disk of radius r, with x = delta/(lam*r).

    The frozen set is the horizontal strip |w_2| <= delta/lam, whose area
    fraction inside the disk is (2/pi)(arcsin x + x sqrt(1 - x^2)); the
    whole disk is frozen once x >= 1.
    """
    if x >= 1.0:
        return 1.0
    if x <= 0.0:
        return 0.0
    return (2.0 / np.pi) * (np.arcsin(x) + x * np.sqrt(1.0 - x * x))


def zero_trap_target(true_grad, delta_budget):
    """The closest-to-zero vector within delta_budget of the true gradient.

    Equals exactly zero whenever the true gradient norm is at most the
    budget, which is what freezes an iterate in a flat region.
    """
    g = np.asarray(true_grad, dtype=float)
    norm = np.linalg.norm(g)
    if norm <= delta_budget:
        return np.zeros_like(g)
    return g * (1.0 - delta_budget / norm)


def curvature_kill_target(true_grad, target_coord, delta_budget):
    """Drive one gradient coordinate toward zero within the budget.

    On the saddle benchmark this zeroes the negative-curvature component
    whenever |g_k| <= delta_budget, simulating a fake local minimum; when
    the component is larger, it is shrunk by the full budget, the worst the
    adversary can do.
    """
    g = np.array(true_grad, dtype=float)
    gk = g[target_coord]
    g[target_coord] = np.sign(gk) * max(0.0, abs(gk) - delta_budget)
    return g


def curvature_kill_messages(ctx, lam, delta_budget, n_byz):
    """Message-level saddle attack on the 2-d saddle benchmark.

    Feasibility window: with local curvature -lam along coordinate 1, the
    target aggregate (w_1, 0) lies within delta_budget of the true gradient
    exactly when |w_2| <= delta_budget/lam. Inside the window all n_byz
    messages sit at the target; outside, the attack cannot help and the
    corrupted workers report their honest values.
    """
    w = ctx.w
    if abs(w[1]) <= delta_budget / lam:
        target = np.array([w[0], 0.0])
        return np.tile(target, (n_byz, 1))
    return np.array(ctx.byz_honest_grads, dtype=float, copy=True)


def craft(strategy, ctx, alpha, m, rng):
    """Byzantine messages for one round, shape (alpha*m, d).

    alpha*m must be integral (validated at config time; re-checked here).
    Honest messages are never touched; the caller mixes the two sets.
    """
    n_byz = alpha * m
    if abs(n_byz - round(n_byz)) > 1e-9:
        raise ConfigError(f"alpha*m = {n_byz} is not integral")
    n_byz = int(round(n_byz))
    d = ctx.w.shape[0]
    if n_byz == 0:
        return np.zeros((0, d))

    kind = strategy.kind
    if kind == "none":
        return np.array(ctx.byz_honest_grads, dtype=float, copy=True)
    if kind == "zero_trap":
        target = zero_trap_target(ctx.true_population_grad,
                                  strategy.delta_budget)
        return np.tile(target, (n_byz, 1))
    if kind == "curvature_kill":
        target = curvature_kill_target(ctx.true_population_grad,
                                       strategy.target_coord,
                                       strategy.delta_budget)
        return np.tile(target, (n_byz, 1))
    if kind == "shift":
        return np.asarray(ctx.byz_honest_grads, dtype=float) \
            + strategy._shift(d)
    if kind == "sign_flip":
        g = ctx.honest_grads.mean(axis=0)
        return np.tile(-strategy.scale * g, (n_byz, 1))
    if kind == "gaussian_noise":
        return np.asarray(ctx.byz_honest_grads, dtype=float) \
            + strategy.noise_scale * rng.standard_normal((n_byz, d))
    raise ConfigError(f"unknown adversary kind {kind!r}")


def oracle_override(strategy, w, true_grad, delta_budget, rng):
    """Directly pick the aggregate within the delta ball around the true
    gradient, bypassing workers and aggregator entirely.

    Every kind first forms its unconstrained target and is then pulled back
    onto the ball boundary if the target falls outside; the trap attacks
    are exact (their targets are the ball projections by construction).
    """
    g = np.asarray(true_grad, dtype=float)
    kind = strategy.kind
    if kind == "none":
        return g.copy()
    if kind == "zero_trap":
        return zero_trap_target(g, delta_budget)
    if kind == "curvature_kill":
        return curvature_kill_target(g, strategy.target_coord, delta_budget)
    if kind == "shift":
        target = g + strategy._shift(g.shape[0])
    elif kind == "sign_flip":
        target = -strategy.scale * g
    elif kind == "gaussian_noise":
        target = g + strategy.noise_scale * rng.standard_normal(g.shape[0])
    else:
        raise ConfigError(f"unknown adversary kind {kind!r}")
    diff = target - g
    dist = np.linalg.norm(diff)
    if dist <= delta_budget or dist == 0.0:
        return target
    return g + diff * (delta_budget / dist)
