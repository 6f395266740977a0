"""Robust aggregation of worker gradients into a single estimate.

Three aggregators are provided: coordinate-wise median, coordinate-wise
beta-trimmed mean, and iterative spectral filtering. Each takes a batch of
m gradient vectors (one per worker, rows of an (m, d) array) and returns a
single d-vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FilterCollapse


def _as_batch(vectors):
    batch = np.asarray(vectors, dtype=float)
    if batch.ndim == 1:
        batch = batch.reshape(1, -1)
    if batch.ndim != 2 or batch.shape[0] < 1:
        raise ConfigError("gradient batch must be a non-empty (m, d) array")
    if not np.all(np.isfinite(batch)):
        raise ConfigError("gradient batch has non-finite entries")
    return batch


def coordinate_median(vectors):
    """Per-coordinate median; for even m, the midpoint of the central pair."""
    batch = _as_batch(vectors)
    return np.median(batch, axis=0)


def trimmed_mean(vectors, beta):
    """Coordinate-wise beta-trimmed mean.

    Removes the ceil(beta*m) largest and smallest values in each coordinate
    and averages the survivors (division by survivor count, not by
    (1-2*beta)*m, so the result is unbiased when beta*m is fractional).
    """
    batch = _as_batch(vectors)
    m = batch.shape[0]
    if not 0.0 <= beta < 0.5:
        raise ConfigError("trimmed mean needs beta in [0, 1/2)")
    k = int(np.ceil(beta * m))
    if m - 2 * k < 1:
        raise ConfigError(f"beta={beta} leaves no survivors out of m={m}")
    if k == 0:
        return batch.mean(axis=0)
    s = np.sort(batch, axis=0)
    return s[k:m - k].mean(axis=0)


def top_principal_direction(centered, weights, max_iter=1000, tol=1e-6,
                            seed=0):
    """Top eigenpair of sum_i weights[i] * y_i y_i^T via power iteration.

    Matrix-free: only products Y^T (weights * (Y v)) are formed. Returns
    (eigenvalue, unit direction) with the sign fixed so the first nonzero
    entry of the direction is positive. All-zero input returns eigenvalue 0
    and the first basis vector.
    """
    Y = np.asarray(centered, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(1, -1)
    w = np.asarray(weights, dtype=float)
    if w.shape[0] != Y.shape[0]:
        raise ConfigError("weights length must match number of points")
    if np.any(w < 0):
        raise ConfigError("weights must be non-negative")
    d = Y.shape[1]
    if not np.any(w * np.abs(Y).sum(axis=1)):
        e = np.zeros(d)
        e[0] = 1.0
        return 0.0, e

    rng = np.random.default_rng(seed)
    v = rng.normal(size=d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        u = Y.T @ (w * (Y @ v))
        nu = np.linalg.norm(u)
        if nu == 0:
            # v landed in the nullspace; restart from a fresh direction
            v = rng.normal(size=d)
            v /= np.linalg.norm(v)
            continue
        lam_new = float(v @ u)
        v_new = u / nu
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            v, lam = v_new, lam_new
            break
        v, lam = v_new, lam_new

    k = np.flatnonzero(v)
    if k.size and v[k[0]] < 0:
        v = -v
    return lam, v


def iterative_filter(vectors, alpha, sigma, return_active=False):
    """Spectral outlier filtering, then mean of the surviving set.

    Each round: center the active points at their weighted mean, score each
    point by its squared projection onto the top principal direction of the
    weighted second-moment matrix, and stop when sum_i c_i tau_i <= 8*m*sigma^2
    (m is the original batch size throughout). Otherwise down-weight
    c_i <- (1 - tau_i/tau_max) c_i and drop points with c_i <= 1/2.

    Raises FilterCollapse when fewer than (1 - 2*alpha)*m points survive;
    callers are expected to fall back to coordinate_median.
    """
    batch = _as_batch(vectors)
    m = batch.shape[0]
    if not 0.0 <= alpha <= 0.25:
        raise ConfigError("iterative filtering needs alpha in [0, 1/4]")
    if sigma <= 0:
        raise ConfigError("iterative filtering needs sigma > 0")
    if m < 4:
        raise ConfigError("iterative filtering needs m >= 4")

    threshold = 8.0 * m * sigma ** 2
    floor = (1.0 - 2.0 * alpha) * m

    active = np.arange(m)
    c = np.ones(m)
    while True:
        if active.size < floor:
            raise FilterCollapse(
                f"active set shrank to {active.size} < {floor:.1f}")
        pts = batch[active]
        ca = c[active]
        # Uniform-weight simplification of the inner minimization: each
        # point is compared against the plain mean of the active set; the
        # weights c enter only through the second-moment matrix.
        Y = pts - pts.mean(axis=0)
        _, v = top_principal_direction(Y, ca)
        tau = (Y @ v) ** 2
        if float(ca @ tau) <= threshold:
            out = pts.mean(axis=0)
            return (out, active) if return_active else out
        tau_max = tau.max()
        c[active] = (1.0 - tau / tau_max) * ca
        active = active[c[active] > 0.5]


@dataclass(frozen=True)
class AggregatorSpec:
    """Which aggregator to run and its knobs, as read from a config."""

    kind: str
    beta: float = 0.0
    alpha: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("median", "trimmed_mean", "iterative_filter"):
            raise ConfigError(f"unknown aggregator kind {self.kind!r}")
        if self.kind == "trimmed_mean" and not 0.0 <= self.beta < 0.5:
            raise ConfigError("trimmed_mean needs beta in [0, 1/2)")
        if self.kind == "iterative_filter":
            if not 0.0 <= self.alpha <= 0.25:
                raise ConfigError("iterative_filter needs alpha <= 1/4")
            if self.sigma <= 0:
                raise ConfigError("iterative_filter needs sigma > 0")

    def aggregate(self, vectors):
        """Apply the configured aggregator; filtering collapse falls back
        to the coordinate-wise median of the raw batch. Returns
        (result, fallback_used)."""
        if self.kind == "median":
            return coordinate_median(vectors), False
        if self.kind == "trimmed_mean":
            return trimmed_mean(vectors, self.beta), False
        try:
            return iterative_filter(vectors, self.alpha, self.sigma), False
        except FilterCollapse:
            return coordinate_median(vectors), True
