"""Analytic benchmark losses with closed-form gradients and Hessians.

Each problem knows its own smoothness constant L and Hessian-Lipschitz
constant rho, computed by hand and shipped as attributes. The test suite
guards these against finite differences and sampled Lipschitz checks.

Available problems (build via make_problem):
    convex_1d        (w - 1)^2, strongly convex, no saddle.
    quartic_1d       (w^2 - 1)^2 / 4; double well with a near-flat gradient
                     region around 0.
    saddle_2d        locally (w1^2 - lam * w2^2) / 2; clamped far from the
                     origin so a global minimum exists (see Saddle2D).
    mean_estimation  f(w; z) = ||w - z||^2 / 2 with z ~ N(mu, sigma^2 I).
    sine_1d          scale^{3/2} sin(scale^{-1/2} w + s), a bounded
                     oscillating loss with tiny gradients everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


def as_vector(w, dim=None):
    """Validate and return w as a float64 1-d array.

    Raises ConfigError on non-finite entries or dimension mismatch.
    """
    arr = np.asarray(w, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ConfigError(f"parameter vector must be 1-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError("parameter vector has non-finite entries")
    if dim is not None and arr.shape[0] != dim:
        raise ConfigError(f"dimension mismatch: expected {dim}, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class ProblemMeta:
    """The constants that drive parameter derivation."""

    dim: int
    smoothness: float
    hessian_lipschitz: float
    initial_gap: float

    def __post_init__(self):
        if self.smoothness <= 0 or self.hessian_lipschitz <= 0:
            raise ConfigError("L and rho must be strictly positive")
        if self.initial_gap < 0:
            raise ConfigError("initial gap must be non-negative")


class Problem:
    """Base class. Subclasses fill in value/grad/hessian in closed form."""

    name = "base"
    dim = 1
    smoothness = 1.0
    hessian_lipschitz = 1.0
    min_value = 0.0
    # Radius of the region where the declared constants are valid and where
    # probe/test points are sampled.
    domain_radius = 10.0

    def value(self, w):
        raise NotImplementedError

    def grad(self, w):
        raise NotImplementedError

    def hessian(self, w):
        raise NotImplementedError

    def hessian_min_eig(self, w):
        """Smallest eigenvalue of the Hessian at w."""
        H = self.hessian(w)
        if self.dim <= 1000:
            return float(np.linalg.eigvalsh(H)[0])
        return _min_eig_power(H)

    def meta(self, w0):
        w0 = as_vector(w0, self.dim)
        gap = float(self.value(w0) - self.min_value)
        # Guard against rounding when w0 is the minimizer itself.
        return ProblemMeta(self.dim, self.smoothness, self.hessian_lipschitz,
                           max(gap, 0.0))


def _min_eig_power(H, max_iter=2000, tol=1e-10):
    """Smallest eigenvalue via power iteration on c*I - H."""
    d = H.shape[0]
    c = float(np.abs(H).sum(axis=1).max())  # Gershgorin bound on |eigs|
    rng = np.random.default_rng(0)
    x = rng.normal(size=d)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = c * x - H @ x
        ny = np.linalg.norm(y)
        if ny == 0:
            return c  # H = c*I exactly
        lam_new = float(x @ y)
        x = y / ny
        if abs(lam_new - lam) <= tol * (1 + abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
    return c - lam


class Convex1D(Problem):
    """F(w) = (w - 1)^2. Minimizer w = 1."""

    name = "convex_1d"
    dim = 1
    smoothness = 2.0
    hessian_lipschitz = 1.0  # Hessian is constant; any positive rho is valid
    min_value = 0.0
    domain_radius = 10.0

    def value(self, w):
        w = as_vector(w, 1)
        return float((w[0] - 1.0) ** 2)

    def grad(self, w):
        w = as_vector(w, 1)
        return np.array([2.0 * (w[0] - 1.0)])

    def hessian(self, w):
        as_vector(w, 1)
        return np.array([[2.0]])


class Quartic1D(Problem):
    """F(w) = (w^2 - 1)^2 / 4, the double well.

    Near w = 0 the gradient is small (|F'| <= |w|), which lets an adversary
    with budget Delta >= |w0| freeze the iterate there. Constants hold on
    |w| <= 2.
    """

    name = "quartic_1d"
    dim = 1
    smoothness = 11.0           # |F''| = |3w^2 - 1| <= 11 on |w| <= 2
    hessian_lipschitz = 12.0    # |F'''| = 6|w| <= 12 on |w| <= 2
    min_value = 0.0
    domain_radius = 2.0

    def value(self, w):
        w = as_vector(w, 1)
        return float((w[0] ** 2 - 1.0) ** 2 / 4.0)

    def grad(self, w):
        w = as_vector(w, 1)
        return np.array([w[0] ** 3 - w[0]])

    def hessian(self, w):
        w = as_vector(w, 1)
        return np.array([[3.0 * w[0] ** 2 - 1.0]])


class Saddle2D(Problem):
    """Quadratic saddle (w1^2 - lam*w2^2)/2 near the origin, clamped outside.

    The raw quadratic is unbounded below, so along the negative-curvature
    coordinate w2 the curvature ramps linearly from -lam to +lam over
    b <= |w2| <= 2b (a C^2 transition) and stays +lam beyond. The global
    minima sit at (0, +-3b) with value -13*lam*b^2/6. The w1 direction is
    plain quadratic everywhere.

    Constants: L = max(1, lam), rho = 2*lam/b (the slope of the curvature
    ramp; zero elsewhere).
    """

    name = "saddle_2d"
    dim = 2

    def __init__(self, lam=0.5, b=1.0):
        if lam <= 0 or b <= 0:
            raise ConfigError("saddle_2d needs lam > 0 and b > 0")
        self.lam = float(lam)
        self.b = float(b)
        self.smoothness = max(1.0, self.lam)
        self.hessian_lipschitz = 2.0 * self.lam / self.b
        self.min_value = -13.0 * self.lam * self.b ** 2 / 6.0
        self.domain_radius = 4.0 * self.b

    def _phi(self, u):
        """Clamped 1-d profile along w2: value, derivative, second derivative."""
        lam, b = self.lam, self.b
        a = abs(u)
        sgn = 1.0 if u >= 0 else -1.0
        if a <= b:
            return -lam * a * a / 2.0, -lam * u, -lam
        if a <= 2.0 * b:
            s = a - b
            val = -lam * b * b / 2.0 - lam * b * s - lam * s * s / 2.0 \
                + lam * s ** 3 / (3.0 * b)
            der = sgn * (-lam * b - lam * s + lam * s * s / b)
            sec = -lam + 2.0 * lam * s / b
            return val, der, sec
        s2 = a - 2.0 * b
        val = -5.0 * lam * b * b / 3.0 - lam * b * s2 + lam * s2 * s2 / 2.0
        der = sgn * (-lam * b + lam * s2)
        return val, der, lam

    def value(self, w):
        w = as_vector(w, 2)
        val, _, _ = self._phi(w[1])
        return float(0.5 * w[0] ** 2 + val)

    def grad(self, w):
        w = as_vector(w, 2)
        _, der, _ = self._phi(w[1])
        return np.array([w[0], der])

    def hessian(self, w):
        w = as_vector(w, 2)
        _, _, sec = self._phi(w[1])
        return np.array([[1.0, 0.0], [0.0, sec]])


class MeanEstimation(Problem):
    """f(w; z) = ||w - z||^2 / 2 with z ~ N(mu, sigma^2 I).

    Population loss F(w) = ||w - mu||^2 / 2 + d*sigma^2/2, so the population
    gradient is exactly w - mu and the Hessian is the identity.
    """

    name = "mean_estimation"

    def __init__(self, mu, sigma=1.0):
        self.mu = as_vector(mu)
        if sigma <= 0:
            raise ConfigError("mean_estimation needs sigma > 0")
        self.sigma = float(sigma)
        self.dim = self.mu.shape[0]
        self.smoothness = 1.0
        self.hessian_lipschitz = 1.0  # constant Hessian
        self.min_value = self.dim * self.sigma ** 2 / 2.0
        self.domain_radius = 10.0 * max(1.0, float(np.linalg.norm(self.mu)))

    def value(self, w):
        w = as_vector(w, self.dim)
        return float(0.5 * np.sum((w - self.mu) ** 2)
                     + 0.5 * self.dim * self.sigma ** 2)

    def grad(self, w):
        w = as_vector(w, self.dim)
        return w - self.mu

    def hessian(self, w):
        as_vector(w, self.dim)
        return np.eye(self.dim)

    def sample_grad(self, w, z):
        w = as_vector(w, self.dim)
        z = as_vector(z, self.dim)
        return w - z

    def draw_samples(self, n, rng):
        """n i.i.d. draws from N(mu, sigma^2 I), shape (n, d)."""
        return self.mu + self.sigma * rng.standard_normal((n, self.dim))


class Sine1D(Problem):
    """F(w) = scale^{3/2} sin(scale^{-1/2} w + s).

    For small scale the gradient magnitude never exceeds the scale itself,
    making every point look nearly stationary to a threshold test.
    """

    name = "sine_1d"
    dim = 1

    def __init__(self, scale=1.0, shift=0.0):
        if scale <= 0:
            raise ConfigError("sine_1d needs scale > 0")
        self.scale = float(scale)
        self.shift = float(shift)
        self.smoothness = np.sqrt(self.scale)
        self.hessian_lipschitz = 1.0
        self.min_value = -self.scale ** 1.5
        self.domain_radius = 10.0 * np.sqrt(self.scale) * np.pi

    def _arg(self, w):
        return w / np.sqrt(self.scale) + self.shift

    def value(self, w):
        w = as_vector(w, 1)
        return float(self.scale ** 1.5 * np.sin(self._arg(w[0])))

    def grad(self, w):
        w = as_vector(w, 1)
        return np.array([self.scale * np.cos(self._arg(w[0]))])

    def hessian(self, w):
        w = as_vector(w, 1)
        return np.array([[-np.sqrt(self.scale) * np.sin(self._arg(w[0]))]])


_REGISTRY = {
    "convex_1d": Convex1D,
    "quartic_1d": Quartic1D,
    "saddle_2d": Saddle2D,
    "mean_estimation": MeanEstimation,
    "sine_1d": Sine1D,
}


def make_problem(name, **params):
    """Instantiate a benchmark problem by name.

    params are forwarded to the constructor (lam/b for saddle_2d, mu/sigma
    for mean_estimation, scale/shift for sine_1d). Unknown names or stray
    parameters raise ConfigError.
    """
    if name not in _REGISTRY:
        raise ConfigError(
            f"unknown problem {name!r}; choose from {sorted(_REGISTRY)}")
    cls = _REGISTRY[name]
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from exc
