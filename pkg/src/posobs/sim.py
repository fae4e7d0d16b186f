"""Closed-loop simulation of the plant with upper and lower observers.

Deterministic runs propagate::

    u    = K_lower xlow + K_upper xbar
    y    = C x (+ F v)
    x+   = A x + B u (+ E w)
    xbar+ = (A - L_upper C) xbar + L_upper y + B u
    xlow+ = (A - L_lower C) xlow + L_lower y + B u

Noise draws are nonnegative with unit mean: ``Gamma(k, 1/k)``, which for
the default shape ``k = 1`` is ``Exponential(1)`` sampled by inverse CDF.

Random streams come from ``numpy``'s ``SFC64`` generator seeded through
``SeedSequence``.  Each Monte Carlo run ``r`` owns the child stream
``SeedSequence(seed, spawn_key=(NOISE_STREAM, r))`` and initial-state draws
use ``spawn_key=(INIT_STREAM,)``, so results do not depend on the order in
which runs are evaluated.  Reproducibility is promised within this
implementation only.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, SingularMatrixError
from .linalg import solve_linear, spectral_radius
from .model import STABILITY_TOL, build_error_dynamics

__all__ = [
    "INIT_STREAM",
    "NOISE_STREAM",
    "NoiseConfig",
    "Trajectory",
    "ExpectedState",
    "OrderingViolation",
    "noise_generator",
    "init_generator",
    "sample_gamma_unit_mean",
    "uniform_initial_state",
    "simulate_deterministic",
    "simulate_noisy",
    "monte_carlo_mean",
    "expected_fixed_point",
    "check_ordering",
]

INIT_STREAM = 0
NOISE_STREAM = 1
CONE_TOL = 1e-9


@dataclass(frozen=True)
class NoiseConfig:
    """Unit-mean gamma noise: shape ``k``, scale ``1/k``."""

    shape: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.shape > 0:
            raise ValueError("gamma shape must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


def noise_generator(seed, run=0):
    """Independent generator for Monte Carlo run ``run``."""
    return np.random.Generator(np.random.SFC64(
        np.random.SeedSequence(int(seed), spawn_key=(NOISE_STREAM, int(run)))))


def init_generator(seed):
    """Generator reserved for random initial states."""
    return np.random.Generator(np.random.SFC64(
        np.random.SeedSequence(int(seed), spawn_key=(INIT_STREAM,))))


def sample_gamma_unit_mean(cfg, rng, size=None):
    """Draw nonnegative noise with unit mean.

    For ``cfg.shape == 1`` this is ``-log(1 - U)`` with ``U`` uniform on
    ``[0, 1)``; other shapes use ``Gamma(shape, 1/shape)``.
    """
    if cfg.shape == 1.0:
        return -np.log1p(-rng.random(size))
    return rng.gamma(cfg.shape, 1.0 / cfg.shape, size)


def uniform_initial_state(n, seed):
    """State with entries drawn uniformly from ``[0, 1]`` on the init stream."""
    return init_generator(seed).random(n)


@dataclass
class Trajectory:
    """Time records for ``t = 0 .. T``; arrays have ``T + 1`` rows.

    Ensemble means from :func:`monte_carlo_mean` also carry standard errors
    in the ``*_se`` fields, which are None for single runs.
    """

    x: np.ndarray
    xbar: np.ndarray
    xlow: np.ndarray
    u: np.ndarray
    y: np.ndarray
    runs: int = 1
    x_se: np.ndarray = None
    xbar_se: np.ndarray = None
    xlow_se: np.ndarray = None

    @property
    def T(self):
        return self.x.shape[0] - 1

    @property
    def t(self):
        return np.arange(self.x.shape[0])


def _vec(v, n, name):
    arr = np.asarray(v, dtype=float).ravel()
    if arr.size != n:
        raise DimensionError(f"{name} has length {arr.size}, expected {n}")
    return arr


def _run_batch(sys, g, x0, xbar0, xlow0, T, w=None, v=None):
    """Propagate ``R`` runs at once.

    ``w`` and ``v`` hold per-run noise of shape ``(R, T, q)``; when absent
    the batch has a single noise-free run.  Returns arrays with shape
    ``(R, T + 1, dim)``.
    """
    g.check_dims(sys)
    n, m, p = sys.n, sys.m, sys.p
    A, B, C = sys.A, sys.B, sys.C
    Lu, Ll, Ku, Kl = g.L_upper, g.L_lower, g.K_upper, g.K_lower
    R = 1 if w is None else w.shape[0]
    x = np.tile(_vec(x0, n, "x0"), (R, 1))
    xbar = np.tile(_vec(xbar0, n, "xbar0"), (R, 1))
    xlow = np.tile(_vec(xlow0, n, "xlow0"), (R, 1))
    X = np.empty((R, T + 1, n))
    XB = np.empty((R, T + 1, n))
    XL = np.empty((R, T + 1, n))
    U = np.empty((R, T + 1, m))
    Y = np.empty((R, T + 1, p))
    Aup, Alow = A - Lu @ C, A - Ll @ C
    Ew = None if w is None else w @ sys.E.T
    Fv = None if v is None else v @ sys.F.T
    for t in range(T + 1):
        u = xlow @ Kl.T + xbar @ Ku.T
        y = x @ C.T
        if Fv is not None and t < T:
            y = y + Fv[:, t]
        X[:, t], XB[:, t], XL[:, t], U[:, t], Y[:, t] = x, xbar, xlow, u, y
        if t == T:
            break
        Bu = u @ B.T
        x_next = x @ A.T + Bu
        if Ew is not None:
            x_next = x_next + Ew[:, t]
        xbar = xbar @ Aup.T + y @ Lu.T + Bu
        xlow = xlow @ Alow.T + y @ Ll.T + Bu
        x = x_next
    return X, XB, XL, U, Y


def simulate_deterministic(sys, g, x0, xbar0, xlow0, T):
    """Noise-free closed-loop trajectory over ``T`` steps."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    X, XB, XL, U, Y = _run_batch(sys, g, x0, xbar0, xlow0, int(T))
    return Trajectory(X[0], XB[0], XL[0], U[0], Y[0])


def _draw_noise(sys, T, cfg, runs):
    qw, qv = sys.E.shape[1], sys.F.shape[1]
    w = np.empty((len(runs), T, qw))
    v = np.empty((len(runs), T, qv))
    for i, r in enumerate(runs):
        rng = noise_generator(cfg.seed, r)
        w[i] = sample_gamma_unit_mean(cfg, rng, (T, qw))
        v[i] = sample_gamma_unit_mean(cfg, rng, (T, qv))
    return w, v


def simulate_noisy(sys, g, x0, xbar0, xlow0, T, cfg, run=0):
    """One noisy trajectory; ``run`` selects the child noise stream.

    The measurement noise ``v(t)`` enters ``y(t)`` for ``t < T``; the final
    record holds the noise-free output of the terminal state.
    """
    sys._need_noise()
    T = int(T)
    w, v = _draw_noise(sys, T, cfg, [run])
    X, XB, XL, U, Y = _run_batch(sys, g, x0, xbar0, xlow0, T, w, v)
    return Trajectory(X[0], XB[0], XL[0], U[0], Y[0])


def monte_carlo_mean(sys, g, x0, xbar0, xlow0, T, N, cfg, chunk=1000):
    """Ensemble mean of ``N`` independent noisy runs with per-step standard errors.

    Runs are processed in chunks of ``chunk``; run ``r`` always uses its own
    child stream, so the result is independent of the chunking.
    """
    sys._need_noise()
    if N < 1:
        raise ValueError("N must be at least 1")
    T = int(T)
    sums = None
    sq = None
    for start in range(0, N, chunk):
        runs = range(start, min(N, start + chunk))
        w, v = _draw_noise(sys, T, cfg, runs)
        parts = _run_batch(sys, g, x0, xbar0, xlow0, T, w, v)
        s = [a.sum(axis=0) for a in parts]
        q = [np.square(a).sum(axis=0) for a in parts[:3]]
        sums = s if sums is None else [a + b for a, b in zip(sums, s)]
        sq = q if sq is None else [a + b for a, b in zip(sq, q)]
    means = [a / N for a in sums]
    if N > 1:
        se = [np.sqrt(np.maximum(q / N - mu ** 2, 0.0) * N / (N - 1) / N)
              for q, mu in zip(sq, means[:3])]
    else:
        se = [np.zeros_like(mu) for mu in means[:3]]
    return Trajectory(*means, runs=N, x_se=se[0], xbar_se=se[1], xlow_se=se[2])


@dataclass
class ExpectedState:
    """Fixed point of the mean dynamics.

    ``X`` is ordered ``(x, xbar, xlow)``; ``X_e`` is the same point in
    error coordinates ``(x, ebar, elow)``.
    """

    X: np.ndarray
    X_e: np.ndarray
    in_cone: bool
    attracting: bool
    rho: float
    residual: float


def expected_fixed_point(sys, g):
    """Solve ``(I - G) X_e = bias`` for the asymptotic mean.

    Raises
    ------
    SingularMatrixError
        If ``I - G`` is singular, i.e. ``G`` has an eigenvalue at 1.
    """
    G, bias = build_error_dynamics(sys, g)
    n = sys.n
    I = np.eye(3 * n)
    try:
        Xe = solve_linear(I - G, bias)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            "I - G is singular: the closed loop has an eigenvalue at 1") from exc
    x, ebar, elow = Xe[:n], Xe[n:2 * n], Xe[2 * n:]
    X = np.concatenate([x, x + ebar, x - elow])
    rho = spectral_radius(G)
    residual = float(np.abs((I - G) @ Xe - bias).max()) if n else 0.0
    in_cone = bool(np.all(x >= -CONE_TOL) and np.all(ebar >= -CONE_TOL)
                   and np.all(elow >= -CONE_TOL) and np.all(x - elow >= -CONE_TOL))
    return ExpectedState(X, Xe, in_cone, rho < 1.0 - STABILITY_TOL, rho, residual)


@dataclass(frozen=True)
class OrderingViolation:
    step: int
    coordinate: int
    magnitude: float
    kind: str

    def __str__(self):
        return (f"step {self.step}, coordinate {self.coordinate}: "
                f"{self.kind} violated by {self.magnitude:.6g}")


def check_ordering(tr, tol=CONE_TOL):
    """First violation of ``0 <= xlow <= x <= xbar`` in a trajectory, or None."""
    checks = (
        ("xlow <= x", tr.x - tr.xlow),
        ("x <= xbar", tr.xbar - tr.x),
        ("xlow >= 0", tr.xlow),
    )
    first = None
    for kind, gap in checks:
        bad = np.argwhere(gap < -tol)
        if bad.size:
            t, i = bad[0]
            cand = OrderingViolation(int(t), int(i), float(-gap[t, i]), kind)
            if first is None or (cand.step, cand.coordinate) < (first.step, first.coordinate):
                first = cand
    return first
