"""Estimators, error bounds and curve fits.

The SWITCH estimator inverts the binomial fringe in closed form. On the
identifiability window N^2 A + phi0 in [0, pi] the map A -> P- is a
bijection onto [0, 1], so the binomial likelihood in A is maximised where
P-(A) equals the observed frequency k/shots, which is the arccos inversion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .switch_protocol import CountRecord


@dataclass(frozen=True)
class TrialResult:
    estimate_a: float
    counts: CountRecord
    n: int
    trial_index: int
    true_a: float = math.nan
    saturated: bool = False


@dataclass(frozen=True)
class ScalingPoint:
    n: int
    rmse: float
    mean_estimate: float
    trials: int


@dataclass(frozen=True)
class ScalingCurve:
    points: tuple[ScalingPoint, ...]

    def __post_init__(self):
        if any(not p.rmse >= 0 for p in self.points):
            raise ValueError("RMSE values must be nonnegative")

    @property
    def ns(self) -> np.ndarray:
        return np.array([p.n for p in self.points])

    @property
    def rmses(self) -> np.ndarray:
        return np.array([p.rmse for p in self.points])


@dataclass(frozen=True)
class FitResult:
    parameters: dict[str, float]
    residual_norm: float
    converged: bool
    covariance: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __getitem__(self, name: str) -> float:
        return self.parameters[name]

    def stderr(self, name: str) -> float:
        if self.covariance is None:
            return math.nan
        i = list(self.parameters).index(name)
        return float(math.sqrt(self.covariance[i, i]))


def _frequency(k_minus: int, shots: int) -> float:
    if shots < 1:
        raise ValueError(f"need at least one detected photon, got {shots}")
    if not 0 <= k_minus <= shots:
        raise ValueError(f"k_minus={k_minus} outside [0, {shots}]")
    return k_minus / shots


def is_saturated(k_minus: int, shots: int) -> bool:
    """True when every detected photon landed on the same outcome."""
    _frequency(k_minus, shots)
    return k_minus == 0 or k_minus == shots


def mle_total_phase(k_minus: int, shots: int) -> float:
    """Maximum-likelihood total phase in [0, pi] from |-> counts."""
    f = _frequency(k_minus, shots)
    return math.acos(min(1.0, max(-1.0, 1.0 - 2.0 * f)))


def mle_phase(k_minus: int, shots: int, n: int, phi0: float) -> float:
    """Maximum-likelihood regularized area from ``k_minus`` of ``shots`` detections.

    Saturated counts (0 or ``shots``) return the edge of the window,
    ``-phi0/n^2`` or ``(pi - phi0)/n^2``; check :func:`is_saturated`.
    """
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    return (mle_total_phase(k_minus, shots) - phi0) / (n * n)


def estimate_trial(counts: CountRecord, n: int, phi0: float, trial_index: int, true_a: float = math.nan) -> TrialResult:
    shots = counts.effective_shots
    return TrialResult(
        estimate_a=mle_phase(counts.k_minus, shots, n, phi0),
        counts=counts,
        n=n,
        trial_index=trial_index,
        true_a=true_a,
        saturated=is_saturated(counts.k_minus, shots),
    )


def rmse_over_trials(trials: Sequence[TrialResult], true_a: float | None = None) -> float:
    """Root mean square error of the estimates about the true value.

    Without ``true_a`` each trial's own ``true_a`` is used (per-trial
    realizations of the displacements).
    """
    if not trials:
        raise ValueError("rmse_over_trials needs at least one trial")
    est = np.array([t.estimate_a for t in trials])
    truth = np.array([t.true_a for t in trials]) if true_a is None else np.full(est.shape, true_a)
    return float(np.sqrt(np.mean((est - truth) ** 2)))


def rmse_about_mean(trials: Sequence[TrialResult]) -> float:
    if not trials:
        raise ValueError("rmse_about_mean needs at least one trial")
    est = np.array([t.estimate_a for t in trials])
    return float(np.sqrt(np.mean((est - est.mean()) ** 2)))


def scaling_point(trials: Sequence[TrialResult], true_a: float | None = None) -> ScalingPoint:
    return ScalingPoint(
        n=trials[0].n,
        rmse=rmse_over_trials(trials, true_a),
        mean_estimate=float(np.mean([t.estimate_a for t in trials])),
        trials=len(trials),
    )


def crb_switch(nu: int, n: int) -> float:
    """Error bound ``1/(sqrt(nu) N^2)`` of the SWITCH protocol."""
    if nu < 1 or n < 1:
        raise ValueError("nu and N must be >= 1")
    return 1.0 / (math.sqrt(nu) * n * n)


def crb_fixed_order(x_mean: float, p_mean: float, nu: int, n: int) -> float:
    """Cramer-Rao bound of the separate-homodyne fixed-order strategy."""
    if nu < 1 or n < 1:
        raise ValueError("nu and N must be >= 1")
    return math.hypot(x_mean, p_mean) / (math.sqrt(2.0 * nu) * n)


def fixed_order_baseline(
    xs: Sequence[float],
    ps: Sequence[float],
    nu: int,
    rng: np.random.Generator,
    *,
    split: str = "full",
    noise_scale: float = 1.0,
) -> float:
    """One run of the fixed-order homodyne strategy; returns the estimate of A.

    All x-displacements act on the vacuum, X is measured by homodyne
    detection and rescaled by 1/N; likewise for p. Each rescaled outcome is
    Normal(mean, 1/(N sqrt 2)) and the sample mean is the MLE of the mean.

    ``split="full"`` spends ``nu`` shots on each quadrature run, the budget
    behind the fixed-order Cramer-Rao bound; ``split="even"`` gives each run
    ``nu // 2``. ``noise_scale`` multiplies the homodyne noise (0 for tests).
    """
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    if xs.size == 0 or xs.shape != ps.shape:
        raise ValueError("xs and ps must be nonempty and of equal length")
    if nu < 2:
        raise ValueError(f"nu must be >= 2, got {nu}")
    if split == "full":
        shots = nu
    elif split == "even":
        shots = nu // 2
    else:
        raise ValueError(f"unknown shot split {split!r}")
    n = xs.size
    std = noise_scale / (n * math.sqrt(2.0))
    x_hat = rng.normal(xs.mean(), std, size=shots).mean()
    p_hat = rng.normal(ps.mean(), std, size=shots).mean()
    return float(x_hat * p_hat)


def _fringe(ns, a, phi0):
    return 0.5 * (1.0 - np.cos(ns * ns * a + phi0))


def fit_cosine(points, *, max_iter: int = 100, tol: float = 1e-10, grid: tuple[int, int] = (201, 180)) -> FitResult:
    """Least-squares fit of ``P-(N) = (1 - cos(N^2 A + phi0))/2``.

    A deterministic grid over A in [0, pi/N_max^2] and phi0 in [0, pi) picks
    the start (first minimum, so ties go to the smaller A); Gauss-Newton with
    step halving then refines it.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("fit_cosine needs at least 3 (N, P-) points")
    ns, y = pts[:, 0], pts[:, 1]
    if len(np.unique(ns)) < 3:
        raise ValueError("fit_cosine needs at least 3 distinct N")

    n_max = ns.max()
    a_grid = np.linspace(0.0, math.pi / max(n_max, 1.0) ** 2, grid[0])
    phi_grid = np.arange(grid[1]) * (math.pi / grid[1])
    model = _fringe(ns[None, None, :], a_grid[:, None, None], phi_grid[None, :, None])
    sse = np.sum((model - y) ** 2, axis=-1)
    i, j = np.unravel_index(np.argmin(sse), sse.shape)
    theta = np.array([a_grid[i], phi_grid[j]])

    def residual(t):
        return _fringe(ns, t[0], t[1]) - y

    def jacobian(t):
        s = 0.5 * np.sin(ns * ns * t[0] + t[1])
        return np.column_stack([ns * ns * s, s])

    converged = False
    r = residual(theta)
    cost = r @ r
    for _ in range(max_iter):
        jac = jacobian(theta)
        if np.linalg.matrix_rank(jac) < 2:
            break
        step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        if np.linalg.norm(step) < tol:
            converged = True
            break
        scale = 1.0
        while scale > 1e-8:
            r_trial = residual(theta + scale * step)
            if r_trial @ r_trial <= cost:
                break
            scale *= 0.5
        else:
            break
        theta = theta + scale * step
        r, cost = r_trial, r_trial @ r_trial

    cov = None
    jac = jacobian(theta)
    dof = len(y) - 2
    jtj = jac.T @ jac
    if np.linalg.matrix_rank(jtj) == 2:
        s2 = cost / dof if dof > 0 else math.nan
        cov = s2 * np.linalg.inv(jtj)
    return FitResult({"A": float(theta[0]), "phi0": float(theta[1])}, float(math.sqrt(cost)), converged, cov)


def fit_power_scaling(points) -> FitResult:
    """Fit RMSE data two ways: ``1/(c N^2)`` and ``a N^(-b)``.

    The constrained fit is linear least squares of deltaA on 1/N^2 through
    the origin (``c`` is the inverse slope); the free fit regresses
    log deltaA on log N. Returns parameters ``c``, ``amplitude`` and
    ``exponent``; ``residual_norm`` belongs to the constrained fit.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("fit_power_scaling needs at least 3 (N, deltaA) points")
    ns, y = pts[:, 0], pts[:, 1]
    if np.any(ns < 1):
        raise ValueError("power-law fits need N >= 1")
    if np.any(~(y > 0)):
        raise ValueError("power-law fits need positive deltaA")

    x = 1.0 / ns**2
    slope = float(x @ y / (x @ x))
    slope_res = y - slope * x
    neg_b, log_a = np.polyfit(np.log(ns), np.log(y), 1)
    return FitResult(
        {"c": 1.0 / slope, "amplitude": float(math.exp(log_a)), "exponent": float(-neg_b)},
        float(np.linalg.norm(slope_res)),
        True,
    )
