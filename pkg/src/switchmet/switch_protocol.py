"""Photonic quantum-SWITCH measurement model.

Two groups of displacements act on a single photon's transverse mode in an
order controlled by its polarisation. Measuring the polarisation in the
|+>/|-> basis gives

    P(+/-) = (1 +/- cos(N^2 A + phi0)) / 2,

with A the product of the mean x and p displacements in vacuum units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .phase_algebra import DisplacementSequence, commutator_loop_phase, quadrature_to_amplitude

# Reference values of the optical setup (SI units).
X_REF = 18.6e-6  # MgF2 plate walk-off, m
THETA_EFF = 2.8e-4  # wedge-pair deflection, rad
WAVELENGTH = 780e-9  # degenerate SPDC signal for a 390 nm pump, m
SIGMA_X = 989.9e-6  # transverse intensity std, m
FLUCTUATION = 0.05
PHI0 = 0.307


@dataclass(frozen=True)
class PhysicalParams:
    x_ref: float = X_REF
    theta_eff: float = THETA_EFF
    wavelength: float = WAVELENGTH
    sigma_x: float = SIGMA_X
    fluctuation: float = FLUCTUATION

    def __post_init__(self):
        for name in ("x_ref", "theta_eff", "wavelength", "sigma_x", "fluctuation"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.wavelength <= 0 or self.sigma_x <= 0:
            raise ValueError("wavelength and sigma_x must be positive")
        if not 0 <= self.fluctuation < 1:
            raise ValueError(f"fluctuation must lie in [0, 1), got {self.fluctuation}")

    @property
    def sigma_p(self) -> float:
        return 1.0 / (2.0 * self.sigma_x)

    @property
    def p_ref(self) -> float:
        """Transverse wavevector kick of one wedge pair, 1/m."""
        return 2.0 * math.pi * self.theta_eff / self.wavelength

    @property
    def x_dimensionless(self) -> float:
        return self.x_ref / (math.sqrt(2.0) * self.sigma_x)

    @property
    def p_dimensionless(self) -> float:
        return self.p_ref / (math.sqrt(2.0) * self.sigma_p)

    @property
    def reference_area(self) -> float:
        return self.x_dimensionless * self.p_dimensionless


@dataclass(frozen=True)
class SwitchConfig:
    n: int
    phi0: float = PHI0
    nu: int = 1000
    eta_per_pair: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"N must be >= 1, got {self.n}")
        if self.nu < 1:
            raise ValueError(f"nu must be >= 1, got {self.nu}")
        if not 0 < self.eta_per_pair <= 1:
            raise ValueError(f"eta_per_pair must lie in (0, 1], got {self.eta_per_pair}")

    @property
    def survival(self) -> float:
        return self.eta_per_pair**self.n


@dataclass(frozen=True)
class RealizedDisplacements:
    xs: tuple[float, ...]
    ps: tuple[float, ...]
    area: float = field(init=False)

    def __post_init__(self):
        if len(self.xs) != len(self.ps):
            raise ValueError("xs and ps must have equal length")
        object.__setattr__(self, "area", self.x_mean * self.p_mean if self.xs else math.nan)

    @property
    def n(self) -> int:
        return len(self.xs)

    @property
    def x_mean(self) -> float:
        return float(np.mean(self.xs))

    @property
    def p_mean(self) -> float:
        return float(np.mean(self.ps))

    def prefix(self, n: int) -> "RealizedDisplacements":
        """The first ``n`` plates / wedge pairs of this set."""
        if n > self.n:
            raise ValueError(f"only {self.n} displacements realized, asked for {n}")
        return RealizedDisplacements(self.xs[:n], self.ps[:n])

    def sequences(self) -> tuple[DisplacementSequence, DisplacementSequence]:
        return protocol_sequences(self.xs, self.ps)


@dataclass(frozen=True)
class CountRecord:
    k_minus: int
    k_plus: int
    lost: int

    @property
    def effective_shots(self) -> int:
        return self.k_minus + self.k_plus

    @property
    def nu(self) -> int:
        return self.k_minus + self.k_plus + self.lost


def realize_displacements(params: PhysicalParams, n: int, rng: np.random.Generator) -> RealizedDisplacements:
    """Draw ``n`` x- and ``n`` p-displacements with independent uniform relative errors."""
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    f = params.fluctuation
    u = rng.uniform(-f, f, size=n)
    v = rng.uniform(-f, f, size=n)
    xs = params.x_dimensionless * (1.0 + u)
    ps = params.p_dimensionless * (1.0 + v)
    return RealizedDisplacements(tuple(xs.tolist()), tuple(ps.tolist()))


def uniform_displacements(x: float, p: float, n: int) -> RealizedDisplacements:
    return RealizedDisplacements((float(x),) * n, (float(p),) * n)


def outcome_probabilities(area: float, n: int, phi0: float) -> tuple[float, float]:
    """``(P+, P-)`` for total phase ``n^2 * area + phi0``; ``n = 0`` is the bare control fringe."""
    return probabilities_from_phase(n * n * area + phi0)


def probabilities_from_phase(total_phase: float) -> tuple[float, float]:
    p_minus = 0.5 * (1.0 - math.cos(total_phase))
    return 1.0 - p_minus, p_minus


def protocol_sequences(xs, ps) -> tuple[DisplacementSequence, DisplacementSequence]:
    """``(seq_a, seq_b)`` for the setup's x- and p-groups.

    The displacement algebra gives the |V> branch a relative phase
    ``commutator_loop_phase(seq_a, seq_b)``. With the x-group as ``seq_a`` that
    phase is ``-N^2 x_mean p_mean``; the p-group goes first here so that the
    loop runs counter-clockwise and the control fringe reads
    ``cos(N^2 A + phi0)``.
    """
    seq_p = DisplacementSequence(quadrature_to_amplitude(0.0, p) for p in ps)
    seq_x = DisplacementSequence(quadrature_to_amplitude(x, 0.0) for x in xs)
    return seq_p, seq_x


def switch_output_phase(seq_a, seq_b, phi0: float) -> float:
    """Relative phase between the two control branches (unwrapped).

    The common displacement D_b D_a multiplies both branches and does not
    enter the outcome statistics.
    """
    return commutator_loop_phase(seq_a, seq_b) + phi0


def _draw_counts(nu: int, survival: float, p_minus: float, rng: np.random.Generator) -> CountRecord:
    lost = int(rng.binomial(nu, 1.0 - survival)) if survival < 1.0 else 0
    shots = nu - lost
    k_minus = int(rng.binomial(shots, min(max(p_minus, 0.0), 1.0)))
    return CountRecord(k_minus=k_minus, k_plus=shots - k_minus, lost=lost)


def sample_counts(config: SwitchConfig, area: float, rng: np.random.Generator) -> CountRecord:
    """Detector counts for ``config.nu`` photons.

    Each photon survives the N displacement pairs with probability
    ``eta_per_pair ** N``; each survivor lands in |-> with probability P-.
    """
    _, p_minus = outcome_probabilities(area, config.n, config.phi0)
    return _draw_counts(config.nu, config.survival, p_minus, rng)


def sample_counts_for_phase(nu: int, total_phase: float, rng: np.random.Generator, survival: float = 1.0) -> CountRecord:
    """Counts for an arbitrary relative phase between the control branches."""
    if nu < 1:
        raise ValueError(f"nu must be >= 1, got {nu}")
    _, p_minus = probabilities_from_phase(total_phase)
    return _draw_counts(nu, survival, p_minus, rng)
