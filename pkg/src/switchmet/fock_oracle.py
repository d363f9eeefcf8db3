"""Brute-force check of the displacement algebra in a truncated Fock basis.

Displacement operators are built as explicit cutoff x cutoff matrices and the
loop operator is applied to a probe state one factor at a time. Nothing here
uses the closed-form composition rule.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .phase_algebra import DisplacementSequence, loop_sequence

DEFAULT_CUTOFF = 64
MAX_CUTOFF = 256
TRUSTED_RETENTION = 0.999
MIN_RETENTION = 0.99


class TruncationError(RuntimeError):
    """Raised when the Fock cutoff is too small to trust the extracted phase."""


@dataclass(frozen=True, eq=False)
class FockMatrix:
    cutoff: int
    entries: np.ndarray

    def __post_init__(self):
        self.entries.setflags(write=False)

    def __matmul__(self, other):
        if isinstance(other, FockMatrix):
            return FockMatrix(self.cutoff, self.entries @ other.entries)
        return self.entries @ other


@dataclass(frozen=True)
class OracleVerdict:
    phase: float
    amplitude_retention: float
    cutoff_used: int


def _laguerre_table(cutoff: int, x: float) -> np.ndarray:
    """``L[n, k] = L_n^{(k)}(x)``; only ``n + k < cutoff`` is ever read.

    Three-term recurrence in n, vectorised over the order k.
    """
    k = np.arange(cutoff, dtype=float)
    table = np.zeros((cutoff, cutoff))
    table[0] = 1.0
    if cutoff > 1:
        table[1] = 1.0 + k - x
    for n in range(1, cutoff - 1):
        table[n + 1] = ((2 * n + 1 + k - x) * table[n] - (n + k) * table[n - 1]) / (n + 1)
    return table


def displacement_matrix(alpha: complex, cutoff: int = DEFAULT_CUTOFF) -> FockMatrix:
    """Matrix elements <m|D(alpha)|n> for m, n < cutoff.

    For m >= n:
        sqrt(n!/m!) alpha^(m-n) exp(-|alpha|^2/2) L_n^(m-n)(|alpha|^2),
    and the m < n half uses -conj(alpha) in place of alpha. Factorial ratios
    are taken in log space.
    """
    cutoff = int(cutoff)
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    alpha = complex(alpha)
    if not cmath.isfinite(alpha):
        raise ValueError("alpha must be finite")
    x = abs(alpha) ** 2
    if x > cutoff / 4:
        warnings.warn(
            f"|alpha|^2 = {x:.3g} exceeds cutoff/4 = {cutoff / 4:.3g}; truncation error will be large",
            RuntimeWarning,
            stacklevel=2,
        )
    if alpha == 0:
        return FockMatrix(cutoff, np.eye(cutoff, dtype=complex))

    lag = _laguerre_table(cutoff, x)
    m, n = np.indices((cutoff, cutoff))
    lo = np.minimum(m, n)
    k = np.abs(m - n)
    log_mag = 0.5 * (gammaln(lo + 1) - gammaln(lo + k + 1)) + k * math.log(abs(alpha)) - 0.5 * x
    angle = np.where(m >= n, cmath.phase(alpha), cmath.phase(-alpha.conjugate()))
    entries = np.exp(log_mag + 1j * k * angle) * lag[lo, k]
    return FockMatrix(cutoff, entries)


def unitarity_defect(m: FockMatrix) -> float:
    """max |M^dag M - I| over the leading cutoff/2 block."""
    block = max(1, m.cutoff // 2)
    e = m.entries
    gram = e[:, :block].conj().T @ e[:, :block]
    return float(np.max(np.abs(gram - np.eye(block))))


def coherent_state(mu: complex, cutoff: int) -> np.ndarray:
    vacuum = np.zeros(cutoff, dtype=complex)
    vacuum[0] = 1.0
    return displacement_matrix(mu, cutoff) @ vacuum


def _loop_overlap(amplitudes, cutoff: int, probe: complex) -> complex:
    ket = coherent_state(probe, cutoff)
    bra = ket.conj()
    for g in amplitudes:
        ket = displacement_matrix(g, cutoff) @ ket
    return complex(bra @ ket)


def sequence_phase_oracle(
    seq_a,
    seq_b,
    cutoff: int = DEFAULT_CUTOFF,
    *,
    probe: complex = 0j,
    auto_raise: bool = True,
    max_cutoff: int = MAX_CUTOFF,
) -> OracleVerdict:
    """Phase and magnitude of <psi| D_a^dag D_b^dag D_a D_b |psi> by explicit products.

    ``psi`` is the coherent state D(probe)|0>, the vacuum by default. When the
    retention |<psi|U|psi>| falls below 0.999 the cutoff is doubled up to
    ``max_cutoff`` (unless ``auto_raise`` is off). A final retention below
    0.99 raises :class:`TruncationError`.
    """
    seq_a = DisplacementSequence.coerce(seq_a)
    seq_b = DisplacementSequence.coerce(seq_b)
    if len(seq_a) == 0 or len(seq_b) == 0:
        raise ValueError("a commutator loop needs two nonempty displacement sequences")
    path = [d.amplitude for d in loop_sequence(seq_a, seq_b)]

    cutoff = int(cutoff)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        while True:
            z = _loop_overlap(path, cutoff, complex(probe))
            retention = abs(z)
            if retention >= TRUSTED_RETENTION or not auto_raise or cutoff >= max_cutoff:
                break
            cutoff = min(2 * cutoff, max_cutoff)

    if retention < MIN_RETENTION:
        raise TruncationError(
            f"retention {retention:.6f} < {MIN_RETENTION} at cutoff {cutoff}; raise the cutoff"
        )
    return OracleVerdict(phase=cmath.phase(z), amplitude_retention=retention, cutoff_used=cutoff)
