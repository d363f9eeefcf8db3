"""Closed-form algebra of phase-space displacements.

Displacements D(g) = exp(g a^dag - g^* a) compose as

    D(g_later) D(g_earlier) = D(g_later + g_earlier) exp(i Im(g_later g_earlier^*)),

so any product of displacements is a single displacement times a scalar phase.
Everything in this module is exact arithmetic on complex amplitudes.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_phase(phase: float) -> float:
    """Map a phase to the half-open interval (-pi, pi]."""
    w = math.remainder(phase, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


def phase_distance(a: float, b: float) -> float:
    """Absolute difference of two phases modulo 2 pi, in [0, pi]."""
    return abs(math.remainder(a - b, TWO_PI))


@dataclass(frozen=True)
class Displacement:
    amplitude: complex

    def __post_init__(self):
        amp = complex(self.amplitude)
        if not cmath.isfinite(amp):
            raise ValueError(f"displacement amplitude must be finite, got {amp!r}")
        object.__setattr__(self, "amplitude", amp)

    def __neg__(self) -> "Displacement":
        return Displacement(-self.amplitude)


AmplitudeLike = Union[Displacement, complex, float, int]


def _amp(d: AmplitudeLike) -> complex:
    if isinstance(d, Displacement):
        return d.amplitude
    return Displacement(d).amplitude


class DisplacementSequence:
    """Ordered displacements; item 0 is applied first."""

    __slots__ = ("_items",)

    def __init__(self, items: Iterable[AmplitudeLike] = ()):
        self._items = tuple(d if isinstance(d, Displacement) else Displacement(d) for d in items)

    @classmethod
    def coerce(cls, seq) -> "DisplacementSequence":
        return seq if isinstance(seq, cls) else cls(seq)

    @property
    def items(self) -> tuple[Displacement, ...]:
        return self._items

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([d.amplitude for d in self._items], dtype=complex)

    def total(self) -> complex:
        return complex(sum(d.amplitude for d in self._items))

    def mean(self) -> complex:
        if not self._items:
            raise ValueError("mean of an empty displacement sequence")
        return self.total() / len(self._items)

    def inverse(self) -> "DisplacementSequence":
        """The sequence undoing this one: negated amplitudes in reverse order."""
        return DisplacementSequence(-d for d in reversed(self._items))

    def repeated(self, m: int) -> "DisplacementSequence":
        return DisplacementSequence(self._items * m)

    def __add__(self, other) -> "DisplacementSequence":
        return DisplacementSequence(self._items + DisplacementSequence.coerce(other)._items)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, DisplacementSequence) and self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        return f"DisplacementSequence({[d.amplitude for d in self._items]!r})"


@dataclass(frozen=True)
class PhasedDisplacement:
    """A displacement D(net) multiplied by exp(i * phase)."""

    net: complex = 0j
    phase: float = 0.0

    def then(self, later: "PhasedDisplacement") -> "PhasedDisplacement":
        """Apply ``self`` first, then ``later``."""
        phase = self.phase + later.phase + (later.net * self.net.conjugate()).imag
        return PhasedDisplacement(self.net + later.net, wrap_phase(phase))


IDENTITY = PhasedDisplacement()


@dataclass(frozen=True)
class LoopGeometry:
    enclosed_area: float
    regularized_area: float
    loop_phase: float


def _as_phased(d) -> PhasedDisplacement:
    if isinstance(d, PhasedDisplacement):
        return d
    return PhasedDisplacement(_amp(d), 0.0)


def compose(first, second) -> PhasedDisplacement:
    """Product ``D(second) D(first)``: ``first`` acts on the state before ``second``.

    Accepts bare amplitudes, :class:`Displacement` or already composed
    :class:`PhasedDisplacement` values.
    """
    return _as_phased(first).then(_as_phased(second))


def _fold_phase(amplitudes) -> tuple[complex, float]:
    # Unwrapped accumulation; callers wrap if needed.
    net = 0j
    phase = 0.0
    for g in amplitudes:
        phase += (g * net.conjugate()).imag
        net += g
    return net, phase


def compose_sequence(seq) -> PhasedDisplacement:
    seq = DisplacementSequence.coerce(seq)
    net, phase = _fold_phase(d.amplitude for d in seq)
    return PhasedDisplacement(net, wrap_phase(phase))


def _check_loop_inputs(seq_a, seq_b):
    seq_a = DisplacementSequence.coerce(seq_a)
    seq_b = DisplacementSequence.coerce(seq_b)
    if len(seq_a) == 0 or len(seq_b) == 0:
        raise ValueError("a commutator loop needs two nonempty displacement sequences")
    return seq_a, seq_b


def loop_sequence(seq_a, seq_b) -> DisplacementSequence:
    """The 4N-step path of ``D_a^dag D_b^dag D_a D_b`` in application order.

    ``b`` forwards, ``a`` forwards, then ``b`` undone, then ``a`` undone.
    """
    seq_a = DisplacementSequence.coerce(seq_a)
    seq_b = DisplacementSequence.coerce(seq_b)
    return seq_b + seq_a + seq_b.inverse() + seq_a.inverse()


def loop_phase_by_fold(seq_a, seq_b) -> float:
    """Unwrapped loop phase obtained by folding the full 4N-step path."""
    seq_a, seq_b = _check_loop_inputs(seq_a, seq_b)
    _, phase = _fold_phase(d.amplitude for d in loop_sequence(seq_a, seq_b))
    return phase


def commutator_loop_phase(seq_a, seq_b) -> float:
    """Phase of ``D_a^dag D_b^dag D_a D_b``, i.e. ``2 Im[(sum a)(sum b)^*]``.

    The value is not wrapped, so phases beyond 2 pi stay representable.
    Sequences of unequal length are allowed.
    """
    seq_a, seq_b = _check_loop_inputs(seq_a, seq_b)
    return 2.0 * (seq_a.total() * seq_b.total().conjugate()).imag


def signed_path_area(path) -> float:
    """Signed area between a displacement path and the imaginary axis.

    ``1/2 * sum_j sum_{l >= j} Im(z_j) Re(z_l)``, evaluated as written.
    """
    z = DisplacementSequence.coerce(path).amplitudes
    if z.size == 0:
        return 0.0
    # suffix sums of Re(z_l) for l >= j
    tail = np.cumsum(z.real[::-1])[::-1]
    return 0.5 * float(np.dot(z.imag, tail))


def enclosed_area(seq_a, seq_b) -> LoopGeometry:
    """Area enclosed by the paths "a then b" and "b then a".

    The path-area functional carries an overall 1/2, so the loop area is
    twice the difference of the two signed path areas. This equals
    ``N^2 |Im(mean(a) mean(b)^*)|`` and half the magnitude of the loop phase.
    """
    seq_a = DisplacementSequence.coerce(seq_a)
    seq_b = DisplacementSequence.coerce(seq_b)
    n = len(seq_a)
    if n == 0 or len(seq_b) == 0:
        raise ValueError("enclosed_area needs two nonempty displacement sequences")
    if len(seq_b) != n:
        raise ValueError(f"enclosed_area needs equal lengths, got {n} and {len(seq_b)}")
    diff = signed_path_area(seq_a + seq_b) - signed_path_area(seq_b + seq_a)
    area = 2.0 * abs(diff)
    return LoopGeometry(
        enclosed_area=area,
        regularized_area=area / n**2,
        loop_phase=commutator_loop_phase(seq_a, seq_b),
    )


def closed_form_area(seq_a, seq_b) -> float:
    """``N^2 |Im(mean(a) mean(b)^*)|`` for equal-length sequences."""
    seq_a, seq_b = _check_loop_inputs(seq_a, seq_b)
    return abs((seq_a.total() * seq_b.total().conjugate()).imag)


def quadrature_to_amplitude(x: float, p: float) -> Displacement:
    """Amplitude of the displacement shifting X by ``x`` and P by ``p``.

    Uses X = (a + a^dag)/sqrt(2), P = -i(a - a^dag)/sqrt(2), so
    ``exp(-i x P) = D(x/sqrt(2))`` and ``exp(i p X) = D(i p/sqrt(2))``.
    """
    if not (math.isfinite(x) and math.isfinite(p)):
        raise ValueError("quadrature displacements must be finite")
    return Displacement(complex(x, p) / math.sqrt(2.0))
