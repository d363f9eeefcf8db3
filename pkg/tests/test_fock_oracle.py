import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import eval_genlaguerre, factorial

from switchmet.fock_oracle import (
    FockMatrix,
    TruncationError,
    displacement_matrix,
    sequence_phase_oracle,
    unitarity_defect,
)
from switchmet.phase_algebra import commutator_loop_phase, phase_distance


def expm_reference(alpha, cutoff):
    a = np.diag(np.sqrt(np.arange(1, cutoff)), 1)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


def cahill_element(alpha, m, n):
    if n > m:
        return cahill_element(-np.conj(alpha), n, m)
    x = abs(alpha) ** 2
    return math.sqrt(factorial(n) / factorial(m)) * alpha ** (m - n) * math.exp(-x / 2) * eval_genlaguerre(n, m - n, x)


@pytest.mark.parametrize("cutoff", [1, 2, 7, 32])
def test_zero_alpha_is_identity(cutoff):
    m = displacement_matrix(0, cutoff)
    assert np.array_equal(m.entries, np.eye(cutoff))
    assert unitarity_defect(m) == 0.0


def test_vacuum_overlap():
    assert displacement_matrix(1.0, 32).entries[0, 0] == pytest.approx(math.exp(-0.5), abs=1e-15)


def test_small_cutoff_rejected():
    with pytest.raises(ValueError):
        displacement_matrix(0.1, 0)


def test_large_amplitude_warns():
    with pytest.warns(RuntimeWarning):
        displacement_matrix(3.0, 16)


def test_entries_match_factorial_formula():
    alpha = 0.7 - 0.4j
    m = displacement_matrix(alpha, 20).entries
    for i in range(20):
        for j in range(20):
            assert m[i, j] == pytest.approx(cahill_element(alpha, i, j), abs=1e-13)


@pytest.mark.parametrize("alpha", [0.3 + 0.4j, -1.2 + 0.5j, 2.5j])
def test_entries_match_matrix_exponential(alpha):
    # leading block of a much larger exponential is free of truncation
    ref = expm_reference(alpha, 160)[:64, :64]
    assert np.abs(displacement_matrix(alpha, 64).entries - ref).max() < 1e-12


def test_unitarity_of_leading_block():
    m64 = displacement_matrix(0.3 + 0.4j, 64)
    e = m64.entries[:, :16]
    assert np.abs(e.conj().T @ e - np.eye(16)).max() < 1e-8
    # higher cutoff reference gives the same leading columns
    ref = displacement_matrix(0.3 + 0.4j, 128).entries[:64, :16]
    assert np.abs(e - ref).max() < 1e-12


def test_column_norms_bounded():
    e = displacement_matrix(1.5 - 0.5j, 64).entries
    assert np.all(np.isfinite(e))
    assert np.all(np.linalg.norm(e, axis=0) <= 1 + 1e-9)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_defect_shrinks_with_cutoff():
    small = unitarity_defect(displacement_matrix(1.0, 8))
    large = unitarity_defect(displacement_matrix(1.0, 64))
    assert small > large
    assert small > 1e-3
    assert large < 1e-12
    defects = [unitarity_defect(displacement_matrix(2.0, c)) for c in (8, 16, 32, 64)]
    assert all(d1 > d2 for d1, d2 in zip(defects, defects[1:]))


def test_no_overflow_at_max_cutoff():
    e = displacement_matrix(1.0 + 1.0j, 256).entries
    assert np.all(np.isfinite(e))
    assert unitarity_defect(FockMatrix(256, e)) < 1e-10


def test_matmul_composes():
    a, b = displacement_matrix(0.2, 48), displacement_matrix(-0.2, 48)
    assert np.abs((a @ b).entries - np.eye(48))[:24, :24].max() < 1e-12


def test_oracle_trivial_loop():
    v = sequence_phase_oracle([0.3 + 0.1j], [0.3 + 0.1j])
    assert abs(v.phase) < 1e-12
    assert v.amplitude_retention == pytest.approx(1.0, abs=1e-12)
    assert v.cutoff_used == 64


def test_oracle_two_step_loop():
    v = sequence_phase_oracle([0.2, 0.2], [0.2j, 0.2j])
    assert phase_distance(v.phase, -0.32) < 1e-6
    assert commutator_loop_phase([0.2, 0.2], [0.2j, 0.2j]) == pytest.approx(-0.32, abs=1e-15)


def test_oracle_random_sequences():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        a = rng.uniform(0, 0.5, n) * np.exp(2j * np.pi * rng.random(n))
        b = rng.uniform(0, 0.5, n) * np.exp(2j * np.pi * rng.random(n))
        v = sequence_phase_oracle(a, b, 64)
        assert v.amplitude_retention >= 0.999
        assert v.amplitude_retention <= 1 + 1e-9
        worst = max(worst, phase_distance(v.phase, commutator_loop_phase(a, b)))
    print(f"max oracle deviation over 100 random pairs: {worst:.3e}")
    assert worst < 1e-6


@pytest.mark.parametrize("mu", [0.3, -0.2j, 0.15 + 0.2j])
def test_loop_phase_is_state_independent(mu):
    a, b = [0.3 + 0.2j, -0.1j], [0.4, 0.2 - 0.1j]
    vac = sequence_phase_oracle(a, b)
    coh = sequence_phase_oracle(a, b, probe=mu)
    assert phase_distance(vac.phase, coh.phase) < 1e-6


@pytest.mark.parametrize("alpha", [0.5, 0.5j, -0.35 + 0.35j, 0.1])
def test_displacement_undone(alpha):
    vac = np.zeros(64, dtype=complex)
    vac[0] = 1
    out = displacement_matrix(alpha, 64) @ (displacement_matrix(-alpha, 64) @ vac)
    assert abs(out[0]) >= 1 - 1e-8


def test_truncation_detected_without_auto_raise():
    a = [0.5 + 0.5j] * 3
    b = [-0.5 + 0.5j] * 3
    with pytest.raises(TruncationError):
        sequence_phase_oracle(a, b, cutoff=4, auto_raise=False)


def test_auto_raise_recovers():
    a = [0.5 + 0.5j] * 3
    b = [-0.5 + 0.5j] * 3
    v = sequence_phase_oracle(a, b, cutoff=4)
    assert v.cutoff_used > 4
    assert v.amplitude_retention >= 0.999
    assert phase_distance(v.phase, commutator_loop_phase(a, b)) < 1e-6


def test_oracle_rejects_empty():
    with pytest.raises(ValueError):
        sequence_phase_oracle([], [0.1])
