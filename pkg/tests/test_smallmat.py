from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnfr import smallmat as sm


def naive_matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for kk in range(k):
                s += a[i, kk] * b[kk, j]
            out[i, j] = s
    return out


def power_iteration_radius(a, iters=4000, seed=0):
    """Spectral radius by two-dimensional subspace iteration.

    A two-column block captures a dominant complex-conjugate pair as well as
    a dominant real eigenvalue; the 2x2 Rayleigh quotient then yields it.
    """
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(a.shape[0], 2)))
    for _ in range(iters):
        q, _ = np.linalg.qr(a @ q)
    small = q.T @ a @ q
    tr, det = np.trace(small), np.linalg.det(small)
    disc = tr * tr / 4 - det
    if disc >= 0:
        roots = [tr / 2 + np.sqrt(disc), tr / 2 - np.sqrt(disc)]
        return max(abs(r) for r in roots)
    return float(np.sqrt(det))


# -- mat_mul -----------------------------------------------------------------

def test_matmul_identity(backend):
    m = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(sm.mat_mul(np.eye(3), m), m)


def test_matmul_two_by_two_vector(backend):
    out = sm.mat_mul([[0, 1], [0.5, 0.5]], np.array([1.0, 2.0]))
    assert np.allclose(out, [2.0, 1.5], atol=0, rtol=0)


def test_matmul_vs_naive(backend, rng):
    for _ in range(20):
        a, b = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
        assert np.max(np.abs(sm.mat_mul(a, b) - naive_matmul(a, b))) < 1e-12


def test_matmul_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        sm.mat_mul(np.ones((2, 3)), np.ones((2, 3)))


# -- mat_inverse -------------------------------------------------------------

def test_inverse_identity(backend):
    assert np.array_equal(sm.mat_inverse(np.eye(4)), np.eye(4))


def test_inverse_diagonal(backend):
    assert np.allclose(sm.mat_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]), atol=1e-15)


def test_inverse_residual(backend, rng):
    for _ in range(50):
        a = rng.normal(size=(4, 4)) + 4 * np.eye(4)
        assert np.max(np.abs(a @ sm.mat_inverse(a) - np.eye(4))) < 1e-10


def test_inverse_singular_reports_pivot(backend):
    with pytest.raises(sm.SingularMatrixError) as info:
        sm.mat_inverse([[1.0, 2.0], [2.0, 4.0]])
    assert info.value.pivot == 0.0


def test_inverse_ill_conditioned(backend):
    a = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]])
    with pytest.raises(sm.SingularMatrixError) as info:
        sm.mat_inverse(a)
    assert info.value.pivot < 1e-12


def test_inverse_non_square():
    with pytest.raises(ValueError, match="square"):
        sm.mat_inverse(np.ones((2, 3)))


# -- mat_power ---------------------------------------------------------------

def test_power_zero_is_identity(backend, rng):
    assert np.array_equal(sm.mat_power(rng.normal(size=(3, 3)), 0), np.eye(3))


def test_power_scalar(backend):
    assert sm.mat_power(np.diag([0.5]), 10)[0, 0] == 0.0009765625


def test_power_vs_repeated_multiplication(backend, rng):
    for _ in range(20):
        a = rng.normal(size=(3, 3))
        ref = np.eye(3)
        for _ in range(7):
            ref = naive_matmul(ref, a)
        assert np.max(np.abs(sm.mat_power(a, 7) - ref)) < 1e-10 * max(1.0, np.max(np.abs(ref)))


def test_power_overflow_is_divergence_signal(backend):
    out = sm.mat_power(np.array([[10.0, 1.0], [0.0, 10.0]]), 10**4)
    assert sm.is_divergent(out)
    assert sm.spectral_radius(out) == np.inf


def test_power_negative_rejected():
    with pytest.raises(ValueError):
        sm.mat_power(np.eye(2), -1)


# -- spectrum ----------------------------------------------------------------

def test_spectrum_identity(backend):
    for n in (1, 2, 3, 6):
        assert sm.spectrum(np.eye(n)).radius == 1.0


def test_spectrum_rotation(backend):
    spec = sm.spectrum([[0.0, -1.0], [1.0, 0.0]])
    assert sorted(spec.eigenvalues, key=lambda z: z.imag) == [-1j, 1j]
    assert spec.radius == 1.0


def test_spectrum_vs_power_iteration(backend, rng):
    checked = 0
    while checked < 20:
        a = rng.normal(size=(4, 4))
        mods = np.sort(np.abs(np.linalg.eigvals(a)))[::-1]
        # subspace iteration needs a gap below the dominant pair
        if mods[2] > 0.9 * mods[1]:
            continue
        assert abs(sm.spectrum(a).radius - power_iteration_radius(a)) < 1e-6
        checked += 1


def test_spectrum_large_general_matches_lapack(backend, rng):
    for n in (3, 5, 8, 16):
        a = rng.normal(size=(n, n))
        ours = np.sort_complex(sm.spectrum(a).eigenvalues)
        ref = np.sort_complex(np.linalg.eigvals(a))
        assert np.max(np.abs(ours - ref)) < 1e-10


def test_spectrum_length_matches_dimension(backend, rng):
    for n in range(1, 8):
        assert len(sm.spectrum(rng.normal(size=(n, n))).eigenvalues) == n


def test_spectrum_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        sm.spectrum([[np.nan, 0.0], [0.0, 1.0]])


def test_spectrum_nonconvergence_names_matrix(monkeypatch):
    class Stuck:
        @staticmethod
        def general_eigvals(a, max_its):
            return np.zeros(3), np.zeros(3), -1

    monkeypatch.setattr(sm, "kernels", Stuck)
    with pytest.raises(sm.SpectrumError, match="my_matrix"):
        sm.spectrum(np.arange(9.0).reshape(3, 3), name="my_matrix")


def test_eig2_closed_form_accuracy():
    # nearly equal large roots; the cancellation-free branch keeps the small one accurate
    m = np.array([[1e8, 1.0], [0.0, 1e-8]])
    ev = sorted(abs(z) for z in sm.spectrum(m).eigenvalues)
    assert ev[0] == pytest.approx(1e-8, rel=1e-12)


# -- properties --------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=200, deadline=None)
@given(seed=seeds, n=st.integers(1, 4), t=st.integers(1, 8))
def test_radius_of_power(seed, n, t):
    a = np.random.default_rng(seed).normal(size=(n, n))
    rho = sm.spectrum(a).radius
    assert sm.spectrum(sm.mat_power(a, t)).radius == pytest.approx(rho**t, rel=1e-8)


@settings(max_examples=200, deadline=None)
@given(seed=seeds, n=st.integers(1, 12))
def test_spectrum_closed_under_conjugation(seed, n):
    ev = sm.spectrum(np.random.default_rng(seed).normal(size=(n, n))).eigenvalues
    for z in ev:
        assert np.min(np.abs(ev - np.conj(z))) < 1e-10 * max(1.0, abs(z))


@settings(max_examples=200, deadline=None)
@given(seed=seeds, n=st.integers(1, 12))
def test_symmetric_spectrum_is_real(seed, n):
    a = np.random.default_rng(seed).normal(size=(n, n))
    ev = sm.spectrum(a + a.T).eigenvalues
    assert np.max(np.abs(ev.imag)) < 1e-10
    assert np.max(np.abs(np.sort(ev.real) - np.linalg.eigvalsh(a + a.T))) < 1e-10


@settings(max_examples=200, deadline=None)
@given(seed=seeds, n=st.integers(1, 6))
def test_double_inverse_is_identity(seed, n):
    a = np.random.default_rng(seed).normal(size=(n, n))
    if np.linalg.cond(a) > 1e4:
        a = a + n * np.eye(n)
    assert np.max(np.abs(sm.mat_inverse(sm.mat_inverse(a)) - a)) < 1e-8
