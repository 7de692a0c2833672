import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcasep.esp import (EnvelopeSet, EspFrame, InvalidEnvelopeError, build_esp_frame, conj_flip,
                        constant_envelope, dense_synthesis_matrix, diag, frame_vector, make_exponential_envelopes,
                        make_rectangular_envelopes, normalize_parseval, one_hot_envelope, shift)
from mcasep.frames import InvalidDimensionError


def random_envelopes(seed, N, L):
    r = np.random.default_rng(seed)
    return EnvelopeSet(r.standard_normal((L, N)) + 1j * r.standard_normal((L, N)))


def random_signal(seed, N):
    r = np.random.default_rng(seed + 1)
    return r.standard_normal(N) + 1j * r.standard_normal(N)


@given(N=st.integers(2, 24), L=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_frame_operator_is_scaled_identity(N, L, seed):
    env = random_envelopes(seed, N, L)
    A = build_esp_frame(env)
    w = random_signal(seed, N)
    p = N * np.sum(np.abs(env.envelopes) ** 2)
    assert A.frame_constant == pytest.approx(p, rel=1e-12)
    np.testing.assert_allclose(A.synthesize(A.analyze(w)), p * w, rtol=0, atol=1e-9 * p * np.linalg.norm(w))


@given(N=st.integers(2, 12), L=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_fast_transforms_match_dense_matrix(N, L, seed):
    env = random_envelopes(seed, N, L)
    A = build_esp_frame(env)
    D = dense_synthesis_matrix(env)
    w = random_signal(seed, N)
    c = random_envelopes(seed + 7, N * N, L).envelopes.reshape(L, N, N)
    np.testing.assert_allclose(A.analyze(w).ravel(), D.conj().T @ w, atol=1e-10 * np.abs(D).max() * N)
    np.testing.assert_allclose(A.synthesize(c), D @ c.ravel(), atol=1e-10 * np.abs(D).max() * N * N)


def test_dense_columns_are_frame_vectors():
    env = random_envelopes(3, 6, 2)
    D = dense_synthesis_matrix(env)
    np.testing.assert_allclose(D[:, (1 * 6 + 4) * 6 + 2], frame_vector(env, 1, 4, 2))


def test_analysis_is_inner_product_with_frame_vectors():
    env = random_envelopes(5, 7, 2)
    w = random_signal(5, 7)
    c = build_esp_frame(env).analyze(w)
    for (l, k, m) in [(0, 0, 0), (1, 3, 5), (0, 6, 1)]:
        assert c[l, k, m] == pytest.approx(np.vdot(frame_vector(env, l, k, m), w), abs=1e-10)


def test_analysis_via_shift_modulation_and_flip():
    # the fast path equals the operator form built from S, D and H
    env = random_envelopes(9, 8, 1)
    w = random_signal(9, 8)
    N = 8
    n = np.arange(N)
    e = env.envelopes[0]
    c = build_esp_frame(env).analyze(w)
    for k in range(N):
        g = diag(np.exp(2j * np.pi * k * n / N), e)
        # <w, S^m g> for every m is the circular cross-correlation of w with g
        expected = np.array([np.vdot(shift(g, m), w) for m in range(N)])
        np.testing.assert_allclose(c[0, k], expected, atol=1e-10)
        corr = np.fft.ifft(np.fft.fft(w) * np.fft.fft(conj_flip(g)))
        np.testing.assert_allclose(c[0, k], corr, atol=1e-10)


def test_shift_covariance():
    env = random_envelopes(2, 10, 2)
    A = build_esp_frame(env)
    w = random_signal(2, 10)
    np.testing.assert_allclose(A.analyze(shift(w, 3)), np.roll(A.analyze(w), 3, axis=2), atol=1e-10)


def test_operators():
    w = np.arange(5) + 0j
    np.testing.assert_array_equal(shift(w, 1), [4, 0, 1, 2, 3])
    np.testing.assert_array_equal(conj_flip(np.array([1, 2j, 3, 4])), [1, 4, 3, -2j])
    np.testing.assert_array_equal(diag([1, 2], [3, 4]), [3, 8])


def test_parseval_normalization_gives_unit_frame_constant():
    env = make_rectangular_envelopes([3e-4, 1e-4], 1e5, 64) + make_exponential_envelopes([1e-3], 1e5, 64)
    A = build_esp_frame(normalize_parseval(env))
    assert A.frame_constant == pytest.approx(1.0, rel=1e-12)
    w = random_signal(0, 64)
    np.testing.assert_allclose(A.synthesize(A.analyze(w)), w, atol=1e-10)


def test_rectangular_sample_counts_round_half_away():
    env = make_rectangular_envelopes([2.5e-5, 2.4e-5, 1e-5], 1e5, 10)
    assert env.envelopes[0].real.sum() == 3
    assert env.envelopes[1].real.sum() == 2
    assert env.envelopes[2].real.sum() == 1
    assert env.envelopes[0, 0] == 1


def test_rectangular_errors():
    with pytest.raises(InvalidEnvelopeError):
        make_rectangular_envelopes([1e-7], 1e5, 10)
    with pytest.raises(InvalidEnvelopeError):
        make_rectangular_envelopes([1e-3], 1e5, 10)
    with pytest.raises(InvalidEnvelopeError):
        make_exponential_envelopes([0.0], 1e5, 10)


def test_zero_envelope_rejected():
    with pytest.raises(InvalidEnvelopeError):
        EnvelopeSet(np.zeros((2, 4)))


def test_memory_cap():
    with pytest.raises(MemoryError):
        EspFrame(constant_envelope(64), max_elements=64 * 63)


def test_dense_matrix_size_guard():
    with pytest.raises(InvalidDimensionError):
        dense_synthesis_matrix(constant_envelope(300))


def test_json_round_trip():
    env = normalize_parseval(make_rectangular_envelopes([2e-4], 1e5, 32) + make_exponential_envelopes([1e-3], 1e5, 32))
    raw = EnvelopeSet(random_envelopes(1, 32, 1).envelopes, sample_rate=1e5)
    joined = env + raw
    back = EnvelopeSet.from_json(joined.to_json())
    np.testing.assert_allclose(back.envelopes, joined.envelopes, rtol=1e-15)
    assert back.labels == joined.labels
    d = json.loads(joined.to_json())
    assert [e["kind"] for e in d["envelopes"]] == ["rectangular", "exponential", "raw"]


def test_degenerate_frames_concentrate_a_tone_on_the_k_axis():
    N = 32
    tone = np.exp(2j * np.pi * 5 * np.arange(N) / N)
    const = build_esp_frame(normalize_parseval(constant_envelope(N)))
    onehot = build_esp_frame(normalize_parseval(one_hot_envelope(N)))
    c = const.analyze(tone)
    energy_k = np.sum(np.abs(c[0]) ** 2, axis=1)
    assert energy_k[5] / energy_k.sum() > 1 - 1e-12
    # the one-hot frame spreads the same tone over every k
    e1 = np.sum(np.abs(onehot.analyze(tone)[0]) ** 2, axis=1)
    assert e1.max() / e1.sum() < 2.0 / N


def test_frame_is_read_only_and_deterministic():
    A = build_esp_frame(random_envelopes(4, 16, 2))
    w = random_signal(4, 16)
    assert np.array_equal(A.analyze(w), A.analyze(w))
    c = A.analyze(w)
    assert np.array_equal(A.synthesize(c), A.synthesize(c))
    with pytest.raises(ValueError):
        A.envelope_set.envelopes[0, 0] = 1


@given(N=st.integers(2, 24), L=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_analysis_norm_and_adjointness(N, L, seed):
    env = random_envelopes(seed, N, L)
    A = build_esp_frame(env)
    w = random_signal(seed, N)
    c = random_envelopes(seed + 3, N * N, L).envelopes.reshape(L, N, N)
    a = A.analyze(w)
    assert np.vdot(a, a).real == pytest.approx(A.frame_constant * np.vdot(w, w).real, rel=1e-10)
    lhs, rhs = np.vdot(a, c), np.vdot(w, A.synthesize(c))
    assert abs(lhs - rhs) < 1e-10 * np.linalg.norm(w) * np.linalg.norm(c) * A.frame_constant


@given(N=st.integers(1, 40), seed=st.integers(0, 2**31))
def test_flip_is_an_involution_and_shift_has_period_n(N, seed):
    w = random_signal(seed, N)
    np.testing.assert_array_equal(conj_flip(conj_flip(w)), w)
    np.testing.assert_array_equal(shift(w, N), w)
    np.testing.assert_array_equal(shift(shift(w, 2), N - 2), w)
