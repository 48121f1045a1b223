import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmpca.kframe import (
    KFrameError,
    angle_indices,
    angles_to_vector,
    build_kframe,
    factor_split,
    frame_from_vector,
    frame_vjp,
    givens_derivative,
    givens_matrix,
    invert_kframe,
    n_angles,
    orthogonal_complement,
    vector_to_angles,
)

from conftest import dense_oracle, random_xi


def test_angle_count():
    for p in range(1, 9):
        for k in range(1, p + 1):
            assert n_angles(p, k) == p * k - k * (k + 1) // 2
            assert len(angle_indices(p, k)[0]) == n_angles(p, k)


def test_identity_case():
    np.testing.assert_array_equal(build_kframe(np.zeros((4, 2))), np.eye(4)[:, :2])


def test_single_rotation():
    theta = 0.7
    xi = np.array([[0.0], [theta]])
    np.testing.assert_allclose(build_kframe(xi)[:, 0], [np.cos(theta), np.sin(theta)], atol=1e-15)


def test_random_frame_matches_dense_product(rng):
    xi = random_xi(rng, 5, 3)
    V = build_kframe(xi)
    assert np.max(np.abs(V.T @ V - np.eye(3))) <= 1e-10
    np.testing.assert_allclose(V, dense_oracle(xi), atol=1e-12, rtol=0)


def test_givens_derivative_examples():
    np.testing.assert_allclose(givens_derivative(0.0, 1, 0, 2), [[0, -1], [1, 0]], atol=1e-15)
    np.testing.assert_allclose(givens_derivative(np.pi / 2, 1, 0, 2), [[-1, 0], [0, -1]], atol=1e-15)


def test_givens_derivative_finite_difference(rng):
    theta, h = rng.uniform(-3, 3), 1e-6
    for a, b in [(1, 0), (2, 0), (2, 1)]:
        fd = (givens_matrix(theta + h, a, b, 3) - givens_matrix(theta - h, a, b, 3)) / (2 * h)
        assert np.max(np.abs(fd - givens_derivative(theta, a, b, 3))) <= 1e-8
        assert np.count_nonzero(givens_derivative(theta, a, b, 3)) <= 4


def test_givens_index_check():
    with pytest.raises(IndexError):
        givens_matrix(0.1, 0, 1, 3)


def test_invert_examples(rng):
    np.testing.assert_allclose(invert_kframe(np.eye(5)[:, :2]), np.zeros((5, 2)), atol=1e-12)
    v = np.array([[np.cos(0.3)], [np.sin(0.3)]])
    assert abs(invert_kframe(v)[1, 0] - 0.3) <= 1e-10
    xi = random_xi(rng, 6, 2)
    V = build_kframe(xi)
    np.testing.assert_allclose(build_kframe(invert_kframe(V)), V, atol=1e-8, rtol=0)


def test_invert_rejects_non_frames():
    with pytest.raises(KFrameError):
        invert_kframe(np.ones((3, 1)))


def test_invert_full_rotation_with_negative_determinant():
    Q = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(KFrameError):
        invert_kframe(Q)


def test_orthogonal_complement_examples(rng):
    c = orthogonal_complement(np.array([[1.0], [0.0]]))
    np.testing.assert_allclose(np.abs(c[:, 0]), [0, 1], atol=1e-15)
    c = orthogonal_complement(np.eye(4)[:, :2])
    np.testing.assert_allclose(np.abs(c[:2]), 0, atol=1e-15)
    V = build_kframe(random_xi(rng, 5, 2))
    W = np.hstack([V, orthogonal_complement(V)])
    assert np.max(np.abs(W.T @ W - np.eye(5))) <= 1e-10


def test_vector_layout_round_trip(rng):
    xi = random_xi(rng, 6, 3)
    theta = angles_to_vector(xi)
    assert theta.shape == (n_angles(6, 3),)
    np.testing.assert_array_equal(vector_to_angles(theta, 6, 3), xi)
    np.testing.assert_allclose(frame_from_vector(theta, 6, 3), build_kframe(xi), atol=1e-15)


def test_factor_split_reassembles(rng):
    xi = random_xi(rng, 5, 2)
    V = build_kframe(xi)
    for a, b in zip(*angle_indices(5, 2)):
        A, R, B = factor_split(xi, a, b)
        assert np.max(np.abs(A @ R @ B - V)) <= 1e-10


def test_vjp_matches_finite_differences(rng):
    p, k = 6, 3
    xi = random_xi(rng, p, k)
    theta = angles_to_vector(xi)
    G = rng.standard_normal((p, k))
    V = frame_from_vector(theta, p, k)
    grad = frame_vjp(theta, V, G)
    h = 1e-6
    for t in range(theta.size):
        e = np.zeros_like(theta)
        e[t] = h
        fd = np.sum(G * (frame_from_vector(theta + e, p, k) - frame_from_vector(theta - e, p, k))) / (2 * h)
        assert abs(fd - grad[t]) <= 1e-7 * max(1.0, abs(fd))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), st.data())
def test_round_trip_property(p, data):
    k = data.draw(st.integers(1, p))
    seed = data.draw(st.integers(0, 2 ** 32 - 1))
    xi = random_xi(np.random.default_rng(seed), p, k)
    V = build_kframe(xi)
    assert np.max(np.abs(V.T @ V - np.eye(k))) <= 1e-10
    np.testing.assert_allclose(build_kframe(invert_kframe(V)), V, atol=1e-8, rtol=0)
