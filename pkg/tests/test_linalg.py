import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import quad_zoh, random_stable_plant, taylor_expm
from lcvx.exceptions import DimensionError
from lcvx.linalg import (
    controllability_rank,
    discretize_zoh,
    eigendecompose,
    expm,
    numerical_rank,
    zoh_matrices,
)


def test_expm_zero_is_identity():
    np.testing.assert_array_equal(expm(np.zeros((2, 2))), np.eye(2))


def test_expm_nilpotent_closed_form():
    np.testing.assert_allclose(expm([[0.0, 6.0], [0.0, 0.0]]), [[1, 6], [0, 1]], rtol=0, atol=1e-14)


def test_expm_diagonal_matches_taylor_oracle():
    M = np.diag([1.2, -2.2, 1.0]) * 0.1
    ref = taylor_expm(M)
    np.testing.assert_allclose(ref, np.diag(np.exp([0.12, -0.22, 0.1])), rtol=1e-15)
    np.testing.assert_allclose(expm(M), ref, rtol=1e-14, atol=0)


@pytest.mark.parametrize("bad", [np.ones((2, 3)), np.array([[np.nan, 0], [0, 1]])])
def test_expm_rejects_bad_input(bad):
    with pytest.raises(DimensionError):
        expm(bad)


def test_expm_relative_error_random():
    rng = np.random.default_rng(7)
    for _ in range(20):
        M = rng.normal(size=(4, 4))
        M *= rng.uniform(0.1, 10.0) / np.linalg.norm(M, 2)
        ref = taylor_expm(M)
        assert np.linalg.norm(expm(M) - ref) <= 1e-12 * np.linalg.norm(ref)


def test_zoh_zero_dynamics_scalar():
    A, B, d = zoh_matrices([[0.0]], [[1.0]], None, 0.5)
    assert A[0, 0] == 1.0
    assert B[0, 0] == pytest.approx(0.5, abs=1e-14)
    assert d[0] == 0.0


def test_zoh_double_integrator_closed_form():
    h = 0.7
    A, B, _ = zoh_matrices([[0, 1], [0, 0]], [[0], [1]], None, h)
    np.testing.assert_allclose(A, [[1, h], [0, 1]], atol=1e-15)
    np.testing.assert_allclose(B, [[h * h / 2], [h]], atol=1e-15)


def test_zoh_zero_Ac_is_exactly_scaled_B():
    rng = np.random.default_rng(3)
    B_c = rng.normal(size=(3, 2))
    for dt in (1e-3, 0.25, 6.0):
        _, B, _ = zoh_matrices(np.zeros((3, 3)), B_c, None, dt)
        np.testing.assert_allclose(B, dt * B_c, rtol=0, atol=1e-14 * max(1, dt))


def test_zoh_lander_against_quadrature(lander_plant):
    A, B, d = discretize_zoh(lander_plant, 6.0)
    B_ref, d_ref = quad_zoh(lander_plant.A_c, lander_plant.B_c, lander_plant.drift, 6.0)
    np.testing.assert_allclose(A, taylor_expm(lander_plant.A_c * 6.0), atol=1e-13)
    np.testing.assert_allclose(B, B_ref, atol=1e-11)
    np.testing.assert_allclose(d, d_ref, atol=1e-11)
    # gravity over one 6 s step: -1.62*36/2 in altitude, -1.62*6 in vertical speed
    np.testing.assert_allclose(d, [0, 0, -29.16, 0, 0, -9.72], atol=1e-12)


def test_zoh_random_stable_plants_against_quadrature():
    rng = np.random.default_rng(11)
    for _ in range(5):
        A_c, B_c, w = random_stable_plant(rng)
        dt = rng.uniform(0.05, 2.0)
        _, B, d = zoh_matrices(A_c, B_c, w, dt)
        B_ref, d_ref = quad_zoh(A_c, B_c, w, dt)
        np.testing.assert_allclose(B, B_ref, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(d, d_ref, rtol=1e-10, atol=1e-12)


def test_zoh_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        zoh_matrices(np.eye(2), np.ones((2, 1)), None, 0.0)


def test_zoh_dimension_checks():
    with pytest.raises(DimensionError):
        zoh_matrices(np.eye(2), np.ones((3, 1)), None, 1.0)
    with pytest.raises(DimensionError):
        zoh_matrices(np.eye(2), np.ones((2, 1)), np.ones(3), 1.0)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (3, 3), elements=st.floats(-1.0, 1.0)),
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
)
def test_expm_semigroup(M, a, b):
    M = M * (5.0 / 3.0)  # entries in [-1, 1] give ||M|| <= 3
    full = expm(M * (a + b))
    assert np.linalg.norm(full - expm(M * a) @ expm(M * b)) <= 1e-9 * (1 + np.linalg.norm(full))


def test_controllability_examples():
    assert controllability_rank(np.diag([1.2, -2.2, 1.0]), [[0.4], [0.3], [0.2]]) == 3
    assert controllability_rank(np.eye(2), [[1.0], [0.0]]) == 1


def test_controllability_random_matches_svd_oracle():
    rng = np.random.default_rng(5)
    M = rng.normal(size=(4, 4))
    A = M - (np.max(np.linalg.eigvals(M).real) + 0.5) * np.eye(4)
    B = rng.normal(size=(4, 2))
    assert controllability_rank(A, B) == 4
    # drop one mode: a block-diagonal A with B blind to the last state
    A2 = np.diag([-1.0, -2.0, -3.0, -4.0])
    B2 = np.array([[1.0, 0], [0, 1.0], [1.0, 1.0], [0, 0]])
    assert controllability_rank(A2, B2) == 3


def test_controllability_invariant_under_similarity():
    rng = np.random.default_rng(9)
    A = rng.normal(size=(3, 3))
    B = rng.normal(size=(3, 1))
    T = np.eye(3) + 0.2 * rng.normal(size=(3, 3))
    Ti = np.linalg.inv(T)
    assert controllability_rank(T @ A @ Ti, T @ B) == controllability_rank(A, B) == 3


def test_controllability_dimension_mismatch():
    with pytest.raises(DimensionError):
        controllability_rank(np.eye(3), np.ones((2, 1)))


def test_numerical_rank_zero_matrix():
    assert numerical_rank(np.zeros((3, 2))) == 0


def test_eigendecompose_diagonal():
    eig = eigendecompose(np.diag([1.2, -2.2, 1.0]))
    assert sorted(eig.eigenvalues.real) == pytest.approx([-2.2, 1.0, 1.2])
    assert eig.diagonalizable
    np.testing.assert_allclose(np.abs(eig.eigenvector_matrix), np.eye(3), atol=1e-15)


def test_eigendecompose_flags_jordan_block():
    assert not eigendecompose([[1.0, 1.0], [0.0, 1.0]]).diagonalizable


def test_eigendecompose_lander_discrete_A(lander_plant):
    A, _, _ = discretize_zoh(lander_plant, 6.0)
    eig = eigendecompose(A)
    # characteristic polynomial of a unit upper-triangular matrix is (lambda - 1)^6
    np.testing.assert_allclose(eig.eigenvalues, np.ones(6), atol=1e-12)
    assert not eig.diagonalizable


def test_eigendecompose_reconstruction_random():
    rng = np.random.default_rng(13)
    for _ in range(10):
        A = rng.normal(size=(4, 4))
        eig = eigendecompose(A)
        assert eig.diagonalizable
        assert np.linalg.norm(eig.reconstruct() - A) <= 1e-8 * (1 + np.linalg.norm(A))
        # complex eigenvalues of a real matrix come in conjugate pairs
        w = eig.eigenvalues
        np.testing.assert_allclose(np.sort_complex(w), np.sort_complex(w.conj()), atol=1e-12)
