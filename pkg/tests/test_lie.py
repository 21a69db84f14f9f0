import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from relpose.errors import NonSkewInput, NonUnitInput
from relpose.lie import (
    E1,
    E2,
    E3,
    ExtendedPose,
    exp_so3,
    hat,
    is_rotation,
    kron,
    log_so3,
    projector,
    random_rotation,
    rotation_angle,
    unvec9,
    vec,
    vec3x3,
    vee,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=finite)
rot_vec = arrays(np.float64, 3, elements=st.floats(-4 * np.pi / np.sqrt(3), 4 * np.pi / np.sqrt(3)))


def unit_vectors():
    return vec3.filter(lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: v / np.linalg.norm(v))


class TestHatVee:
    def test_cross_identity(self):
        np.testing.assert_allclose(hat(E3) @ E1, E2)

    def test_zero(self):
        np.testing.assert_array_equal(hat(np.zeros(3)), np.zeros((3, 3)))

    def test_antisymmetric(self):
        W = hat([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(W + W.T, np.zeros((3, 3)))

    def test_vee_round_trip(self):
        np.testing.assert_array_equal(vee(hat([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(vee(np.zeros((3, 3))), np.zeros(3))
        np.testing.assert_array_equal(vee(hat(E1)), E1)

    def test_vee_rejects_non_skew(self):
        with pytest.raises(NonSkewInput):
            vee(np.eye(3))

    @given(vec3, vec3)
    def test_hat_is_cross(self, w, x):
        np.testing.assert_allclose(hat(w) @ x, np.cross(w, x), atol=1e-12)

    @given(vec3)
    def test_hat_vee_inverse(self, w):
        np.testing.assert_array_equal(vee(hat(w)), w)


class TestExp:
    def test_zero_is_identity(self):
        np.testing.assert_array_equal(exp_so3(np.zeros(3)), np.eye(3))

    def test_quarter_turn(self):
        np.testing.assert_allclose(exp_so3(0.5 * np.pi * E3) @ E1, E2, atol=1e-12)

    def test_inverse(self):
        w = np.array([0.3, -1.2, 0.7])
        np.testing.assert_allclose(exp_so3(w) @ exp_so3(-w), np.eye(3), atol=1e-15)

    def test_small_angle_branch_is_continuous(self):
        w = np.array([1.0, -2.0, 0.5])
        w = w / np.linalg.norm(w)
        theta = 0.999e-8
        below = exp_so3(theta * w)
        W = hat(w)
        rodrigues = np.eye(3) + np.sin(theta) * W + (1 - np.cos(theta)) * W @ W
        np.testing.assert_allclose(below, rodrigues, atol=1e-15)
        assert is_rotation(below)

    @given(rot_vec)
    def test_always_rotation(self, w):
        assert is_rotation(exp_so3(w))

    @given(arrays(np.float64, 3, elements=st.floats(-1.5, 1.5)))
    def test_log_inverts_exp(self, w):
        np.testing.assert_allclose(log_so3(exp_so3(w)), w, atol=1e-9)

    def test_rotation_angle_near_pi(self):
        assert rotation_angle(exp_so3(np.pi * E1)) == pytest.approx(np.pi, abs=1e-12)
        assert rotation_angle(exp_so3(1e-7 * E2)) == pytest.approx(1e-7, rel=1e-9)


class TestProjector:
    def test_e3(self):
        np.testing.assert_array_equal(projector(E3), np.diag([1.0, 1.0, 0.0]))

    def test_rejects_non_unit(self):
        with pytest.raises(NonUnitInput):
            projector([1.0, 1.0, 0.0])

    @given(unit_vectors())
    def test_annihilates_and_idempotent(self, y):
        P = projector(y)
        np.testing.assert_allclose(P @ y, 0.0, atol=1e-12)
        np.testing.assert_allclose(P @ P - P, 0.0, atol=1e-12)

    @given(unit_vectors())
    def test_spectrum(self, y):
        ev = np.linalg.eigvalsh(projector(y))
        np.testing.assert_allclose(ev, [0.0, 1.0, 1.0], atol=1e-9)
        assert np.linalg.matrix_rank(projector(y), tol=1e-9) == 2


class TestVecKron:
    def test_vec_identity(self):
        np.testing.assert_array_equal(vec3x3(np.eye(3)), [1, 0, 0, 0, 1, 0, 0, 0, 1])

    def test_column_major(self):
        M = np.arange(9.0).reshape(3, 3)
        np.testing.assert_array_equal(vec(M)[:3], M[:, 0])

    def test_round_trip(self, rng):
        M = rng.standard_normal((3, 3))
        np.testing.assert_array_equal(unvec9(vec3x3(M)), M)

    def test_vec_kron_identity_random_triples(self, rng):
        for _ in range(100):
            A, X, B = (rng.standard_normal((3, 3)) for _ in range(3))
            np.testing.assert_allclose(vec(A @ X @ B), kron(B.T, A) @ vec(X), atol=1e-12)

    def test_kron_identity(self):
        np.testing.assert_array_equal(kron(np.eye(5), np.eye(3)), np.eye(15))

    def test_kron_block_layout(self):
        K = kron(np.array([[1.0, 0.0], [0.0, 0.0]]), np.eye(3))
        expected = np.zeros((6, 6))
        expected[:3, :3] = np.eye(3)
        np.testing.assert_array_equal(K, expected)

    def test_mixed_product(self, rng):
        A, C = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        B, D = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
        np.testing.assert_allclose(kron(A, B) @ kron(C, D), kron(A @ C, B @ D), atol=1e-12)


class TestExtendedPose:
    def test_embedding_layout(self, rng):
        X = ExtendedPose(random_rotation(rng), rng.standard_normal(3), rng.standard_normal(3))
        M = X.as_matrix()
        np.testing.assert_array_equal(M[3:, 3:], np.eye(2))
        np.testing.assert_array_equal(M[3:, :3], np.zeros((2, 3)))
        assert is_rotation(M[:3, :3])

    def test_group_operations_match_matrices(self, rng):
        X = ExtendedPose(random_rotation(rng), rng.standard_normal(3), rng.standard_normal(3))
        Y = ExtendedPose(random_rotation(rng), rng.standard_normal(3), rng.standard_normal(3))
        np.testing.assert_allclose((X @ Y).as_matrix(), X.as_matrix() @ Y.as_matrix(), atol=1e-12)
        np.testing.assert_allclose(X.inverse().as_matrix(), np.linalg.inv(X.as_matrix()), atol=1e-12)
        back = ExtendedPose.from_matrix(X.as_matrix())
        np.testing.assert_array_equal(back.as_matrix(), X.as_matrix())
