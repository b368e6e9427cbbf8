"""Tensor algebra: examples, invariants, and the fixture file format."""

import numpy as np
import pytest

from tscs import (DEFAULT_CAP, MaterializationError, ShapeError, dematricize,
                  kron, matricize, mode_product, read_tensor, vec,
                  write_tensor)
from tscs.tensorfile import tensor_from_bytes, tensor_to_bytes


def random_tensor(rng, shape):
    return rng.uniform(-1.0, 1.0, size=shape)


class TestModeProduct:
    def test_identity_leaves_tensor_unchanged(self):
        rng = np.random.default_rng(0)
        x = random_tensor(rng, (3, 4, 5))
        for mode in (1, 2, 3):
            out = mode_product(x, np.eye(x.shape[mode - 1]), mode)
            np.testing.assert_array_equal(out, x)

    def test_zero_tensor_maps_to_zero(self):
        x = np.zeros((2, 3))
        out = mode_product(x, np.ones((5, 2)), 1)
        assert out.shape == (5, 3)
        np.testing.assert_array_equal(out, np.zeros((5, 3)))

    def test_mode1_is_left_matrix_multiply(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        m = np.array([[1.0, 1.0], [0.0, 1.0]])
        out = mode_product(x, m, 1)
        np.testing.assert_array_equal(out, m @ x)
        np.testing.assert_array_equal(out, np.array([[4.0, 6.0], [3.0, 4.0]]))

    def test_mode2_is_right_multiply_by_transpose(self):
        rng = np.random.default_rng(1)
        x = random_tensor(rng, (4, 3))
        m = random_tensor(rng, (2, 3))
        np.testing.assert_allclose(mode_product(x, m, 2), x @ m.T, atol=1e-15)

    def test_shape_error_names_mode_and_sizes(self):
        with pytest.raises(ShapeError, match="mode-2.*4 columns"):
            mode_product(np.zeros((3, 4)), np.zeros((2, 5)), 2)
        with pytest.raises(ShapeError, match="mode 3"):
            mode_product(np.zeros((3, 4)), np.zeros((2, 4)), 3)

    def test_cross_mode_commutativity(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = random_tensor(rng, (4, 5, 3))
            a = random_tensor(rng, (2, 4))
            b = random_tensor(rng, (6, 3))
            one = mode_product(mode_product(x, a, 1), b, 3)
            two = mode_product(mode_product(x, b, 3), a, 1)
            assert np.max(np.abs(one - two)) <= 1e-12


class TestMatricize:
    def test_mode1_of_matrix_is_itself(self):
        x = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(matricize(x, 1), x)

    def test_mode2_of_matrix_is_transpose(self):
        x = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(matricize(x, 2), x.T)

    def test_indexing_oracle_2x2x2(self):
        x = np.arange(8.0).reshape(2, 2, 2)
        unfolded = matricize(x, 2)
        assert unfolded.shape == (2, 4)
        # oracle: enumerate every entry; columns run over the remaining
        # modes (1, 3) in ascending order, row-major
        expected = np.zeros((2, 4))
        for i1 in range(2):
            for i2 in range(2):
                for i3 in range(2):
                    expected[i2, i1 * 2 + i3] = x[i1, i2, i3]
        np.testing.assert_array_equal(unfolded, expected)

    def test_round_trip_exact(self):
        rng = np.random.default_rng(3)
        x = random_tensor(rng, (3, 4, 5))
        for mode in (1, 2, 3):
            back = dematricize(matricize(x, mode), mode, x.shape)
            np.testing.assert_array_equal(back, x)

    def test_dematricize_zero_and_oracle(self):
        z = dematricize(np.zeros((2, 4)), 2, (2, 2, 2))
        np.testing.assert_array_equal(z, np.zeros((2, 2, 2)))
        x = np.arange(8.0).reshape(2, 2, 2)
        np.testing.assert_array_equal(dematricize(matricize(x, 2), 2, (2, 2, 2)), x)

    def test_size_mismatch(self):
        with pytest.raises(ShapeError):
            dematricize(np.zeros((3, 4)), 1, (2, 4))
        with pytest.raises(ShapeError):
            matricize(np.zeros((2, 2)), 3)

    def test_mat_identity_for_mode_product(self):
        # mode_product must agree with fold(M @ unfold(X)) to 1e-12
        rng = np.random.default_rng(4)
        for _ in range(20):
            x = random_tensor(rng, (3, 4, 2))
            for mode in (1, 2, 3):
                m = random_tensor(rng, (5, x.shape[mode - 1]))
                direct = mode_product(x, m, mode)
                shape = list(x.shape)
                shape[mode - 1] = 5
                via_mat = dematricize(m @ matricize(x, mode), mode, shape)
                assert np.max(np.abs(direct - via_mat)) <= 1e-12


class TestVecAndKron:
    def test_vec_row_major(self):
        np.testing.assert_array_equal(
            vec(np.array([[1.0, 2.0], [3.0, 4.0]])), np.array([1.0, 2.0, 3.0, 4.0])
        )

    def test_vec_of_1d_is_copy(self):
        x = np.array([1.0, 2.0])
        v = vec(x)
        np.testing.assert_array_equal(v, x)
        v[0] = 9.0
        assert x[0] == 1.0

    def test_kron_identities(self):
        np.testing.assert_array_equal(kron(np.eye(2), np.eye(3)), np.eye(6))
        a = np.random.default_rng(5).standard_normal((3, 2))
        np.testing.assert_array_equal(kron(a, np.array([[1.0]])), a)

    def test_kron_definition_oracle(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = kron(a, b)
        expected = np.zeros((4, 4))
        for i in range(2):
            for j in range(2):
                expected[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = a[i, j] * b
        np.testing.assert_array_equal(out, expected)

    def test_kron_mixed_product(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            a, c = rng.standard_normal((3, 2)), rng.standard_normal((2, 4))
            b, d = rng.standard_normal((2, 3)), rng.standard_normal((3, 2))
            left = kron(a, b) @ kron(c, d)
            right = kron(a @ c, b @ d)
            assert np.max(np.abs(left - right)) <= 1e-10

    def test_kron_cap(self):
        with pytest.raises(MaterializationError, match="too large"):
            kron(np.zeros((1 << 13, 2)), np.zeros((1 << 13, 2)), cap=DEFAULT_CAP)

    def test_vec_convention_matches_kron_chain(self):
        # row-major vec: vec(X x_1 A_1 ... x_J A_J) = (A_1 kron ... kron A_J) vec(X)
        rng = np.random.default_rng(7)
        for dims in [(4, 3), (2, 3, 4), (5, 2, 3)]:
            x = random_tensor(rng, dims)
            mats = [random_tensor(rng, (rng.integers(1, 6), n)) for n in dims]
            chained = x
            for mode, m in enumerate(mats, start=1):
                chained = mode_product(chained, m, mode)
            big = mats[0]
            for m in mats[1:]:
                big = kron(big, m)
            assert np.max(np.abs(vec(chained) - big @ vec(x))) <= 1e-10


class TestTensorFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((3, 4, 5))
        path = tmp_path / "x.tsr"
        write_tensor(path, x)
        back = read_tensor(path)
        assert back.shape == x.shape
        assert back.tobytes() == x.tobytes()

    def test_header_layout(self):
        x = np.array([1.0, 2.0])
        blob = tensor_to_bytes(x)
        assert blob[:8] == b"TSCS0001"
        assert blob[8:12] == (1).to_bytes(4, "little")
        assert blob[12:20] == (2).to_bytes(8, "little")
        assert len(blob) == 20 + 16

    def test_bad_magic_and_truncation(self):
        x = np.ones((2, 2))
        blob = tensor_to_bytes(x)
        with pytest.raises(ValueError, match="magic"):
            tensor_from_bytes(b"XXXX" + blob[4:])
        with pytest.raises(ValueError, match="truncated"):
            tensor_from_bytes(blob[:-8])

    def test_non_finite_rejected(self, tmp_path):
        blob = tensor_to_bytes(np.ones(3))
        bad = blob[:-24] + np.array([1.0, np.nan, 3.0]).tobytes()
        with pytest.raises(ValueError, match="non-finite"):
            tensor_from_bytes(bad)
