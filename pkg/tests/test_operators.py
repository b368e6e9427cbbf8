"""Sensing/adjoint operators: equivalence with the materialized matrix,
adjoint identities, parameter counts, and serialization."""

import numpy as np
import pytest

from tscs import (MaterializationError, ShapeError, build_adjoint,
                  build_operator, kron, load_operator, save_operator, vec)


def random_case(rng, with_basis=False):
    j = int(rng.integers(2, 4))
    n_shape = tuple(int(rng.integers(2, 9)) for _ in range(j))
    m_shape = tuple(int(rng.integers(1, n + 1)) for n in n_shape)
    t = int(rng.choice([1, 3, 5]))
    plan = None
    if with_basis:
        plan = [[int(rng.choice([1, n])) for n in n_shape] for _ in range(t)]
    return build_operator(n_shape, m_shape, t, basis_plan=plan,
                          rng_seed=int(rng.integers(0, 2**31)))


class TestBuildOperator:
    def test_deterministic_under_seed(self):
        a = build_operator((4, 5), (2, 3), 3, rng_seed=11)
        b = build_operator((4, 5), (2, 3), 3, rng_seed=11)
        for ba, bb in zip(a.branches, b.branches):
            for fa, fb in zip(ba, bb):
                np.testing.assert_array_equal(fa.weights, fb.weights)

    def test_single_branch_is_separable(self):
        op = build_operator((4, 4), (2, 2), 1, rng_seed=0)
        s = np.random.default_rng(1).standard_normal((4, 4))
        e1, e2 = (f.effective() for f in op.branches[0])
        np.testing.assert_allclose(op.apply(s), e1 @ s @ e2.T, atol=1e-12)

    def test_gtsnet3_configuration(self):
        # three branches with 8/16/32 block DCT bases on a 256x256 input
        op = build_operator((256, 256), (80, 80), 3, basis_plan=[8, 16, 32], rng_seed=0)
        assert op.branch_count == 3
        blocks = [branch[0].basis.block_size for branch in op.branches]
        assert blocks == [8, 16, 32]
        assert all(f.basis.kind == "block_dct" for b in op.branches for f in b)

    def test_invalid_block_size(self):
        with pytest.raises(ValueError, match="does not divide"):
            build_operator((10, 10), (4, 4), 1, basis_plan=[8], rng_seed=0)

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            build_operator((4, 4), (5, 2), 1)
        with pytest.raises(ShapeError):
            build_operator((4,), (2, 2), 1)


class TestApplyAndMaterialize:
    def test_identity_operator_is_identity(self):
        op = build_operator((3, 3), (3, 3), 1, rng_seed=0)
        for branch in op.branches:
            for factor in branch:
                factor.weights[:] = np.eye(3)
        s = np.random.default_rng(2).standard_normal((3, 3))
        np.testing.assert_array_equal(op.apply(s), s)

    def test_zero_in_zero_out(self):
        op = build_operator((4, 5), (2, 3), 2, rng_seed=3)
        np.testing.assert_array_equal(op.apply(np.zeros((4, 5))), np.zeros((2, 3)))

    def test_apply_matches_materialized_matrix(self):
        op = build_operator((6, 6), (3, 3), 2, rng_seed=4)
        s = np.random.default_rng(5).standard_normal((6, 6))
        lhs = vec(op.apply(s))
        rhs = op.materialize() @ vec(s)
        assert np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)) <= 1e-10

    def test_equivalence_randomized(self):
        rng = np.random.default_rng(6)
        for trial in range(40):
            op = random_case(rng, with_basis=bool(trial % 2))
            s = rng.standard_normal(op.input_shape)
            lhs = vec(op.apply(s))
            rhs = op.materialize() @ vec(s)
            scale = max(np.max(np.abs(rhs)), 1e-30)
            assert np.max(np.abs(lhs - rhs)) / scale <= 1e-10

    def test_materialize_linearity_in_branches(self):
        op = build_operator((4, 4), (2, 2), 2, rng_seed=7)
        for f1, f2 in zip(op.branches[0], op.branches[1]):
            f2.weights[:] = f1.weights
        single = kron(*(f.effective() for f in op.branches[0]))
        np.testing.assert_allclose(op.materialize(), 2.0 * single, atol=1e-14)

    def test_single_factor_materializes_to_itself(self):
        op = build_operator((5,), (3,), 1, rng_seed=8)
        np.testing.assert_array_equal(op.materialize(), op.branches[0][0].effective())

    def test_materialize_cap(self):
        op = build_operator((64, 64), (32, 32), 1, rng_seed=9)
        with pytest.raises(MaterializationError):
            op.materialize(cap=1000)

    def test_linearity(self):
        rng = np.random.default_rng(10)
        op = build_operator((5, 4), (3, 2), 3, rng_seed=11)
        for _ in range(20):
            s1 = rng.standard_normal((5, 4))
            s2 = rng.standard_normal((5, 4))
            a, b = rng.standard_normal(2)
            lhs = op.apply(a * s1 + b * s2)
            rhs = a * op.apply(s1) + b * op.apply(s2)
            assert np.max(np.abs(lhs - rhs)) <= 1e-11

    def test_structured_with_identity_bases_bit_equals_unstructured(self):
        plain = build_operator((4, 6), (2, 3), 2, basis_plan=None, rng_seed=12)
        tagged = build_operator((4, 6), (2, 3), 2, basis_plan=[[1, 1], [1, 1]], rng_seed=12)
        s = np.random.default_rng(13).standard_normal((4, 6))
        np.testing.assert_array_equal(plain.apply(s), tagged.apply(s))

    def test_shape_mismatch(self):
        op = build_operator((4, 4), (2, 2), 1, rng_seed=0)
        with pytest.raises(ShapeError):
            op.apply(np.zeros((4, 5)))
        with pytest.raises(ShapeError):
            op.transpose_apply(np.zeros((3, 2)))


class TestAdjoint:
    def test_transpose_apply_identity_operator(self):
        op = build_operator((3, 3), (3, 3), 1, rng_seed=0)
        for factor in op.branches[0]:
            factor.weights[:] = np.eye(3)
        y = np.random.default_rng(14).standard_normal((3, 3))
        np.testing.assert_array_equal(op.transpose_apply(y), y)

    def test_transpose_apply_zero(self):
        op = build_operator((4, 5), (2, 3), 2, rng_seed=15)
        np.testing.assert_array_equal(op.transpose_apply(np.zeros((2, 3))), np.zeros((4, 5)))

    def test_inner_product_identity(self):
        rng = np.random.default_rng(16)
        op = build_operator((6, 6), (3, 4), 3, basis_plan=[1, 2, 3], rng_seed=17)
        for _ in range(20):
            s = rng.standard_normal((6, 6))
            y = rng.standard_normal((3, 4))
            lhs = float(np.sum(op.apply(s) * y))
            rhs = float(np.sum(s * op.transpose_apply(y)))
            assert abs(lhs - rhs) / max(abs(lhs), 1e-30) <= 1e-10

    def test_transpose_apply_matches_materialized_transpose(self):
        rng = np.random.default_rng(18)
        op = random_case(rng, with_basis=True)
        y = rng.standard_normal(op.output_shape)
        lhs = vec(op.transpose_apply(y))
        rhs = op.materialize().T @ vec(y)
        scale = max(np.max(np.abs(rhs)), 1e-30)
        assert np.max(np.abs(lhs - rhs)) / scale <= 1e-10

    def test_transpose_init_proxy_equals_transpose_apply(self):
        rng = np.random.default_rng(19)
        for trial in range(20):
            op = random_case(rng, with_basis=bool(trial % 2))
            adj = build_adjoint(op, init="transpose")
            s = rng.standard_normal(op.input_shape)
            y = op.apply(s)
            lhs = adj.apply(y)
            rhs = op.transpose_apply(y)
            scale = max(np.max(np.abs(rhs)), 1e-30)
            assert np.max(np.abs(lhs - rhs)) / scale <= 1e-10

    def test_identity_sensing_proxy_recovers_exactly(self):
        op = build_operator((4, 4), (4, 4), 1, rng_seed=20)
        for factor in op.branches[0]:
            factor.weights[:] = np.eye(4)
        adj = build_adjoint(op, init="transpose")
        s = np.random.default_rng(21).standard_normal((4, 4))
        np.testing.assert_array_equal(adj.apply(op.apply(s)), s)

    def test_gaussian_init_reproducible(self):
        op = build_operator((4, 4), (2, 2), 2, rng_seed=22)
        a = build_adjoint(op, init="gaussian", rng_seed=5)
        b = build_adjoint(op, init="gaussian", rng_seed=5)
        for ba, bb in zip(a.branches, b.branches):
            for fa, fb in zip(ba, bb):
                np.testing.assert_array_equal(fa.weights, fb.weights)


class TestParamCount:
    def test_formula_example(self):
        op = build_operator((32, 32), (16, 16), 3, rng_seed=23)
        counts = op.param_count()
        assert counts.factorized == 3 * (16 * 32 + 16 * 32) == 3072
        assert counts.dense_equivalent == (16 * 16) * (32 * 32) == 262144

    def test_single_factor_equals_dense(self):
        op = build_operator((7,), (3,), 1, rng_seed=24)
        counts = op.param_count()
        assert counts.factorized == counts.dense_equivalent == 21

    def test_matches_stored_weights(self):
        rng = np.random.default_rng(25)
        for _ in range(10):
            op = random_case(rng)
            stored = sum(f.weights.size for b in op.branches for f in b)
            assert op.param_count().factorized == stored

    def test_full_image_illustration(self):
        # 512x512 image at measurement rate ~0.36: the dense matrix needs
        # 94372 x 262144 entries (the >80 GB storage illustration)
        op = build_operator((512, 512), (307, 307), 1, rng_seed=26)
        counts = op.param_count()
        assert counts.dense_equivalent == (307 * 307) * (512 * 512)
        assert counts.dense_equivalent * 8 > 80 * 2**30
        assert counts.factorized < counts.dense_equivalent

    def test_factorized_strictly_smaller_for_compression(self):
        # holds at image-like per-mode sizes (n_j >= 8); degenerate modes
        # (m_j = 1 with T = 5) can tip the balance the other way
        rng = np.random.default_rng(27)
        for _ in range(10):
            j = int(rng.integers(2, 4))
            n_shape = tuple(int(rng.integers(8, 33)) for _ in range(j))
            m_shape = tuple(int(rng.integers(2, n)) for n in n_shape)
            op = build_operator(n_shape, m_shape, int(rng.integers(1, 6)), rng_seed=1)
            counts = op.param_count()
            assert counts.factorized < counts.dense_equivalent


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(28)
        for with_basis in (False, True):
            op = random_case(rng, with_basis=with_basis)
            path = tmp_path / f"op{int(with_basis)}.tsop"
            save_operator(op, path)
            back = load_operator(path)
            assert back.input_shape == op.input_shape
            assert back.output_shape == op.output_shape
            assert back.branch_count == op.branch_count
            for ba, bb in zip(op.branches, back.branches):
                for fa, fb in zip(ba, bb):
                    assert fa.weights.tobytes() == fb.weights.tobytes()
                    if fa.basis is None:
                        assert fb.basis is None
                    else:
                        assert fb.basis.kind == fa.basis.kind
                        assert fb.basis.block_size == fa.basis.block_size
            # saving the loaded operator reproduces the same bytes
            path2 = tmp_path / "again.tsop"
            save_operator(back, path2)
            assert path.read_bytes() == path2.read_bytes()

    def test_adjoint_round_trip(self, tmp_path):
        op = build_operator((4, 6), (2, 3), 2, basis_plan=[1, 2], rng_seed=29)
        adj = build_adjoint(op, init="transpose")
        path = tmp_path / "adj.tsop"
        save_operator(adj, path)
        back = load_operator(path)
        y = np.random.default_rng(30).standard_normal((2, 3))
        np.testing.assert_array_equal(back.apply(y), adj.apply(y))
