"""
Tests for projection.py module
Coverage: projection pairs, implicit Kronecker dictionary, correlation map, coherence
"""
import itertools
import math

import numpy as np
import pytest

from src.cosa.errors import ArgumentError, ShapeError
from src.cosa.projection import (apply_dictionary, atom_gram, atom_index, coherence, column_norms,
                                 correlation_map, dictionary_view, leading_block, make_pair,
                                 orthonormalize_columns, regenerate, unvec, vec)
from src.cosa.randgen import derive_seed, gaussian_matrix
from src.cosa.rip import SparseVector

from tests.conftest import materialize_psi


@pytest.mark.unit
class TestMakePair:
    """Test seeded projection pairs"""

    def test_shapes_and_seed_streams(self):
        """Test L = m×a from derive_seed(seed, 0), R = b×n from derive_seed(seed, 1)"""
        pair = make_pair(5, 10, 8, 4, 3)
        assert pair.L.shape == (10, 4)
        assert pair.R.shape == (3, 8)
        assert np.array_equal(pair.L, gaussian_matrix(derive_seed(5, 0), 10, 4))
        assert np.array_equal(pair.R, gaussian_matrix(derive_seed(5, 1), 3, 8))

    def test_deterministic(self):
        """Test identical seeds give identical pairs"""
        first, second = make_pair(3, 6, 5, 2, 2), make_pair(3, 6, 5, 2, 2)
        assert np.array_equal(first.L, second.L)
        assert np.array_equal(first.R, second.R)

    def test_read_only(self):
        """Test L and R cannot be modified"""
        pair = make_pair(3, 6, 5, 2, 2)
        with pytest.raises(ValueError):
            pair.L[0, 0] = 1.0

    def test_invalid_dims(self):
        """Test a > m, b > n and non-positive dims"""
        with pytest.raises(ArgumentError):
            make_pair(0, 4, 4, 5, 2)
        with pytest.raises(ArgumentError):
            make_pair(0, 4, 4, 2, 5)
        with pytest.raises(ArgumentError):
            make_pair(0, 0, 4, 1, 1)

    def test_orthonormalized(self):
        """Test LᵀL = I and RRᵀ = I"""
        pair = make_pair(9, 12, 10, 5, 4, orthonormalize=True)
        assert np.allclose(pair.L.T @ pair.L, np.eye(5), atol=1e-12)
        assert np.allclose(pair.R @ pair.R.T, np.eye(4), atol=1e-12)

    def test_orthonormalize_columns_span(self):
        """Test Gram-Schmidt keeps the column span"""
        A = gaussian_matrix(1, 6, 3)
        Q = orthonormalize_columns(A)
        assert np.allclose(Q @ (Q.T @ A), A, atol=1e-12)

    def test_leading_block_nested(self):
        """Test leading blocks are prefixes of the full draw"""
        full = make_pair(4, 12, 10, 6, 5)
        block = leading_block(full, 3, 2)
        assert np.array_equal(block.L, full.L[:, :3])
        assert np.array_equal(block.R, full.R[:2, :])
        assert block.drawn_as == (6, 5)
        with pytest.raises(ArgumentError):
            leading_block(full, 7, 2)

    def test_regenerate(self):
        """Test pairs rebuild from seed and dims alone"""
        full = make_pair(4, 12, 10, 6, 5)
        for pair in (full, leading_block(full, 3, 2)):
            rebuilt = regenerate(pair)
            assert np.array_equal(rebuilt.L, pair.L)
            assert np.array_equal(rebuilt.R, pair.R)


@pytest.mark.unit
class TestDictionary:
    """Test Ψ = Rᵀ⊗L without materialization"""

    def test_default_normalization(self, tiny_pair):
        """Test 1/√(mn) for Gaussian pairs and 1 for orthonormal ones"""
        assert dictionary_view(tiny_pair).normalization == pytest.approx(1.0 / math.sqrt(12))
        ortho = make_pair(1, 4, 4, 2, 2, orthonormalize=True)
        assert dictionary_view(ortho).normalization == 1.0

    def test_vec_unvec_column_major(self):
        """Test k = i + j·a indexing"""
        Y = np.arange(6.0).reshape(2, 3)
        alpha = vec(Y)
        assert alpha[1] == Y[1, 0]
        assert alpha[2] == Y[0, 1]
        assert np.array_equal(unvec(alpha, 2, 3), Y)
        i, j = atom_index(5, 2)
        assert (int(i), int(j)) == (1, 2)

    def test_apply_matches_materialized(self, tiny_view):
        """Test apply_dictionary against explicit (Rᵀ⊗L)·α/√12"""
        alpha = gaussian_matrix(3, 1, 4).ravel()
        expected = materialize_psi(tiny_view) @ alpha
        assert np.max(np.abs(vec(apply_dictionary(tiny_view, alpha)) - expected)) <= 1e-12

    def test_apply_sparse_matches_dense(self, tiny_view):
        """Test sparse and dense inputs agree"""
        sparse = SparseVector(dim=4, support=(0, 3), values=np.array([1.5, -2.0]))
        dense = apply_dictionary(tiny_view, sparse.to_dense())
        assert np.max(np.abs(apply_dictionary(tiny_view, sparse) - dense)) <= 1e-12

    def test_apply_zero_and_empty(self, tiny_view):
        """Test α = 0 and empty support give the zero matrix"""
        assert not apply_dictionary(tiny_view, np.zeros(4)).any()
        assert not apply_dictionary(tiny_view, SparseVector(4, (), np.zeros(0))).any()

    def test_apply_shape_errors(self, tiny_view):
        """Test wrong coefficient dimensions"""
        with pytest.raises(ShapeError):
            apply_dictionary(tiny_view, np.zeros(5))
        with pytest.raises(ShapeError):
            apply_dictionary(tiny_view, np.zeros((3, 2)))

    def test_kronecker_vec_equivalence(self):
        """Test 50 random tiny fixtures: vec(LYR) = (Rᵀ⊗L)·vec(Y)"""
        for trial in range(50):
            seed = derive_seed(17, trial)
            m, n = 2 + trial % 5, 2 + (trial // 5) % 5
            a, b = 1 + trial % m, 1 + (trial // 3) % n
            view = dictionary_view(make_pair(seed, m, n, a, b), normalization=1.0)
            Y = gaussian_matrix(derive_seed(seed, 9), a, b)
            expected = materialize_psi(view) @ vec(Y)
            assert np.max(np.abs(vec(apply_dictionary(view, Y)) - expected)) <= 1e-12

    def test_correlation_matches_materialized(self, tiny_view):
        """Test Ψᵀ·vec(E) against the dense oracle"""
        E = gaussian_matrix(4, 3, 4)
        expected = materialize_psi(tiny_view).T @ vec(E)
        assert np.max(np.abs(vec(correlation_map(tiny_view, E)) - expected)) <= 1e-12

    def test_correlation_adjoint(self, tiny_view):
        """Test ⟨Ψα, E⟩ = ⟨α, Ψᵀ E⟩"""
        alpha = gaussian_matrix(5, 1, 4).ravel()
        E = gaussian_matrix(6, 3, 4)
        left = float(np.sum(apply_dictionary(tiny_view, alpha) * E))
        right = float(alpha @ vec(correlation_map(tiny_view, E)))
        assert left == pytest.approx(right, abs=1e-12)

    def test_correlation_shape_error(self, tiny_view):
        """Test wrong residual shape"""
        with pytest.raises(ShapeError):
            correlation_map(tiny_view, np.zeros((4, 3)))

    def test_column_norms_and_gram(self, tiny_view):
        """Test atom norms and Gram matrix against Ψ"""
        psi = materialize_psi(tiny_view)
        assert np.allclose(vec(column_norms(tiny_view)), np.linalg.norm(psi, axis=0), atol=1e-12)
        support = [0, 2, 3]
        assert np.allclose(atom_gram(tiny_view, support), psi[:, support].T @ psi[:, support], atol=1e-12)

    @pytest.mark.slow
    @pytest.mark.parametrize("a,b", [(32, 8), (64, 16), (128, 32), (256, 64)])
    def test_column_norms_concentrate(self, a, b):
        """Test every atom norm lies in [0.8, 1.2] on the 512x256 base after 1/√(mn) scaling"""
        norms = column_norms(dictionary_view(make_pair(derive_seed(0, 0), 512, 256, a, b)))
        assert norms.shape == (a, b)
        assert 0.8 <= norms.min() and norms.max() <= 1.2


@pytest.mark.unit
class TestCoherence:
    """Test mutual coherence"""

    def test_matches_brute_force(self, tiny_view):
        """Test (3,4,2,2) against all 6 column pairs of Ψ"""
        psi = materialize_psi(tiny_view)
        unit = psi / np.linalg.norm(psi, axis=0)
        brute = max(abs(float(unit[:, p] @ unit[:, q]))
                    for p, q in itertools.combinations(range(psi.shape[1]), 2))
        assert coherence(tiny_view) == pytest.approx(brute, abs=1e-12)

    def test_orthonormal_pair_is_incoherent(self):
        """Test μ = 0 for orthonormal factors"""
        view = dictionary_view(make_pair(2, 6, 6, 3, 3, orthonormalize=True))
        assert coherence(view) <= 1e-12

    def test_range(self, small_pair):
        """Test μ ∈ [0, 1]"""
        assert 0.0 <= coherence(dictionary_view(small_pair)) <= 1.0

    def test_single_atom(self):
        """Test a 1-atom dictionary has no coherence"""
        with pytest.raises(ArgumentError):
            coherence(dictionary_view(make_pair(1, 3, 3, 1, 1)))

    @pytest.mark.slow
    def test_preset_coherence_values(self):
        """Test extreme and moderate configs against reference μ within 0.04, all means below 0.244"""
        references = {(32, 8): 0.163, (256, 64): 0.219}
        for a, b in ((32, 8), (64, 16), (128, 32), (256, 64)):
            values = [coherence(dictionary_view(make_pair(derive_seed(0, k), 512, 256, a, b)))
                      for k in range(5)]
            assert np.mean(values) < 0.244
            if (a, b) in references:
                assert abs(np.mean(values) - references[(a, b)]) <= 0.04
