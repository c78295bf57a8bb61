"""
Tests for rip.py module
Coverage: sparse vectors, isometry ratios, Monte-Carlo RIP, theoretical bound, OMP recovery
"""
import math

import numpy as np
import pytest

from src.cosa.config import REFERENCE_STUDY
from src.cosa.errors import ArgumentError, NumericalError, ShapeError
from src.cosa.models import RipTheoryConfig
from src.cosa.projection import apply_dictionary, dictionary_view, make_pair, vec
from src.cosa.randgen import derive_seed
from src.cosa.rip import (SparseVector, conservative_factor, difference_ratio, estimate_rip,
                          isometry_ratio, omp_recover, planted_recovery_trials, ratio_histogram,
                          run_rip_study, sample_sparse_vector, theoretical_bound)

from tests.conftest import materialize_psi

# Referenzwerte δ_s (Mittel über Matrix-Seeds) für Basis 512x256
REFERENCE_DELTAS = {
    (32, 8): {5: 0.158, 10: 0.133, 20: 0.098},
    (64, 16): {5: 0.124, 10: 0.100, 20: 0.090},
    (128, 32): {5: 0.166, 10: 0.149, 20: 0.119},
    (256, 64): {5: 0.136, 10: 0.111, 20: 0.082},
}


@pytest.mark.unit
class TestSparseVector:
    """Test the s-sparse coefficient type"""

    def test_valid_vector(self):
        """Test construction and dense expansion"""
        alpha = SparseVector(dim=6, support=(1, 4), values=np.array([2.0, -1.0]))
        assert alpha.sparsity == 2
        assert alpha.norm_squared() == 5.0
        assert np.array_equal(alpha.to_dense(), [0, 2.0, 0, 0, -1.0, 0])

    def test_values_read_only(self):
        """Test stored values are immutable"""
        alpha = SparseVector(dim=3, support=(0,), values=np.array([1.0]))
        with pytest.raises(ValueError):
            alpha.values[0] = 2.0

    def test_from_unsorted(self):
        """Test support is sorted with values following"""
        alpha = SparseVector.from_unsorted(5, [3, 0], [7.0, 8.0])
        assert alpha.support == (0, 3)
        assert list(alpha.values) == [8.0, 7.0]

    def test_invalid_vectors(self):
        """Test unsorted, duplicate, out-of-range and non-finite inputs"""
        with pytest.raises(ArgumentError):
            SparseVector(dim=5, support=(3, 1), values=np.ones(2))
        with pytest.raises(ArgumentError):
            SparseVector(dim=5, support=(1, 1), values=np.ones(2))
        with pytest.raises(ArgumentError):
            SparseVector(dim=5, support=(5,), values=np.ones(1))
        with pytest.raises(ShapeError):
            SparseVector(dim=5, support=(1,), values=np.ones(2))
        with pytest.raises(NumericalError):
            SparseVector(dim=5, support=(1,), values=np.array([np.inf]))

    def test_sample_sparse_vector(self):
        """Test sampling is deterministic with s distinct non-zero entries"""
        first = sample_sparse_vector(42, 100, 7)
        second = sample_sparse_vector(42, 100, 7)
        assert first.support == second.support
        assert np.array_equal(first.values, second.values)
        assert first.sparsity == 7
        assert np.all(first.values != 0.0)

    def test_sample_sparse_vector_invalid(self):
        """Test s outside [1, dim]"""
        with pytest.raises(ArgumentError):
            sample_sparse_vector(0, 4, 5)
        with pytest.raises(ArgumentError):
            sample_sparse_vector(0, 4, 0)


@pytest.mark.unit
class TestIsometryRatio:
    """Test ‖Ψα‖²/‖α‖²"""

    def test_matches_materialized(self, tiny_view):
        """Test against the dense dictionary"""
        alpha = SparseVector(dim=4, support=(0, 2), values=np.array([0.5, -1.5]))
        dense = materialize_psi(tiny_view) @ alpha.to_dense()
        expected = float(dense @ dense) / alpha.norm_squared()
        assert isometry_ratio(tiny_view, alpha) == pytest.approx(expected, abs=1e-12)

    def test_scale_invariant(self, tiny_view):
        """Test r(cα) = r(α)"""
        alpha = SparseVector(dim=4, support=(1, 3), values=np.array([1.0, 2.0]))
        assert isometry_ratio(tiny_view, alpha.scaled(-3.5)) == pytest.approx(isometry_ratio(tiny_view, alpha))

    def test_orthonormal_is_isometric(self):
        """Test ratio 1 for orthonormal square factors"""
        view = dictionary_view(make_pair(3, 5, 4, 5, 4, orthonormalize=True))
        alpha = sample_sparse_vector(1, view.dim, 6)
        assert isometry_ratio(view, alpha) == pytest.approx(1.0, abs=1e-12)

    def test_dimension_mismatch(self, tiny_view):
        """Test wrong coefficient dimension"""
        with pytest.raises(ShapeError):
            isometry_ratio(tiny_view, SparseVector(dim=5, support=(0,), values=np.ones(1)))

    def test_difference_ratio(self, tiny_view):
        """Test ratio of α₁ − α₂ equals the ratio of the explicit difference"""
        first = SparseVector(dim=4, support=(0, 1), values=np.array([1.0, 2.0]))
        second = SparseVector(dim=4, support=(1, 3), values=np.array([2.0, 1.0]))
        explicit = SparseVector(dim=4, support=(0, 3), values=np.array([1.0, -1.0]))
        assert difference_ratio(tiny_view, first, second) == pytest.approx(isometry_ratio(tiny_view, explicit))
        with pytest.raises(ArgumentError):
            difference_ratio(tiny_view, first, first)

    @pytest.mark.slow
    def test_difference_form_on_preset(self):
        """Test |r − 1| for differences of 10-sparse pairs stays within 0.3 at 95% on 512x256, (256,64)"""
        view = dictionary_view(make_pair(derive_seed(0, 0), 512, 256, 256, 64))
        deviations = []
        for trial in range(200):
            first = sample_sparse_vector(derive_seed(21, 2 * trial), view.dim, 10)
            second = sample_sparse_vector(derive_seed(21, 2 * trial + 1), view.dim, 10)
            deviations.append(abs(difference_ratio(view, first, second) - 1.0))
        assert np.percentile(deviations, 95) <= 0.3


@pytest.mark.unit
class TestEstimateRip:
    """Test the Monte-Carlo RIP estimator"""

    @pytest.mark.parametrize("s", [1, 5, 20])
    def test_exact_isometry(self, s):
        """Test orthonormal full-dimension pair gives δ ≤ 1e-10"""
        view = dictionary_view(make_pair(1, 8, 8, 8, 8, orthonormalize=True))
        assert estimate_rip(view, s, num_samples=200, base_seed=3).delta <= 1e-10

    def test_deterministic(self, small_pair):
        """Test identical inputs give identical δ"""
        view = dictionary_view(small_pair)
        assert estimate_rip(view, 2, 100, base_seed=5).delta == estimate_rip(view, 2, 100, base_seed=5).delta

    def test_thread_independent(self, small_pair):
        """Test thread count does not change δ or ratios"""
        view = dictionary_view(small_pair)
        serial = estimate_rip(view, 3, 150, base_seed=8, threads=1, keep_ratios=True)
        parallel = estimate_rip(view, 3, 150, base_seed=8, threads=4, keep_ratios=True)
        assert serial.delta == parallel.delta
        assert np.array_equal(serial.ratios, parallel.ratios)

    def test_delta_non_negative(self, small_pair):
        """Test δ ≥ 0 and ratios kept only on request"""
        estimate = estimate_rip(dictionary_view(small_pair), 2, 100)
        assert estimate.delta >= 0.0
        assert estimate.ratios is None

    def test_invalid_arguments(self, small_pair):
        """Test too few samples and invalid s"""
        view = dictionary_view(small_pair)
        with pytest.raises(ArgumentError):
            estimate_rip(view, 2, num_samples=99)
        with pytest.raises(ArgumentError):
            estimate_rip(view, 7, num_samples=100)

    def test_ratio_histogram(self, small_pair):
        """Test histogram counts sum to N"""
        estimate = estimate_rip(dictionary_view(small_pair), 2, 120, keep_ratios=True)
        rows = ratio_histogram(estimate, bins=10)
        assert len(rows) == 10
        assert sum(row['count'] for row in rows) == 120
        with pytest.raises(ArgumentError):
            ratio_histogram(estimate_rip(dictionary_view(small_pair), 2, 100))


@pytest.mark.unit
class TestBound:
    """Test theoretical bound and conservative factor"""

    def test_bound_value(self):
        """Test C·√(s·ln n / m)"""
        cfg = RipTheoryConfig(C=1.0, m_eff=16, n_ambient=math.e ** 2)
        assert theoretical_bound(cfg, 2) == pytest.approx(0.5)

    def test_bound_log_base(self):
        """Test a base-2 logarithm"""
        cfg = RipTheoryConfig(C=2.0, m_eff=64, n_ambient=256, log_base=2)
        assert theoretical_bound(cfg, 8) == pytest.approx(2.0)

    def test_bound_monotone_in_s(self):
        """Test the bound grows with s"""
        cfg = RipTheoryConfig(m_eff=1000, n_ambient=500)
        assert theoretical_bound(cfg, 10) > theoretical_bound(cfg, 5)

    def test_bound_requires_dims(self):
        """Test unresolved config and invalid s"""
        with pytest.raises(ArgumentError):
            theoretical_bound(RipTheoryConfig(), 5)
        with pytest.raises(ArgumentError):
            theoretical_bound(RipTheoryConfig(m_eff=10, n_ambient=10), 0)

    def test_resolved_defaults(self):
        """Test m_eff = mn and n_ambient = ab"""
        cfg = RipTheoryConfig().resolved(512, 256, 32, 8)
        assert cfg.m_eff == 512 * 256
        assert cfg.n_ambient == 256

    def test_conservative_factor(self):
        """Test ratio and the zero-δ case"""
        assert conservative_factor(0.1, 0.3) == pytest.approx(3.0)
        assert math.isinf(conservative_factor(0.0, 0.3))
        with pytest.raises(ArgumentError):
            conservative_factor(-0.1, 0.3)


@pytest.mark.unit
class TestRipStudy:
    """Test the configuration × sparsity study"""

    def test_rows_and_statistics(self):
        """Test row layout, ddof=0 spread and compression ratio"""
        report = run_rip_study([(4, 3), (2, 2)], [1, 2], (10, 8), num_samples=100,
                               matrix_seeds=[1, 2, 3])
        assert len(report.rows) == 4
        row = report.row(4, 3, 2)
        assert row.config == "4x3"
        assert row.compression_ratio == pytest.approx(80 / 12)
        assert row.delta_mean == pytest.approx(np.mean(row.deltas))
        assert row.delta_std == pytest.approx(np.std(row.deltas))
        assert len(row.deltas) == 3
        assert set(report.as_rows()[0]) == {'config', 'a', 'b', 'compression_ratio', 's', 'delta_mean',
                                            'delta_std', 'coherence', 'bound', 'conservative_factor'}

    def test_thread_independent(self):
        """Test study results do not depend on threads"""
        args = ([(3, 2)], [2], (6, 5))
        serial = run_rip_study(*args, num_samples=100, matrix_seeds=[4], threads=1)
        parallel = run_rip_study(*args, num_samples=100, matrix_seeds=[4], threads=3)
        assert serial.as_rows() == parallel.as_rows()

    def test_empty_inputs(self):
        """Test empty configs are rejected"""
        with pytest.raises(ArgumentError):
            run_rip_study([], [1], (4, 4))

    @pytest.mark.slow
    def test_reference_table(self):
        """Test the 512x256 preset: 12 cells within ±0.05, std ≤ 0.08, all δ < 0.5"""
        seeds = [derive_seed(0, k) for k in range(REFERENCE_STUDY['matrix_seeds'])]
        report = run_rip_study(REFERENCE_STUDY['configs'], REFERENCE_STUDY['sparsities'],
                               (REFERENCE_STUDY['m'], REFERENCE_STUDY['n']),
                               REFERENCE_STUDY['num_samples'], seeds, threads=4)
        assert len(report.rows) == 12
        for row in report.rows:
            assert abs(row.delta_mean - REFERENCE_DELTAS[(row.a, row.b)][row.s]) <= 0.05
            assert row.delta_std <= 0.08
            assert max(row.deltas) < 0.5
        for a, b in REFERENCE_STUDY['configs']:
            assert report.row(a, b, 20).delta_mean <= report.row(a, b, 5).delta_mean + 0.02

    @pytest.mark.slow
    def test_estimator_concentration(self):
        """Test 20 estimates on one matrix with varying sample seeds have std ≤ 0.05"""
        view = dictionary_view(make_pair(1, 512, 256, 64, 16))
        deltas = [estimate_rip(view, 10, 1000, base_seed=derive_seed(99, k), threads=4).delta
                  for k in range(20)]
        assert np.std(deltas) <= 0.05


@pytest.mark.unit
class TestOmp:
    """Test orthogonal matching pursuit"""

    def test_exact_recovery_orthonormal(self):
        """Test recovery of a planted vector over an orthonormal dictionary"""
        view = dictionary_view(make_pair(2, 6, 5, 4, 3, orthonormalize=True))
        planted = SparseVector(dim=12, support=(1, 7, 10), values=np.array([1.0, -2.0, 0.75]))
        recovered = omp_recover(view, apply_dictionary(view, planted), 3)
        assert recovered.support == planted.support
        assert np.allclose(recovered.values, planted.values, atol=1e-10)

    def test_zero_target(self, small_pair):
        """Test the zero target yields an empty support"""
        recovered = omp_recover(dictionary_view(small_pair), np.zeros((8, 6)), 2)
        assert recovered.sparsity == 0

    def test_residual_orthogonal_to_support(self, small_pair):
        """Test least-squares residual is orthogonal to chosen atoms"""
        view = dictionary_view(small_pair)
        target = apply_dictionary(view, np.arange(1.0, 7.0)) + 0.01
        recovered = omp_recover(view, target, 3)
        residual = target - apply_dictionary(view, recovered)
        correlations = vec(np.asarray(view.normalization * (small_pair.L.T @ residual @ small_pair.R.T)))
        assert np.all(np.abs(correlations[list(recovered.support)]) <= 1e-10)

    def test_invalid_arguments(self, small_pair):
        """Test target shape and sparsity range"""
        view = dictionary_view(small_pair)
        with pytest.raises(ShapeError):
            omp_recover(view, np.zeros((6, 8)), 1)
        with pytest.raises(ArgumentError):
            omp_recover(view, np.ones((8, 6)), 7)

    def test_planted_trials_small(self):
        """Test planted trials report consistent counts"""
        view = dictionary_view(make_pair(3, 6, 6, 3, 3, orthonormalize=True))
        result = planted_recovery_trials(view, 2, 10, base_seed=1)
        assert result.trials == 10
        assert result.successes == 10
        assert result.success_rate == 1.0
        assert result.max_coefficient_error <= 1e-10
        assert len(result.rows) == 10

    @pytest.mark.slow
    def test_planted_recovery_rate(self):
        """Test s=3 on the (512,256,32,8) Gaussian pair: ≥ 95 of 100 exact, error ≤ 1e-6"""
        view = dictionary_view(make_pair(0, 512, 256, 32, 8))
        result = planted_recovery_trials(view, 3, 100, base_seed=derive_seed(0, 7))
        assert result.successes >= 95
        assert result.max_coefficient_error <= 1e-6
