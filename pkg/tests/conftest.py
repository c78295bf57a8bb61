"""
Pytest configuration and shared fixtures
Provides small projection pairs, a materialized-dictionary oracle and CLI helpers
"""
import json

import numpy as np
import pytest
from click.testing import CliRunner

from src.cosa.adapter import AdaptedLinear, CosaAdapter
from src.cosa.projection import dictionary_view, make_pair
from src.cosa.randgen import derive_seed, gaussian_matrix


def materialize_psi(view):
    """Dense Ψ = normalization·(Rᵀ⊗L) for tiny dims (column-major vec)"""
    pair = view.pair
    return view.normalization * np.kron(pair.R.T, pair.L)


def read_report(path):
    """Load a JSON report written by the CLI"""
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


@pytest.fixture
def tiny_pair():
    """(m, n, a, b) = (3, 4, 2, 2) Gaussian pair"""
    return make_pair(7, 3, 4, 2, 2)


@pytest.fixture
def tiny_view(tiny_pair):
    return dictionary_view(tiny_pair)


@pytest.fixture
def small_pair():
    """(8, 6, 3, 2) pair used by layer fixtures"""
    return make_pair(11, 8, 6, 3, 2)


@pytest.fixture
def small_layer():
    """CoSA layer (8, 6, 3, 2) with a non-zero core"""
    adapter = CosaAdapter(8, 6, 3, 2, seed=derive_seed(5, 0), alpha_scale=0.7)
    adapter.Y = gaussian_matrix(derive_seed(5, 2), 3, 2)
    return AdaptedLinear(gaussian_matrix(derive_seed(5, 1), 8, 6), adapter)


@pytest.fixture
def batch_inputs():
    """Input (6 x 3) and target (8 x 3) for small_layer"""
    return gaussian_matrix(derive_seed(5, 3), 6, 3), gaussian_matrix(derive_seed(5, 4), 8, 3)


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def sample_adapter():
    """Stored adapter (16, 12, 4, 3) with a random core"""
    return CosaAdapter(16, 12, 4, 3, seed=0x1234, alpha_scale=0.5,
                       Y=gaussian_matrix(99, 4, 3))
