#!/usr/bin/env python3
"""
Pytest configuration for the bc-markov test suite
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

# Configure pytest-asyncio
pytest_plugins = ['pytest_asyncio']

from borel_cantelli.markov_indicators import IndicatorKernel  # noqa: E402


@pytest.fixture(autouse=True)
def setup_test_environment(monkeypatch):
    """Set up test environment variables"""
    monkeypatch.setenv('BC_LOG_LEVEL', 'WARNING')
    monkeypatch.delenv('BC_LOG_FILE', raising=False)
    monkeypatch.delenv('BC_WORKERS', raising=False)
    monkeypatch.delenv('BC_DEFAULT_SEED', raising=False)
    yield


@pytest.fixture
def fair_coin():
    """iid fair-coin events"""
    return IndicatorKernel.order_one(lambda n: 0.5, lambda n: 0.5, 0.5, label="fair_coin")


@pytest.fixture
def sticky_chain():
    """p = 0.2, q = 0.1, P(A_1) = 0.5"""
    return IndicatorKernel.order_one(lambda n: 0.2, lambda n: 0.1, 0.5, label="sticky")


def inverse_power_chain(exponent: float) -> IndicatorKernel:
    """p = 0, q_n = (n + 1)^exponent, P(A_1) = 0"""
    def q(ns):
        return (np.asarray(ns, dtype=float) + 1.0) ** exponent

    def p(ns):
        return np.zeros(np.shape(ns))

    return IndicatorKernel.order_one(p, q, 0.0, vectorized=True, label=f"q=(n+1)^{exponent:g}")


@pytest.fixture
def convergent_chain():
    return inverse_power_chain(-2.0)


@pytest.fixture
def divergent_chain():
    return inverse_power_chain(-1.0)


# Configure asyncio mode for pytest-asyncio
def pytest_configure(config):
    """Configure pytest with asyncio settings"""
    config.option.asyncio_mode = "auto"
