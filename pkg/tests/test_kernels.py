"""Tests that the numba fast path and the numpy fallback agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from interpolant_lab import _kernels


class TestPathEquivalence:
    @pytest.mark.skipif(not _kernels.USE_NUMBA, reason="numba path not active")
    def test_tanh_gate_outer_matches_numpy(self):
        rng = np.random.default_rng(0)
        dots = rng.standard_normal(500)
        direction = rng.standard_normal(8)
        fast = _kernels.tanh_gate_outer(dots, 0.3, 0.7, 1.4, direction)
        slow = _kernels._tanh_gate_outer_numpy(dots, 0.3, 0.7, 1.4, direction)
        np.testing.assert_allclose(fast, slow, rtol=1e-15, atol=1e-300)

    @pytest.mark.skipif(not _kernels.USE_NUMBA, reason="numba path not active")
    def test_em_update_matches_numpy(self):
        rng = np.random.default_rng(1)
        shape = (300, 4)
        args = (
            rng.standard_normal(shape),
            rng.standard_normal(shape),
            rng.standard_normal(shape),
            0.8,
            0.05,
            0.01,
            rng.standard_normal(shape),
        )
        np.testing.assert_allclose(
            _kernels.em_update(*args),
            _kernels._em_update_numpy(*args),
            rtol=1e-15,
            atol=1e-300,
        )


class TestEnvironmentFlag:
    def test_disable_flag_selects_numpy_path(self):
        env = dict(os.environ, INTERPOLANT_LAB_DISABLE_NUMBA="1")
        code = "from interpolant_lab import _kernels; print(_kernels.USE_NUMBA)"
        result = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True,
            text=True,
            env=env,
            check=True,
        )
        assert result.stdout.strip() == "False"
