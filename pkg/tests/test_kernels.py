import os
import subprocess
import sys

import numpy as np
import pytest

from cqlqg import _kernels
from cqlqg.linalg import lyapunov_solve


def _backend(env_value):
    env = dict(os.environ)
    env.pop("CQLQG_PURE_PYTHON", None)
    if env_value is not None:
        env["CQLQG_PURE_PYTHON"] = env_value
    out = subprocess.run([sys.executable, "-c", "from cqlqg import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


def test_env_var_forces_fallback():
    assert _backend("1") == "python"


@pytest.mark.skipif(_kernels.BACKEND != "cython", reason="compiled kernel not built")
def test_compiled_kernel_selected_by_default():
    assert _backend(None) == "cython"
    assert _backend("0") == "cython"


def test_fallback_solver_end_to_end(monkeypatch):
    from cqlqg._kernels import _fallback
    rng = np.random.default_rng(3)
    A = rng.normal(size=(6, 6)) - 4 * np.eye(6)
    Q = np.eye(6)
    P = lyapunov_solve(A, Q)
    monkeypatch.setattr(_kernels, "trsyl", _fallback.trsyl)
    Pf = lyapunov_solve(A, Q)
    assert np.allclose(P, Pf, rtol=1e-12, atol=1e-14)
