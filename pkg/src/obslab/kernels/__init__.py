"""Tridiagonal solve kernel with compiled and pure-numpy implementations.

The theta-scheme diffusion step reduces to one tridiagonal solve per time
step (per sample, for Monte Carlo batches).  A Cython kernel is used when
the extension compiled at install time; otherwise a scipy-banded fallback
with identical semantics is selected.  `BACKEND` records which one is live.
"""

try:
    from ._core import thomas_batch  # noqa: F401
    BACKEND = "cython"
except ImportError:  # extension not built; numpy/scipy path
    from ._fallback import thomas_batch  # noqa: F401
    BACKEND = "numpy"

__all__ = ["thomas_batch", "BACKEND"]
