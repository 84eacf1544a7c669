"""Pure numpy/scipy tridiagonal solver, semantics-identical to the Cython kernel."""
import numpy as np
from scipy.linalg import solve_banded


def thomas_batch(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray,
                 rhs: np.ndarray) -> np.ndarray:
    """Solve the tridiagonal system for each row of `rhs`.

    Row i of the matrix is (lower[i], diag[i], upper[i]) acting on
    x[i-1], x[i], x[i+1]; lower[0] and upper[-1] are ignored.  `rhs` may be
    1-D (one system) or 2-D (batch, n); the result matches its shape.
    """
    rhs = np.asarray(rhs, dtype=float)
    squeeze = rhs.ndim == 1
    b = np.atleast_2d(rhs)
    n = b.shape[1]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    out = solve_banded((1, 1), ab, b.T).T
    return out[0] if squeeze else out
