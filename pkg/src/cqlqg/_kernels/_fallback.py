"""NumPy fallback for the triangular Sylvester sweep in ``_csylv.pyx``."""
import numpy as np
from scipy.linalg import solve_triangular


def trsyl(T1, T2, C):
    T1 = np.asarray(T1, dtype=complex)
    T2 = np.asarray(T2, dtype=complex)
    Y = np.array(C, dtype=complex, copy=True)
    n, k = Y.shape
    if n * k == 0:
        return Y, np.inf
    d1 = np.diag(T1)
    minpiv = np.inf
    eye = np.eye(n)
    for j in range(k):
        if j:
            Y[:, j] -= Y[:, :j] @ T2[:j, j]
        piv = np.abs(d1 + T2[j, j]).min()
        minpiv = min(minpiv, piv)
        if piv == 0.0:
            Y[:, j] = 0.0
            continue
        Y[:, j] = solve_triangular(T1 + T2[j, j] * eye, Y[:, j], check_finite=False)
    return Y, minpiv
