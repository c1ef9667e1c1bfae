"""Dense real matrix kernels.

Lyapunov and Sylvester solvers, the Kronecker sum with its column-stacking
``vec`` convention, Hurwitz tests, and the canonical factorization of real
antisymmetric matrices together with the quadratic equation
``beta @ K @ beta.T = alpha`` it solves.

Conventions
-----------
``vec`` stacks columns (Fortran order), so that
``vec(A @ X + X @ B.T) == kron_sum(A, B) @ vec(X)``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from . import _kernels
from .errors import (
    DimensionMismatch,
    NotAntisymmetric,
    NotHurwitz,
    OddDimension,
    SingularInput,
    SingularSystem,
)

#: The 2x2 block ``[[0, 1], [-1, 0]]``.
BJ = np.array([[0.0, 1.0], [-1.0, 0.0]])

DEFAULT_RTOL = 1e-9
DEFAULT_MARGIN = 1e-9
# eigenvalue sums below this (relative) are treated as an exact overlap
_SEP_TOL = 100 * np.finfo(float).eps


def symplectic_unit(half_order):
    """Return ``I_{half_order} (x) BJ``."""
    return np.kron(np.eye(half_order), BJ)


def sym(X):
    return 0.5 * (X + X.T)


def antisym(X):
    return 0.5 * (X - X.T)


def vec(X):
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, rows, cols):
    return np.asarray(v).reshape((rows, cols), order="F")


def _square(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}", name)
    return A


def kron_sum(A, B):
    """Kronecker sum ``I_k (x) A + B (x) I_n`` for ``A`` (n x n), ``B`` (k x k).

    With column stacking this is the matrix of ``X -> A X + X B^T``.
    """
    A = _square(A, "A")
    B = _square(B, "B")
    n, k = A.shape[0], B.shape[0]
    return np.kron(np.eye(k), A) + np.kron(B, np.eye(n))


def spectral_abscissa(A):
    A = _square(A, "A")
    if A.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(A).real))


def is_hurwitz(A, margin=DEFAULT_MARGIN):
    """Return ``(is_stable, abscissa)``; stable iff every Re(eig) < -margin."""
    a = spectral_abscissa(A)
    return bool(a < -margin), a


def _schur_sylvester(A1, A2, Q):
    T1, U1 = schur(A1.astype(complex), output="complex")
    T2, U2 = schur(A2.T.astype(complex), output="complex")
    C = -(U1.conj().T @ Q @ U2)
    Y, minpiv = _kernels.trsyl(
        np.ascontiguousarray(T1), np.ascontiguousarray(T2), np.ascontiguousarray(C)
    )
    X = (U1 @ Y @ U2.conj().T).real
    return X, minpiv


def _kron_sylvester(A1, A2, Q):
    n, k = Q.shape
    ev1 = np.linalg.eigvals(A1)
    ev2 = np.linalg.eigvals(A2)
    minpiv = np.min(np.abs(ev1[:, None] + ev2[None, :])) if n * k else np.inf
    if minpiv == 0.0:
        return np.zeros_like(Q), minpiv
    X = unvec(np.linalg.solve(kron_sum(A1, A2), -vec(Q)), n, k)
    return X, minpiv


_METHODS = {"schur": _schur_sylvester, "kron": _kron_sylvester}


def sylvester_solve(A1, A2, Q, method="schur", rtol=DEFAULT_RTOL):
    """Solve ``A1 @ X + X @ A2.T + Q = 0``.

    ``method="kron"`` solves the vectorized system ``kron_sum(A1, A2)`` with a
    dense LU factorization; ``method="schur"`` (default) uses the
    Bartels-Stewart reduction with the compiled triangular sweep.

    Raises
    ------
    SingularSystem
        If the spectra of ``A1`` and ``-A2`` overlap, or the residual check fails.
    """
    A1 = _square(A1, "A1")
    A2 = _square(A2, "A2")
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (A1.shape[0], A2.shape[0]):
        raise DimensionMismatch(f"Q has shape {Q.shape}, expected {(A1.shape[0], A2.shape[0])}", "Q")
    if Q.size == 0:
        return np.zeros(Q.shape)
    try:
        solver = _METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}") from None

    scale = max(1.0, np.linalg.norm(A1, 2) + np.linalg.norm(A2, 2))
    X, minpiv = solver(A1, A2, Q)
    if minpiv <= _SEP_TOL * scale:
        raise SingularSystem(
            f"spectra of A1 and -A2 overlap (min |l1 + l2| = {minpiv:.3e})"
        )
    res = np.linalg.norm(A1 @ X + X @ A2.T + Q)
    bound = rtol * ((np.linalg.norm(A1) + np.linalg.norm(A2)) * np.linalg.norm(X) + np.linalg.norm(Q))
    if not np.isfinite(res) or res > bound:
        raise SingularSystem(f"Sylvester residual {res:.3e} exceeds {bound:.3e}")
    return X


def lyapunov_solve(A, Q, method="schur", rtol=DEFAULT_RTOL, margin=DEFAULT_MARGIN):
    """Solve ``A @ P + P @ A.T + Q = 0`` for Hurwitz ``A``; result symmetrized."""
    A = _square(A, "A")
    Q = np.asarray(Q, dtype=float)
    if A.size == 0:
        return np.zeros((0, 0))
    stable, absc = is_hurwitz(A, margin)
    if not stable:
        raise NotHurwitz(f"matrix is not Hurwitz (spectral abscissa {absc:.6g})")
    return sym(sylvester_solve(A, A, Q, method=method, rtol=rtol))


# -- antisymmetric factorization ---------------------------------------------


@dataclass(frozen=True, eq=False)
class SkewFactorization:
    """``W = psi @ (I (x) BJ) @ psi.T``.

    ``psi = basis @ diag(sqrt(theta_1), sqrt(theta_1), ..., 0, 0)`` where
    ``basis`` is orthogonal and ``thetas`` are the block magnitudes in
    descending order. Columns of ``psi`` belonging to the kernel of ``W`` are
    zero, so for singular ``W`` the factor is the padded, rank-deficient one.
    """

    psi: np.ndarray
    half_order: int
    rank: int
    basis: np.ndarray
    thetas: np.ndarray

    def reconstruct(self):
        return self.psi @ symplectic_unit(self.half_order) @ self.psi.T

    def inverse(self):
        """``psi^{-1}``; needs a nonsingular factorization."""
        if 2 * self.rank != self.psi.shape[0]:
            raise SingularInput("factor is singular")
        d = np.repeat(1.0 / np.sqrt(self.thetas), 2)
        return d[:, None] * self.basis.T


def _check_antisymmetric(W, name="W", tol=1e-10):
    W = _square(W, name)
    if W.shape[0] % 2:
        raise OddDimension(f"order {W.shape[0]} is odd", name)
    scale = max(1.0, np.linalg.norm(W))
    if np.linalg.norm(W + W.T) > tol * scale:
        raise NotAntisymmetric("matrix is not antisymmetric", name)
    return antisym(W)


def _pick_pair(W, Z, theta):
    # lowest-index coordinate with (near) maximal projection onto span(Z)
    rownorm = np.linalg.norm(Z, axis=1)
    j = int(np.flatnonzero(rownorm >= rownorm.max() - 1e-8)[0])
    y = Z @ Z[j]
    y /= np.linalg.norm(y)
    x = -(W @ y) / theta
    x = Z @ (Z.T @ x)
    x -= y * (y @ x)
    x /= np.linalg.norm(x)
    return y, x


def skew_factorize(W, require_nonsingular=True, rank_tol=None):
    """Canonical factorization of an antisymmetric matrix.

    Uses the Hermitian eigendecomposition of ``1j * W``: each eigenvalue
    ``theta > 0`` gives an invariant plane on which ``W`` acts as
    ``theta * BJ``. Within each (possibly repeated) eigenvalue cluster the
    basis pairs are chosen greedily from the coordinate axes, which makes the
    factorization deterministic and returns the identity for inputs that are
    already in canonical form.
    """
    W = _check_antisymmetric(W)
    mu = W.shape[0]
    if mu == 0:
        z = np.zeros((0, 0))
        return SkewFactorization(z, 0, 0, z, np.zeros(0))

    evals, evecs = np.linalg.eigh(1j * W)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    top = max(evals[0], 0.0)
    if rank_tol is None:
        rank_tol = mu * np.finfo(float).eps * max(top, 1e-300)
    npos = int(np.sum(evals[: mu // 2] > rank_tol))
    if require_nonsingular and 2 * npos < mu:
        raise SingularInput(f"antisymmetric matrix has rank {2 * npos} < {mu}")

    ys, xs, thetas = [], [], []
    start = 0
    while start < npos:
        stop = start + 1
        while stop < npos and evals[start] - evals[stop] <= 1e-12 * top:
            stop += 1
        V = evecs[:, start:stop]
        Z, _ = np.linalg.qr(np.hstack([V.real, V.imag]))
        theta_bar = float(np.mean(evals[start:stop]))
        for _ in range(stop - start):
            y, x = _pick_pair(W, Z, theta_bar)
            ys.append(y)
            xs.append(x)
            thetas.append(float(y @ W @ x))
            Zr = Z - np.outer(y, y @ Z) - np.outer(x, x @ Z)
            if Zr.shape[1] > 2:
                u, s, _ = np.linalg.svd(Zr, full_matrices=False)
                Z = u[:, : Zr.shape[1] - 2]
        start = stop

    cols = []
    for y, x in zip(ys, xs):
        cols += [y, x]
    U = np.column_stack(cols) if cols else np.zeros((mu, 0))
    if 2 * npos < mu:
        # orthonormal completion spanning the kernel
        q, _ = np.linalg.qr(np.hstack([U, np.eye(mu)]))
        kernel = q[:, 2 * npos:mu]
        kernel = kernel - U @ (U.T @ kernel)
        kernel, _ = np.linalg.qr(kernel)
        U = np.hstack([U, kernel])
    thetas = np.asarray(thetas)
    scale = np.zeros(mu)
    scale[: 2 * npos] = np.repeat(np.sqrt(thetas), 2)
    psi = U * scale[None, :]
    return SkewFactorization(psi, mu // 2, npos, U, thetas)


def solve_skew_quadratic(K, alpha):
    """Return ``beta`` (nu x mu) with ``beta @ K @ beta.T == alpha``.

    ``K`` must be nonsingular antisymmetric of order ``mu`` and ``alpha``
    antisymmetric of even order ``nu <= mu``. With ``K = psi (I (x) BJ) psi^T``
    and ``alpha = phi (I (x) BJ) phi^T`` the solution is ``[phi 0] psi^{-1}``.
    """
    K = np.asarray(K, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    mu = K.shape[0]
    nu = alpha.shape[0]
    if nu % 2:
        raise DimensionMismatch(f"alpha has odd order {nu}", "alpha")
    if nu > mu:
        raise DimensionMismatch(f"alpha order {nu} exceeds K order {mu}", "alpha")
    fk = skew_factorize(K, require_nonsingular=True)
    fa = skew_factorize(alpha, require_nonsingular=False)
    padded = np.zeros((nu, mu))
    padded[:, :nu] = fa.psi
    return padded @ fk.inverse()
