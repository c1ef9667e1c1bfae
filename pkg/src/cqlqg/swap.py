"""Change of controller variables that sets ``Theta2 = -Theta1``.

Both CCR matrices are brought to the canonical form
``Upsilon = I (x) BJ / 2``; swapping the conjugate coordinates in each pair
then flips the sign of the controller's canonical CCR matrix.
"""
from dataclasses import dataclass

import numpy as np

from .errors import OddDimension, SingularCcr, SingularInput, SingularTransform
from .linalg import skew_factorize, symplectic_unit
from .quantum import QuantumController


def canonical_ccr(n):
    return 0.5 * symplectic_unit(n // 2)


def swap_matrix(n):
    if n % 2:
        raise OddDimension(f"order {n} is odd")
    return np.kron(np.eye(n // 2), np.array([[0.0, 1.0], [1.0, 0.0]]))


def canonicalize_ccr(Theta):
    """Nonsingular ``sigma`` with ``sigma @ Theta @ sigma.T == Upsilon``."""
    try:
        fac = skew_factorize(Theta, require_nonsingular=True)
    except SingularInput as exc:
        raise SingularCcr(str(exc)) from None
    return fac.inverse() / np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class SwapPlan:
    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma3: np.ndarray
    sigma: np.ndarray
    Upsilon: np.ndarray

    def residuals(self, Theta1, Theta2):
        """Frobenius residuals of the three defining identities."""
        s1, s2, s = self.sigma1, self.sigma2, self.sigma
        return (
            float(np.linalg.norm(s1 @ Theta1 @ s1.T - self.Upsilon)),
            float(np.linalg.norm(s2 @ Theta2 @ s2.T - self.Upsilon)),
            float(np.linalg.norm(s @ Theta2 @ s.T + Theta1)),
        )


def build_swap_plan(Theta1, Theta2):
    Theta1 = np.asarray(Theta1, dtype=float)
    Theta2 = np.asarray(Theta2, dtype=float)
    if Theta1.shape != Theta2.shape:
        raise SingularTransform("CCR matrices differ in order")
    n = Theta1.shape[0]
    s1 = canonicalize_ccr(Theta1)
    s2 = canonicalize_ccr(Theta2)
    s3 = swap_matrix(n)
    sigma = np.linalg.solve(s1, s3 @ s2)
    return SwapPlan(s1, s2, s3, sigma, canonical_ccr(n))


def apply_to_controller(ctrl, sigma):
    """Controller in the variables ``sigma @ xi``; transfer function unchanged."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape[0] and np.linalg.cond(sigma) > 1e12:
        raise SingularTransform("transformation is singular")
    si = np.linalg.inv(sigma)
    return QuantumController(
        a=sigma @ ctrl.a @ si,
        b=sigma @ ctrl.b,
        c=ctrl.c @ si,
        d=ctrl.d,
        e=sigma @ ctrl.e,
        Theta2=sigma @ ctrl.Theta2 @ sigma.T,
    )


def difference_frame(n):
    """``S`` mapping (x, xi) to (x - xi, xi)."""
    I = np.eye(n)
    return np.block([[I, -I], [np.zeros((n, n)), I]])


def difference_ccr(Theta1, Theta2):
    """CCR matrix of the (x - xi, xi) coordinates."""
    n = Theta1.shape[0]
    S = difference_frame(n)
    Theta = np.block([[Theta1, np.zeros((n, n))], [np.zeros((n, n)), Theta2]])
    return S @ Theta @ S.T
