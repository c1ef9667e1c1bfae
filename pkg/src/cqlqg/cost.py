"""Closed-loop assembly, mean square cost and Gramians.

The general loop acts on ``(x, xi)``; the Luenberger loop acts on
``(x - xi, xi)`` and is block lower-triangular, which lets its Gramians be
computed from half-size Lyapunov and Sylvester equations.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InconsistentGramians, NotPsd
from .linalg import lyapunov_solve, sylvester_solve, sym

COST_RTOL = 1e-8
PSD_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    cA: np.ndarray
    cB: np.ndarray
    cC: np.ndarray
    Theta: np.ndarray
    J: np.ndarray

    @property
    def order(self):
        return self.cA.shape[0]

    def pr_residual(self):
        """Frobenius norm of ``cA Theta + Theta cA^T + cB J cB^T``."""
        R = self.cA @ self.Theta + self.Theta @ self.cA.T + self.cB @ self.J @ self.cB.T
        return float(np.linalg.norm(R))


def assemble_closed_loop(plant, controller, alg):
    plant.check_shapes(alg)
    controller.check_shapes(alg, plant.n)
    A, B, C, D, E, F, G = plant.A, plant.B, plant.C, plant.D, plant.E, plant.F, plant.G
    a, b, c, d, e = controller.a, controller.b, controller.c, controller.d, controller.e
    n = plant.n
    cA = np.block([[A, E @ c], [e @ C, a]])
    cB = np.block([[B, E @ d], [e @ D, b]])
    cC = np.hstack([F, G @ c])
    Theta = np.zeros((2 * n, 2 * n))
    Theta[:n, :n] = plant.Theta1
    Theta[n:, n:] = controller.Theta2
    return ClosedLoopSystem(cA, cB, cC, Theta, alg.J)


def controllability_gramian(loop):
    return lyapunov_solve(loop.cA, loop.cB @ loop.cB.T)


def lqg_cost(loop):
    """``V = tr(cC cP cC^T) / 2``; raises ``NotHurwitz`` for an unstable loop."""
    P = controllability_gramian(loop)
    return max(0.0, 0.5 * float(np.trace(loop.cC @ P @ loop.cC.T)))


def invariant_quantum_covariance(loop, check=True):
    """``S = cP + i Theta`` of the invariant Gaussian state.

    With ``check`` the Hermitian matrix is tested for positive
    semidefiniteness; failure (``NotPsd``) indicates that the loop is not
    realizable, since then ``Theta`` does not solve the imaginary part of the
    covariance equation.
    """
    P = controllability_gramian(loop)
    S = P + 1j * loop.Theta
    if check and S.size:
        lo = float(np.linalg.eigvalsh(S)[0])
        if lo < -PSD_RTOL * max(1.0, np.linalg.norm(S, 2)):
            raise NotPsd(f"quantum covariance has eigenvalue {lo:.3e}")
    return S


@dataclass(frozen=True)
class CostEvaluations:
    """The cost evaluated from the controllability Gramian, the observability
    Gramian and the Hankelian."""

    from_P: float
    from_Q: float
    from_H: float

    @property
    def value(self):
        return self.from_P

    @property
    def values(self):
        return (self.from_P, self.from_Q, self.from_H)

    @property
    def max_rel_disagreement(self):
        v = self.values
        top = max(abs(x) for x in v)
        if top == 0.0:
            return 0.0
        return max(abs(x - y) for x in v for y in v) / top


def _three_way(A, B, C, P, Q, H, rtol):
    ev = CostEvaluations(
        0.5 * float(np.sum((C.T @ C) * P)),
        0.5 * float(np.sum((B @ B.T) * Q)),
        -float(np.sum(A * H)),
    )
    if not np.all(np.isfinite(ev.values)) or ev.max_rel_disagreement > rtol:
        raise InconsistentGramians(
            f"cost evaluations disagree: {ev.values} (relative {ev.max_rel_disagreement:.3e})")
    return ev


def closed_loop_cost_evaluations(loop, rtol=COST_RTOL):
    """Three cost evaluations for a general closed loop (full-order Gramians)."""
    P = controllability_gramian(loop)
    Q = lyapunov_solve(loop.cA.T, loop.cC.T @ loop.cC)
    return _three_way(loop.cA, loop.cB, loop.cC, P, Q, Q @ P, rtol)


@dataclass(frozen=True, eq=False)
class GramianBlocks:
    P11: np.ndarray
    P12: np.ndarray
    P22: np.ndarray
    Q11: np.ndarray
    Q12: np.ndarray
    Q22: np.ndarray
    H: np.ndarray
    q: np.ndarray

    @property
    def n(self):
        return self.P11.shape[0]

    @property
    def P21(self):
        return self.P12.T

    @property
    def Q21(self):
        return self.Q12.T

    @property
    def sP(self):
        return np.block([[self.P11, self.P12], [self.P21, self.P22]])

    @property
    def sQ(self):
        return np.block([[self.Q11, self.Q12], [self.Q21, self.Q22]])

    def Hblock(self, j, k):
        """Block ``(j, k)`` (1-based) of the Hankelian, a view into ``H``."""
        n = self.n
        return self.H[(j - 1) * n:j * n, (k - 1) * n:k * n]

    def ale_residuals(self, loop):
        """Relative residuals of both full Lyapunov equations."""
        P, Q = self.sP, self.sQ
        A, B, C = loop.sA, loop.sB, loop.sC
        rp = np.linalg.norm(A @ P + P @ A.T + B @ B.T)
        rq = np.linalg.norm(A.T @ Q + Q @ A + C.T @ C)
        sp = max(1.0, 2 * np.linalg.norm(A) * np.linalg.norm(P) + np.linalg.norm(B) ** 2)
        sq = max(1.0, 2 * np.linalg.norm(A) * np.linalg.norm(Q) + np.linalg.norm(C) ** 2)
        return float(rp / sp), float(rq / sq)

    def min_eigenvalues(self):
        """Smallest eigenvalues of ``sP``, ``sQ`` and ``q``, each divided by
        the trace of the matrix (at least 1)."""
        out = []
        for M in (self.sP, self.sQ, self.q):
            lo = float(np.linalg.eigvalsh(sym(M))[0])
            out.append(lo / max(1.0, abs(float(np.trace(M)))))
        return tuple(out)


def gramian_blocks(loop):
    """Gramians of a Luenberger closed loop by the block cascade.

    ``sP``: ``P11``, then ``P12`` (Sylvester), then ``P22``.
    ``sQ``: ``Q22``, then ``Q21`` (Sylvester), then ``Q11``.
    Raises ``NotHurwitz`` when either diagonal block is unstable.
    """
    n = loop.n
    A11, A21, A22 = loop.block("sA", 0, 0), loop.block("sA", 1, 0), loop.block("sA", 1, 1)
    B1, B2 = loop.sB[:n], loop.sB[n:]
    C1, C2 = loop.sC[:, :n], loop.sC[:, n:]

    P11 = lyapunov_solve(A11, B1 @ B1.T)
    P12 = sylvester_solve(A11, A22, P11 @ A21.T + B1 @ B2.T)
    P22 = lyapunov_solve(A22, A21 @ P12 + P12.T @ A21.T + B2 @ B2.T)

    Q22 = lyapunov_solve(A22.T, C2.T @ C2)
    Q21 = sylvester_solve(A22.T, A11.T, Q22 @ A21 + C2.T @ C1)
    Q12 = Q21.T
    Q11 = lyapunov_solve(A11.T, A21.T @ Q21 + Q12 @ A21 + C1.T @ C1)

    sP = np.block([[P11, P12], [P12.T, P22]])
    sQ = np.block([[Q11, Q12], [Q21, Q22]])
    q = sym(Q11 + Q22 - Q12 - Q21)
    return GramianBlocks(P11, P12, P22, Q11, Q12, Q22, sQ @ sP, q)


def luenberger_cost(loop, blocks, rtol=COST_RTOL):
    """Cost of a Luenberger loop from ``sP``, ``sQ`` and the Hankelian.

    Raises ``InconsistentGramians`` if the three values disagree by more
    than ``rtol`` relative.
    """
    return _three_way(loop.sA, loop.sB, loop.sC, blocks.sP, blocks.sQ, blocks.H, rtol)


__all__ = [
    "ClosedLoopSystem", "assemble_closed_loop", "controllability_gramian", "lqg_cost",
    "invariant_quantum_covariance", "CostEvaluations", "closed_loop_cost_evaluations",
    "GramianBlocks", "gramian_blocks", "luenberger_cost",
]
