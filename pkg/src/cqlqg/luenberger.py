"""Coherent controllers with Luenberger dynamics ``a = A - e C + E c``.

With the controller CCR matrix fixed to ``-Theta1`` the output matrix is
``c = d J2 b^T Theta1^{-1}``, and realizability reduces to a quadratic
constraint on the stacked gains ``gamma = [b e]``:

    f(gamma) = (Gamma - gamma Delta) J (Gamma - gamma Delta)^T = 0
             = (gamma - gamma0) K (gamma - gamma0)^T + mho.
"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig, expm

from .errors import (
    DataQualityWarning,
    DimensionDeficit,
    DimensionMismatch,
    InfeasibleGains,
    NotFound,
    SingularSystem,
)
from .linalg import (
    antisym,
    kron_sum,
    solve_skew_quadratic,
    spectral_abscissa,
    sylvester_solve,
    sym,
    unvec,
    vec,
)
from .quantum import QuantumController, _inv_ccr
from .swap import difference_ccr, difference_frame

log = logging.getLogger(__name__)

FEAS_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class LuenbergerGains:
    b: np.ndarray
    e: np.ndarray

    @property
    def gamma(self):
        return np.hstack([self.b, self.e])

    @classmethod
    def from_gamma(cls, gamma, m2):
        gamma = np.asarray(gamma, dtype=float)
        return cls(gamma[:, :m2].copy(), gamma[:, m2:].copy())


@dataclass(frozen=True, eq=False)
class GainConstraintData:
    Gamma: np.ndarray
    Delta: np.ndarray
    J: np.ndarray
    K: np.ndarray
    gamma0: np.ndarray
    mho: np.ndarray
    m2: int
    p1: int
    d: np.ndarray

    @property
    def n(self):
        return self.Gamma.shape[0]

    @property
    def b0(self):
        return self.gamma0[:, : self.m2]

    @property
    def e0(self):
        return self.gamma0[:, self.m2:]

    @property
    def J2(self):
        return self.K[: self.m2, : self.m2]

    @property
    def tJ1(self):
        return self.K[self.m2:, self.m2:]

    def f(self, gamma):
        X = self.Gamma - gamma @ self.Delta
        return antisym(X @ self.J @ X.T)

    def f_completed(self, gamma):
        beta = gamma - self.gamma0
        return beta @ self.K @ beta.T + self.mho

    def tolerance(self):
        return FEAS_RTOL * max(1.0, np.linalg.norm(self.Gamma) ** 2)


def luenberger_a(plant, gains, c):
    A, C, E = plant.A, plant.C, plant.E
    e = np.asarray(gains.e, dtype=float)
    c = np.asarray(c, dtype=float)
    if e.shape != (plant.n, C.shape[0]) or c.shape != (E.shape[1], plant.n):
        raise DimensionMismatch(f"gain shapes {e.shape}, {c.shape} do not fit the plant")
    return A - e @ C + E @ c


def c_from_b(b, plant, d, alg):
    Ti = _inv_ccr(plant.Theta1, "Theta1")
    return np.asarray(d) @ alg.J2 @ np.asarray(b).T @ Ti


def luenberger_controller(plant, gains, d, alg):
    """Controller realizing the gains with ``Theta2 = -Theta1``."""
    c = c_from_b(gains.b, plant, d, alg)
    a = luenberger_a(plant, gains, c)
    return QuantumController(a, np.asarray(gains.b, float), c, np.asarray(d, float),
                             np.asarray(gains.e, float), -plant.Theta1)


def build_constraint_data(plant, d, alg, verify=True):
    """Assemble ``Gamma``, ``Delta``, ``K``, ``gamma0`` and ``mho``.

    With ``verify`` the completed-square identity is checked on a few random
    gains (fixed seed).
    """
    B, D, E = plant.B, plant.D, plant.E
    d = np.asarray(d, dtype=float)
    m1, m2, p1 = alg.m1, alg.m2, alg.p1
    J = alg.J
    Gamma = np.hstack([B, E @ d])
    Delta = np.block([[np.zeros((m2, m1)), np.eye(m2)], [D, np.zeros((p1, m2))]])
    K = Delta @ J @ Delta.T
    gamma0 = -Gamma @ J @ Delta.T @ K
    mho_raw = Gamma @ (J + J @ Delta.T @ K @ Delta @ J) @ Gamma.T
    defect = np.linalg.norm(sym(mho_raw))
    if defect > 1e-12 * max(1.0, np.linalg.norm(mho_raw)):
        warnings.warn(f"mho: symmetric defect {defect:.3e}", DataQualityWarning)
    data = GainConstraintData(Gamma, Delta, J, K, gamma0, antisym(mho_raw), m2, p1, d)
    if verify:
        rng = np.random.default_rng(0)
        scale = 1.0 + np.linalg.norm(gamma0)
        for _ in range(3):
            g = rng.normal(size=gamma0.shape) * scale
            gap = np.linalg.norm(data.f(g) - data.f_completed(g))
            if gap > 1e-9 * max(1.0, np.linalg.norm(data.f(g))):
                raise InfeasibleGains(f"completed-square identity fails by {gap:.3e}")
    return data


def constraint_residual(gains, data):
    return data.f(gains.gamma)


def is_feasible(gains, data):
    return bool(np.linalg.norm(constraint_residual(gains, data)) <= data.tolerance())


def solve_gain_constraint(data, mode="particular", b=None, e=None):
    """A point of the feasible gain set.

    ``particular``
        ``gamma0 + beta`` with ``beta K beta^T = -mho``; needs ``m2 + p1 >= n``.
    ``around_b``
        keep ``b`` (default ``b0``) and solve for ``e``; needs ``p1 >= n``.
    ``around_e``
        keep ``e`` (default ``e0``) and solve for ``b``; needs ``m2 >= n``.
    """
    n, m2, p1 = data.n, data.m2, data.p1
    if mode == "particular":
        if m2 + p1 < n:
            raise DimensionDeficit(f"m2 + p1 = {m2 + p1} < n = {n}")
        beta = solve_skew_quadratic(data.K, -data.mho)
        return LuenbergerGains.from_gamma(data.gamma0 + beta, m2)
    if mode == "around_b":
        if p1 < n:
            raise DimensionDeficit(f"p1 = {p1} < n = {n}")
        b = data.b0 if b is None else np.asarray(b, dtype=float)
        db = b - data.b0
        alpha = antisym(db @ data.J2 @ db.T + data.mho)
        eps = solve_skew_quadratic(data.tJ1, -alpha)
        return LuenbergerGains(b.copy(), data.e0 + eps)
    if mode == "around_e":
        if m2 < n:
            raise DimensionDeficit(f"m2 = {m2} < n = {n}")
        e = data.e0 if e is None else np.asarray(e, dtype=float)
        de = e - data.e0
        alpha = antisym(de @ data.tJ1 @ de.T + data.mho)
        beta = solve_skew_quadratic(data.J2, -alpha)
        return LuenbergerGains(data.b0 + beta, e.copy())
    raise ValueError(f"unknown mode {mode!r}")


def retract(gamma, data, tol=None, maxiter=40):
    """Newton projection of ``gamma`` onto the feasible set.

    Each step is the minimum-norm solution of the linearized constraint,
    ``delta = -f N^+ / 2`` with ``N = K (gamma - gamma0)^T``; it converges
    where ``gamma - gamma0`` has full row rank. Once below ``tol`` the
    iteration continues while the residual still halves, so the result is
    feasible to rounding level.
    """
    tol = data.tolerance() * 1e-3 if tol is None else tol
    beta = np.asarray(gamma, dtype=float) - data.gamma0
    done = None
    for _ in range(maxiter):
        F = antisym(beta @ data.K @ beta.T + data.mho)
        nf = np.linalg.norm(F)
        if not np.isfinite(nf):
            break
        if done is not None and nf > 0.5 * done[1]:
            # below tolerance and no longer contracting: rounding level
            return done[0]
        if nf <= tol:
            done = (data.gamma0 + beta, nf)
            if nf == 0.0:
                break
        beta = beta - 0.5 * F @ np.linalg.pinv(data.K @ beta.T)
    if done is not None:
        return done[0]
    raise InfeasibleGains("retraction onto the gain constraint did not converge")


def normal_multiplier(G, beta, K):
    """Antisymmetric ``lam`` minimizing ``||G - lam @ beta @ K||_F``.

    The matrices ``lam @ beta @ K`` span the normal space of the constraint
    at ``gamma0 + beta``, so ``G - lam @ beta @ K`` is the tangent part of
    ``G``. Normal equations: ``M lam + lam M = G N^T - N G^T`` with
    ``N = beta K`` and ``M = N N^T``.
    """
    N = beta @ K
    M = N @ N.T
    rhs = G @ N.T - N @ G.T
    try:
        return antisym(sylvester_solve(M, M, -rhs))
    except SingularSystem:
        # rank-deficient beta: minimum-norm least-squares multiplier
        n = M.shape[0]
        sol = np.linalg.lstsq(kron_sum(M, M), vec(rhs), rcond=None)[0]
        return antisym(unvec(sol, n, n))


def tangent_project(G, beta, K):
    lam = normal_multiplier(G, beta, K)
    return G - lam @ beta @ K, lam


def _abscissa_gradient(M):
    """Gradient of the rightmost eigenvalue's real part and the eigen data."""
    w, vl, vr = eig(M, left=True, right=True)
    i = int(np.argmax(w.real))
    v, u = vr[:, i], vl[:, i]
    s = u.conj() @ v
    return w[i].real, u, v, s


def _abscissa_descent(plant, gamma, d, alg, m2):
    """Gradient in ``gamma`` of the larger of the two block abscissas."""
    b, e = gamma[:, :m2], gamma[:, m2:]
    Ti = np.linalg.inv(plant.Theta1)
    c = d @ alg.J2 @ b.T @ Ti
    a1, u1, v1, s1 = _abscissa_gradient(plant.A - e @ plant.C)
    a2, u2, v2, s2 = _abscissa_gradient(plant.A + plant.E @ c)
    G = np.zeros_like(gamma)
    if a1 >= a2:
        G[:, m2:] = -np.real(np.outer(u1.conj(), plant.C @ v1) / s1)
    else:
        X = plant.E @ d @ alg.J2
        G[:, :m2] = np.real(np.outer(Ti @ v2, X.T @ u2.conj()) / s2)
    return G


def random_symplectic(K, rng, scale=1.0):
    """``expm(H K)`` for a random symmetric ``H``; preserves ``K``."""
    mu = K.shape[0]
    H = rng.normal(size=(mu, mu))
    H = scale * (H + H.T) / (2 * np.sqrt(mu))
    return expm(H @ K)


@dataclass(frozen=True, eq=False)
class LuenbergerClosedLoop:
    """Closed loop in the (x - xi, xi) coordinates."""

    sA: np.ndarray
    sB: np.ndarray
    sC: np.ndarray
    S: np.ndarray
    Xi: np.ndarray
    estimator_abscissa: float
    controller_abscissa: float
    margin: float

    @property
    def n(self):
        return self.sA.shape[0] // 2

    @property
    def stable(self):
        return bool(max(self.estimator_abscissa, self.controller_abscissa) < -self.margin)

    def block(self, name, j, k):
        n = self.n
        M = getattr(self, name)
        return M[j * n:(j + 1) * n, k * n:(k + 1) * n]

    def frame_pr_residual(self, alg):
        R = self.sA @ self.Xi + self.Xi @ self.sA.T + self.sB @ alg.J @ self.sB.T
        return float(np.linalg.norm(R))


def assemble_luenberger_loop(plant, gains, d, alg, check_feasible=True, margin=1e-9):
    """Block lower-triangular closed loop for Luenberger gains.

    Raises ``InfeasibleGains`` when ``check_feasible`` and the constraint
    residual exceeds tolerance. Instability is reported, not raised.
    """
    A, B, C, D, E, F, G = plant.A, plant.B, plant.C, plant.D, plant.E, plant.F, plant.G
    b = np.asarray(gains.b, dtype=float)
    e = np.asarray(gains.e, dtype=float)
    d = np.asarray(d, dtype=float)
    if check_feasible:
        data = build_constraint_data(plant, d, alg, verify=False)
        res = np.linalg.norm(constraint_residual(gains, data))
        if res > data.tolerance():
            raise InfeasibleGains(f"constraint residual {res:.3e} exceeds {data.tolerance():.3e}")
    c = c_from_b(b, plant, d, alg)
    n = plant.n
    A11 = A - e @ C
    A22 = A + E @ c
    sA = np.block([[A11, np.zeros((n, n))], [e @ C, A22]])
    sB = np.block([[B - e @ D, E @ d - b], [e @ D, b]])
    sC = np.hstack([F, F + G @ c])
    S = difference_frame(n)
    Xi = difference_ccr(plant.Theta1, -plant.Theta1)
    return LuenbergerClosedLoop(sA, sB, sC, S, Xi,
                                spectral_abscissa(A11), spectral_abscissa(A22), margin)


def stability_objective(plant, gains, d, alg):
    c = c_from_b(gains.b, plant, d, alg)
    return max(spectral_abscissa(plant.A - gains.e @ plant.C),
               spectral_abscissa(plant.A + plant.E @ c))


def search_stabilizing_gains(plant, d, alg, budget=2000, seed=0, margin=1e-3,
                             mode="particular", init=None):
    """Randomized search for feasible gains making both diagonal blocks Hurwitz.

    Starts from ``init`` (if given) or the constructive solution of ``mode``
    and hill-climbs the larger spectral abscissa of ``A - e C`` and
    ``A + E c``. Proposals: a random step followed by Newton retraction,
    right multiplication by a random element of ``Sp(K)``, re-anchoring in
    the ``around_b``/``around_e`` splits where their dimension conditions
    hold, and random restarts. Deterministic for a given seed.

    Raises ``NotFound`` when ``budget`` proposals are used up.
    """
    data = build_constraint_data(plant, d, alg)
    n, m2, p1 = data.n, data.m2, data.p1
    if m2 + p1 < n:
        raise DimensionDeficit(f"m2 + p1 = {m2 + p1} < n = {n}")
    rng = np.random.default_rng(seed)

    def score(gamma):
        return stability_objective(plant, LuenbergerGains.from_gamma(gamma, m2), d, alg)

    gamma = (init.gamma if init is not None
             else solve_gain_constraint(data, mode).gamma)
    best = score(gamma)
    if best < -margin:
        return LuenbergerGains.from_gamma(gamma, m2)

    moves = ["descent", "descent", "descent", "local", "symplectic", "restart"]
    if p1 >= n:
        moves.append("anchor_b")
    if m2 >= n:
        moves.append("anchor_e")
    step = 0.3
    scale = 1.0 + np.linalg.norm(data.Gamma)
    for it in range(budget):
        move = moves[rng.integers(len(moves))]
        beta = gamma - data.gamma0
        try:
            if move == "descent":
                G = _abscissa_descent(plant, gamma, d, alg, m2)
                T, _ = tangent_project(G, beta, data.K)
                nt = np.linalg.norm(T)
                if nt == 0.0 or not np.isfinite(nt):
                    continue
                cand = retract(gamma - step * scale * T / nt, data)
            elif move == "local":
                cand = retract(gamma + step * scale * rng.normal(size=gamma.shape)
                               / np.sqrt(gamma.size), data)
            elif move == "symplectic":
                cand = data.gamma0 + beta @ random_symplectic(data.K, rng, step)
            elif move == "restart":
                cand = retract(data.gamma0 + scale * rng.normal(size=gamma.shape)
                               / np.sqrt(gamma.size), data)
            elif move == "anchor_b":
                b = gamma[:, :m2] + step * scale * rng.normal(size=(n, m2)) / np.sqrt(n * m2)
                g = solve_gain_constraint(data, "around_b", b=b)
                eps = (g.e - data.e0) @ random_symplectic(data.tJ1, rng, step)
                cand = np.hstack([g.b, data.e0 + eps])
            else:
                e = gamma[:, m2:] + step * scale * rng.normal(size=(n, p1)) / np.sqrt(n * p1)
                g = solve_gain_constraint(data, "around_e", e=e)
                bet = (g.b - data.b0) @ random_symplectic(data.J2, rng, step)
                cand = np.hstack([data.b0 + bet, g.e])
        except (InfeasibleGains, np.linalg.LinAlgError):
            step *= 0.8
            continue
        s = score(cand)
        if s < best:
            gamma, best = cand, s
            step = min(step * 1.5, 3.0)
        else:
            step = max(step * 0.9, 1e-3)
        if best < -margin:
            log.debug("stabilizing gains found after %d proposals", it + 1)
            return LuenbergerGains.from_gamma(gamma, m2)
    raise NotFound(f"no stabilizing feasible gains within {budget} proposals "
                   f"(best abscissa {best:.4g})")


def is_stabilizing(plant, gains, d, alg, margin=1e-9):
    return stability_objective(plant, gains, d, alg) < -margin


__all__ = [
    "LuenbergerGains", "GainConstraintData", "LuenbergerClosedLoop",
    "luenberger_a", "c_from_b", "luenberger_controller", "build_constraint_data",
    "constraint_residual", "is_feasible", "solve_gain_constraint", "retract",
    "normal_multiplier", "tangent_project", "random_symplectic",
    "assemble_luenberger_loop", "stability_objective", "search_stabilizing_gains",
    "is_stabilizing",
]
