"""Ito/CCR algebra, plant and controller data, physical realizability.

A plant is the linear QSDE pair

    dx = A x dt + B dw + E deta,     dy = C x dt + D dw

with CCR matrix ``Theta1`` and a controller is

    dxi = a xi dt + b domega + e dy, deta = c xi dt + d domega

with CCR matrix ``Theta2``. Only coefficient matrices are represented.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadFeedthrough,
    DataQualityWarning,
    DimensionMismatch,
    OddChannelCount,
    OutputExceedsField,
    ResonantSpectrum,
    SingularCcr,
    SingularSystem,
    SingularThetaWarning,
)
from .linalg import BJ, antisym, sylvester_solve, sym, symplectic_unit

DEFAULT_PR_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class CcrAlgebra:
    """Commutation and Ito matrices of the plant and controller fields."""

    m1: int
    m2: int
    p1: int
    p2: int
    J1: np.ndarray = field(repr=False)
    J2: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)

    @property
    def m(self):
        return self.m1 + self.m2

    @property
    def bJ(self):
        return BJ.copy()

    @property
    def Omega1(self):
        return np.eye(self.m1) + 1j * self.J1

    @property
    def Omega2(self):
        return np.eye(self.m2) + 1j * self.J2

    @property
    def Omega(self):
        return np.eye(self.m) + 1j * self.J

    @property
    def tJ1(self):
        """CCR matrix of the plant output field."""
        return symplectic_unit(self.p1 // 2)

    @property
    def tJ2(self):
        """CCR matrix of the controller output field."""
        return symplectic_unit(self.p2 // 2)


def build_ccr_algebra(m1, m2, p1, p2):
    for name, v in (("m1", m1), ("m2", m2), ("p1", p1), ("p2", p2)):
        if v <= 0 or v % 2:
            raise OddChannelCount(f"channel count must be even and positive, got {v}", name)
    if p1 > m1:
        raise OutputExceedsField(f"p1={p1} exceeds m1={m1}", "p1")
    if p2 > m2:
        raise OutputExceedsField(f"p2={p2} exceeds m2={m2}", "p2")
    J1 = symplectic_unit(m1 // 2)
    J2 = symplectic_unit(m2 // 2)
    J = np.zeros((m1 + m2, m1 + m2))
    J[:m1, :m1] = J1
    J[m1:, m1:] = J2
    return CcrAlgebra(m1, m2, p1, p2, J1, J2, J)


def feedthrough_matrix(p, m, pairs=None):
    """Rows of the order-``m`` identity taken in conjugate pairs.

    ``pairs`` lists the selected channel pairs (0-based: pair ``k`` is rows
    ``2k, 2k+1``); default is the leading ``p/2`` pairs.
    """
    if p % 2 or m % 2:
        raise OddChannelCount("feedthrough dimensions must be even")
    if pairs is None:
        pairs = range(p // 2)
    pairs = [int(k) for k in pairs]
    if len(pairs) != p // 2 or len(set(pairs)) != len(pairs):
        raise BadFeedthrough(f"need {p // 2} distinct channel pairs, got {pairs}")
    if any(k < 0 or 2 * k + 1 >= m for k in pairs):
        raise BadFeedthrough(f"channel pair out of range for {m} channels: {pairs}")
    rows = [r for k in pairs for r in (2 * k, 2 * k + 1)]
    return np.eye(m)[rows]


def check_feedthrough(D, J, name="D", tol=1e-12):
    D = np.asarray(D, dtype=float)
    p = D.shape[0]
    if np.linalg.norm(D @ D.T - np.eye(p)) > tol:
        raise BadFeedthrough("D D^T must equal the identity", name)
    if np.linalg.norm(D @ J @ D.T - symplectic_unit(p // 2)) > tol:
        raise BadFeedthrough("rows must come in conjugate channel pairs", name)
    return D


def project_antisymmetric(X, name="matrix", report_tol=1e-12):
    X = np.asarray(X, dtype=float)
    defect = np.linalg.norm(sym(X))
    if defect > report_tol * max(1.0, np.linalg.norm(X)):
        warnings.warn(f"{name}: discarded symmetric part of norm {defect:.3e}", DataQualityWarning)
    return antisym(X)


def project_symmetric(X, name="matrix", report_tol=1e-12):
    X = np.asarray(X, dtype=float)
    defect = np.linalg.norm(antisym(X))
    if defect > report_tol * max(1.0, np.linalg.norm(X)):
        warnings.warn(f"{name}: discarded antisymmetric part of norm {defect:.3e}", DataQualityWarning)
    return sym(X)


def _inv_ccr(Theta, name):
    Theta = np.asarray(Theta, dtype=float)
    if Theta.shape[0] == 0:
        return Theta
    if np.linalg.cond(Theta) > 1e12:
        raise SingularCcr("CCR matrix is singular", name)
    return np.linalg.inv(Theta)


@dataclass(frozen=True, eq=False)
class QuantumPlant:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    Theta1: np.ndarray
    F: np.ndarray
    G: np.ndarray

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def r(self):
        return self.F.shape[0]

    def check_shapes(self, alg):
        n = self.n
        expected = {
            "A": (n, n), "B": (n, alg.m1), "C": (alg.p1, n), "D": (alg.p1, alg.m1),
            "E": (n, alg.p2), "Theta1": (n, n), "F": (self.r, n), "G": (self.r, alg.p2),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(f"shape {getattr(self, name).shape}, expected {shape}", f"plant.{name}")


@dataclass(frozen=True, eq=False)
class QuantumController:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray
    Theta2: np.ndarray

    @property
    def n(self):
        return self.a.shape[0]

    def check_shapes(self, alg, n=None):
        n = self.n if n is None else n
        expected = {
            "a": (n, n), "b": (n, alg.m2), "c": (alg.p2, n), "d": (alg.p2, alg.m2),
            "e": (n, alg.p1), "Theta2": (n, n),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(f"shape {getattr(self, name).shape}, expected {shape}", f"controller.{name}")


@dataclass(frozen=True, eq=False)
class EnergyCouplingParams:
    """Hamiltonian ``x^T R x / 2`` and couplings ``M x`` (to the external
    field) and ``L x`` (to the other system's output field)."""

    R: np.ndarray
    M: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", sym(np.asarray(self.R, dtype=float)))
        object.__setattr__(self, "M", np.asarray(self.M, dtype=float))
        object.__setattr__(self, "L", np.asarray(self.L, dtype=float))


def plant_from_params(params, Theta1, D, alg, F=None, G=None):
    """Plant matrices generated by energy and coupling matrices."""
    Theta1 = np.asarray(Theta1, dtype=float)
    _inv_ccr(Theta1, "Theta1")
    D = check_feedthrough(D, alg.J1, "D")
    R, M, L = params.R, params.M, params.L
    n = Theta1.shape[0]
    A = 2 * Theta1 @ (R + M.T @ alg.J1 @ M + L.T @ alg.tJ2 @ L)
    B = 2 * Theta1 @ M.T
    C = 2 * D @ alg.J1 @ M
    E = 2 * Theta1 @ L.T
    F = np.zeros((0, n)) if F is None else np.asarray(F, dtype=float)
    G = np.zeros((F.shape[0], alg.p2)) if G is None else np.asarray(G, dtype=float)
    plant = QuantumPlant(A, B, C, D, E, Theta1, F, G)
    plant.check_shapes(alg)
    return plant


def controller_from_params(params, Theta2, d, alg):
    Theta2 = np.asarray(Theta2, dtype=float)
    _inv_ccr(Theta2, "Theta2")
    d = check_feedthrough(d, alg.J2, "d")
    R, M, L = params.R, params.M, params.L
    a = 2 * Theta2 @ (R + M.T @ alg.J2 @ M + L.T @ alg.tJ1 @ L)
    b = 2 * Theta2 @ M.T
    c = 2 * d @ alg.J2 @ M
    e = 2 * Theta2 @ L.T
    ctrl = QuantumController(a, b, c, d, e, Theta2)
    ctrl.check_shapes(alg)
    return ctrl


@dataclass(frozen=True)
class PrReport:
    residual1: float
    residual2: float
    scale1: float
    scale2: float
    tol: float

    @property
    def normalized(self):
        return self.residual1 / self.scale1, self.residual2 / self.scale2

    @property
    def passed(self):
        r1, r2 = self.normalized
        return bool(r1 <= self.tol and r2 <= self.tol)


def _pr_residuals(A, B, C, D, E, Theta, Jin, tJother):
    t = (A @ Theta, Theta @ A.T, B @ Jin @ B.T, E @ tJother @ E.T)
    R1 = sum(t)
    u = (C @ Theta, D @ Jin @ B.T)
    R2 = sum(u)
    s1 = max([1.0] + [np.linalg.norm(x) for x in t])
    s2 = max([1.0] + [np.linalg.norm(x) for x in u])
    return np.linalg.norm(R1), np.linalg.norm(R2), s1, s2


def verify_pr(system, alg, tol=DEFAULT_PR_TOL):
    """Check both physical-realizability identities.

    Residuals are Frobenius norms; ``passed`` compares them with ``tol``
    after dividing by the largest term norm (at least 1).
    """
    if isinstance(system, QuantumPlant):
        system.check_shapes(alg)
        vals = _pr_residuals(system.A, system.B, system.C, system.D, system.E,
                             system.Theta1, alg.J1, alg.tJ2)
    elif isinstance(system, QuantumController):
        system.check_shapes(alg)
        vals = _pr_residuals(system.a, system.b, system.c, system.d, system.e,
                             system.Theta2, alg.J2, alg.tJ1)
    else:
        raise TypeError(f"cannot verify {type(system).__name__}")
    return PrReport(*map(float, vals), tol=tol)


def derive_ac_from_rbe(R2, b, e, Theta2, d, alg):
    """Controller ``a`` and ``c`` parameterized by energy matrix and gains."""
    Theta2 = np.asarray(Theta2, dtype=float)
    Ti = _inv_ccr(Theta2, "Theta2")
    R2 = sym(np.asarray(R2, dtype=float))
    b = np.asarray(b, dtype=float)
    e = np.asarray(e, dtype=float)
    a = 2 * Theta2 @ R2 - 0.5 * (b @ alg.J2 @ b.T + e @ alg.tJ1 @ e.T) @ Ti
    c = -np.asarray(d) @ alg.J2 @ b.T @ Ti
    return a, c


@dataclass(frozen=True, eq=False)
class ThetaRecovery:
    Theta: np.ndarray
    asymmetry: float


def recover_theta2(a, b, e, alg):
    """CCR matrix implied by the first realizability identity of (a, b, e).

    Solves ``a X + X a^T + b J2 b^T + e tJ1 e^T = 0`` and projects ``X`` onto
    the antisymmetric matrices; the discarded part is reported.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    e = np.asarray(e, dtype=float)
    Q = b @ alg.J2 @ b.T + e @ alg.tJ1 @ e.T
    try:
        X = sylvester_solve(a, a, Q)
    except SingularSystem as exc:
        raise ResonantSpectrum(f"a has eigenvalues symmetric about the origin: {exc}") from None
    Theta = antisym(X)
    asym = float(np.linalg.norm(sym(X)))
    if Theta.size and np.linalg.cond(Theta) > 1e12:
        warnings.warn("recovered CCR matrix is singular", SingularThetaWarning)
    return ThetaRecovery(Theta, asym)

