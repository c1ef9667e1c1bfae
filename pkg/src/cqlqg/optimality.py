"""First-order optimality for Luenberger controllers.

The cost ``V`` is a function of the gains ``(b, e)`` (with ``c`` tied to
``b``), the realizability constraint ``f(gamma) = 0`` is antisymmetric, and
the Lagrange function is ``L = V + <lam, f(gamma)> / 2`` with antisymmetric
``lam``.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .cost import gramian_blocks, lqg_cost, luenberger_cost, assemble_closed_loop
from .errors import (
    InfeasibleGains,
    LostStability,
    NotHurwitz,
    NumericalError,
    StaleGramians,
)
from .linalg import antisym
from .luenberger import (
    LuenbergerGains,
    assemble_luenberger_loop,
    build_constraint_data,
    luenberger_controller,
    normal_multiplier,
    retract,
    tangent_project,
)
from .quantum import _inv_ccr

log = logging.getLogger(__name__)

STALE_RTOL = 1e-8


def inner(X, Y):
    return float(np.sum(X * Y))


class SandwichOperator:
    """``theta -> sum_k phi_k @ theta @ psi_k``."""

    def __init__(self, terms):
        self.terms = [(np.asarray(p, dtype=float), np.asarray(s, dtype=float)) for p, s in terms]

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for phi, psi in self.terms:
            out += phi @ theta @ psi
        return out

    def adjoint(self):
        return SandwichOperator([(p.T, s.T) for p, s in self.terms])

    @property
    def shape(self):
        phi, psi = self.terms[0]
        return phi.shape[1], psi.shape[0]

    def structurally_self_adjoint(self, tol=1e-12):
        """True if every pair is both symmetric or both antisymmetric."""
        def kind(M):
            s = max(1.0, np.linalg.norm(M))
            if np.linalg.norm(M - M.T) <= tol * s:
                return 1
            if np.linalg.norm(M + M.T) <= tol * s:
                return -1
            return 0
        # a vanishing term is compatible with either symmetry
        return all(kind(p) * kind(s) == 1 for p, s in self.terms if p.any() and s.any())

    def adjoint_defect(self, rng, pairs=20):
        """Largest ``|<f(u), v> - <u, f(v)>|`` over random pairs, relative to
        ``||f(u)|| ||v|| + ||u|| ||f(v)||``."""
        worst = 0.0
        for _ in range(pairs):
            u = rng.normal(size=self.shape)
            v = rng.normal(size=self.shape)
            fu, fv = self(u), self(v)
            scale = np.linalg.norm(fu) * np.linalg.norm(v) + np.linalg.norm(u) * np.linalg.norm(fv)
            if scale > 0:
                worst = max(worst, abs(inner(fu, v) - inner(u, fv)) / scale)
        return worst


def _check_blocks(plant, gains, blocks, d, alg):
    loop = assemble_luenberger_loop(plant, gains, d, alg, check_feasible=False)
    rp, rq = blocks.ale_residuals(loop)
    if max(rp, rq) > STALE_RTOL:
        raise StaleGramians(f"Gramian blocks do not match the gains (residuals {rp:.2e}, {rq:.2e})")
    return loop


def _shared_terms(plant, blocks, d, alg):
    Ti = _inv_ccr(plant.Theta1, "Theta1")
    Ed = plant.E @ d
    dQ = blocks.Q21 - blocks.Q11
    W = Ti @ (blocks.Hblock(2, 2).T @ plant.E + (blocks.P21 + blocks.P22) @ plant.F.T @ plant.G) @ d @ alg.J2
    return Ti, Ed, dQ, W


def _output_weight(plant, d, alg):
    # J2 d^T G^T G d J2 (symmetric; note J2^T = -J2)
    GdJ = plant.G @ d @ alg.J2
    return -GdJ.T @ GdJ


def grad_V(plant, gains, blocks, alg, d, check=True):
    """Partial Frechet derivatives ``(dV/db, dV/de)`` of the cost.

    ``blocks`` must be the Gramians of the loop with these gains; with
    ``check`` this is verified and ``StaleGramians`` raised otherwise.
    """
    d = np.asarray(d, dtype=float)
    if check:
        _check_blocks(plant, gains, blocks, d, alg)
    b, e = gains.b, gains.e
    Ti, Ed, dQ, W = _shared_terms(plant, blocks, d, alg)
    gb = dQ @ Ed + W + blocks.q @ b + Ti @ blocks.P22 @ Ti @ b @ _output_weight(plant, d, alg)
    ge = ((blocks.Hblock(2, 1) - blocks.Hblock(1, 1)) @ plant.C.T
          + dQ @ plant.B @ plant.D.T + blocks.q @ e)
    return gb, ge


def build_fB_fE(plant, blocks, lam, alg, d):
    """The self-adjoint sandwich operators acting on ``b`` and ``e``."""
    Ti = _inv_ccr(plant.Theta1, "Theta1")
    lam = np.asarray(lam, dtype=float)
    fB = SandwichOperator([
        (blocks.q, np.eye(alg.m2)),
        (Ti @ blocks.P22 @ Ti, _output_weight(plant, np.asarray(d, dtype=float), alg)),
        (-lam, alg.J2),
    ])
    fE = SandwichOperator([(blocks.q, np.eye(alg.p1)), (-lam, alg.tJ1)])
    for name, op in (("fB", fB), ("fE", fE)):
        if not op.structurally_self_adjoint(tol=1e-10):
            raise NumericalError(f"{name} has a pair of mixed symmetry")
    return fB, fE


def stationarity_residuals(plant, gains, lam, blocks, alg, d, form="sandwich", check=True):
    """``(dL/db, dL/de)`` for the Lagrange function with multiplier ``lam``.

    ``form="sandwich"`` groups the gain-dependent terms into ``fB(b)`` and
    ``fE(e)``; ``form="terms"`` adds the multiplier terms to ``grad_V``.
    """
    d = np.asarray(d, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if check:
        _check_blocks(plant, gains, blocks, d, alg)
    b, e = gains.b, gains.e
    BJD = plant.B @ alg.J1 @ plant.D.T
    if form == "terms":
        gb, ge = grad_V(plant, gains, blocks, alg, d, check=False)
        Ed = plant.E @ d
        return gb + lam @ (Ed - b) @ alg.J2, ge + lam @ (BJD - e @ alg.tJ1)
    if form != "sandwich":
        raise ValueError(f"unknown form {form!r}")
    Ti, Ed, dQ, W = _shared_terms(plant, blocks, d, alg)
    fB, fE = build_fB_fE(plant, blocks, lam, alg, d)
    Rb = dQ @ Ed + lam @ Ed @ alg.J2 + W + fB(b)
    Re = (dQ @ plant.B @ plant.D.T + lam @ BJD
          + (blocks.Hblock(2, 1) - blocks.Hblock(1, 1)) @ plant.C.T + fE(e))
    return Rb, Re


# -- finite-difference oracles ------------------------------------------------


def cost_of_gains(plant, gains, d, alg):
    """Cost of the Luenberger controller via the full-order closed loop."""
    ctrl = luenberger_controller(plant, gains, d, alg)
    return lqg_cost(assemble_closed_loop(plant, ctrl, alg))


def lagrangian_of_gains(plant, gains, lam, d, alg, data=None):
    data = build_constraint_data(plant, d, alg, verify=False) if data is None else data
    return cost_of_gains(plant, gains, d, alg) + 0.5 * inner(lam, data.f(gains.gamma))


def fd_step(gamma, rel_step=1e-6):
    return rel_step * max(1.0, float(np.linalg.norm(gamma)))


def central_difference(fun, x, direction, h):
    return (fun(x + h * direction) - fun(x - h * direction)) / (2 * h)


@dataclass
class GradientCheck:
    grad_error: float = 0.0
    stationarity_error: float = 0.0
    directions: int = 0
    skipped: int = 0
    step: float = 0.0


def _rel_err(fd, an, gnorm):
    # directional derivatives are compared on the scale ||g|| ||delta||
    # (unit delta), the largest value they can take
    return abs(fd - an) / gnorm if gnorm > 0 else abs(fd - an)


def gradient_check(plant, gains, d, alg, lam=None, dirs=20, rel_step=1e-6, rng=None):
    """Compare ``grad_V`` and ``stationarity_residuals`` with central
    differences of ``V`` and ``L`` along ``dirs`` random unit directions.

    The step is ``rel_step * max(1, ||gamma||)``. Directions whose
    difference points leave the stability region are counted in
    ``skipped`` and left out of the errors.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    d = np.asarray(d, dtype=float)
    m2 = alg.m2
    data = build_constraint_data(plant, d, alg, verify=False)
    gamma = gains.gamma
    n = gamma.shape[0]
    lam = antisym(rng.normal(size=(n, n))) if lam is None else np.asarray(lam, dtype=float)
    h = fd_step(gamma, rel_step)
    out = GradientCheck(directions=dirs, step=h)
    if dirs <= 0:
        return out
    loop = assemble_luenberger_loop(plant, gains, d, alg, check_feasible=False)
    blocks = gramian_blocks(loop)
    gb, ge = grad_V(plant, gains, blocks, alg, d)
    Rb, Re = stationarity_residuals(plant, gains, lam, blocks, alg, d)
    g = np.hstack([gb, ge])
    R = np.hstack([Rb, Re])

    def V(x):
        return cost_of_gains(plant, LuenbergerGains.from_gamma(x, m2), d, alg)

    def L(x):
        return lagrangian_of_gains(plant, LuenbergerGains.from_gamma(x, m2), lam, d, alg, data)

    for _ in range(dirs):
        delta = rng.normal(size=gamma.shape)
        delta /= np.linalg.norm(delta)
        try:
            fv = central_difference(V, gamma, delta, h)
            fl = central_difference(L, gamma, delta, h)
        except NotHurwitz:
            out.skipped += 1
            continue
        out.grad_error = max(out.grad_error, _rel_err(fv, inner(g, delta), np.linalg.norm(g)))
        out.stationarity_error = max(out.stationarity_error,
                                     _rel_err(fl, inner(R, delta), np.linalg.norm(R)))
    return out


# -- stationarity solver ------------------------------------------------------


@dataclass
class OptimizeOptions:
    tol: float = 1e-6
    max_iter: int = 500
    rho0: float = 1.0
    armijo: float = 1e-4
    margin: float = 1e-9
    max_backtracks: int = 60
    memory: int = 8
    # relative size of rounding noise in evaluations of V
    noise: float = 1e-13


@dataclass
class IterationRecord:
    iter: int
    L: float
    V: float
    f_norm: float
    Rb_norm: float
    Re_norm: float


@dataclass
class OptimalityState:
    gains: LuenbergerGains
    lam: np.ndarray
    blocks: object
    gradB: np.ndarray
    gradE: np.ndarray
    constraint_residual: np.ndarray
    lagrangian_value: float
    V: float
    merit: float
    rho: float
    converged: bool = False
    iterations: int = 0
    history: list = field(default_factory=list)

    @property
    def stationarity(self):
        return float(max(np.linalg.norm(self.gradB), np.linalg.norm(self.gradE),
                         np.linalg.norm(self.constraint_residual)))

    def record(self, k):
        return IterationRecord(k, self.merit, self.V, float(np.linalg.norm(self.constraint_residual)),
                               float(np.linalg.norm(self.gradB)), float(np.linalg.norm(self.gradE)))


def _evaluate(plant, gamma, d, alg, data, rho, margin):
    """State at ``gamma``; the multiplier is a function of ``gamma`` alone."""
    gains = LuenbergerGains.from_gamma(gamma, data.m2)
    loop = assemble_luenberger_loop(plant, gains, d, alg, check_feasible=False, margin=margin)
    if not loop.stable:
        raise NotHurwitz(f"closed loop unstable (abscissas {loop.estimator_abscissa:.3g}, "
                         f"{loop.controller_abscissa:.3g})")
    blocks = gramian_blocks(loop)
    V = luenberger_cost(loop, blocks).value
    gb, ge = grad_V(plant, gains, blocks, alg, d, check=False)
    f = data.f(gamma)
    beta = gamma - data.gamma0
    lam = normal_multiplier(np.hstack([gb, ge]), beta, data.K) + rho * f
    lam = antisym(lam)
    Rb, Re = stationarity_residuals(plant, gains, lam, blocks, alg, d, check=False)
    Lval = V + 0.5 * inner(lam, f)
    merit = Lval + 0.25 * rho * inner(f, f)
    return OptimalityState(gains, lam, blocks, Rb, Re, f, Lval, V, merit, rho)


def _lbfgs_apply(mem, R):
    """Two-loop recursion: inverse-Hessian estimate applied to ``R``."""
    q = R.copy()
    alphas = []
    for s, y, r in reversed(mem):
        a = r * inner(s, q)
        q -= a * y
        alphas.append(a)
    s, y, _ = mem[-1]
    q *= inner(s, y) / inner(y, y)
    for (s, y, r), a in zip(mem, reversed(alphas)):
        q += (a - r * inner(y, q)) * s
    return q


def solve_stationarity(plant, alg, init, d, options=None, callback=None):
    """Seek a stationary point of the Lagrange function from feasible
    stabilizing gains ``init``.

    The search direction is the Lagrangian gradient ``(dL/db, dL/de)`` (the
    multiplier is the least-squares estimate plus ``rho`` times the
    constraint residual, which makes it tangent to the constraint set),
    preconditioned with limited-memory BFGS pairs when ``options.memory > 0``
    and projected back onto the tangent space. The candidate is pulled onto
    the constraint set by Newton retraction, and the step is halved until
    the merit ``L + rho ||f||^2 / 4`` decreases sufficiently, the cost does
    not increase and both diagonal blocks stay Hurwitz.

    ``callback(state)`` is called with the initial state and after every
    accepted step. Returns the final state; ``converged`` is False when ``max_iter`` is
    reached or the line search stalls. Raises ``LostStability`` when every
    trial step of an iteration leaves the stability region.
    """
    opts = OptimizeOptions() if options is None else options
    if opts.tol <= 0 or opts.max_iter < 0 or opts.rho0 < 0:
        raise ValueError("tol must be positive, max_iter and rho0 nonnegative")
    d = np.asarray(d, dtype=float)
    data = build_constraint_data(plant, d, alg)
    rho = float(opts.rho0)
    gamma = np.asarray(init.gamma, dtype=float)
    if np.linalg.norm(data.f(gamma)) > data.tolerance():
        raise InfeasibleGains("initial gains violate the realizability constraint")
    state = _evaluate(plant, gamma, d, alg, data, rho, opts.margin)
    state.history.append(state.record(0))
    if callback is not None:
        callback(state)

    mem = []
    last_step = None
    for k in range(1, opts.max_iter + 1):
        if state.stationarity <= opts.tol:
            state.converged = True
            break
        R = np.hstack([state.gradB, state.gradE])
        beta = gamma - data.gamma0
        p = -R
        if mem:
            p = -tangent_project(_lbfgs_apply(mem, R), beta, data.K)[0]
            if inner(p, R) >= -1e-8 * np.linalg.norm(p) * np.linalg.norm(R):
                p = -R
                mem.clear()
        slope = -inner(p, R)
        pn = np.linalg.norm(p)
        if mem:
            t = 1.0
        elif last_step is not None:
            t = last_step / pn
        else:
            t = 0.1 * max(1.0, np.linalg.norm(gamma)) / pn
        # steps below this change gamma only at rounding level
        t_min = 1e-14 * max(1.0, np.linalg.norm(gamma)) / pn
        unstable_only = True
        accepted = None
        for _ in range(opts.max_backtracks):
            if t < t_min:
                break
            try:
                cand = retract(gamma + t * p, data)
                new = _evaluate(plant, cand, d, alg, data, rho, opts.margin)
            except NotHurwitz:
                t *= 0.5
                continue
            except (InfeasibleGains, NumericalError, np.linalg.LinAlgError):
                unstable_only = False
                t *= 0.5
                continue
            unstable_only = False
            sufficient = new.merit <= state.merit - opts.armijo * t * slope
            # near the rounding floor of the merit, settle for a smaller residual
            # as long as merit and cost move by no more than evaluation noise
            noise = opts.noise * max(1.0, abs(state.V))
            floor = (new.merit <= state.merit + noise
                     and new.stationarity < state.stationarity)
            if sufficient and new.V <= state.V or floor and new.V <= state.V + noise:
                accepted = (cand, new)
                break
            t *= 0.5
        if accepted is None:
            if unstable_only:
                raise LostStability(f"iteration {k}: every trial step is destabilizing")
            log.info("line search stalled at iteration %d", k)
            break
        cand, new = accepted
        # curvature pair, both vectors moved to the new tangent space
        nbeta = cand - data.gamma0
        sv = tangent_project(cand - gamma, nbeta, data.K)[0]
        Rn = np.hstack([new.gradB, new.gradE])
        yv = Rn - tangent_project(R, nbeta, data.K)[0]
        sy = inner(sv, yv)
        if opts.memory > 0 and sy > 1e-12 * np.linalg.norm(sv) * np.linalg.norm(yv):
            mem.append((sv, yv, 1.0 / sy))
            del mem[:-opts.memory]
        else:
            mem.clear()
        last_step = float(np.linalg.norm(cand - gamma))
        gamma = cand
        new.history = state.history
        new.iterations = k
        state = new
        state.history.append(state.record(k))
        if callback is not None:
            callback(state)
    else:
        state.converged = state.stationarity <= opts.tol
    return state


__all__ = [
    "SandwichOperator", "grad_V", "build_fB_fE", "stationarity_residuals",
    "cost_of_gains", "lagrangian_of_gains", "fd_step", "central_difference",
    "GradientCheck", "gradient_check", "OptimizeOptions", "IterationRecord",
    "OptimalityState", "solve_stationarity",
]
