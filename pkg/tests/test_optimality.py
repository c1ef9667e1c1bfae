import numpy as np
import pytest

from cqlqg.cost import GramianBlocks, gramian_blocks
from cqlqg.errors import InfeasibleGains, StaleGramians
from cqlqg.linalg import antisym
from cqlqg.luenberger import (
    LuenbergerGains,
    assemble_luenberger_loop,
    build_constraint_data,
    is_stabilizing,
    search_stabilizing_gains,
    tangent_project,
)
from cqlqg.model import ingest_model
from cqlqg.optimality import (
    OptimizeOptions,
    SandwichOperator,
    build_fB_fE,
    cost_of_gains,
    grad_V,
    gradient_check,
    inner,
    solve_stationarity,
    stationarity_residuals,
)
from cqlqg.quantum import QuantumPlant

from conftest import fixture_path


def blocks_of(plant, gains, d, alg):
    return gramian_blocks(assemble_luenberger_loop(plant, gains, d, alg))


def with_weights(plant, F, G):
    return QuantumPlant(plant.A, plant.B, plant.C, plant.D, plant.E, plant.Theta1, F, G)


@pytest.fixture(scope="module")
def stationary_point():
    """Fixture plant and a stationary point polished to 1e-10."""
    m = ingest_model(fixture_path("optimize_n2.json"))
    init = search_stabilizing_gains(m.plant, m.d, m.alg, budget=2000, seed=m.seed, margin=1e-3)
    state = solve_stationarity(m.plant, m.alg, init, m.d, OptimizeOptions(tol=1e-10, max_iter=500))
    assert state.converged
    return m, state


def test_gradients_match_finite_differences(luenberger_pool):
    for plant, gains, d, alg in luenberger_pool[:15]:
        errs = []
        for rel_step in (1e-6, 1e-7):
            chk = gradient_check(plant, gains, d, alg, dirs=10, rel_step=rel_step,
                                 rng=np.random.default_rng(1))
            assert chk.skipped == 0
            errs.append(max(chk.grad_error, chk.stationarity_error))
        if errs[0] > 1e-5:
            # close to the stability boundary the truncation error of the central
            # difference dominates; it must then fall like h^2
            assert errs[0] >= 30 * errs[1]
        assert min(errs) <= 1e-5


def test_zero_output_gives_zero_gradient(luenberger_pool):
    plant, gains, d, alg = luenberger_pool[3]
    quiet = with_weights(plant, np.zeros_like(plant.F), np.zeros_like(plant.G))
    gb, ge = grad_V(quiet, gains, blocks_of(quiet, gains, d, alg), alg, d)
    assert not gb.any() and not ge.any()


def test_homogeneity_in_weights(luenberger_pool):
    for plant, gains, d, alg in luenberger_pool[:10]:
        double = with_weights(plant, 2 * plant.F, 2 * plant.G)
        V1 = cost_of_gains(plant, gains, d, alg)
        V2 = cost_of_gains(double, gains, d, alg)
        assert V2 == pytest.approx(4 * V1, rel=1e-9)
        g1 = grad_V(plant, gains, blocks_of(plant, gains, d, alg), alg, d)
        g2 = grad_V(double, gains, blocks_of(double, gains, d, alg), alg, d)
        for a, b in zip(g1, g2):
            assert np.linalg.norm(b - 4 * a) <= 1e-9 * max(1.0, np.linalg.norm(b))


def test_sandwich_trivial_cases(rng):
    n, m2, p1 = 4, 2, 2
    I, Z = np.eye(n), np.zeros((n, n))
    J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    blocks = GramianBlocks(Z, Z, Z, Z, Z, Z, np.zeros((2 * n, 2 * n)), I)

    class Stub:
        Theta1 = antisym(rng.normal(size=(n, n))) + 3 * np.kron(np.eye(2), J2)
        G = rng.normal(size=(3, 2))

    class Alg:
        m2, p1 = 2, 2
        J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
        tJ1 = J2

    fB, fE = build_fB_fE(Stub, blocks, np.zeros((n, n)), Alg, np.eye(2))
    theta = rng.normal(size=(n, m2))
    assert np.allclose(fB(theta), theta)
    q = rng.normal(size=(n, n))
    q = q @ q.T
    blocks = GramianBlocks(Z, Z, Z, Z, Z, Z, np.zeros((2 * n, 2 * n)), q)
    _, fE = build_fB_fE(Stub, blocks, np.zeros((n, n)), Alg, np.eye(2))
    theta = rng.normal(size=(n, p1))
    assert np.allclose(fE(theta), q @ theta)


def test_sandwich_self_adjoint(luenberger_pool):
    rng = np.random.default_rng(2)
    for plant, gains, d, alg in luenberger_pool[:20]:
        lam = antisym(rng.normal(size=(plant.n, plant.n)))
        fB, fE = build_fB_fE(plant, blocks_of(plant, gains, d, alg), lam, alg, d)
        for op in (fB, fE):
            assert op.structurally_self_adjoint()
            assert op.adjoint_defect(rng, pairs=20) <= 1e-10


def test_mixed_pair_is_not_self_adjoint(rng):
    S = rng.normal(size=(3, 3))
    op = SandwichOperator([(S + S.T, S - S.T)])
    assert not op.structurally_self_adjoint()
    assert op.adjoint_defect(rng) > 1e-3


def test_two_formulas_agree(luenberger_pool):
    rng = np.random.default_rng(3)
    for plant, gains, d, alg in luenberger_pool[:30]:
        blocks = blocks_of(plant, gains, d, alg)
        lam = antisym(rng.normal(size=(plant.n, plant.n)))
        sw = stationarity_residuals(plant, gains, lam, blocks, alg, d)
        tm = stationarity_residuals(plant, gains, lam, blocks, alg, d, form="terms")
        for a, b in zip(sw, tm):
            assert np.linalg.norm(a - b) <= 1e-12 * max(1.0, np.linalg.norm(b))
        zero = stationarity_residuals(plant, gains, np.zeros_like(lam), blocks, alg, d, form="terms")
        gv = grad_V(plant, gains, blocks, alg, d)
        for a, b in zip(zero, gv):
            assert np.array_equal(a, b)


def test_stale_blocks_rejected(luenberger_pool):
    plant, gains, d, alg = luenberger_pool[1]
    blocks = blocks_of(plant, gains, d, alg)
    moved = LuenbergerGains(gains.b * 1.01, gains.e)
    with pytest.raises(StaleGramians):
        grad_V(plant, moved, blocks, alg, d)
    with pytest.raises(StaleGramians):
        stationarity_residuals(plant, moved, np.zeros((plant.n, plant.n)), blocks, alg, d)


def test_cost_is_second_order_at_stationary_point(stationary_point):
    m, state = stationary_point
    assert state.stationarity <= 1e-8
    data = build_constraint_data(m.plant, m.d, m.alg)
    gamma = state.gains.gamma
    beta = gamma - data.gamma0
    rng = np.random.default_rng(4)
    V0 = state.V
    for _ in range(50):
        delta, _ = tangent_project(rng.normal(size=gamma.shape), beta, data.K)
        delta /= np.linalg.norm(delta)
        lin = beta @ data.K @ delta.T
        assert np.linalg.norm(lin - lin.T) <= 1e-8
        C = []
        for t in (1e-3, 1e-4):
            g = LuenbergerGains.from_gamma(gamma + t * delta, m.alg.m2)
            C.append(abs(cost_of_gains(m.plant, g, m.d, m.alg) - V0) / t**2)
        # a first-order change would make the second ratio ten times larger
        assert np.isfinite(C).all()
        assert C[1] <= 2 * C[0] + 1e-4


def test_optimizer_safety(luenberger_pool):
    for plant, gains, d, alg in luenberger_pool[:6]:
        data = build_constraint_data(plant, d, alg)
        seen = []

        def check(state):
            assert is_stabilizing(plant, state.gains, d, alg)
            assert np.linalg.norm(data.f(state.gains.gamma)) <= data.tolerance()
            seen.append(state.V)

        state = solve_stationarity(plant, alg, gains, d, OptimizeOptions(max_iter=40), callback=check)
        assert len(seen) == state.iterations + 1
        noise = OptimizeOptions().noise * max(1.0, abs(seen[0]))
        assert all(b <= a + noise for a, b in zip(seen, seen[1:]))
        assert state.V <= seen[0] + noise
        assert isinstance(state.converged, bool)


def test_already_stationary_returns_init(stationary_point):
    m, state = stationary_point
    again = solve_stationarity(m.plant, m.alg, state.gains, m.d, OptimizeOptions(tol=1e-6))
    assert again.iterations == 0 and again.converged
    assert np.array_equal(again.gains.gamma, state.gains.gamma)


def test_optimizer_input_checks(luenberger_pool):
    plant, gains, d, alg = luenberger_pool[0]
    with pytest.raises(ValueError):
        solve_stationarity(plant, alg, gains, d, OptimizeOptions(tol=-1.0))
    with pytest.raises(InfeasibleGains):
        solve_stationarity(plant, alg, LuenbergerGains(gains.b + 1.0, gains.e), d)


def test_inner_product():
    X = np.arange(6.0).reshape(2, 3)
    assert inner(X, X) == pytest.approx(np.trace(X.T @ X))
