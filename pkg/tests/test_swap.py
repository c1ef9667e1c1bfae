import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqlqg.cost import assemble_closed_loop, lqg_cost
from cqlqg.errors import OddDimension, SingularCcr, SingularTransform
from cqlqg.instances import random_ccr, random_energy_params, random_similarity
from cqlqg.luenberger import luenberger_controller
from cqlqg.quantum import build_ccr_algebra, controller_from_params, feedthrough_matrix, verify_pr
from cqlqg.swap import (
    apply_to_controller,
    build_swap_plan,
    canonical_ccr,
    canonicalize_ccr,
    difference_ccr,
    swap_matrix,
)

seeds = st.integers(0, 2**32 - 1)


def test_canonicalize_trivial():
    U = canonical_ccr(4)
    assert np.allclose(canonicalize_ccr(U), np.eye(4))
    assert np.allclose(canonicalize_ccr(2 * U), np.eye(4) / np.sqrt(2))


@settings(max_examples=50, deadline=None)
@given(seed=seeds, half=st.integers(1, 5))
def test_canonicalize_round_trip(seed, half):
    rng = np.random.default_rng(seed)
    n = 2 * half
    Theta = random_ccr(rng, n)
    s = canonicalize_ccr(Theta)
    assert np.linalg.norm(s @ Theta @ s.T - canonical_ccr(n)) <= 1e-10 * max(1.0, np.linalg.norm(Theta))


def test_canonicalize_errors():
    with pytest.raises(SingularCcr):
        canonicalize_ccr(np.zeros((2, 2)))
    with pytest.raises(OddDimension):
        canonicalize_ccr(np.zeros((3, 3)))


def test_swap_flips_canonical_form():
    U = canonical_ccr(6)
    s3 = swap_matrix(6)
    assert np.array_equal(s3 @ U @ s3.T, -U)
    plan = build_swap_plan(U, U)
    assert np.allclose(plan.sigma, s3)
    assert np.allclose(plan.sigma @ U @ plan.sigma.T, -U)


@settings(max_examples=50, deadline=None)
@given(seed=seeds, half=st.integers(1, 4), same=st.booleans())
def test_swap_plan_residuals(seed, half, same):
    rng = np.random.default_rng(seed)
    n = 2 * half
    T1 = random_ccr(rng, n)
    T2 = T1 if same else random_ccr(rng, n)
    plan = build_swap_plan(T1, T2)
    scale = max(1.0, np.linalg.norm(T1), np.linalg.norm(T2))
    assert max(plan.residuals(T1, T2)) <= 1e-10 * scale


def test_swap_plan_when_already_opposite(rng):
    T1 = random_ccr(rng, 4)
    plan = build_swap_plan(T1, -T1)
    assert plan.residuals(T1, -T1)[2] <= 1e-10 * np.linalg.norm(T1)


def _controller(rng, n=4):
    alg = build_ccr_algebra(2, 4, 2, 2)
    d = feedthrough_matrix(2, 4)
    return controller_from_params(random_energy_params(rng, n, 4, 2), random_ccr(rng, n), d, alg), alg


def test_apply_identity_and_scaling(rng):
    ctrl, _ = _controller(rng)
    same = apply_to_controller(ctrl, np.eye(4))
    for k in "abcde":
        assert np.allclose(getattr(same, k), getattr(ctrl, k))
    dbl = apply_to_controller(ctrl, 2 * np.eye(4))
    assert np.allclose(dbl.b, 2 * ctrl.b)
    assert np.allclose(dbl.c, ctrl.c / 2)
    assert np.allclose(dbl.a, ctrl.a)


def test_apply_singular_transform(rng):
    ctrl, _ = _controller(rng)
    with pytest.raises(SingularTransform):
        apply_to_controller(ctrl, np.diag([1.0, 1.0, 1.0, 0.0]))


def test_transport_preserves_realizability_and_markov_parameters():
    rng = np.random.default_rng(5)
    for _ in range(30):
        ctrl, alg = _controller(rng)
        sigma = random_similarity(rng, 4)
        new = apply_to_controller(ctrl, sigma)
        assert max(verify_pr(new, alg).normalized) <= 1e-10
        M, Mn = np.eye(4), np.eye(4)
        for _k in range(2 * 4 + 1):
            for X, Y in ((ctrl.c @ M @ ctrl.b, new.c @ Mn @ new.b),
                         (ctrl.c @ M @ ctrl.e, new.c @ Mn @ new.e)):
                assert np.linalg.norm(X - Y) <= 1e-9 * max(1.0, np.linalg.norm(X))
            M, Mn = M @ ctrl.a, Mn @ new.a


def test_cost_invariance_under_transport(luenberger_pool):
    rng = np.random.default_rng(8)
    for plant, gains, d, alg in luenberger_pool[:40]:
        ctrl = luenberger_controller(plant, gains, d, alg)
        V = lqg_cost(assemble_closed_loop(plant, ctrl, alg))
        moved = apply_to_controller(ctrl, random_similarity(rng, plant.n))
        Vm = lqg_cost(assemble_closed_loop(plant, moved, alg))
        assert abs(V - Vm) <= 1e-9 * V


def test_difference_ccr_structure(rng):
    T1 = random_ccr(rng, 4)
    Xi = difference_ccr(T1, -T1)
    Z = np.zeros((4, 4))
    assert np.allclose(Xi, np.block([[Z, T1], [T1, -T1]]), atol=1e-15)
