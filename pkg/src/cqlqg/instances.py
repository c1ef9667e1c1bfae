"""Random problem instances for tests, benchmarks and fixtures.

Plants are drawn through the energy/coupling parameterization, so they are
physically realizable by construction. Stable instances are obtained by
rejection: a draw is kept only if the stabilizing-gain search succeeds.
"""
import numpy as np

from .errors import CqlqgError
from .linalg import antisym, sym
from .luenberger import luenberger_controller, search_stabilizing_gains
from .quantum import (
    EnergyCouplingParams,
    build_ccr_algebra,
    feedthrough_matrix,
    plant_from_params,
)
from .swap import apply_to_controller


def random_ccr(rng, n, max_cond=50.0):
    """Random nonsingular antisymmetric matrix with condition number below ``max_cond``."""
    while True:
        T = antisym(rng.normal(size=(n, n)))
        if np.linalg.cond(T) < max_cond:
            return T


def random_energy_params(rng, n, m, p):
    R = sym(rng.normal(size=(n, n)))
    return EnergyCouplingParams(R, rng.normal(size=(m, n)), rng.normal(size=(p, n)))


def random_plant(rng, n, m1, m2, p1, p2, r=None):
    """Random realizable plant with leading-pair feedthroughs.

    Returns ``(plant, d, alg)``; the cost weights have ``r = n + p2`` rows
    unless given.
    """
    alg = build_ccr_algebra(m1, m2, p1, p2)
    Theta1 = random_ccr(rng, n)
    params = random_energy_params(rng, n, m1, p2)
    r = n + p2 if r is None else r
    F = rng.normal(size=(r, n))
    G = rng.normal(size=(r, p2))
    D = feedthrough_matrix(p1, m1)
    d = feedthrough_matrix(p2, m2)
    return plant_from_params(params, Theta1, D, alg, F, G), d, alg


def random_luenberger_instance(rng, dims, budget=100, max_tries=200, margin=1e-3):
    """Plant with feasible stabilizing Luenberger gains.

    ``dims = (n, m1, m2, p1, p2)``. Returns ``(plant, gains, d, alg)``.
    Raises ``RuntimeError`` if ``max_tries`` draws all fail.
    """
    for _ in range(max_tries):
        plant, d, alg = random_plant(rng, *dims)
        seed = int(rng.integers(2**31))
        try:
            gains = search_stabilizing_gains(plant, d, alg, budget=budget, seed=seed,
                                             margin=margin)
        except CqlqgError:
            continue
        return plant, gains, d, alg
    raise RuntimeError(f"no stabilizable draw for dims {dims} in {max_tries} tries")


def random_similarity(rng, n, max_cond=20.0):
    while True:
        T = rng.normal(size=(n, n))
        if np.linalg.cond(T) < max_cond:
            return T


def random_stable_pr_pair(rng, dims, **kw):
    """Stable realizable plant/controller pair with a generic controller CCR matrix.

    A Luenberger controller is moved to random coordinates; realizability and
    closed-loop stability are invariant under the change of variables.
    Returns ``(plant, controller, alg)``.
    """
    plant, gains, d, alg = random_luenberger_instance(rng, dims, **kw)
    ctrl = luenberger_controller(plant, gains, d, alg)
    return plant, apply_to_controller(ctrl, random_similarity(rng, plant.n)), alg


__all__ = [
    "random_ccr", "random_energy_params", "random_plant", "random_luenberger_instance",
    "random_similarity", "random_stable_pr_pair",
]
