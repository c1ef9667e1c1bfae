"""Regenerate the model fixtures in this directory.

    python3 fixtures/make_fixtures.py

Every fixture is built from a fixed seed, so rerunning the script
reproduces the committed files byte for byte.
"""
from pathlib import Path

import numpy as np

from cqlqg.instances import random_ccr, random_energy_params
from cqlqg.luenberger import luenberger_controller, search_stabilizing_gains
from cqlqg.model import controller_section, dump_json, parse_model, to_list
from cqlqg.optimality import OptimizeOptions, solve_stationarity
from cqlqg.quantum import controller_from_params

HERE = Path(__file__).resolve().parent

# seeds of the optimizer fixture: plant draw and stabilizing-gain search
OPT_PLANT_SEED = 2
OPT_SEARCH_SEED = 1


def plant_model(rng, n=2, m1=2, m2=2, p1=2, p2=2, seed=0):
    Theta1 = random_ccr(rng, n)
    params = random_energy_params(rng, n, m1, p2)
    r = n + p2
    return {
        "dims": {"n": n, "m1": m1, "m2": m2, "p1": p1, "p2": p2, "r": r},
        "plant": {"R1": to_list(params.R), "M1": to_list(params.M), "L1": to_list(params.L)},
        "Theta1": to_list(Theta1),
        "weights": {"F": to_list(rng.normal(size=(r, n))), "G": to_list(rng.normal(size=(r, p2)))},
        "feedthrough": {"D": list(range(p1 // 2)), "d": list(range(p2 // 2))},
        "seed": seed,
    }


def optimizer_fixture():
    raw = plant_model(np.random.default_rng(OPT_PLANT_SEED), seed=OPT_SEARCH_SEED)
    m = parse_model(raw)
    init = search_stabilizing_gains(m.plant, m.d, m.alg, budget=2000, seed=OPT_SEARCH_SEED,
                                    margin=1e-3)
    state = solve_stationarity(m.plant, m.alg, init, m.d, OptimizeOptions(tol=1e-6, max_iter=500))
    assert state.converged, "optimizer fixture no longer converges"
    return raw


def verify_fixtures():
    rng = np.random.default_rng(5)
    raw = plant_model(rng)
    m = parse_model(raw)
    n = m.dims["n"]
    Theta2 = random_ccr(rng, n)
    ctrl = controller_from_params(random_energy_params(rng, n, m.alg.m2, m.alg.p1), Theta2,
                                  m.d, m.alg)
    passing = dict(raw, controller=controller_section(ctrl))
    # explicit plant with A perturbed off the realizable set
    failing = dict(raw)
    A = m.plant.A.copy()
    A[0, 0] += 0.5
    failing["plant"] = {"A": to_list(A), "B": to_list(m.plant.B), "C": to_list(m.plant.C),
                        "E": to_list(m.plant.E)}
    return raw, passing, failing


def zero_plant():
    raw = plant_model(np.random.default_rng(7))
    n, m1, p2 = 2, 2, 2
    raw["plant"] = {"R1": np.zeros((n, n)).tolist(), "M1": np.zeros((m1, n)).tolist(),
                    "L1": np.zeros((p2, n)).tolist()}
    return raw


def stable_pair(seed):
    """Plant with a stabilizing Luenberger controller attached."""
    raw = plant_model(np.random.default_rng(seed), seed=seed)
    m = parse_model(raw)
    gains = search_stabilizing_gains(m.plant, m.d, m.alg, budget=2000, seed=seed, margin=1e-3)
    return dict(raw, controller=controller_section(luenberger_controller(m.plant, gains, m.d, m.alg)))


def main():
    plant_only, passing, failing = verify_fixtures()
    luen = stable_pair(3)
    zero_out = dict(luen)
    r = luen["dims"]["r"]
    zero_out["weights"] = {"F": np.zeros((r, 2)).tolist(), "G": np.zeros((r, 2)).tolist()}
    unstable = dict(luen)
    fixtures = {
        "optimize_n2.json": optimizer_fixture(),
        "plant_only.json": plant_only,
        "verify_pass.json": passing,
        "verify_fail.json": failing,
        "zero_plant.json": zero_plant(),
        "luenberger_n2.json": luen,
        "zero_output.json": zero_out,
    }
    # same controller, plant drift shifted far into the right half-plane
    m = parse_model(luen)
    A = m.plant.A + 50.0 * np.eye(2)
    unstable["plant"] = {"A": to_list(A), "B": to_list(m.plant.B), "C": to_list(m.plant.C),
                         "E": to_list(m.plant.E)}
    fixtures["unstable.json"] = unstable
    for name, raw in fixtures.items():
        dump_json(raw, HERE / name)
        print("wrote", name)


if __name__ == "__main__":
    main()
