"""Command line interface: ``cqlqg verify|synthesize|cost|gradcheck|optimize``.

Every command reads a JSON model file and writes a JSON run report (to
``--report`` or stdout). Exit codes: 0 success, 2 invalid input,
3 infeasible or not found, 4 instability, 5 numerical failure.
"""
import argparse
import csv
import logging
import math
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .cost import (
    assemble_closed_loop,
    closed_loop_cost_evaluations,
    gramian_blocks,
    luenberger_cost,
)
from .errors import BudgetExhausted, CqlqgError, NotFound, PRViolation, ValidationError
from .linalg import spectral_abscissa
from .luenberger import (
    LuenbergerGains,
    assemble_luenberger_loop,
    build_constraint_data,
    c_from_b,
    luenberger_a,
    luenberger_controller,
    search_stabilizing_gains,
    solve_gain_constraint,
    stability_objective,
)
from .model import dump_json, ingest_model, to_list, with_controller
from .optimality import OptimizeOptions, gradient_check, solve_stationarity
from .quantum import verify_pr

log = logging.getLogger("cqlqg")

GRADCHECK_RTOL = 1e-5
LOG_HEADER = ["iter", "L", "V", "f_norm", "Rb_norm", "Re_norm"]


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def resolve_seed(flag, model):
    if flag is not None:
        return flag
    if model.seed is not None:
        return model.seed
    env = os.environ.get("CQLQG_SEED")
    if env not in (None, ""):
        try:
            seed = int(env)
        except ValueError:
            raise ValidationError(f"not an integer: {env!r}", "CQLQG_SEED") from None
        if seed < 0:
            raise ValidationError("must be nonnegative", "CQLQG_SEED")
        return seed
    return 0


def _pr_entry(report):
    r1, r2 = report.normalized
    return {"residual1": _num(r1), "residual2": _num(r2), "passed": report.passed}


def _loop_pr(loop, tol):
    t = (loop.cA @ loop.Theta, loop.Theta @ loop.cA.T, loop.cB @ loop.J @ loop.cB.T)
    scale = max([1.0] + [np.linalg.norm(x) for x in t])
    res = loop.pr_residual() / scale
    return {"residual": _num(res), "passed": bool(res <= tol)}


def _gains_entry(gains):
    return {"b": to_list(gains.b), "e": to_list(gains.e)}


def _stability(plant, gains, d, alg):
    c = c_from_b(gains.b, plant, d, alg)
    return {"estimator_abscissa": _num(spectral_abscissa(plant.A - gains.e @ plant.C)),
            "controller_abscissa": _num(spectral_abscissa(plant.A + plant.E @ c))}


def _is_luenberger(model, tol=1e-9):
    """True if the controller has Luenberger structure with ``Theta2 = -Theta1``."""
    p, k = model.plant, model.controller
    gains = LuenbergerGains(k.b, k.e)

    def close(X, Y):
        return np.linalg.norm(X - Y) <= tol * max(1.0, np.linalg.norm(Y))

    c = c_from_b(k.b, p, model.d, model.alg)
    return (close(k.Theta2, -p.Theta1) and close(k.c, c)
            and close(k.a, luenberger_a(p, gains, c)))


def _initial_gains(model, args, seed):
    if model.controller is not None:
        return LuenbergerGains(model.controller.b, model.controller.e), "controller"
    gains = search_stabilizing_gains(model.plant, model.d, model.alg, budget=args.budget,
                                     seed=seed, mode=args.mode, margin=args.margin)
    return gains, "search"


# -- commands ------------------------------------------------------------------


def cmd_verify(model, args):
    tol = model.tolerances["pr"] if args.pr_tol is None else args.pr_tol
    rep = {"pr": {"plant": _pr_entry(verify_pr(model.plant, model.alg, tol))}}
    ok = rep["pr"]["plant"]["passed"]
    if model.controller is not None:
        rep["pr"]["controller"] = _pr_entry(verify_pr(model.controller, model.alg, tol))
        loop = assemble_closed_loop(model.plant, model.controller, model.alg)
        rep["pr"]["closed_loop"] = _loop_pr(loop, tol)
        rep["stability"] = {"closed_loop_abscissa": _num(spectral_abscissa(loop.cA))}
        ok = ok and rep["pr"]["controller"]["passed"] and rep["pr"]["closed_loop"]["passed"]
    else:
        rep["pr"]["controller"] = None
    rep["status"] = "pass" if ok else "fail"
    return rep, 0 if ok else PRViolation.exit_code


def cmd_synthesize(model, args):
    plant, d, alg = model.plant, model.d, model.alg
    seed = resolve_seed(args.seed, model)
    data = build_constraint_data(plant, d, alg)
    gains = solve_gain_constraint(data, args.mode)
    if args.budget > 0:
        try:
            gains = search_stabilizing_gains(plant, d, alg, budget=args.budget, seed=seed,
                                             mode=args.mode, margin=args.margin)
        except NotFound as exc:
            log.warning("%s", exc)
    ctrl = luenberger_controller(plant, gains, d, alg)
    stab = _stability(plant, gains, d, alg)
    stab["stabilizing"] = bool(stability_objective(plant, gains, d, alg) < -args.margin)
    rep = {
        "seed": seed,
        "mode": args.mode,
        "gains": _gains_entry(gains),
        "stability": stab,
        "constraint_residual": _num(np.linalg.norm(data.f(gains.gamma))),
        "pr": {"controller": _pr_entry(verify_pr(ctrl, alg, model.tolerances["pr"]))},
    }
    if args.out:
        dump_json(with_controller(model, ctrl), args.out)
        rep["output"] = str(args.out)
    rep["status"] = "stabilizing" if stab["stabilizing"] else "not_found"
    return rep, 0 if stab["stabilizing"] else NotFound.exit_code


def cmd_cost(model, args):
    if model.controller is None:
        raise ValidationError("cost needs a controller", "controller")
    rtol = model.tolerances["cost"]
    loop = assemble_closed_loop(model.plant, model.controller, model.alg)
    ev = closed_loop_cost_evaluations(loop, rtol)
    rep = {
        "cost": {"V": _num(ev.value), "evaluations": [_num(v) for v in ev.values],
                 "max_rel_disagreement": _num(ev.max_rel_disagreement)},
        "stability": {"closed_loop_abscissa": _num(spectral_abscissa(loop.cA))},
    }
    if _is_luenberger(model):
        gains = LuenbergerGains(model.controller.b, model.controller.e)
        sloop = assemble_luenberger_loop(model.plant, gains, model.d, model.alg,
                                         check_feasible=False)
        blocks = gramian_blocks(sloop)
        bev = luenberger_cost(sloop, blocks, rtol)
        rep["cost"]["block_evaluations"] = [_num(v) for v in bev.values]
        rep["cost"]["block_max_rel_disagreement"] = _num(bev.max_rel_disagreement)
    rep["status"] = "ok"
    return rep, 0


def cmd_gradcheck(model, args):
    seed = resolve_seed(args.seed, model)
    gains, origin = _initial_gains(model, args, seed)
    rng = np.random.default_rng(seed)
    chk = gradient_check(model.plant, gains, model.d, model.alg, dirs=args.dirs,
                         rel_step=args.step, rng=rng)
    rep = {
        "seed": seed,
        "gains_origin": origin,
        "directions": chk.directions,
        "skipped_directions": chk.skipped,
        "step": _num(chk.step),
        "grad_error": _num(chk.grad_error),
        "stationarity_error": _num(chk.stationarity_error),
    }
    worst = max(chk.grad_error, chk.stationarity_error)
    notes = []
    if worst > GRADCHECK_RTOL:
        notes.append(f"finite-difference mismatch {worst:.3e} exceeds {GRADCHECK_RTOL:g}; "
                     f"step {chk.step:.3g} may be too large or too small")
    if chk.skipped:
        notes.append(f"{chk.skipped} of {chk.directions} directions left the stability "
                     "region and were skipped")
    if notes:
        msg = "; ".join(notes)
        warnings.warn(msg, RuntimeWarning)
        rep["warning"] = msg
    rep["status"] = "ok"
    return rep, 0


def cmd_optimize(model, args):
    if not (args.tol > 0 and math.isfinite(args.tol)):
        raise ValidationError(f"must be positive, got {args.tol}", "--tol")
    if args.max_iter < 0:
        raise ValidationError(f"must be nonnegative, got {args.max_iter}", "--max-iter")
    if not (args.rho0 >= 0 and math.isfinite(args.rho0)):
        raise ValidationError(f"must be nonnegative, got {args.rho0}", "--rho0")
    seed = resolve_seed(args.seed, model)
    gains, origin = _initial_gains(model, args, seed)
    opts = OptimizeOptions(tol=args.tol, max_iter=args.max_iter, rho0=args.rho0,
                           margin=model.tolerances["margin"])
    state = solve_stationarity(model.plant, model.alg, gains, model.d, opts)
    if args.log:
        with open(args.log, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_HEADER)
            for r in state.history:
                w.writerow([r.iter] + [repr(float(getattr(r, k))) for k in LOG_HEADER[1:]])
    ctrl = luenberger_controller(model.plant, state.gains, model.d, model.alg)
    rep = {
        "seed": seed,
        "gains_origin": origin,
        "iterations": state.iterations,
        "converged": state.converged,
        "gains": _gains_entry(state.gains),
        "lambda": to_list(state.lam),
        "cost": {"V": _num(state.V), "L": _num(state.lagrangian_value)},
        "norms": {"Rb": _num(np.linalg.norm(state.gradB)), "Re": _num(np.linalg.norm(state.gradE)),
                  "f": _num(np.linalg.norm(state.constraint_residual))},
        "stability": _stability(model.plant, state.gains, model.d, model.alg),
    }
    if args.out:
        dump_json(with_controller(model, ctrl), args.out)
        rep["output"] = str(args.out)
    rep["status"] = "converged" if state.converged else "not_converged"
    return rep, 0 if state.converged else BudgetExhausted.exit_code


COMMANDS = {
    "verify": cmd_verify,
    "synthesize": cmd_synthesize,
    "cost": cmd_cost,
    "gradcheck": cmd_gradcheck,
    "optimize": cmd_optimize,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cqlqg", description="Coherent quantum LQG control: realizability checks, "
        "Luenberger synthesis, cost evaluation and optimization.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help="model JSON file")
    common.add_argument("--report", help="write the JSON run report here (default: stdout)")
    common.add_argument("--seed", type=int, help="random seed (default: model seed, then $CQLQG_SEED, then 0)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--mode", choices=["particular", "around_b", "around_e"],
                        default="particular", help="constructive starting point of the search")
    search.add_argument("--budget", type=int, default=2000, help="search proposals")
    search.add_argument("--margin", type=float, default=1e-3, help="required stability margin")

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("verify", parents=[common], help="check physical realizability")
    p.add_argument("--pr-tol", type=float, help="override the model's PR tolerance")
    p = sub.add_parser("synthesize", parents=[common, search], help="find Luenberger gains")
    p.add_argument("--out", help="write the model with the synthesized controller here")
    sub.add_parser("cost", parents=[common], help="evaluate the mean square cost")
    p = sub.add_parser("gradcheck", parents=[common, search], help="finite-difference check")
    p.add_argument("--dirs", type=int, default=20, help="number of random directions")
    p.add_argument("--step", type=float, default=1e-6,
                   help="relative difference step; the step is STEP * max(1, |gamma|)")
    p = sub.add_parser("optimize", parents=[common, search], help="seek a stationary point")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--rho0", type=float, default=1.0)
    p.add_argument("--log", help="write the iteration log (CSV) here")
    p.add_argument("--out", help="write the model with the optimized controller here")
    return parser


def _emit(report, path):
    import json
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    report = {"command": args.command}
    try:
        model = ingest_model(args.model)
        flags = {k: v for k, v in sorted(vars(args).items())
                 if k not in ("model", "report", "verbose", "command")}
        report["inputs_digest"] = model.digest({"command": args.command, "flags": flags})
        body, code = COMMANDS[args.command](model, args)
        report.update(body)
    except CqlqgError as exc:
        code = exc.exit_code
        report.update({"status": "error", "error": type(exc).__name__, "message": str(exc)})
        print(f"cqlqg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
    report["exit_code"] = code
    report["wall_time"] = round(time.perf_counter() - t0, 6)
    _emit(report, args.report)
    return code


if __name__ == "__main__":
    sys.exit(main())
