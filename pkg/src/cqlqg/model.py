"""JSON model files.

A model file holds the dimensions, the plant (explicit matrices or energy
and coupling matrices), its CCR matrix, cost weights, feedthrough channel
selections and optionally a controller. Matrices are row-major nested
lists. See ``docs/model_schema.md`` for the full layout.
"""
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    BadFeedthrough,
    DimensionMismatch,
    OddChannelCount,
    OddDimension,
    OutputExceedsField,
    ParseError,
    ValidationError,
)
from .quantum import (
    EnergyCouplingParams,
    QuantumController,
    QuantumPlant,
    build_ccr_algebra,
    check_feedthrough,
    derive_ac_from_rbe,
    feedthrough_matrix,
    plant_from_params,
    project_antisymmetric,
    project_symmetric,
)

PLANT_EXPLICIT = ("A", "B", "C", "E")
PLANT_PARAMS = ("R1", "M1", "L1")
CONTROLLER_EXPLICIT = ("a", "c")
CONTROLLER_GAINS = ("R2",)
DEFAULT_TOLERANCES = {"pr": 1e-8, "margin": 1e-9, "cost": 1e-8}


@dataclass(eq=False)
class ModelFile:
    dims: dict
    alg: object
    plant: QuantumPlant
    d: np.ndarray
    controller: Optional[QuantumController] = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: Optional[int] = None
    raw: dict = field(default_factory=dict, repr=False)
    source: Optional[str] = None

    def digest(self, extra=None):
        """sha256 of the canonical JSON of the raw model (plus ``extra``)."""
        payload = {"model": self.raw, "extra": extra or {}}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _matrix(obj, path, shape):
    try:
        M = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("not a numeric matrix", path) from None
    if shape[0] * shape[1] == 0 and M.size == 0:
        return np.zeros(shape)
    if M.ndim != 2 or M.shape != tuple(shape):
        raise DimensionMismatch(f"shape {M.shape}, expected {tuple(shape)}", path)
    if not np.all(np.isfinite(M)):
        raise ValidationError("entries must be finite", path)
    return M


def _section(raw, key, path=None, required=True):
    path = path or key
    if key not in raw:
        if required:
            raise ValidationError("missing", path)
        return None
    sec = raw[key]
    if not isinstance(sec, dict):
        raise ValidationError("expected an object", path)
    return sec


def _dims(raw):
    dims = _section(raw, "dims")
    out = {}
    for k in ("n", "m1", "m2", "p1", "p2", "r"):
        v = dims.get(k)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValidationError("expected an integer", f"dims.{k}")
        if v < 0 or (v == 0 and k != "r"):
            raise ValidationError("must be positive", f"dims.{k}")
        out[k] = v
    if out["n"] % 2:
        raise OddDimension(f"state dimension {out['n']} is odd", "dims.n")
    for k in ("m1", "m2", "p1", "p2"):
        if out[k] % 2:
            raise OddChannelCount(f"channel count {out[k]} is odd", f"dims.{k}")
    if out["p1"] > out["m1"]:
        raise OutputExceedsField("p1 exceeds m1", "dims.p1")
    if out["p2"] > out["m2"]:
        raise OutputExceedsField("p2 exceeds m2", "dims.p2")
    return out


def _exclusive(sec, a, b, path):
    has_a = [k for k in a if k in sec]
    has_b = [k for k in b if k in sec]
    if has_a and has_b:
        raise ValidationError(f"keys {has_a} and {has_b} are mutually exclusive", path)
    if not has_a and not has_b:
        raise ValidationError(f"needs either {list(a)} or {list(b)}", path)
    missing = [k for k in (a if has_a else b) if k not in sec]
    if missing:
        raise ValidationError(f"missing keys {missing}", path)
    return bool(has_a)


def _feedthrough(raw, key, p, m, J):
    sec = raw.get("feedthrough", {})
    if not isinstance(sec, dict):
        raise ValidationError("expected an object", "feedthrough")
    pairs = sec.get(key)
    try:
        M = feedthrough_matrix(p, m, pairs)
    except BadFeedthrough as exc:
        raise BadFeedthrough(str(exc), f"feedthrough.{key}") from None
    except TypeError:
        raise ValidationError("expected a list of channel pair indices", f"feedthrough.{key}") from None
    return check_feedthrough(M, J, f"feedthrough.{key}")


def _tolerances(raw):
    tol = dict(DEFAULT_TOLERANCES)
    sec = raw.get("tolerances", {})
    if not isinstance(sec, dict):
        raise ValidationError("expected an object", "tolerances")
    for k, v in sec.items():
        if k not in tol:
            raise ValidationError("unknown tolerance", f"tolerances.{k}")
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
            raise ValidationError("must be a nonnegative number", f"tolerances.{k}")
        tol[k] = float(v)
    return tol


def _ccr(obj, path, n):
    Theta = _matrix(obj, path, (n, n))
    scale = max(1.0, np.linalg.norm(Theta))
    if np.linalg.norm(Theta + Theta.T) > 1e-6 * scale:
        raise ValidationError("CCR matrix is not antisymmetric", path)
    Theta = project_antisymmetric(Theta, path)
    if np.linalg.cond(Theta) > 1e12:
        raise ValidationError("CCR matrix is singular", path)
    return Theta


def parse_model(raw, source=None):
    """Validate a decoded model dictionary."""
    if not isinstance(raw, dict):
        raise ParseError("top level must be an object", source)
    dims = _dims(raw)
    n, m1, m2, p1, p2, r = (dims[k] for k in ("n", "m1", "m2", "p1", "p2", "r"))
    alg = build_ccr_algebra(m1, m2, p1, p2)
    D = _feedthrough(raw, "D", p1, m1, alg.J1)
    d = _feedthrough(raw, "d", p2, m2, alg.J2)
    Theta1 = _ccr(raw.get("Theta1"), "Theta1", n)

    w = raw.get("weights", {})
    if not isinstance(w, dict):
        raise ValidationError("expected an object", "weights")
    F = _matrix(w.get("F", np.zeros((r, n))), "weights.F", (r, n))
    G = _matrix(w.get("G", np.zeros((r, p2))), "weights.G", (r, p2))

    psec = _section(raw, "plant")
    if _exclusive(psec, PLANT_EXPLICIT, PLANT_PARAMS, "plant"):
        plant = QuantumPlant(
            _matrix(psec["A"], "plant.A", (n, n)), _matrix(psec["B"], "plant.B", (n, m1)),
            _matrix(psec["C"], "plant.C", (p1, n)), D, _matrix(psec["E"], "plant.E", (n, p2)),
            Theta1, F, G)
    else:
        params = EnergyCouplingParams(
            project_symmetric(_matrix(psec["R1"], "plant.R1", (n, n)), "plant.R1"),
            _matrix(psec["M1"], "plant.M1", (m1, n)), _matrix(psec["L1"], "plant.L1", (p2, n)))
        plant = plant_from_params(params, Theta1, D, alg, F, G)

    controller = None
    csec = _section(raw, "controller", required=False)
    if csec is not None:
        if "Theta2" not in csec:
            raise ValidationError("missing", "controller.Theta2")
        Theta2 = _ccr(csec["Theta2"], "controller.Theta2", n)
        has_explicit = any(k in csec for k in CONTROLLER_EXPLICIT)
        has_params = any(k in csec for k in CONTROLLER_GAINS)
        if has_explicit and has_params:
            raise ValidationError("explicit (a, c) and energy matrix R2 are mutually exclusive",
                                  "controller")
        for k in ("b", "e") + (CONTROLLER_EXPLICIT if has_explicit else CONTROLLER_GAINS):
            if k not in csec:
                raise ValidationError("missing", f"controller.{k}")
        b = _matrix(csec["b"], "controller.b", (n, m2))
        e = _matrix(csec["e"], "controller.e", (n, p1))
        if has_explicit:
            a = _matrix(csec["a"], "controller.a", (n, n))
            c = _matrix(csec["c"], "controller.c", (p2, n))
        else:
            R2 = project_symmetric(_matrix(csec["R2"], "controller.R2", (n, n)), "controller.R2")
            a, c = derive_ac_from_rbe(R2, b, e, Theta2, d, alg)
        controller = QuantumController(a, b, c, d, e, Theta2)

    seed = raw.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise ValidationError("expected a nonnegative integer", "seed")
    return ModelFile(dims, alg, plant, d, controller, _tolerances(raw), seed, raw, source)


def ingest_model(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read model file: {exc.strerror}", str(path)) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                         str(path)) from None
    return parse_model(raw, str(path))


def to_list(M):
    return np.asarray(M, dtype=float).tolist()


def controller_section(ctrl):
    return {"a": to_list(ctrl.a), "b": to_list(ctrl.b), "c": to_list(ctrl.c),
            "e": to_list(ctrl.e), "Theta2": to_list(ctrl.Theta2)}


def with_controller(model, ctrl):
    """Raw model dictionary with its controller replaced by ``ctrl``."""
    raw = dict(model.raw)
    raw["controller"] = controller_section(ctrl)
    return raw


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


__all__ = [
    "ModelFile", "parse_model", "ingest_model", "controller_section", "with_controller",
    "dump_json", "to_list", "DEFAULT_TOLERANCES",
]
