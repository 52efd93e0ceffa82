"""JSON model documents: schema, parsing into a :class:`ModelSpec`, canonical form.

A document looks like::

    {
      "schema_version": "1.0",
      "tenor": [0.0, 0.5, 1.0, 1.5],
      "initial_curve": [[0.5, 0.99], [1.0, 0.975], [1.5, 0.96]],
      "driver": {"segments": [{"start": 0.0, "end": 1.5, "drift": [0.0],
                               "diffusion": [[1.0]],
                               "atoms": [{"size": [0.5], "intensity": 0.6}]}]},
      "family": {"tag": "lmm", "volatilities": {"flat": [[0.3], [0.3]]}},
      "simulation": {"paths": 100000, "seed": 0}
    }

The affine family takes its driver from the family block
(``b_tilde``, ``beta``, ``alpha``, ``F1``, ``F2``, ``x0``, ``u``).
Serialization emits the canonical form: volatilities as breakpoints and
values, truncation ``identity``, every simulation default filled in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .affine import AffineDriverSpec, build_affine_model
from .core import AtomicJumpMeasure, InitialCurve, LocalCharacteristics, ModelSpec, Segment, TenorStructure
from .drift import VolatilityStructure, build_fpm_model, build_lmm_model

SCHEMA_VERSION = "1.0"

_number = {"type": "number"}
_vector = {"type": "array", "items": _number, "minItems": 1}
_matrix = {"type": "array", "items": _vector, "minItems": 1}
_atom = {
    "type": "object",
    "required": ["size", "intensity"],
    "additionalProperties": False,
    "properties": {"size": {"oneOf": [_number, _vector]}, "intensity": {"type": "number", "minimum": 0}},
}
_atoms = {"type": "array", "items": _atom}
_segment = {
    "type": "object",
    "required": ["start", "end", "diffusion"],
    "additionalProperties": False,
    "properties": {
        "start": _number, "end": _number, "drift": _vector, "diffusion": _matrix, "atoms": _atoms,
    },
}
_volatilities = {
    "type": "object",
    "minProperties": 1,
    "maxProperties": 2,
    "additionalProperties": False,
    "properties": {
        "flat": _matrix,
        "pieces": {
            "type": "array",
            "items": {"type": "array", "items": {
                "type": "object", "required": ["start", "end", "vector"], "additionalProperties": False,
                "properties": {"start": _number, "end": _number, "vector": _vector}}},
        },
        "breaks": _vector,
        "values": {"type": "array", "items": {"type": "array", "items": _vector}},
    },
    "oneOf": [{"required": ["flat"]}, {"required": ["pieces"]}, {"required": ["breaks", "values"]}],
}
_levy_family = {
    "type": "object",
    "required": ["tag", "volatilities"],
    "additionalProperties": False,
    "properties": {
        "tag": {"enum": ["lmm", "fpm"]},
        "volatilities": _volatilities,
        "M": {"type": ["number", "null"]},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
    },
}
_affine_family = {
    "type": "object",
    "required": ["tag", "b_tilde", "beta", "alpha", "u"],
    "additionalProperties": False,
    "properties": {
        "tag": {"const": "affine"},
        "b_tilde": _number, "beta": _number, "alpha": _number,
        "F1": _atoms, "F2": _atoms,
        "x0": _number,
        "u": {"oneOf": [{"const": "calibrate"}, {"type": "array", "items": _number}]},
        "riccati_step": {"type": ["number", "null"], "exclusiveMinimum": 0},
    },
}
_simulation = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "paths": {"type": "integer", "minimum": 1},
        "step": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "checkpoints": {"type": ["array", "null"], "items": _number},
        "strikes": {"type": "array", "items": _number},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "tenor", "initial_curve", "family"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "tenor": {"type": "array", "items": _number, "minItems": 2},
        "accruals": {"type": "array", "items": _number},
        "initial_curve": {"type": "array", "minItems": 1,
                          "items": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}},
        "driver": {
            "type": "object", "required": ["segments"], "additionalProperties": False,
            "properties": {"truncation": {"enum": ["identity", "bounded"]},
                           "segments": {"type": "array", "items": _segment, "minItems": 1}},
        },
        "family": {
            "type": "object", "required": ["tag"],
            "properties": {"tag": {"enum": ["lmm", "fpm", "affine"]}},
            "if": {"properties": {"tag": {"const": "affine"}}},
            "then": _affine_family,
            "else": _levy_family,
        },
        "simulation": _simulation,
    },
    "if": {"properties": {"family": {"properties": {"tag": {"enum": ["lmm", "fpm"]}}}}},
    "then": {"required": ["driver"]},
}

SIMULATION_DEFAULTS = {"paths": 100_000, "step": None, "seed": 0, "workers": 1, "checkpoints": None,
                       "strikes": [0.0]}


class SchemaError(ValueError):
    """The document violates the schema; ``path`` locates the offending field."""

    def __init__(self, message: str, path: str):
        super().__init__(message)
        self.path = path


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def validate_document(doc) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise SchemaError(err.message, _json_path(err.absolute_path))


def load_document(path) -> dict:
    """Read and schema-check a document; malformed JSON is a schema error at ``$``."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"malformed JSON ({exc.msg} at line {exc.lineno})", "$") from exc
    validate_document(doc)
    return doc


@dataclass(frozen=True, eq=False)
class ParsedSpec:
    """A model together with the document-level settings it came with."""

    model: ModelSpec
    simulation: dict = field(default_factory=dict)
    riccati_step: float | None = None


def _atoms_to_measure(atoms, d: int) -> AtomicJumpMeasure:
    if not atoms:
        return AtomicJumpMeasure.empty(d)
    sizes = [np.atleast_1d(np.asarray(a["size"], dtype=float)) for a in atoms]
    return AtomicJumpMeasure(np.vstack(sizes), [a["intensity"] for a in atoms])


def _driver(doc_driver) -> LocalCharacteristics:
    segs = doc_driver["segments"]
    d = len(segs[0]["diffusion"])
    out = []
    for s in segs:
        drift = s.get("drift", [0.0] * d)
        out.append(Segment(float(s["start"]), float(s["end"]), drift, s["diffusion"],
                           _atoms_to_measure(s.get("atoms", []), d)))
    return LocalCharacteristics(d, tuple(out), doc_driver.get("truncation", "identity"))


def _volatility(tenor: TenorStructure, block) -> VolatilityStructure:
    if "flat" in block:
        return VolatilityStructure.flat(tenor, block["flat"])
    if "pieces" in block:
        pieces = [[(p["start"], p["end"], p["vector"]) for p in plist] for plist in block["pieces"]]
        return VolatilityStructure.from_pieces(tenor, pieces)
    return VolatilityStructure(block["breaks"], block["values"])


def document_to_spec(doc: dict) -> ParsedSpec:
    """Build the model; core invariant violations raise :class:`InvariantError`."""
    tenor = TenorStructure(doc["tenor"], doc.get("accruals"))
    curve = InitialCurve.from_map(tenor, {d: p for d, p in doc["initial_curve"]})
    fam = doc["family"]
    riccati_step = None
    if fam["tag"] == "affine":
        driver = AffineDriverSpec(
            fam["b_tilde"], fam["beta"], fam["alpha"],
            _atoms_to_measure(fam.get("F1", []), 1), _atoms_to_measure(fam.get("F2", []), 1),
            fam.get("x0", 1.0))
        riccati_step = fam.get("riccati_step")
        u = None if fam["u"] == "calibrate" else fam["u"]
        model = build_affine_model(curve, driver, u, riccati_step)
    else:
        levy = _driver(doc["driver"])
        vol = _volatility(tenor, fam["volatilities"])
        build = build_lmm_model if fam["tag"] == "lmm" else build_fpm_model
        model = build(curve, levy, vol, fam.get("M"), fam.get("epsilon", 0.1))
    sim = dict(SIMULATION_DEFAULTS)
    sim.update(doc.get("simulation", {}))
    return ParsedSpec(model, sim, riccati_step)


def parse_spec(path) -> ModelSpec:
    """Load, schema-check and build the model in ``path``."""
    return document_to_spec(load_document(path)).model


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def _atoms_doc(measure: AtomicJumpMeasure, scalar: bool = False) -> list:
    out = []
    for y, lam in zip(measure.sizes, measure.intensities):
        out.append({"size": float(y[0]) if scalar else _floats(y), "intensity": float(lam)})
    return out


def spec_to_document(parsed: ParsedSpec) -> dict:
    """Canonical document of a parsed spec."""
    model = parsed.model
    tenor = model.tenor
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tenor": _floats(tenor.dates),
        "accruals": _floats(tenor.accruals),
        "initial_curve": [[float(tenor.date(k)), model.initial_curve.bond_price(k)] for k in tenor.K],
    }
    if model.family == "affine":
        aff = model.affine
        drv = aff.driver
        doc["family"] = {
            "tag": "affine", "b_tilde": float(drv.b_tilde), "beta": float(drv.beta), "alpha": float(drv.alpha),
            "F1": _atoms_doc(drv.jumps_constant, True), "F2": _atoms_doc(drv.jumps_state, True),
            "x0": float(drv.initial_state),
            "u": "calibrate" if aff.calibrated else list(aff.u),
            "riccati_step": parsed.riccati_step,
        }
    else:
        block = model.lmm if model.family == "lmm" else model.fpm
        doc["driver"] = {"truncation": "identity", "segments": [
            {"start": float(s.t_start), "end": float(s.t_end), "drift": _floats(s.drift),
             "diffusion": _floats(s.diffusion), "atoms": _atoms_doc(s.jumps)}
            for s in block.levy.segments]}
        doc["family"] = {
            "tag": model.family,
            "volatilities": {"breaks": _floats(block.volatility.breaks), "values": _floats(block.volatility.values)},
            "M": float(block.bound), "epsilon": float(block.epsilon),
        }
    sim = dict(SIMULATION_DEFAULTS)
    sim.update(parsed.simulation)
    doc["simulation"] = {k: sim[k] for k in SIMULATION_DEFAULTS}
    return doc


def dumps_canonical(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
