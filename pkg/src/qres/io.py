"""JSON encoding of operators, instances, witnesses, decompositions and reports.

Complex entries are [re, im] pairs, operators are nested row-major lists and
floats go through ``repr`` so a load/store round trip is bit-exact.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .models import (Behaviour, DistributedPovm, GeneralisedMeasurementSet, Povm, QuantumInputSet,
                     StandardMeasurementSet, make_state)
from .operators import HermitianOperator
from .robustness.results import Witness


def encode_array(a):
    """Nested lists; complex arrays get [re, im] leaves, real arrays plain floats."""
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return np.stack([a.real, a.imag], axis=-1).tolist()
    if a.dtype == bool:
        return a.tolist()
    return a.astype(float).tolist()


def decode_complex(data, where="operator") -> np.ndarray:
    """Inverse of :func:`encode_array` for complex data; plain real numbers are accepted too."""
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: not a rectangular numeric array ({exc})") from exc
    if arr.ndim >= 3 and arr.shape[-1] == 2:
        # assign parts separately; re + 1j*im would turn a -0.0 imaginary part into 0.0
        out = np.empty(arr.shape[:-1], dtype=complex)
        out.real, out.imag = arr[..., 0], arr[..., 1]
        return out
    return arr.astype(complex)


def _operator(data, where):
    m = decode_complex(data, where)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{where}: expected a square matrix, got shape {m.shape}")
    return m


def _ops(data, depth, where):
    if depth == 0:
        return _operator(data, where)
    if not isinstance(data, list):
        raise ValidationError(f"{where}: expected a list")
    return [_ops(d, depth - 1, f"{where}[{k}]") for k, d in enumerate(data)]


# ---------------------------------------------------------------------------
# instances

def encode_measurement_set(m: StandardMeasurementSet) -> dict:
    return {"type": "measurement-set", "dim": m.dim,
            "elements": [[encode_array(e.matrix) for e in p.elements] for p in m.povms]}


def encode_state(rho: HermitianOperator) -> dict:
    return {"type": "state", "dims": list(rho.dims), "matrix": encode_array(rho.matrix)}


def encode_povm(p: Povm) -> dict:
    return {"type": "povm", "dims": list(p.dims), "elements": [encode_array(e.matrix) for e in p.elements]}


def encode_distributed(d: DistributedPovm) -> dict:
    return {"type": "distributed-povm", "dims": list(d.dims), "elements": encode_array(d.arrays())}


def encode_inputs(inp: QuantumInputSet) -> list:
    return [encode_array(s.matrix) for s in inp.states]


def encode_behaviour(b: Behaviour) -> dict:
    out = {"type": "behaviour", "table": encode_array(b.table)}
    if b.inputs_a is not None:
        out["inputs_a"] = encode_inputs(b.inputs_a)
    if b.inputs_b is not None:
        out["inputs_b"] = encode_inputs(b.inputs_b)
    return out


def encode_generalised(g: GeneralisedMeasurementSet) -> dict:
    return {"type": "generalised-set", "parent": encode_povm(g.parent), "inputs": encode_inputs(g.inputs)}


def decode_instance(data):
    """Build the model object described by a JSON document (type tag or key shape)."""
    if not isinstance(data, dict):
        raise ValidationError("instance file must hold a JSON object")
    kind = data.get("type") or _guess_type(data)
    try:
        if kind == "measurement-set":
            rows = _ops(data["elements"], 2, "elements")
            m = StandardMeasurementSet(rows)
            if "dim" in data and int(data["dim"]) != m.dim:
                raise ValidationError(f"declared dim {data['dim']} but operators are {m.dim}-dimensional")
            return m
        if kind == "state":
            return make_state(_operator(data["matrix"], "matrix"), tuple(int(d) for d in data["dims"]))
        if kind == "povm":
            return Povm(_ops(data["elements"], 1, "elements"), dims=tuple(int(d) for d in data["dims"]))
        if kind == "distributed-povm":
            return DistributedPovm(_ops(data["elements"], 2, "elements"), tuple(int(d) for d in data["dims"]))
        if kind == "behaviour":
            table = np.asarray(data["table"], dtype=float)
            ia = QuantumInputSet(_ops(data["inputs_a"], 1, "inputs_a")) if "inputs_a" in data else None
            ib = QuantumInputSet(_ops(data["inputs_b"], 1, "inputs_b")) if "inputs_b" in data else None
            return Behaviour(table, ia, ib)
        if kind == "generalised-set":
            parent = decode_instance(dict(data["parent"], type="povm"))
            return GeneralisedMeasurementSet(parent, QuantumInputSet(_ops(data["inputs"], 1, "inputs")))
        if kind == "witness":
            return decode_witness(data)
    except KeyError as exc:
        raise ValidationError(f"{kind} file is missing the field {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed {kind} file: {exc}") from exc
    raise ValidationError(f"unknown instance type {kind!r}")


def _guess_type(data):
    if "dim" in data and "elements" in data:
        return "measurement-set"
    if "matrix" in data:
        return "state"
    if "table" in data:
        return "behaviour"
    if "parent" in data:
        return "generalised-set"
    if "operators" in data and "kind" in data:
        return "witness"
    if "elements" in data and "dims" in data:
        depth = 0
        x = data["elements"]
        while isinstance(x, list) and x:
            depth, x = depth + 1, x[0]
        return "distributed-povm" if depth >= 5 else "povm"
    raise ValidationError("cannot tell what kind of instance this file describes")


def encode_instance(obj) -> dict:
    for cls, fn in ((StandardMeasurementSet, encode_measurement_set), (DistributedPovm, encode_distributed),
                    (Povm, encode_povm), (Behaviour, encode_behaviour), (GeneralisedMeasurementSet, encode_generalised),
                    (HermitianOperator, encode_state), (Witness, encode_witness)):
        if isinstance(obj, cls):
            return fn(obj)
    raise TypeError(f"no JSON encoding for {type(obj).__name__}")


# ---------------------------------------------------------------------------
# certificates

def _plain(v):
    """JSON-safe copy of evidence/diagnostic values."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return encode_array(v)
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else repr(f)
    if isinstance(v, complex):
        return [v.real, v.imag]
    if v is None or isinstance(v, (str, int)):
        return v
    return repr(v)


def encode_witness(w: Witness) -> dict:
    # always complex so that decoding never mistakes a trailing axis of length 2 for [re, im]
    return {"type": "witness", "kind": w.kind, "dims": list(w.dims),
            "operators": encode_array(np.asarray(w.operators, dtype=complex)),
            "normalisation": {k: encode_array(np.asarray(v, dtype=complex)) for k, v in w.normalisation.items()},
            "certified_value": _plain(w.certified_value), "valid": w.valid, "evidence": _plain(w.evidence)}


def decode_witness(data) -> Witness:
    try:
        ops = decode_complex(data["operators"], "operators")
        norm = {k: decode_complex(v, k) for k, v in data.get("normalisation", {}).items()}
        stored = data.get("certified_value")
        stored = float(stored) if stored is not None else float("nan")
        return Witness(str(data["kind"]), ops, tuple(int(d) for d in data["dims"]), norm, stored,
                       dict(data.get("evidence", {})))
    except KeyError as exc:
        raise ValidationError(f"witness file is missing the field {exc}") from exc


def encode_decomposition(dec: dict) -> dict:
    return {"type": "decomposition", "parts": _plain(dec)}


# ---------------------------------------------------------------------------
# files

def canonical(obj, compact=False) -> str:
    if compact:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False)


def content_hash(raw: bytes) -> str:
    """Git blob hash of the bytes."""
    return hashlib.sha1(b"blob %d\0" % len(raw) + raw).hexdigest()


def read_json(path):
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(raw), content_hash(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc


def load(path):
    """Load an instance or witness file; returns (object, content hash)."""
    data, h = read_json(path)
    return decode_instance(data), h


def dump(obj, path):
    data = obj if isinstance(obj, dict) else encode_instance(obj)
    Path(path).write_text(canonical(data, compact=True) + "\n")
