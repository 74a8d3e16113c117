import hashlib
import json
import subprocess
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qres.errors import ValidationError
from qres.io import content_hash, decode_instance, decode_witness, dump, encode_instance, encode_witness, load
from qres.models import (Behaviour, DistributedPovm, GeneralisedMeasurementSet, Povm, StandardMeasurementSet,
                         default_tomographic_inputs, embed_standard, make_state)
from qres.robustness import rob_incompat_standard
from qres.sampling import random_povm, random_state
from qres.theorems import noisy_xz

INSTANCES = Path(__file__).resolve().parents[1] / "instances"


def same(a, b):
    return a.shape == b.shape and np.array_equal(a, b)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(2, 3))
def test_measurement_set_round_trip_is_bit_exact(seed, d, n):
    rng = np.random.default_rng(seed)
    m = StandardMeasurementSet([random_povm(d, 2, rng) for _ in range(n)])
    back = decode_instance(json.loads(json.dumps(encode_instance(m))))
    assert same(back.arrays(), m.arrays())


def test_other_instances_round_trip(rng):
    objs = [Povm(random_povm(4, 3, rng), (2, 2)), make_state(random_state(4, rng), (2, 2)),
            Behaviour(np.full((2, 2, 2, 2), 0.25)),
            GeneralisedMeasurementSet(Povm(random_povm(4, 2, rng), (2, 2)), default_tomographic_inputs(2))]
    for obj in objs:
        back = decode_instance(json.loads(json.dumps(encode_instance(obj))))
        assert type(back) is type(obj)
        assert json.dumps(encode_instance(back)) == json.dumps(encode_instance(obj))


def test_distributed_povm_round_trip(tmp_path):
    dp, _ = load(INSTANCES / "xz_bell_distributed.json")
    assert isinstance(dp, DistributedPovm)
    dump(dp, tmp_path / "dp.json")
    again, _ = load(tmp_path / "dp.json")
    assert same(again.arrays(), dp.arrays())


def test_witness_round_trip():
    w = rob_incompat_standard(noisy_xz(1.0)).witness
    back = decode_witness(json.loads(json.dumps(encode_witness(w))))
    assert same(back.operators, np.asarray(w.operators, dtype=complex))
    assert back.certified_value == w.certified_value and back.kind == w.kind


def test_embedded_set_type_is_detected_without_tag():
    data = encode_instance(embed_standard(noisy_xz(1.0)))
    data.pop("type")
    assert isinstance(decode_instance(data), GeneralisedMeasurementSet)


@pytest.mark.parametrize("path", sorted(INSTANCES.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_instances_load(path):
    obj, h = load(path)
    assert obj is not None
    assert h == hashlib.sha1(b"blob %d\0" % path.stat().st_size + path.read_bytes()).hexdigest()


def test_hash_matches_git(tmp_path):
    f = tmp_path / "x.json"
    f.write_bytes(b'{"a": 1}\n')
    out = subprocess.run(["git", "hash-object", str(f)], capture_output=True, text=True)
    if out.returncode != 0:
        pytest.skip("git not available")
    assert content_hash(f.read_bytes()) == out.stdout.strip()


@pytest.mark.parametrize("text", ["{", "[1, 2]", '{"type": "povm"}', '{"type": "teapot"}',
                                  '{"dim": 2, "elements": [[[[1, 0], [0, 1]], "x"]]}', '{"weird": 1}'])
def test_bad_documents_raise_validation_error(tmp_path, text):
    f = tmp_path / "bad.json"
    f.write_text(text)
    with pytest.raises(ValidationError):
        load(f)


def test_declared_dim_must_match():
    data = encode_instance(noisy_xz(1.0))
    data["dim"] = 3
    with pytest.raises(ValidationError):
        decode_instance(data)


def test_missing_file():
    with pytest.raises(ValidationError):
        load("/nonexistent/file.json")
