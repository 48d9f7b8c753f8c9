import itertools
import json
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mzipuf.enrollment import (
    EnrollmentDb,
    catalan,
    crp_capacity,
    dumps_db,
    enroll,
    load_db,
    loads_db,
    save_db,
)
from mzipuf.errors import InvalidArgumentError, NotEnrolledError, ParseError, UnsupportedVersionError
from mzipuf.metrics import euclidean_distance
from mzipuf.photonic_core import MeshTopology
from mzipuf.puf_device import classical_response, ideal_device, new_device, random_challenges

from oracles import catalan_convolution

TOP4 = MeshTopology.triangular(4)
TOP8 = MeshTopology.triangular(8)


def _db(n=4, seed=1, top=TOP8, shots=1000):
    return enroll(new_device(top, seed), random_challenges(top, n, seed), shots, seed)


def test_catalan_known_values():
    assert [catalan(n) for n in range(5)] == [1, 1, 2, 5, 14]
    assert catalan(10) == 16796
    assert catalan(30) == 3814986502092304
    with pytest.raises(InvalidArgumentError):
        catalan(-1)


def test_catalan_matches_convolution_oracle():
    assert [catalan(n) for n in range(31)] == catalan_convolution(30)


@settings(max_examples=20)
@given(st.integers(0, 400))
def test_catalan_closed_form(n):
    from math import factorial

    assert catalan(n) == factorial(2 * n) // (factorial(n + 1) * factorial(n))


def test_catalan_large_is_exact():
    c = catalan(5000)
    assert c.bit_length() > 9000
    assert c * 5001 == catalan(4999) * 2 * 9999


def test_crp_capacity_constants():
    small = crp_capacity("small_device")
    full = crp_capacity("full_device")
    assert small.value == 119000
    assert full.value == 685 * 10**33
    assert "1.19e5" in small.provenance and "6.85e35" in full.provenance
    assert crp_capacity(4).value == 14
    with pytest.raises(InvalidArgumentError):
        crp_capacity("medium_device")


def test_single_record_lookup():
    dev = new_device(TOP4, 3)
    ch = random_challenges(TOP4, 1, 2)[0]
    db = enroll(dev, [ch], 100)
    assert db.challenge_ids == [ch.challenge_id]
    assert db.record(ch.challenge_id).challenge == ch
    with pytest.raises(NotEnrolledError, match="not enrolled"):
        db.record(99)


def test_ideal_device_records_unit_weights():
    db = enroll(ideal_device(TOP8), random_challenges(TOP8, 5, 1), 100)
    for rec in db.records.values():
        assert rec.weights.omega_p == pytest.approx(1.0, abs=1e-12)
        assert rec.weights.omega_n == pytest.approx(1.0, abs=1e-12)


def test_enroll_rejects_duplicates_and_empty():
    ch = random_challenges(TOP4, 1, 2)
    with pytest.raises(InvalidArgumentError):
        enroll(new_device(TOP4, 1), ch + ch, 10)
    with pytest.raises(InvalidArgumentError):
        enroll(new_device(TOP4, 1), [], 10)


def test_histograms_pairwise_distinct():
    db = enroll(new_device(TOP8, 5), random_challenges(TOP8, 64, 3), 10000)
    hists = [db.records[c].expected_histogram for c in db.challenge_ids]
    for a, b in itertools.combinations(hists, 2):
        assert euclidean_distance(a, b) > 0


def test_histogram_consistent_with_stored_unitary():
    shots = 20000
    db = enroll(new_device(TOP8, 5, noise_sigma=0.0), random_challenges(TOP8, 8, 3), shots)
    for rec in db.records.values():
        x = rec.challenge.input_vector(8) * db.input_coupling
        p = np.abs(rec.expected_unitary @ x) ** 2
        p = p / p.sum()
        sigma = np.sqrt(p * (1 - p) / shots)
        assert np.all(np.abs(rec.expected_histogram.bins - p) <= 3 * sigma + 1e-12)


def test_enrollment_is_deterministic():
    assert dumps_db(_db()) == dumps_db(_db())
    assert dumps_db(_db()) != dumps_db(_db(seed=2))


def test_round_trip_is_bit_exact(tmp_path):
    db = _db(n=6)
    path = tmp_path / "db.jsonl"
    save_db(db, path)
    back = load_db(path)
    assert back == db
    for cid in db.challenge_ids:
        assert np.array_equal(back.record(cid).expected_unitary, db.record(cid).expected_unitary)
    assert back.crp_capacity_note == catalan(TOP8.n_mzis)
    assert path.read_text() == dumps_db(back)


def test_round_trip_1000_records_under_one_second(tmp_path):
    db = enroll(new_device(TOP4, 1), random_challenges(TOP4, 1000, 2), 100)
    path = tmp_path / "big.jsonl"
    t = time.perf_counter()
    save_db(db, path)
    back = load_db(path)
    assert time.perf_counter() - t < 1.0
    assert len(back.records) == 1000


def test_truncated_file_is_parse_error():
    text = dumps_db(_db(n=3))
    lines = text.splitlines(keepends=True)
    with pytest.raises(ParseError, match="record_count"):
        loads_db("".join(lines[:-1]))
    with pytest.raises(ParseError, match="line 4"):
        loads_db(text[:-40])


def test_malformed_fields_report_line_and_field():
    text = dumps_db(_db(n=2))
    lines = text.splitlines()
    rec = json.loads(lines[2])
    del rec["weights"]["omega_p"]
    lines[2] = json.dumps(rec)
    with pytest.raises(ParseError) as err:
        loads_db("\n".join(lines) + "\n")
    assert err.value.line == 3 and err.value.field == "weights.omega_p"
    with pytest.raises(ParseError):
        loads_db("")
    with pytest.raises(ParseError, match="not an enrollment file"):
        loads_db(json.dumps({"format": "other"}) + "\n")


def test_unknown_version_rejected():
    lines = dumps_db(_db(n=1)).splitlines()
    header = json.loads(lines[0])
    header["format_version"] = 99
    lines[0] = json.dumps(header)
    with pytest.raises(UnsupportedVersionError):
        loads_db("\n".join(lines))


def test_atomic_save_leaves_no_temp_files(tmp_path):
    save_db(_db(n=1), tmp_path / "a.jsonl")
    assert [p.name for p in tmp_path.iterdir()] == ["a.jsonl"]


def test_db_validation():
    db = _db(n=2)
    with pytest.raises(InvalidArgumentError):
        EnrollmentDb("x", TOP8, {}, db.input_coupling)
    rec = db.record(db.challenge_ids[0])
    with pytest.raises(InvalidArgumentError):
        EnrollmentDb("x", TOP8, {12345: rec}, db.input_coupling)


def test_response_operator_includes_coupling():
    dev = new_device(TOP8, 4, noise_sigma=0.0)
    db = enroll(dev, random_challenges(TOP8, 1, 4), None)
    cid = db.challenge_ids[0]
    op = db.response_operator(cid)
    assert np.allclose(op, db.record(cid).expected_unitary @ np.diag(dev.input_coupling))
    assert db.record(cid).expected_histogram == classical_response(dev, db.record(cid).challenge, None, [0, cid])
