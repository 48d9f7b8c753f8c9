import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mzipuf.enrollment import enroll
from mzipuf.errors import InvalidArgumentError
from mzipuf.metrics import (
    DistanceReport,
    binarize,
    euclidean_distance,
    euclidean_report,
    hd_inter,
    hd_intra,
    loose_hamming,
    uniqueness,
    uniqueness_report,
)
from mzipuf.photonic_core import MeshTopology
from mzipuf.puf_device import IntensityHistogram, classical_response, new_device, random_challenges

TOP8 = MeshTopology.triangular(8)

hist8 = st.lists(st.floats(0, 1, allow_nan=False), min_size=8, max_size=8).filter(lambda v: sum(v) > 0)


def _norm(v):
    v = np.asarray(v, dtype=float)
    return v / v.sum()


def test_euclidean_examples():
    a = np.eye(8)[0]
    b = np.eye(8)[1]
    assert euclidean_distance(a, a) == 0
    assert euclidean_distance(a, b) == pytest.approx(np.sqrt(2))
    with pytest.raises(InvalidArgumentError):
        euclidean_distance(a, np.ones(7))


@given(hist8, hist8)
def test_euclidean_symmetric(a, b):
    assert euclidean_distance(a, b) == euclidean_distance(b, a)


def test_binarize_tie_rule_and_spike():
    assert binarize(np.full(8, 1 / 8)).tolist() == [1] * 8
    # a spike over zeros: every bin equals the median zero, ties go to 1
    assert binarize(np.eye(8)[3]).tolist() == [1] * 8
    spike = np.array([0.9, 0.01, 0.02, 0.03, 0.01, 0.02, 0.005, 0.005])
    bits = binarize(spike)
    assert bits[0] == 1 and bits.sum() == 4


@given(hist8, st.floats(0.1, 10))
def test_binarize_scale_invariant(v, scale):
    v = np.asarray(v)
    assert np.array_equal(binarize(v), binarize(v * scale))


@given(hist8, hist8)
def test_loose_hamming_bounds_and_reduction(a, b):
    a, b = _norm(a), _norm(b)
    plain = np.mean(binarize(a) != binarize(b))
    assert loose_hamming(a, b, 0.0) == pytest.approx(plain)
    assert 0 <= loose_hamming(a, b, 0.05) <= loose_hamming(a, b, 0.0) <= 1
    assert loose_hamming(a, a) == 0


def test_loose_hamming_validation():
    with pytest.raises(InvalidArgumentError):
        loose_hamming(np.ones(8), np.ones(8), -0.1)
    with pytest.raises(InvalidArgumentError):
        loose_hamming(np.ones(8), np.ones(4))


def test_loose_close_to_plain_for_random_devices():
    ch = random_challenges(TOP8, 1, 3)[0]
    hists = [classical_response(new_device(TOP8, s), ch, 10000, s) for s in range(12)]
    loose, plain = [], []
    for i in range(12):
        for j in range(i + 1, 12):
            loose.append(loose_hamming(hists[i], hists[j], 0.01))
            plain.append(loose_hamming(hists[i], hists[j], 0.0))
    assert abs(np.mean(loose) - np.mean(plain)) <= 0.05


def test_distance_report_summary_and_csv():
    rep = DistanceReport("hd_inter", (0.1, 0.3, 0.2))
    assert rep.mean == pytest.approx(0.2)
    assert min(rep.values) <= rep.mean <= max(rep.values)
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["metric", "pair_id", "value"]
    assert len(rows) == 4 and float(rows[2][2]) == 0.3


def test_hd_inter_identical_devices_zero():
    ch = random_challenges(TOP8, 1, 3)[0]
    devs = [new_device(TOP8, 4, noise_sigma=0.0)] * 3
    rep = hd_inter(devs, ch, repeats=2, shots=None)
    assert rep.mean == 0 and len(rep.values) == 6
    with pytest.raises(InvalidArgumentError):
        hd_inter(devs[:1], ch)


def test_hd_intra_noise_levels():
    ch = random_challenges(TOP8, 1, 3)[0]
    quiet = hd_intra(new_device(TOP8, 4, noise_sigma=0.0), ch, repeats=5, shots=None)
    assert quiet.mean == 0
    noisy = hd_intra(new_device(TOP8, 4), ch, repeats=100)
    assert noisy.mean < 0.1
    with pytest.raises(InvalidArgumentError):
        hd_intra(new_device(TOP8, 4), ch, repeats=1)


def test_intra_below_inter():
    ch = random_challenges(TOP8, 1, 3)[0]
    devs = [new_device(TOP8, s) for s in range(10)]
    inter = hd_inter(devs, ch).mean
    intra = np.mean([hd_intra(d, ch, repeats=5).mean for d in devs])
    assert intra < inter


def test_uniqueness_over_databases():
    chs = random_challenges(TOP8, 4, 2)
    dbs = [enroll(new_device(TOP8, s), chs, 10000, s) for s in range(4)]
    rep = uniqueness_report(dbs)
    assert len(rep.values) == 6 * 4
    assert uniqueness(dbs) == pytest.approx(rep.mean)
    assert len(euclidean_report(dbs).values) == 24
    same = enroll(new_device(TOP8, 0, noise_sigma=0.0), chs, None)
    assert uniqueness([same, same]) == 0
    with pytest.raises(InvalidArgumentError):
        uniqueness([])
    with pytest.raises(InvalidArgumentError):
        uniqueness([same])


def test_histogram_objects_accepted():
    h = IntensityHistogram(_norm(np.arange(1, 9)))
    assert euclidean_distance(h, h.bins) == 0
