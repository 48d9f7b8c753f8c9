"""Response-distance statistics: Euclidean distance, loose Hamming distance,
inter/intra-device Hamming statistics and uniqueness."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .puf_device import Challenge, IntensityHistogram, PufDevice, classical_response

DEFAULT_TOLERANCE = 0.01
DEFAULT_SHOTS = 10_000


def _bins(h) -> np.ndarray:
    if isinstance(h, IntensityHistogram):
        return h.bins
    return np.asarray(h, dtype=float).reshape(-1)


def _pair(h1, h2) -> tuple[np.ndarray, np.ndarray]:
    a, b = _bins(h1), _bins(h2)
    if a.size != b.size:
        raise InvalidArgumentError(f"bin count mismatch: {a.size} vs {b.size}")
    return a, b


def euclidean_distance(h1, h2) -> float:
    a, b = _pair(h1, h2)
    return float(np.sqrt(np.sum((a - b) ** 2)))


def binarize(h) -> np.ndarray:
    """Bit ``j`` is 1 iff bin ``j`` is at or above the median bin."""
    b = _bins(h)
    return (b >= np.median(b)).astype(np.uint8)


def loose_hamming(h1, h2, tolerance: float = DEFAULT_TOLERANCE) -> float:
    """Fraction of bins whose bits differ *and* whose values differ by more than ``tolerance``.

    At ``tolerance = 0`` this is the plain fractional Hamming distance of
    the binarised responses (bits can only differ where values differ).
    """
    if tolerance < 0:
        raise InvalidArgumentError("tolerance must be non-negative")
    a, b = _pair(h1, h2)
    differ = binarize(a) != binarize(b)
    return float(np.mean(differ & (np.abs(a - b) > tolerance)))


@dataclass(frozen=True)
class DistanceReport:
    metric: str
    values: tuple = field(default=())
    pair_ids: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.pair_ids:
            object.__setattr__(self, "pair_ids", tuple(str(k) for k in range(len(self.values))))

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.values)) if self.values else float("nan")

    def csv_rows(self) -> list[tuple[str, str, float]]:
        return [(self.metric, pid, v) for pid, v in zip(self.pair_ids, self.values)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "pair_id", "value"])
        writer.writerows((m, p, repr(v)) for m, p, v in self.csv_rows())
        return buf.getvalue()


def _seed(seeds, *counters):
    return [int(seeds), *counters]


def hd_inter(
    devices: Sequence[PufDevice],
    challenge: Challenge,
    repeats: int = 1,
    seeds: int = 0,
    shots: int | None = DEFAULT_SHOTS,
    tolerance: float = DEFAULT_TOLERANCE,
) -> DistanceReport:
    """Loose Hamming distance over all device pairs for one challenge."""
    if len(devices) < 2:
        raise InvalidArgumentError("hd_inter needs at least two devices")
    if repeats < 1:
        raise InvalidArgumentError("repeats must be >= 1")
    values, ids = [], []
    for r in range(repeats):
        hists = [
            classical_response(dev, challenge, shots, _seed(seeds, r, k))
            for k, dev in enumerate(devices)
        ]
        for i, j in itertools.combinations(range(len(devices)), 2):
            values.append(loose_hamming(hists[i], hists[j], tolerance))
            ids.append(f"{r}:{i}-{j}")
    return DistanceReport("hd_inter", tuple(values), tuple(ids))


def hd_intra(
    device: PufDevice,
    challenge: Challenge,
    repeats: int = 10,
    seeds: int = 0,
    shots: int | None = DEFAULT_SHOTS,
    tolerance: float = DEFAULT_TOLERANCE,
) -> DistanceReport:
    """Loose Hamming distance across repeated noisy readouts of one device."""
    if repeats < 2:
        raise InvalidArgumentError("hd_intra needs at least two repeats")
    hists = [classical_response(device, challenge, shots, _seed(seeds, r)) for r in range(repeats)]
    values, ids = [], []
    for i, j in itertools.combinations(range(repeats), 2):
        values.append(loose_hamming(hists[i], hists[j], tolerance))
        ids.append(f"{i}-{j}")
    return DistanceReport("hd_intra", tuple(values), tuple(ids))


def _paired_histograms(db_list):
    if len(db_list) < 2:
        raise InvalidArgumentError("need at least two enrollment databases")
    ordered = [[db.records[cid].expected_histogram for cid in sorted(db.records)] for db in db_list]
    n = min(len(h) for h in ordered)
    return ordered, n


def uniqueness_report(db_list, tolerance: float = DEFAULT_TOLERANCE) -> DistanceReport:
    ordered, n = _paired_histograms(db_list)
    values, ids = [], []
    for i, j in itertools.combinations(range(len(ordered)), 2):
        for k in range(n):
            values.append(loose_hamming(ordered[i][k], ordered[j][k], tolerance))
            ids.append(f"{i}-{j}:{k}")
    return DistanceReport("uniqueness", tuple(values), tuple(ids))


def uniqueness(db_list, tolerance: float = DEFAULT_TOLERANCE) -> float:
    """Mean pairwise loose Hamming distance over same-index enrolled CRPs."""
    if not db_list:
        raise InvalidArgumentError("uniqueness needs at least one database")
    return uniqueness_report(db_list, tolerance).mean


def euclidean_report(db_list) -> DistanceReport:
    ordered, n = _paired_histograms(db_list)
    values, ids = [], []
    for i, j in itertools.combinations(range(len(ordered)), 2):
        for k in range(n):
            values.append(euclidean_distance(ordered[i][k], ordered[j][k]))
            ids.append(f"{i}-{j}:{k}")
    return DistanceReport("euclidean", tuple(values), tuple(ids))
