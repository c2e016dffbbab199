"""Sampled per-column histograms and selectivity estimation.

Histograms are equi-width over the sampled min/max, built at ingest by
fixed-stride sampling: stride = ceil(1 / sample_rate), phase = seed % stride.
With the default seed the sample has exactly ceil(sample_rate * rows) rows.

The distinct count uses the first-order jackknife estimator
``d + f1 * (1/q - 1)`` where ``d`` is the sampled distinct count, ``f1`` the
number of sampled values seen exactly once, and ``q`` the realized sampling
fraction.  A constant column therefore estimates exactly 1 regardless of
rate, and an all-distinct column scales up to the full row count.

Range estimates assume values are uniform within each bin; estimates are
fractions of all rows, so the non-null share ``1 - null_fraction`` is already
folded in.  Point (equality) predicates use the classic
``(1 - null_fraction) / distinct`` rule.  Conjunctions multiply per-column
selectivities under the documented independence assumption.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .columnar import Table
from .errors import CorruptFrame, UnsupportedColumnType

DEFAULT_SAMPLE_RATE = 0.01  # inside the 0.5%..5% band
DEFAULT_BINS = 64

NEG_INF = float("-inf")
POS_INF = float("inf")


@dataclass(frozen=True)
class Histogram:
    column: str
    bins: int
    lo: float
    hi: float
    counts: tuple[int, ...]
    sampled_rows: int
    total_rows: int
    null_fraction: float
    distinct_estimate: float
    sample_rate: float
    seed: int

    @property
    def nonnull_sampled(self) -> int:
        return sum(self.counts)


def build_histogram(table: Table, column: str, sample_rate: float = DEFAULT_SAMPLE_RATE,
                    bins: int = DEFAULT_BINS, seed: int = 0) -> Histogram:
    """Equi-width histogram over a fixed-stride sample of one column."""
    if not (0 < sample_rate <= 1):
        raise ValueError(f"sample_rate must be in (0, 1], got {sample_rate}")
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    f = table.schema.field(column)
    if not f.dtype.is_numeric_scalar:
        raise UnsupportedColumnType(
            f"no histogram for column {column!r} of type {f.dtype.value}")

    total_rows = table.num_rows
    stride = math.ceil(1 / sample_rate)
    phase = seed % stride

    values = []
    nulls = 0
    sampled = 0
    offset = 0  # global index of first row in current batch
    next_idx = phase
    for batch in table.batches:
        col = batch.column(column)
        end = offset + batch.row_count
        idx = np.arange(next_idx - offset, batch.row_count, stride)
        idx = idx[idx >= 0]
        if len(idx):
            sampled += len(idx)
            valid = col.validity[idx]
            nulls += int(len(idx) - np.count_nonzero(valid))
            picked = col.values[idx][valid]
            if len(picked):
                values.append(picked)
            next_idx = offset + int(idx[-1]) + stride
        offset = end
    sample = np.concatenate(values) if values else np.empty(0)

    if len(sample) == 0:
        return Histogram(column, bins, 0.0, 0.0, tuple([0] * bins), sampled,
                         total_rows, (nulls / sampled) if sampled else 0.0,
                         0.0, sample_rate, seed)

    lo = float(sample.min())
    hi = float(sample.max())
    if lo == hi:
        counts = [0] * bins
        counts[0] = len(sample)
    else:
        counts = np.histogram(sample, bins=bins, range=(lo, hi))[0].tolist()

    uniq, freq = np.unique(sample, return_counts=True)
    d = len(uniq)
    f1 = int(np.count_nonzero(freq == 1))
    q = sampled / total_rows if total_rows else 1.0
    distinct = d + f1 * (1.0 / q - 1.0) if q > 0 else float(d)
    distinct = min(distinct, float(total_rows))

    return Histogram(column, bins, lo, hi, tuple(int(c) for c in counts),
                     sampled, total_rows, nulls / sampled if sampled else 0.0,
                     max(distinct, 1.0), sample_rate, seed)


def estimate_range_selectivity(h: Histogram, lo: float = NEG_INF, hi: float = POS_INF,
                               lo_open: bool = False, hi_open: bool = False) -> float:
    """Estimated fraction of all rows with column value in the given range.

    Partially covered bins contribute proportionally (uniform-within-bin);
    mass outside [h.lo, h.hi] contributes zero.  Open/closed bounds only
    matter for zero-width ranges: a closed point range is an equality
    estimate, an open one is empty.
    """
    nonnull = h.nonnull_sampled
    if nonnull == 0:
        return 0.0
    scale = 1.0 - h.null_fraction
    if lo == NEG_INF and hi == POS_INF:
        return scale
    if lo > hi:
        return 0.0
    if lo == hi:
        if lo_open or hi_open:
            return 0.0
        return _equality_selectivity(h, lo)

    span_lo = max(lo, h.lo)
    span_hi = min(hi, h.hi)
    if span_lo > span_hi:
        return 0.0
    if h.lo == h.hi:
        # Degenerate single-value histogram: all mass at h.lo.
        inside = (span_lo <= h.lo <= span_hi)
        return scale if inside else 0.0

    width = (h.hi - h.lo) / h.bins
    covered = 0.0
    for b, count in enumerate(h.counts):
        if count == 0:
            continue
        b_lo = h.lo + b * width
        b_hi = h.lo + (b + 1) * width
        overlap = min(span_hi, b_hi) - max(span_lo, b_lo)
        if overlap <= 0:
            continue
        covered += count * min(overlap / width, 1.0)
    return scale * covered / nonnull


def _equality_selectivity(h: Histogram, value: float) -> float:
    if value < h.lo or value > h.hi or h.nonnull_sampled == 0:
        return 0.0
    return (1.0 - h.null_fraction) / max(h.distinct_estimate, 1.0)


def estimate_conjunction(selectivities: list[float]) -> float:
    """Product combination under the independence assumption."""
    out = 1.0
    for s in selectivities:
        if not (0.0 <= s <= 1.0):
            raise ValueError(f"selectivity out of [0, 1]: {s}")
        out *= s
    return out


# ---------------------------------------------------------------------------
# Binary persistence (same framing discipline as TIERCOL)
# ---------------------------------------------------------------------------

_HIST_MAGIC = b"THIS"


def histogram_to_bytes(h: Histogram) -> bytes:
    name = h.column.encode("utf-8")
    head = struct.pack("<4sH", _HIST_MAGIC, len(name)) + name
    body = struct.pack("<IddQQddd", h.bins, h.lo, h.hi, h.sampled_rows,
                       h.total_rows, h.null_fraction, h.distinct_estimate,
                       h.sample_rate)
    body += struct.pack("<Q", h.seed)
    body += np.asarray(h.counts, dtype="<u8").tobytes()
    return head + body


def histogram_from_bytes(data: bytes) -> Histogram:
    if data[:4] != _HIST_MAGIC:
        raise CorruptFrame("bad histogram record magic")
    (name_len,) = struct.unpack_from("<H", data, 4)
    pos = 6
    name = data[pos:pos + name_len].decode("utf-8")
    pos += name_len
    bins, lo, hi, sampled, total, nullf, distinct, rate = struct.unpack_from(
        "<IddQQddd", data, pos)
    pos += struct.calcsize("<IddQQddd")
    (seed,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    counts = np.frombuffer(data, dtype="<u8", count=bins, offset=pos)
    return Histogram(name, bins, lo, hi, tuple(int(c) for c in counts),
                     sampled, total, nullf, distinct, rate, seed)
