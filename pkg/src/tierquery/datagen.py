"""Deterministic synthetic datasets in three scientific-workload shapes.

Three shapes:

* ``laghos-box``: mesh-style rows with x/y/z coordinates and an energy
  column.  Each coordinate independently lands inside (1.5, 1.6) with
  probability ``selectivity ** (1/3)``, so the compound in-box fraction of
  the three-way conjunction is the requested selectivity in expectation and
  per-column values stay independent.  Background values cover [0, 4)
  excluding the box interval.

* ``deepwater-threshold``: volume-fraction columns that are mostly exactly
  0.0 or 1.0 with a small ``mid_fraction`` strictly between, plus a
  contiguous timestep column.  Threshold predicates such as
  ``v03 > 0.001 AND v03 < 0.999`` therefore select only the mid fraction.

* ``hep-dimuon``: event rows with a muon multiplicity column and per-muon
  list columns (pt/eta/phi/charge) whose lengths always equal the
  multiplicity.

All generators are pure functions of (rows, seed, knobs); the CSV writer uses
shortest round-trip decimals, so outputs are byte-identical across runs.
"""

from __future__ import annotations

import math

import numpy as np

from .columnar import Column, DataType, Schema, Table

SHAPES = ("laghos-box", "deepwater-threshold", "hep-dimuon")

LAGHOS_SCHEMA = Schema.of(
    ("element_id", DataType.INT32, False),
    ("vertex_id", DataType.INT32, False),
    ("x", DataType.FLOAT64, True),
    ("y", DataType.FLOAT64, True),
    ("z", DataType.FLOAT64, True),
    ("e", DataType.FLOAT64, True),
)

DEEPWATER_SCHEMA = Schema.of(
    ("v01", DataType.FLOAT64, True),
    ("v02", DataType.FLOAT64, True),
    ("v03", DataType.FLOAT64, True),
    ("timestep", DataType.INT64, False),
)

HEP_SCHEMA = Schema.of(
    ("MET_pt", DataType.FLOAT64, True),
    ("nMuon", DataType.INT32, False),
    ("Muon_pt", DataType.LIST_FLOAT64, True),
    ("Muon_eta", DataType.LIST_FLOAT64, True),
    ("Muon_phi", DataType.LIST_FLOAT64, True),
    ("Muon_charge", DataType.LIST_INT32, True),
)

BOX_LO = 1.5
BOX_HI = 1.6


def _box_coordinate(rng: np.random.Generator, rows: int, p_in: float) -> np.ndarray:
    """Inside (1.5, 1.6) with probability p_in, else uniform on the rest of [0, 4)."""
    inside = rng.random(rows) < p_in
    u = rng.random(rows)
    in_vals = BOX_LO + (BOX_HI - BOX_LO) * u
    span = 4.0 - (BOX_HI - BOX_LO)
    w = span * u
    out_vals = np.where(w < BOX_LO, w, w + (BOX_HI - BOX_LO))
    return np.where(inside, in_vals, out_vals)


def laghos_box(rows: int, seed: int, selectivity: float = 1e-4,
               vertices: int = 1024) -> Table:
    rng = np.random.default_rng(seed)
    p_in = float(selectivity) ** (1.0 / 3.0)
    cols = [
        Column.from_numpy(DataType.INT32, np.arange(rows, dtype=np.int32)),
        Column.from_numpy(DataType.INT32,
                          rng.integers(0, vertices, size=rows, dtype=np.int32)),
        Column.from_numpy(DataType.FLOAT64, _box_coordinate(rng, rows, p_in)),
        Column.from_numpy(DataType.FLOAT64, _box_coordinate(rng, rows, p_in)),
        Column.from_numpy(DataType.FLOAT64, _box_coordinate(rng, rows, p_in)),
        Column.from_numpy(DataType.FLOAT64, rng.random(rows) * 10.0),
    ]
    return Table.from_columns(LAGHOS_SCHEMA, cols)


def _volume_fraction(rng: np.random.Generator, rows: int, mid_fraction: float) -> np.ndarray:
    u = rng.random(rows)
    mid = u < mid_fraction
    filled = u >= (1.0 + mid_fraction) / 2.0
    vals = np.zeros(rows)
    vals[filled] = 1.0
    vals[mid] = 0.001 + 0.998 * rng.random(int(mid.sum()))
    return vals


def deepwater_threshold(rows: int, seed: int, mid_fraction: float = 0.01,
                        timesteps: int = 50) -> Table:
    rng = np.random.default_rng(seed)
    timestep = (np.arange(rows, dtype=np.int64) * timesteps) // max(rows, 1)
    cols = [
        Column.from_numpy(DataType.FLOAT64, rng.random(rows)),
        Column.from_numpy(DataType.FLOAT64, _volume_fraction(rng, rows, mid_fraction)),
        Column.from_numpy(DataType.FLOAT64, _volume_fraction(rng, rows, mid_fraction)),
        Column.from_numpy(DataType.INT64, timestep),
    ]
    return Table.from_columns(DEEPWATER_SCHEMA, cols)


def hep_dimuon(rows: int, seed: int, pt_lo: float = 8.0, pt_hi: float = 35.0) -> Table:
    rng = np.random.default_rng(seed)
    n_muon = rng.choice(np.arange(5, dtype=np.int32), size=rows,
                        p=[0.15, 0.30, 0.30, 0.15, 0.10])
    offsets = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(n_muon, out=offsets[1:])
    total = int(offsets[-1])
    validity = np.ones(rows, dtype=bool)

    pt = pt_lo + (pt_hi - pt_lo) * rng.random(total)
    eta = rng.normal(0.0, 1.4, size=total)
    phi = -math.pi + 2 * math.pi * rng.random(total)
    charge = rng.choice(np.array([-1, 1], dtype=np.int32), size=total)

    cols = [
        Column.from_numpy(DataType.FLOAT64, rng.gamma(2.0, 12.0, size=rows)),
        Column.from_numpy(DataType.INT32, n_muon),
        Column.from_numpy(DataType.LIST_FLOAT64, pt, validity, offsets),
        Column.from_numpy(DataType.LIST_FLOAT64, eta, validity, offsets),
        Column.from_numpy(DataType.LIST_FLOAT64, phi, validity, offsets),
        Column.from_numpy(DataType.LIST_INT32, charge, validity, offsets),
    ]
    return Table.from_columns(HEP_SCHEMA, cols)


def generate_table(shape: str, rows: int, seed: int, **knobs) -> Table:
    if shape == "laghos-box":
        return laghos_box(rows, seed, **knobs)
    if shape == "deepwater-threshold":
        return deepwater_threshold(rows, seed, **knobs)
    if shape == "hep-dimuon":
        return hep_dimuon(rows, seed, **knobs)
    raise ValueError(f"unknown dataset shape {shape!r}; expected one of {SHAPES}")


def schema_for(shape: str) -> Schema:
    return {
        "laghos-box": LAGHOS_SCHEMA,
        "deepwater-threshold": DEEPWATER_SCHEMA,
        "hep-dimuon": HEP_SCHEMA,
    }[shape]
