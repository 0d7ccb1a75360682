"""CSV ingestion, cadence validation, burn-phase segmentation, thermocouple
clamping and cluster merging.

Records are held column-wise in a single ``(N, 12)`` float array whose
column order is :data:`COLUMNS`; :class:`SampleRecord` is the row view.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CadenceError,
    EmptyPhaseError,
    MergeError,
    ParameterError,
    ParseError,
    SchemaError,
)

COLUMNS = (
    "time_s", "u_ms", "v_ms", "w_ms", "sonic_T_C",
    "T1_C", "T2_C", "T3_C", "T4_C", "T5_C", "T6_C", "T7_C",
)
THERMOCOUPLES = COLUMNS[5:]
THERMOCOUPLE_HEIGHTS_CM = (0, 5, 10, 20, 30, 50, 100)
WIND = ("u_ms", "v_ms", "w_ms")

CADENCE_S = 0.1
CADENCE_TOL_S = 1e-6
MAX_GAP_S = 0.15

PHASES = ("pre-burn", "burn", "post-burn")

_IDX = {name: i for i, name in enumerate(COLUMNS)}


@dataclass(frozen=True)
class SampleRecord:
    time_s: float
    u_ms: float
    v_ms: float
    w_ms: float
    sonic_T_C: float
    T1_C: float
    T2_C: float
    T3_C: float
    T4_C: float
    T5_C: float
    T6_C: float
    T7_C: float


@dataclass(frozen=True)
class PhaseSegmentation:
    burn_start_s: float
    burn_end_s: float

    def __post_init__(self):
        if not self.burn_start_s < self.burn_end_s:
            raise ParameterError(
                f"burn_start_s ({self.burn_start_s}) must precede burn_end_s ({self.burn_end_s})"
            )

    def labels(self, time_s):
        t = np.asarray(time_s, dtype=float)
        out = np.full(t.shape, "burn", dtype=object)
        out[t < self.burn_start_s] = "pre-burn"
        out[t > self.burn_end_s] = "post-burn"
        return out

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls.from_dict(obj)

    @classmethod
    def from_dict(cls, obj):
        try:
            return cls(float(obj["burn_start_s"]), float(obj["burn_end_s"]))
        except KeyError as exc:
            raise ParameterError(f"segmentation config lacks {exc.args[0]!r}") from None


@dataclass(frozen=True, eq=False)
class ClusterDataset:
    """Ordered 10 Hz records from one truss cluster (or a merge of several).

    ``phase`` is ``None`` until the dataset has been segmented.
    """

    name: str
    data: np.ndarray
    provenance: tuple[str, ...] = ()
    phase: str | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(COLUMNS):
            raise ParameterError(f"data must be (N, {len(COLUMNS)}), got {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "provenance", tuple(self.provenance))

    def __len__(self):
        return self.data.shape[0]

    def column(self, name):
        return self.data[:, _IDX[name]]

    @property
    def time_s(self):
        return self.column("time_s")

    @property
    def wind(self):
        return self.data[:, 1:4]

    @property
    def thermocouples(self):
        return self.data[:, 5:12]

    def record(self, i):
        return SampleRecord(*map(float, self.data[i]))

    @property
    def records(self):
        return [self.record(i) for i in range(len(self))]

    def replace(self, **changes):
        kw = dict(name=self.name, data=self.data, provenance=self.provenance, phase=self.phase)
        kw.update(changes)
        return ClusterDataset(**kw)

    def equals(self, other):
        return (
            self.name == other.name
            and self.phase == other.phase
            and self.provenance == other.provenance
            and np.array_equal(self.data, other.data)
        )

    @classmethod
    def from_records(cls, name, records, provenance=(), phase=None):
        rows = [[getattr(r, c) for c in COLUMNS] for r in records]
        data = np.array(rows, dtype=float).reshape(len(rows), len(COLUMNS))
        return cls(name, data, provenance, phase)


def validate_cadence(time_s):
    t = np.asarray(time_s, dtype=float)
    if t.size < 2:
        return
    dt = np.diff(t)
    bad = np.flatnonzero((dt <= 0) | (dt > MAX_GAP_S) | (np.abs(dt - CADENCE_S) > CADENCE_TOL_S))
    if bad.size:
        i = bad[0] + 1
        d = dt[i - 1]
        if d <= 0:
            why = "timestamps not strictly increasing"
        elif d > MAX_GAP_S:
            why = f"gap of {d:.6g} s exceeds {MAX_GAP_S} s"
        else:
            why = f"step of {d:.9g} s is off the {CADENCE_S} s cadence"
        raise CadenceError(float(t[i]), why)


def parse_csv(path, name=None):
    """Read one cluster file. Lines starting with ``#`` are ignored; the
    header must equal :data:`COLUMNS` exactly."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.lstrip().startswith("#")]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(COLUMNS[0], "file has no header row") from None
    for i, col in enumerate(COLUMNS):
        if col not in header:
            raise SchemaError(col)
        if header.index(col) != i:
            raise SchemaError(col, f"column {col!r} found at position {header.index(col)}, expected {i}")
    if len(header) != len(COLUMNS):
        raise SchemaError(header[len(COLUMNS)], f"unexpected extra column {header[len(COLUMNS)]!r}")

    rows = []
    for r, cells in enumerate(reader):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != len(COLUMNS):
            raise ParseError(r, f"expected {len(COLUMNS)} cells, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(r, str(exc)) from None
    data = np.array(rows, dtype=float).reshape(len(rows), len(COLUMNS))
    if not np.all(np.isfinite(data)):
        r = int(np.flatnonzero(~np.all(np.isfinite(data), axis=1))[0])
        raise ParseError(r, "non-finite value")
    validate_cadence(data[:, 0])
    return ClusterDataset(name or path.stem, data, (path.name,))


def format_csv(ds):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in ds.data:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_csv(ds, path):
    Path(path).write_text(format_csv(ds), encoding="utf-8")


def segment_phases(ds, seg, phase="burn"):
    if phase not in PHASES:
        raise ParameterError(f"unknown phase {phase!r}")
    keep = seg.labels(ds.time_s) == phase
    if not keep.any():
        raise EmptyPhaseError(
            f"{ds.name}: no records in phase {phase!r} for window "
            f"[{seg.burn_start_s}, {seg.burn_end_s}]"
        )
    return ds.replace(data=ds.data[keep], phase=phase)


def clamp_outliers(ds, lo=-50.0, hi=50.0):
    if not lo < hi:
        raise ParameterError(f"clamp bounds must satisfy lo < hi, got ({lo}, {hi})")
    data = ds.data.copy()
    data[:, 5:12] = np.clip(data[:, 5:12], lo, hi)
    return ds.replace(data=data)


def merge_clusters(a, b, name=None):
    if len(a) and len(b) and a.phase != b.phase:
        raise MergeError(f"cannot merge {a.name} ({a.phase}) with {b.name} ({b.phase})")
    phase = a.phase if len(a) else b.phase
    prov = a.provenance + tuple(p for p in b.provenance if p not in a.provenance)
    return ClusterDataset(
        name or a.name + b.name, np.vstack([a.data, b.data]), prov, phase
    )
