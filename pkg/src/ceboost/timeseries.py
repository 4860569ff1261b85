"""Uniformly sampled trajectories, batch windowing and finite differences."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Trajectory",
    "Batch",
    "DerivativeSeries",
    "CsvFormatError",
    "ingest_csv",
    "export_csv",
    "make_batches",
    "forward_difference",
]


class CsvFormatError(ValueError):
    """Malformed trajectory file; carries the 1-based row/column location."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Trajectory:
    """A multivariate time series sampled on a uniform grid.

    ``values`` has one row per time sample and one column per state
    component.  The grid is ``t0 + m*dt``.  Immutable after construction.
    """

    values: np.ndarray
    dt: float
    t0: float = 0.0
    names: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"trajectory values must be 2-D, got shape {v.shape}")
        if v.shape[0] < 2:
            raise ValueError(f"trajectory needs at least 2 samples, got {v.shape[0]}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(v)):
            bad = np.argwhere(~np.isfinite(v))[0]
            raise ValueError(f"non-finite value at sample {bad[0]}, component {bad[1]}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.names and len(self.names) != v.shape[1]:
            raise ValueError("names length does not match column count")

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @property
    def duration(self):
        return self.n_samples * self.dt

    def component_names(self):
        if self.names:
            return tuple(self.names)
        return tuple(f"x{i + 1}" for i in range(self.p))


@dataclass(frozen=True)
class Batch:
    """A contiguous window of ``sample_count`` samples of a trajectory."""

    values: np.ndarray
    index: int
    dt: float
    t_start: float

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("batch index is 1-based")
        if self.values.shape[0] < 2:
            raise ValueError("batch needs at least 2 samples")

    @property
    def sample_count(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @property
    def t_end(self):
        return self.t_start + self.sample_count * self.dt


@dataclass(frozen=True)
class DerivativeSeries:
    """Finite-difference derivative estimates aligned with a batch.

    Row ``m`` holds ``(x[m+1] - x[m]) / dt`` and is paired with state row
    ``m`` in all downstream regressions.
    """

    values: np.ndarray
    scheme: str = "forward"


def ingest_csv(path, dt, has_header=False):
    """Read a trajectory from a CSV file (one sample per row, no time column).

    Raises :class:`CsvFormatError` with the offending 1-based row/column for
    ragged or non-numeric input.
    """
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        names = ()
        for lineno, record in enumerate(reader, start=1):
            if not record:
                continue
            if has_header and lineno == 1:
                names = tuple(c.strip() for c in record)
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise CsvFormatError(
                    f"row {lineno} has {len(record)} columns, expected {width}",
                    row=lineno,
                )
            parsed = np.empty(width)
            for j, cell in enumerate(record):
                try:
                    parsed[j] = float(cell)
                except ValueError:
                    raise CsvFormatError(
                        f"non-numeric value {cell!r} at row {lineno}, column {j + 1}",
                        row=lineno,
                        column=j + 1,
                    ) from None
                if not np.isfinite(parsed[j]):
                    raise CsvFormatError(
                        f"non-finite value at row {lineno}, column {j + 1}",
                        row=lineno,
                        column=j + 1,
                    )
            rows.append(parsed)
    if not rows:
        raise CsvFormatError(f"no data rows in {path}")
    return Trajectory(np.array(rows), dt=dt, names=names)


def export_csv(traj, path, header=False):
    """Write a trajectory with 17 significant digits (lossless round trip)."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(",".join(traj.component_names()) + "\n")
        np.savetxt(fh, traj.values, fmt="%.17g", delimiter=",")


def make_batches(traj, batch_length):
    """Split a trajectory into contiguous batches of ``round(batch_length/dt)``
    samples.  A trailing remainder shorter than one batch is discarded.
    """
    if batch_length < 2 * traj.dt:
        raise ValueError(
            f"batch_length {batch_length} must be at least 2*dt = {2 * traj.dt}"
        )
    m = int(round(batch_length / traj.dt))
    n_batches = traj.n_samples // m
    batches = []
    for k in range(n_batches):
        batches.append(
            Batch(
                values=traj.values[k * m : (k + 1) * m],
                index=k + 1,
                dt=traj.dt,
                t_start=traj.t0 + k * m * traj.dt,
            )
        )
    return batches


def forward_difference(batch):
    """Forward differences ``(x[m+1] - x[m]) / dt`` for ``m = 0..M-2``."""
    if batch.sample_count < 2:
        raise ValueError("forward difference needs at least 2 samples")
    d = np.diff(batch.values, axis=0) / batch.dt
    return DerivativeSeries(values=d, scheme="forward")
