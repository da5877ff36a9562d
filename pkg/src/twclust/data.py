"""Curve datasets on a common time grid, plus CSV ingestion and output."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import IO, Optional, Sequence, Union

import numpy as np

from .errors import DataError

MIN_GRID_POINTS = 5


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time points shared by every curve of a dataset."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).copy()
        if pts.ndim != 1:
            raise DataError("grid must be one-dimensional")
        if pts.size < MIN_GRID_POINTS:
            raise DataError(
                f"grid too short: r={pts.size}, need at least {MIN_GRID_POINTS} points"
            )
        if not np.all(np.isfinite(pts)):
            raise DataError("grid contains non-finite values")
        if np.any(np.diff(pts) <= 0):
            raise DataError("grid points must be strictly increasing")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def r(self) -> int:
        return int(self.points.size)

    @classmethod
    def uniform(cls, r: int) -> "TimeGrid":
        """Equally spaced grid on [0, 1]."""
        return cls(np.linspace(0.0, 1.0, r))

    def __len__(self):
        return self.r

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    """``n`` curves observed on one grid.

    ``values`` has shape ``(n, r)``; row ``i`` holds curve ``i``. ``labels``
    is optional ground truth and is only used for accuracy reporting.
    """

    grid: TimeGrid
    values: np.ndarray
    labels: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2:
            raise DataError("values must be a 2-D array of shape (n, r)")
        n, r = vals.shape
        if n < 2:
            raise DataError(f"need at least 2 curves, got {n}")
        if r != self.grid.r:
            raise DataError(f"curve length {r} does not match grid length {self.grid.r}")
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            raise DataError(
                f"non-finite value at row {bad[0] + 1}, column {bad[1] + 1}; "
                "missing values are not supported"
            )
        object.__setattr__(self, "values", _frozen(vals))
        if self.labels is not None:
            lab = np.array(self.labels, dtype=int)
            if lab.shape != (n,):
                raise DataError("labels must have one entry per curve")
            object.__setattr__(self, "labels", _frozen(lab))

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def r(self) -> int:
        return int(self.values.shape[1])

    def curve(self, i: int) -> np.ndarray:
        return self.values[i]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, FunctionalDataset):
            return NotImplemented
        if self.labels is None or other.labels is None:
            same_labels = self.labels is None and other.labels is None
        else:
            same_labels = np.array_equal(self.labels, other.labels)
        return (
            self.grid == other.grid
            and np.array_equal(self.values, other.values)
            and same_labels
        )

    __hash__ = None


def residuals(curve, center) -> np.ndarray:
    """Pointwise difference ``curve - center``."""
    y = np.asarray(curve, dtype=float)
    c = np.asarray(center, dtype=float)
    if y.shape != c.shape:
        raise DataError(f"dimension mismatch: curve has {y.shape}, center has {c.shape}")
    return y - c


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {col}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {col}: non-finite value {text!r}")
    return value


def load_dataset(
    source: Union[str, bytes, IO],
    *,
    header: bool = False,
    labels: bool = False,
) -> FunctionalDataset:
    """Read a dataset from CSV.

    Parameters
    ----------
    source : bytes, text, or a binary/text file object
        One curve per row, comma separated, ``.`` as decimal separator.
    header : bool
        First row holds the grid times instead of a curve.
    labels : bool
        Last column of each curve row is an integer cluster label.

    Without a header row the grid defaults to equally spaced points on [0, 1].
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"input is not valid UTF-8: {exc}") from None

    rows = [row for row in csv.reader(io.StringIO(source)) if any(c.strip() for c in row)]
    if not rows:
        raise DataError("empty input")

    grid_points = None
    start = 0
    if header:
        grid_points = [_parse_cell(c, 1, j + 1) for j, c in enumerate(rows[0])]
        start = 1

    width = len(rows[start]) if start < len(rows) else 0
    curves, labs = [], []
    for idx in range(start, len(rows)):
        row = rows[idx]
        rownum = idx + 1
        if len(row) != width:
            raise DataError(f"row {rownum}: expected {width} fields, found {len(row)}")
        cells = row
        if labels:
            try:
                labs.append(int(row[-1]))
            except ValueError:
                raise DataError(
                    f"row {rownum}, column {len(row)}: label {row[-1]!r} is not an integer"
                ) from None
            cells = row[:-1]
        curves.append([_parse_cell(c, rownum, j + 1) for j, c in enumerate(cells)])

    if not curves:
        raise DataError("no curve rows found")
    r = len(curves[0])
    if grid_points is not None and len(grid_points) != r:
        raise DataError(f"header has {len(grid_points)} grid times but curves have {r} values")
    if r < MIN_GRID_POINTS:
        raise DataError(f"grid too short: r={r}, need at least {MIN_GRID_POINTS} points")

    grid = TimeGrid(grid_points) if grid_points is not None else TimeGrid.uniform(r)
    return FunctionalDataset(grid, np.array(curves), np.array(labs) if labels else None)


def dump_dataset(dataset: FunctionalDataset, *, header: bool = True, labels: Optional[bool] = None) -> str:
    """Serialize to the CSV layout read by :func:`load_dataset`.

    Floats are written with ``repr`` so that a round trip is exact.
    """
    if labels is None:
        labels = dataset.labels is not None
    if labels and dataset.labels is None:
        raise DataError("dataset has no labels to write")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow([repr(float(t)) for t in dataset.grid.points])
    for i, row in enumerate(dataset.values):
        cells = [repr(float(v)) for v in row]
        if labels:
            cells.append(str(int(dataset.labels[i])))
        writer.writerow(cells)
    return buf.getvalue()


def from_array(values: Sequence[Sequence[float]], grid=None, labels=None) -> FunctionalDataset:
    """Convenience constructor; ``grid`` defaults to the uniform unit grid."""
    values = np.asarray(values, dtype=float)
    if grid is None:
        grid = TimeGrid.uniform(values.shape[-1])
    elif not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    return FunctionalDataset(grid, values, labels)
