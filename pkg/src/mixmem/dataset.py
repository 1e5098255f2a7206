"""Count-matrix file format and the race-data fetch helper.

Datasets are comma-delimited UTF-8 text with a required header row. The
first column holds observation ids; every remaining column holds
non-negative integer counts. LF and CRLF line endings are both accepted.
Missing values are rejected rather than imputed: the model has no
missingness mechanism and silent zero-filling would corrupt the rates.
"""

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CountMatrix",
    "DatasetFormatError",
    "load_dataset",
    "save_dataset",
    "fetch_race_data",
    "RACE_DATA_URL",
]

RACE_DATA_URL = "http://mathsci.ucd.ie/~brendan/data/24H.xlsx"
RACE_DATA_SHAPE = (260, 24)


class DatasetFormatError(ValueError):
    """Malformed dataset file; carries the offending row and column."""

    def __init__(self, message, row=None, column=None):
        location = ""
        if row is not None:
            location = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + location)
        self.row = row
        self.column = column


@dataclass
class CountMatrix:
    """An N x M matrix of counts with observation ids and column labels."""

    values: np.ndarray
    row_ids: list
    col_labels: list

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError("values must be 2-dimensional")
        if len(self.row_ids) != self.values.shape[0]:
            raise ValueError("one row id per observation is required")
        if len(self.col_labels) != self.values.shape[1]:
            raise ValueError("one label per attribute column is required")

    @property
    def shape(self):
        return self.values.shape


def load_dataset(path):
    """Parse a dataset file into a CountMatrix.

    Raises DatasetFormatError naming the first offending cell on ragged
    rows, missing values, or negative / non-integer counts.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader]
    rows = [row for row in rows if row]  # drop trailing blank lines
    if not rows:
        raise DatasetFormatError(f"{path}: empty dataset file")

    header = rows[0]
    if len(header) < 2:
        raise DatasetFormatError(f"{path}: header needs an id column and at "
                                 "least one count column", row=1)
    col_labels = [c.strip() for c in header[1:]]
    n_cols = len(header)

    row_ids = []
    values = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols:
            raise DatasetFormatError(
                f"{path}: expected {n_cols} cells, found {len(row)}", row=i)
        row_ids.append(row[0].strip())
        parsed = []
        for j, cell in enumerate(row[1:], start=2):
            cell = cell.strip()
            if cell == "":
                raise DatasetFormatError(f"{path}: missing value", row=i, column=j)
            try:
                value = int(cell)
            except ValueError:
                raise DatasetFormatError(
                    f"{path}: non-integer cell {cell!r}", row=i, column=j) from None
            if value < 0:
                raise DatasetFormatError(
                    f"{path}: negative cell {cell!r}", row=i, column=j)
            parsed.append(value)
        values.append(parsed)

    if not values:
        raise DatasetFormatError(f"{path}: no data rows", row=2)
    return CountMatrix(values=np.asarray(values, dtype=np.int64),
                       row_ids=row_ids, col_labels=col_labels)


def save_dataset(data, path):
    """Write a CountMatrix in the canonical format (LF line endings)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id"] + list(data.col_labels))
        for rid, row in zip(data.row_ids, np.asarray(data.values)):
            writer.writerow([rid] + [int(v) for v in row])


def _laps_per_hour(values):
    """Difference cumulative lap totals into per-hour counts when detected.

    Rows that are non-decreasing left to right in at least 95% of cases
    are treated as cumulative totals and differenced (first column kept).
    """
    values = np.asarray(values, dtype=np.int64)
    nondecreasing = np.all(np.diff(values, axis=1) >= 0, axis=1).mean()
    if nondecreasing >= 0.95:
        return np.column_stack([values[:, :1], np.diff(values, axis=1)])
    return values


def fetch_race_data(dest, url=RACE_DATA_URL, timeout=60):
    """Download the 24-hour race spreadsheet and convert it to a dataset file.

    Requires the `requests` and `openpyxl` packages (the `data` extra).
    Verifies that the numeric block is 260 x 24 before writing, and
    differences cumulative lap totals into per-hour counts if the rows
    look cumulative. Returns the resulting CountMatrix.
    """
    try:
        import requests
    except ImportError as exc:
        raise RuntimeError("fetch_race_data requires the 'requests' package "
                           "(install the [data] extra)") from exc
    try:
        import openpyxl
    except ImportError as exc:
        raise RuntimeError("fetch_race_data requires the 'openpyxl' package "
                           "(install the [data] extra)") from exc
    import io as _io

    response = requests.get(url, timeout=timeout)
    response.raise_for_status()
    book = openpyxl.load_workbook(_io.BytesIO(response.content), data_only=True)
    sheet = book.worksheets[0]

    row_ids, rows = [], []
    for raw in sheet.iter_rows(values_only=True):
        if raw is None:
            continue
        cells = list(raw)
        numeric_tail = [c for c in cells[-RACE_DATA_SHAPE[1]:]
                        if isinstance(c, (int, float)) and c is not None]
        if len(numeric_tail) != RACE_DATA_SHAPE[1]:
            continue  # header or malformed row
        counts = [int(round(float(c))) for c in cells[-RACE_DATA_SHAPE[1]:]]
        if any(c < 0 for c in counts):
            continue
        label = next((str(c) for c in cells[:-RACE_DATA_SHAPE[1]] if c not in (None, "")),
                     str(len(row_ids) + 1))
        row_ids.append(label)
        rows.append(counts)

    values = np.asarray(rows, dtype=np.int64)
    if values.shape != RACE_DATA_SHAPE:
        raise RuntimeError(
            f"unexpected race data layout: found numeric block {values.shape}, "
            f"expected {RACE_DATA_SHAPE}"
        )
    values = _laps_per_hour(values)
    data = CountMatrix(values=values, row_ids=row_ids,
                       col_labels=[f"h{j + 1}" for j in range(values.shape[1])])
    save_dataset(data, dest)
    return data
