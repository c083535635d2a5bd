"""Long-format CSV ingestion and emission.

Two layouts are supported, both keyed by an ``.imp`` column (imputation
index; 0 is the observed-only view, 1..m are completed copies).  The
``.imp`` column may be omitted entirely, in which case the file holds just
the observed data.

Matrix layout: one row per unit, one numeric column per variable.  Missing
entries are empty cells and may appear only in the observed view.

Counts layout: one row per contingency-table cell with one label column per
dimension and a final ``count`` column.  A ``?`` in exactly one label
column marks a stratum whose units lack that label (observed view only).

Numbers are written with shortest round-trip precision, so a write/read
cycle reproduces every float bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .imputers import ContingencyTable

IMP_COLUMN = ".imp"
COUNT_COLUMN = "count"
MISSING_LABEL = "?"


class ParseError(ValueError):
    """Malformed input file; carries 1-based line and column when known."""

    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column else "") + ")"
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


def _format_number(value: float) -> str:
    return repr(float(value))


def _read_rows(path):
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        rows = list(reader)
    rows = [row for row in rows if row and any(cell.strip() for cell in row)]
    if not rows:
        raise ParseError("file is empty", line=1)
    return rows


@dataclass(frozen=True)
class MatrixData:
    """Observed view (NaN-marked) and completed copies of a numeric dataset."""

    columns: tuple
    observed: np.ndarray | None
    completed: tuple  # possibly empty

    @property
    def m(self) -> int:
        return len(self.completed)


def read_matrix_csv(path) -> MatrixData:
    rows = _read_rows(path)
    header = [cell.strip() for cell in rows[0]]
    has_imp = header and header[0] == IMP_COLUMN
    columns = tuple(header[1:] if has_imp else header)
    if not columns:
        raise ParseError("no variable columns found", line=1)

    blocks: dict[int, list] = {}
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(columns) + (1 if has_imp else 0):
            raise ParseError(
                f"expected {len(columns) + (1 if has_imp else 0)} cells", line=line_no
            )
        if has_imp:
            try:
                imp = int(row[0])
            except ValueError:
                raise ParseError(f"bad imputation index {row[0]!r}", line=line_no, column=1) from None
            if imp < 0:
                raise ParseError("imputation index must be >= 0", line=line_no, column=1)
            cells = row[1:]
        else:
            imp, cells = 0, row
        values = []
        for col_no, cell in enumerate(cells, start=2 if has_imp else 1):
            cell = cell.strip()
            if cell == "":
                if imp > 0:
                    raise ParseError(
                        "missing entries are only allowed in the observed view",
                        line=line_no, column=col_no,
                    )
                values.append(np.nan)
                continue
            try:
                values.append(float(cell))
            except ValueError:
                raise ParseError(f"bad number {cell!r}", line=line_no, column=col_no) from None
        blocks.setdefault(imp, []).append(values)

    observed = np.array(blocks[0], dtype=float) if 0 in blocks else None
    imps = sorted(i for i in blocks if i > 0)
    if imps and imps != list(range(1, len(imps) + 1)):
        raise ParseError(f"imputation indices must be 1..m, got {imps}")
    completed = []
    for i in imps:
        block = np.array(blocks[i], dtype=float)
        completed.append(block)
    shapes = {b.shape for b in completed} | ({observed.shape} if observed is not None else set())
    if len(shapes) > 1:
        raise ParseError(f"blocks disagree on shape: {sorted(shapes)}")
    if observed is not None and completed:
        mask = np.isfinite(observed)
        for i, block in enumerate(completed, start=1):
            if not np.array_equal(block[mask], observed[mask]):
                raise ParseError(f"imputation {i} alters observed entries")
    return MatrixData(columns, observed, tuple(completed))


def write_matrix_csv(path, columns, observed=None, completed=()) -> None:
    columns = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([IMP_COLUMN] + columns)
        if observed is not None:
            for row in np.asarray(observed, dtype=float):
                writer.writerow(
                    ["0"] + ["" if np.isnan(v) else _format_number(v) for v in row]
                )
        for imp, block in enumerate(completed, start=1):
            for row in np.asarray(block, dtype=float):
                writer.writerow([str(imp)] + [_format_number(v) for v in row])


@dataclass(frozen=True)
class CountsData:
    """Labeled contingency counts: observed table plus completed copies."""

    axes: tuple  # (name, labels) per dimension
    observed: ContingencyTable | None
    completed: tuple  # count arrays

    @property
    def shape(self) -> tuple:
        return tuple(len(labels) for _, labels in self.axes)

    @property
    def m(self) -> int:
        return len(self.completed)


def read_counts_csv(path) -> CountsData:
    rows = _read_rows(path)
    header = [cell.strip() for cell in rows[0]]
    has_imp = header and header[0] == IMP_COLUMN
    body_header = header[1:] if has_imp else header
    if len(body_header) < 2 or body_header[-1] != COUNT_COLUMN:
        raise ParseError(f"expected label columns followed by {COUNT_COLUMN!r}", line=1)
    dim_names = body_header[:-1]

    entries = []  # (imp, labels tuple, count, line)
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells", line=line_no)
        if has_imp:
            try:
                imp = int(row[0])
            except ValueError:
                raise ParseError(f"bad imputation index {row[0]!r}", line=line_no, column=1) from None
            cells = row[1:]
        else:
            imp, cells = 0, row
        labels = tuple(cell.strip() for cell in cells[:-1])
        if imp > 0 and MISSING_LABEL in labels:
            raise ParseError(
                "unlabeled strata are only allowed in the observed view", line=line_no
            )
        try:
            count = float(cells[-1])
        except ValueError:
            raise ParseError(f"bad count {cells[-1]!r}", line=line_no, column=len(header)) from None
        if count < 0:
            raise ParseError("counts must be nonnegative", line=line_no, column=len(header))
        entries.append((imp, labels, count, line_no))

    # Collect each dimension's labels (sorted for determinism).
    label_sets = [set() for _ in dim_names]
    for _, labels, _, _ in entries:
        for d, label in enumerate(labels):
            if label != MISSING_LABEL:
                label_sets[d].add(label)
    axes = tuple((name, tuple(sorted(values))) for name, values in zip(dim_names, label_sets))
    shape = tuple(len(labels) for _, labels in axes)
    if any(s < 2 for s in shape):
        raise ParseError("every dimension needs at least two labels")
    index = [
        {label: i for i, label in enumerate(labels)} for _, labels in axes
    ]

    tables: dict[int, np.ndarray] = {}
    margins: dict[int, np.ndarray] = {}
    for imp, labels, count, line_no in entries:
        missing_axes = [d for d, label in enumerate(labels) if label == MISSING_LABEL]
        if len(missing_axes) > 1:
            raise ParseError("at most one label may be missing per row", line=line_no)
        if missing_axes:
            axis = missing_axes[0]
            margin = margins.setdefault(
                axis, np.zeros(tuple(s for d, s in enumerate(shape) if d != axis))
            )
            idx = tuple(
                index[d][label] for d, label in enumerate(labels) if d != axis
            )
            margin[idx] += count
        else:
            table = tables.setdefault(imp, np.zeros(shape))
            table[tuple(index[d][label] for d, label in enumerate(labels))] += count

    observed = None
    if 0 in tables or margins:
        observed = ContingencyTable(tables.get(0, np.zeros(shape)), margins)
    imps = sorted(i for i in tables if i > 0)
    if imps and imps != list(range(1, len(imps) + 1)):
        raise ParseError(f"imputation indices must be 1..m, got {imps}")
    return CountsData(axes, observed, tuple(tables[i] for i in imps))


def write_counts_csv(path, axes, observed: ContingencyTable | None = None, completed=()) -> None:
    axes = tuple((name, tuple(labels)) for name, labels in axes)
    names = [name for name, _ in axes]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([IMP_COLUMN] + names + [COUNT_COLUMN])

        def write_table(imp, counts):
            counts = np.asarray(counts)
            for idx in np.ndindex(counts.shape):
                labels = [axes[d][1][i] for d, i in enumerate(idx)]
                writer.writerow([str(imp)] + labels + [_format_number(counts[idx])])

        if observed is not None:
            write_table(0, observed.counts)
            for axis, margin in sorted(observed.unlabeled.items()):
                margin = np.asarray(margin)
                for idx in np.ndindex(margin.shape):
                    if margin[idx] == 0:
                        continue
                    labels = []
                    rest = iter(idx)
                    for d in range(len(axes)):
                        labels.append(MISSING_LABEL if d == axis else axes[d][1][next(rest)])
                    writer.writerow(["0"] + labels + [_format_number(margin[idx])])
        for imp, counts in enumerate(completed, start=1):
            write_table(imp, counts)
