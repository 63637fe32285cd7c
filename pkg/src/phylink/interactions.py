"""Bipartite interaction data: records, the 0/1 matrix, filters, and CSV IO.

The matrix rows are hosts and the columns are parasites.  Construction from
records guarantees every parasite column carries at least one interaction;
the temporal split is the one documented exception and may leave columns
empty on the training side.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = [
    "EmptyInput",
    "AllColumnsDropped",
    "MissingYears",
    "LabelMismatch",
    "InteractionRecord",
    "InteractionMatrix",
    "build_matrix",
    "drop_single_host_parasites",
    "temporal_split",
    "degree_distributions",
    "left_order",
    "normalize_label",
    "read_edge_csv",
    "write_edge_csv",
    "read_matrix_csv",
    "write_matrix_csv",
    "read_probability_csv",
]

YEAR_MIN, YEAR_MAX = 1800, 2100


class EmptyInput(DataError):
    pass


class AllColumnsDropped(DataError):
    pass


class MissingYears(DataError):
    def __init__(self, cells):
        self.cells = list(cells)
        shown = ", ".join(f"({h}, {p})" for h, p in self.cells[:5])
        more = "" if len(self.cells) <= 5 else f" and {len(self.cells) - 5} more"
        super().__init__(f"interactions without a year: {shown}{more}")


class LabelMismatch(DataError):
    pass


@dataclass(frozen=True)
class InteractionRecord:
    """One documented host-parasite association."""

    host: str
    parasite: str
    year: int | None = None
    evidence_count: int | None = None

    def __post_init__(self):
        if not self.host or not self.host.strip():
            raise DataError("record with an empty host label")
        if not self.parasite or not self.parasite.strip():
            raise DataError("record with an empty parasite label")
        if self.year is not None and not YEAR_MIN <= self.year <= YEAR_MAX:
            raise DataError(
                f"year {self.year} outside [{YEAR_MIN}, {YEAR_MAX}] "
                f"for ({self.host}, {self.parasite})")
        if self.evidence_count is not None and self.evidence_count < 1:
            raise DataError(f"evidence count must be >= 1 for ({self.host}, {self.parasite})")


class InteractionMatrix:
    """Hosts x parasites 0/1 matrix with labels and optional per-cell years.

    ``years[h, j]`` is the earliest documentation year for a one-cell, or -1
    when no year is known; the array is None when no record carried a year.
    """

    __slots__ = ("hosts", "parasites", "values", "years")

    def __init__(self, hosts, parasites, values, years=None, *, allow_empty_columns=False):
        self.hosts = tuple(hosts)
        self.parasites = tuple(parasites)
        self.values = np.ascontiguousarray(values, dtype=np.uint8)
        if len(set(self.hosts)) != len(self.hosts):
            raise DataError("duplicate host labels")
        if len(set(self.parasites)) != len(self.parasites):
            raise DataError("duplicate parasite labels")
        if self.values.shape != (len(self.hosts), len(self.parasites)):
            raise DataError("matrix shape does not match label counts")
        if self.values.size == 0:
            raise EmptyInput("empty interaction matrix")
        if np.any(self.values > 1):
            raise DataError("matrix cells must be 0 or 1")
        if not allow_empty_columns and np.any(self.values.sum(axis=0) == 0):
            j = int(np.argmin(self.values.sum(axis=0)))
            raise DataError(f"parasite {self.parasites[j]!r} has no interactions")
        if years is not None:
            years = np.ascontiguousarray(years, dtype=np.int32)
            if years.shape != self.values.shape:
                raise DataError("year array shape does not match the matrix")
        self.years = years

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_ones(self) -> int:
        return int(self.values.sum())

    def host_index(self, label: str) -> int:
        try:
            return self.hosts.index(label)
        except ValueError:
            raise LabelMismatch(f"no host named {label!r}") from None

    def parasite_index(self, label: str) -> int:
        try:
            return self.parasites.index(label)
        except ValueError:
            raise LabelMismatch(f"no parasite named {label!r}") from None

    def replace(self, *, values=None, years="keep", allow_empty_columns=False):
        return InteractionMatrix(
            self.hosts,
            self.parasites,
            self.values if values is None else values,
            self.years if years == "keep" else years,
            allow_empty_columns=allow_empty_columns,
        )


def build_matrix(records) -> InteractionMatrix:
    """Assemble the 0/1 matrix from records.

    Duplicate (host, parasite) pairs collapse to one cell; the cell's year is
    the earliest year among its records that carry one.  Label order follows
    first appearance in the input.
    """
    records = list(records)
    if not records:
        raise EmptyInput("no interaction records")
    hosts: list[str] = []
    parasites: list[str] = []
    hidx: dict[str, int] = {}
    pidx: dict[str, int] = {}
    cells: dict[tuple[int, int], int | None] = {}
    any_year = False
    for rec in records:
        h = hidx.setdefault(rec.host, len(hosts))
        if h == len(hosts):
            hosts.append(rec.host)
        j = pidx.setdefault(rec.parasite, len(parasites))
        if j == len(parasites):
            parasites.append(rec.parasite)
        prev = cells.get((h, j), None)
        if rec.year is not None:
            any_year = True
            cells[(h, j)] = rec.year if prev is None else min(prev, rec.year)
        else:
            cells.setdefault((h, j), None)
    values = np.zeros((len(hosts), len(parasites)), dtype=np.uint8)
    years = np.full(values.shape, -1, dtype=np.int32) if any_year else None
    for (h, j), yr in cells.items():
        values[h, j] = 1
        if years is not None and yr is not None:
            years[h, j] = yr
    return InteractionMatrix(hosts, parasites, values, years)


def drop_single_host_parasites(Z: InteractionMatrix) -> InteractionMatrix:
    """Remove parasites documented on exactly one host, then orphaned hosts."""
    keep_cols = np.flatnonzero(Z.values.sum(axis=0) >= 2)
    if keep_cols.size == 0:
        raise AllColumnsDropped("every parasite is documented on a single host")
    values = Z.values[:, keep_cols]
    keep_rows = np.flatnonzero(values.sum(axis=1) > 0)
    values = values[keep_rows]
    years = None
    if Z.years is not None:
        years = Z.years[np.ix_(keep_rows, keep_cols)]
    return InteractionMatrix(
        [Z.hosts[i] for i in keep_rows],
        [Z.parasites[j] for j in keep_cols],
        values,
        years,
    )


def temporal_split(Z: InteractionMatrix, cutoff: int):
    """Split by documentation year: train keeps ones with year <= cutoff.

    Returns (train, test_mask) where test_mask is a boolean matrix marking
    the ones documented after the cutoff.  Dimensions are unchanged, so the
    training matrix may contain all-zero columns (parasites first documented
    after the cutoff).  Every one-cell must carry a year.
    """
    ones = Z.values == 1
    if Z.years is None:
        missing = list(zip(*np.nonzero(ones)))
        raise MissingYears(
            [(Z.hosts[h], Z.parasites[j]) for h, j in missing])
    unknown = ones & (Z.years < 0)
    if np.any(unknown):
        cells = [(Z.hosts[h], Z.parasites[j]) for h, j in zip(*np.nonzero(unknown))]
        raise MissingYears(cells)
    late = ones & (Z.years > cutoff)
    train_values = Z.values.copy()
    train_values[late] = 0
    train = Z.replace(values=train_values, allow_empty_columns=True)
    return train, late


def degree_distributions(Z: InteractionMatrix):
    """Host-degree and parasite-degree histograms as {degree: count} dicts."""
    host_deg = Z.values.sum(axis=1)
    para_deg = Z.values.sum(axis=0)

    def hist(deg):
        vals, counts = np.unique(deg, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    return hist(host_deg), hist(para_deg)


def left_order(Z: InteractionMatrix) -> InteractionMatrix:
    """Columns sorted by descending binary value, rows read top down.

    Each column is read as a bit string with the first host as the most
    significant bit; ties break on ascending parasite label.  Applying the
    ordering twice is a no-op.
    """
    cols = Z.values.T
    order = sorted(
        range(len(Z.parasites)),
        key=lambda j: (tuple(-int(b) for b in cols[j]), Z.parasites[j]),
    )
    years = None if Z.years is None else Z.years[:, order]
    return InteractionMatrix(
        Z.hosts,
        [Z.parasites[j] for j in order],
        Z.values[:, order],
        years,
        allow_empty_columns=True,
    )


def normalize_label(label: str, mode: str = "loose") -> str:
    """Canonical form used to reconcile tree tips with matrix hosts.

    ``loose`` strips surrounding space, casefolds, and treats underscores as
    spaces; ``none`` returns the label unchanged.
    """
    if mode == "none":
        return label
    if mode == "loose":
        return " ".join(label.strip().replace("_", " ").casefold().split())
    raise DataError(f"unknown label normalization mode {mode!r}")


# ---------------------------------------------------------------------------
# CSV formats

def read_edge_csv(path) -> list[InteractionRecord]:
    """Read records from a header-bearing CSV: host,parasite[,year][,evidence_count]."""
    records: list[InteractionRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInput(f"{path}: empty file") from None
        header = [c.strip().lower() for c in header]
        if header[:2] != ["host", "parasite"]:
            raise DataError(f"{path}: header must start with host,parasite")
        extras = header[2:]
        for col in extras:
            if col not in ("year", "evidence_count"):
                raise DataError(f"{path}: unknown column {col!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            kwargs = {}
            for col, raw in zip(extras, row[2:]):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    kwargs[col] = int(raw)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: {col} must be an integer, got {raw!r}") from None
            try:
                records.append(InteractionRecord(row[0].strip(), row[1].strip(), **kwargs))
            except DataError as err:
                raise DataError(f"{path}:{lineno}: {err}") from None
    if not records:
        raise EmptyInput(f"{path}: no interaction records")
    return records


def write_edge_csv(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["host", "parasite", "year", "evidence_count"])
        for rec in records:
            writer.writerow([
                rec.host,
                rec.parasite,
                "" if rec.year is None else rec.year,
                "" if rec.evidence_count is None else rec.evidence_count,
            ])


def write_matrix_csv(path, matrix, values=None, fmt="%d") -> None:
    """Write a labeled matrix: header row of parasites, then host rows.

    ``values`` overrides the matrix's own cells (used for probabilities);
    pass fmt="%.6f" there.
    """
    data = matrix.values if values is None else values
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["host"] + list(matrix.parasites))
        for i, host in enumerate(matrix.hosts):
            writer.writerow([host] + [fmt % v for v in data[i]])


def _read_labeled_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInput(f"{path}: empty file") from None
        if not header or header[0].strip().lower() != "host":
            raise DataError(f"{path}: first header field must be 'host'")
        parasites = [c.strip() for c in header[1:]]
        hosts = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            hosts.append(row[0].strip())
            try:
                rows.append([float(c) for c in row[1:]])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell") from None
    if not hosts:
        raise EmptyInput(f"{path}: no data rows")
    return hosts, parasites, np.asarray(rows, dtype=np.float64)


def read_matrix_csv(path, *, allow_empty_columns=False) -> InteractionMatrix:
    hosts, parasites, data = _read_labeled_table(path)
    if np.any((data != 0) & (data != 1)):
        raise DataError(f"{path}: matrix cells must be 0 or 1")
    return InteractionMatrix(hosts, parasites, data.astype(np.uint8),
                             allow_empty_columns=allow_empty_columns)


def read_probability_csv(path):
    """Read a labeled float matrix; returns (hosts, parasites, array)."""
    hosts, parasites, data = _read_labeled_table(path)
    if np.any(~np.isfinite(data)) or np.any(data < 0) or np.any(data > 1):
        raise DataError(f"{path}: probabilities must lie in [0, 1]")
    return hosts, parasites, data
