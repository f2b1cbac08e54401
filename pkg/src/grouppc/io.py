"""Reading and writing datasets, fit results, and prior grids.

Formats are deliberately plain: CSV with a header for tabular data
(UTF-8, LF, '.' decimal separator, 17 significant digits so floats
round-trip exactly) and JSON for fit summaries.  Group labels in a
dataset file can be arbitrary strings; they are mapped to indices in
order of first appearance, which preserves the on-disk ordering of
transects or campaigns.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .design import Dataset, GroupedDesign
from .errors import ParseError
from .pcprior import PriorGrid

__all__ = [
    "read_dataset",
    "write_dataset",
    "write_fit",
    "read_fit",
    "write_grid",
    "read_grid",
]

FIT_KEYS = ("log_mlik", "rho", "sigma2", "beta", "diagnostics")
GRID_HEADER = ("param", "distance", "density", "cdf")


def _parse_cell(text, row, column):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ParseError(
            f"row {row}, column {column!r}: not a number: {text!r}") from None


def read_dataset(path, covariate_names=(), group_column="group",
                 pos_column=None):
    """Read a dataset CSV into a `Dataset`.

    Parameters
    ----------
    path : str or path-like
        CSV file with a header row.  A `y` column and the group column
        are required.
    covariate_names : sequence of str
        Columns to use as covariates, in this order, after the
        intercept.  Other columns are ignored.
    group_column : str
        Column holding the group labels.
    pos_column : str, optional
        Column holding within-group coordinates.  When given, rows are
        sorted by position within each group and positions must be
        distinct within a group.

    Returns
    -------
    Dataset
        Rows ordered by (group first appearance, position or file
        order), with an intercept column prepended to the covariates.
    """
    covariate_names = tuple(covariate_names)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        needed = ["y", group_column] + list(covariate_names)
        if pos_column is not None:
            needed.append(pos_column)
        index = {}
        for name in needed:
            if name not in header:
                raise ParseError(f"{path}: missing column {name!r}")
            index[name] = header.index(name)

        groups: dict[str, list] = {}
        for row in reader:
            if not row:
                continue
            num = reader.line_num
            if len(row) != len(header):
                raise ParseError(
                    f"row {num}: expected {len(header)} fields, "
                    f"got {len(row)}")
            label = row[index[group_column]]
            y = _parse_cell(row[index["y"]], num, "y")
            pos = None
            if pos_column is not None:
                pos = _parse_cell(row[index[pos_column]], num, pos_column)
            covs = [_parse_cell(row[index[c]], num, c)
                    for c in covariate_names]
            groups.setdefault(label, []).append((pos, num, y, covs))

    if not groups:
        raise ParseError(f"{path}: no data rows")

    sizes = []
    positions = []
    ys = []
    xs = []
    for label, rows in groups.items():
        if pos_column is not None:
            rows.sort(key=lambda r: r[0])
            for prev, cur in zip(rows, rows[1:]):
                if cur[0] <= prev[0]:
                    raise ParseError(
                        f"row {cur[1]}, column {pos_column!r}: position "
                        f"{cur[0]!r} duplicates one in group {label!r}")
            positions.append(tuple(r[0] for r in rows))
        sizes.append(len(rows))
        for pos, num, y, covs in rows:
            ys.append(y)
            xs.append([1.0] + covs)

    design = GroupedDesign(
        group_sizes=tuple(sizes),
        positions=tuple(positions) if pos_column is not None else None,
    )
    return Dataset(
        y=np.array(ys),
        X=np.array(xs),
        design=design,
        column_names=("intercept",) + covariate_names,
    )


def write_dataset(dataset, path, group_labels=None):
    """Write a dataset to CSV; `read_dataset` recovers it exactly.

    Groups are labeled 1..n unless `group_labels` supplies strings.
    A `pos` column is written only when the design carries positions.
    """
    design = dataset.design
    if group_labels is None:
        group_labels = [str(j + 1) for j in range(design.n_groups)]
    has_pos = design.positions is not None
    covariates = list(dataset.column_names[1:])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["y", "group"] + (["pos"] if has_pos else []) + covariates
        writer.writerow(header)
        for j, s in enumerate(design.group_slices()):
            for i in range(s.start, s.stop):
                row = ["%.17g" % dataset.y[i], group_labels[j]]
                if has_pos:
                    row.append("%.17g" % design.positions[j][i - s.start])
                row.extend("%.17g" % v for v in dataset.X[i, 1:])
                writer.writerow(row)


def write_fit(fit, path):
    """Serialize a fit as JSON with exactly the documented keys."""
    payload = fit.to_json_dict() if hasattr(fit, "to_json_dict") else dict(fit)
    if tuple(payload) != FIT_KEYS:
        raise ParseError(f"fit payload must have keys {FIT_KEYS}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_fit(path):
    """Read a fit JSON written by `write_fit`; rejects stray keys."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict) or tuple(payload) != FIT_KEYS:
        raise ParseError(
            f"{path}: expected exactly the keys {FIT_KEYS}")
    return payload


def write_grid(grid, path):
    """Write a prior grid as CSV with header param,distance,density,cdf."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GRID_HEADER)
        for row in zip(grid.param, grid.distance, grid.density, grid.cdf):
            writer.writerow(["%.17g" % v for v in row])


def read_grid(path):
    """Read a grid CSV written by `write_grid`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(GRID_HEADER):
            raise ParseError(
                f"{path}: expected header {','.join(GRID_HEADER)}")
        columns = [[], [], [], []]
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(
                    f"row {reader.line_num}: expected 4 fields")
            for store, name, cell in zip(columns, GRID_HEADER, row):
                store.append(_parse_cell(cell, reader.line_num, name))
    return PriorGrid(*(np.array(c) for c in columns))
