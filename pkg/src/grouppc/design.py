"""Grouped designs, group-model descriptions and datasets.

A grouped design records how observations are partitioned into groups and,
optionally, where each observation sits along a one-dimensional coordinate
(time, depth along a transect, ...).  Group models describe the within-group
correlation structure of the residuals; the three supported families share a
single free parameter each.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigurationError, DataError


class Family(str, Enum):
    """Within-group correlation family."""

    EXCHANGEABLE = "exchangeable"
    AR1 = "ar1"
    OU = "ou"


#: accepted spellings on the command line and in config-ish call sites
FAMILY_ALIASES = {
    "exchangeable": Family.EXCHANGEABLE,
    "exch": Family.EXCHANGEABLE,
    "ar1": Family.AR1,
    "ou": Family.OU,
}


def parse_family(name: str | Family) -> Family:
    if isinstance(name, Family):
        return name
    try:
        return FAMILY_ALIASES[name.strip().lower()]
    except KeyError:
        raise ConfigurationError(f"unknown correlation family {name!r}") from None


@dataclass(frozen=True)
class GroupedDesign:
    """Partition of observations into groups, with optional positions.

    Parameters
    ----------
    group_sizes : tuple of int
        Number of observations in each group, in row order.
    positions : tuple of tuple of float, optional
        Per-group observation coordinates, strictly increasing within each
        group.  Required by the OU family unless unit spacing is declared
        on the model.
    """

    group_sizes: tuple[int, ...]
    positions: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if len(self.group_sizes) == 0:
            raise ConfigurationError("a design needs at least one group")
        sizes = tuple(int(m) for m in self.group_sizes)
        if any(m < 1 for m in sizes):
            raise ConfigurationError("group sizes must be positive")
        object.__setattr__(self, "group_sizes", sizes)
        if self.positions is not None:
            pos = tuple(tuple(float(x) for x in p) for p in self.positions)
            if len(pos) != len(sizes):
                raise ConfigurationError(
                    "positions must list one coordinate tuple per group"
                )
            for j, (m, p) in enumerate(zip(sizes, pos)):
                if len(p) != m:
                    raise ConfigurationError(
                        f"group {j} has {m} observations but {len(p)} positions"
                    )
                if any(b <= a for a, b in zip(p, p[1:])):
                    raise ConfigurationError(
                        f"positions in group {j} must be strictly increasing"
                    )
            object.__setattr__(self, "positions", pos)

    @property
    def n_groups(self) -> int:
        return len(self.group_sizes)

    @property
    def total_size(self) -> int:
        return sum(self.group_sizes)

    def balanced(self) -> bool:
        """True when every group has the same size."""
        return len(set(self.group_sizes)) == 1

    def spacings(self, group_index: int) -> NDArray:
        """Consecutive position gaps within one group (unit gaps if no positions)."""
        m = self.group_sizes[group_index]
        if self.positions is None:
            return np.ones(max(m - 1, 0))
        return np.diff(np.asarray(self.positions[group_index], dtype=float))

    def all_spacings(self) -> NDArray:
        """Consecutive gaps of every group concatenated (length total_size - n_groups)."""
        if self.n_groups == 0:
            return np.empty(0)
        return np.concatenate(
            [self.spacings(j) for j in range(self.n_groups)]
            or [np.empty(0)]
        )

    def group_slices(self) -> list[slice]:
        """Row slices of each group in a stacked observation vector."""
        offsets = np.concatenate([[0], np.cumsum(self.group_sizes)])
        return [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]


def balanced_design(n_groups: int, group_size: int,
                    unit_positions: bool = False) -> GroupedDesign:
    """Convenience constructor for n equally sized groups."""
    positions = None
    if unit_positions:
        positions = tuple(tuple(float(i) for i in range(group_size))
                          for _ in range(n_groups))
    return GroupedDesign(group_sizes=(group_size,) * n_groups, positions=positions)


@dataclass(frozen=True)
class GroupModel:
    """A one-parameter within-group correlation model.

    The exchangeable and AR1 families are parameterized by a correlation
    rho in [0, 1); the OU family by a decay rate phi > 0 applied to the
    position gaps.  OU needs positions in the design unless
    ``assume_unit_spacing`` is set, which treats observations as equally
    spaced one unit apart.
    """

    family: Family
    assume_unit_spacing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", parse_family(self.family))

    @property
    def param_name(self) -> str:
        return "phi" if self.family is Family.OU else "rho"

    @property
    def param_domain(self) -> tuple[float, float]:
        """Open/half-open interval of valid parameter values."""
        if self.family is Family.OU:
            return (0.0, np.inf)
        return (0.0, 1.0)

    def check_design(self, design: GroupedDesign) -> None:
        """Raise if the design lacks what this family needs."""
        if (self.family is Family.OU and design.positions is None
                and not self.assume_unit_spacing):
            raise ConfigurationError(
                "the OU family needs per-group positions, or an explicit "
                "unit-spacing declaration"
            )


@dataclass(frozen=True)
class Dataset:
    """Stacked observations ordered by group, with fixed-effect covariates.

    ``X`` always carries the intercept as its first column of ones;
    ``column_names`` names the columns of ``X``.
    """

    y: NDArray
    X: NDArray
    design: GroupedDesign
    column_names: tuple[str, ...] = field(default=("intercept",))

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if y.ndim != 1:
            raise DataError("y must be a one-dimensional vector")
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DataError("X must be a matrix with one row per observation")
        if y.size != self.design.total_size:
            raise DataError(
                f"{y.size} observations but the design describes "
                f"{self.design.total_size}"
            )
        if X.shape[1] != len(self.column_names):
            raise DataError("column_names must name every column of X")
        if not np.allclose(X[:, 0], 1.0):
            raise DataError("the first column of X must be the intercept (all ones)")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError("y and X must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n_obs(self) -> int:
        return self.y.size

    @property
    def n_coef(self) -> int:
        return self.X.shape[1]

    def fingerprint(self) -> str:
        """Hash identifying the observed data (y and X).

        Deliberately excludes the grouping and the row order: evidence
        comparisons are valid across different grouping factors of the
        same observations, and regrouping permutes the rows.  Rows are
        brought into a canonical order before hashing.
        """
        keys = tuple(self.X[:, k] for k in range(self.X.shape[1] - 1, -1, -1))
        order = np.lexsort(keys + (self.y,))
        h = hashlib.sha256()
        h.update(self.y[order].tobytes())
        h.update(self.X[order].tobytes())
        return h.hexdigest()
