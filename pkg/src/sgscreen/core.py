"""Group structures, datasets and the small vector utilities everything else uses."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised when an input violates an operation's preconditions."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces non-finite values or fails to bracket."""


class ConfigurationError(ValueError):
    """Raised when a parameter combination makes a formula degenerate."""


# |beta_i| above this counts as active
ACTIVE_THRESHOLD = 1e-6


@dataclass(frozen=True)
class GroupStructure:
    """Partition of ``p`` variables into ``m`` non-overlapping groups.

    ``assignment[j]`` is the (0-based, contiguous) group id of variable ``j``
    and ``group_index[g]`` lists the members of group ``g`` in increasing order.
    """

    assignment: np.ndarray
    group_index: tuple
    sizes: np.ndarray

    @property
    def m(self) -> int:
        return len(self.sizes)

    @property
    def p(self) -> int:
        return len(self.assignment)

    @property
    def sqrt_sizes(self) -> np.ndarray:
        return np.sqrt(self.sizes.astype(float))

    def variables_of(self, groups) -> np.ndarray:
        """Sorted variable indices belonging to any of ``groups``."""
        groups = np.asarray(list(groups), dtype=int)
        if groups.size == 0:
            return np.empty(0, dtype=int)
        return np.flatnonzero(np.isin(self.assignment, groups))

    def groups_of(self, variables) -> np.ndarray:
        """Sorted unique group ids touched by ``variables``."""
        variables = np.asarray(list(variables), dtype=int)
        return np.unique(self.assignment[variables])


def build_groups(assignment) -> GroupStructure:
    """Build a :class:`GroupStructure` from a per-variable group label list.

    Labels are re-indexed to ``0..m-1`` in increasing label order, e.g.
    ``[5, 5, 9]`` becomes ``[0, 0, 1]``.
    """
    labels = np.asarray(assignment)
    if labels.ndim != 1 or labels.size == 0:
        raise InvalidArgumentError("group assignment must be a non-empty 1-d sequence")
    _, ids = np.unique(labels, return_inverse=True)
    ids = ids.astype(np.int64).ravel()
    sizes = np.bincount(ids)
    order = np.argsort(ids, kind="stable")
    bounds = np.cumsum(sizes)[:-1]
    index = tuple(np.sort(chunk) for chunk in np.split(order, bounds))
    ids.setflags(write=False)
    sizes.setflags(write=False)
    return GroupStructure(assignment=ids, group_index=index, sizes=sizes)


def group_reduce(b, groups: GroupStructure, q: float, sizes=None) -> np.ndarray:
    """Per-group ``p_g**q * ||b^(g)||_2``.

    ``sizes`` overrides the ``p_g`` used in the scaling; the restricted solver
    needs this because a restricted group keeps its full-problem size.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (groups.p,):
        raise InvalidArgumentError(f"expected vector of length {groups.p}, got shape {b.shape}")
    # rescale by the group max so tiny or huge entries neither underflow nor overflow
    peak = np.zeros(groups.m)
    np.maximum.at(peak, groups.assignment, np.abs(b))
    safe = np.where(peak > 0, peak, 1.0)
    r = b / safe[groups.assignment]
    sq = np.bincount(groups.assignment, weights=r * r, minlength=groups.m)
    scale = groups.sizes if sizes is None else np.asarray(sizes)
    return np.power(scale.astype(float), q) * peak * np.sqrt(sq)


def sort_desc_with_index(x, absolute: bool = False):
    """Stable descending sort.

    Returns ``(sorted_values, perm)`` with ``sorted_values[i] == x[perm[i]]``
    (or ``|x[perm[i]]|`` when ``absolute``); ties keep the lower index first.
    """
    x = np.asarray(x, dtype=float)
    vals = np.abs(x) if absolute else x
    # stable ascending sort of -vals gives stable descending order
    perm = np.argsort(-vals, kind="stable")
    return vals[perm], perm


def active_groups(beta, groups: GroupStructure, threshold: float = ACTIVE_THRESHOLD) -> np.ndarray:
    hit = np.abs(np.asarray(beta)) > threshold
    return np.unique(groups.assignment[hit])


def active_variables(beta, threshold: float = ACTIVE_THRESHOLD) -> np.ndarray:
    return np.flatnonzero(np.abs(np.asarray(beta)) > threshold)


@dataclass(frozen=True)
class Dataset:
    """Design matrix and response, possibly already standardized.

    When ``standardized`` is set the columns of ``X`` are centered (linear
    loss with intercept) and scaled to unit l2 norm; ``x_center`` and
    ``x_scale`` hold what was removed so coefficients can be mapped back.
    ``intercept`` is the response mean removed for the linear model.
    """

    X: np.ndarray
    y: np.ndarray
    loss: str = "linear"
    standardized: bool = False
    intercept: float | None = None
    x_center: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    constant_columns: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def __post_init__(self):
        if self.loss not in ("linear", "logistic"):
            raise InvalidArgumentError(f"unknown loss {self.loss!r}")
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise InvalidArgumentError("X must be n x p and y of length n")
        if self.loss == "logistic" and not np.all(np.isin(self.y, (0.0, 1.0))):
            raise InvalidArgumentError("logistic responses must be 0/1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, columns) -> "Dataset":
        """View of the dataset restricted to ``columns`` (used by restricted fits)."""
        columns = np.asarray(columns, dtype=int)
        return Dataset(
            X=self.X[:, columns], y=self.y, loss=self.loss, standardized=self.standardized,
            intercept=self.intercept,
        )

    def original_scale(self, beta):
        """Map standardized-scale coefficients to ``(intercept, beta)`` on the raw scale."""
        beta = np.asarray(beta, dtype=float)
        scale = np.ones(self.p) if self.x_scale is None else self.x_scale
        center = np.zeros(self.p) if self.x_center is None else self.x_center
        raw = beta / scale
        b0 = (self.intercept or 0.0) - float(center @ raw)
        return b0, raw


def make_dataset(X, y, loss: str = "linear", standardize: bool = True, intercept: bool = True) -> Dataset:
    """Prepare raw arrays for fitting.

    Linear models with ``intercept`` get a centered response and centered
    columns; standardization then scales each non-constant column to unit l2
    norm. Constant columns are left alone and reported.
    """
    X = np.array(X, dtype=float, copy=True)
    y = np.array(y, dtype=float, copy=True).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidArgumentError("X must be n x p with n matching len(y)")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("non-finite values in X or y")
    use_intercept = intercept and loss == "linear"
    center = X.mean(axis=0) if (use_intercept or standardize) else np.zeros(X.shape[1])
    y_mean = None
    if use_intercept:
        y_mean = float(y.mean())
        y = y - y_mean
    scale = np.ones(X.shape[1])
    constant = np.empty(0, dtype=int)
    if standardize or use_intercept:
        X -= center
    if standardize:
        norms = np.linalg.norm(X, axis=0)
        constant = np.flatnonzero(norms <= 1e-12)
        scale = np.where(norms > 1e-12, norms, 1.0)
        X /= scale
    for a in (X, y, center, scale):
        a.setflags(write=False)
    return Dataset(
        X=X, y=y, loss=loss, standardized=standardize, intercept=y_mean,
        x_center=center, x_scale=scale, constant_columns=constant,
    )


def read_matrix(path) -> np.ndarray:
    """Headerless CSV, rows are observations."""
    data = np.loadtxt(Path(path), delimiter=",", ndmin=2)
    return data


def read_vector(path) -> np.ndarray:
    return np.loadtxt(Path(path), delimiter=",", ndmin=1).ravel()


def read_groups(path) -> GroupStructure:
    """One integer group label per line."""
    labels = [int(line) for line in Path(path).read_text().split()]
    return build_groups(labels)


def write_vector(path, values) -> None:
    np.savetxt(Path(path), np.asarray(values, dtype=float).reshape(-1, 1), delimiter=",", fmt="%.17g")


def write_matrix(path, values) -> None:
    np.savetxt(Path(path), np.asarray(values, dtype=float), delimiter=",", fmt="%.17g")


def write_groups(path, groups: GroupStructure) -> None:
    Path(path).write_text("".join(f"{g}\n" for g in groups.assignment))
