"""Synthetic grouped regression data with within-group correlation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtri

from .core import Dataset, GroupStructure, InvalidArgumentError, build_groups, make_dataset


@dataclass(frozen=True)
class SynthConfig:
    n: int = 400
    p: int = 500
    rho: float = 0.6
    group_size_range: tuple = (3, 25)
    active_group_fraction: float = 0.15
    active_var_fraction: float = 0.30
    signal_scale: float = 5.0
    signal_scale_is: str = "variance"
    model: str = "linear"
    seed: int = 42

    def __post_init__(self):
        lo, hi = self.group_size_range
        if not 1 <= lo <= hi:
            raise InvalidArgumentError("group_size_range must satisfy 1 <= lo <= hi")
        if self.n < 1:
            raise InvalidArgumentError("n must be positive")
        if self.p < lo:
            raise InvalidArgumentError(f"p must be at least the minimum group size {lo}")
        if not 0.0 <= self.rho < 1.0:
            raise InvalidArgumentError("rho must lie in [0, 1)")
        for frac in (self.active_group_fraction, self.active_var_fraction):
            if not 0.0 <= frac <= 1.0:
                raise InvalidArgumentError("fractions must lie in [0, 1]")
        if self.signal_scale_is not in ("variance", "sd"):
            raise InvalidArgumentError("signal_scale_is must be 'variance' or 'sd'")
        if self.model not in ("linear", "logistic"):
            raise InvalidArgumentError("model must be 'linear' or 'logistic'")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")

    @property
    def signal_sd(self) -> float:
        return math.sqrt(self.signal_scale) if self.signal_scale_is == "variance" else self.signal_scale


class _Stream:
    """Uniforms and normals from a Philox counter stream; normals by inverse CDF."""

    def __init__(self, seed: int):
        self._bits = np.random.Philox(seed)

    def uniform(self, size) -> np.ndarray:
        raw = self._bits.random_raw(int(np.prod(size)))
        # top 53 bits, offset by half a unit so the result lies strictly inside (0, 1)
        return (((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53).reshape(size)

    def normal(self, size) -> np.ndarray:
        return ndtri(self.uniform(size))

    def integers(self, lo: int, hi: int, size) -> np.ndarray:
        """Uniform integers in ``[lo, hi]``."""
        return lo + np.floor(self.uniform(size) * (hi - lo + 1)).astype(int)

    def choose(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices out of ``n`` in increasing order."""
        return np.sort(np.argsort(self.uniform(n), kind="stable")[:k])


def round_count(x: float) -> int:
    """Round half up, at least one."""
    return max(1, int(math.floor(x + 0.5)))


def draw_group_sizes(stream: _Stream, p: int, lo: int, hi: int) -> list:
    sizes = []
    total = 0
    while total < p:
        s = int(stream.integers(lo, hi, 1)[0])
        s = min(s, p - total)
        sizes.append(s)
        total += s
    return sizes


def generate_raw(config: SynthConfig):
    """Unstandardised ``(X, y, groups, beta)``."""
    stream = _Stream(config.seed)
    lo, hi = config.group_size_range
    sizes = draw_group_sizes(stream, config.p, lo, hi)
    groups = build_groups(np.repeat(np.arange(len(sizes)), sizes))
    n = config.n
    X = np.empty((n, config.p))
    a, b = math.sqrt(config.rho), math.sqrt(1.0 - config.rho)
    for idx in groups.group_index:
        shared = stream.normal((n, 1))
        X[:, idx] = a * shared + b * stream.normal((n, len(idx)))
    beta = np.zeros(config.p)
    n_active = round_count(config.active_group_fraction * groups.m) if config.active_group_fraction > 0 else 0
    for g in stream.choose(groups.m, min(n_active, groups.m)):
        idx = groups.group_index[g]
        k = min(round_count(config.active_var_fraction * len(idx)), len(idx))
        picked = idx[stream.choose(len(idx), k)]
        beta[picked] = config.signal_sd * stream.normal(k)
    eta = X @ beta + stream.normal(n)
    if config.model == "linear":
        y = eta
    else:
        y = (stream.uniform(n) < expit(eta)).astype(float)
    return X, y, groups, beta


def generate(config: SynthConfig, standardize: bool = True) -> tuple[Dataset, GroupStructure, np.ndarray]:
    """Draw a dataset; the returned :class:`Dataset` is standardised by default."""
    X, y, groups, beta = generate_raw(config)
    return make_dataset(X, y, loss=config.model, standardize=standardize), groups, beta
