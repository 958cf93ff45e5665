"""Ordered penalty-weight sequences.

All sequences are indexed by sorted position: entry ``i`` is paired with the
``i``-th largest coefficient (or group statistic).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .core import GroupStructure, InvalidArgumentError, NumericalError

CDF_TOL = 1e-10
MAX_BISECT = 200
MAX_BRACKET = 1e8

SCHEMES = ("slope_bh", "gslope_mean", "gslope_max", "sgs_mean", "sgs_max", "oscar")


@dataclass(frozen=True)
class WeightConfig:
    scheme: str = "sgs_mean"
    q_v: float = 0.05
    q_g: float = 0.05
    alpha: float = 0.95
    oscar_sigma1: float = 1.0
    oscar_sigma2: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"unknown weight scheme {self.scheme!r}")
        for name in ("q_v", "q_g"):
            q = getattr(self, name)
            if not 0.0 < q < 1.0:
                raise InvalidArgumentError(f"{name} must lie in (0, 1), got {q}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.oscar_sigma1 <= 0:
            raise InvalidArgumentError("oscar_sigma1 must be positive")


@dataclass(frozen=True)
class PenaltyWeights:
    """Variable weights ``v`` (length p) and group weights ``w`` (length m)."""

    v: np.ndarray | None = None
    w: np.ndarray | None = None

    def __post_init__(self):
        for name in ("v", "w"):
            seq = getattr(self, name)
            if seq is None:
                continue
            seq = np.asarray(seq, dtype=float)
            if seq.ndim != 1 or np.any(seq < 0) or np.any(np.diff(seq) > 1e-12):
                raise InvalidArgumentError(f"{name} must be nonnegative and nonincreasing")
            seq.setflags(write=False)
            object.__setattr__(self, name, seq)


# --- distribution functions -------------------------------------------------

def chi_cdf(x, df):
    """CDF of the chi distribution with ``df`` degrees of freedom."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return special.gammainc(np.asarray(df, dtype=float) / 2.0, x * x / 2.0)


def normal_cdf(x):
    return special.ndtr(x)


def folded_normal_cdf(x):
    """CDF of |Z| for standard normal Z (zero for negative arguments)."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return special.erf(x / math.sqrt(2.0))


def inverse_cdf(cdf: Callable[[float], float], target: float, bracket=(0.0, 1.0)) -> float:
    """Invert a nondecreasing scalar ``cdf`` at ``target`` by bisection.

    The bracket must straddle the target; see :func:`quantile` for the
    version that widens the bracket itself.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    f_lo, f_hi = cdf(lo) - target, cdf(hi) - target
    if f_lo > 0 or f_hi < 0:
        raise NumericalError(f"bracket [{lo}, {hi}] does not straddle target {target}")
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        f_mid = cdf(mid) - target
        if abs(f_mid) <= CDF_TOL and hi - lo <= 1e-12 * max(1.0, abs(mid)):
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            break
    mid = 0.5 * (lo + hi)
    if abs(cdf(mid) - target) > CDF_TOL:
        raise NumericalError(f"bisection did not reach tolerance for target {target}")
    return mid


def quantile(cdf: Callable[[float], float], target: float, lo: float = 0.0, hi: float = 1.0) -> float:
    """:func:`inverse_cdf` with geometric bracket widening up to ``1e8``."""
    while cdf(hi) < target:
        if hi >= MAX_BRACKET:
            raise NumericalError(f"could not bracket quantile {target}")
        hi = hi * 2.0 if hi > 0 else 1.0
    while cdf(lo) > target:
        if lo <= -MAX_BRACKET:
            raise NumericalError(f"could not bracket quantile {target}")
        lo = lo * 2.0 if lo < 0 else -1.0
    return inverse_cdf(cdf, target, (lo, hi))


# --- sequences ----------------------------------------------------------------

def slope_bh_weights(p: int, q_v: float) -> np.ndarray:
    """Benjamini-Hochberg style SLOPE sequence ``Phi^-1(1 - q i / 2p)``."""
    i = np.arange(1, p + 1)
    return special.ndtri(1.0 - q_v * i / (2.0 * p))


def gslope_mean_weights(groups: GroupStructure, q_g: float) -> np.ndarray:
    """Group weights from the size-averaged chi CDF.

    ``w_i`` solves ``mean_j F_chi(p_j)(sqrt(p_j) x) = 1 - q_g i / m``.
    """
    _check_q(q_g)
    sizes = groups.sizes.astype(float)
    roots = np.sqrt(sizes)
    m = groups.m

    def mean_cdf(x):
        return float(np.mean(chi_cdf(roots * x, sizes)))

    out = np.empty(m)
    hi = 1.0
    for i in range(1, m + 1):
        out[i - 1] = quantile(mean_cdf, 1.0 - q_g * i / m, 0.0, hi)
        hi = max(out[i - 1], 1e-8)  # sequence is nonincreasing
    return out


def gslope_max_weights(groups: GroupStructure, q_g: float) -> np.ndarray:
    """``w_i = max_j p_j^{-1/2} F_chi(p_j)^{-1}(1 - q_g i / m)``."""
    _check_q(q_g)
    m = groups.m
    targets = 1.0 - q_g * np.arange(1, m + 1) / m
    out = np.zeros(m)
    for size in np.unique(groups.sizes):
        curve = _chi_quantiles(int(size), targets) / math.sqrt(size)
        out = np.maximum(out, curve)
    return out


def _chi_quantiles(df: int, targets) -> np.ndarray:
    # chi quantile = sqrt of chi-square quantile; gammaincinv is the exact inverse
    return np.sqrt(2.0 * special.gammaincinv(df / 2.0, np.asarray(targets)))


def sgs_mean_weights(
    groups: GroupStructure,
    q_v: float,
    q_g: float,
    alpha: float,
    group_scheme: str = "gslope",
    group_divisor: str = "p",
    variable_cdf: str = "normal",
) -> "PenaltyWeights":
    """Variable and group weights for sparse-group SLOPE (mean relaxation).

    ``w`` is computed first (gSLOPE mean weights by default), then
    ``v_i`` inverts ``mean_j F(alpha x + (1 - alpha) a_j w_j / 3)`` at
    ``1 - q_v i / 2p`` with ``a_j = floor(alpha p_j)``.

    ``variable_cdf`` picks ``F``: ``"normal"`` (standard Gaussian, which
    reduces to the BH sequence at alpha=1) or ``"folded"``.
    ``group_scheme="sgs"`` recomputes ``w`` from the folded-normal group
    formula, inverting at ``1 - q_g i / p`` (or ``/ m`` with
    ``group_divisor="m"``).
    """
    _check_q(q_v)
    _check_q(q_g)
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError("sgs weights need alpha in (0, 1); use slope/gslope weights at the endpoints")
    w = gslope_mean_weights(groups, q_g)
    v = _sgs_mean_v(groups, q_v, alpha, w, variable_cdf)
    if group_scheme == "sgs":
        w = _sgs_mean_w(groups, q_g, alpha, v, group_divisor)
    elif group_scheme != "gslope":
        raise InvalidArgumentError(f"unknown group_scheme {group_scheme!r}")
    return PenaltyWeights(v=_monotone_clip(v), w=_monotone_clip(w))


def _variable_cdf(kind: str):
    if kind == "normal":
        return normal_cdf
    if kind == "folded":
        return folded_normal_cdf
    raise InvalidArgumentError(f"unknown variable_cdf {kind!r}")


def _sgs_mean_v(groups, q_v, alpha, w, variable_cdf):
    cdf = _variable_cdf(variable_cdf)
    a = np.floor(alpha * groups.sizes)
    # w is paired with groups by sorted position j
    shift = (1.0 - alpha) * a * w / 3.0
    p = groups.p

    def mean_cdf(x):
        return float(np.mean(cdf(alpha * x + shift)))

    out = np.empty(p)
    for i in range(1, p + 1):
        out[i - 1] = quantile(mean_cdf, 1.0 - q_v * i / (2.0 * p), -1.0, 1.0)
    return out


def _group_sums(groups, v):
    # sum of v_k over the variable indices k of each group
    return np.bincount(groups.assignment, weights=v, minlength=groups.m)


def _sgs_mean_w(groups, q_g, alpha, v, divisor):
    denom = {"p": groups.p, "m": groups.m}.get(divisor)
    if denom is None:
        raise InvalidArgumentError(f"group_divisor must be 'p' or 'm', got {divisor!r}")
    sums = _group_sums(groups, v)
    sizes = groups.sizes.astype(float)

    def mean_cdf(x):
        return float(np.mean(folded_normal_cdf((1.0 - alpha) * sizes * x + alpha * sums)))

    m = groups.m
    out = np.empty(m)
    for i in range(1, m + 1):
        out[i - 1] = quantile(mean_cdf, 1.0 - q_g * i / denom, -1.0, 1.0)
    return out


def sgs_max_weights(groups: GroupStructure, q_v: float, q_g: float, alpha: float) -> "PenaltyWeights":
    """Max-type sparse-group SLOPE weights.

    ``v_i = max_j [Phi^-1(1 - q_v i / 2p) - (1 - alpha) a_j w_j / 3] / alpha``
    with ``w`` from :func:`gslope_max_weights`, then
    ``w_i = max_j [F_FN^-1(1 - q_g i / m) - alpha sum_{k in G_j} v_k] / ((1 - alpha) p_j)``
    with ``F_FN`` the standard folded normal. Both are clipped at zero.
    """
    _check_q(q_v)
    _check_q(q_g)
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError("sgs weights need alpha in (0, 1)")
    p, m = groups.p, groups.m
    w0 = gslope_max_weights(groups, q_g)
    a = np.floor(alpha * groups.sizes)
    base_v = special.ndtri(1.0 - q_v * np.arange(1, p + 1) / (2.0 * p)) / alpha
    offset = np.max(-(1.0 - alpha) * a * w0 / (3.0 * alpha))
    v = base_v + offset
    sums = _group_sums(groups, np.maximum(v, 0.0))
    # folded-normal quantile of 1 - t is Phi^-1(1 - t/2)
    fn_q = special.ndtri(1.0 - q_g * np.arange(1, m + 1) / (2.0 * m))
    terms = (fn_q[:, None] - alpha * sums[None, :]) / ((1.0 - alpha) * groups.sizes[None, :])
    w = terms.max(axis=1)
    return PenaltyWeights(v=_monotone_clip(v), w=_monotone_clip(w))


def oscar_weights(p: int, m: int, sigma1: float, sigma2: float | None = None) -> "PenaltyWeights":
    """Linear-decay OSCAR weights ``v_i = s1 + s2 (p - i)``, ``w_g = s1 + s3 (m - g)``.

    ``s2`` defaults to ``s1 / p`` and ``s3`` is always ``s1 / m``.
    """
    if sigma1 <= 0:
        raise InvalidArgumentError("sigma1 must be positive")
    s2 = sigma1 / p if sigma2 is None else sigma2
    s3 = sigma1 / m
    v = sigma1 + s2 * (p - np.arange(1, p + 1))
    w = sigma1 + s3 * (m - np.arange(1, m + 1))
    return PenaltyWeights(v=v, w=w)


def oscar_sigma1(X, y) -> float:
    """Default OSCAR scale ``e^-2 ||X^T y||_inf``."""
    return math.exp(-2.0) * float(np.max(np.abs(np.asarray(X).T @ np.asarray(y))))


def make_weights(config: WeightConfig, groups: GroupStructure) -> PenaltyWeights:
    s = config.scheme
    if s == "slope_bh":
        return PenaltyWeights(v=slope_bh_weights(groups.p, config.q_v))
    if s == "gslope_mean":
        return PenaltyWeights(w=gslope_mean_weights(groups, config.q_g))
    if s == "gslope_max":
        return PenaltyWeights(w=gslope_max_weights(groups, config.q_g))
    if s == "sgs_mean":
        return sgs_mean_weights(groups, config.q_v, config.q_g, config.alpha)
    if s == "sgs_max":
        return sgs_max_weights(groups, config.q_v, config.q_g, config.alpha)
    return oscar_weights(groups.p, groups.m, config.oscar_sigma1, config.oscar_sigma2)


def _check_q(q):
    if not 0.0 < q < 1.0:
        raise InvalidArgumentError(f"FDR level must lie in (0, 1), got {q}")


def _monotone_clip(seq):
    seq = np.maximum(np.asarray(seq, dtype=float), 0.0)
    # bisection noise can break monotonicity in the last few ulps
    return np.minimum.accumulate(seq)
