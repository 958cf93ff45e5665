"""Strong screening rules built on the cumulative-sum subdifferential kernel.

All rules share :func:`cumsum_screen`: a statistic ``c`` and a threshold
``phi`` (both in sorted order) are scanned left to right while a buffer of
indices accumulates, and the buffer is flushed into the screened set as
soon as its surplus ``sum(c - phi)`` stops being negative.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ACTIVE_THRESHOLD, ConfigurationError, GroupStructure, InvalidArgumentError, group_reduce, sort_desc_with_index
from .penalty import gslope_dual_norm, slope_dual_norm, soft_threshold

MODES = ("total", "prefix")


def _empty():
    return np.empty(0, dtype=int)


@dataclass
class ScreenSets:
    """Index sets recorded at one path point (all hold original ids)."""

    A_g: np.ndarray = field(default_factory=_empty)
    S_g: np.ndarray = field(default_factory=_empty)
    E_g: np.ndarray = field(default_factory=_empty)
    K_g: np.ndarray = field(default_factory=_empty)
    A_v: np.ndarray = field(default_factory=_empty)
    S_v: np.ndarray = field(default_factory=_empty)
    E_v: np.ndarray = field(default_factory=_empty)
    K_v: np.ndarray = field(default_factory=_empty)

    def cardinalities(self) -> dict:
        return {f"card_{name}": int(len(getattr(self, name))) for name in
                ("A_g", "S_g", "E_g", "K_g", "A_v", "S_v", "E_v", "K_v")}


@dataclass(frozen=True)
class ScreenCandidates:
    """Sorted statistic, its threshold, and the map back to original ids."""

    c: np.ndarray
    phi: np.ndarray
    perm: np.ndarray

    def __post_init__(self):
        if not (len(self.c) == len(self.phi) == len(self.perm)):
            raise InvalidArgumentError("c, phi and perm must have equal length")
        if len(self.phi) > 1 and np.any(np.diff(self.phi) > 1e-12 * max(1.0, float(np.max(self.phi)))):
            raise InvalidArgumentError("phi must be nonincreasing")

    def screen(self, mode: str = "total", slack: float = 0.0) -> np.ndarray:
        return np.sort(self.perm[cumsum_screen(self.c, self.phi, mode=mode, slack=slack)])


def cumsum_screen(c, phi, mode: str = "total", slack: float = 0.0) -> np.ndarray:
    """Positions (0-based, sorted order) kept by the buffered cumsum scan.

    ``mode="total"`` flushes the buffer when its total surplus is ``>= slack``;
    ``mode="prefix"`` additionally requires every prefix of the buffer to be
    ``>= slack``.

    >>> cumsum_screen([5, 0, 0], [1, 1, 1]).tolist()
    [0]
    >>> cumsum_screen([2, 2, 0], [3, 1, 1]).tolist()
    [0, 1]
    """
    c = np.asarray(c, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if c.shape != phi.shape or c.ndim != 1:
        raise InvalidArgumentError("c and phi must be 1-d of equal length")
    if mode not in MODES:
        raise InvalidArgumentError(f"mode must be one of {MODES}")
    diff = c - phi
    kept = []
    start = 0
    total = 0.0
    prefix_ok = True
    for i, d in enumerate(diff):
        total += d
        if mode == "prefix" and total < slack:
            prefix_ok = False
        if total >= slack and prefix_ok:
            kept.extend(range(start, i + 1))
            start = i + 1
            total = 0.0
    return np.asarray(kept, dtype=int)


def _check_lambdas(lambda_k, lambda_next):
    if lambda_k < 0 or lambda_next < 0:
        raise InvalidArgumentError("lambda values must be nonnegative")
    if lambda_next > lambda_k * (1 + 1e-12):
        raise InvalidArgumentError("lambda_next must not exceed lambda_k")


def paired_weights(x, v, beta=None, threshold=ACTIVE_THRESHOLD):
    """``v`` rearranged so the largest weight sits on the largest ``|x|``.

    With ``beta`` the nonzero coefficients take the leading weights in order
    of ``|beta|`` and the remaining variables share the tail in order of
    ``|x|``. Coefficients tied in magnitude (within ``threshold``) form one
    SLOPE cluster, whose subgradient may spread the cluster's weights in any
    way; every member gets the smallest of them so no active variable is
    thresholded harder than it can be.
    """
    v = np.asarray(v, dtype=float)
    out = np.empty(len(v))
    if beta is None:
        _, perm = sort_desc_with_index(x, absolute=True)
        out[perm] = v
        return out
    beta = np.asarray(beta, dtype=float)
    act = np.flatnonzero(np.abs(beta) > threshold)
    rest = np.flatnonzero(np.abs(beta) <= threshold)
    b_sorted, pa = sort_desc_with_index(beta[act], absolute=True)
    _, pr = sort_desc_with_index(np.asarray(x, dtype=float)[rest], absolute=True)
    lead = v[: len(act)].copy()
    if len(act) > 1:
        cluster = np.concatenate([[0], np.cumsum(-np.diff(b_sorted) > threshold)])
        last = np.flatnonzero(np.append(np.diff(cluster) != 0, True))
        lead = lead[last][cluster]
    out[act[pa]] = lead
    out[rest[pr]] = v[len(act):]
    return out


def gslope_screen(h_prev, w, lambda_k, lambda_next, groups: GroupStructure, mode="total",
                  slack=0.0) -> np.ndarray:
    """Group strong rule for group SLOPE.

    ``h_prev`` is the per-group statistic ``||grad^(g)|| / sqrt(p_g)`` at
    ``lambda_k``, in group order. Returns the screened group ids.
    """
    _check_lambdas(lambda_k, lambda_next)
    h_prev = np.asarray(h_prev, dtype=float)
    w = np.asarray(w, dtype=float)
    if len(h_prev) != groups.m or len(w) != groups.m:
        raise InvalidArgumentError("h_prev and w must have one entry per group")
    h_sorted, perm = sort_desc_with_index(h_prev)
    cand = ScreenCandidates(c=h_sorted + (lambda_k - lambda_next) * w, phi=lambda_next * w, perm=perm)
    return cand.screen(mode, slack)


def sgs_group_statistic(grad, v, alpha, lam, groups: GroupStructure, beta=None) -> np.ndarray:
    """Per-group norm of the gradient left after the SLOPE part absorbs what it can."""
    resid = soft_threshold(grad, lam * alpha * paired_weights(grad, v, beta))
    return group_reduce(resid, groups, -0.5)


def sgs_group_screen(grad_prev, v, w, alpha, lambda_k, lambda_next, groups: GroupStructure, mode="total",
                     beta_prev=None, slack=0.0):
    """Group strong rule for sparse-group SLOPE; returns screened group ids.

    Without ``beta_prev`` the SLOPE weights are matched to the gradient by
    rank over all variables. Passing the solution the gradient was taken
    at matches its nonzero coefficients by coefficient rank instead, which
    keeps active groups from being thresholded with weights they do not hold.
    """
    _check_lambdas(lambda_k, lambda_next)
    if not 0.0 <= alpha < 1.0:
        raise InvalidArgumentError("alpha must lie in [0, 1); for alpha = 1 use slope_screen")
    w = np.asarray(w, dtype=float)
    h = sgs_group_statistic(grad_prev, v, alpha, lambda_k, groups, beta_prev)
    h_sorted, perm = sort_desc_with_index(h)
    gap = (lambda_k - lambda_next) * (1 - alpha)
    cand = ScreenCandidates(c=h_sorted + gap * w, phi=lambda_next * (1 - alpha) * w, perm=perm)
    return cand.screen(mode, slack)


def sgs_variable_screen(grad_prev, v, alpha, lambda_k, lambda_next, candidate_groups,
                        groups: GroupStructure, mode="total", slack=0.0) -> np.ndarray:
    """Variable strong rule for sparse-group SLOPE over the variables of ``candidate_groups``.

    The candidate variables are ranked by ``|grad|`` and matched with the
    leading entries of ``v``.
    """
    _check_lambdas(lambda_k, lambda_next)
    idx = groups.variables_of(candidate_groups)
    if idx.size == 0:
        return _empty()
    g_sorted, local = sort_desc_with_index(np.asarray(grad_prev)[idx], absolute=True)
    vv = np.asarray(v, dtype=float)[: idx.size]
    cand = ScreenCandidates(
        c=g_sorted + (lambda_k - lambda_next) * alpha * vv,
        phi=lambda_next * alpha * vv,
        perm=idx[local],
    )
    return cand.screen(mode, slack)


def slope_screen(grad_prev, v, lambda_k, lambda_next, mode="total", slack=0.0) -> np.ndarray:
    """Strong rule for plain SLOPE over all variables."""
    _check_lambdas(lambda_k, lambda_next)
    v = np.asarray(v, dtype=float)
    g_sorted, perm = sort_desc_with_index(grad_prev, absolute=True)
    cand = ScreenCandidates(c=g_sorted + (lambda_k - lambda_next) * v, phi=lambda_next * v, perm=perm)
    return cand.screen(mode, slack)


# --- path start ---------------------------------------------------------------

def gslope_lambda_max(grad0, w, groups: GroupStructure) -> float:
    """Smallest lambda with the zero vector optimal for group SLOPE."""
    grad0 = np.asarray(grad0, dtype=float)
    if not np.any(grad0):
        return 0.0
    h = np.sort(group_reduce(grad0, groups, -0.5))[::-1]
    cw = np.cumsum(np.asarray(w, dtype=float))
    ok = cw > 0
    return float(np.max(np.cumsum(h)[ok] / cw[ok]))


def slope_lambda_max(grad0, v) -> float:
    grad0 = np.asarray(grad0, dtype=float)
    if not np.any(grad0):
        return 0.0
    return slope_dual_norm(grad0, v)


def sgs_lambda_max(grad0, v, w, alpha, groups: GroupStructure) -> float:
    """Closed-form path start for sparse-group SLOPE as a ratio of prefix sums.

    Variables are taken in decreasing ``|grad0|``; each carries
    ``(1 - alpha) sqrt(p_g) w_g - alpha v_i`` in the denominator, where
    ``w_g`` is the weight its group receives when groups are ranked by
    ``||grad0^(g)|| / sqrt(p_g)``. This expression is not always the
    smallest lambda for which zero is optimal; see :func:`sgs_path_start`.
    """
    grad0 = np.asarray(grad0, dtype=float)
    if not np.any(grad0):
        return 0.0
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    _, gperm = sort_desc_with_index(group_reduce(grad0, groups, -0.5))
    group_w = np.empty(groups.m)
    group_w[gperm] = w
    g_sorted, perm = sort_desc_with_index(grad0, absolute=True)
    gid = groups.assignment[perm]
    denom = np.cumsum((1 - alpha) * groups.sqrt_sizes[gid] * group_w[gid] - alpha * v)
    ok = denom > 0
    if not np.any(ok):
        raise ConfigurationError(
            "every prefix of (1-alpha)*sqrt(p_g)*w - alpha*v is nonpositive; "
            "reduce alpha or rescale the weights, or use sgs_path_start"
        )
    return float(np.max(np.cumsum(g_sorted)[ok] / denom[ok]))


def sgs_zero_is_optimal(grad0, v, w, alpha, lam, groups: GroupStructure, tol: float = 0.0) -> bool:
    """Sufficient certificate that ``beta = 0`` solves the sparse-group SLOPE problem at ``lam``."""
    if alpha >= 1.0:
        return slope_dual_norm(grad0, v) <= lam * (1 + tol)
    h = np.sort(sgs_group_statistic(grad0, v, alpha, lam, groups))[::-1]
    slack = np.cumsum(h - lam * (1 - alpha) * np.asarray(w))
    return bool(np.all(slack <= tol * max(1.0, lam)))


def sgs_path_start(grad0, v, w, alpha, groups: GroupStructure, rtol: float = 1e-12) -> float:
    """Smallest lambda at which zero passes the sparse-group SLOPE zero check, by bisection.

    The check is monotone in lambda, so bisection between a value that
    fails and one that passes converges to the boundary.
    """
    grad0 = np.asarray(grad0, dtype=float)
    if not np.any(grad0):
        return 0.0
    if alpha >= 1.0:
        return slope_dual_norm(grad0, v)
    # with the SLOPE part ignored the group check alone certifies zero
    hi = gslope_dual_norm(grad0, w, groups) / (1 - alpha)
    if alpha > 0:
        hi = min(hi, _sgs_hi(grad0, v, w, alpha, groups, hi))
    lo = 0.0
    for _ in range(200):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if sgs_zero_is_optimal(grad0, v, w, alpha, mid, groups):
            hi = mid
        else:
            lo = mid
    return float(hi)


def _sgs_hi(grad0, v, w, alpha, groups, hi):
    # a cheaper upper bracket: the lambda at which the SLOPE part alone absorbs the gradient
    slope_only = slope_dual_norm(grad0, v) / alpha
    return slope_only if sgs_zero_is_optimal(grad0, v, w, alpha, slope_only, groups) else hi
