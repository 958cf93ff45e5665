"""Sorted-l1 (SLOPE), group SLOPE and sparse-group SLOPE norms and their proxes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import isotonic_regression

from .core import GroupStructure, InvalidArgumentError, group_reduce, sort_desc_with_index
from .weights import PenaltyWeights

# slack used whenever a cumsum inequality is tested
MEMBERSHIP_TOL = 1e-9

KINDS = ("slope", "gslope", "sgs")


@dataclass(frozen=True)
class PenaltySpec:
    kind: str
    weights: PenaltyWeights
    groups: GroupStructure
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown penalty kind {self.kind!r}")
        if self.kind in ("slope", "sgs"):
            if self.weights.v is None or len(self.weights.v) != self.groups.p:
                raise InvalidArgumentError("variable weights v of length p are required")
        if self.kind in ("gslope", "sgs"):
            if self.weights.w is None or len(self.weights.w) != self.groups.m:
                raise InvalidArgumentError("group weights w of length m are required")
        if self.kind == "sgs" and not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError("alpha must lie in [0, 1]")

    @property
    def v(self):
        return self.weights.v

    @property
    def w(self):
        return self.weights.w

    def variable_weight(self) -> float:
        """Multiplier on the SLOPE part."""
        return {"slope": 1.0, "gslope": 0.0, "sgs": self.alpha}[self.kind]

    def group_weight(self) -> float:
        """Multiplier on the group SLOPE part."""
        return {"slope": 0.0, "gslope": 1.0, "sgs": 1.0 - self.alpha}[self.kind]

    def value(self, beta) -> float:
        if self.kind == "slope":
            return slope_norm(beta, self.v)
        if self.kind == "gslope":
            return gslope_norm(beta, self.w, self.groups)
        return sgs_norm(beta, self)


def _check_len(a, b):
    if len(a) != len(b):
        raise InvalidArgumentError(f"length mismatch: {len(a)} vs {len(b)}")


def slope_norm(beta, v) -> float:
    """``sum_i v_i |beta|_(i)``."""
    beta = np.asarray(beta, dtype=float)
    _check_len(beta, v)
    return float(np.sort(np.abs(beta))[::-1] @ np.asarray(v, dtype=float))


def gslope_norm(beta, w, groups: GroupStructure, sizes=None) -> float:
    """``sum_g w_g (sqrt(p_g) ||beta^(g)||)_(g)``, weights matched to sorted group terms."""
    _check_len(w, np.empty(groups.m))
    return slope_norm(group_reduce(beta, groups, 0.5, sizes), w)


def sgs_norm(beta, spec: PenaltySpec) -> float:
    if spec.kind != "sgs":
        raise InvalidArgumentError("sgs_norm needs an sgs PenaltySpec")
    a = spec.alpha
    return a * slope_norm(beta, spec.v) + (1 - a) * gslope_norm(beta, spec.w, spec.groups)


def slope_dual_norm(x, v) -> float:
    """``max_k cumsum(|x|_desc)_k / cumsum(v)_k`` over prefixes with positive weight mass."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_len(x, v)
    cv = np.cumsum(v)
    if cv[-1] <= 0:
        raise InvalidArgumentError("weights are all zero; dual norm undefined")
    cx = np.cumsum(np.sort(np.abs(x))[::-1])
    ok = cv > 0
    if np.any(cx[~ok] > 0):
        return float("inf")
    return float(np.max(cx[ok] / cv[ok]))


def gslope_dual_norm(x, w, groups: GroupStructure) -> float:
    return slope_dual_norm(group_reduce(x, groups, -0.5), w)


def soft_threshold(x, t) -> np.ndarray:
    """``sign(x) * max(|x| - t, 0)``."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidArgumentError("thresholds must be nonnegative")
    if t.shape != () and t.shape != x.shape:
        raise InvalidArgumentError("length mismatch between x and thresholds")
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def slope_subdiff_zero_check(x, v, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff every prefix sum of ``|x|_desc - v`` is ``<= tol``."""
    x = np.asarray(x, dtype=float)
    _check_len(x, v)
    return bool(np.all(np.cumsum(np.sort(np.abs(x))[::-1] - np.asarray(v)) <= tol))


# --- proximal operators -------------------------------------------------------

def _sorted_owl_prox(a, lam, d, max_rounds=None):
    """Minimise ``sum_g d_g/2 (s_g - a_g)^2 + sum_i lam_i s_(i)`` over ``s >= 0``.

    ``a >= 0``, ``lam`` nonincreasing, ``d > 0``. With unit ``d`` the
    ordering of the solution follows ``a`` and one weighted PAVA pass is
    exact. With unequal ``d`` that ordering can be wrong, so after each pass
    every tied block is checked against the permutahedron condition and,
    if it fails, reordered by its residual subgradient; each repair strictly
    lowers the objective so the loop terminates.
    """
    n = len(a)
    if n == 0:
        return np.zeros(0)
    _, order = sort_desc_with_index(a)
    uniform = bool(np.all(d == d[0]))
    rounds = 0
    limit = max_rounds if max_rounds is not None else 4 * n + 10
    while True:
        da = d[order]
        target = a[order] - lam / da
        res = isotonic_regression(target, weights=da, increasing=False)
        s_sorted = np.maximum(res.x, 0.0)
        if uniform or rounds >= limit:
            break
        blocks = _blocks(res.blocks, s_sorted)
        new_order = order.copy()
        changed = False
        for lo, hi in blocks:
            idx = order[lo:hi]
            if hi - lo < 2:
                continue
            zeta = d[idx] * (a[idx] - s_sorted[lo:hi])
            lam_blk = lam[lo:hi]
            ranked = np.argsort(-zeta, kind="stable")
            slack = np.cumsum(zeta[ranked]) - np.cumsum(lam_blk)
            scale = max(1.0, float(np.max(np.abs(lam_blk))))
            if np.any(slack[:-1] > 1e-12 * scale):
                new_order[lo:hi] = idx[ranked]
                changed = True
        if not changed:
            break
        order = new_order
        rounds += 1
    s = np.empty(n)
    s[order] = s_sorted
    return s


def _blocks(bounds, s_sorted):
    """Tie blocks of the isotonic fit, with everything clipped to zero merged."""
    edges = list(bounds)
    out = []
    zero_start = None
    for lo, hi in zip(edges[:-1], edges[1:]):
        if s_sorted[lo] == 0.0:
            zero_start = lo if zero_start is None else zero_start
            continue
        out.append((lo, hi))
    if zero_start is not None:
        out.append((zero_start, edges[-1]))
    return out


def slope_prox(y, tv) -> np.ndarray:
    """``argmin_b 1/2 ||b - y||^2 + sum_i tv_i |b|_(i)`` for nonincreasing ``tv``."""
    y = np.asarray(y, dtype=float)
    tv = np.asarray(tv, dtype=float)
    _check_len(y, tv)
    s = _sorted_owl_prox(np.abs(y), tv, np.ones(len(y)))
    return np.sign(y) * s


def gslope_prox(y, tw, groups: GroupStructure, sizes=None) -> np.ndarray:
    """Prox of ``b -> sum_i tw_i (sqrt(p_g) ||b^(g)||)_(i)``.

    Groups are shrunk radially; the group radii solve a sorted-l1 problem
    in the scaled norms ``sqrt(p_g) ||y^(g)||`` with quadratic weights
    ``1 / p_g``. ``sizes`` overrides ``p_g`` (restricted problems).
    """
    y = np.asarray(y, dtype=float)
    tw = np.asarray(tw, dtype=float)
    _check_len(tw, np.empty(groups.m))
    size = (groups.sizes if sizes is None else np.asarray(sizes)).astype(float)
    norms = group_reduce(y, groups, 0.0)
    root = np.sqrt(size)
    s = _sorted_owl_prox(root * norms, tw, 1.0 / size)
    radius = s / root
    single = groups.sizes[groups.assignment] == 1
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(norms > 0, radius / norms, 0.0)
    out = y * factor[groups.assignment]
    if np.any(single):
        # a size-one group is a plain coordinate; keep this path identical to slope_prox
        out[single] = np.sign(y[single]) * radius[groups.assignment[single]]
    return out


def sgs_prox_parts(spec: PenaltySpec, lam: float, step: float, sizes=None):
    """The two resolvents used by the splitting solver for ``lam * J``."""
    va = lam * step * spec.variable_weight()
    wa = lam * step * spec.group_weight()

    def prox_var(z):
        return slope_prox(z, va * spec.v) if va > 0 else z

    def prox_grp(z):
        return gslope_prox(z, wa * spec.w, spec.groups, sizes) if wa > 0 else z

    return prox_var, prox_grp
