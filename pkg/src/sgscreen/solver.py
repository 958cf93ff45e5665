"""Losses and the adaptive three-operator splitting solver.

The objective is ``f(beta) + lam * (a * J_slope(beta) + (1 - a) * J_gslope(beta))``.
The SLOPE part is the first resolvent and the group part the second; when
one of them is absent the second resolvent is the identity and the scheme
is proximal gradient descent with backtracking.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .core import Dataset, InvalidArgumentError, NumericalError, build_groups, group_reduce, sort_desc_with_index
from .penalty import PenaltySpec, gslope_norm, gslope_prox, slope_norm, slope_prox, soft_threshold
from .weights import PenaltyWeights

log = logging.getLogger(__name__)

SUBSET_RULES = ("leading", "rank")


@dataclass(frozen=True)
class SolverConfig:
    """ATOS settings. ``initial_step=None`` means ``1 / L`` from a power-iteration estimate."""

    max_iter: int = 5000
    backtrack_factor: float = 0.7
    max_backtrack: int = 100
    tol: float = 1e-5
    initial_step: float | None = None
    divergence_window: int = 50
    weight_subset: str = "leading"

    def __post_init__(self):
        if not 0.0 < self.backtrack_factor < 1.0:
            raise InvalidArgumentError("backtrack_factor must lie in (0, 1)")
        if self.tol <= 0:
            raise InvalidArgumentError("tol must be positive")
        if self.max_iter < 1 or self.max_backtrack < 0:
            raise InvalidArgumentError("max_iter must be >= 1 and max_backtrack >= 0")
        if self.initial_step is not None and self.initial_step <= 0:
            raise InvalidArgumentError("initial_step must be positive")
        if self.weight_subset not in SUBSET_RULES:
            raise InvalidArgumentError(f"weight_subset must be one of {SUBSET_RULES}")


@dataclass
class FitResult:
    beta: np.ndarray
    iterations: int
    converged: bool
    objective: float
    increases: int = 0
    step: float = float("nan")


def _loss(X, y, loss, beta):
    eta = X @ beta
    if loss == "linear":
        r = y - eta
        return 0.5 * float(r @ r), eta
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta)), eta


def _grad_from_eta(X, y, loss, eta):
    if loss == "linear":
        return X.T @ (eta - y)
    return X.T @ (expit(eta) - y)


def loss_and_grad(dataset: Dataset, beta):
    """Value and gradient of the unnormalised loss at ``beta``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (dataset.p,):
        raise InvalidArgumentError(f"beta must have length {dataset.p}")
    f, eta = _loss(dataset.X, dataset.y, dataset.loss, beta)
    g = _grad_from_eta(dataset.X, dataset.y, dataset.loss, eta)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalError("non-finite loss or gradient")
    return f, g


def lipschitz_estimate(X, loss: str, iters: int = 10) -> float:
    """Power-iteration estimate of the gradient's Lipschitz constant."""
    p = X.shape[1]
    if p == 0 or X.shape[0] == 0:
        return 1.0
    x = np.full(p, 1.0 / np.sqrt(p))
    val = 0.0
    for _ in range(iters):
        y = X.T @ (X @ x)
        val = float(np.linalg.norm(y))
        if val == 0.0:
            return 1.0
        x = y / val
    return val * (0.25 if loss == "logistic" else 1.0)


class _Problem:
    """A (possibly restricted) problem with everything the iteration needs."""

    def __init__(self, X, y, loss, spec: PenaltySpec, lam, sizes=None):
        self.X, self.y, self.loss = X, y, loss
        self.spec, self.lam = spec, lam
        self.sizes = spec.groups.sizes if sizes is None else np.asarray(sizes)
        self.va = lam * spec.variable_weight()
        self.wa = lam * spec.group_weight()
        # a lone norm goes in the first resolvent so its zeros come out exact
        self.two = self.va > 0 and self.wa > 0
        if self.va > 0:
            self.g_kind = "slope"
        elif self.wa > 0:
            self.g_kind = "gslope"
        else:
            self.g_kind = None

    def prox_g(self, z, step):
        if self.g_kind == "slope":
            return slope_prox(z, step * self.va * self.spec.v)
        if self.g_kind == "gslope":
            return gslope_prox(z, step * self.wa * self.spec.w, self.spec.groups, self.sizes)
        return z

    def prox_h(self, z, step):
        if self.two:
            return gslope_prox(z, step * self.wa * self.spec.w, self.spec.groups, self.sizes)
        return z

    def penalty(self, beta):
        val = 0.0
        if self.va > 0:
            val += self.va * slope_norm(beta, self.spec.v)
        if self.wa > 0:
            val += self.wa * gslope_norm(beta, self.spec.w, self.spec.groups, self.sizes)
        return val

    def dual_start(self, beta, grad):
        """Subgradient of the second resolvent's norm consistent with ``beta``."""
        if not self.two:
            return np.zeros_like(beta)
        groups = self.spec.groups
        norms = group_reduce(beta, groups, 0.0)
        root = np.sqrt(self.sizes.astype(float))
        scaled = root * norms
        _, gperm = sort_desc_with_index(scaled)
        w_at = np.empty(groups.m)
        w_at[gperm] = self.spec.w
        u = np.zeros_like(beta)
        act = norms > 0
        gid = groups.assignment
        on = act[gid]
        with np.errstate(invalid="ignore", divide="ignore"):
            u[on] = (self.wa * w_at * root / norms)[gid[on]] * beta[on]
        off = ~on
        if np.any(off):
            n_act = int(np.count_nonzero(beta))
            tail = self.va * self.spec.v[n_act:n_act + int(off.sum())]
            g_off = grad[off]
            _, perm = sort_desc_with_index(g_off, absolute=True)
            t = np.empty(len(g_off))
            t[perm] = tail[: len(g_off)] if len(tail) >= len(g_off) else np.pad(tail, (0, len(g_off) - len(tail)))
            u_off = np.zeros_like(beta)
            u_off[off] = -soft_threshold(g_off, t)
            # shrink into the zero-cluster budget of the group norm so u stays a subgradient
            stat = np.sort((group_reduce(u_off, groups, 0.0) / root)[~act])[::-1]
            budget = np.cumsum(self.wa * self.spec.w[int(act.sum()):])
            load = np.cumsum(stat)
            pos = load > 0
            if np.any(pos):
                u_off *= min(1.0, float(np.min(budget[pos] / load[pos])))
            u[off] = u_off[off]
        return u


def _atos(prob: _Problem, init, config: SolverConfig) -> FitResult:
    X, y, loss = prob.X, prob.y, prob.loss
    p = X.shape[1]
    z = np.array(init, dtype=float)
    step = config.initial_step or 1.0 / max(lipschitz_estimate(X, loss), 1e-12)
    fz, eta = _loss(X, y, loss, z)
    gz = _grad_from_eta(X, y, loss, eta)
    u = prob.dual_start(z, gz)
    best_x, best_obj = z.copy(), fz + prob.penalty(z)
    prev_obj = best_obj
    increases = streak = 0
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        if not (np.isfinite(fz) and np.all(np.isfinite(gz))):
            raise NumericalError("non-finite loss or gradient during the fit")
        x = prob.prox_g(z - step * (u + gz), step)
        incr = x - z
        fx, eta_x = _loss(X, y, loss, x)
        for _ in range(config.max_backtrack):
            nrm2 = float(incr @ incr)
            if fx <= fz + float(gz @ incr) + nrm2 / (2 * step) + 1e-12 * max(1.0, abs(fz)):
                break
            step *= config.backtrack_factor
            x = prob.prox_g(z - step * (u + gz), step)
            incr = x - z
            fx, eta_x = _loss(X, y, loss, x)
        if not np.isfinite(fx):
            raise NumericalError("non-finite objective during the fit")
        obj = fx + prob.penalty(x)
        if obj < best_obj:
            best_obj, best_x = obj, x.copy()
        if obj > prev_obj + 1e-10 * max(1.0, abs(prev_obj)):
            increases += 1
            streak += 1
        else:
            streak = 0
        prev_obj = obj
        gap = float(np.sqrt(incr @ incr))
        if prob.two:
            z = prob.prox_h(x + step * u, step)
            u = u + (x - z) / step
            # a fixed point needs x to agree with both the old and the new z
            gap = max(gap, float(np.linalg.norm(x - z)))
        if gap <= config.tol:
            converged = True
            best_x, best_obj = x, obj
            break
        if streak >= config.divergence_window:
            log.info("objective rose %d steps in a row; returning the best iterate", streak)
            break
        if prob.two:
            fz, eta = _loss(X, y, loss, z)
        else:
            z, fz, eta = x, fx, eta_x
        gz = _grad_from_eta(X, y, loss, eta)
    if p and not np.all(np.isfinite(best_x)):
        raise NumericalError("non-finite coefficients")
    return FitResult(beta=best_x, iterations=it, converged=converged, objective=float(best_obj),
                     increases=increases, step=step)


def _validate(dataset, penalty, lam, init):
    if lam < 0 or not np.isfinite(lam):
        raise InvalidArgumentError("lambda must be a finite nonnegative number")
    if penalty.groups.p != dataset.p:
        raise InvalidArgumentError("penalty and dataset disagree on p")
    init = np.zeros(dataset.p) if init is None else np.asarray(init, dtype=float)
    if init.shape != (dataset.p,):
        raise InvalidArgumentError(f"init must have length {dataset.p}")
    return init


def fit(dataset: Dataset, penalty: PenaltySpec, lam: float, init=None, config: SolverConfig | None = None) -> FitResult:
    """Minimise the penalised loss at one ``lam`` starting from ``init``."""
    config = config or SolverConfig()
    init = _validate(dataset, penalty, lam, init)
    prob = _Problem(dataset.X, dataset.y, dataset.loss, penalty, lam)
    return _atos(prob, init, config)


def restrict_penalty(penalty: PenaltySpec, E, init=None, rule: str = "leading"):
    """Penalty for the sub-problem on columns ``E`` and the full group sizes it keeps.

    ``rule="leading"`` takes the largest weights, which makes the restricted
    problem identical to the full one with zeros outside ``E``. ``"rank"``
    takes the weights at the positions ``E`` occupies when ``init`` is sorted.
    """
    E = np.asarray(E, dtype=int)
    groups = penalty.groups
    sub_groups = build_groups(groups.assignment[E])
    kept = np.unique(groups.assignment[E])
    sizes = groups.sizes[kept]
    v = w = None
    if penalty.v is not None:
        if rule == "leading":
            v = penalty.v[: len(E)]
        else:
            _, perm = sort_desc_with_index(np.zeros(groups.p) if init is None else init, absolute=True)
            pos = np.empty(groups.p, dtype=int)
            pos[perm] = np.arange(groups.p)
            v = penalty.v[np.sort(pos[E])]
    if penalty.w is not None:
        if rule == "leading":
            w = penalty.w[: len(kept)]
        else:
            base = np.zeros(groups.p) if init is None else init
            _, gperm = sort_desc_with_index(group_reduce(base, groups, 0.5))
            gpos = np.empty(groups.m, dtype=int)
            gpos[gperm] = np.arange(groups.m)
            w = penalty.w[np.sort(gpos[kept])]
    sub = PenaltySpec(kind=penalty.kind, weights=PenaltyWeights(v=v, w=w), groups=sub_groups, alpha=penalty.alpha)
    return sub, sizes


def fit_restricted(dataset: Dataset, penalty: PenaltySpec, lam: float, E, init=None,
                   config: SolverConfig | None = None) -> FitResult:
    """Fit on the columns ``E`` only and embed the result with exact zeros elsewhere."""
    config = config or SolverConfig()
    init = _validate(dataset, penalty, lam, init)
    E = np.unique(np.asarray(E, dtype=int))
    if E.size and (E[0] < 0 or E[-1] >= dataset.p):
        raise InvalidArgumentError("E contains indices outside 0..p-1")
    if E.size == dataset.p:
        return fit(dataset, penalty, lam, init, config)
    if E.size == 0:
        f, _ = _loss(dataset.X, dataset.y, dataset.loss, np.zeros(dataset.p))
        return FitResult(beta=np.zeros(dataset.p), iterations=0, converged=True, objective=f)
    sub, sizes = restrict_penalty(penalty, E, init, config.weight_subset)
    prob = _Problem(dataset.X[:, E], dataset.y, dataset.loss, sub, lam, sizes)
    res = _atos(prob, init[E], config)
    beta = np.zeros(dataset.p)
    beta[E] = res.beta
    return replace(res, beta=beta)
