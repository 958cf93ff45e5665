"""Regularisation paths with and without strong screening."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kkt, screening
from .core import (ACTIVE_THRESHOLD, Dataset, GroupStructure, InvalidArgumentError, active_groups,
                   active_variables, group_reduce)
from .penalty import PenaltySpec
from .solver import FitResult, SolverConfig, fit, fit_restricted, loss_and_grad
from .weights import (PenaltyWeights, gslope_mean_weights, oscar_sigma1, oscar_weights, sgs_mean_weights,
                      slope_bh_weights)

log = logging.getLogger(__name__)

METHODS = ("gslope", "sgs", "goscar", "sgo", "slope")
METRIC_COLUMNS = ("k", "lambda", "card_A_g", "card_S_g", "card_E_g", "card_K_g",
                  "card_A_v", "card_S_v", "card_E_v", "card_K_v", "iters", "seconds", "converged")
SET_NAMES = ("A_g", "S_g", "E_g", "K_g", "A_v", "S_v", "E_v", "K_v")
SCHEMA = 1


@dataclass(frozen=True)
class PathConfig:
    length: int = 50
    terminal_ratio: float = 0.05
    method: str = "sgs"
    screen: bool = True
    kkt_max_rounds: int = 10
    kkt_tol: float = kkt.CHECK_TOL
    screen_mode: str = "total"

    def __post_init__(self):
        if self.length < 2:
            raise InvalidArgumentError("path length must be at least 2")
        if not 0.0 < self.terminal_ratio < 1.0:
            raise InvalidArgumentError("terminal_ratio must lie in (0, 1)")
        if self.method not in METHODS:
            raise InvalidArgumentError(f"method must be one of {METHODS}")
        if self.kkt_max_rounds < 1:
            raise InvalidArgumentError("kkt_max_rounds must be at least 1")
        if self.screen_mode not in screening.MODES:
            raise InvalidArgumentError(f"screen_mode must be one of {screening.MODES}")


@dataclass
class PathResult:
    lambdas: np.ndarray
    betas: np.ndarray
    metrics: list
    sets: list
    config: dict = field(default_factory=dict)

    @property
    def converged(self) -> np.ndarray:
        return np.array([m["converged"] for m in self.metrics], dtype=bool)

    @property
    def raw_violations(self) -> int:
        """Path points whose first KKT check flagged something outside the fitting set."""
        return int(sum(m.get("raw_violation", False) for m in self.metrics))

    @property
    def fits(self) -> int:
        return int(sum(m.get("kkt_rounds", 1) for m in self.metrics))


def lambda_path(lambda1: float, length: int = 50, terminal_ratio: float = 0.05) -> np.ndarray:
    """Log-linear grid from ``lambda1`` down to ``terminal_ratio * lambda1``."""
    if not lambda1 > 0 or not np.isfinite(lambda1):
        raise InvalidArgumentError("lambda1 must be positive and finite")
    if length < 2:
        raise InvalidArgumentError("length must be at least 2")
    return lambda1 * terminal_ratio ** (np.arange(length) / (length - 1))


def make_penalty(method: str, groups: GroupStructure, dataset: Dataset | None = None, alpha: float = 0.95,
                 q_v: float = 0.05, q_g: float = 0.05) -> PenaltySpec:
    """Default penalty for ``method``; OSCAR variants scale by ``e^-2 ||X^T y||_inf``."""
    if method == "slope":
        return PenaltySpec("slope", PenaltyWeights(v=slope_bh_weights(groups.p, q_v)), groups)
    if method == "gslope":
        return PenaltySpec("gslope", PenaltyWeights(w=gslope_mean_weights(groups, q_g)), groups)
    if method == "sgs":
        return PenaltySpec("sgs", sgs_mean_weights(groups, q_v, q_g, alpha), groups, alpha)
    if method in ("goscar", "sgo"):
        if dataset is None:
            raise InvalidArgumentError("OSCAR weights need the data to set their scale")
        ow = oscar_weights(groups.p, groups.m, oscar_sigma1(dataset.X, dataset.y))
        if method == "goscar":
            return PenaltySpec("gslope", PenaltyWeights(w=ow.w), groups)
        return PenaltySpec("sgs", ow, groups, alpha)
    raise InvalidArgumentError(f"method must be one of {METHODS}")


def path_start(dataset: Dataset, penalty: PenaltySpec) -> float:
    """Smallest lambda at which the zero vector is certified optimal."""
    _, g0 = loss_and_grad(dataset, np.zeros(dataset.p))
    if penalty.kind == "gslope":
        return screening.gslope_lambda_max(g0, penalty.w, penalty.groups)
    if penalty.kind == "slope":
        return screening.slope_lambda_max(g0, penalty.v)
    return screening.sgs_path_start(g0, penalty.v, penalty.w, penalty.alpha, penalty.groups)


def _point_metrics(k, lam, sets, iters, seconds, converged, **extra):
    row = {"k": k, "lambda": float(lam)}
    row.update(sets.cardinalities())
    row.update(iters=int(iters), seconds=float(seconds), converged=bool(converged))
    row.update(extra)
    return row


def _all_sets(beta, groups):
    every_g = np.arange(groups.m)
    every_v = np.arange(groups.p)
    return screening.ScreenSets(A_g=active_groups(beta, groups), S_g=every_g, E_g=every_g,
                                A_v=active_variables(beta), S_v=every_v, E_v=every_v)


def _check(penalty, dataset, beta, lam, tol):
    _, grad = loss_and_grad(dataset, beta)
    if penalty.kind == "gslope":
        return kkt.gslope_kkt_check(grad, beta, lam, penalty.w, penalty.groups, tol)
    if penalty.kind == "slope":
        return kkt.slope_kkt_check(grad, beta, lam, penalty.v, tol)
    return kkt.sgs_kkt_check(grad, beta, lam, penalty.alpha, penalty.v, penalty.w, penalty.groups, tol)


def _screen(penalty: PenaltySpec, grad_prev, beta_prev, lam_k, lam_next, mode):
    """Screened and fitting sets for the next path point, as a ScreenSets."""
    groups = penalty.groups
    A_g = active_groups(beta_prev, groups)
    A_v = active_variables(beta_prev)
    if penalty.kind == "gslope":
        h = group_reduce(grad_prev, groups, -0.5)
        S_g = screening.gslope_screen(h, penalty.w, lam_k, lam_next, groups, mode)
        E_g = np.union1d(S_g, A_g)
        return screening.ScreenSets(A_g=A_g, S_g=S_g, E_g=E_g, A_v=A_v,
                                    S_v=groups.variables_of(S_g), E_v=groups.variables_of(E_g))
    if penalty.kind == "slope" or penalty.alpha >= 1.0:
        S_v = screening.slope_screen(grad_prev, penalty.v, lam_k, lam_next, mode)
        S_g = groups.groups_of(S_v)
    else:
        S_g = screening.sgs_group_screen(grad_prev, penalty.v, penalty.w, penalty.alpha, lam_k, lam_next,
                                         groups, mode, beta_prev=beta_prev)
        S_v = screening.sgs_variable_screen(grad_prev, penalty.v, penalty.alpha, lam_k, lam_next, S_g,
                                            groups, mode)
    E_v = np.union1d(S_v, A_v)
    return screening.ScreenSets(A_g=A_g, S_g=S_g, E_g=groups.groups_of(E_v), A_v=A_v, S_v=S_v, E_v=E_v)


def _config_echo(dataset, penalty, path_config, solver_config, lambda1):
    return {
        "path": asdict(path_config),
        "solver": asdict(solver_config),
        "penalty": {"kind": penalty.kind, "alpha": penalty.alpha},
        "n": dataset.n, "p": dataset.p, "m": penalty.groups.m, "loss": dataset.loss,
        "lambda1": float(lambda1),
    }


def fit_path_screened(dataset: Dataset, penalty: PenaltySpec, path_config: PathConfig | None = None,
                      solver_config: SolverConfig | None = None, lambdas=None) -> PathResult:
    """Path fit with strong screening, restricted fits and KKT correction.

    The first point is fitted on all variables. Each later point fits the
    union of the screened set and the previous active set, then adds any
    KKT violators and refits, at most ``kkt_max_rounds`` times before
    falling back to an unrestricted fit.
    """
    path_config = path_config or PathConfig()
    solver_config = solver_config or SolverConfig()
    if not path_config.screen:
        return fit_path_full(dataset, penalty, path_config, solver_config, lambdas)
    groups = penalty.groups
    lams = _lambdas(dataset, penalty, path_config, lambdas)
    betas = np.zeros((len(lams), dataset.p))
    metrics, sets_out = [], []

    t0 = time.perf_counter()
    res = fit(dataset, penalty, lams[0], np.zeros(dataset.p), solver_config)
    sets = _all_sets(res.beta, groups)
    betas[0] = res.beta
    metrics.append(_point_metrics(1, lams[0], sets, res.iterations, time.perf_counter() - t0, res.converged,
                                  kkt_rounds=1, raw_violation=False, fallback=False))
    sets_out.append(sets)

    group_level = penalty.kind == "gslope"
    for k in range(1, len(lams)):
        t0 = time.perf_counter()
        prev = betas[k - 1]
        _, grad_prev = loss_and_grad(dataset, prev)
        sets = _screen(penalty, grad_prev, prev, lams[k - 1], lams[k], path_config.screen_mode)
        E_v, E_g = sets.E_v, sets.E_g
        K_g = np.empty(0, dtype=int)
        K_v = np.empty(0, dtype=int)
        iters = 0
        raw = fallback = False
        rounds = 0
        res: FitResult | None = None
        while True:
            rounds += 1
            res = fit_restricted(dataset, penalty, lams[k], E_v, prev, solver_config)
            iters += res.iterations
            rep = _check(penalty, dataset, res.beta, lams[k], path_config.kkt_tol)
            if group_level:
                new_g = np.setdiff1d(rep.violating_groups, E_g)
                new_v = groups.variables_of(new_g)
            else:
                new_v = np.setdiff1d(rep.violating_variables, E_v)
                new_g = np.setdiff1d(groups.groups_of(new_v), E_g)
            if new_v.size == 0:
                break
            if rounds == 1:
                raw = True
            log.debug("k=%d round %d: %d KKT violators", k + 1, rounds, new_v.size)
            K_g, K_v = np.union1d(K_g, new_g), np.union1d(K_v, new_v)
            E_v = np.union1d(E_v, new_v)
            E_g = np.union1d(E_g, new_g) if group_level else groups.groups_of(E_v)
            if rounds >= path_config.kkt_max_rounds:
                log.info("k=%d: KKT loop did not settle; refitting without screening", k + 1)
                res = fit(dataset, penalty, lams[k], prev, solver_config)
                iters += res.iterations
                E_v, E_g = np.arange(dataset.p), np.arange(groups.m)
                fallback = True
                break
        betas[k] = res.beta
        sets.E_v, sets.E_g, sets.K_g, sets.K_v = E_v, E_g, K_g, K_v
        sets.A_g, sets.A_v = active_groups(res.beta, groups), active_variables(res.beta)
        metrics.append(_point_metrics(k + 1, lams[k], sets, iters, time.perf_counter() - t0, res.converged,
                                      kkt_rounds=rounds, raw_violation=raw, fallback=fallback))
        sets_out.append(sets)
        log.debug("k=%d lambda=%.4g |E_v|=%d |A_v|=%d", k + 1, lams[k], E_v.size, sets.A_v.size)
    echo = _config_echo(dataset, penalty, path_config, solver_config, lams[0])
    return PathResult(lambdas=lams, betas=betas, metrics=metrics, sets=sets_out, config=echo)


def fit_path_full(dataset: Dataset, penalty: PenaltySpec, path_config: PathConfig | None = None,
                  solver_config: SolverConfig | None = None, lambdas=None) -> PathResult:
    """Baseline path: every point fitted on all variables, warm-started."""
    path_config = path_config or PathConfig()
    solver_config = solver_config or SolverConfig()
    lams = _lambdas(dataset, penalty, path_config, lambdas)
    betas = np.zeros((len(lams), dataset.p))
    metrics, sets_out = [], []
    prev = np.zeros(dataset.p)
    for k, lam in enumerate(lams):
        t0 = time.perf_counter()
        res = fit(dataset, penalty, lam, prev, solver_config)
        prev = betas[k] = res.beta
        sets = _all_sets(res.beta, penalty.groups)
        metrics.append(_point_metrics(k + 1, lam, sets, res.iterations, time.perf_counter() - t0, res.converged,
                                      kkt_rounds=1, raw_violation=False, fallback=False))
        sets_out.append(sets)
    echo = _config_echo(dataset, penalty, path_config, solver_config, lams[0])
    echo["path"]["screen"] = False
    return PathResult(lambdas=lams, betas=betas, metrics=metrics, sets=sets_out, config=echo)


def _lambdas(dataset, penalty, path_config, lambdas):
    if lambdas is not None:
        lams = np.asarray(lambdas, dtype=float)
        if lams.ndim != 1 or lams.size < 1 or np.any(np.diff(lams) >= 0) or np.any(lams < 0):
            raise InvalidArgumentError("lambdas must be strictly decreasing and nonnegative")
        return lams
    return lambda_path(path_start(dataset, penalty), path_config.length, path_config.terminal_ratio)


# --- comparison ---------------------------------------------------------------

@dataclass
class ComparisonReport:
    distances: np.ndarray
    max_distance: float
    superset_ok: np.ndarray
    superset_failures: int
    runtime_ratio: float
    iterations_a: int
    iterations_b: int

    def to_dict(self) -> dict:
        return {
            "distances": self.distances.tolist(), "max_distance": self.max_distance,
            "superset_ok": self.superset_ok.tolist(), "superset_failures": self.superset_failures,
            "runtime_ratio": self.runtime_ratio, "iterations_a": self.iterations_a,
            "iterations_b": self.iterations_b,
        }


def compare_paths(a: PathResult, b: PathResult, threshold: float = ACTIVE_THRESHOLD) -> ComparisonReport:
    """Per-point l2 distances, ``E_a ⊇ A_b`` checks and the runtime ratio ``a / b``."""
    if a.lambdas.shape != b.lambdas.shape or not np.allclose(a.lambdas, b.lambdas, rtol=1e-12, atol=0):
        raise InvalidArgumentError("paths were fitted on different lambda grids")
    if a.betas.shape != b.betas.shape:
        raise InvalidArgumentError("paths have different dimensions")
    dist = np.linalg.norm(a.betas - b.betas, axis=1)
    ok = np.array([np.all(np.isin(active_variables(bb, threshold), sa.E_v)) for bb, sa in zip(b.betas, a.sets)])
    ta = sum(m["seconds"] for m in a.metrics)
    tb = sum(m["seconds"] for m in b.metrics)
    ratio = ta / tb if tb > 0 else (1.0 if ta == 0 else float("inf"))
    return ComparisonReport(
        distances=dist, max_distance=float(dist.max(initial=0.0)), superset_ok=ok,
        superset_failures=int((~ok).sum()), runtime_ratio=float(ratio),
        iterations_a=int(sum(m["iters"] for m in a.metrics)),
        iterations_b=int(sum(m["iters"] for m in b.metrics)),
    )


# --- serialisation ------------------------------------------------------------

def metrics_csv(result: PathResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for row in result.metrics:
        writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return x


def to_json(result: PathResult) -> str:
    doc = {
        "schema": SCHEMA,
        "config": result.config,
        "lambdas": result.lambdas.tolist(),
        "betas": result.betas.tolist(),
        "metrics": result.metrics,
        "sets": [{name: getattr(s, name).tolist() for name in SET_NAMES} for s in result.sets],
    }
    return json.dumps(doc)


def from_json(text: str) -> PathResult:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise InvalidArgumentError(f"unsupported path document schema {doc.get('schema')!r}")
    try:
        sets = [screening.ScreenSets(**{k: np.asarray(v, dtype=int) for k, v in s.items()}) for s in doc["sets"]]
        return PathResult(lambdas=np.asarray(doc["lambdas"], dtype=float),
                          betas=np.asarray(doc["betas"], dtype=float).reshape(len(doc["lambdas"]), -1),
                          metrics=doc["metrics"], sets=sets, config=doc.get("config", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed path document: {exc}") from exc
