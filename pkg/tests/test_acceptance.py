"""Acceptance suite: one test per numbered criterion, with a PASS/FAIL summary line each.

Run alone with ``pytest tests/test_acceptance.py -v`` (about ten minutes).
"""
import time

import numpy as np
import pytest

from conftest import record
from oracles import finite_difference_grad, gslope_prox_oracle, slope_prox_oracle
from sgscreen.core import active_groups, active_variables, build_groups, group_reduce
from sgscreen.kkt import gslope_kkt_check, sgs_kkt_check
from sgscreen.path import PathConfig, compare_paths, fit_path_full, fit_path_screened, make_penalty, path_start
from sgscreen.penalty import gslope_dual_norm, gslope_prox, slope_prox
from sgscreen.screening import gslope_lambda_max, gslope_screen, sgs_group_screen, sgs_variable_screen
from sgscreen.solver import SolverConfig, fit, loss_and_grad
from sgscreen.synth import SynthConfig, generate
from sgscreen.weights import (SCHEMES, WeightConfig, chi_cdf, gslope_max_weights, gslope_mean_weights, inverse_cdf,
                              make_weights, normal_cdf, oscar_weights)

pytestmark = pytest.mark.slow

# solver tolerance for the equivalence suite; the 1e-5 default leaves SGS paths about 8e-4 apart
SUITE_TOL = 1e-7
TIGHT = SolverConfig(tol=1e-9, max_iter=200_000)


def suite_instances():
    for i in range(20):
        rho = (0.0, 0.6)[i % 2]
        ds, groups, _ = generate(SynthConfig(n=100, p=200, rho=rho, seed=100 + i, group_size_range=(3, 17)))
        yield ds, groups


def run_suite(methods):
    """Screened and full 20-point paths for every suite instance and method."""
    out = {m: [] for m in methods}
    t0 = time.perf_counter()
    sc = SolverConfig(tol=SUITE_TOL)
    for ds, groups in suite_instances():
        for method in methods:
            pen = make_penalty(method, groups, ds)
            pc = PathConfig(length=20, method=method)
            a = fit_path_screened(ds, pen, pc, sc)
            b = fit_path_full(ds, pen, pc, sc)
            out[method].append((ds, pen, a, b, compare_paths(a, b)))
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def main_suite():
    return run_suite(("gslope", "sgs"))


@pytest.fixture(scope="module")
def oscar_suite():
    return run_suite(("goscar", "sgo"))


def equivalence(runs):
    worst = {m: max(r[4].max_distance for r in rs) for m, rs in runs.items()}
    return all(v <= 1e-4 for v in worst.values()), worst


def loop_correctness(runs):
    """Superset and violation counts after and before the correction loop."""
    stats = {}
    for method, rs in runs.items():
        superset = residual = raw = misses = points = 0
        for ds, pen, a, b, rep in rs:
            superset += rep.superset_failures
            for k in range(1, len(a.lambdas)):
                points += 1
                s = a.sets[k]
                # the point's report after the last refit must be clean
                _, grad = loss_and_grad(ds, a.betas[k])
                if pen.kind == "gslope":
                    final = gslope_kkt_check(grad, a.betas[k], a.lambdas[k], pen.w, pen.groups)
                else:
                    final = sgs_kkt_check(grad, a.betas[k], a.lambdas[k], pen.alpha, pen.v, pen.w, pen.groups)
                residual += not final.clean
                raw += bool(a.metrics[k]["raw_violation"])
                # a true miss: the full-path solution is active outside the initial fitting set
                first_E = np.union1d(s.S_v, active_variables(a.betas[k - 1]))
                misses += not set(active_variables(b.betas[k])) <= set(first_E)
        stats[method] = dict(superset=superset, residual=residual, raw=raw, misses=misses, points=points)
    ok = all(s["superset"] == 0 and s["residual"] == 0 and s["raw"] <= 0.05 * s["points"] for s in stats.values())
    return ok, stats


def path_start_checks(methods, count=50):
    failures = []
    for i in range(count):
        rng = np.random.default_rng(1000 + i)
        model = ("linear", "logistic")[i % 2]
        ds, groups, _ = generate(SynthConfig(n=int(rng.integers(30, 80)), p=int(rng.integers(10, 40)),
                                             rho=float(rng.choice([0.0, 0.6])), model=model, seed=2000 + i,
                                             group_size_range=(1, 8)))
        _, g0 = loss_and_grad(ds, np.zeros(ds.p))
        for method in methods:
            pen = make_penalty(method, groups, ds, alpha=float(rng.uniform(0.5, 0.99)))
            lam1 = path_start(ds, pen)
            if active_variables(fit(ds, pen, lam1 * (1 + 1e-3), config=TIGHT).beta).size:
                failures.append((i, method, "nonzero above start"))
            zero = np.zeros(ds.p)
            lam = 0.95 * lam1
            if pen.kind == "gslope":
                rep = gslope_kkt_check(g0, zero, lam, pen.w, groups, tol=0.0)
                if abs(gslope_lambda_max(g0, pen.w, groups) - gslope_dual_norm(g0, pen.w, groups)) > 1e-12:
                    failures.append((i, method, "dual norm mismatch"))
            else:
                rep = sgs_kkt_check(g0, zero, lam, pen.alpha, pen.v, pen.w, groups, tol=0.0)
            if rep.clean:
                failures.append((i, method, "zero passes below start"))
    return failures


def test_criterion_01_solution_equivalence(main_suite):
    runs, seconds = main_suite
    ok, worst = equivalence(runs)
    record(1, ok, f"max l2 gslope={worst['gslope']:.2e} sgs={worst['sgs']:.2e} (<= 1e-4), {seconds:.0f}s")
    assert ok


def test_criterion_02_kkt_loop(main_suite):
    ok, stats = loop_correctness(main_suite[0])
    detail = "; ".join(f"{m}: superset failures {s['superset']}, residual {s['residual']}, "
                       f"raw {s['raw']}/{s['points']} ({s['raw'] / s['points']:.1%}), true misses {s['misses']}"
                       for m, s in stats.items())
    record(2, ok, detail)
    assert ok, detail


def test_criterion_03_path_start():
    failures = path_start_checks(("gslope", "sgs"))
    record(3, not failures, f"50 instances x gslope/sgs, failures {failures[:3]}")
    assert not failures


def test_criterion_04_prox_oracle():
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(500):
        d = int(rng.integers(1, 5))
        y = rng.normal(scale=2, size=d)
        if i % 3 == 0:
            y = np.round(y)
        if i % 5 == 0 and d > 1:
            y[1] = -y[0]
        t = np.sort(rng.uniform(0, 1.5, d))[::-1]
        if i % 4 == 1:
            t[:] = t[0]
        if i % 2:
            got, ref = slope_prox(y, t), slope_prox_oracle(y, t)
        else:
            g = build_groups(rng.integers(0, 2, d))
            got, ref = gslope_prox(y, t[:g.m], g), gslope_prox_oracle(y, t[:g.m], g.group_index, g.sizes)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    record(4, worst <= 1e-6, f"500 instances, max abs deviation {worst:.1e} (<= 1e-6)")
    assert worst <= 1e-6


def test_criterion_05_exact_gradient_screening():
    misses = {"gslope group": 0, "sgs group": 0, "sgs variable": 0}
    for i in range(200):
        rng = np.random.default_rng(5000 + i)
        ds, groups, _ = generate(SynthConfig(n=int(rng.integers(30, 60)), p=int(rng.integers(15, 40)),
                                             rho=float(rng.choice([0.0, 0.6])), seed=6000 + i,
                                             group_size_range=(1, 8)))
        for method in ("gslope", "sgs"):
            pen = make_penalty(method, groups, ds, alpha=float(rng.uniform(0.5, 0.99)))
            lam = path_start(ds, pen) * float(rng.uniform(0.05, 0.95))
            beta = fit(ds, pen, lam, config=TIGHT).beta
            _, grad = loss_and_grad(ds, beta)
            A_g, A_v = active_groups(beta, groups), active_variables(beta)
            slack = -1e-7 * lam
            if method == "gslope":
                S_g = gslope_screen(group_reduce(grad, groups, -0.5), pen.w, lam, lam, groups, slack=slack)
                misses["gslope group"] += not set(A_g) <= set(S_g)
            else:
                S_g = sgs_group_screen(grad, pen.v, pen.w, pen.alpha, lam, lam, groups, beta_prev=beta, slack=slack)
                S_v = sgs_variable_screen(grad, pen.v, pen.alpha, lam, lam, A_g, groups, slack=slack)
                misses["sgs group"] += not set(A_g) <= set(S_g)
                misses["sgs variable"] += not set(A_v) <= set(S_v)
    ok = not any(misses.values())
    record(5, ok, f"200 instances, misses {misses}")
    assert ok


def test_criterion_06_weights():
    problems = []
    rng = np.random.default_rng(6)
    for i in range(40):
        sizes = rng.integers(1, 12, size=int(rng.integers(1, 15)))
        groups = build_groups(np.repeat(np.arange(len(sizes)), sizes))
        cfg = dict(q_v=float(rng.uniform(0.01, 0.3)), q_g=float(rng.uniform(0.01, 0.3)),
                   alpha=float(rng.uniform(0.05, 0.95)), oscar_sigma1=float(rng.uniform(0.1, 3)))
        for scheme in SCHEMES:
            pw = make_weights(WeightConfig(scheme=scheme, **cfg), groups)
            for seq in (pw.v, pw.w):
                if seq is not None and (np.any(seq < 0) or np.any(np.diff(seq) > 0)):
                    problems.append((i, scheme, "order"))
        if np.any(gslope_max_weights(groups, cfg["q_g"]) < gslope_mean_weights(groups, cfg["q_g"]) - 1e-10):
            problems.append((i, "max < mean"))
        ow = oscar_weights(groups.p, groups.m, cfg["oscar_sigma1"])
        for seq in (ow.v, ow.w):
            # linear in exact arithmetic; floating point leaves a few ulps
            if len(seq) > 2 and np.max(np.abs(np.diff(seq, 2))) > 8 * np.finfo(float).eps * seq[0]:
                problems.append((i, "oscar curvature"))
    worst = 0.0
    for x in np.linspace(-5, 5, 41):
        worst = max(worst, abs(inverse_cdf(normal_cdf, float(normal_cdf(x)), (-10, 10)) - x))
    for df in (1, 3, 10):
        for x in np.linspace(0.1, 6, 20):
            cdf = lambda t: float(chi_cdf(t, df))
            worst = max(worst, abs(inverse_cdf(cdf, cdf(x), (0, 20)) - x))
    ok = not problems and worst <= 1e-8
    record(6, ok, f"problems {problems[:3]}, inverse_cdf round-trip {worst:.1e} (<= 1e-8)")
    assert ok


def test_criterion_07_dimension_reduction():
    ds, groups, _ = generate(SynthConfig())
    pen = make_penalty("sgs", groups, ds)
    res = fit_path_screened(ds, pen, PathConfig(method="sgs"))
    frac = float(np.mean([len(s.E_v) / groups.p for s in res.sets[1:]]))
    smaller = float(np.mean([len(s.S_v) < len(groups.variables_of(s.S_g)) for s in res.sets[1:]]))
    ok = frac <= 0.5 and smaller >= 0.8
    record(7, ok, f"mean |E_v|/p {frac:.3f} (<= 0.5), bi-level smaller on {smaller:.0%} of points (>= 80%)")
    assert ok


def test_criterion_08_runtime():
    ds, groups, _ = generate(SynthConfig(p=2000, n=400, seed=7))
    ratios = {}
    for method in ("sgs", "gslope"):
        pen = make_penalty(method, groups, ds)
        pc = PathConfig(method=method)
        fit_path_screened(ds, pen, PathConfig(method=method, length=3))
        t0 = time.perf_counter()
        fit_path_screened(ds, pen, pc)
        screened = time.perf_counter() - t0
        t0 = time.perf_counter()
        fit_path_full(ds, pen, pc)
        full = time.perf_counter() - t0
        ratios[method] = (screened, full, screened / full)
    ok = all(r[2] <= 0.8 for r in ratios.values())
    record(8, ok, ", ".join(f"{m} {s:.1f}s/{f:.1f}s = {r:.2f}" for m, (s, f, r) in ratios.items()) + " (<= 0.8)")
    assert ok


def test_criterion_09_certificates():
    checked = flagged = 0
    for i in range(12):
        model = ("linear", "logistic")[i % 2]
        ds, groups, _ = generate(SynthConfig(n=100, p=120, rho=(0.0, 0.6)[(i // 2) % 2], model=model,
                                             seed=900 + i, group_size_range=(3, 17)))
        for method in ("gslope", "sgs"):
            pen = make_penalty(method, groups, ds)
            res = fit_path_full(ds, pen, PathConfig(length=15, method=method))
            for beta, lam, m in zip(res.betas, res.lambdas, res.metrics):
                if not m["converged"]:
                    continue
                _, grad = loss_and_grad(ds, beta)
                if method == "gslope":
                    rep = gslope_kkt_check(grad, beta, lam, pen.w, groups, tol=1e-4)
                else:
                    rep = sgs_kkt_check(grad, beta, lam, pen.alpha, pen.v, pen.w, groups, tol=1e-4)
                checked += 1
                flagged += not rep.clean
    worst = 0.0
    for i, model in enumerate(("linear", "logistic") * 3):
        ds, _, _ = generate(SynthConfig(n=40, p=25, model=model, seed=950 + i))
        beta = np.random.default_rng(i).normal(scale=0.3, size=ds.p)
        _, grad = loss_and_grad(ds, beta)
        fd = finite_difference_grad(lambda b: loss_and_grad(ds, b)[0], beta)
        worst = max(worst, float(np.max(np.abs(grad - fd)) / np.max(np.abs(grad))))
    ok = flagged == 0 and worst <= 1e-6
    record(9, ok, f"{checked} converged fits, {flagged} flagged; gradient FD relative error {worst:.1e}")
    assert ok


def test_criterion_10_oscar(oscar_suite):
    runs, seconds = oscar_suite
    eq_ok, worst = equivalence(runs)
    loop_ok, stats = loop_correctness(runs)
    start_failures = path_start_checks(("goscar", "sgo"), count=50)
    ok = eq_ok and loop_ok and not start_failures
    loop = "; ".join(f"{m}: superset {s['superset']}, residual {s['residual']}, raw {s['raw']}/{s['points']} "
                     f"({s['raw'] / s['points']:.1%})" for m, s in stats.items())
    record(10, ok, f"max l2 goscar={worst['goscar']:.2e} sgo={worst['sgo']:.2e}; {loop}; "
                   f"path-start failures {len(start_failures)}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
