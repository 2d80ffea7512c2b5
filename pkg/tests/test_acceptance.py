"""Acceptance suite: ten criteria at their stated tolerances and runtime budgets.

Each test prints one ``CRITERION k: PASS|FAIL`` line (also repeated in the
terminal summary).  Frozen constants come from scripts/small_ball_oracle.py.
"""

import time

import numpy as np
import pytest

from svilab import dvi, experiments as ex, monotone, paths, svi
from svilab.coefficients import Coefficient, constant, linear
from svilab.paths import GridPath
from conftest import catalog, reflected_problem

SMALL_BALL_AT_0_8 = 0.185242  # reflection series, 50-digit evaluation
RESULTS = {}

pytestmark = pytest.mark.acceptance


def report(capsys, k, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed <= budget
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  ({detail}; {elapsed:.1f}s of {budget:.0f}s)"
    RESULTS[k] = line
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


# -- 1: operator laws ---------------------------------------------------------


def test_criterion_1_operator_laws(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = {"nonexpansive": -np.inf, "lipschitz": -np.inf, "monotone": -np.inf, "moreau": 0.0,
             "norm_increase": -np.inf, "limit": 0.0}
    closed_form = {"Zero", "Quadratic", "ScaledL1", "IndicatorBox", "IndicatorBall", "IndicatorHalfspaces"}
    for kind, spec in catalog().items():
        m = spec.dim
        x = 4.0 * rng.standard_normal((1000, m))
        y = x + rng.standard_normal((1000, m)) * rng.choice([1e-3, 0.1, 3.0], size=(1000, 1))
        lam = 10.0 ** rng.uniform(-3, 1, size=(1000, 1))
        jx = np.stack([monotone.resolvent(spec, l, p) for l, p in zip(lam[:, 0], x)])
        jy = np.stack([monotone.resolvent(spec, l, p) for l, p in zip(lam[:, 0], y)])
        ax, ay = (x - jx) / lam, (y - jy) / lam
        gap = np.linalg.norm(x - y, axis=1)
        worst["nonexpansive"] = max(worst["nonexpansive"], np.max(np.linalg.norm(jx - jy, axis=1) - gap))
        worst["lipschitz"] = max(worst["lipschitz"],
                                 np.max(np.linalg.norm(ax - ay, axis=1) - gap / lam[:, 0]))
        worst["monotone"] = max(worst["monotone"], np.max(-np.einsum("ij,ij->i", ax - ay, x - y)))
        worst["moreau"] = max(worst["moreau"], np.abs(jx + lam * ax - x).max())
        # |A_lam x| nondecreasing as lam decreases, on points of D(A)
        alpha, _ = monotone.sample_graph(spec, 50, 2)
        lams = 2.0 ** -np.arange(9)
        norms = np.array([np.linalg.norm(monotone.yosida(spec, l, alpha), axis=1) for l in lams])
        worst["norm_increase"] = max(worst["norm_increase"], np.max(norms[:-1] - norms[1:]))
        if kind in closed_form:
            lim = np.linalg.norm(monotone.yosida(spec, 1e-8, alpha), axis=1)
            ms = np.array([np.linalg.norm(monotone.minimal_section(spec, a)) for a in alpha])
            worst["limit"] = max(worst["limit"], np.abs(lim - ms).max())
    ok = (worst["nonexpansive"] <= 1e-9 and worst["lipschitz"] <= 1e-9 and worst["monotone"] <= 1e-9
          and worst["moreau"] <= 1e-12 and worst["norm_increase"] <= 1e-9 and worst["limit"] <= 1e-6)
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    report(capsys, 1, ok, detail, time.perf_counter() - t0, 10)


# -- 2: blow-up outside the domain ----------------------------------------------


def test_criterion_2_blow_up(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_ratio = np.inf
    for kind in ("IndicatorBox", "IndicatorBall"):
        spec = catalog()[kind]
        x = 4.0 * rng.standard_normal((200, spec.dim))
        x = x[~spec.in_domain(x)][:20]
        assert len(x) == 20
        proj = spec.project_domain(x)
        prev = None
        for k in range(1, 11):
            n = 2**k
            xn = x + (proj - x) / n
            a = np.linalg.norm(monotone.yosida(spec, 1.0 / n, xn), axis=1)
            if prev is not None:
                worst_ratio = min(worst_ratio, np.min(a / prev))
            prev = a
    report(capsys, 2, worst_ratio >= 1.8, f"min growth per doubling {worst_ratio:.4f}", time.perf_counter() - t0, 5)


# -- 3: energy estimate --------------------------------------------------------


def test_criterion_3_brezis(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    B = rng.standard_normal((2, 2))
    specs = [
        monotone.Zero(2), monotone.Quadratic(B @ B.T), monotone.ScaledL1(0.8, 2),
        monotone.IndicatorBox([0.0, -1.0], [None, 1.0]), monotone.IndicatorBall([0.0, 0.0], 1.0),
        monotone.IndicatorHalfspaces([[1.0, 1.0], [-1.0, 0.0]], [1.0, 0.5]),
        monotone.Sum(monotone.Quadratic(np.diag([1.0, 3.0])), monotone.IndicatorBall([0.0, 0.0], 1.0)),
    ]
    step, failures, worst = 1e-3, 0, 0.0
    t = step * np.arange(1001)[:, None, None]
    for case in range(100):
        spec = specs[case % len(specs)]
        amp, freq, phase = rng.normal(size=(3, 4, 2))
        f = GridPath(step, np.sum(amp * np.sin(3 * freq * t + phase), axis=1))
        p = dvi.DviProblem(spec, f, spec.project_domain(2 * rng.standard_normal(2)), 1.0)
        rep = dvi.brezis_energy_check(p, dvi.solve_dvi(p, step))
        failures += not rep.passed
        worst = max(worst, rep.lhs / rep.rhs)
    report(capsys, 3, failures == 0, f"{failures} failures, max lhs/rhs {worst:.3f}", time.perf_counter() - t0, 30)


# -- 4 and 5: reflected oracle and the interior-point inequality -----------------

_REFLECTED = {}


def reflected_runs():
    if not _REFLECTED:
        p = reflected_problem()
        level, seeds = 12, 1000
        w = np.stack([svi.generate_driver(1, 1.0, level, (0, 0, s)).w.values for s in range(seeds)])
        X, K, dh = svi.wong_zakai_batch(p, w, level, level)
        _REFLECTED.update(p=p, w=w, X=X, K=K, level=level)
    return _REFLECTED


def test_criterion_4_skorokhod_oracle(capsys):
    t0 = time.perf_counter()
    r = reflected_runs()
    p, w, X, K = r["p"], r["w"], r["X"], r["K"]
    oX, oK = svi.skorokhod_arrays(0.5, w[..., 0])
    dist = max(np.abs(X[..., 0] - oX.T).max(), np.abs(K[..., 0] - oK.T).max())
    pairs = monotone.sample_graph(p.spec, 32, 4)
    cert = monotone.interior_certificate(p.spec)
    step = 2.0 ** -r["level"]
    failed, min_flow = 0, np.inf
    for b in range(w.shape[0]):
        rep = svi.validate_arrays(p, X[:, b], K[:, b], w[b], step, pairs, cert)
        failed += not rep.passed
        min_flow = min(min_flow, rep.flow_slack)
    ok = dist <= 1e-10 and failed == 0 and min_flow >= -1e-6
    report(capsys, 4, ok, f"max node distance {dist:.2e}, {failed} validation failures, min flow slack {min_flow:.2e}",
           time.perf_counter() - t0, 60)


def test_criterion_5_interior_inequality(capsys):
    t0 = time.perf_counter()
    r = reflected_runs()
    cert = monotone.interior_certificate(r["p"].spec)
    step = 2.0 ** -r["level"]
    worst = min(dvi.interior_inequality_slack(r["X"][:, b], r["K"][:, b], cert, step) for b in range(r["w"].shape[0]))
    rng = np.random.default_rng(5)
    specs = catalog()
    names = list(specs)
    for i in range(100):
        spec = specs[names[i % len(names)]]
        m, d, h_step = spec.dim, 2, 1e-3
        c = monotone.interior_certificate(spec)
        x = c.a + 0.5 * c.c1 * rng.uniform(-1, 1, m) / np.sqrt(m)
        slopes = rng.normal(scale=2.0, size=(10, d))
        h = GridPath(h_step, np.vstack([np.zeros(d), np.cumsum(np.repeat(slopes, 100, axis=0) * h_step, axis=0)]))
        b = linear(0.3 * rng.normal(size=(m, m)), offset=rng.normal(size=m))
        sigma = (constant(rng.normal(size=(m, d))) if i % 2
                 else Coefficient("tanh", rng.normal(size=(m, d)), 0.5 * rng.normal(size=(m, d, m))))
        xi, eta = dvi.skeleton(dvi.SkeletonInput(spec, h, x, b, sigma), h_step)
        worst = min(worst, dvi.interior_inequality_slack(xi.values, eta.values, c, h_step))
    report(capsys, 5, worst >= -1e-6, f"min slack {worst:.2e} over 1000 solutions + 100 skeletons",
           time.perf_counter() - t0, 60)


# -- 6: limit theorem -----------------------------------------------------------


def test_criterion_6_limit_theorem(capsys):
    t0 = time.perf_counter()
    rep = ex.limit_theorem_study(reflected_problem(), [4, 6, 8, 10], 14, 0.1, 200, seed=2024)
    est = [c.estimate for c in rep.cells]
    meds = rep.summary["median_errors"]
    ok = rep.summary["probability_nonincreasing"] and meds[-1] < 0.5 * meds[0] and rep.summary["failed_trials"] == 0
    detail = f"P={[round(e, 3) for e in est]}, median n=10/n=4 = {meds[-1] / meds[0]:.3f}"
    report(capsys, 6, ok, detail, time.perf_counter() - t0, 600)


# -- 7: approximate continuity ------------------------------------------------------


def test_criterion_7_approximate_continuity(capsys):
    t0 = time.perf_counter()
    rep = ex.approx_continuity_study(reflected_problem(), eps=0.2, deltas=[0.8, 0.6, 0.45], max_draws=200_000,
                                     trials_target=200, seed=2024, level=10)
    est = [c.estimate for c in rep.cells]
    powered = not any(c.underpowered for c in rep.cells)
    ok = powered and rep.summary["estimates_nondecreasing"] and est[-1] >= 0.9
    meds = [round(c.extra["median_error"], 3) for c in rep.cells]
    rates = [round(c.extra["acceptance_rate"], 4) for c in rep.cells]
    detail = f"P={est}, median errors {meds}, acceptance {rates}, draws {rep.summary['raw_draws']}"
    report(capsys, 7, ok, detail, time.perf_counter() - t0, 1200)


# -- 8: small-ball probabilities ---------------------------------------------------


def test_criterion_8_small_ball(capsys):
    t0 = time.perf_counter()
    rep = ex.small_ball_study(1, 1.0, [0.5, 0.6, 0.8, 1.0], 2_000_000, seed=2024, level=10)
    c = rep.cell(eps=0.8)
    gap = abs(c.estimate - SMALL_BALL_AT_0_8)
    r2 = rep.summary["fit"]["r2"]
    ok = gap <= 3 * c.half_width and r2 >= 0.95 and rep.summary["fit"]["points"] == 4
    detail = f"P(0.8)={c.estimate:.5f} vs {SMALL_BALL_AT_0_8} ({gap / c.half_width:.2f} half-widths), R2={r2:.5f}"
    report(capsys, 8, ok, detail, time.perf_counter() - t0, 900)


# -- 9: Levy area ------------------------------------------------------------------


def test_criterion_9_levy_area(capsys):
    t0 = time.perf_counter()
    rep = ex.levy_area_study(2, 1.0, [0.8, 0.6], [1, 2, 4, 8], 200, 2_000_000, seed=2024, level=10)
    s = rep.summary
    sup = [x["estimate"] for x in s["sup_over_delta"]]
    powered = not any(c.underpowered for c in rep.cells)
    ok = (powered and s["sup_nonincreasing"] and sup[-1] <= 0.05
          and s["identity_defect_diagonal"] <= 1e-10 and s["identity_defect_symmetrization"] <= 1e-10)
    detail = (f"sup over delta {sup}, identity defects {s['identity_defect_diagonal']:.1e}/"
              f"{s['identity_defect_symmetrization']:.1e}, draws {s['raw_draws']}")
    report(capsys, 9, ok, detail, time.perf_counter() - t0, 900)


# -- 10: reproducibility across worker counts -----------------------------------------


def test_criterion_10_reproducibility(capsys):
    t0 = time.perf_counter()
    p = reflected_problem()
    runs = {
        "limit": lambda w: ex.limit_theorem_study(p, [4, 6, 8], 10, 0.1, 60, seed=2024, workers=w),
        "continuity": lambda w: ex.approx_continuity_study(p, eps=0.2, deltas=[0.8, 0.6], max_draws=20_000,
                                                           trials_target=60, seed=2024, level=8, workers=w),
        "small_ball": lambda w: ex.small_ball_study(1, 1.0, [0.6, 0.8], 40_000, seed=2024, level=8, workers=w),
        "levy": lambda w: ex.levy_area_study(2, 1.0, [0.8], [1, 2], 60, 100_000, seed=2024, level=8, workers=w),
    }
    mismatched = []
    for name, run in runs.items():
        a, b = run(1).to_dict(wall_clock=False), run(2).to_dict(wall_clock=False)
        if a["cells"] != b["cells"] or a["summary"] != b["summary"]:
            mismatched.append(name)
    report(capsys, 10, not mismatched, f"mismatched studies: {mismatched or 'none'}", time.perf_counter() - t0, 300)
