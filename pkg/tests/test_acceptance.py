"""Acceptance criteria: one PASS/FAIL line per criterion, tolerances pinned here."""
import time
from itertools import combinations

import numpy as np
import pytest

from carnot_lab.abnormal import GrassmannPlane, abnormal_distance
from carnot_lab.controls import Control, endpoint, evaluate, length
from carnot_lab.distance import OptimizerConfig, estimate_dcc, heisenberg_l1_gap
from carnot_lab.experiments import exp_dyadic, exp_lipschitz, exp_sharp, exp_tube, sharp_pair
from carnot_lab.group import AdequateProduct, GroupElement, GroupModel, wedge
from carnot_lab.heights import min_height, span_coefficients
from carnot_lab.norms import SubFinslerNorm
from carnot_lab.surgery import plan_central_correction, wedge_decompose

pytestmark = pytest.mark.slow

SHARP_DELTAS = (0.1, 0.2, 0.3, 0.4, 0.5)
SHARP_REL_TOL = 0.02
ABN_TOL = 1e-4
SHARP_BUDGET_S = 120
HORIZONTAL_REL_TOL = 1e-4
HORIZONTAL_BUDGET_S = 300
TUBE_SAMPLES = 1_000_000
TUBE_SLOPE_4 = (2.5, 3.5)
TUBE_SLOPE_3 = (2.7, 3.3)
TUBE_BUDGET_S = 900
LIP_QDELTA = (2 * 0.95, 2 * 1.05)
LIP_SLOPE = (-1.3, -0.7)
SURGERY_INSTANCES = 1000
SURGERY_TOL = 1e-9
SURGERY_BUDGET_S = 60
LEMMA_INSTANCES = 1000
LEMMA_RESIDUAL = 1e-10
CERT_RATE = 0.9
COMPETITOR_TOL = 1e-9
DYADIC_RATIO = 0.1


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {k} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def lipschitz_report():
    return exp_lipschitz()


def test_criterion_1_sharp_example(verdict):
    t0 = time.perf_counter()
    bit_exact = all(heisenberg_l1_gap(d, d * d / 2) == 2 * (d * d / 2) / d for d in SHARP_DELTAS)
    rep = exp_sharp(SHARP_DELTAS, ratio=0.5)
    rel = max(r["rel_error"] for r in rep.records)
    abn = max(abs(abnormal_distance(sharp_pair(d, 0.0)[0]).distance - d) for d in SHARP_DELTAS)
    dt = time.perf_counter() - t0
    ok = bit_exact and rel <= SHARP_REL_TOL and abn <= ABN_TOL and dt <= SHARP_BUDGET_S
    verdict(1, ok, f"bit_exact={bit_exact} max_rel_gap_err={rel:.2e} max_abn_err={abn:.2e} runtime={dt:.1f}s")


def test_criterion_2_horizontal_exactness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, count = 0.0, 0
    for i in range(100):
        n = (2, 3, 4)[i % 3]
        kind = ("l1", "l2", "linf")[(i // 3) % 3]
        v = rng.standard_normal(n)
        N = SubFinslerNorm(kind, n)
        e = estimate_dcc(GroupElement(v, np.zeros(n * (n - 1) // 2)), N, OptimizerConfig())
        assert e.lower == pytest.approx(N(v), rel=1e-12)
        worst = max(worst, (e.upper - e.lower) / e.lower)
        count += 1
    dt = time.perf_counter() - t0
    ok = count == 100 and worst <= HORIZONTAL_REL_TOL and dt <= HORIZONTAL_BUDGET_S
    verdict(2, ok, f"targets={count} max_rel_bracket={worst:.2e} runtime={dt:.1f}s")


def test_criterion_3_tube_scaling(verdict):
    t0 = time.perf_counter()
    r4 = exp_tube(4, TUBE_SAMPLES, seed=0)
    r3 = exp_tube(3, TUBE_SAMPLES, seed=0)
    dt = time.perf_counter() - t0
    s4, s3 = r4.summary["slope"], r3.summary["slope"]
    ok = (TUBE_SLOPE_4[0] <= s4 <= TUBE_SLOPE_4[1] and TUBE_SLOPE_3[0] <= s3 <= TUBE_SLOPE_3[1]
          and dt <= TUBE_BUDGET_S)
    verdict(3, ok, f"slope_n4={s4:.3f} slope_n3={s3:.3f} n3_crosscheck_err="
                   f"{r3.summary['crosscheck_max_abs_err']:.1e} samples={TUBE_SAMPLES} runtime={dt:.1f}s")


def test_criterion_4_lipschitz_scaling(verdict, lipschitz_report):
    s = lipschitz_report.summary
    random_ok = s["random_max_q_delta"] <= s["C5"]
    ok = (LIP_QDELTA[0] <= s["sharp_q_delta_min"] and s["sharp_q_delta_max"] <= LIP_QDELTA[1]
          and LIP_SLOPE[0] <= s["sharp_slope"] <= LIP_SLOPE[1] and random_ok)
    verdict(4, ok, f"sharp q*delta in [{s['sharp_q_delta_min']:.4f}, {s['sharp_q_delta_max']:.4f}] "
                   f"slope={s['sharp_slope']:.3f} random_max_q*delta={s['random_max_q_delta']:.3f} "
                   f"<= C5={s['C5']:.1f}: {random_ok}")


def test_criterion_5_surgery_exactness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    N = SubFinslerNorm.l1(4)
    bad = done = 0
    worst = 0.0
    while done < SURGERY_INSTANCES:
        legs = [Control.from_displacements(rng.standard_normal((3, 4))) for _ in range(3)]
        X = np.cumsum([endpoint(l).x for l in legs], axis=0)
        eps = min_height(X)
        if eps <= 0:
            continue
        Z = rng.standard_normal(6)
        plan = plan_central_correction(legs, Z, eps, N)
        u = plan.assemble()
        want = plan.expected_endpoint().as_vector()
        err = np.linalg.norm(endpoint(u).as_vector() - want) / max(1.0, np.linalg.norm(want))
        worst = max(worst, err)
        bad += err > SURGERY_TOL or length(u, N) > plan.bound * (1 + 1e-12)
        done += 1
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt <= SURGERY_BUDGET_S
    verdict(5, ok, f"instances={done} violations={bad} max_rel_endpoint_err={worst:.1e} runtime={dt:.1f}s")


def test_criterion_6_lemma_suite(verdict):
    rng = np.random.default_rng(6)
    viol = dict.fromkeys(["adequate", "wedge_ineq", "wedge_eq", "horizontal", "coeff", "decomp"], 0)
    worst_res = 0.0
    for _ in range(LEMMA_INSTANCES):
        n = int(rng.integers(2, 6))
        G = rng.standard_normal((n, n))
        p = AdequateProduct(G @ G.T + 0.1 * np.eye(n))
        x1, x2, y1, y2 = rng.standard_normal((4, n))
        lhs = p.inner(GroupElement(np.zeros(n), wedge(x1, x2)), GroupElement(np.zeros(n), wedge(y1, y2)))
        rhs = p.inner_vec(x1, y1) * p.inner_vec(x2, y2) - p.inner_vec(x1, y2) * p.inner_vec(x2, y1)
        viol["adequate"] += abs(lhs - rhs) > 1e-10 * (1 + abs(rhs))

        x, y = rng.standard_normal((2, n))
        w = np.linalg.norm(wedge(x, y))
        viol["wedge_ineq"] += w > np.linalg.norm(x) * np.linalg.norm(y) * (1 + 1e-12)
        yo = y - (x @ y) / (x @ x) * x
        viol["wedge_eq"] += abs(np.linalg.norm(wedge(x, yo)) - np.linalg.norm(x) * np.linalg.norm(yo)) > 1e-12 * (
            1 + np.linalg.norm(x) * np.linalg.norm(yo))
        cos = abs(x @ y) / (np.linalg.norm(x) * np.linalg.norm(y))
        if cos > 1e-3:
            viol["wedge_eq"] += not w < np.linalg.norm(x) * np.linalg.norm(y)

        m = max(n, 3)
        P = GrassmannPlane(np.linalg.qr(rng.standard_normal((m, 2)))[0])
        u = Control.from_segments(zip(rng.uniform(0.1, 1, 5), rng.standard_normal((5, m))))
        t = rng.uniform(0, 1)
        b = u.breakpoints
        wt = np.minimum(b[1:], t) - np.minimum(b[:-1], t)
        lhs = np.linalg.norm(evaluate(u, t).x @ P.normal_frame)
        rhs = np.linalg.norm(np.sum(wt[:, None] * (u.values @ P.normal_frame), axis=0))
        viol["horizontal"] += abs(lhs - rhs) > 1e-10

        k = int(rng.integers(1, n + 1))
        A = rng.standard_normal((k, n))
        lam0 = rng.standard_normal(k)
        v = A.T @ lam0
        lam = span_coefficients(v, A)
        viol["coeff"] += np.max(np.abs(lam)) > np.linalg.norm(v) / min_height(A) * (1 + 1e-9)

        X = rng.standard_normal((m - 1, m))
        eps = min_height(X)
        Y = rng.standard_normal(m * (m - 1) // 2)
        Y /= np.linalg.norm(Y)
        V = wedge_decompose(Y, X, eps)
        res = np.linalg.norm(wedge(X, V).sum(0) - Y)
        worst_res = max(worst_res, res)
        K1 = np.sqrt(m * (m - 1) / 2)
        viol["decomp"] += res > LEMMA_RESIDUAL or np.linalg.norm(V, axis=1).max() > K1 / eps * (1 + 1e-9)
    viol = {k: int(v) for k, v in viol.items()}
    ok = not any(viol.values())
    verdict(6, ok, f"instances={LEMMA_INSTANCES} violations={viol} max_decomp_residual={worst_res:.1e}")


def test_criterion_7_competitor_soundness(verdict, lipschitz_report):
    rows = lipschitz_report.records
    certified = [r for r in rows if r.get("cert_status") == "ok"]
    # excess = length - length(geo); bound excess = (C5 / delta) d_eu(g, h)
    bad = [r for r in certified if not (r["competitor_endpoint_error"] <= COMPETITOR_TOL
                                        and r["competitor_excess"] <= r["competitor_bound_excess"] + 1e-12)]
    sharp = [r for r in rows if r["kind"] == "sharp"]
    rate = sum(r.get("cert_status") == "ok" for r in sharp) / len(sharp)
    ok = not bad and rate >= CERT_RATE
    verdict(7, ok, f"certified={len(certified)}/{len(rows)} violations={len(bad)} sharp_success_rate={rate:.2f}")


def test_criterion_8_dyadic_summability(verdict):
    rep = exp_dyadic()
    prod = [r["product"] for r in rep.records]
    s = rep.summary
    ok = s["strictly_decreasing"] and np.isfinite(s["total"]) and s["last_over_first"] <= DYADIC_RATIO
    verdict(8, ok, "products=" + ", ".join(f"{p:.4g}" for p in prod)
            + f" last/first={s['last_over_first']:.3g} total={s['total']:.4g}")
