"""Numerical experiments: sharp example, tube volume, Lipschitz scaling, dyadic sums."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from math import gamma, pi

import numpy as np
from scipy.stats import linregress

from .abnormal import abnormal_distance, abnormal_distance_batch
from .distance import (MetricConstants, OptimizerConfig, estimate_dcc, estimate_M,
                       heisenberg_l1_gap)
from .errors import CertificateError, OptimizerInfeasibleError, PreconditionError
from .group import GroupElement, GroupModel, bivector_dim, pair_indices, radial_project, sample_sphere
from .norms import SubFinslerNorm, norm_equivalence_constant
from .report import ExperimentReport
from .surgery import DerivedConstants, lipschitz_competitor

log = logging.getLogger(__name__)

DEFAULT_DELTAS = tuple(np.geomspace(0.1, 0.4, 5))


def sphere_area(d: int) -> float:
    """(d-1)-dimensional measure of the unit sphere in R^d."""
    return 2 * pi ** (d / 2) / gamma(d / 2)


@dataclass
class SphereSampler:
    """Uniform samples of the Euclidean unit sphere, reproducible by chunk."""

    model: GroupModel
    seed: int
    count: int
    chunk: int = 20000

    def chunks(self):
        ss = np.random.SeedSequence(self.seed)
        nchunks = -(-self.count // self.chunk)
        for k, child in enumerate(ss.spawn(nchunks)):
            m = min(self.chunk, self.count - k * self.chunk)
            yield sample_sphere(self.model, m, np.random.default_rng(child))

    def sample(self) -> np.ndarray:
        return np.vstack(list(self.chunks()))


def parse_grid(spec) -> list:
    """'lo:hi:k' (geometric) or a list of numbers."""
    if isinstance(spec, str):
        if ":" in spec:
            lo, hi, k = spec.split(":")
            return list(np.geomspace(float(lo), float(hi), int(k)))
        return [float(s) for s in spec.split(",") if s.strip()]
    return [float(s) for s in spec]


def log_fit(x, y):
    """Least-squares line through (log x, log y); returns slope, intercept, slope stderr."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan"), float("nan"), float("nan")
    if ok.sum() == 2:
        s = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)
        return float(s[0]), float(s[1]), 0.0
    r = linregress(np.log(x[ok]), np.log(y[ok]))
    return float(r.slope), float(r.intercept), float(r.stderr)


def _orthonormal_rows(model: GroupModel, P):
    if model.product.standard:
        return P
    p = model.product
    x = p.vec_to_orthonormal(P[:, :model.n])
    Y = np.array([p.biv_to_orthonormal(y) for y in P[:, model.n:]])
    return np.hstack([x, Y])


def tube_distances(model: GroupModel, samples: int, seed: int, *, iters: int = 50,
                   closed_form: bool | None = None) -> np.ndarray:
    """Abnormal distances of uniform sphere samples (closed form for rank 3 by default)."""
    n = model.n
    if closed_form is None:
        closed_form = n == 3
    out = []
    for P in SphereSampler(model, seed, samples).chunks():
        P = _orthonormal_rows(model, P)
        if closed_form:
            if n != 3:
                raise PreconditionError("closed-form membership only for rank 3")
            out.append(np.linalg.norm(P[:, n:], axis=1))
        else:
            out.append(abnormal_distance_batch(P, n, iters=iters))
    return np.concatenate(out)


def exp_tube(n: int = 4, samples: int = 200_000, deltas=DEFAULT_DELTAS, seed: int = 0, *,
             iters: int = 50, crosscheck: int = 2000) -> ExperimentReport:
    """Monte Carlo measure of the tube A_delta and its log-log slope in delta."""
    t0 = time.perf_counter()
    if n not in (3, 4):
        raise PreconditionError("tube experiment supports n in {3, 4}")
    deltas = parse_grid(deltas)
    model = GroupModel(n)
    dist = tube_distances(model, samples, seed, iters=iters)
    area = sphere_area(model.d)
    frac = np.array([np.mean(dist <= d) for d in deltas])
    se = np.sqrt(frac * (1 - frac) / samples)
    meas = frac * area
    slope, icpt, slope_se = log_fit(deltas, meas)
    C3 = float(np.exp(icpt)) if np.isfinite(icpt) else float("nan")
    summary = {"slope": slope, "slope_stderr": slope_se, "C3_fit": C3, "samples": samples,
               "sphere_area": area}
    if n == 3 and crosscheck:
        P = SphereSampler(model, seed, min(crosscheck, samples)).sample()
        num = abnormal_distance_batch(P, 3, iters=200)
        summary["crosscheck_max_abs_err"] = float(np.max(np.abs(num - np.linalg.norm(P[:, 3:], axis=1))))
    records = [{"n": n, "delta": float(d), "fraction": float(f), "stderr": float(s),
                "rel_stderr": float(s / f) if f > 0 else float("inf"), "measure": float(m),
                "samples": samples, "slope": slope, "C3_fit": C3}
               for d, f, s, m in zip(deltas, frac, se, meas)]
    cfg = {"n": n, "samples": samples, "deltas": [float(d) for d in deltas], "iters": iters}
    return ExperimentReport("tube", records, summary, seed, cfg, time.perf_counter() - t0)


def sharp_pair(delta: float, eps: float):
    """n=4 points e1^e2 + delta e3 and the same plus eps e3^e4."""
    I, J = pair_indices(4)
    Y = np.zeros(bivector_dim(4))
    Y[(I == 0) & (J == 1)] = 1.0
    g = GroupElement([0, 0, delta, 0], Y.copy())
    Y[(I == 2) & (J == 3)] = eps
    return g, GroupElement([0, 0, delta, 0], Y)


def exp_sharp(deltas=(0.1, 0.2, 0.3, 0.4, 0.5), ratio: float = 0.5, seed: int = 0,
              cfg: OptimizerConfig | None = None) -> ExperimentReport:
    """Exact versus numerical gap d_cc(h) - d_cc(g) along the sharp family (n=4, l1)."""
    t0 = time.perf_counter()
    if not 0 < ratio <= 1:
        raise PreconditionError("ratio eps/delta^2 must lie in (0, 1]")
    cfg = cfg or OptimizerConfig(seed=seed)
    N = SubFinslerNorm.l1(4)
    deltas = parse_grid(deltas)
    records = []
    for d in deltas:
        eps = ratio * d * d
        g, h = sharp_pair(d, eps)
        row = {"delta": float(d), "eps": eps, "exact_gap": heisenberg_l1_gap(d, eps)}
        try:
            eg = estimate_dcc(g, N, cfg)
            eh = estimate_dcc(h, N, cfg, warm_starts=[eg.certificate])
            row.update(dcc_g=eg.upper, dcc_h=eh.upper, numerical_gap=eh.upper - eg.upper, status="ok")
            ex = row["exact_gap"]
            err = abs(row["numerical_gap"] - ex)
            row["rel_error"] = err / ex if ex > 0 else err
        except OptimizerInfeasibleError as exc:
            row.update(dcc_g=None, dcc_h=None, numerical_gap=None, rel_error=None,
                       status=f"infeasible:{exc.best_residual:.3e}")
        ad = abnormal_distance(g)
        row.update(abn_distance=ad.distance, abn_error=abs(ad.distance - d), abn_converged=ad.converged)
        records.append(row)
    errs = [r["rel_error"] for r in records if r.get("rel_error") is not None]
    summary = {"max_rel_error": max(errs) if errs else None,
               "max_abn_error": max(r["abn_error"] for r in records)}
    conf = {"deltas": [float(d) for d in deltas], "ratio": ratio, "optimizer": cfg.to_mapping()}
    return ExperimentReport("sharp", records, summary, seed, conf, time.perf_counter() - t0)


# --- Lipschitz quotients ---------------------------------------------------

def sample_stratum(model: GroupModel, delta: float, count: int, rng, *, batch: int = 20000,
                   max_batches: int = 200) -> list:
    """Sphere points with abnormal distance in [delta, 2 delta] (rejection sampling)."""
    n = model.n
    out = []
    for _ in range(max_batches):
        P = sample_sphere(model, batch, rng)
        d = abnormal_distance_batch(_orthonormal_rows(model, P), n, iters=50)
        for k in np.flatnonzero((d >= delta * 1.02) & (d <= 2 * delta * 0.98)):
            g = GroupElement.from_vector(P[k])
            ad = abnormal_distance(g, model).distance
            if delta <= ad <= 2 * delta:
                out.append((g, ad))
                if len(out) == count:
                    return out
    return out


def neighbour(model: GroupModel, g: GroupElement, step: float, rng) -> GroupElement:
    """Radial projection of g plus a random perturbation of Euclidean size `step`."""
    xi = rng.standard_normal(model.d)
    xi *= step / np.linalg.norm(xi)
    p = model.product
    v = np.concatenate([p.vec_from_orthonormal(xi[:model.n]), p.biv_from_orthonormal(xi[model.n:])])
    return radial_project(GroupElement.from_vector(g.as_vector() + v), model)[0]


def _competitor_row(g, geo, h, delta, consts, N, model):
    try:
        c = lipschitz_competitor(g, geo, h, delta, consts, N, model)
    except CertificateError as exc:
        return None, {"cert_status": "failed", "min_height": exc.achieved}
    except PreconditionError as exc:
        return None, {"cert_status": f"precondition:{exc}"}
    return c, {
        "cert_status": "ok", "min_height": c.min_height, "cert_threshold": c.eps,
        "competitor_length": c.length, "competitor_excess": c.length - c.geo_length,
        "competitor_bound_excess": c.bound - c.geo_length,
        "competitor_sharp_excess": c.sharp_bound - c.geo_length,
        "competitor_endpoint_error": c.endpoint_error,
        "competitor_ok": bool(c.endpoint_error <= 1e-9 and c.length <= c.bound * (1 + 1e-12) + 1e-12),
    }


def lipschitz_pair(g, h, delta, N, cfg, consts, model):
    """Quotient |d(h) - d(g)| / d_eu(g, h) with cross warm starts and the competitor."""
    eg = estimate_dcc(g, N, cfg, model=model)
    comp, row = _competitor_row(g, eg.certificate, h, delta, consts, N, model)
    warm = [eg.certificate] + ([comp.control] if comp is not None else [])
    eh = estimate_dcc(h, N, cfg, model=model, warm_starts=warm)
    eg2 = estimate_dcc(g, N, cfg, model=model, warm_starts=[eh.certificate, eg.certificate])
    dg = min(eg.upper, eg2.upper)
    d_eu = model.dist(g, h)
    q = (eh.upper - dg) / d_eu if d_eu > 0 else 0.0
    row.update(dcc_g=dg, dcc_h=eh.upper, d_eu=d_eu, quotient=q, abs_quotient=abs(q),
               q_delta=abs(q) * delta)
    if comp is not None:
        row["competitor_quotient_bound"] = (comp.length - comp.geo_length) / d_eu if d_eu > 0 else 0.0
    return row


def metric_constants(N: SubFinslerNorm, model: GroupModel, M=None, M_samples: int = 8,
                     cfg: OptimizerConfig | None = None, seed: int = 0) -> MetricConstants:
    if M is not None:
        return MetricConstants(norm_equivalence_constant(N, model.product), float(M), float("nan"))
    return estimate_M(N, M_samples, cfg, model=model, seed=seed)


def exp_lipschitz(n: int = 4, norm: str = "l1", deltas=(0.05, 0.1, 0.2, 0.3, 0.4), pairs: int = 4,
                  seed: int = 0, cfg: OptimizerConfig | None = None, *, M=None, M_samples: int = 8,
                  sharp: bool = True, step_ratio: float = 0.1) -> ExperimentReport:
    """Empirical Lipschitz quotients of d_cc(0, .) against delta.

    Sharp rows use the explicit family (rank 4, l1) where the quotient is
    2/delta.  Random rows draw g with abnormal distance in [delta, 2 delta]
    and h at Euclidean distance delta * step_ratio on the sphere.
    """
    t0 = time.perf_counter()
    cfg = cfg or OptimizerConfig(seed=seed)
    model = GroupModel(n)
    N = SubFinslerNorm(norm, n)
    deltas = parse_grid(deltas)
    mc = metric_constants(N, model, M, M_samples, cfg, seed)
    consts = DerivedConstants.from_metric(n, mc.C1, mc.M)
    records = []
    if sharp and n == 4 and N.kind == "l1":
        for d in deltas:
            eps = min(step_ratio * d, d * d / 2)
            g, h = sharp_pair(d, eps)
            eg = estimate_dcc(g, N, cfg)
            eh = estimate_dcc(h, N, cfg, warm_starts=[eg.certificate])
            d_eu = model.dist(g, h)
            q = (eh.upper - eg.upper) / d_eu
            row = {"kind": "sharp", "delta": float(d), "pair": 0, "abn_distance": d, "eps": eps,
                   "exact_quotient": heisenberg_l1_gap(d, eps) / d_eu,
                   "dcc_g": eg.upper, "dcc_h": eh.upper, "d_eu": d_eu, "quotient": q,
                   "abs_quotient": abs(q), "q_delta": abs(q) * d}
            gs, _ = radial_project(g, model)
            hs, _ = radial_project(h, model)
            es = estimate_dcc(gs, N, cfg, model=model)
            ad = abnormal_distance(gs, model).distance
            _, crow = _competitor_row(gs, es.certificate, hs, min(d, ad), consts, N, model)
            row.update(crow)
            records.append(row)
    for k, d in enumerate(deltas):
        rng = np.random.default_rng([seed, k])
        for j, (g, ad) in enumerate(sample_stratum(model, d, pairs, rng)):
            h = neighbour(model, g, step_ratio * d, rng)
            row = {"kind": "random", "delta": float(d), "pair": j, "abn_distance": ad}
            try:
                row.update(lipschitz_pair(g, h, d, N, cfg, consts, model))
            except OptimizerInfeasibleError as exc:
                row["status"] = f"infeasible:{exc.best_residual:.3e}"
            records.append(row)
    summary = _lipschitz_summary(records, deltas, consts)
    conf = {"n": n, "norm": norm, "deltas": [float(d) for d in deltas], "pairs": pairs,
            "M": mc.M, "C1": mc.C1, "sharp": sharp, "step_ratio": step_ratio,
            "optimizer": cfg.to_mapping()}
    return ExperimentReport("lipschitz", records, summary, seed, conf, time.perf_counter() - t0)


def _lipschitz_summary(records, deltas, consts):
    out = {"C5": consts.C5, "C4": consts.C4, "M": consts.M, "C1": consts.C1}
    sharp = [r for r in records if r["kind"] == "sharp"]
    if sharp:
        qd = np.array([r["q_delta"] for r in sharp])
        out["sharp_q_delta_min"] = float(qd.min())
        out["sharp_q_delta_max"] = float(qd.max())
        out["sharp_slope"] = log_fit([r["delta"] for r in sharp], [r["abs_quotient"] for r in sharp])[0]
    rnd = [r for r in records if r["kind"] == "random" and "quotient" in r]
    per = []
    for d in deltas:
        rows = [r for r in rnd if r["delta"] == float(d)]
        if rows:
            per.append((float(d), max(r["abs_quotient"] for r in rows)))
    if per:
        ds, qs = zip(*per)
        out["random_max_q_delta"] = float(max(q * d for d, q in per))
        out["random_max_q"] = dict((f"{d:.6g}", q) for d, q in per)
        out["random_q_delta_slope"] = log_fit(ds, [q * d for d, q in per])[0]
    certs = [r for r in records if "cert_status" in r]
    if certs:
        ok = [r for r in certs if r["cert_status"] == "ok"]
        out["cert_success_rate"] = len(ok) / len(certs)
        out["competitor_violations"] = sum(not r["competitor_ok"] for r in ok)
    return out


def exp_dyadic(n: int = 4, levels: int = 4, samples: int = 200_000, pairs: int = 4, seed: int = 0,
               norm: str = "l1", cfg: OptimizerConfig | None = None, *, M=None,
               M_samples: int = 8) -> ExperimentReport:
    """Measure of E_k = A_{2^-k} minus A_{2^-k-1}, Lipschitz proxy at delta = 2^-k-1, and their product."""
    t0 = time.perf_counter()
    cfg = cfg or OptimizerConfig(seed=seed)
    model = GroupModel(n)
    N = SubFinslerNorm(norm, n)
    dist = tube_distances(model, samples, seed)
    area = sphere_area(model.d)
    mc = metric_constants(N, model, M, M_samples, cfg, seed)
    consts = DerivedConstants.from_metric(n, mc.C1, mc.M)
    records = []
    for k in range(1, levels + 1):
        hi, lo = 2.0 ** -k, 2.0 ** -(k + 1)
        frac = float(np.mean((dist <= hi) & (dist > lo)))
        tube = float(np.mean(dist <= hi))
        rng = np.random.default_rng([seed, 1000 + k])
        qs = []
        for g, ad in sample_stratum(model, lo, pairs, rng):
            h = neighbour(model, g, 0.1 * lo, rng)
            try:
                qs.append(lipschitz_pair(g, h, lo, N, cfg, consts, model)["abs_quotient"])
            except OptimizerInfeasibleError:
                continue
        lip = max(qs) if qs else float("nan")
        records.append({"level": k, "delta_hi": hi, "delta_lo": lo, "fraction": frac,
                        "measure": frac * area, "tube_measure": tube * area, "lip": lip,
                        "pairs": len(qs), "product": frac * area * (1 + lip)})
    prod = np.array([r["product"] for r in records])
    lv = np.array([r["level"] for r in records], float)
    ok = prod > 0
    exponent = float(np.polyfit(lv[ok], np.log2(prod[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    summary = {"decay_exponent_per_level": exponent,
               "strictly_decreasing": bool(np.all(np.diff(prod) < 0)),
               "last_over_first": float(prod[-1] / prod[0]) if prod[0] > 0 else float("nan"),
               "total": float(prod.sum()), "sphere_area": area,
               "measure_sum": float(sum(r["measure"] for r in records))}
    conf = {"n": n, "levels": levels, "samples": samples, "pairs": pairs, "norm": norm,
            "M": mc.M, "optimizer": cfg.to_mapping()}
    return ExperimentReport("dyadic", records, summary, seed, conf, time.perf_counter() - t0)
