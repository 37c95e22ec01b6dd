"""Carnot-Caratheodory distance from the identity: bracket estimates.

The upper bound is the length of an explicit control reaching the target,
found by direct transcription: the displacements of a K-segment control are
the unknowns, the endpoint is an exact polynomial in them, and SLSQP
minimizes the length under the endpoint equality.  Polyhedral norms are
lifted to linear programs in disguise (vertex weights or facet epigraph
variables), so no smoothing is needed; l2 is smoothed with an annealed
parameter.  The lower bound is N(pi(g)).
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.linalg import schur
from scipy.optimize import linprog, minimize

from .controls import Control, chain_endpoint, chain_jacobian, length
from .errors import (ConfigError, DomainError, OptimizerInfeasibleError,
                     UnsupportedFamilyError)
from .group import (GroupElement, GroupModel, bivector_to_matrix, default_model,
                    dilate, pair_indices, radial_project, sample_sphere)
from .norms import SubFinslerNorm, norm_equivalence_constant

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    segments: int = 16
    restarts: int = 16
    seed: int = 0
    feas_tol: float = 1e-8
    smoothing_schedule: tuple = (1e-2, 1e-4, 1e-6, 1e-8)
    maxiter: int = 300
    constructive: bool = True

    def __post_init__(self):
        if int(self.segments) < 2:
            raise ConfigError("segments must be at least 2")
        if int(self.restarts) < 0:
            raise ConfigError("restarts must be non-negative")
        if not self.feas_tol > 0:
            raise ConfigError("feas_tol must be positive")
        sched = tuple(float(m) for m in self.smoothing_schedule)
        if not sched or any(m <= 0 for m in sched):
            raise ConfigError("smoothing_schedule must be a non-empty list of positive numbers")
        object.__setattr__(self, "smoothing_schedule", sched)
        object.__setattr__(self, "segments", int(self.segments))
        object.__setattr__(self, "restarts", int(self.restarts))
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def from_mapping(cls, m) -> "OptimizerConfig":
        known = {f.name for f in fields(cls)}
        extra = set(m) - known
        if extra:
            raise ConfigError(f"unknown optimizer keys: {sorted(extra)}")
        try:
            return cls(**m)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "OptimizerConfig":
        from .report import load_config
        return cls.from_mapping(load_config(path).get("optimizer", {}))

    def to_mapping(self) -> dict:
        d = asdict(self)
        d["smoothing_schedule"] = list(self.smoothing_schedule)
        return d


@dataclass(frozen=True, eq=False)
class DistanceEstimate:
    upper: float
    lower: float
    certificate: Control
    residual: float
    starts: int = 0

    @property
    def gap(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class MetricConstants:
    C1: float
    M: float
    Minv: float
    samples: int = 0
    failures: int = 0


# --- endpoint residuals ---------------------------------------------------

class _Target:
    def __init__(self, x, Y, N: SubFinslerNorm, K: int):
        self.x = np.asarray(x, float)
        self.Y = np.asarray(Y, float)
        self.n = self.x.size
        self.N = N
        self.K = K

    def residual(self, D) -> np.ndarray:
        x, Y = chain_endpoint(D)
        return np.concatenate([x - self.x, Y - self.Y])

    def polish(self, D, iters=20, tol=1e-15):
        """Gauss-Newton with minimum-norm steps onto the endpoint constraint."""
        D = np.array(D, float)
        F = self.residual(D)
        for _ in range(iters):
            if np.linalg.norm(F) <= tol:
                break
            J = chain_jacobian(D)
            step = np.linalg.lstsq(J, F, rcond=None)[0]
            D2 = D - step.reshape(D.shape)
            F2 = self.residual(D2)
            if np.linalg.norm(F2) >= np.linalg.norm(F):
                break
            D, F = D2, F2
        return D, float(np.linalg.norm(F))


# --- lifts ------------------------------------------------------------------

def _vertex_weights(D, V):
    """Minimal-sum nonnegative weights lam with lam @ V = D, row by row."""
    K, m = D.shape[0], V.shape[0]
    out = np.zeros((K, m))
    for k in range(K):
        if not np.any(D[k]):
            continue
        res = linprog(np.ones(m), A_eq=V.T, b_eq=D[k], bounds=(0, None), method="highs")
        if res.status == 0:
            out[k] = res.x
        else:
            out[k] = np.maximum(np.linalg.lstsq(V.T, D[k], rcond=None)[0], 0)
    return out


def _solve_vertex(tgt: _Target, D0, V, maxiter):
    K, n = D0.shape
    m = V.shape[0]
    if tgt.N.kind == "l1":
        lam0 = np.hstack([np.maximum(D0, 0), np.maximum(-D0, 0)])
    else:
        lam0 = _vertex_weights(D0, V)

    def disp(z):
        return z.reshape(K, m) @ V

    def cjac(z):
        J = chain_jacobian(disp(z)).reshape(-1, K, n)
        return np.einsum("rkn,vn->rkv", J, V).reshape(-1, K * m)

    res = minimize(lambda z: z.sum(), lam0.ravel(), jac=lambda z: np.ones_like(z),
                   method="SLSQP", bounds=[(0, None)] * (K * m),
                   constraints=[{"type": "eq", "fun": lambda z: tgt.residual(disp(z)), "jac": cjac}],
                   options={"maxiter": maxiter, "ftol": 1e-13})
    return disp(res.x)


def _solve_facet(tgt: _Target, D0, A, maxiter):
    K, n = D0.shape
    m = A.shape[0]
    t0 = np.max(D0 @ A.T, axis=1)
    z0 = np.concatenate([D0.ravel(), t0])
    # t_k - a . D_k >= 0 for every facet a and segment k
    G = np.zeros((K, m, K * n + K))
    for k in range(K):
        G[k, :, k * n:(k + 1) * n] = -A
        G[k, :, K * n + k] = 1.0
    G = G.reshape(K * m, -1)
    c = np.concatenate([np.zeros(K * n), np.ones(K)])

    def disp(z):
        return z[:K * n].reshape(K, n)

    def cjac(z):
        return np.hstack([chain_jacobian(disp(z)), np.zeros((tgt.n + len(tgt.Y), K))])

    res = minimize(lambda z: c @ z, z0, jac=lambda z: c, method="SLSQP",
                   constraints=[{"type": "eq", "fun": lambda z: tgt.residual(disp(z)), "jac": cjac},
                                {"type": "ineq", "fun": lambda z: G @ z, "jac": lambda z: G}],
                   options={"maxiter": maxiter, "ftol": 1e-13})
    return disp(res.x)


def _solve_smooth(tgt: _Target, D0, schedule, maxiter):
    K, n = D0.shape
    z = D0.ravel()
    for mu in schedule:
        def f(z, mu=mu):
            D = z.reshape(K, n)
            return np.sum(np.sqrt(np.sum(D * D, 1) + mu * mu))

        def g(z, mu=mu):
            D = z.reshape(K, n)
            return (D / np.sqrt(np.sum(D * D, 1) + mu * mu)[:, None]).ravel()

        res = minimize(f, z, jac=g, method="SLSQP",
                       constraints=[{"type": "eq", "fun": lambda z: tgt.residual(z.reshape(K, n)),
                                     "jac": lambda z: chain_jacobian(z.reshape(K, n))}],
                       options={"maxiter": maxiter, "ftol": 1e-13})
        z = res.x
    return z.reshape(K, n)


def _local_solve(tgt: _Target, D0, cfg: OptimizerConfig):
    N = tgt.N
    if N.kind == "l2":
        return _solve_smooth(tgt, D0, cfg.smoothing_schedule, cfg.maxiter)
    V, A = N.vertices, N.facets
    if V.shape[0] <= A.shape[0]:
        return _solve_vertex(tgt, D0, V, cfg.maxiter)
    return _solve_facet(tgt, D0, A, cfg.maxiter)


# --- starting points ------------------------------------------------------

def rotation_planes(Y, n: int, tol: float = 1e-14):
    """Orthonormal pairs (a, b) and areas lam with Y = sum lam a ^ b, lam > 0."""
    A = bivector_to_matrix(Y, n)
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale == 0:
        return []
    T, Z = schur(A, output="real")
    planes = []
    k = 0
    while k < n:
        if k + 1 < n and abs(T[k + 1, k]) > tol * scale:
            lam = 0.5 * (T[k, k + 1] - T[k + 1, k])
            a, b = Z[:, k], Z[:, k + 1]
            if lam < 0:
                a, b, lam = b, a, -lam
            planes.append((a, b, lam))
            k += 2
        else:
            k += 1
    return planes


def _square(a, b, lam):
    s = np.sqrt(lam)
    return [s * a, s * b, -s * a, -s * b]


def constructive_paths(x, Y, n: int) -> list[np.ndarray]:
    """Exactly feasible displacement lists reaching (x, Y).

    One path goes straight along x and then draws a square loop of the right
    area in every rotation plane of Y.  The others replace the loop of one
    plane by a rectangle raised over the projection of x on that plane
    (cheaper when the projection is long), splitting the rest of x in two
    halves around it so no cross terms appear.
    """
    x = np.asarray(x, float)
    planes = rotation_planes(Y, n)
    loops = [_square(*p) for p in planes]
    paths = [[x] + [v for L in loops for v in L]]
    for k, (a, b, lam) in enumerate(planes):
        c = (x @ a) * a + (x @ b) * b
        cn = np.linalg.norm(c)
        if cn <= 1e-12 * max(1.0, np.linalg.norm(x)):
            continue
        ch = c / cn
        nh = -(ch @ b) * a + (ch @ a) * b
        h = lam / cn
        r = x - c
        rect = [-h * nh, c, h * nh]
        rest = [v for j, L in enumerate(loops) if j != k for v in L]
        paths.append([0.5 * r] + rect + [0.5 * r] + rest)
    out = []
    for p in paths:
        D = np.array([v for v in p if np.any(v)]) if p else np.zeros((0, n))
        out.append(D.reshape(-1, n))
    return out


def split_to(D, K: int) -> np.ndarray | None:
    """Subdivide the longest displacements until there are K of them."""
    D = [np.asarray(v, float) for v in D]
    if not D or len(D) > K:
        return None
    pieces = [1] * len(D)
    norms = np.array([np.linalg.norm(v) for v in D])
    while sum(pieces) < K:
        j = int(np.argmax(norms / pieces))
        pieces[j] += 1
    return np.vstack([np.repeat(v[None, :] / p, p, axis=0) for v, p in zip(D, pieces)])


# --- estimator ------------------------------------------------------------

def _residual_eu(model, D, g):
    x, Y = chain_endpoint(D)
    return model.dist(GroupElement(x, Y), g)


def estimate_dcc(g: GroupElement, N: SubFinslerNorm, cfg: OptimizerConfig | None = None, *,
                 model: GroupModel | None = None, warm_starts=()) -> DistanceEstimate:
    """Upper/lower bracket for d_cc(0, g) with a certificate control.

    The target is first moved to the unit sphere by a dilation; the search
    runs there and the result is rescaled (d_cc is 1-homogeneous under
    dilations).  `warm_starts` are controls, ideally ending near g, that
    seed the search in addition to the constructive and random starts.
    """
    cfg = cfg or OptimizerConfig()
    model = model or default_model(g)
    model.check(g)
    if N.n != g.n:
        raise DomainError("norm dimension differs from group rank")
    if g.is_identity():
        return DistanceEstimate(0.0, 0.0, Control.empty(g.n), 0.0)
    lower = float(N(g.x))
    gh, t = radial_project(g, model)
    K = cfg.segments
    tgt = _Target(gh.x, gh.Y, N, K)
    floor = float(N(gh.x))
    rng = np.random.default_rng(cfg.seed)

    best = None            # (length, residual, D)
    best_res = np.inf
    starts = 0

    def consider(D):
        nonlocal best, best_res
        D, res = tgt.polish(D)
        best_res = min(best_res, res)
        if res > 1e-10:
            return
        L = float(np.sum(N(D)))
        if best is None or L < best[0]:
            best = (L, res, D)

    def done():
        return best is not None and best[0] <= floor * (1 + 1e-12) + 1e-15

    seeds = []
    for u in warm_starts:
        D = u.displacements * t
        consider(D)
        Dk = split_to(D, K)
        if Dk is not None:
            seeds.append(Dk)
    if cfg.constructive:
        for D in constructive_paths(gh.x, gh.Y, g.n):
            if D.shape[0] == 0:
                continue
            consider(D)
            Dk = split_to(D, K)
            if Dk is not None:
                seeds.append(Dk)
    scale = 2.0 / K
    for r in range(cfg.restarts):
        if seeds and r % 2 == 1:
            base = seeds[(r // 2) % len(seeds)]
            rms = np.sqrt(np.mean(base * base)) + 1e-3
            seeds.append(base + 0.5 * rms * rng.standard_normal(base.shape))
        else:
            seeds.append(scale * rng.standard_normal((K, g.n)))

    for D0 in seeds:
        if done():
            break
        starts += 1
        try:
            D = _local_solve(tgt, D0, cfg)
        except (ValueError, np.linalg.LinAlgError) as exc:   # pragma: no cover - scipy edge cases
            log.debug("local solve failed: %s", exc)
            continue
        if np.all(np.isfinite(D)):
            consider(D)

    if best is None:
        raise OptimizerInfeasibleError(
            f"no start reached the target; best residual {best_res:.3e}", best_res)
    L, _, D = best
    cert = Control.from_displacements(D / t)
    resid = _residual_eu(model, cert.displacements, g)
    if resid > cfg.feas_tol * max(1.0, model.norm(g)):
        raise OptimizerInfeasibleError(f"certificate residual {resid:.3e} above tolerance", resid)
    return DistanceEstimate(length(cert, N), lower, cert, resid, starts)


# --- closed forms -----------------------------------------------------------

def heisenberg_l1_gap(delta: float, eps: float) -> float:
    """Excess 2 eps / delta of d_cc over the horizontal distance delta."""
    if not delta > 0 or not 0 <= eps <= delta * delta:
        raise UnsupportedFamilyError(f"(delta={delta}, eps={eps}) outside 0 <= eps <= delta^2")
    return 2.0 * eps / delta


def heisenberg_l1_family(target: GroupElement, tol: float = 1e-14) -> tuple[float, float]:
    """(delta, eps) when target = (delta e_i, eps e_i ^ e_j) up to coordinate signs."""
    x, Y = target.x, target.Y
    scale = max(np.max(np.abs(x)), np.max(np.abs(Y), initial=0.0))
    if scale == 0:
        return 0.0, 0.0
    nzx = np.flatnonzero(np.abs(x) > tol * scale)
    nzY = np.flatnonzero(np.abs(Y) > tol * scale)
    if nzx.size != 1:
        raise UnsupportedFamilyError("horizontal part is not along a single frame axis")
    i = nzx[0]
    delta = float(abs(x[i]))
    if nzY.size == 0:
        return delta, 0.0
    I, J = pair_indices(target.n)
    if nzY.size > 1 or i not in (I[nzY[0]], J[nzY[0]]):
        raise UnsupportedFamilyError("vertical part is not e_i ^ e_j with e_i along x")
    eps = float(abs(Y[nzY[0]]))
    if eps > delta * delta * (1 + 1e-12):
        raise UnsupportedFamilyError(f"eps={eps} exceeds delta^2={delta * delta}")
    return delta, min(eps, delta * delta)


def exact_heisenberg_l1(target: GroupElement, model: GroupModel | None = None) -> float:
    """d_cc(0, (delta e, eps e ^ f)) = delta + 2 eps / delta for l1, 0 <= eps <= delta^2."""
    model = model or default_model(target)
    if not model.product.standard:
        raise UnsupportedFamilyError("closed form needs the standard product")
    delta, eps = heisenberg_l1_family(target)
    if delta == 0:
        return 0.0
    return delta + heisenberg_l1_gap(delta, eps)


# --- metric constants -----------------------------------------------------

def estimate_M(N: SubFinslerNorm, samples: int, cfg: OptimizerConfig | None = None, *,
               model: GroupModel | None = None, seed: int = 0,
               extra_points=()) -> MetricConstants:
    """C1 exactly; M and Minv from d_cc brackets at uniform sphere samples."""
    if samples < 1:
        raise DomainError("need at least one sample")
    model = model or GroupModel(N.n)
    C1 = norm_equivalence_constant(N, model.product)
    pts = [GroupElement.from_vector(v) for v in sample_sphere(model, samples, np.random.default_rng(seed))]
    pts += list(extra_points)
    M, Minv, failures = 0.0, np.inf, 0
    for p in pts:
        try:
            est = estimate_dcc(p, N, cfg, model=model)
        except OptimizerInfeasibleError:
            failures += 1
            continue
        M = max(M, est.upper)
        Minv = min(Minv, est.lower)
    return MetricConstants(C1, M, Minv, len(pts), failures)


def certificate_json(est: DistanceEstimate) -> str:
    return json.dumps({"upper": est.upper, "lower": est.lower, "residual": est.residual,
                       "certificate": est.certificate.to_json_obj()})


def scaled_estimate(est: DistanceEstimate, t: float, N: SubFinslerNorm) -> DistanceEstimate:
    """Estimate for delta_t(g) from the one for g by scaling the certificate."""
    cert = est.certificate.scaled(t)
    return DistanceEstimate(length(cert, N), abs(t) * est.lower, cert, est.residual * max(abs(t), t * t),
                            est.starts)


def load_optimizer_config(path) -> OptimizerConfig:
    return OptimizerConfig.from_file(Path(path))
