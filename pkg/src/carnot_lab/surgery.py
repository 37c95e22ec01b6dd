"""Explicit path surgery behind the Lipschitz bound for d_cc away from Abn.

* wedge_decompose writes a bivector as sum x_j ^ v_j over a well-spread
  tuple x_1..x_{n-1}, with |v_j| controlled by the minimal height.
* central_correction_path conjugates each leg of a path by straight
  segments w_j, which adds the central element sum w_j ^ (x_j - x_{j-1}) = Z.
* lipschitz_competitor uses both on a (near) geodesic to g to reach a
  nearby h, with length at most length(geo) + C5/delta * d_eu(g, h).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .abnormal import GrassmannPlane, plane_distance
from .controls import (Control, boundary_points, concat_many, endpoint, length)
from .errors import CertificateError, PreconditionError
from .group import (GroupElement, GroupModel, bivector_to_matrix, default_model, multiply,
                    wedge)
from .heights import max_volume_certificate, min_height, span_coefficients
from .norms import SubFinslerNorm, norm_equivalence_constant


@dataclass(frozen=True)
class DerivedConstants:
    n: int
    C1: float
    M: float
    K1: float
    K: float
    C4: float
    K2: float
    delta0: float
    C5: float

    @classmethod
    def from_metric(cls, n: int, C1: float, M: float) -> "DerivedConstants":
        if n < 2 or not C1 > 0 or not M > 0:
            raise PreconditionError("need n >= 2 and positive C1, M")
        K1 = np.sqrt(n * (n - 1) / 2)
        K = 1 + 2 * C1 * M
        C4 = 1 / K
        K2 = 2 * C1 * K1 * (n - 1) ** 2
        delta0 = 2 * K2 / (C1 * C4)
        C5 = max(1.0, 4 * K2 / C4)
        return cls(n, C1, M, float(K1), K, C4, float(K2), float(delta0), float(C5))


def derived_constants(model: GroupModel, N: SubFinslerNorm, metric_consts) -> DerivedConstants:
    C1 = metric_consts.C1 if metric_consts.C1 else norm_equivalence_constant(N, model.product)
    return DerivedConstants.from_metric(model.n, C1, metric_consts.M)


def wedge_decompose(Y, tuple_points, eps: float) -> np.ndarray:
    """Vectors v_j with Y = sum_j x_j ^ v_j and |v_j| <= K1 |Y| / eps.

    Coordinates are orthonormal.  The x_j (n-1 rows) span a hyperplane; in
    an orthonormal frame e whose first n-1 vectors span it, every e_i ^ e_j
    (i < j) has e_i in the span and e_i = sum_k a_ik x_k gives the terms.
    """
    X = np.atleast_2d(np.asarray(tuple_points, dtype=float))
    m, n = X.shape
    if m != n - 1:
        raise PreconditionError(f"need {n - 1} vectors in rank {n}, got {m}")
    mh = min_height(X)
    if not eps > 0 or mh < eps * (1 - 1e-12):
        raise PreconditionError(f"minimal height {mh:.3e} below eps={eps:.3e}")
    Y = np.asarray(Y, dtype=float)
    V = np.zeros((m, n))
    if not np.any(Y):
        return V
    E = np.linalg.qr(X.T, mode="complete")[0]
    Ap = E.T @ bivector_to_matrix(Y, n) @ E
    coef = np.array([span_coefficients(E[:, i], X) for i in range(n - 1)])   # e_i = sum_k coef[i,k] x_k
    for i in range(n - 1):
        for j in range(i + 1, n):
            if Ap[i, j] != 0.0:
                V += Ap[i, j] * np.outer(coef[i], E[:, j])
    return V


@dataclass(frozen=True, eq=False)
class SurgeryPlan:
    """Legs, correction vectors and target Z of a central correction."""

    correction_vectors: np.ndarray
    waypoint_controls: tuple
    target_bivector: np.ndarray
    eps: float
    bound: float
    norm: SubFinslerNorm = field(default=None)

    @property
    def n(self) -> int:
        return self.correction_vectors.shape[1]

    def assemble(self) -> Control:
        parts = []
        for w, leg in zip(self.correction_vectors, self.waypoint_controls):
            parts += [Control.constant(w), leg, Control.constant(-w)]
        return concat_many(parts)

    def legs_endpoint(self) -> GroupElement:
        g = GroupElement.identity(self.correction_vectors.shape[1])
        for leg in self.waypoint_controls:
            g = multiply(g, endpoint(leg))
        return g

    def expected_endpoint(self) -> GroupElement:
        g = self.legs_endpoint()
        return GroupElement(g.x, g.Y + self.target_bivector)

    def to_json_obj(self) -> dict:
        return {
            "eps": self.eps,
            "bound": self.bound,
            "target_bivector": self.target_bivector.tolist(),
            "correction_vectors": self.correction_vectors.tolist(),
            "legs": [leg.to_json_obj() for leg in self.waypoint_controls],
            "norm": self.norm.to_json_obj() if self.norm is not None else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj) -> "SurgeryPlan":
        W = np.atleast_2d(np.asarray(obj["correction_vectors"], dtype=float))
        n = W.shape[1]
        legs = tuple(Control.from_json_obj(leg, n=n) for leg in obj["legs"])
        norm = SubFinslerNorm.from_json_obj(obj["norm"]) if obj.get("norm") else None
        return cls(W, legs, np.asarray(obj["target_bivector"], dtype=float), float(obj["eps"]),
                   float(obj["bound"]), norm)

    @classmethod
    def from_json(cls, text: str) -> "SurgeryPlan":
        return cls.from_json_obj(json.loads(text))


def plan_central_correction(legs, Z, eps: float, N: SubFinslerNorm,
                            model: GroupModel | None = None) -> SurgeryPlan:
    legs = tuple(legs)
    if not legs:
        raise PreconditionError("no legs")
    n = legs[0].n
    model = model or GroupModel(n)
    p = model.product
    steps = np.array([endpoint(leg).x for leg in legs])
    xs = np.cumsum(steps, axis=0)
    Zo = p.biv_to_orthonormal(Z)
    xo = p.vec_to_orthonormal(xs)
    V = wedge_decompose(Zo, xo, eps)
    Wo = -np.cumsum(V[::-1], axis=0)[::-1]
    recon = wedge(Wo, p.vec_to_orthonormal(steps)).sum(axis=0)
    if np.linalg.norm(recon - Zo) > 1e-10 * max(1.0, np.linalg.norm(Zo)):
        raise PreconditionError("correction vectors do not reproduce Z")
    W = p.vec_from_orthonormal(Wo)
    C1 = norm_equivalence_constant(N, p)
    K1 = np.sqrt(n * (n - 1) / 2)
    K2 = 2 * C1 * K1 * (n - 1) ** 2
    bound = sum(length(leg, N) for leg in legs) + K2 * np.linalg.norm(Zo) / eps
    return SurgeryPlan(W, legs, np.asarray(Z, dtype=float), float(eps), float(bound), N)


def central_correction_path(legs, Z, eps: float, N: SubFinslerNorm,
                            model: GroupModel | None = None) -> tuple[Control, float]:
    """Control from 0 to Z * g_{n-1} through conjugated legs, and its length bound.

    legs[j] runs from g_j to g_{j+1} (left-translated to start at 0); the
    positions pi(g_1..g_{n-1}) must have minimal height >= eps.
    """
    plan = plan_central_correction(legs, Z, eps, N, model)
    return plan.assemble(), plan.bound


@dataclass(frozen=True)
class TubeCheck:
    sup_distance: float
    end_distance: float
    eps: float
    K: float
    premise: bool
    conclusion: bool

    @property
    def holds(self) -> bool:
        return (not self.premise) or self.conclusion

    @property
    def witness(self) -> bool:
        """Premise true but conclusion false: the control cannot be a geodesic."""
        return self.premise and not self.conclusion


def tube_endpoint_check(u: Control, P: GrassmannPlane, eps: float, K: float,
                        model: GroupModel | None = None) -> TubeCheck:
    """Does a curve staying eps-close to P (horizontally) end K*eps-close to P x Lambda^2 P?

    The horizontal distance to P is convex along each linear piece of
    pi(gamma), so its sup is attained at segment boundaries.
    """
    model = model or GroupModel(u.n)
    _, X, _ = boundary_points(u)
    Xo = model.product.vec_to_orthonormal(X)
    sup = float(np.max(np.linalg.norm(Xo @ P.normal_frame, axis=1)))
    end = plane_distance(endpoint(u), P, model)
    return TubeCheck(sup, end, eps, K, sup < eps, end < K * eps)


@dataclass(frozen=True, eq=False)
class Competitor:
    control: Control
    length: float
    geo_length: float
    bound: float
    sharp_bound: float
    min_height: float
    eps: float
    times: tuple
    d_eu: float
    endpoint_error: float
    plan: SurgeryPlan


def _curve_samples(u: Control, level: int):
    r = u.refined(2 ** level)
    t, X, _ = boundary_points(r)
    return r, t[1:], X[1:]


def lipschitz_competitor(g: GroupElement, geo_g: Control, h: GroupElement, delta: float,
                         consts: DerivedConstants, N: SubFinslerNorm,
                         model: GroupModel | None = None, *, budget: int = 200_000,
                         max_refine: int = 4, check_tube: bool = False) -> Competitor:
    """Control reaching h built from a near-geodesic geo_g to g.

    The curve is sampled at boundaries and midpoints, refined while the best
    certificate height keeps growing.  Raises CertificateError when no
    n-1 curve points with minimal height >= C4 delta are found.
    """
    model = model or default_model(g)
    n = model.n
    p = model.product
    for name, pt in (("g", g), ("h", h)):
        if abs(model.norm(pt) - 1.0) > 1e-9:
            raise PreconditionError(f"{name} is not on the Euclidean unit sphere")
    if not 0 < delta < consts.delta0:
        raise PreconditionError(f"delta={delta} outside (0, {consts.delta0})")
    g_end = endpoint(geo_g)
    if model.dist(g_end, g) > 1e-7:
        raise PreconditionError("geo_g does not end at g")
    if check_tube:
        from .abnormal import abnormal_distance
        if abnormal_distance(g, model).distance < delta * (1 - 1e-9):
            raise PreconditionError("g lies inside the delta tube")
    eps = consts.C4 * delta

    best = None
    prev = 0.0
    for level in range(1, max_refine + 1):
        _, t, X = _curve_samples(geo_g, level)
        Xo = p.vec_to_orthonormal(X)
        cert = max_volume_certificate(Xo, n - 2, 0.0, budget)
        mh = cert.min_height if cert else 0.0
        if best is None or mh > best[0]:
            best = (mh, cert, t, Xo)
        if best[0] >= eps and mh <= prev * (1 + 1e-3):
            break
        prev = max(prev, mh)
    mh, cert, t, Xo = best
    if cert is None or mh < eps:
        raise CertificateError(f"best minimal height {mh:.3e} below C4*delta={eps:.3e}", mh)
    first = []
    for i in cert.indices:
        same = np.flatnonzero(np.all(Xo == Xo[i], axis=1))
        first.append(int(same[0]))
    times = sorted(float(t[i]) for i in first)
    if len(set(times)) != len(times):
        raise CertificateError("certificate repeats a curve point", mh)
    cuts = [0.0] + times
    legs = [geo_g.restrict(a, b) for a, b in zip(cuts[:-1], cuts[1:])]
    last = geo_g.restrict(times[-1], 1.0) if times[-1] < 1.0 else Control.empty(n)

    xi1, W1 = g_end.x, g_end.Y
    xi2, W2 = h.x, h.Y
    q = xi2 - xi1
    Z = W2 - W1 + 0.5 * wedge(xi2, xi1)
    plan = plan_central_correction(legs, Z, eps, N, model)
    ctrl = concat_many([plan.assemble(), last, Control.constant(q)])
    L = length(ctrl, N)
    geo_len = length(geo_g, N)
    d = model.dist(g, h)
    bound = geo_len + consts.C5 / delta * d
    sharp = geo_len + (2 * consts.K2 / (consts.C4 * delta) + consts.C1) * d
    err = model.dist(endpoint(ctrl), h)
    return Competitor(ctrl, L, geo_len, bound, sharp, mh, eps, tuple(times), d, err, plan)
