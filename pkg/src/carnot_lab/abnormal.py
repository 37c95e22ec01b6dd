"""Distance to the abnormal set, the union of P x Lambda^2(P) over
codimension-2 subspaces P of R^n, and the tube sets around it.

A plane P is stored through an orthonormal frame Q = [q1 q2] of its
orthogonal complement.  With A the skew matrix of Y,

    dist(g, P x Lambda^2 P)^2 = |Q^T x|^2 + |A Q|_F^2 - (q1^T A q2)^2,

a smooth function of Q that is minimized by projected gradient descent on
the Stiefel manifold.  All computations run in coordinates orthonormal
for the adequate product.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import null_space

from .errors import DomainError, ModelMismatchError
from .group import GroupElement, GroupModel, bivector_to_matrix, default_model

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GrassmannPlane:
    """Codimension-2 subspace P, stored as an orthonormal frame (n, 2) of its complement."""

    normal_frame: np.ndarray

    def __post_init__(self):
        Q = np.array(self.normal_frame, dtype=float)
        if Q.ndim != 2 or Q.shape[1] != 2 or Q.shape[0] < 2:
            raise ModelMismatchError("normal frame must have shape (n, 2)")
        if not np.allclose(Q.T @ Q, np.eye(2), atol=1e-12):
            Q = np.linalg.qr(Q)[0]
            if not np.allclose(Q.T @ Q, np.eye(2), atol=1e-12):
                raise DomainError("normal frame is rank deficient")
        Q.setflags(write=False)
        object.__setattr__(self, "normal_frame", Q)

    @property
    def n(self) -> int:
        return self.normal_frame.shape[0]

    @classmethod
    def from_normals(cls, q1, q2) -> "GrassmannPlane":
        Q, R = np.linalg.qr(np.column_stack([q1, q2]))
        if abs(R[1, 1]) < 1e-12 * max(1.0, abs(R[0, 0])):
            raise DomainError("normal vectors are dependent")
        return cls(Q)

    @classmethod
    def from_spanning(cls, vectors) -> "GrassmannPlane":
        """Plane spanned by n-2 independent vectors (rows)."""
        V = np.atleast_2d(np.asarray(vectors, dtype=float))
        Q = null_space(V)
        if Q.shape[1] != 2:
            raise DomainError("vectors do not span a codimension-2 subspace")
        return cls(Q)

    def basis(self) -> np.ndarray:
        """Orthonormal basis of P as columns, shape (n, n-2)."""
        return null_space(self.normal_frame.T)

    def project(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        Q = self.normal_frame
        return v - (v @ Q) @ Q.T


def _frame_distance2(x, A, Q):
    """Squared plane distance, batched: x (n, ...), A (n, n, ...), Q (n, 2, ...)."""
    AQ = np.einsum("ij...,jk...->ik...", A, Q)
    c = np.einsum("i...,i...->...", Q[:, 0], AQ[:, 1])
    v = np.einsum("i...,ik...->k...", x, Q)
    return (v ** 2).sum(0) + (AQ ** 2).sum((0, 1)) - c ** 2


def plane_distance(g: GroupElement, P: GrassmannPlane, model: GroupModel | None = None) -> float:
    model = model or default_model(g)
    model.check(g)
    if P.n != g.n:
        raise ModelMismatchError("plane and element of different rank")
    h = model.product.to_orthonormal(g)
    A = bivector_to_matrix(h.Y, g.n)
    return float(np.sqrt(max(_frame_distance2(h.x, A, P.normal_frame), 0.0)))


def _retract(Q):
    q1 = Q[:, 0] / np.sqrt((Q[:, 0] ** 2).sum(0))
    q2 = Q[:, 1] - (q1 * Q[:, 1]).sum(0) * q1
    q2 = q2 / np.sqrt((q2 ** 2).sum(0))
    return np.stack([q1, q2], 1)


def _descend(x, A, S, Q, lip, iters, gtol=0.0):
    """Projected gradient steps of size 1/(2 lip) on frames Q (n, 2, *batch).

    x, A, S, lip broadcast against the trailing batch axes of Q.
    Returns the final frames and the Riemannian gradient norms.
    """
    mm = lambda a, b: np.einsum("ij...,jk...->ik...", a, b)
    step = 0.5 / lip
    gn = np.full(Q.shape[2:], np.inf)
    for _ in range(iters):
        AQ = mm(A, Q)
        c = (Q[:, 0] * AQ[:, 1]).sum(0)
        G = 2 * mm(S, Q)
        G[:, 0] -= 2 * c * AQ[:, 1]
        G[:, 1] += 2 * c * AQ[:, 0]
        sym = np.einsum("ji...,jk...->ik...", Q, G)
        sym = 0.5 * (sym + np.swapaxes(sym, 0, 1))
        R = G - mm(Q, sym)
        gn = np.sqrt((R ** 2).sum((0, 1)))
        if gtol and np.all(gn <= gtol):
            break
        Q = _retract(Q - step * R)
    return Q, gn


@dataclass(frozen=True, eq=False)
class AbnormalDistance:
    distance: float
    plane: GrassmannPlane
    converged: bool

    def __iter__(self):
        return iter((self.distance, self.plane))


def abnormal_distance(g: GroupElement, model: GroupModel | None = None, *, starts: int = 64,
                      iters: int = 400, gtol: float = 1e-9, seed: int = 0) -> AbnormalDistance:
    """Euclidean distance from g to the abnormal set, with the minimizing plane.

    Multi-start: every pair of eigenvectors of S = x x^T - A^2 (which are
    stationary frames when x and A are aligned) plus random frames, up to
    `starts` in total.  The value is an upper bound on the infimum; it is
    exact on the oracle families exercised in the tests.  `converged` is
    False when the best start did not reach the gradient tolerance.
    """
    model = model or default_model(g)
    model.check(g)
    n = g.n
    if n < 3:
        raise DomainError("distance to the abnormal set is only defined here for rank >= 3")
    h = model.product.to_orthonormal(g)
    x = h.x
    A = bivector_to_matrix(h.Y, n)
    S = np.outer(x, x) - A @ A
    w, V = np.linalg.eigh(S)
    inits = [V[:, [i, j]] for i, j in combinations(range(n), 2)]
    nx = np.linalg.norm(x)
    if nx > 0:
        # planes through x: eigenvector pairs of -A^2 compressed to x-perp
        Pp = np.eye(n) - np.outer(x, x) / nx ** 2
        _, U = np.linalg.eigh(-Pp @ A @ A @ Pp + np.outer(x, x) / nx ** 2 * (w[-1] + 1))
        inits += [U[:, [i, j]] for i, j in combinations(range(n - 1), 2)]
    rng = np.random.default_rng(seed)
    while len(inits) < starts:
        inits.append(np.linalg.qr(rng.standard_normal((n, 2)))[0])
    Q = np.stack(inits, -1)
    lip = 2 * (max(w[-1], 0.0) + h.Y @ h.Y) + 1e-300
    Q, gn = _descend(x[:, None], A[..., None], S[..., None], Q, lip, iters,
                     gtol * max(1.0, lip))
    vals = _frame_distance2(x[:, None], A[..., None], Q)
    k = int(np.argmin(vals))
    conv = bool(gn[k] <= gtol * max(1.0, lip) * 10)
    if not conv:
        log.warning("abnormal distance search stopped with gradient %.2e", gn[k])
    return AbnormalDistance(float(np.sqrt(max(vals[k], 0.0))), GrassmannPlane(Q[:, :, k]), conv)


def abnormal_distance_batch(points, n: int, *, iters: int = 50, random_starts: int = 0,
                            seed: int = 0, chunk: int = 20000) -> np.ndarray:
    """Vectorized abnormal distance for rows (x, Y) in orthonormal coordinates.

    Uses only the eigenvector-pair starts plus optional random frames and a
    fixed iteration count; this is the Monte Carlo workhorse.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if n < 3:
        raise DomainError("distance to the abnormal set is only defined here for rank >= 3")
    rng = np.random.default_rng(seed)
    out = np.empty(pts.shape[0])
    for lo in range(0, pts.shape[0], chunk):
        P = pts[lo:lo + chunk]
        x = P[:, :n].T
        A = np.moveaxis(bivector_to_matrix(P[:, n:], n), 0, -1)
        S = x[:, None] * x[None, :] - np.einsum("ij...,jk...->ik...", A, A)
        w, V = np.linalg.eigh(np.moveaxis(S, -1, 0))
        inits = [np.moveaxis(V[:, :, [i, j]], 0, -1) for i, j in combinations(range(n), 2)]
        # planes through x, as in the single-point search
        xb = P[:, :n]
        nx2 = np.maximum((xb ** 2).sum(1), 1e-300)[:, None, None]
        Pp = np.eye(n) - xb[:, :, None] * xb[:, None, :] / nx2
        At = np.moveaxis(A, -1, 0)
        T = -Pp @ At @ At @ Pp + xb[:, :, None] * xb[:, None, :] / nx2 * (w[:, -1:, None] + 1)
        U = np.linalg.eigh(T)[1]
        inits += [np.moveaxis(U[:, :, [i, j]], 0, -1) for i, j in combinations(range(n - 1), 2)]
        for _ in range(random_starts):
            inits.append(_retract(rng.standard_normal((n, 2, P.shape[0]))))
        Q = np.stack(inits, -1)
        lip = (2 * (np.maximum(w[:, -1], 0) + np.sum(P[:, n:] ** 2, 1)) + 1e-300)[:, None]
        Q, _ = _descend(x[..., None], A[..., None], S[..., None], Q, lip, iters)
        vals = _frame_distance2(x[..., None], A[..., None], Q)
        out[lo:lo + chunk] = np.sqrt(np.maximum(vals.min(-1), 0.0))
    return out


def abnormal_distance_rank3(g: GroupElement, model: GroupModel | None = None) -> float:
    """Closed form for n = 3: P is a line, the best line passes through x, leaving |Y|."""
    model = model or default_model(g)
    if g.n != 3:
        raise ModelMismatchError("closed form holds for rank 3 only")
    h = model.product.to_orthonormal(g)
    return float(np.linalg.norm(h.Y))


def in_tube(p: GroupElement, delta: float, model: GroupModel | None = None, **kw) -> bool:
    """Membership of a unit-sphere point in the delta-tube around the abnormal set."""
    model = model or default_model(p)
    if not delta > 0:
        raise DomainError("tube radius must be positive")
    if abs(model.norm(p) - 1.0) > 1e-9:
        raise DomainError("point is not on the Euclidean unit sphere")
    return abnormal_distance(p, model, **kw).distance <= delta
