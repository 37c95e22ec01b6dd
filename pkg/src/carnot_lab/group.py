"""Free step-two Carnot group of rank n in exponential coordinates.

A point is a pair (x, Y) with x in R^n and Y a bivector, stored as its
coefficients on e_i ^ e_j (i < j, lexicographic).  The product is

    (x1, Y1) * (x2, Y2) = (x1 + x2, Y1 + Y2 + 1/2 x1 ^ x2).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from .errors import DomainError, ModelMismatchError


@lru_cache(maxsize=None)
def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices (i, j), i < j, in the storage order of bivectors."""
    pairs = list(combinations(range(n), 2))
    if not pairs:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    I, J = np.array(pairs).T
    I.setflags(write=False)
    J.setflags(write=False)
    return I, J


def bivector_dim(n: int) -> int:
    return n * (n - 1) // 2


def rank_from_dim(d: int) -> int:
    """Rank n such that n + n(n-1)/2 = d."""
    n = int(round((np.sqrt(8 * d + 1) - 1) / 2))
    if n < 1 or n + bivector_dim(n) != d:
        raise ModelMismatchError(f"{d} is not the dimension of a free step-two group")
    return n


def rank_from_bivector_dim(D: int) -> int:
    n = int(round((1 + np.sqrt(1 + 8 * D)) / 2))
    if bivector_dim(n) != D:
        raise ModelMismatchError(f"{D} is not a bivector dimension")
    return n


def wedge(v, w) -> np.ndarray:
    """Coefficients of v ^ w = v (x) w - w (x) v; broadcasts over leading axes."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape[-1] != w.shape[-1]:
        raise ModelMismatchError("wedge of vectors of different length")
    I, J = pair_indices(v.shape[-1])
    return v[..., I] * w[..., J] - v[..., J] * w[..., I]


def bivector_to_matrix(Y, n: int | None = None) -> np.ndarray:
    """Skew matrix A with A[i, j] = Y_ij for i < j."""
    Y = np.asarray(Y, dtype=float)
    if n is None:
        n = rank_from_bivector_dim(Y.shape[-1])
    I, J = pair_indices(n)
    A = np.zeros(Y.shape[:-1] + (n, n))
    A[..., I, J] = Y
    A[..., J, I] = -Y
    return A


def matrix_to_bivector(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    I, J = pair_indices(A.shape[-1])
    return 0.5 * (A[..., I, J] - A[..., J, I])


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GroupElement:
    """Point (x, Y); immutable."""

    x: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        x = _frozen(np.atleast_1d(self.x))
        Y = _frozen(np.atleast_1d(self.Y)) if np.size(self.Y) else _frozen(np.zeros(0))
        if x.ndim != 1 or Y.ndim != 1:
            raise ModelMismatchError("x and Y must be flat vectors")
        if Y.size != bivector_dim(x.size):
            raise ModelMismatchError(
                f"rank {x.size} needs {bivector_dim(x.size)} bivector coefficients, got {Y.size}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def d(self) -> int:
        return self.x.size + self.Y.size

    @classmethod
    def identity(cls, n: int) -> "GroupElement":
        return cls(np.zeros(n), np.zeros(bivector_dim(n)))

    @classmethod
    def from_vector(cls, v) -> "GroupElement":
        v = np.asarray(v, dtype=float).ravel()
        n = rank_from_dim(v.size)
        return cls(v[:n], v[n:])

    @classmethod
    def horizontal(cls, v) -> "GroupElement":
        v = np.asarray(v, dtype=float)
        return cls(v, np.zeros(bivector_dim(v.size)))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.Y])

    def is_identity(self) -> bool:
        return not (np.any(self.x) or np.any(self.Y))

    def allclose(self, other: "GroupElement", atol=1e-12, rtol=0.0) -> bool:
        _check_same(self, other)
        return bool(np.allclose(self.x, other.x, atol=atol, rtol=rtol)
                    and np.allclose(self.Y, other.Y, atol=atol, rtol=rtol))

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return multiply(self, other)

    def __repr__(self):
        return f"GroupElement(x={self.x.tolist()}, Y={self.Y.tolist()})"


def _check_same(a: GroupElement, b: GroupElement):
    if a.n != b.n:
        raise ModelMismatchError(f"rank {a.n} vs rank {b.n}")


def multiply(a: GroupElement, b: GroupElement) -> GroupElement:
    _check_same(a, b)
    return GroupElement(a.x + b.x, a.Y + b.Y + 0.5 * wedge(a.x, b.x))


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(-g.x, -g.Y)


def dilate(t: float, g: GroupElement) -> GroupElement:
    return GroupElement(t * g.x, t * (t * g.Y))


def project_horizontal(g: GroupElement) -> np.ndarray:
    return g.x.copy()


class AdequateProduct:
    """Inner product on R^n x Lambda^2 R^n determined by its first-stratum Gram.

    Strata are orthogonal and <v1^w1, v2^w2> = <v1,v2><w1,w2> - <v1,w2><w1,v2>.
    Internally G = L L^T; the map x -> L^T x takes the product to the dot
    product, and Lambda^2(L^T) does the same on bivectors.
    """

    def __init__(self, gram):
        G = np.array(gram, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ModelMismatchError("gram must be square")
        if not np.allclose(G, G.T, atol=1e-12):
            raise DomainError("gram must be symmetric")
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise DomainError("gram must be positive definite") from exc
        self.gram = _frozen(G)
        self._L = L
        self.standard = bool(np.array_equal(G, np.eye(G.shape[0])))

    @classmethod
    def euclidean(cls, n: int) -> "AdequateProduct":
        return cls(np.eye(n))

    @classmethod
    def from_frame(cls, frame) -> "AdequateProduct":
        """Product for which the columns of `frame` are orthonormal."""
        B = np.asarray(frame, dtype=float)
        Binv = np.linalg.inv(B)
        return cls(Binv.T @ Binv)

    @property
    def n(self) -> int:
        return self.gram.shape[0]

    @property
    def base_frame(self) -> np.ndarray:
        """Columns form an orthonormal basis of R^n for this product."""
        return np.linalg.inv(self._L).T

    def inner_vec(self, v, w):
        return np.einsum("...i,ij,...j->...", np.asarray(v, float), self.gram, np.asarray(w, float))

    def bivector_gram(self) -> np.ndarray:
        """Gram matrix of the basis e_i ^ e_j induced by the adequate identity."""
        G = self.gram
        I, J = pair_indices(self.n)
        return G[I][:, I] * G[J][:, J] - G[I][:, J] * G[J][:, I]

    def vec_to_orthonormal(self, v):
        return np.asarray(v, float) @ self._L

    def vec_from_orthonormal(self, v):
        return np.linalg.solve(self._L.T, np.asarray(v, float).T).T

    def biv_to_orthonormal(self, Y):
        if self.standard:
            return np.asarray(Y, float)
        A = bivector_to_matrix(Y, self.n)
        return matrix_to_bivector(self._L.T @ A @ self._L)

    def biv_from_orthonormal(self, Y):
        if self.standard:
            return np.asarray(Y, float)
        Li = np.linalg.inv(self._L)
        A = bivector_to_matrix(Y, self.n)
        return matrix_to_bivector(Li.T @ A @ Li)

    def to_orthonormal(self, g: GroupElement) -> GroupElement:
        if self.standard:
            return g
        return GroupElement(self.vec_to_orthonormal(g.x), self.biv_to_orthonormal(g.Y))

    def from_orthonormal(self, g: GroupElement) -> GroupElement:
        if self.standard:
            return g
        return GroupElement(self.vec_from_orthonormal(g.x), self.biv_from_orthonormal(g.Y))

    def inner(self, g: GroupElement, h: GroupElement) -> float:
        _check_same(g, h)
        if self.standard:
            return float(g.x @ h.x + g.Y @ h.Y)
        return float(self.inner_vec(g.x, h.x) + g.Y @ self.bivector_gram() @ h.Y)

    def norm(self, g: GroupElement) -> float:
        return float(np.sqrt(max(self.inner(g, g), 0.0)))


@dataclass(frozen=True, eq=False)
class GroupModel:
    """Rank-n group together with its adequate product."""

    n: int
    product: AdequateProduct = field(default=None)

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("rank must be at least 2")
        if self.product is None:
            object.__setattr__(self, "product", AdequateProduct.euclidean(self.n))
        elif self.product.n != self.n:
            raise ModelMismatchError("product rank differs from model rank")

    @property
    def D(self) -> int:
        return bivector_dim(self.n)

    @property
    def d(self) -> int:
        return self.n + self.D

    @property
    def base_frame(self) -> np.ndarray:
        return self.product.base_frame

    def check(self, g: GroupElement) -> GroupElement:
        if g.n != self.n:
            raise ModelMismatchError(f"element of rank {g.n} used with rank {self.n} model")
        return g

    def identity(self) -> GroupElement:
        return GroupElement.identity(self.n)

    def norm(self, g: GroupElement) -> float:
        return self.product.norm(self.check(g))

    def dist(self, g: GroupElement, h: GroupElement) -> float:
        return self.norm(GroupElement(h.x - g.x, h.Y - g.Y))


def default_model(g_or_n) -> GroupModel:
    n = g_or_n if isinstance(g_or_n, int) else g_or_n.n
    return GroupModel(n)


def euclidean_norm(g: GroupElement, model: GroupModel | None = None) -> float:
    model = model or default_model(g)
    return model.norm(g)


def sample_sphere(model: GroupModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points of the Euclidean unit sphere, rows are (x, Y) vectors.

    Normalized Gaussians in orthonormal coordinates, mapped back to the base
    frame.
    """
    z = rng.standard_normal((count, model.d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    if model.product.standard:
        return z
    p = model.product
    x = p.vec_from_orthonormal(z[:, :model.n])
    Y = np.array([p.biv_from_orthonormal(y) for y in z[:, model.n:]])
    return np.hstack([x, Y])


def _scaled_norm(v) -> float:
    m = float(np.max(np.abs(v), initial=0.0))
    return m * float(np.linalg.norm(v / m)) if m > 0 else 0.0


def radial_project(g: GroupElement, model: GroupModel | None = None, tol: float = 1e-12,
                   max_iter: int = 200) -> tuple[GroupElement, float]:
    """Unique t > 0 with ||delta_t g|| = 1, and delta_t g.

    ||delta_t g||^2 = a t^2 + b t^4 is strictly increasing on t > 0, so the
    quadratic in s = t^2 has one positive root.  The root is taken from the
    cancellation-free formula and polished by Newton steps on the norm.
    """
    model = model or default_model(g)
    model.check(g)
    h = model.product.to_orthonormal(g)
    alpha = _scaled_norm(h.x)
    beta = _scaled_norm(h.Y)
    if alpha == 0.0 and beta == 0.0:
        raise DomainError("the identity has no radial projection")
    # prescale by a dilation so squares neither underflow nor overflow
    lam = 1.0 / max(alpha, np.sqrt(beta))
    a = (lam * alpha) ** 2
    b = (lam * (lam * beta)) ** 2
    s = 2.0 / (a + np.sqrt(a * a + 4.0 * b))
    t = np.sqrt(s)
    for _ in range(max_iter):
        f = a * t * t + b * t ** 4 - 1.0
        if abs(f) <= tol:
            break
        t -= f / (2 * a * t + 4 * b * t ** 3)
    t *= lam
    return dilate(t, g), float(t)
