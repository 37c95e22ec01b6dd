"""Norms on the first stratum and the equivalence constant C1."""
from __future__ import annotations

from itertools import product

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateNormError
from .group import AdequateProduct

KINDS = ("l1", "l2", "linf", "polyhedral")


class SubFinslerNorm:
    """Norm on R^n, in base-frame coordinates.

    Polyhedral norms are given by the vertices of their unit ball; the ball
    is symmetrized (v and -v both kept).  l1 and linf are polyhedral too and
    expose `vertices` / `facets`, which the distance optimizer uses for its
    exact linear lifts.  `facets` rows a satisfy N(v) = max_a a.v.
    """

    def __init__(self, kind: str, n: int | None = None, vertices=None):
        kind = {"l-inf": "linf", "inf": "linf", "max": "linf", "1": "l1", "2": "l2"}.get(kind, kind)
        if kind not in KINDS:
            raise DegenerateNormError(f"unknown norm kind {kind!r}")
        if kind == "polyhedral":
            if vertices is None:
                raise DegenerateNormError("polyhedral norm needs vertices")
            V = np.atleast_2d(np.asarray(vertices, dtype=float))
            if n is not None and V.shape[1] != n:
                raise DegenerateNormError("vertex dimension differs from n")
            n = V.shape[1]
        if n is None or n < 1:
            raise DegenerateNormError("norm needs a dimension")
        self.kind = kind
        self.n = int(n)
        self._vertices = None
        self._facets = None
        if kind == "polyhedral":
            self._build_polyhedral(V)

    @classmethod
    def l1(cls, n):
        return cls("l1", n)

    @classmethod
    def l2(cls, n):
        return cls("l2", n)

    @classmethod
    def linf(cls, n):
        return cls("linf", n)

    @classmethod
    def polyhedral(cls, vertices):
        return cls("polyhedral", vertices=vertices)

    def _build_polyhedral(self, V):
        V = np.vstack([V, -V])
        if np.linalg.matrix_rank(V) < self.n:
            raise DegenerateNormError("unit ball has empty interior")
        if self.n == 1:
            r = np.max(np.abs(V))
            self._vertices = np.array([[r], [-r]])
            self._facets = np.array([[1 / r], [-1 / r]])
            return
        try:
            hull = ConvexHull(V)
        except QhullError as exc:
            raise DegenerateNormError(f"cannot build unit ball: {exc}") from exc
        eq = hull.equations
        offs = -eq[:, -1]
        if np.any(offs <= 1e-12):
            raise DegenerateNormError("origin is not interior to the unit ball")
        A = eq[:, :-1] / offs[:, None]
        self._facets = np.unique(np.round(A, 12), axis=0)
        self._vertices = V[np.unique(hull.vertices)]

    @property
    def is_polyhedral(self) -> bool:
        return self.kind != "l2"

    @property
    def vertices(self) -> np.ndarray:
        if self.kind == "l1":
            return np.vstack([np.eye(self.n), -np.eye(self.n)])
        if self.kind == "linf":
            return np.array(list(product((1.0, -1.0), repeat=self.n)))
        if self.kind == "polyhedral":
            return self._vertices
        raise AttributeError("l2 ball has no vertices")

    @property
    def facets(self) -> np.ndarray:
        if self.kind == "l1":
            return np.array(list(product((1.0, -1.0), repeat=self.n)))
        if self.kind == "linf":
            return np.vstack([np.eye(self.n), -np.eye(self.n)])
        if self.kind == "polyhedral":
            return self._facets
        raise AttributeError("l2 ball has no facets")

    def __call__(self, v) -> np.ndarray | float:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.n:
            raise DegenerateNormError(f"vector of length {v.shape[-1]} for a norm on R^{self.n}")
        if self.kind == "l1":
            out = np.abs(v).sum(-1)
        elif self.kind == "l2":
            out = np.sqrt((v * v).sum(-1))
        elif self.kind == "linf":
            out = np.abs(v).max(-1)
        else:
            out = np.max(v @ self._facets.T, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def to_json_obj(self) -> dict:
        obj = {"kind": self.kind, "n": self.n}
        if self.kind == "polyhedral":
            obj["vertices"] = self._vertices.tolist()
        return obj

    @classmethod
    def from_json_obj(cls, obj) -> "SubFinslerNorm":
        return cls(obj["kind"], obj.get("n"), obj.get("vertices"))

    def __repr__(self):
        return f"SubFinslerNorm({self.kind!r}, n={self.n})"


def norm_equivalence_constant(N: SubFinslerNorm, product: AdequateProduct | None = None) -> float:
    """Smallest C1 with ||v||/C1 <= N(v) <= C1 ||v|| (Euclidean norm of `product`).

    Exact: for a polyhedral ball the extremes of N(v)/||v|| sit at facet
    normals (dual norm of the facet functionals) and at vertices; for l2 they
    are square roots of the extreme eigenvalues of the Gram matrix.
    """
    G = np.eye(N.n) if product is None else product.gram
    if G.shape[0] != N.n:
        raise DegenerateNormError("norm and product have different dimension")
    if N.kind == "l2":
        w = np.linalg.eigvalsh(G)
        if w[0] <= 0:
            raise DegenerateNormError("gram is not positive definite")
        return float(max(np.sqrt(w[-1]), 1 / np.sqrt(w[0]), 1.0))
    V = N.vertices
    A = N.facets
    Ginv = np.linalg.inv(G)
    up = np.sqrt(np.max(np.einsum("ki,ij,kj->k", A, Ginv, A)))     # max N(v)/|v|
    down = np.sqrt(np.max(np.einsum("ki,ij,kj->k", V, G, V)))      # max |v|/N(v)
    return float(max(up, down))
