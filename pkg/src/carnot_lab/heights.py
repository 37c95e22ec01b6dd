"""Parallelotope volumes, minimal heights and max-volume certificates."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import DegenerateTupleError, NotInSpanError

DEGENERATE = 1e-13


def volume_m(points) -> float:
    """m-volume of the parallelotope spanned by the rows; 1 for the empty tuple."""
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return 1.0
    P = np.atleast_2d(P)
    m, n = P.shape
    if m > n:
        return 0.0
    R = np.linalg.qr(P.T, mode="r")
    return float(abs(np.prod(np.diag(R))))


def min_height(points) -> float:
    """min_j distance of a_j to the span of the others, as vol_m / max_j vol_{m-1}."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    m = P.shape[0]
    if m == 1:
        return float(np.linalg.norm(P[0]))
    den = max(volume_m(np.delete(P, j, axis=0)) for j in range(m))
    if den < DEGENERATE:
        return 0.0
    return volume_m(P) / den


def _batch_volumes(P, idx):
    """sqrt det Gram for index tuples idx (T, m)."""
    T = P[idx]                                   # (T, m, n)
    G = np.einsum("tin,tjn->tij", T, T)
    return np.sqrt(np.maximum(np.linalg.det(G), 0.0))


def _residual_norms(P, basis_rows):
    if basis_rows.shape[0] == 0:
        return np.linalg.norm(P, axis=1)
    Q = np.linalg.qr(basis_rows.T)[0]
    R = P - (P @ Q) @ Q.T
    return np.linalg.norm(R, axis=1)


@dataclass(frozen=True, eq=False)
class Certificate:
    indices: tuple
    points: np.ndarray
    min_height: float
    exhaustive: bool


def max_volume_tuple(P, m: int, budget: int = 200_000) -> tuple[tuple, bool]:
    """Indices of an m-tuple of rows of P with (near) maximal m-volume.

    Exhaustive when the number of tuples is within `budget`; otherwise
    greedy farthest-point selection refined by single swaps.
    """
    k = P.shape[0]
    if m == 0:
        return (), True
    if m > k:
        return tuple(range(k)), True
    if comb(k, m) <= budget:
        best, bv = None, -1.0
        it = combinations(range(k), m)
        while True:
            block = np.array([c for _, c in zip(range(20000), it)], dtype=int)
            if block.size == 0:
                break
            v = _batch_volumes(P, block)
            j = int(np.argmax(v))
            if v[j] > bv:
                bv, best = v[j], tuple(int(i) for i in block[j])
        return best, True
    chosen = []
    for _ in range(m):
        r = _residual_norms(P, P[chosen])
        r[chosen] = -1
        chosen.append(int(np.argmax(r)))
    vol = volume_m(P[chosen])
    improved = True
    rounds = 0
    while improved and rounds < 50:
        improved = False
        rounds += 1
        for pos in range(m):
            rest = chosen[:pos] + chosen[pos + 1:]
            r = _residual_norms(P, P[rest])
            cand = int(np.argmax(r))
            new = volume_m(P[rest]) * r[cand]
            if cand not in chosen and new > vol * (1 + 1e-12):
                chosen[pos] = cand
                vol = new
                improved = True
    return tuple(sorted(chosen)), False


def max_volume_certificate(points, m: int, delta: float, budget: int = 200_000) -> Certificate | None:
    """(m+1)-tuple with MinHeight >= delta built from a max-volume m-tuple, or None.

    The extra point is the one farthest from the span of the m-tuple.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] < m + 1:
        return None
    idx, exhaustive = max_volume_tuple(P, m, budget)
    r = _residual_norms(P, P[list(idx)])
    r[list(idx)] = -1
    far = int(np.argmax(r))
    full = tuple(idx) + (far,)
    mh = min_height(P[list(full)])
    if mh < delta or mh <= 0:
        return None
    return Certificate(full, P[list(full)].copy(), mh, exhaustive)


def span_coefficients(w, tuple_points, tol: float = 1e-9) -> np.ndarray:
    """Coefficients lam with w = sum lam_j a_j; |lam_j| <= |w| / MinHeight."""
    P = np.atleast_2d(np.asarray(tuple_points, dtype=float))
    w = np.asarray(w, dtype=float)
    if min_height(P) <= DEGENERATE:
        raise DegenerateTupleError("tuple is linearly dependent")
    lam, *_ = np.linalg.lstsq(P.T, w, rcond=None)
    res = float(np.linalg.norm(P.T @ lam - w))
    if res > tol * max(1.0, float(np.linalg.norm(w))):
        raise NotInSpanError(f"vector lies {res:.3e} away from the span", res)
    return lam
