"""Piecewise-constant controls and the horizontal curves they generate.

A control is a list of (duration, value) segments on [0, 1].  Over a
segment the curve moves by the left translate of (duration * value, 0), so
the endpoint is an exact finite product; no quadrature is involved.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ModelMismatchError
from .group import GroupElement, bivector_dim, pair_indices

DURATION_TOL = 1e-12


def chain_endpoint(D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint of consecutive displacements D (K, n): x = sum D, Y = 1/2 sum_{i<j} D_i ^ D_j."""
    D = np.asarray(D, dtype=float)
    n = D.shape[-1]
    if D.shape[0] == 0:
        return np.zeros(n), np.zeros(bivector_dim(n))
    I, J = pair_indices(n)
    X = np.cumsum(D, axis=0)
    B = X - D
    Y = 0.5 * np.sum(B[:, I] * D[:, J] - B[:, J] * D[:, I], axis=0)
    return X[-1], Y


def chain_jacobian(D: np.ndarray) -> np.ndarray:
    """Jacobian of (x, Y) with respect to the flattened displacements.

    dY/dD_k . e = C_k ^ e with C_k = (prefix_k - suffix_k) / 2.
    """
    D = np.asarray(D, dtype=float)
    K, n = D.shape
    I, J = pair_indices(n)
    nD = I.size
    total = D.sum(axis=0)
    prefix = np.cumsum(D, axis=0) - D
    suffix = total - prefix - D
    C = 0.5 * (prefix - suffix)
    JY = np.zeros((nD, K, n))
    r = np.arange(nD)[:, None]
    k = np.arange(K)[None, :]
    JY[r, k, J[:, None]] += C[:, I].T
    JY[r, k, I[:, None]] -= C[:, J].T
    Jx = np.tile(np.eye(n), (1, K))
    return np.vstack([Jx, JY.reshape(nD, K * n)])


@dataclass(frozen=True, eq=False)
class Control:
    """Piecewise-constant control u: [0, 1] -> R^n."""

    durations: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        d = np.array(self.durations, dtype=float).reshape(-1)
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != d.size:
            raise ModelMismatchError("values must have shape (segments, n)")
        if d.size and np.any(d <= 0):
            raise DomainError("durations must be positive")
        if d.size and abs(d.sum() - 1.0) > DURATION_TOL:
            raise DomainError(f"durations sum to {d.sum():.17g}, expected 1")
        d.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "durations", d)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.durations.size

    @classmethod
    def empty(cls, n: int) -> "Control":
        return cls(np.zeros(0), np.zeros((0, n)))

    @classmethod
    def from_segments(cls, segments, n: int | None = None) -> "Control":
        """Build from (duration, value) pairs; total time is rescaled to 1.

        Rescaling multiplies the values by the old total time, so the
        displacements and therefore the curve are unchanged.
        """
        segments = list(segments)
        if not segments:
            if n is None:
                raise DomainError("rank of an empty control is unknown")
            return cls.empty(n)
        d = np.array([s[0] for s in segments], dtype=float)
        v = np.array([np.asarray(s[1], dtype=float) for s in segments])
        if np.any(d <= 0):
            raise DomainError("durations must be positive")
        T = d.sum()
        return cls(d / T, v * T)

    @classmethod
    def from_displacements(cls, D, durations=None) -> "Control":
        D = np.atleast_2d(np.asarray(D, dtype=float))
        if D.shape[0] == 0:
            return cls.empty(D.shape[1])
        d = np.full(D.shape[0], 1.0 / D.shape[0]) if durations is None else np.asarray(durations, float)
        d = d / d.sum()
        return cls(d, D / d[:, None])

    @classmethod
    def constant(cls, v) -> "Control":
        v = np.asarray(v, dtype=float)
        return cls(np.ones(1), v[None, :])

    @property
    def displacements(self) -> np.ndarray:
        return self.durations[:, None] * self.values

    @property
    def breakpoints(self) -> np.ndarray:
        t = np.concatenate([[0.0], np.cumsum(self.durations)])
        t[-1] = 1.0
        return t

    def scaled(self, t: float) -> "Control":
        """Values times t; the endpoint g becomes delta_t(g)."""
        return Control(self.durations, t * self.values)

    def refined(self, k: int) -> "Control":
        """Each segment split into k equal pieces (same curve)."""
        if k < 1:
            raise DomainError("refinement factor must be positive")
        return Control(np.repeat(self.durations / k, k), np.repeat(self.values, k, axis=0))

    def restrict(self, t0: float, t1: float) -> "Control":
        """The part of u on [t0, t1], reparametrized to [0, 1]."""
        if not 0.0 <= t0 < t1 <= 1.0:
            raise DomainError(f"bad interval [{t0}, {t1}]")
        b = self.breakpoints
        lo = np.clip(b[:-1], t0, t1)
        hi = np.clip(b[1:], t0, t1)
        keep = hi - lo > 0
        return Control.from_segments(zip(hi[keep] - lo[keep], self.values[keep]), n=self.n)

    def to_json_obj(self) -> list:
        return [{"duration": float(d), "value": v.tolist()}
                for d, v in zip(self.durations, self.values)]

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj, n: int | None = None) -> "Control":
        try:
            segs = [(float(s["duration"]), s["value"]) for s in obj]
        except (TypeError, KeyError) as exc:
            raise DomainError("control JSON must be a list of {duration, value}") from exc
        return cls.from_segments(segs, n=n)

    @classmethod
    def from_json(cls, text: str, n: int | None = None) -> "Control":
        return cls.from_json_obj(json.loads(text), n=n)


def endpoint(u: Control) -> GroupElement:
    """gamma_u(1): left-to-right product of the segment increments."""
    x, Y = chain_endpoint(u.displacements)
    return GroupElement(x, Y)


def evaluate(u: Control, t: float) -> GroupElement:
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"time {t} outside [0, 1]")
    if t == 0.0 or len(u) == 0:
        return GroupElement.identity(u.n)
    if t == 1.0:
        return endpoint(u)
    b = u.breakpoints
    lo = np.minimum(b[:-1], t)
    hi = np.minimum(b[1:], t)
    x, Y = chain_endpoint((hi - lo)[:, None] * u.values)
    return GroupElement(x, Y)


def boundary_points(u: Control) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Times, x and Y of the curve at every segment boundary (including 0 and 1)."""
    D = u.displacements
    n = u.n
    I, J = pair_indices(n)
    X = np.vstack([np.zeros(n), np.cumsum(D, axis=0)])
    inc = 0.5 * (X[:-1, I] * D[:, J] - X[:-1, J] * D[:, I])
    Y = np.vstack([np.zeros(I.size), np.cumsum(inc, axis=0)])
    return u.breakpoints, X, Y


def length(u: Control, N) -> float:
    """Sub-Finsler length: sum of duration times N(value)."""
    if len(u) == 0:
        return 0.0
    return float(np.sum(u.durations * N(u.values)))


def concat(u1: Control, u2: Control) -> Control:
    """u1 followed by u2, each run at double speed on half of [0, 1]."""
    return concat_many([u1, u2])


def concat_many(controls) -> Control:
    """Concatenation with equal time shares; displacements are preserved."""
    controls = list(controls)
    if not controls:
        raise DomainError("nothing to concatenate")
    n = controls[0].n
    if any(c.n != n for c in controls):
        raise ModelMismatchError("controls of different rank")
    live = [c for c in controls if len(c)]
    if not live:
        return Control.empty(n)
    if len(live) == 1:
        return live[0]
    share = 1.0 / len(live)
    return Control.from_segments(
        [(share * d, v / share) for c in live for d, v in zip(c.durations, c.values)], n=n)


@dataclass(frozen=True, eq=False)
class HorizontalPath:
    """A control together with its curve sampled at the segment boundaries."""

    control: Control
    times: np.ndarray
    points: tuple

    @classmethod
    def from_control(cls, u: Control) -> "HorizontalPath":
        t, X, Y = boundary_points(u)
        return cls(u, t, tuple(GroupElement(x, y) for x, y in zip(X, Y)))

    def __call__(self, t: float) -> GroupElement:
        return evaluate(self.control, t)

    @property
    def end(self) -> GroupElement:
        return self.points[-1]
