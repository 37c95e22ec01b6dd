import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carnot_lab.errors import DegenerateTupleError, NotInSpanError
from carnot_lab.heights import (max_volume_certificate, max_volume_tuple, min_height,
                                span_coefficients, volume_m)


def heights_by_definition(P):
    out = []
    for j in range(len(P)):
        rest = np.delete(P, j, axis=0)
        if rest.size == 0:
            out.append(np.linalg.norm(P[j]))
            continue
        c = np.linalg.lstsq(rest.T, P[j], rcond=None)[0]
        out.append(np.linalg.norm(P[j] - rest.T @ c))
    return min(out)


@st.composite
def tuples(draw):
    n = draw(st.integers(2, 6))
    m = draw(st.integers(1, n))
    r = np.random.default_rng(draw(st.integers(0, 2**31)))
    return r.standard_normal((m, n)) * r.uniform(0.1, 3, (m, 1))


def test_volume_examples():
    assert volume_m(np.eye(3)[:2]) == pytest.approx(1.0)
    assert volume_m([[1, 0], [1, 1]]) == pytest.approx(1.0)
    assert volume_m([[1, 2, 3], [0, 0, 0]]) == 0.0
    assert volume_m(np.zeros((0, 3))) == 1.0


def test_min_height_examples():
    assert min_height(np.eye(2)) == pytest.approx(1.0)
    assert min_height([[1, 0], [1, 1]]) == pytest.approx(1 / np.sqrt(2))
    assert min_height([[1, 0, 0], [2, 0, 0]]) == 0.0


@given(tuples(), st.floats(0.1, 5))
def test_min_height_matches_definition_and_scales(P, t):
    assert min_height(P) == pytest.approx(heights_by_definition(P), rel=1e-8, abs=1e-10)
    assert min_height(t * P) == pytest.approx(t * min_height(P), rel=1e-9)
    perm = np.random.default_rng(0).permutation(len(P))
    assert min_height(P[perm]) == pytest.approx(min_height(P), rel=1e-9)


@given(tuples())
def test_volume_is_sqrt_gram_determinant(P):
    assert volume_m(P) == pytest.approx(np.sqrt(max(np.linalg.det(P @ P.T), 0)), rel=1e-8, abs=1e-10)


def test_certificate_examples():
    c = max_volume_certificate(np.eye(3), 2, 1.0)
    assert sorted(c.indices) == [0, 1, 2]
    assert c.min_height == pytest.approx(1.0)
    rng = np.random.default_rng(1)
    flat = np.c_[rng.standard_normal((30, 2)), np.zeros(30)]
    assert max_volume_certificate(flat, 2, 1e-6) is None


def test_greedy_never_beats_exhaustive(rng):
    for _ in range(30):
        G = rng.standard_normal((20, 4))
        ex = max_volume_certificate(G, 2, 0.0)
        gr = max_volume_certificate(G, 2, 0.0, budget=0)
        assert ex.exhaustive and not gr.exhaustive
        assert gr.min_height <= ex.min_height + 1e-12
        idx, _ = max_volume_tuple(G, 2, budget=0)
        idx_ex, _ = max_volume_tuple(G, 2)
        assert volume_m(G[list(idx)]) <= volume_m(G[list(idx_ex)]) + 1e-12


def test_certificate_meets_known_escape_margin(rng):
    # the axis points a e1, b e2, c e3 keep every plane at distance >= 1/sqrt(sum a_i^-2)
    for _ in range(50):
        a = np.sort(rng.uniform(0.2, 2, 3))[::-1]
        inside = np.c_[rng.uniform(-1, 1, (25, 2)) * a[:2], np.zeros(25)] * 0.9
        G = np.vstack([np.diag(a), inside])
        G = G[rng.permutation(len(G))]
        margin = 1 / np.sqrt(np.sum(a ** -2.0))
        c = max_volume_certificate(G, 2, margin)
        assert c is not None and c.min_height >= margin
        # with an exhaustive max-volume base the height is the farthest escape from its span
        B = np.linalg.qr(c.points[:2].T)[0]
        far = np.max(np.linalg.norm(G - (G @ B) @ B.T, axis=1))
        assert c.exhaustive and c.min_height == pytest.approx(far, rel=1e-10)


def test_span_coefficient_examples():
    np.testing.assert_allclose(span_coefficients([1, 2, 0], [[1, 2, 0], [0, 1, 1]]), [1, 0], atol=1e-14)
    lam = span_coefficients([0, 1], [[1, 0], [1, 1]])
    np.testing.assert_allclose(lam, [-1, 1], atol=1e-14)
    assert np.max(np.abs(lam)) <= 1 / min_height([[1, 0], [1, 1]])
    with pytest.raises(NotInSpanError):
        span_coefficients([0, 0, 1], [[1, 0, 0], [0, 1, 0]])
    with pytest.raises(DegenerateTupleError):
        span_coefficients([1, 0], [[1, 0], [2, 0]])


@given(tuples())
def test_span_coefficient_bound(P):
    if min_height(P) < 1e-6:
        return
    r = np.random.default_rng(3)
    lam_true = r.standard_normal(len(P))
    w = P.T @ lam_true
    lam = span_coefficients(w, P)
    np.testing.assert_allclose(lam, lam_true, atol=1e-8 * (1 + np.abs(lam_true).max()) / min(1, min_height(P)))
    assert np.max(np.abs(lam)) <= np.linalg.norm(w) / min_height(P) * (1 + 1e-9) + 1e-12
