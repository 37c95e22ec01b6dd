import numpy as np
import pytest

from carnot_lab.abnormal import GrassmannPlane
from carnot_lab.controls import Control, concat_many, endpoint, length
from carnot_lab.errors import CertificateError, PreconditionError
from carnot_lab.group import GroupElement, GroupModel, radial_project, wedge
from carnot_lab.heights import min_height
from carnot_lab.norms import SubFinslerNorm, norm_equivalence_constant
from carnot_lab.surgery import (DerivedConstants, SurgeryPlan, central_correction_path,
                                lipschitz_competitor, plan_central_correction, tube_endpoint_check,
                                wedge_decompose)


def random_legs(n, r, segs=3):
    return [Control.from_segments(zip(r.uniform(0.2, 1, segs), r.standard_normal((segs, n))))
            for _ in range(n - 1)]


def test_derived_constants_example():
    c = DerivedConstants.from_metric(2, 1.0, 1.0)
    assert (c.K1, c.K, c.C4, c.K2, c.delta0, c.C5) == pytest.approx((1, 3, 1 / 3, 2, 12, 24), rel=1e-15)
    with pytest.raises(PreconditionError):
        DerivedConstants.from_metric(3, 0.0, 1.0)


def test_wedge_decompose_examples():
    v = wedge_decompose([0.7], [[1.0, 0.0]], 1.0)
    np.testing.assert_allclose(v, [[0.0, 0.7]], atol=1e-15)
    np.testing.assert_array_equal(wedge_decompose(np.zeros(3), np.eye(3)[:2], 0.5), np.zeros((2, 3)))
    with pytest.raises(PreconditionError):
        wedge_decompose(np.ones(3), [[1, 0, 0], [1, 1e-3, 0]], 0.1)
    with pytest.raises(PreconditionError):
        wedge_decompose(np.ones(3), np.eye(3), 0.1)


def test_wedge_decompose_reconstructs_with_bound(rng):
    for _ in range(1000):
        n = int(rng.integers(3, 6))
        X = rng.standard_normal((n - 1, n))
        eps = min_height(X)
        Y = rng.standard_normal(n * (n - 1) // 2) * rng.uniform(0.01, 10)
        V = wedge_decompose(Y, X, eps)
        np.testing.assert_allclose(wedge(X, V).sum(0), Y, atol=1e-9 * (1 + np.abs(Y).max()) / eps)
        K1 = np.sqrt(n * (n - 1) / 2)
        assert np.linalg.norm(V, axis=1).max() <= K1 * np.linalg.norm(Y) / eps * (1 + 1e-9)


def test_central_correction_example():
    N = SubFinslerNorm.l1(2)
    u, bound = central_correction_path([Control.constant([1.0, 0.0])], np.array([1.0]), 1.0, N)
    e = endpoint(u)
    np.testing.assert_allclose(e.x, [1, 0], atol=1e-15)
    np.testing.assert_allclose(e.Y, [1.0], atol=1e-15)
    assert length(u, N) == pytest.approx(3.0)
    assert length(u, N) <= bound
    plan = plan_central_correction([Control.constant([1.0, 0.0])], np.array([1.0]), 1.0, N)
    np.testing.assert_allclose(plan.correction_vectors, [[0.0, -1.0]], atol=1e-15)


def test_zero_correction_keeps_the_legs(rng):
    legs = random_legs(4, rng)
    X = np.cumsum([endpoint(l).x for l in legs], axis=0)
    u, _ = central_correction_path(legs, np.zeros(6), min_height(X), SubFinslerNorm.l2(4))
    assert endpoint(u).allclose(endpoint(concat_many(legs)), atol=1e-12)


@pytest.mark.parametrize("kind", ["l1", "l2", "linf"])
def test_central_correction_random(rng, kind):
    for _ in range(100):
        n = int(rng.integers(2, 6))
        N = getattr(SubFinslerNorm, kind)(n)
        legs = random_legs(n, rng)
        X = np.cumsum([endpoint(l).x for l in legs], axis=0)
        eps = min_height(X)
        if eps < 1e-3:
            continue
        Z = rng.standard_normal(n * (n - 1) // 2)
        plan = plan_central_correction(legs, Z, eps, N)
        u = plan.assemble()
        assert endpoint(u).allclose(plan.expected_endpoint(), atol=1e-9)
        assert length(u, N) <= plan.bound * (1 + 1e-12)
        back = SurgeryPlan.from_json(plan.to_json())
        assert endpoint(back.assemble()).allclose(endpoint(u), atol=1e-12)


def test_central_correction_general_product(rng):
    G = rng.standard_normal((3, 3))
    m = GroupModel(3, __import__("carnot_lab").AdequateProduct(G @ G.T + np.eye(3)))
    legs = random_legs(3, rng)
    X = m.product.vec_to_orthonormal(np.cumsum([endpoint(l).x for l in legs], axis=0))
    Z = rng.standard_normal(3)
    plan = plan_central_correction(legs, Z, min_height(X), SubFinslerNorm.l2(3), m)
    assert endpoint(plan.assemble()).allclose(plan.expected_endpoint(), atol=1e-9)


def test_tube_check_trivial_and_inside():
    P = GrassmannPlane.from_normals([0, 0, 1, 0], [0, 0, 0, 1])
    u = Control.from_displacements([[1, 0, 0, 0], [0, 1, 0, 0]])
    c = tube_endpoint_check(u, P, 0.1, 2.0)
    assert c.sup_distance == 0 and c.end_distance == 0 and c.holds and not c.witness


def test_tube_check_adversarial_witness():
    # many tiny loops in the normal plane stay close to P but pile up area in Lambda^2 P-perp
    P = GrassmannPlane.from_normals([0, 0, 1, 0], [0, 0, 0, 1])
    r, k = 0.01, 400
    loop = np.array([[0, 0, r, 0], [0, 0, 0, r], [0, 0, -r, 0], [0, 0, 0, -r]])
    u = Control.from_displacements(np.tile(loop, (k, 1)))
    c = tube_endpoint_check(u, P, 0.02, 2.0)
    assert c.premise and c.end_distance == pytest.approx(k * r * r)
    assert c.witness and not c.holds


def test_tube_check_random_sound(rng):
    P = GrassmannPlane.from_normals([0, 0, 1, 0], [0, 0, 0, 1])
    for _ in range(200):
        D = rng.standard_normal((8, 4)) * [1, 1, 1e-3, 1e-3]
        c = tube_endpoint_check(Control.from_displacements(D), P, 0.05, 10.0)
        assert c.premise and c.holds


def sphere_control(n, r, segs=5):
    u = Control.from_segments(zip(r.uniform(0.2, 1, segs), r.standard_normal((segs, n))))
    g, t = radial_project(endpoint(u))
    return g, u.scaled(t)


def nearby_on_sphere(g, r, size):
    v = g.as_vector() + size * r.standard_normal(g.as_vector().size)
    return radial_project(GroupElement.from_vector(v))[0]


def test_competitor_reaches_h_within_bound(rng):
    N = SubFinslerNorm.l1(3)
    consts = DerivedConstants.from_metric(3, norm_equivalence_constant(N), 4.0)
    m = GroupModel(3)
    done = 0
    for _ in range(40):
        g, u = sphere_control(3, rng)
        h = nearby_on_sphere(g, rng, 0.01)
        try:
            c = lipschitz_competitor(g, u, h, 0.05, consts, N)
        except CertificateError:
            continue
        done += 1
        assert c.endpoint_error <= 1e-9
        assert c.length <= c.bound * (1 + 1e-12)
        assert c.length <= c.sharp_bound * (1 + 1e-12)
        assert np.linalg.norm(c.plan.target_bivector) <= 2 * m.dist(g, h) + 1e-15
    assert done >= 30


def test_competitor_with_h_equal_g(rng):
    N = SubFinslerNorm.l2(3)
    consts = DerivedConstants.from_metric(3, 1.0, 4.0)
    g, u = sphere_control(3, rng)
    c = lipschitz_competitor(g, u, g, 0.05, consts, N)
    assert c.d_eu == 0 and c.length == pytest.approx(c.geo_length, rel=1e-12)
    assert c.endpoint_error <= 1e-12


def test_competitor_on_sharp_instance():
    N = SubFinslerNorm.l1(4)
    consts = DerivedConstants.from_metric(4, 2.0, 6.03)
    delta = 0.2
    # l1 geodesic to (delta e3, e1^e2): square loop in the e1, e2 plane then the e3 step
    D = np.array([[0.5, 0, 0, 0], [0, 0.5, 0, 0], [-0.5, 0, 0, 0], [0, -0.5, 0, 0], [0, 0, delta, 0]]) * 2
    u0 = Control.from_displacements(D * [[1], [1], [1], [1], [0.5]])
    g, t = radial_project(endpoint(u0))
    u = u0.scaled(t)
    eps = min(0.1 * delta, delta ** 2 / 2)
    Y = g.Y.copy()
    Y[5] += eps * t * t
    h = radial_project(GroupElement(g.x, Y))[0]
    c = lipschitz_competitor(g, u, h, delta, consts, N)
    assert c.endpoint_error <= 1e-9
    assert c.length <= c.bound


def test_competitor_preconditions(rng):
    N = SubFinslerNorm.l1(3)
    consts = DerivedConstants.from_metric(3, 1.0, 1.0)
    g, u = sphere_control(3, rng)
    with pytest.raises(PreconditionError):
        lipschitz_competitor(GroupElement(g.x * 2, g.Y), u, g, 0.05, consts, N)
    with pytest.raises(PreconditionError):
        lipschitz_competitor(g, u, g, consts.delta0 * 2, consts, N)
    with pytest.raises(PreconditionError):
        lipschitz_competitor(g, u.scaled(0.5), g, 0.05, consts, N)
    # a straight segment never spreads out: no certificate
    line = Control.constant([1.0, 0, 0])
    with pytest.raises(CertificateError):
        lipschitz_competitor(endpoint(line), line, endpoint(line), 0.05,
                             DerivedConstants.from_metric(3, 1.0, 1.0), N)
