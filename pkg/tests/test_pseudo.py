"""Core pseudo-Euclidean linear algebra."""
import numpy as np
import pytest

from liesphere import pseudo
from liesphere.errors import (
    DegenerateProjectionError,
    DimensionMismatchError,
    GeometryInputError,
    ZeroSpanError,
)
from liesphere.pseudo import (
    Bivector,
    MetricSpace,
    bivector_inner,
    bivector_plane,
    hodge_star,
    interior_contract,
    intersect,
    is_isotropic,
    orth_complement,
    project_onto,
    restricted_signature,
    span,
    subspace_distance,
    subspace_sum,
    wedge,
)

R42 = MetricSpace(4, 2)
R22 = MetricSpace(2, 2)

# fixed coordinates of the example scene: basis (e, e1, e2, a4, t0, t1)
E6 = np.eye(6)
e, e1, e2, a4, t0, t1 = E6
P0 = (a4 + t0) / np.sqrt(2)
PINF = (-a4 + t0) / np.sqrt(2)


def test_inner_fixed_values():
    assert R42.inner(t1, t1) == pytest.approx(-1.0)
    assert R42.inner(P0, PINF) == pytest.approx(-1.0)
    v = np.array([1.0, 2, 3, 4, 5, 6])
    assert R42.inner(v, np.zeros(6)) == 0.0


def test_inner_bilinear_symmetric():
    rng = np.random.default_rng(7)
    for _ in range(20):
        u, v, w = rng.normal(size=(3, 6))
        a, b = rng.normal(size=2)
        assert R42.inner(u, v) == pytest.approx(R42.inner(v, u), abs=1e-13)
        assert R42.inner(a * u + b * w, v) == pytest.approx(
            a * R42.inner(u, v) + b * R42.inner(w, v), rel=1e-12, abs=1e-12
        )


def test_inner_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        R42.inner(np.ones(5), np.ones(5))


def test_span_rank_and_errors():
    assert span(R42, [t1, 2 * t1]).rank == 1
    assert span(R42, [P0, PINF]).rank == 2
    with pytest.raises(ZeroSpanError):
        span(R42, np.zeros((0, 6)))
    with pytest.raises(ZeroSpanError):
        span(R42, [np.zeros(6)])


def test_intersect_examples():
    a = span(R42, [P0, e])
    assert subspace_distance(intersect(a, a), a) < 1e-12
    b = span(R42, [P0, t1])
    meet = intersect(a, b)
    assert meet.rank == 1
    assert meet.contains(P0, tol=1e-10)


def test_sum_and_grassmann_identity():
    rng = np.random.default_rng(3)
    a = span(R42, [P0, e])
    assert subspace_distance(subspace_sum(a, a), a) < 1e-12
    empty = intersect(span(R42, [e]), span(R42, [e1]))
    assert empty.rank == 0
    assert subspace_distance(subspace_sum(empty, a), a) < 1e-12
    for _ in range(20):
        A = span(R42, rng.normal(size=(rng.integers(1, 4), 6)))
        B = span(R42, rng.normal(size=(rng.integers(1, 4), 6)))
        lhs = subspace_sum(A, B).rank + intersect(A, B).rank
        assert lhs == A.rank + B.rank


def test_orth_complement():
    c = orth_complement(span(R42, [t1]))
    assert c.rank == 5
    assert c.contains(t0, tol=1e-12)
    rng = np.random.default_rng(11)
    for _ in range(10):
        a = span(R42, rng.normal(size=(rng.integers(1, 5), 6)))
        assert subspace_distance(orth_complement(orth_complement(a)), a) < 1e-10
    # inclusion reversal on nested pairs
    small = span(R42, [e, e1])
    big = span(R42, [e, e1, t0])
    cs, cb = orth_complement(small), orth_complement(big)
    for row in cb.basis:
        assert cs.contains(row, tol=1e-10)


def test_restricted_signature():
    assert restricted_signature(span(R42, [P0, e])).as_tuple() == (1, 0, 1)
    assert restricted_signature(span(R42, [P0])).as_tuple() == (0, 0, 1)
    assert restricted_signature(span(R42, [e, e1, t0, t1])).as_tuple() == (2, 2, 0)


def test_is_isotropic():
    assert not is_isotropic(span(R42, [P0, PINF]))
    assert is_isotropic(span(R42, [P0]))
    assert is_isotropic(intersect(span(R42, [e]), span(R42, [e1])))  # rank 0
    # phi0 of the example scene is null for all (u, v)
    for u in (0.1, 0.3, 0.5):
        for v in (0.0, 1.0, 2.5):
            phi = P0 + u * (np.cos(v) * e1 + np.sin(v) * e2) + u * u / 2 * PINF
            assert is_isotropic(span(R42, [phi]))


def test_project_onto():
    p = project_onto(span(R42, [t0]), t0 + t1)
    assert np.allclose(p, t0, atol=1e-12)
    with pytest.raises(DegenerateProjectionError):
        project_onto(span(R42, [P0]), e)
    a = span(R42, [e, t0])
    for vec in a.basis:
        assert np.allclose(project_onto(a, vec), vec, atol=1e-12)
    # residual is metric-orthogonal to the target
    v = np.array([0.3, -1.2, 0.7, 2.0, 0.1, -0.4])
    p = project_onto(a, v)
    assert np.abs(R42.inner(v - p, a.basis[0])) < 1e-12
    assert np.abs(R42.inner(v - p, a.basis[1])) < 1e-12


def test_invariance_under_pseudo_orthogonal_maps():
    rng = np.random.default_rng(5)
    g = R42.random_orthogonal(rng, scale=0.4)
    gram_after = g.T @ np.diag(R42.diag) @ g
    assert np.allclose(gram_after, np.diag(R42.diag), atol=1e-10)
    for _ in range(10):
        vecs = rng.normal(size=(3, 6))
        a = span(R42, vecs)
        ag = span(R42, vecs @ g.T)
        assert restricted_signature(a).as_tuple() == restricted_signature(ag).as_tuple()
        assert is_isotropic(a) == is_isotropic(ag)
        w = rng.normal(size=(2, 6))
        b, bg = span(R42, w), span(R42, w @ g.T)
        assert intersect(a, b).rank == intersect(ag, bg).rank


# -- exterior square of a (2,2)-space ---------------------------------------


def test_hodge_involution_and_isometry():
    rng = np.random.default_rng(13)
    for i in range(6):
        b = Bivector(np.eye(6)[i], R22)
        assert np.allclose(hodge_star(hodge_star(b)).components, b.components)
    for _ in range(10):
        b1 = Bivector(rng.normal(size=6), R22)
        b2 = Bivector(rng.normal(size=6), R22)
        assert bivector_inner(hodge_star(b1), hodge_star(b2)) == pytest.approx(
            bivector_inner(b1, b2), rel=1e-12, abs=1e-12
        )


def test_lambda2_signature_splits():
    plus, minus = pseudo.selfdual_projector(+1)
    # eigenvalues of the induced metric restricted to each eigenspace
    for proj in (plus, minus):
        basis, rank = pseudo.orthonormal_rows(proj, 1e-12)
        assert rank == 3
        gram = basis @ np.diag(pseudo.LAMBDA2_DIAG) @ basis.T
        w = np.linalg.eigvalsh(gram)
        assert int(np.sum(w > 1e-12)) == 1 and int(np.sum(w < -1e-12)) == 2


def test_null_plane_bivectors_are_selfdual():
    rng = np.random.default_rng(17)
    # null 2-planes of R^{2,2}: span{x+u, y+v} with x,y spacelike, u,v timelike ONBs
    for _ in range(20):
        rot = rng.normal(size=(2, 2))
        qx, _ = np.linalg.qr(rot)
        x = np.array([qx[0, 0], qx[1, 0], 0, 0])
        y = np.array([qx[0, 1], qx[1, 1], 0, 0])
        rot2 = rng.normal(size=(2, 2))
        qt, _ = np.linalg.qr(rot2)
        u = np.array([0, 0, qt[0, 0], qt[1, 0]])
        v = np.array([0, 0, qt[0, 1], qt[1, 1]])
        w = wedge(R22, x + u, y + v)
        star = hodge_star(w).components
        sd = min(np.linalg.norm(star - w.components), np.linalg.norm(star + w.components))
        assert sd < 1e-12
        assert abs(bivector_inner(w, w)) < 1e-12
        # conversely the plane recovered from the bivector is isotropic
        plane = bivector_plane(w)
        assert is_isotropic(pseudo.span(R22, plane), tol=1e-9)


def test_interior_contract_defining_formula():
    rng = np.random.default_rng(19)
    for _ in range(10):
        t, x, y = rng.normal(size=(3, 4))
        b = wedge(R22, t, x)
        expected = R22.inner(t, t) * x - R22.inner(t, x) * t
        assert np.allclose(interior_contract(t, b), expected, atol=1e-12)
        b2 = wedge(R22, x, y)
        tp = np.array([0.0, 0.0, 1.0, 0.0])
        xo = np.array([1.0, 0, 0, 0])
        yo = np.array([0.0, 1, 0, 0])
        assert np.allclose(interior_contract(tp, wedge(R22, xo, yo)), 0.0)


def test_interior_contract_anti_isometry():
    # T = sqrt(2) iota_t on bivectors built inside t-perp wedge t is anti-isometric
    rng = np.random.default_rng(23)
    t = np.array([0.0, 0.0, 0.0, 1.0])  # (t,t) = -1
    perp = [np.eye(4)[i] for i in range(3)]
    for _ in range(20):
        c1 = rng.normal(size=3)
        c2 = rng.normal(size=3)
        psi1 = sum(c * w for c, w in zip(c1, perp))
        psi2 = sum(c * w for c, w in zip(c2, perp))
        for sign in (+1, -1):
            def lift(psi):
                base = wedge(R22, psi, t).components
                starred = hodge_star(Bivector(base, R22), +1).components
                return Bivector((base + sign * starred) / np.sqrt(2), R22)

            e1_, e2_ = lift(psi1), lift(psi2)
            t1_ = np.sqrt(2) * interior_contract(t, e1_)
            t2_ = np.sqrt(2) * interior_contract(t, e2_)
            assert R22.inner(t1_, t2_) == pytest.approx(
                -bivector_inner(e1_, e2_), rel=1e-11, abs=1e-11
            )
            # round trip: T^{-1} then T recovers the input
            assert np.allclose(t1_, psi1, atol=1e-10)


def test_orientation_flag():
    b = Bivector(np.eye(6)[0], R22)
    assert np.allclose(hodge_star(b, -1).components, -hodge_star(b, +1).components)
    with pytest.raises(GeometryInputError):
        hodge_star(b, 2)
