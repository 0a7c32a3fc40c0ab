"""Pseudo-Euclidean linear algebra with exact signature bookkeeping.

Everything downstream works inside R^{p,q} with the diagonal metric
(+1,...,+1,-1,...,-1), minus axes last.  Vectors are plain float arrays of
length p+q; a Subspace is a numerically rank-revealed span whose stored basis
is Euclidean-orthonormal (the indefinite form cannot orthonormalize null
vectors, so conditioning is handled Euclidean-side and the metric only enters
through Gram computations).

The module also carries the exterior-square machinery for 4-dimensional
spaces of signature (2,2): wedge coordinates, the induced (2,4) metric on
bivectors, the Hodge star for a chosen orientation, interior contraction and
the recovery of a 2-plane from a decomposable bivector.  These are the tools
used to enumerate the two rulings of a (1,1) projective quadric.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateProjectionError,
    DimensionMismatchError,
    GeometryInputError,
    ZeroSpanError,
)

RANK_TOL_DEFAULT = 1e-9


class MetricSpace:
    """R^{p,q} with the fixed diagonal metric, minus axes last."""

    def __init__(self, p: int, q: int):
        if p < 0 or q < 0 or p + q == 0:
            raise GeometryInputError(f"invalid signature ({p}, {q})")
        self.p = int(p)
        self.q = int(q)
        self.dim = self.p + self.q
        self.diag = np.concatenate([np.ones(self.p), -np.ones(self.q)])

    @property
    def signature(self) -> tuple[int, int]:
        return (self.p, self.q)

    def __eq__(self, other) -> bool:
        return isinstance(other, MetricSpace) and self.signature == other.signature

    def __hash__(self):
        return hash(("MetricSpace", self.signature))

    def __repr__(self):
        return f"MetricSpace({self.p},{self.q})"

    def check_vector(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"vector length {v.shape[-1]} != space dim {self.dim}"
            )
        return v

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Indefinite inner product, batched over leading axes."""
        u = self.check_vector(u)
        v = self.check_vector(v)
        return np.einsum("...i,i,...i->...", u, self.diag, v)

    def gram(self, basis: np.ndarray) -> np.ndarray:
        """Gram matrix of stacked basis rows, batched: (..., r, n) -> (..., r, r)."""
        basis = np.asarray(basis, dtype=float)
        return np.einsum("...in,n,...jn->...ij", basis, self.diag, basis)

    def random_orthogonal(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        """Random element of O(p,q) near the identity component, via expm(g^{-1}K)."""
        from scipy.linalg import expm

        k = rng.normal(size=(self.dim, self.dim)) * scale
        k = k - k.T
        x = (1.0 / self.diag)[:, None] * k
        return expm(x)


@dataclass(frozen=True)
class SignatureReport:
    plus: int
    minus: int
    null: int
    tol: float

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.plus, self.minus, self.null)


def orthonormal_rows(vectors: np.ndarray, rank_tol: float) -> tuple[np.ndarray, int]:
    """Euclidean-orthonormal row basis of the span, rank from the SVD threshold."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    u, s, vt = np.linalg.svd(vectors, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((0, vectors.shape[-1])), 0
    rank = int(np.sum(s > rank_tol * s[0]))
    return vt[:rank], rank


class Subspace:
    """Rank-revealed span with a Euclidean-orthonormal stored basis."""

    def __init__(self, space: MetricSpace, basis: np.ndarray, rank_tol: float):
        basis = np.asarray(basis, dtype=float).reshape(-1, space.dim)
        self.space = space
        self.basis = basis
        self.rank = basis.shape[0]
        self.rank_tol = rank_tol

    def __repr__(self):
        return f"Subspace(rank={self.rank}, space={self.space})"

    def gram(self) -> np.ndarray:
        return self.space.gram(self.basis)

    def contains(self, v: np.ndarray, tol: float = 1e-9) -> bool:
        v = self.space.check_vector(v)
        resid = v - self.basis.T @ (self.basis @ v)
        return float(np.linalg.norm(resid)) <= tol * max(1.0, float(np.linalg.norm(v)))


def span(space: MetricSpace, vectors, rank_tol: float = RANK_TOL_DEFAULT) -> Subspace:
    """Numerically full-rank span of the given vectors."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.size == 0:
        raise ZeroSpanError("empty vector list")
    if vectors.shape[-1] != space.dim:
        raise DimensionMismatchError("vectors do not live in the given space")
    basis, rank = orthonormal_rows(vectors, rank_tol)
    if rank == 0:
        raise ZeroSpanError("zero span: all vectors below rank tolerance")
    return Subspace(space, basis, rank_tol)


def _empty(space: MetricSpace, rank_tol: float) -> Subspace:
    return Subspace(space, np.zeros((0, space.dim)), rank_tol)


def _check_common_space(a: Subspace, b: Subspace) -> MetricSpace:
    if a.space != b.space:
        raise DimensionMismatchError("subspaces live in different metric spaces")
    return a.space


def intersect(a: Subspace, b: Subspace) -> Subspace:
    """Numerical intersection; rank-0 results are representable."""
    space = _check_common_space(a, b)
    tol = min(a.rank_tol, b.rank_tol)
    if a.rank == 0 or b.rank == 0:
        return _empty(space, tol)
    # x in A∩B  <=>  x ⊥_eucl both complements; stack the two projectors I-P.
    pa = np.eye(space.dim) - a.basis.T @ a.basis
    pb = np.eye(space.dim) - b.basis.T @ b.basis
    stacked = np.vstack([pa, pb])
    u, s, vt = np.linalg.svd(stacked)
    small = s <= tol * max(1.0, s[0])
    basis = vt[small]
    if basis.shape[0] == 0:
        return _empty(space, tol)
    return Subspace(space, basis, tol)


def subspace_sum(a: Subspace, b: Subspace) -> Subspace:
    space = _check_common_space(a, b)
    tol = min(a.rank_tol, b.rank_tol)
    stacked = np.vstack([a.basis, b.basis])
    if stacked.shape[0] == 0:
        return _empty(space, tol)
    basis, rank = orthonormal_rows(stacked, tol)
    return Subspace(space, basis, tol)


def orth_complement(a: Subspace) -> Subspace:
    """Metric orthogonal complement: null space of (basis * diag)."""
    space = a.space
    if a.rank == 0:
        return Subspace(space, np.eye(space.dim), a.rank_tol)
    constraints = a.basis * space.diag
    u, s, vt = np.linalg.svd(constraints, full_matrices=True)
    basis = vt[a.rank :]
    return Subspace(space, basis, a.rank_tol)


def restricted_signature(a: Subspace, tol: float = 1e-9) -> SignatureReport:
    """Eigenvalue-count classification of the restricted Gram form."""
    if a.rank == 0:
        return SignatureReport(0, 0, 0, tol)
    w = np.linalg.eigvalsh(a.gram())
    scale = float(np.max(np.abs(w))) if np.max(np.abs(w)) > 0 else 1.0
    null = int(np.sum(np.abs(w) < tol * scale))
    plus = int(np.sum(w >= tol * scale))
    minus = int(np.sum(w <= -tol * scale))
    return SignatureReport(plus, minus, null, tol)


def is_isotropic(a: Subspace, tol: float = 1e-9) -> bool:
    if a.rank == 0:
        return True
    g = a.gram()
    scale = float(np.max(np.sum(a.basis**2, axis=1)))
    return float(np.max(np.abs(g))) <= tol * max(scale, 1.0)


def project_onto(a: Subspace, v: np.ndarray) -> np.ndarray:
    """Metric-orthogonal projection onto A; requires a nondegenerate Gram."""
    v = a.space.check_vector(v)
    if a.rank == 0:
        raise DegenerateProjectionError("cannot project onto the zero subspace")
    g = a.gram()
    sig = restricted_signature(a)
    if sig.null > 0:
        raise DegenerateProjectionError("degenerate projection target")
    rhs = a.basis @ (a.space.diag * v)
    coeff = np.linalg.solve(g, rhs)
    return a.basis.T @ coeff


def subspace_distance(a: Subspace, b: Subspace) -> float:
    """Spectral distance of Euclidean orthoprojectors; 0 iff equal spans."""
    _check_common_space(a, b)
    pa = a.basis.T @ a.basis
    pb = b.basis.T @ b.basis
    return float(np.linalg.norm(pa - pb, ord=2))


def distance_between_plane_stacks(ba: np.ndarray, bb: np.ndarray) -> np.ndarray:
    """Batched projector distance for orthonormal-row stacks (..., r, n)."""
    pa = np.einsum("...ri,...rj->...ij", ba, ba)
    pb = np.einsum("...ri,...rj->...ij", bb, bb)
    return np.linalg.norm(pa - pb, ord=2, axis=(-2, -1))


# ---------------------------------------------------------------------------
# Exterior square of a 4-dimensional (2,2) space.
#
# Components are stored against the lexicographic pair basis below.  With the
# diagonal metric (+,+,-,-) the induced bivector metric is diagonal and the
# Hodge star is a signed permutation; both are hard-coded and verified by the
# test suite (involution, isometry, eigenspace signatures).
# ---------------------------------------------------------------------------

WEDGE_PAIRS: tuple[tuple[int, int], ...] = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
LAMBDA2_DIAG = np.array([1.0, -1.0, -1.0, -1.0, -1.0, 1.0])
# star maps [b01,b02,b03,b12,b13,b23] -> [b23,b13,-b12,-b03,b02,b01]
_HODGE = np.zeros((6, 6))
_HODGE[0, 5] = 1.0
_HODGE[1, 4] = 1.0
_HODGE[2, 3] = -1.0
_HODGE[3, 2] = -1.0
_HODGE[4, 1] = 1.0
_HODGE[5, 0] = 1.0


def _require_22(space: MetricSpace):
    if space.signature != (2, 2):
        raise GeometryInputError("exterior-square machinery requires signature (2,2)")


@dataclass
class Bivector:
    """Element of Λ² of a 4-dimensional (2,2) space, in lexicographic coordinates."""

    components: np.ndarray
    space: MetricSpace

    def __post_init__(self):
        _require_22(self.space)
        self.components = np.asarray(self.components, dtype=float)
        if self.components.shape != (6,):
            raise DimensionMismatchError("bivector needs exactly 6 components")


def wedge(space: MetricSpace, x: np.ndarray, y: np.ndarray) -> Bivector:
    _require_22(space)
    x = space.check_vector(x)
    y = space.check_vector(y)
    comps = np.array([x[i] * y[j] - x[j] * y[i] for i, j in WEDGE_PAIRS])
    return Bivector(comps, space)


def bivector_inner(a: Bivector, b: Bivector) -> float:
    return float(np.sum(a.components * LAMBDA2_DIAG * b.components))


def hodge_star(b: Bivector, orientation: int = 1) -> Bivector:
    """Hodge star for the declared orientation (+1: lexicographic 4-form positive)."""
    if orientation not in (1, -1):
        raise GeometryInputError("orientation must be +1 or -1")
    return Bivector(orientation * (_HODGE @ b.components), b.space)


def interior_contract(t: np.ndarray, b: Bivector) -> np.ndarray:
    """iota_t(x∧y) = (t,x)y - (t,y)x, extended linearly."""
    t = b.space.check_vector(t)
    m = np.zeros((4, 4))
    for c, (i, j) in zip(b.components, WEDGE_PAIRS):
        m[i, j] = c
        m[j, i] = -c
    return (t * b.space.diag) @ m


def bivector_plane(b: Bivector, tol: float = 1e-8) -> np.ndarray:
    """Recover the 2-plane of a decomposable bivector as orthonormal rows.

    The plane is the image of v -> iota_v(b); a bivector is decomposable
    exactly when that image is 2-dimensional (equivalently b∧b = 0).
    """
    m = np.zeros((4, 4))
    for c, (i, j) in zip(b.components, WEDGE_PAIRS):
        m[i, j] = c
        m[j, i] = -c
    rows = np.diag(b.space.diag) @ m  # row i = iota_{e_i} b
    basis, rank = orthonormal_rows(rows, tol)
    if rank != 2:
        raise GeometryInputError(f"bivector is not decomposable (image rank {rank})")
    return basis


def selfdual_projector(orientation: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Projectors onto the self-dual / anti-self-dual eigenspaces of the star."""
    h = orientation * _HODGE
    return 0.5 * (np.eye(6) + h), 0.5 * (np.eye(6) - h)
