"""The worked example: a sphere with two circle transforms, end to end.

Everything is built from closed forms in R^{4,2} with the fixed basis
(e, e1, e2, a4, t0, t1), minus axes last.  The base surface parametrizes the
2-sphere spanned against e + t1; two marked null points on it (point_a,
point_b, normalized to pair to -1) generate the first transform, a circle
through both points; the second transform is a circle generated from a second
marked pair, equal to the first in the coincident variant and rotated inside
the sphere's orthogonal complement in the generic variant.

The coincident variant is the permutability success case: the rank-4 bundle
spanned by the two transforms is flat, with four closed-form parallel sections
obtained by a common polynomial rescaling; both rulings of the resulting
quadric are computed exactly.  The generic variant is the documented failure
case: the two circle systems differ and the bundle holonomy is bounded away
from zero.

The second transform of the generic variant is reparametrized onto the common
grid through the chart that the second marked pair induces on the base sphere;
that chart degenerates at one grid point, which is masked with the grid's
excluded-zone mechanism (a band of the periodic axis around the degenerate
meridian).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryInputError, GeometryValueError
from .grids import (
    Axis,
    Grid,
    SectionField,
    SubbundleField,
    differential_array,
    flatness_report,
)
from .pseudo import MetricSpace
from .ribaucour import (
    CongruenceField,
    DemoulinFamilies,
    LegendreField,
    build_v,
    demoulin,
    n_bundle,
    n_parallel_residual,
    validate_legendre,
)
from .spaceform import ImmersionField

R42 = MetricSpace(4, 2)
_E = np.eye(6)
E_VEC, E1_VEC, E2_VEC, A4_VEC, T0_VEC, T1_VEC = _E
POINT_A = (A4_VEC + T0_VEC) / np.sqrt(2.0)
POINT_B = (-A4_VEC + T0_VEC) / np.sqrt(2.0)
SPHERE_A = E_VEC + T1_VEC  # the base sphere
SPHERE_B = T1_VEC - 3.0 * E_VEC - 2.0 * (POINT_A + POINT_B)  # the second constant sphere

# u-values where the construction degenerates: the chart origin and the zeros
# of the common parallel-scaling polynomial 1 - 2u + u^2/2
SINGULAR_U = (0.0, 2.0 - np.sqrt(2.0), 2.0 + np.sqrt(2.0))


def scale_poly(u):
    return 1.0 - 2.0 * u + 0.5 * u * u


def cong1_poly(u):
    return 1.0 - u + 0.5 * u * u


@dataclass(frozen=True)
class SceneParams:
    variant: str = "coincident"
    rotation: float = 0.0  # generic: angle carrying the marked pair off itself
    u_min: float = 0.1
    u_max: float = 0.55
    n_u: int = 64
    n_v: int = 64

    def __post_init__(self):
        if self.variant not in ("coincident", "generic"):
            raise GeometryInputError(f"unknown variant {self.variant!r}")
        if self.variant == "generic" and self.rotation == 0.0:
            raise GeometryInputError("generic variant needs a nonzero rotation")
        if self.variant == "coincident" and self.rotation != 0.0:
            raise GeometryInputError("coincident variant has no rotation")


def coincident_params(n_u: int = 64, n_v: int = 64) -> SceneParams:
    return SceneParams("coincident", 0.0, 0.1, 0.55, n_u, n_v)


def generic_params(rotation: float = 0.7, n_u: int = 64, n_v: int = 64) -> SceneParams:
    """Generic defaults keep u small: the two transforms stay uniformly
    transversal there and the second marked pair's chart has no pole."""
    return SceneParams("generic", rotation, 0.1, 0.25, n_u, n_v)


@dataclass
class SceneThresholds:
    """Grid-calibrated decision levels, 100x the measured flat references."""

    v_flat_ref: float
    n_flat_ref: float
    legendre_ref: float

    @property
    def v_flat(self) -> float:
        return 100.0 * self.v_flat_ref

    @property
    def n_flat(self) -> float:
        return 100.0 * self.n_flat_ref

    @property
    def legendre(self) -> float:
        return 100.0 * self.legendre_ref


@dataclass
class Scene:
    params: SceneParams
    grid: Grid
    space: MetricSpace
    # marked data of the second pair (equals the first pair when coincident)
    point_a2: np.ndarray
    point_b2: np.ndarray
    e1g: np.ndarray
    e2g: np.ndarray
    # closed-form section fields over the common grid
    base_points: SectionField  # point lift of the base sphere
    circle0_spheres: SectionField
    circle0_points: SectionField
    circle1_points: SectionField  # reparametrized in the generic variant
    circle1_spheres: SectionField
    cong0: SectionField  # u * base_sphere + base_points
    cong1: SectionField
    # tilde-chart coordinates of each node (identity when coincident)
    u2: np.ndarray
    v2: np.ndarray
    chart_scale: np.ndarray  # base_points = chart_scale * tilde point lift
    # validated Legendre fields
    f0: LegendreField
    fhat0: LegendreField
    fhat1: LegendreField
    v_bundle: SubbundleField
    thresholds: SceneThresholds
    frame_sections: list | None = None  # closed-form parallel frame (coincident)

    @property
    def coincident(self) -> bool:
        return self.params.variant == "coincident"

    def frame_derivatives(self) -> list:
        """Analytic differentials of the closed-form parallel frame.

        The rescaled sections blow up near the zeros of the scaling
        polynomial, where finite differences cannot resolve their parallelism;
        the closed forms can.  Returns [axis][section] arrays.
        """
        if not self.coincident:
            raise GeometryInputError("parallel frame exists only in the coincident variant")
        u, v = self.grid.mesh()
        cosv, sinv = np.cos(v), np.sin(v)
        q = scale_poly(u)[..., None]
        dq = (u - 2.0)[..., None]
        a_p = cong1_poly(u)[..., None]
        da = (u - 1.0)[..., None]
        phi = self.base_points.values
        dphi_u = cosv[..., None] * E1_VEC + sinv[..., None] * E2_VEC + u[..., None] * POINT_B
        dphi_v = u[..., None] * (-sinv[..., None] * E1_VEC + cosv[..., None] * E2_VEC)
        dcirc_v = -sinv[..., None] * E1_VEC + cosv[..., None] * E2_VEC
        s = SPHERE_A
        c0 = u[..., None] * s + phi
        c1 = a_p * s + phi
        dtau0_u = ((s + dphi_u) * q - c0 * dq) / (q * q)
        dtau0_v = dphi_v / q
        dtau1_u = ((da * s + dphi_u) * q - c1 * dq) / (q * q)
        dtau1_v = dphi_v / q
        return [
            [dtau0_u, dtau1_u, 0.5 * dtau0_u, 0.5 * dtau1_u],
            [dtau0_v, dtau1_v, dcirc_v + 0.5 * dtau0_v, dcirc_v + 0.5 * dtau1_v],
        ]

    def constant_section(self, vec: np.ndarray) -> SectionField:
        return SectionField(
            self.grid, self.space, np.broadcast_to(vec, self.grid.shape + (6,)).copy()
        )

    def descend(self, values: np.ndarray) -> ImmersionField:
        """Point-sphere lift -> point of the unit sphere (t0-normalization)."""
        t0c = values[..., 4:5]
        safe = np.where(np.abs(t0c) > 1e-300, t0c, 1.0)
        pts = values[..., :4] / safe
        # masked nodes may hold arbitrary fillers; park them on a fixed point
        pts = np.where(self.grid.active[..., None], pts, np.eye(4)[0])
        norms = np.linalg.norm(pts, axis=-1, keepdims=True)
        return ImmersionField(self.grid, pts / np.maximum(norms, 1e-300))

    def immersions(self) -> tuple[ImmersionField, ImmersionField, ImmersionField]:
        return (
            self.descend(self.base_points.values),
            self.descend(self.circle0_points.values),
            self.descend(self.circle1_points.values),
        )

    def scaled_complement_sections(self) -> tuple[SectionField, SectionField]:
        """The two non-congruence parallel sections, after the common rescaling."""
        if not self.coincident:
            raise GeometryInputError("parallel frame exists only in the coincident variant")
        return self.frame_sections[2], self.frame_sections[3]


def _marked_pair(rotation: float):
    """Second marked pair: rotate the chart axis inside the sphere's complement."""
    c, s = np.cos(rotation), np.sin(rotation)
    axis = c * A4_VEC - s * E1_VEC
    pa = (axis + T0_VEC) / np.sqrt(2.0)
    pb = (-axis + T0_VEC) / np.sqrt(2.0)
    e1g = c * E1_VEC + s * A4_VEC
    return pa, pb, e1g, E2_VEC.copy()


def _tilde_chart(x: np.ndarray, pa2, pb2, e1g, e2g):
    """Chart coordinates of base-sphere point lifts w.r.t. the second pair.

    Returns (u2, v2, a) with x = a * (pa2 + u2 (cos v2 e1g + sin v2 e2g)
    + u2^2/2 pb2); a = -(x, pb2).
    """
    diag = R42.diag
    a = -np.einsum("...i,i,i->...", x, diag, pb2)
    b = -np.einsum("...i,i,i->...", x, diag, pa2)
    c1 = np.einsum("...i,i,i->...", x, diag, e1g)
    c2 = np.einsum("...i,i,i->...", x, diag, e2g)
    if float(np.min(np.abs(a))) < 1e-12 or float(np.min(b)) < 0:
        raise GeometryValueError("chart degenerates on the grid; widen the exclusion")
    u2 = np.sqrt(2.0 * b / a)
    v2 = np.arctan2(c2 / a, c1 / a)
    return u2, v2, a


def build_scene(params: SceneParams) -> Scene:
    h_u = (params.u_max - params.u_min) / (params.n_u - 1)
    excluded = []
    for ustar in SINGULAR_U:
        if params.u_min - 3 * h_u < ustar < params.u_max + 3 * h_u:
            excluded.append((0, ustar - 3 * h_u, ustar + 3 * h_u))
    grid = Grid(
        [Axis(params.u_min, params.u_max, params.n_u), Axis(0.0, 2 * np.pi, params.n_v, periodic=True)],
        excluded=excluded,
    )
    u, v = grid.mesh()
    cosv, sinv = np.cos(v), np.sin(v)

    base_points = POINT_A + u[..., None] * (cosv[..., None] * E1_VEC + sinv[..., None] * E2_VEC) + (
        0.5 * u * u
    )[..., None] * POINT_B
    circle0_spheres = T1_VEC + cosv[..., None] * E1_VEC + sinv[..., None] * E2_VEC
    circle0_points = POINT_A + u[..., None] * E_VEC + (0.5 * u * u)[..., None] * POINT_B

    pa2, pb2, e1g, e2g = _marked_pair(params.rotation)
    u2, v2, a = _tilde_chart(base_points, pa2, pb2, e1g, e2g)
    cos2, sin2 = np.cos(v2), np.sin(v2)
    circle1_points = (
        (E_VEC + pa2 + pb2)
        + cos2[..., None] * e1g
        + sin2[..., None] * e2g
    )
    a_poly = cong1_poly(u2)
    circle1_spheres = (
        a_poly[..., None] * T1_VEC
        + (1.0 - u2)[..., None] * (E_VEC + pa2)
        + (-u2 + 0.5 * u2 * u2)[..., None] * (E_VEC + pb2)
    )
    cong0 = u[..., None] * SPHERE_A + base_points
    cong1 = a_poly[..., None] * SPHERE_A + base_points / a[..., None]

    def sf(arr):
        return SectionField(grid, R42, arr)

    iso_tol = 1e-10
    base_const = sf(np.broadcast_to(SPHERE_A, grid.shape + (6,)).copy())
    f0 = validate_legendre(
        SubbundleField.from_sections([base_const, sf(base_points)]), legendre_tol=np.inf, iso_tol=iso_tol
    )
    fhat0 = validate_legendre(
        SubbundleField.from_sections([sf(circle0_spheres), sf(circle0_points)]),
        legendre_tol=np.inf,
        iso_tol=iso_tol,
    )
    fhat1 = validate_legendre(
        SubbundleField.from_sections([sf(circle1_points), sf(circle1_spheres)]),
        legendre_tol=np.inf,
        iso_tol=iso_tol,
    )
    legendre_ref = max(f0.legendre_residual, fhat0.legendre_residual, fhat1.legendre_residual)

    v_bundle = build_v(fhat0, fhat1)

    frame_sections = None
    if params.variant == "coincident":
        q = scale_poly(u)[..., None]
        frame_sections = [
            sf(cong0 / q),
            sf(cong1 / q),
            sf(circle0_spheres + 0.5 * cong0 / q),
            sf(circle1_points + 0.5 * cong1 / q),
        ]

    thresholds = _calibrate(grid, legendre_ref)
    scene = Scene(
        params=params,
        grid=grid,
        space=R42,
        point_a2=pa2,
        point_b2=pb2,
        e1g=e1g,
        e2g=e2g,
        base_points=sf(base_points),
        circle0_spheres=sf(circle0_spheres),
        circle0_points=sf(circle0_points),
        circle1_points=sf(circle1_points),
        circle1_spheres=sf(circle1_spheres),
        cong0=sf(cong0),
        cong1=sf(cong1),
        u2=u2,
        v2=v2,
        chart_scale=a,
        f0=f0,
        fhat0=fhat0,
        fhat1=fhat1,
        v_bundle=v_bundle,
        thresholds=thresholds,
        frame_sections=frame_sections,
    )
    return scene


def _calibrate(grid: Grid, legendre_ref: float) -> SceneThresholds:
    """Measure the discretization defect of closed-form flat bundles.

    The coincident-variant parallel frame and the quotient bundle of the base
    pair are analytically flat; their measured holonomy defects on this grid
    are pure stencil error and set the flat/non-flat decision scale.
    """
    u, v = grid.mesh()
    cosv, sinv = np.cos(v), np.sin(v)
    base_points = POINT_A + u[..., None] * (cosv[..., None] * E1_VEC + sinv[..., None] * E2_VEC) + (
        0.5 * u * u
    )[..., None] * POINT_B
    circle0_spheres = T1_VEC + cosv[..., None] * E1_VEC + sinv[..., None] * E2_VEC
    circle0_points = POINT_A + u[..., None] * E_VEC + (0.5 * u * u)[..., None] * POINT_B
    circle1_points = (E_VEC + POINT_A + POINT_B) + cosv[..., None] * E1_VEC + sinv[..., None] * E2_VEC
    cong0 = u[..., None] * SPHERE_A + base_points
    cong1 = cong1_poly(u)[..., None] * SPHERE_A + base_points
    q = scale_poly(u)[..., None]

    def sf(arr):
        return SectionField(grid, R42, arr)

    taus = [
        sf(cong0 / q),
        sf(cong1 / q),
        sf(circle0_spheres + 0.5 * cong0 / q),
        sf(circle1_points + 0.5 * cong1 / q),
    ]
    v_flat_ref = flatness_report(SubbundleField.from_sections(taus)).max_defect
    f0 = validate_legendre(
        SubbundleField.from_sections([sf(np.broadcast_to(SPHERE_A, grid.shape + (6,)).copy()), sf(base_points)]),
        legendre_tol=np.inf,
        iso_tol=1e-9,
    )
    fhat0 = validate_legendre(
        SubbundleField.from_sections([sf(circle0_spheres), sf(circle0_points)]),
        legendre_tol=np.inf,
        iso_tol=1e-9,
    )
    n_flat_ref = flatness_report(n_bundle(f0, fhat0)).max_defect
    return SceneThresholds(v_flat_ref, n_flat_ref, legendre_ref)


# ---------------------------------------------------------------------------
# Closed-form verification of the scene
# ---------------------------------------------------------------------------


def verify_section6(scene: Scene) -> dict:
    """Machine-precision checks of every defining identity, plus the verdicts.

    Closed-form identities use analytic derivatives (no grid error); the
    connection-level facts (quotient flatness, commutator dichotomy) use the
    calibrated thresholds.
    """
    from .ribaucour import ribaucour_verdict
    from .spaceform import commutator_sup, r_symmetry, solve_r_alpha

    grid = scene.grid
    act = grid.active
    u, v = grid.mesh()
    report = {}

    def null_residual(values):
        return float(np.max(np.abs(R42.inner(values, values)[act])))

    report["null"] = {
        "circle0_spheres": null_residual(scene.circle0_spheres.values),
        "circle0_points": null_residual(scene.circle0_points.values),
        "circle1_points": null_residual(scene.circle1_points.values),
        "circle1_spheres": null_residual(scene.circle1_spheres.values),
        "base_points": null_residual(scene.base_points.values),
        "cong0": null_residual(scene.cong0.values),
        "cong1": null_residual(scene.cong1.values),
    }

    # congruence sections from the invariant pairing formula
    def pairing_formula(k1, k2):
        a = R42.inner(k1, np.broadcast_to(SPHERE_A, k1.shape))
        b = R42.inner(k2, np.broadcast_to(SPHERE_A, k2.shape))
        return a[..., None] * k2 - b[..., None] * k1

    sig0_formula = pairing_formula(scene.circle0_spheres.values, scene.circle0_points.values)
    report["cong0_identity"] = float(
        np.max(np.linalg.norm((sig0_formula + scene.cong0.values)[act], axis=-1))
    )
    sig1_formula = pairing_formula(scene.circle1_points.values, scene.circle1_spheres.values)
    report["cong1_identity"] = float(
        np.max(np.linalg.norm((sig1_formula - scene.cong1.values)[act], axis=-1))
    )

    # first transform: d(point section)/du - alpha * point section, closed form
    dk02 = E_VEC + u[..., None] * POINT_B
    lhs = dk02 - scene.circle0_points.values / u[..., None]
    rhs = (-POINT_A + (0.5 * u * u)[..., None] * POINT_B) / u[..., None]
    report["transform0_relation"] = float(np.max(np.linalg.norm((lhs - rhs)[act], axis=-1)))
    dphi_du = (
        np.cos(v)[..., None] * E1_VEC + np.sin(v)[..., None] * E2_VEC + u[..., None] * POINT_B
    )
    rhs2 = dphi_du - scene.base_points.values / u[..., None]
    report["transform0_relation_vs_r"] = float(np.max(np.linalg.norm((lhs - rhs2)[act], axis=-1)))

    # second transform, in its own chart: d(point section)/dv2 with alpha = 0
    u2, v2 = scene.u2, scene.v2
    dk11 = -np.sin(v2)[..., None] * scene.e1g + np.cos(v2)[..., None] * scene.e2g
    tilde_points = scene.base_points.values / scene.chart_scale[..., None]
    dtilde_dv2 = u2[..., None] * (
        -np.sin(v2)[..., None] * scene.e1g + np.cos(v2)[..., None] * scene.e2g
    )
    report["transform1_relation"] = float(
        np.max(np.linalg.norm((dk11 - dtilde_dv2 / u2[..., None])[act], axis=-1))
    )

    # induced representative metric du^2 + u^2 dv^2
    dphi_dv = u[..., None] * (-np.sin(v)[..., None] * E1_VEC + np.cos(v)[..., None] * E2_VEC)
    report["metric"] = {
        "uu": float(np.max(np.abs((R42.inner(dphi_du, dphi_du) - 1.0)[act]))),
        "vv": float(np.max(np.abs((R42.inner(dphi_dv, dphi_dv) - u * u)[act]))),
        "uv": float(np.max(np.abs(R42.inner(dphi_du, dphi_dv)[act]))),
    }
    # same metric in the second chart
    dt_du2 = np.cos(v2)[..., None] * scene.e1g + np.sin(v2)[..., None] * scene.e2g + u2[..., None] * scene.point_b2
    report["metric_chart2_uu"] = float(np.max(np.abs((R42.inner(dt_du2, dt_du2) - 1.0)[act])))

    # endomorphism fields from the descended immersions
    ff0, ffhat0, ffhat1 = scene.immersions()
    rt0 = solve_r_alpha(ff0, ffhat0)
    rt1 = solve_r_alpha(ff0, ffhat1)
    g0 = ff0.induced_metric()
    sym0, _ = r_symmetry(rt0, g0, act)
    sym1, _ = r_symmetry(rt1, g0, act)
    report["r0_symmetric"] = sym0
    report["r1_symmetric"] = sym1
    report["r0_residual"] = rt0.residual
    report["r1_residual"] = rt1.residual
    report["commutator"] = commutator_sup(rt0, rt1, act)
    report["commutator_zero"] = report["commutator"] <= 1e-8

    th = scene.thresholds
    verdict0 = ribaucour_verdict(scene.f0, scene.fhat0, floor=th.n_flat, with_sections=False)
    verdict1 = ribaucour_verdict(scene.f0, scene.fhat1, floor=th.n_flat, with_sections=False)
    report["pair0"] = verdict0.is_pair
    report["pair1"] = verdict1.is_pair
    report["pair0_defect"] = verdict0.curvature.max_defect
    report["pair1_defect"] = verdict1.curvature.max_defect

    vrep = flatness_report(scene.v_bundle)
    report["v_defect"] = vrep.max_defect
    report["v_flat"] = vrep.max_defect <= th.v_flat
    report["variant"] = scene.params.variant
    report["consistent"] = report["commutator_zero"] == report["v_flat"] == scene.coincident
    if scene.coincident:
        sphere_section = scene.constant_section(SPHERE_A)
        report["base_sphere_parallel_residual"] = n_parallel_residual(
            scene.f0, scene.fhat0, sphere_section
        )
    return report


# ---------------------------------------------------------------------------
# Demoulin families of the coincident scene
# ---------------------------------------------------------------------------


@dataclass
class SphereMember:
    family: str
    theta: float
    vector: np.ndarray  # the constant enveloped sphere
    matches: str  # "base" | "second" | "other"


@dataclass
class Section6Demoulin:
    families: DemoulinFamilies
    alpha_spheres: list
    beta_spheres: list
    footnote_parallel_residual: float
    frame_agreement: float


def _match_constant(vec: np.ndarray) -> str:
    v = vec / np.linalg.norm(vec)
    for name, ref in (("base", SPHERE_A), ("second", SPHERE_B)):
        r = ref / np.linalg.norm(ref)
        if min(np.linalg.norm(v - r), np.linalg.norm(v + r)) < 1e-6:
            return name
    return "other"


def demoulin_section6(scene: Scene, check_transported_frame: bool = True) -> Section6Demoulin:
    """Families of the coincident scene from the closed-form parallel frame.

    Also verifies that the rescaled closed-form sections agree with a
    transported parallel frame up to constant recombination, and classifies
    the members enveloping a constant sphere in each family.
    """
    if not scene.coincident:
        raise GeometryInputError("Demoulin families require the coincident variant")
    from .grids import covariant_derivative, parallel_frame
    from .ribaucour import frame_coords_of_sections

    th = scene.thresholds
    families = demoulin(
        scene.v_bundle,
        scene.f0,
        scene.fhat0,
        scene.fhat1,
        frame_sections=scene.frame_sections,
        legendre_tol=th.legendre,
        iso_tol=1e-8,
    )
    # closed-form sections are parallel: their analytic differentials project
    # to zero in the fibers (finite differences cannot resolve this near the
    # blow-up of the rescaling, the closed forms can)
    worst = 0.0
    act = scene.grid.active
    derivs = scene.frame_derivatives()
    gram = scene.v_bundle.fiber_gram()
    for axis in range(scene.grid.k):
        for i, darr in enumerate(derivs[axis]):
            rhs = np.einsum(
                "...rn,n,...n->...r", scene.v_bundle.basis, scene.space.diag, darr
            )
            coeff = np.linalg.solve(gram, rhs[..., None])[..., 0]
            proj = np.einsum("...rn,...r->...n", scene.v_bundle.basis, coeff)
            scale = np.maximum(np.linalg.norm(darr, axis=-1), 1.0)
            worst = max(
                worst, float(np.max((np.linalg.norm(proj, axis=-1) / scale)[act]))
            )
    foot_resid = worst

    agreement = 0.0
    if check_transported_frame:
        res = parallel_frame(scene.v_bundle, flat_threshold=th.v_flat)
        for sec in scene.frame_sections:
            coords = frame_coords_of_sections(res.sections, sec.values)
            mean = coords[act].mean(axis=0)
            agreement = max(
                agreement,
                float(np.max(np.linalg.norm(coords[act] - mean, axis=-1)))
                / max(float(np.linalg.norm(mean)), 1e-300),
            )

    spheres = {}
    for fam in ("alpha", "beta"):
        members = families.constant_sphere_members(fam)
        spheres[fam] = [
            SphereMember(fam, th_, vec, _match_constant(vec)) for th_, vec in members
        ]
    return Section6Demoulin(
        families, spheres["alpha"], spheres["beta"], foot_resid, agreement
    )


# ---------------------------------------------------------------------------
# Point maps, stereographic projection, meridian export
# ---------------------------------------------------------------------------


def point_map_sections(member: LegendreField) -> SectionField:
    """The point-sphere section of a Legendre field: f ∩ t1-perp, unnormalized."""
    b = member.bundle.basis
    ip = np.einsum("...rn,n,n->...r", b, member.space.diag, T1_VEC)
    vec = ip[..., 1:2] * b[..., 0, :] - ip[..., 0:1] * b[..., 1, :]
    norm = np.linalg.norm(vec, axis=-1, keepdims=True)
    return SectionField(member.grid, member.space, vec / np.maximum(norm, 1e-300))


def descend_member(member: LegendreField) -> np.ndarray:
    """S^3 values of a member's point map (t0-coefficient normalization)."""
    vec = point_map_sections(member).values
    t0c = vec[..., 4:5]
    if float(np.min(np.abs(t0c[member.grid.active]))) < 1e-12:
        raise GeometryValueError("point map has a vanishing t0 component")
    return vec[..., :4] / np.where(np.abs(t0c) > 1e-300, t0c, 1.0)


def stereographic(points: np.ndarray, pole_tol: float = 1e-8):
    """Project S^3 from the pole -a4: (x, y, z) = (e1, e2, e) / (1 + a4).

    The base sphere goes to the plane z = 0 and the first circle to the axis
    x = y = 0.  Returns (xyz, valid) with pole-adjacent samples masked.
    """
    denom = 1.0 + points[..., 3]
    valid = np.abs(denom) > pole_tol
    safe = np.where(valid, denom, 1.0)
    xyz = np.stack(
        [points[..., 1] / safe, points[..., 2] / safe, points[..., 0] / safe], axis=-1
    )
    return xyz, valid


@dataclass
class MeridianCurve:
    family: str
    theta: float
    points: np.ndarray  # (N, 2): columns x, z


def member_projection(scene: Scene, member: LegendreField):
    pts = descend_member(member)
    return stereographic(pts)


def rotation_invariance_residual(scene: Scene, member: LegendreField, n_rot: int = 8) -> float:
    """Sup distance between the rotated projected point set and itself.

    Rotations about the z-axis by multiples of 2pi/n_rot correspond to shifts
    of the periodic axis when the resolution is divisible by n_rot.
    """
    if scene.grid.axes[1].n % n_rot != 0:
        raise GeometryInputError("periodic resolution must be divisible by n_rot")
    xyz, valid = member_projection(scene, member)
    act = scene.grid.active & valid
    shift = scene.grid.axes[1].n // n_rot
    worst = 0.0
    for k in range(1, n_rot + 1):
        ang = 2 * np.pi * k / n_rot
        ca, sa = np.cos(ang), np.sin(ang)
        rot = np.stack(
            [ca * xyz[..., 0] - sa * xyz[..., 1], sa * xyz[..., 0] + ca * xyz[..., 1], xyz[..., 2]],
            axis=-1,
        )
        shifted = np.roll(xyz, -k * shift, axis=1)
        shifted_ok = np.roll(act, -k * shift, axis=1)
        both = act & shifted_ok
        if not both.any():
            continue
        worst = max(worst, float(np.max(np.linalg.norm((rot - shifted)[both], axis=-1))))
    return worst


def export_meridians(
    scene: Scene,
    families: DemoulinFamilies,
    alpha_thetas,
    beta_thetas,
    out_dir: str | None = None,
    band: float = 1e-8,
) -> list[MeridianCurve]:
    """Meridian samples (y = 0, x >= 0 half-plane) of projected family members."""
    curves = []
    index = []
    for fam, thetas in (("alpha", alpha_thetas), ("beta", beta_thetas)):
        for th in thetas:
            member = families.member(fam, th)
            xyz, valid = member_projection(scene, member)
            act = scene.grid.active & valid
            sel = act & (np.abs(xyz[..., 1]) <= band) & (xyz[..., 0] >= -band)
            iu, iv = np.nonzero(sel)
            order = np.argsort(iu)
            pts = np.stack([xyz[..., 0][sel][order], xyz[..., 2][sel][order]], axis=-1)
            curves.append(MeridianCurve(fam, float(th), pts))
            index.append({"family": fam, "theta": float(th), "samples": int(pts.shape[0])})
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for i, c in enumerate(curves):
            path = os.path.join(out_dir, f"meridian_{c.family}_{i:03d}.csv")
            with open(path, "w", newline="\n") as fh:
                fh.write("family,theta,x,z\n")
                for x, z in c.points:
                    fh.write(f"{c.family},{c.theta:.17g},{x:.17g},{z:.17g}\n")
        with open(os.path.join(out_dir, "index.json"), "w", newline="\n") as fh:
            json.dump(index, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return curves


# ---------------------------------------------------------------------------
# A third transform for cube constructions: the concentric-sphere transform
# ---------------------------------------------------------------------------


def third_transform(scene: Scene, distance: float = 0.8) -> LegendreField:
    """Lift of the parallel surface at the given spherical distance.

    The parallel surface of the base sphere is another sphere; its r-tensor is
    a multiple of the identity, so the transform commutes with both circle
    transforms and every face bundle it spawns stays flat.
    """
    if not 0 < distance < np.pi:
        raise GeometryInputError("distance must lie in (0, pi)")
    grid = scene.grid
    u, v = grid.mesh()
    t_scale = (1.0 + 0.5 * u * u) / np.sqrt(2.0)
    c, s = np.cos(distance), np.sin(distance)
    phi2 = (
        (c / t_scale)[..., None] * scene.base_points.values
        + s * E_VEC
        + (1.0 - c) * T0_VEC
    )
    g = np.tan(distance / 2.0) * t_scale
    sigma2 = g[..., None] * SPHERE_A + scene.base_points.values
    bundle = SubbundleField.from_sections(
        [SectionField(grid, R42, phi2), SectionField(grid, R42, sigma2)]
    )
    return validate_legendre(bundle, legendre_tol=scene.thresholds.legendre, iso_tol=1e-8)


def transform_legendre(field: LegendreField, g: np.ndarray, **tols) -> LegendreField:
    """Apply an ambient pseudo-orthogonal map to a Legendre field."""
    basis = field.bundle.basis @ g.T
    bundle = SubbundleField.from_sections(
        [
            SectionField(field.grid, field.space, basis[..., i, :])
            for i in range(field.bundle.rank)
        ]
    )
    return validate_legendre(bundle, **tols)
