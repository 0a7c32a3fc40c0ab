"""The Bianchi cube: seven Legendre maps determine an eighth.

A cube configuration assigns null 2-planes to the vertices of a combinatorial
cube, null lines to its edges (intersections of adjacent vertex planes) and
(2,2)-planes to its faces (spans).  Given the base map f, three transforms
fhat_i and three cross maps f_i closing the quadrilaterals, the three
genericity hypotheses guarantee a unique simultaneous transform fhat of all
f_i, assembled from the lines shat_i cut out of the opposite faces.

Everything here operates on stacked plane arrays so the same code runs on a
single point (pure algebra in R^{3,2}) and on a whole grid (where the
differential claims are also checked).  The sign table on edges - inner
products of adjacent face normals - is a cocycle on vertices and is
normalized to +1 by at most three global flips, after which differences of
adjacent normals produce the twelve edge sections whose sums vanish around
every vertex.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, GeometryInputError, GeometryValueError
from .grids import Grid, SectionField, SubbundleField, differential_array
from .pseudo import MetricSpace, orthonormal_rows
from .ribaucour import LegendreField, validate_legendre

R32 = MetricSpace(3, 2)

# edges: name -> (face_a, face_b, vertex_a, vertex_b); the edge line is
# vertex_a ∩ vertex_b and its sign is (normal_a, normal_b)
EDGES = {
    "s0": ("V1", "V2", "f", "fhat0"),
    "s1": ("V2", "V0", "f", "fhat1"),
    "s2": ("V0", "V1", "f", "fhat2"),
    "sh0": ("Vh1", "Vh2", "f0", "fhat"),
    "sh1": ("Vh2", "Vh0", "f1", "fhat"),
    "sh2": ("Vh0", "Vh1", "f2", "fhat"),
    "sig01": ("V0", "Vh1", "f0", "fhat1"),
    "sig12": ("V1", "Vh2", "f1", "fhat2"),
    "sig20": ("V2", "Vh0", "f2", "fhat0"),
    "sighat01": ("V1", "Vh0", "fhat0", "f1"),
    "sighat12": ("V2", "Vh1", "fhat1", "f2"),
    "sighat20": ("V0", "Vh2", "fhat2", "f0"),
}


@dataclass
class CubeConfiguration:
    """Seven vertex planes over a common (possibly zero-dimensional) domain."""

    space: MetricSpace
    f: np.ndarray  # (*shape, 2, n) orthonormal rows
    fhat: list  # three transforms of f
    fi: list  # three cross maps
    grid: Grid | None = None

    @property
    def shape(self) -> tuple:
        return self.f.shape[:-2]

    @property
    def active(self):
        if self.grid is None:
            return np.ones(self.shape, dtype=bool)
        return self.grid.active

    def vertex(self, name: str) -> np.ndarray:
        if name == "f":
            return self.f
        kind, idx = name[:-1], int(name[-1])
        return {"fhat": self.fhat, "f": self.fi}[kind][idx]


def _onb(stack: np.ndarray, tol: float = 1e-9):
    u, s, vt = np.linalg.svd(stack, full_matrices=False)
    return vt, s


def plane_span(*planes) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis and singular values of the joint span."""
    return _onb(np.concatenate(planes, axis=-2))


def containment_margin(inner: np.ndarray, outer_basis: np.ndarray) -> np.ndarray:
    """max distance of inner basis rows from the outer span (0 when contained)."""
    proj = np.einsum("...rn,...kn->...rk", inner, outer_basis)
    back = np.einsum("...rk,...kn->...rn", proj, outer_basis)
    return np.max(np.linalg.norm(inner - back, axis=-1), axis=-1)


def intersection_line(a: np.ndarray, b: np.ndarray):
    """Common line of two subspace stacks plus rank margins.

    Returns (line, exist_margin, unique_margin): the intersection is exactly a
    line when exist_margin ~ 0 (automatic once the stacked rows exceed the
    ambient dimension) and unique_margin is bounded away from 0.
    """
    stacked = np.concatenate([a, -b], axis=-2)
    m = stacked.shape[-2]
    n = stacked.shape[-1]
    u, s, vt = np.linalg.svd(np.swapaxes(stacked, -1, -2), full_matrices=True)
    coeff = vt[..., -1, :]
    ra = a.shape[-2]
    line = np.einsum("...r,...rn->...n", coeff[..., :ra], a)
    norm = np.linalg.norm(line, axis=-1, keepdims=True)
    line = line / np.maximum(norm, 1e-300)
    if m > n:
        exist = np.zeros(s.shape[:-1])
        unique = s[..., -1]
    else:
        exist = s[..., -1]
        unique = s[..., -2]
    return line, exist, unique


def signature_counts(space: MetricSpace, basis: np.ndarray, tol: float = 1e-8):
    g = space.gram(basis)
    w = np.linalg.eigvalsh(g)
    scale = np.max(np.abs(w), axis=-1, keepdims=True)
    plus = np.sum(w > tol * scale, axis=-1)
    minus = np.sum(w < -tol * scale, axis=-1)
    return plus, minus


def check_genericity(cfg: CubeConfiguration, tol: float = 1e-6) -> dict:
    """Hypotheses: fhat_i not inside the opposite face; f_i pairwise transversal;
    f_i not inside the span of the other two."""
    act = cfg.active
    report = {"ok": True, "violations": []}
    for i in range(3):
        j, k = [x for x in range(3) if x != i]
        face, _ = plane_span(cfg.fhat[j], cfg.fhat[k])
        margin = containment_margin(cfg.fhat[i], face[..., :4, :])
        report[f"hyp7_margin_{i}"] = float(np.min(np.where(act, margin, np.inf)))
        if report[f"hyp7_margin_{i}"] <= tol:
            report["ok"] = False
            report["violations"].append(("hyp7", i, _worst_node(margin, act, smallest=True)))
    for i in range(3):
        for j in range(i + 1, 3):
            _, s = plane_span(cfg.fi[i], cfg.fi[j])
            margin = s[..., 3] / np.maximum(s[..., 0], 1e-300)
            key = f"hyp8_margin_{i}{j}"
            report[key] = float(np.min(np.where(act, margin, np.inf)))
            if report[key] <= tol:
                report["ok"] = False
                report["violations"].append(("hyp8", (i, j), _worst_node(margin, act, smallest=True)))
    for i in range(3):
        j, k = [x for x in range(3) if x != i]
        face, _ = plane_span(cfg.fi[j], cfg.fi[k])
        margin = containment_margin(cfg.fi[i], face[..., :4, :])
        report[f"hyp9_margin_{i}"] = float(np.min(np.where(act, margin, np.inf)))
        if report[f"hyp9_margin_{i}"] <= tol:
            report["ok"] = False
            report["violations"].append(("hyp9", i, _worst_node(margin, act, smallest=True)))
    return report


def _worst_node(field, act, smallest=False):
    masked = np.where(act, field, np.inf if smallest else -np.inf)
    idx = np.argmin(masked) if smallest else np.argmax(masked)
    return tuple(int(i) for i in np.unravel_index(idx, np.shape(field))) if np.ndim(field) else ()


def face_planes(cfg: CubeConfiguration, tol: float = 1e-6) -> dict:
    """Both presentations of each first-layer face, and the second layer.

    V^i is spanned by the two transforms it contains and equally by f with the
    cross map f_i; the presentations must agree, and every face carries a
    (2,2) metric.
    """
    act = cfg.active
    faces = {}
    for i in range(3):
        j, k = [x for x in range(3) if x != i]
        span_a, s_a = plane_span(cfg.fhat[j], cfg.fhat[k])
        span_b, s_b = plane_span(cfg.f, cfg.fi[i])
        a4, b4 = span_a[..., :4, :], span_b[..., :4, :]
        pa = np.einsum("...rn,...rm->...nm", a4, a4)
        pb = np.einsum("...rn,...rm->...nm", b4, b4)
        dist = np.linalg.norm(pa - pb, ord=2, axis=(-2, -1))
        worst = float(np.max(np.where(act, dist, 0.0)))
        if worst > tol:
            raise ConfigurationError(
                f"not a Bianchi quadrilateral: face {i} presentations differ by {worst:.3e}"
            )
        plus, minus = signature_counts(cfg.space, a4)
        if not np.all((plus[act] == 2) & (minus[act] == 2)):
            raise ConfigurationError(f"face {i} does not carry a (2,2) metric")
        faces[f"V{i}"] = a4
        faces[f"V{i}_presentation_gap"] = worst
    for i in range(3):
        j, k = [x for x in range(3) if x != i]
        span_c, s_c = plane_span(cfg.fi[j], cfg.fi[k])
        c4 = span_c[..., :4, :]
        plus, minus = signature_counts(cfg.space, c4)
        if not np.all((plus[act] == 2) & (minus[act] == 2)):
            raise ConfigurationError(f"opposite face {i} does not carry a (2,2) metric")
        faces[f"Vh{i}"] = c4
    return faces


@dataclass
class EighthVertex:
    plane: np.ndarray  # (*shape, 2, n)
    assembly_gap: float  # max projector distance between the three assemblies
    isotropy: float
    lines: list  # the three cut lines
    legendre: LegendreField | None = None


def eighth_vertex(cfg: CubeConfiguration, tol: float = 1e-6, legendre_tol: float | None = None) -> EighthVertex:
    """Cut shat_i = Vh^i ∩ f_i and assemble the eighth map from any pair."""
    gen = check_genericity(cfg, tol)
    if not gen["ok"]:
        raise ConfigurationError(f"genericity violated: {gen['violations']}")
    faces = face_planes(cfg, tol)
    act = cfg.active
    lines = []
    for i in range(3):
        line, smallest, second = intersection_line(faces[f"Vh{i}"], cfg.fi[i])
        if float(np.max(np.where(act, smallest, 0.0))) > tol or float(
            np.min(np.where(act, second, np.inf))
        ) < tol:
            raise ConfigurationError("hypothesis violated numerically: Vh^i ∩ f_i is not a line")
        lines.append(line)
    # containment shat_i ⊂ shat_j + shat_k
    for i in range(3):
        j, k = [x for x in range(3) if x != i]
        pair, _ = _onb(np.stack([lines[j], lines[k]], axis=-2))
        margin = containment_margin(lines[i][..., None, :], pair)
        if float(np.max(np.where(act, margin, 0.0))) > 1e2 * tol:
            raise ConfigurationError("cut lines are not coplanar")
    assemblies = []
    for i, j in ((0, 1), (1, 2), (2, 0)):
        basis, s = _onb(np.stack([lines[i], lines[j]], axis=-2))
        assemblies.append(basis[..., :2, :])
    gap = 0.0
    for a in range(3):
        b = (a + 1) % 3
        pa = np.einsum("...rn,...rm->...nm", assemblies[a], assemblies[a])
        pb = np.einsum("...rn,...rm->...nm", assemblies[b], assemblies[b])
        gap = max(gap, float(np.max(np.where(act, np.linalg.norm(pa - pb, ord=2, axis=(-2, -1)), 0.0))))
    plane = assemblies[0]
    gram = cfg.space.gram(plane)
    iso = float(np.max(np.where(act[..., None, None], np.abs(gram), 0.0)))
    legendre = None
    if cfg.grid is not None and legendre_tol is not None:
        bundle = SubbundleField(cfg.grid, cfg.space, plane)
        legendre = validate_legendre(bundle, legendre_tol, iso_tol=max(1e3 * iso, 1e-8))
    return EighthVertex(plane, gap, iso, lines, legendre)


# ---------------------------------------------------------------------------
# Normals, the sign cocycle, and the vertex sections
# ---------------------------------------------------------------------------


@dataclass
class NormalAssignment:
    normals: dict  # face name -> (*shape, n) unit normal inside the big span
    epsilon: dict  # edge name -> integer sign (after normalization all +1)
    raw_epsilon: dict
    flips: dict


def _face_normal(cfg, big_basis, big_gram, face_basis):
    """Unit normal to a rank-4 face inside the rank-5 span, metric-orthogonal."""
    # coordinates of the face inside the big span
    coords = np.einsum("...rn,...kn->...rk", face_basis, big_basis)  # (...,4,5)
    m = coords @ big_gram  # rows: metric pairings against big-span coordinates
    u, s, vt = np.linalg.svd(m, full_matrices=True)
    n_coords = vt[..., -1, :]
    normal = np.einsum("...k,...kn->...n", n_coords, big_basis)
    sq = np.einsum("...n,n,...n->...", normal, cfg.space.diag, normal)
    act = cfg.active
    if float(np.min(np.where(act, sq, 1.0))) <= 0:
        raise ConfigurationError("face normal is not spacelike")
    return normal / np.sqrt(np.where(act, sq, 1.0))[..., None]


def _smooth_field_signs(vec: np.ndarray, cfg: CubeConfiguration) -> np.ndarray:
    if cfg.grid is None:
        return vec
    from .ribaucour import _smooth_signs

    return _smooth_signs(vec, cfg.grid)


def compute_normals(cfg: CubeConfiguration, faces: dict, sign_seed=None) -> dict:
    """Unit normals to all six faces inside the span of the three transforms.

    The big span must carry a (3,2) metric.  Signs are raster-smoothed per
    face; the overall sign per face is seeded deterministically unless an rng
    is given (used by the cocycle property tests).
    """
    big, s = plane_span(cfg.fhat[0], cfg.fhat[1], cfg.fhat[2])
    act = cfg.active
    rel = s[..., 4] / np.maximum(s[..., 0], 1e-300)
    if float(np.min(np.where(act, rel, np.inf))) < 1e-8:
        raise ConfigurationError("transform span does not have rank 5")
    big = big[..., :5, :]
    plus, minus = signature_counts(cfg.space, big)
    if not np.all((plus[act] == 3) & (minus[act] == 2)):
        raise ConfigurationError("transform span does not carry a (3,2) metric")
    gram_big = cfg.space.gram(big)
    normals = {}
    ref = big[..., 0, :]
    for name in ("V0", "V1", "V2", "Vh0", "Vh1", "Vh2"):
        nu = _face_normal(cfg, big, gram_big, faces[name])
        nu = _smooth_field_signs(nu, cfg)
        if sign_seed is None:
            # deterministic: positive pairing with the first big-span vector at
            # the first active node, metric pairing as tie-break
            anchor = np.einsum("...n,n,...n->...", nu, cfg.space.diag, ref)
            first = tuple(np.argwhere(act)[0]) if cfg.grid is not None else ()
            if anchor[first] < 0:
                nu = -nu
        else:
            if sign_seed.integers(0, 2) == 1:
                nu = -nu
        normals[name] = nu
    return normals


def edge_signs(cfg: CubeConfiguration, normals: dict, tol: float = 1e-6) -> dict:
    """epsilon per edge: the inner product of adjacent face normals, rounded."""
    act = cfg.active
    eps = {}
    for edge, (fa, fb, _, _) in EDGES.items():
        ip = np.einsum("...n,n,...n->...", normals[fa], cfg.space.diag, normals[fb])
        dev = float(np.max(np.where(act, np.abs(np.abs(ip) - 1.0), 0.0)))
        if dev > tol:
            raise ConfigurationError(f"configuration degenerate: |({fa},{fb})| != 1 on edge {edge}")
        sign_field = np.sign(ip)
        if cfg.grid is not None and not np.all(sign_field[act] == sign_field[tuple(np.argwhere(act)[0])]):
            raise ConfigurationError(f"edge sign of {edge} is not constant across the grid")
        first = tuple(np.argwhere(act)[0]) if cfg.grid is not None else ()
        eps[edge] = int(sign_field[first])
    return eps


def _vertex_products(eps: dict) -> dict:
    return {
        "f": eps["s0"] * eps["s1"] * eps["s2"],
        "fhat": eps["sh0"] * eps["sh1"] * eps["sh2"],
        "fhat0": eps["s0"] * eps["sighat01"] * eps["sig20"],
        "fhat1": eps["s1"] * eps["sighat12"] * eps["sig01"],
        "fhat2": eps["s2"] * eps["sighat20"] * eps["sig12"],
        "f0": eps["sh0"] * eps["sig01"] * eps["sighat20"],
        "f1": eps["sh1"] * eps["sig12"] * eps["sighat01"],
        "f2": eps["sh2"] * eps["sig20"] * eps["sighat12"],
    }


def normalize_normals(cfg: CubeConfiguration, faces: dict, sign_seed=None) -> NormalAssignment:
    """Flip face normals until every edge sign is +1.

    The vertex products of the raw signs are a cocycle; if any is -1 the input
    configuration is broken.  Normalization fixes the three edges at the base
    vertex, then at the opposite vertex, then flips all second-layer normals
    at once if the mixed signs demand it.
    """
    normals = {k: v.copy() for k, v in compute_normals(cfg, faces, sign_seed).items()}
    raw = edge_signs(cfg, normals)
    products = _vertex_products(raw)
    if any(p != 1 for p in products.values()):
        raise ConfigurationError(f"cocycle violated (broken input): {products}")
    flips = {name: 1 for name in normals}

    def flip(name):
        normals[name] = -normals[name]
        flips[name] *= -1

    eps = dict(raw)

    def recompute():
        eps.clear()
        eps.update(edge_signs(cfg, normals))

    # base vertex: edges s0 (V1,V2), s1 (V2,V0), s2 (V0,V1)
    svec = (eps["s0"], eps["s1"], eps["s2"])
    if svec != (1, 1, 1):
        face = {(1, -1, -1): "V0", (-1, 1, -1): "V1", (-1, -1, 1): "V2"}.get(svec)
        if face is None:
            raise ConfigurationError("cocycle violated at the base vertex")
        flip(face)
        recompute()
    # opposite vertex: edges sh_i
    shvec = (eps["sh0"], eps["sh1"], eps["sh2"])
    if shvec != (1, 1, 1):
        face = {(1, -1, -1): "Vh0", (-1, 1, -1): "Vh1", (-1, -1, 1): "Vh2"}.get(shvec)
        if face is None:
            raise ConfigurationError("cocycle violated at the opposite vertex")
        flip(face)
        recompute()
    # cross vertex f1: edges sig12 (V1,Vh2) and sighat01 (V1,Vh0); flipping the
    # whole second layer toggles every mixed edge
    if eps["sig12"] != 1:
        for name in ("Vh0", "Vh1", "Vh2"):
            flip(name)
        recompute()
    if any(v != 1 for v in eps.values()):
        raise ConfigurationError(f"sign normalization failed: {eps}")
    return NormalAssignment(normals, eps, raw, flips)


@dataclass
class VertexSections:
    sections: dict  # edge name -> (*shape, n)
    membership_residual: float
    vertex_sum_residual: float


def vertex_sections(cfg: CubeConfiguration, assignment: NormalAssignment, tol: float = 1e-6) -> VertexSections:
    """The twelve differences of adjacent normals, one per edge.

    Each difference lies in its edge congruence (the intersection of the two
    vertex planes of the edge); the four families of vertex sums vanish by
    telescoping, which is verified rather than assumed.
    """
    nu = assignment.normals
    secs = {
        "s1": nu["V0"] - nu["V2"],
        "sighat20": nu["V0"] - nu["Vh2"],
        "sh1": nu["Vh0"] - nu["Vh2"],
        "sig20": nu["Vh0"] - nu["V2"],
        "s2": nu["V1"] - nu["V0"],
        "sighat01": nu["V1"] - nu["Vh0"],
        "sh2": nu["Vh1"] - nu["Vh0"],
        "sig01": nu["Vh1"] - nu["V0"],
        "s0": nu["V2"] - nu["V1"],
        "sighat12": nu["V2"] - nu["Vh1"],
        "sh0": nu["Vh2"] - nu["Vh1"],
        "sig12": nu["Vh2"] - nu["V1"],
    }
    act = cfg.active
    worst_membership = 0.0
    for edge, arr in secs.items():
        _, _, va, vb = EDGES[edge]
        if "fhat" in (va, vb) and any(v == "fhat" for v in (va, vb)):
            # edges at the eighth vertex need its plane; check against the cut
            # line membership through the opposite-face construction instead
            a = cfg.vertex(va) if va != "fhat" else None
            b = cfg.vertex(vb) if vb != "fhat" else None
            known = a if a is not None else b
            idx = int((va if va != "fhat" else vb)[-1])
            j, k = [x for x in range(3) if x != idx]
            face, _ = plane_span(cfg.fi[j], cfg.fi[k])
            line, _, _ = intersection_line(face[..., :4, :], cfg.fi[idx])
        else:
            line, smallest, second = intersection_line(cfg.vertex(va), cfg.vertex(vb))
        norm = np.linalg.norm(arr, axis=-1)
        if float(np.min(np.where(act, norm, np.inf))) < 1e-10:
            raise GeometryValueError(f"edge degenerate: section of {edge} vanishes")
        coeff = np.einsum("...n,...n->...", arr, line)
        resid = np.linalg.norm(arr - coeff[..., None] * line, axis=-1) / np.maximum(norm, 1e-300)
        worst_membership = max(worst_membership, float(np.max(np.where(act, resid, 0.0))))
    sums = [
        secs["s0"] + secs["s1"] + secs["s2"],
        secs["sh0"] + secs["sh1"] + secs["sh2"],
    ]
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        sums.append(secs[f"sig{k}{i}"] + secs[f"s{i}"] + secs[f"sighat{i}{j}"])
        sums.append(secs[f"sighat{k}{i}"] + secs[f"sh{i}"] + secs[f"sig{i}{j}"])
    worst_sum = max(float(np.max(np.where(act, np.linalg.norm(s, axis=-1), 0.0))) for s in sums)
    if worst_membership > tol:
        raise ConfigurationError(f"edge sections leave their congruences by {worst_membership:.3e}")
    return VertexSections(secs, worst_membership, worst_sum)


def verify_eq13(cfg: CubeConfiguration, sections: VertexSections) -> dict:
    """The closing computation: (d shat-section_0, shat-section_1) both ways.

    The first rearrangement is exact by linearity of the difference stencils;
    subsequent substitutions drop pairings that vanish only up to the
    discretization error, so their agreement is reported at that scale.
    """
    if cfg.grid is None:
        raise GeometryInputError("grid required")
    g = cfg.grid
    act = cfg.active
    s = sections.sections

    def d(arr, axis):
        out, _ = differential_array(g, arr, axis)
        return np.nan_to_num(out)

    def ip(x, y):
        return np.einsum("...n,n,...n->...", x, cfg.space.diag, y)

    out = {"direct": 0.0, "chain_rearranged": 0.0, "chain_substituted": 0.0, "final_form": 0.0,
           "rearranged_gap": 0.0, "substituted_gap": 0.0}
    for axis in range(g.k):
        direct = ip(d(-(s["sig01"] + s["sighat20"]), axis), -(s["sig12"] + s["sighat01"]))
        # shat0 = -(sig01 + sighat20), shat1 = -(sig12 + sighat01): recompute
        # the left side from the stored normals difference as the primary value
        shat0 = s["sh0"]
        shat1 = s["sh1"]
        primary = ip(d(shat0, axis), shat1)
        chain10 = ip(d(s["sig01"], axis) + d(s["sighat20"], axis), s["sig12"] + s["sighat01"])
        chain11 = (
            ip(d(s["sig01"], axis), s["sig12"])
            + ip(d(s["sig01"], axis), s["sighat01"])
            + ip(d(s["sighat20"], axis), s["sighat01"])
        )
        final = ip(d(s["sig01"], axis), s["s1"]) + ip(d(s["s0"], axis), s["sighat01"])
        out["direct"] = max(out["direct"], float(np.max(np.abs(primary[act]))))
        out["chain_rearranged"] = max(out["chain_rearranged"], float(np.max(np.abs(chain10[act]))))
        out["chain_substituted"] = max(out["chain_substituted"], float(np.max(np.abs(chain11[act]))))
        out["final_form"] = max(out["final_form"], float(np.max(np.abs(final[act]))))
        out["rearranged_gap"] = max(
            out["rearranged_gap"], float(np.max(np.abs((primary - chain10)[act])))
        )
        out["substituted_gap"] = max(
            out["substituted_gap"], float(np.max(np.abs((primary - chain11)[act])))
        )
    return out


# ---------------------------------------------------------------------------
# Configuration builders
# ---------------------------------------------------------------------------


def _random_null_plane(space: MetricSpace, rng: np.random.Generator) -> np.ndarray:
    ref = np.zeros((2, space.dim))
    ref[0, 0] = ref[0, space.p] = 1.0
    ref[1, 1] = ref[1, space.p + 1] = 1.0
    g = space.random_orthogonal(rng, scale=0.6)
    basis, rank = orthonormal_rows(ref @ g.T, 1e-10)
    if rank != 2:
        raise GeometryValueError("failed to build a null plane")
    return basis


def _random_null_vector_in(space, basis_rows, rng, avoid=None, tries=40):
    """Random null vector in the span of the rows, optionally not in `avoid`."""
    for _ in range(tries):
        x = rng.normal(size=basis_rows.shape[0]) @ basis_rows
        y = rng.normal(size=basis_rows.shape[0]) @ basis_rows
        a = space.inner(y, y)
        b = space.inner(x, y)
        c = space.inner(x, x)
        if abs(a) < 1e-12:
            w = y if abs(c) > 1e-10 else x + y
        else:
            disc = b * b - a * c
            if disc < 0:
                continue
            t = (-b + np.sqrt(disc)) / a
            w = x + t * y
        n = np.linalg.norm(w)
        if n < 1e-8 or abs(space.inner(w, w)) > 1e-9 * n * n:
            continue
        w = w / n
        if avoid is not None:
            proj = avoid.T @ (avoid @ w)
            if np.linalg.norm(w - proj) < 1e-3:
                continue
        return w
    raise GeometryValueError("no admissible null vector found")


def _ruling_member_through_plane(space, face_basis, anchor_plane, psi, rng=None):
    """A member of the ruling of a (2,2) face through the anchor's family."""
    from .ribaucour import _pseudo_onb_transform
    from .pseudo import Bivector, bivector_plane, hodge_star, wedge, LAMBDA2_DIAG, selfdual_projector

    std22 = MetricSpace(2, 2)
    gram = space.gram(face_basis)
    onb = _pseudo_onb_transform(gram)
    coords = np.linalg.lstsq(face_basis.T, anchor_plane.T, rcond=None)[0].T  # (2,4)
    y = coords @ np.linalg.inv(onb).T
    eta = wedge(std22, y[0], y[1])
    star = hodge_star(eta, +1).components
    orient = +1 if np.linalg.norm(star - eta.components) <= np.linalg.norm(star + eta.components) else -1
    proj_sd, _ = selfdual_projector(orient)
    basis, rank = orthonormal_rows(proj_sd, 1e-10)
    g2 = basis @ np.diag(LAMBDA2_DIAG) @ basis.T
    wv, qv = np.linalg.eigh(g2)
    order = np.argsort(-wv)
    wv, qv = wv[order], qv[:, order]
    e_row = basis.T @ (qv[:, 0] / np.sqrt(wv[0]))
    f1_row = basis.T @ (qv[:, 1] / np.sqrt(-wv[1]))
    f2_row = basis.T @ (qv[:, 2] / np.sqrt(-wv[2]))
    comp = eta.components if np.sum(eta.components * LAMBDA2_DIAG * e_row) >= 0 else -eta.components
    c1, c2 = -np.sum(comp * LAMBDA2_DIAG * f1_row), -np.sum(comp * LAMBDA2_DIAG * f2_row)
    psi0 = np.arctan2(c2, c1)
    eta_new = e_row + np.cos(psi0 + psi) * f1_row + np.sin(psi0 + psi) * f2_row
    plane_y = bivector_plane(Bivector(eta_new, std22))
    plane_coords = plane_y @ onb.T
    rows = plane_coords @ face_basis
    out, rank = orthonormal_rows(rows, 1e-10)
    if rank != 2:
        raise GeometryValueError("ruling member extraction failed")
    return out


def random_single_node_config(
    rng: np.random.Generator, space: MetricSpace = R32, max_attempts: int = 60
) -> CubeConfiguration:
    """Random admissible pointwise configuration: three transforms of a random
    null plane plus generic ruling members of the three faces, rejection
    sampled against the genericity hypotheses."""
    for _ in range(max_attempts):
        try:
            f = _random_null_plane(space, rng)
            for _ in range(20):
                angles = np.sort(rng.uniform(0, np.pi, size=3))
                gaps = np.diff(np.concatenate([angles, [angles[0] + np.pi]]))
                if gaps.min() > 0.25:
                    break
            sigmas = [np.cos(a) * f[0] + np.sin(a) * f[1] for a in angles]
            fhats = []
            for sig in sigmas:
                perp_con = (sig * space.diag)[None, :]
                u, s, vt = np.linalg.svd(perp_con, full_matrices=True)
                perp = vt[1:]  # 4-dim: sigma-perp
                w = _random_null_vector_in(space, perp, rng, avoid=f)
                basis, rank = orthonormal_rows(np.stack([sig, w]), 1e-10)
                if rank != 2:
                    raise GeometryValueError("degenerate transform")
                gram = space.gram(basis)
                if np.max(np.abs(gram)) > 1e-9:
                    raise GeometryValueError("transform plane not isotropic")
                fhats.append(basis)
            fis = []
            for i in range(3):
                j, k = [x for x in range(3) if x != i]
                face, s = plane_span(fhats[j], fhats[k])
                if s[..., 3] / s[..., 0] < 1e-6:
                    raise GeometryValueError("face degenerate")
                psi = rng.uniform(0.4, 2 * np.pi - 0.4)
                fis.append(_ruling_member_through_plane(space, face[..., :4, :], f, psi))
            cfg = CubeConfiguration(space, f, fhats, fis)
            if not check_genericity(cfg)["ok"]:
                continue
            compute_normals(cfg, face_planes(cfg))
            return cfg
        except (GeometryValueError, ConfigurationError):
            continue
    raise GeometryValueError("failed to sample an admissible configuration")


def degenerate_single_family_config(rng: np.random.Generator, space: MetricSpace = R32) -> CubeConfiguration:
    """All three transforms from one ruling: the first genericity hypothesis fails."""
    for _ in range(60):
        try:
            f = _random_null_plane(space, rng)
            sig = np.cos(0.3) * f[0] + np.sin(0.3) * f[1]
            perp = np.linalg.svd((sig * space.diag)[None, :], full_matrices=True)[2][1:]
            w = _random_null_vector_in(space, perp, rng, avoid=f)
            fhat0, _ = orthonormal_rows(np.stack([sig, w]), 1e-10)
            sig1 = np.cos(1.2) * f[0] + np.sin(1.2) * f[1]
            perp1 = np.linalg.svd((sig1 * space.diag)[None, :], full_matrices=True)[2][1:]
            w1 = _random_null_vector_in(space, perp1, rng, avoid=f)
            fhat1, _ = orthonormal_rows(np.stack([sig1, w1]), 1e-10)
            face, s = plane_span(fhat0, fhat1)
            if s[..., 3] / s[..., 0] < 1e-6:
                continue
            # third transform inside the same family: the other ruling member
            # through a different line of the face
            fhat2 = _ruling_member_through_plane(space, face[..., :4, :], fhat0, 1.1)
            fis = []
            for i in range(3):
                fis.append(_ruling_member_through_plane(space, face[..., :4, :], f, 0.7 + 0.9 * i))
            return CubeConfiguration(space, f, [fhat0, fhat1, fhat2], fis)
        except (GeometryValueError, ConfigurationError):
            continue
    raise GeometryValueError("failed to sample a degenerate configuration")


def pipeline_cube(scene, distance: float = 2.2, thetas=(0.7, 1.1, 0.5)) -> CubeConfiguration:
    """Grid-mode cube from the worked example: the two circle transforms plus
    the concentric-sphere transform, with cross maps from the face rulings.

    The sphere distance keeps the third congruence coefficient above both
    circle-transform coefficients on the whole grid, so every face bundle
    stays uniformly transversal.
    """
    from .dupin import third_transform
    from .ribaucour import build_v, demoulin

    if not scene.coincident:
        raise GeometryInputError("the pipeline cube needs the coincident scene")
    fhat2 = third_transform(scene, distance)
    fhats = [scene.fhat0, scene.fhat1, fhat2]
    fis = []
    for i, theta in enumerate(thetas):
        j, k = [x for x in range(3) if x != i]
        v_face = build_v(fhats[j], fhats[k])
        fam = demoulin(
            v_face,
            scene.f0,
            fhats[j],
            fhats[k],
            flat_threshold=None,
            legendre_tol=scene.thresholds.legendre,
            iso_tol=1e-6,
        )
        base_theta = fam.tags["f0"][1]
        member = fam.member("alpha", (base_theta + theta) % np.pi)
        fis.append(member.bundle.basis)
    cfg = CubeConfiguration(
        scene.space, scene.f0.bundle.basis, [fh.bundle.basis for fh in fhats], fis, grid=scene.grid
    )
    return cfg
