"""Discretized parameter domains and metric connections on subbundle fields.

A Grid is a rectangular lattice (1 to 3 axes, each optionally periodic) with
optional excluded bands used to mask singularities.  Fields store one vector
or one subspace per active node as stacked numpy arrays.

Connections are discretized as step maps between adjacent fibers: metric
orthoprojection followed by an indefinite-metric polar correction, which makes
every step an exact isometry of fibers.  Curvature is measured as the
operator-norm deviation of plaquette holonomies from the identity, per unit
cell area; flat bundles get parallel frames by transporting a root fiber
basis along a deterministic spanning tree, with non-tree edges (including
periodic wrap-around) checked for closure.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateProjectionError,
    DimensionMismatchError,
    FlatnessError,
    GeometryInputError,
    GeometryValueError,
    MonodromyError,
    StencilBlockedError,
)
from .pseudo import MetricSpace, orthonormal_rows


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    n: int
    periodic: bool = False

    def __post_init__(self):
        if self.n < 3:
            raise GeometryInputError("axis needs at least 3 samples")
        if not self.hi > self.lo:
            raise GeometryInputError("axis needs hi > lo")

    @property
    def coords(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n, endpoint=not self.periodic)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n if self.periodic else self.n - 1)

    def refined(self, factor: int = 2) -> "Axis":
        n = self.n * factor if self.periodic else (self.n - 1) * factor + 1
        return Axis(self.lo, self.hi, n, self.periodic)


class Grid:
    """Rectangular lattice with optional excluded open bands per axis."""

    def __init__(self, axes, excluded=()):
        axes = tuple(axes)
        if not 1 <= len(axes) <= 3:
            raise GeometryInputError("grids support 1 to 3 axes")
        self.axes = axes
        self.k = len(axes)
        self.excluded = tuple(excluded)
        self.shape = tuple(ax.n for ax in axes)
        self.coords = [ax.coords for ax in axes]
        self.spacing = [ax.spacing for ax in axes]
        active = np.ones(self.shape, dtype=bool)
        for axis_idx, lo, hi in self.excluded:
            c = self.coords[axis_idx]
            band = (c > lo) & (c < hi)
            if band.all():
                raise GeometryInputError("excluded zone covers an entire axis")
            sl = [slice(None)] * self.k
            sl[axis_idx] = band
            active[tuple(sl)] = False
        self.active = active
        if not active.any():
            raise GeometryInputError("no active nodes remain")

    def refined(self, factor: int = 2) -> "Grid":
        return Grid([ax.refined(factor) for ax in self.axes], self.excluded)

    def coarsened(self):
        """Every-other-node subgrid and the index slices selecting it.

        Periodic axes need even resolution; non-periodic axes keep nodes
        0, 2, ... and shorten the range accordingly.
        """
        axes = []
        slices = []
        for ax in self.axes:
            if ax.periodic:
                if ax.n % 2 != 0:
                    raise GeometryInputError("coarsening a periodic axis needs even n")
                axes.append(Axis(ax.lo, ax.hi, ax.n // 2, True))
            else:
                m = (ax.n + 1) // 2
                axes.append(Axis(ax.lo, ax.lo + (m - 1) * 2 * ax.spacing, m, False))
            slices.append(slice(0, 2 * (axes[-1].n - 1) + 1 if not ax.periodic else None, 2))
        return Grid(axes, self.excluded), tuple(slices)

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays broadcast over the full grid shape."""
        return list(np.meshgrid(*self.coords, indexing="ij"))

    def node_coords(self, node) -> tuple[float, ...]:
        return tuple(self.coords[a][node[a]] for a in range(self.k))

    def shift_index(self, node, axis: int, offset: int):
        """Neighbor index along an axis, or None when it leaves the lattice."""
        idx = list(node)
        j = idx[axis] + offset
        ax = self.axes[axis]
        if ax.periodic:
            idx[axis] = j % ax.n
        else:
            if j < 0 or j >= ax.n:
                return None
            idx[axis] = j
        return tuple(idx)

    def is_active(self, node) -> bool:
        return bool(self.active[tuple(node)])

    def active_nodes(self):
        return [tuple(ix) for ix in np.argwhere(self.active)]


def _shifted(values: np.ndarray, active: np.ndarray, axis: int, offset: int, periodic: bool):
    """Roll values/active along a grid axis; out-of-range slots become inactive."""
    rolled = np.roll(values, -offset, axis=axis)
    valid = np.roll(active, -offset, axis=axis)
    if not periodic:
        n = values.shape[axis]
        sl = [slice(None)] * values.ndim
        if offset > 0:
            sl[axis] = slice(n - offset, n)
        else:
            sl[axis] = slice(0, -offset)
        vsl = tuple(sl[: active.ndim])
        valid = valid.copy()
        valid[vsl] = False
    return rolled, valid


class SectionField:
    """One ambient vector per grid node (trailing axis = coordinates)."""

    def __init__(self, grid: Grid, space: MetricSpace, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape + (space.dim,):
            raise DimensionMismatchError(
                f"values shape {values.shape} != {grid.shape + (space.dim,)}"
            )
        self.grid = grid
        self.space = space
        self.values = values

    @classmethod
    def from_function(cls, grid: Grid, space: MetricSpace, fn) -> "SectionField":
        mesh = grid.mesh()
        return cls(grid, space, np.asarray(fn(*mesh), dtype=float))

    def value(self, node) -> np.ndarray:
        return self.values[tuple(node)]

    def map(self, fn) -> "SectionField":
        return SectionField(self.grid, self.space, fn(self.values))


def differential_array(grid: Grid, values: np.ndarray, axis: int):
    """Second-order finite difference along a grid axis.

    Central differences wherever both neighbors exist and are active; one-sided
    three-point stencils at boundaries and at mask edges.  Returns (darr,
    blocked) where blocked marks active nodes whose every stencil runs into an
    excluded zone.
    """
    ax = grid.axes[axis]
    h = grid.spacing[axis]
    k = grid.k
    extra = values.ndim - k
    act = grid.active.reshape(grid.shape + (1,) * extra)

    vp1, ap1 = _shifted(values, act, axis, +1, ax.periodic)
    vm1, am1 = _shifted(values, act, axis, -1, ax.periodic)
    vp2, ap2 = _shifted(values, act, axis, +2, ax.periodic)
    vm2, am2 = _shifted(values, act, axis, -2, ax.periodic)

    central = (vp1 - vm1) / (2 * h)
    fwd = (-3 * values + 4 * vp1 - vp2) / (2 * h)
    bwd = (3 * values - 4 * vm1 + vm2) / (2 * h)

    can_central = ap1 & am1
    can_fwd = ap1 & ap2
    can_bwd = am1 & am2

    out = np.where(can_central, central, np.where(can_fwd, fwd, bwd))
    blocked = act & ~(can_central | can_fwd | can_bwd)
    out = np.where(blocked, np.nan, out)
    blocked_nodes = blocked[(Ellipsis,) + (0,) * extra] if extra else blocked
    return out, blocked_nodes


def differential(fieldv: SectionField, axis: int, node=None):
    """Differential of a section field; whole-grid array or a single node."""
    darr, blocked = differential_array(fieldv.grid, fieldv.values, axis)
    if node is None:
        return SectionField(fieldv.grid, fieldv.space, darr)
    node = tuple(node)
    if not fieldv.grid.is_active(node):
        raise StencilBlockedError(f"node {node} is excluded")
    if blocked[node]:
        raise StencilBlockedError(f"stencil blocked at node {node}")
    return darr[node]


class SubbundleField:
    """Constant-rank field of subspaces; per-node Euclidean-orthonormal bases.

    The stored basis is a gauge choice: everything computed from it
    (projections, step isometries, holonomy defects) is invariant under
    node-wise orthogonal changes of basis.
    """

    def __init__(self, grid: Grid, space: MetricSpace, basis: np.ndarray, rank_tol: float = 1e-9):
        basis = np.asarray(basis, dtype=float)
        if basis.ndim != grid.k + 2 or basis.shape[: grid.k] != grid.shape or basis.shape[-1] != space.dim:
            raise DimensionMismatchError("basis must have shape (*grid.shape, r, dim)")
        r = basis.shape[-2]
        # keep batched linear algebra well-conditioned at masked nodes
        filler = np.eye(space.dim)[:r]
        basis = np.where(grid.active[..., None, None], basis, filler)
        self.grid = grid
        self.space = space
        self.basis = basis
        self.rank = r
        self.rank_tol = rank_tol

    @classmethod
    def from_sections(cls, sections, rank_tol: float = 1e-9) -> "SubbundleField":
        """Span of section fields, nodewise re-orthonormalized (rank must be constant)."""
        grid = sections[0].grid
        space = sections[0].space
        raw = np.stack([s.values for s in sections], axis=-2)
        u, s, vt = np.linalg.svd(raw, full_matrices=False)
        smax = s[..., :1]
        act = grid.active
        ranks = np.sum(s > rank_tol * np.where(smax > 0, smax, 1.0), axis=-1)
        r = int(np.max(ranks[act])) if act.any() else 0
        if act.any() and not np.all(ranks[act] == r):
            raise GeometryValueError("rank is not constant across active nodes")
        return cls(grid, space, vt[..., :r, :], rank_tol)

    def plane_at(self, node) -> np.ndarray:
        return self.basis[tuple(node)]

    def fiber_gram(self) -> np.ndarray:
        return self.space.gram(self.basis)

    def contains_residual(self, section: SectionField) -> np.ndarray:
        """Per-node Euclidean distance from the section to the fiber."""
        v = section.values
        coeff = np.einsum("...rn,...n->...r", self.basis, v)
        proj = np.einsum("...rn,...r->...n", self.basis, coeff)
        return np.linalg.norm(v - proj, axis=-1)

    def subsampled(self) -> "SubbundleField":
        """The same plane field on the every-other-node subgrid."""
        coarse, slices = self.grid.coarsened()
        return SubbundleField(coarse, self.space, self.basis[slices], self.rank_tol)

    def raw_step_field(self, axis: int):
        """Metric projection coords map fiber(x) -> fiber(x + e_axis).

        Returns (steps, valid): steps[x] solves the Gram system of the target
        fiber against the source basis vectors.
        """
        ax = self.grid.axes[axis]
        act = self.grid.active
        b_here = self.basis
        b_next, valid_next = _shifted(self.basis, act.reshape(act.shape + (1, 1)), axis, +1, ax.periodic)
        gram_next = self.space.gram(b_next)
        cross = np.einsum("...rn,n,...sn->...rs", b_next, self.space.diag, b_here)
        try:
            steps = np.linalg.solve(gram_next, cross)
        except np.linalg.LinAlgError as exc:
            raise DegenerateProjectionError("degenerate fiber metric along axis") from exc
        valid = act & valid_next[..., 0, 0]
        return steps, valid


def covariant_derivative(bundle: SubbundleField, section: SectionField, axis: int, node=None):
    """Metric connection: orthoproject the differential back into the fibers."""
    resid = bundle.contains_residual(section)
    act = bundle.grid.active
    scale = max(1.0, float(np.max(np.linalg.norm(section.values[act], axis=-1))))
    if float(np.max(resid[act])) > 1e-6 * scale:
        raise GeometryValueError("not a section: values leave the bundle")
    darr, blocked = differential_array(bundle.grid, section.values, axis)
    gram = bundle.fiber_gram()
    rhs = np.einsum("...rn,n,...n->...r", bundle.basis, bundle.space.diag, np.nan_to_num(darr))
    try:
        coeff = np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise DegenerateProjectionError("degenerate fiber metric") from exc
    proj = np.einsum("...rn,...r->...n", bundle.basis, coeff)
    proj = np.where(blocked[..., None], np.nan, proj)
    if node is None:
        return SectionField(bundle.grid, bundle.space, proj)
    node = tuple(node)
    if blocked[node]:
        raise StencilBlockedError(f"stencil blocked at node {node}")
    return proj[node]


def _pseudo_onb_coords(gram: np.ndarray):
    """Per-fiber coordinate change C with C^T G C = diag(J), plus signatures.

    Returns (c, c_inv, j) with j the diagonal sign vector, plus axes first.
    """
    w, q = np.linalg.eigh(gram)
    order = np.argsort(-w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    q = np.take_along_axis(q, order[..., None, :], axis=-1)
    absw = np.abs(w)
    if float(np.min(absw)) <= 0:
        raise GeometryValueError("degenerate fiber metric")
    c = q * (1.0 / np.sqrt(absw))[..., None, :]
    c_inv = np.sqrt(absw)[..., :, None] * np.swapaxes(q, -1, -2)
    return c, c_inv, np.sign(w)


def _indefinite_polar(x: np.ndarray, j: np.ndarray, iters: int = 60, tol: float = 1e-14):
    """J-orthogonal polar factor via the Newton iteration X <- (X + J X^{-T} J)/2."""
    prev = np.inf
    for _ in range(iters):
        xinv_t = np.swapaxes(np.linalg.inv(x), -1, -2)
        xn = 0.5 * (x + j[..., :, None] * xinv_t * j[..., None, :])
        err = float(np.nanmax(np.abs(xn - x)))
        x = xn
        if err < tol or (err < 1e-9 and err >= 0.5 * prev):
            break  # converged, or stalled at the rounding floor
        prev = err
    else:
        raise GeometryValueError("polar correction failed to converge")
    return x


def step_isometries(bundle, axis: int):
    """Polar-corrected step maps: exact fiber isometries per lattice edge.

    The raw projection step is conjugated into pseudo-orthonormal fiber
    coordinates (where the metric is diag ±1), replaced by its indefinite
    polar factor, and conjugated back, so every step preserves fiber inner
    products to iteration accuracy even when the restricted metric is badly
    conditioned.
    """
    steps, valid = bundle.raw_step_field(axis)
    gram = bundle.fiber_gram()
    ax = bundle.grid.axes[axis]
    act = bundle.grid.active
    eye = np.broadcast_to(np.eye(bundle.rank), steps.shape)
    c, c_inv, j = _pseudo_onb_coords(gram)
    c_next, _ = _shifted(c, act.reshape(act.shape + (1, 1)), axis, +1, ax.periodic)
    cinv_next, _ = _shifted(c_inv, act.reshape(act.shape + (1, 1)), axis, +1, ax.periodic)
    j_root = j[tuple(np.argwhere(act)[0])]
    if not np.all(j[act] == j_root):
        raise GeometryValueError("fiber signature varies across the grid")
    m_p = cinv_next @ np.where(valid[..., None, None], steps, eye) @ c
    w = _indefinite_polar(np.where(valid[..., None, None], m_p, eye), j)
    iso = c_next @ w @ c_inv
    return np.where(valid[..., None, None], iso, eye), valid


@dataclass
class CurvatureReport:
    max_defect: float
    mean_defect: float
    worst_node: tuple
    tol_used: float
    skipped_cells: int = 0

    def is_flat(self, threshold: float | None = None) -> bool:
        th = self.tol_used if threshold is None else threshold
        return self.max_defect <= th


def plaquette_holonomy(bundle, node, axes: tuple[int, int]):
    """Holonomy of one lattice cell in the corner fiber basis."""
    a, b = axes
    iso_a, val_a = step_isometries(bundle, a)
    iso_b, val_b = step_isometries(bundle, b)
    return _plaquette_from_steps(bundle, iso_a, val_a, iso_b, val_b, node, a, b)


def _plaquette_from_steps(bundle, iso_a, val_a, iso_b, val_b, node, a, b):
    grid = bundle.grid
    x = tuple(node)
    xa = grid.shift_index(x, a, +1)
    xb = grid.shift_index(x, b, +1)
    if xa is None or xb is None or not (val_a[x] and val_b[x] and val_b[xa] and val_a[xb]):
        raise StencilBlockedError(f"plaquette blocked at {x}")
    forward = iso_b[xa] @ iso_a[x]
    back = iso_a[xb] @ iso_b[x]
    return np.linalg.solve(back, forward)


def flatness_report(bundle, threshold: float | None = None) -> CurvatureReport:
    """Aggregate plaquette holonomy defects over all cells and axis pairs."""
    grid = bundle.grid
    r = bundle.rank
    if r < 1:
        raise GeometryInputError("flatness needs rank >= 1")
    defects = []
    masks = []
    worst = (0.0, tuple([0] * grid.k))
    skipped = 0
    iso = {}
    for a in range(grid.k):
        iso[a] = step_isometries(bundle, a)
    act = grid.active
    for a in range(grid.k):
        for b in range(a + 1, grid.k):
            iso_a, val_a = iso[a]
            iso_b, val_b = iso[b]
            pa = grid.axes[a].periodic
            pb = grid.axes[b].periodic
            iso_b_xa, vba = _shifted(iso_b, val_b[..., None, None], a, +1, pa)
            iso_a_xb, vab = _shifted(iso_a, val_a[..., None, None], b, +1, pb)
            valid = val_a & val_b & vba[..., 0, 0] & vab[..., 0, 0]
            forward = iso_b_xa @ iso_a
            back = iso_a_xb @ iso_b
            eye = np.eye(r)
            hol = np.linalg.solve(np.where(valid[..., None, None], back, eye), np.where(valid[..., None, None], forward, eye))
            area = grid.spacing[a] * grid.spacing[b]
            cell_defect = np.linalg.norm(hol - eye, ord=2, axis=(-2, -1)) / area
            defects.append(cell_defect[valid])
            masks.append(valid)
            skipped += int(np.sum(act & ~valid))
            if valid.any():
                local = np.where(valid, cell_defect, -1.0)
                idx = np.unravel_index(np.argmax(local), local.shape)
                if local[idx] > worst[0]:
                    worst = (float(local[idx]), tuple(int(i) for i in idx))
    if grid.k < 2 or not defects or all(d.size == 0 for d in defects):
        return CurvatureReport(0.0, 0.0, tuple([0] * grid.k), threshold or 0.0, skipped)
    alld = np.concatenate([d for d in defects if d.size])
    return CurvatureReport(
        float(np.max(alld)), float(np.mean(alld)), worst[1], threshold if threshold is not None else float(np.max(alld)), skipped
    )


@dataclass
class LatticePath:
    nodes: list

    def __post_init__(self):
        if len(self.nodes) < 1:
            raise GeometryInputError("empty path")

    @staticmethod
    def validate(grid: Grid, nodes) -> "LatticePath":
        nodes = [tuple(n) for n in nodes]
        for n in nodes:
            if not grid.is_active(n):
                raise StencilBlockedError(f"path visits excluded node {n}")
        for x, y in zip(nodes, nodes[1:]):
            diffs = [(a, x, y) for a in range(grid.k) if x[a] != y[a]]
            if len(diffs) != 1:
                raise GeometryInputError("consecutive path nodes must differ along one axis")
            a = diffs[0][0]
            if grid.shift_index(x, a, +1) != y and grid.shift_index(x, a, -1) != y:
                raise GeometryInputError("consecutive path nodes must be lattice neighbors")
        return LatticePath(nodes)


def parallel_transport(bundle, path: LatticePath, v: np.ndarray) -> np.ndarray:
    """Transport an ambient fiber vector along a lattice path."""
    grid = bundle.grid
    iso = [step_isometries(bundle, a) for a in range(grid.k)]
    x0 = path.nodes[0]
    b0 = bundle.basis[x0]
    coeff = b0 @ np.asarray(v, dtype=float)
    if np.linalg.norm(b0.T @ coeff - v) > 1e-8 * max(1.0, np.linalg.norm(v)):
        raise GeometryInputError("vector is not in the starting fiber")
    for x, y in zip(path.nodes, path.nodes[1:]):
        a = next(i for i in range(grid.k) if x[i] != y[i])
        if grid.shift_index(x, a, +1) == y:
            steps, valid = iso[a]
            if not valid[x]:
                raise StencilBlockedError(f"blocked edge at {x} axis {a}")
            coeff = steps[x] @ coeff
        else:
            steps, valid = iso[a]
            if not valid[y]:
                raise StencilBlockedError(f"blocked edge at {y} axis {a}")
            coeff = np.linalg.solve(steps[y], coeff)
    return bundle.basis[tuple(path.nodes[-1])].T @ coeff


@dataclass
class FrameResult:
    sections: list
    coords: np.ndarray
    gram: np.ndarray
    closure_residual: float
    monodromy_residual: float
    report: CurvatureReport


def parallel_frame(bundle, flat_threshold: float | None = None, frame_tol: float = 1e-6) -> FrameResult:
    """Parallel frame of a flat bundle via spanning-tree transport.

    The tree is grown from the lexicographically first active node, visiting
    nodes in lexicographic priority.  Non-tree lattice edges (periodic wraps
    included) are checked for closure; wrap edges additionally gate the
    monodromy obstruction on periodic axes.
    """
    grid = bundle.grid
    report = flatness_report(bundle, flat_threshold)
    if flat_threshold is not None and report.max_defect > flat_threshold:
        raise FlatnessError(
            f"bundle is not flat: defect {report.max_defect:.3e} > {flat_threshold:.3e}",
            report,
        )
    iso = [step_isometries(bundle, a) for a in range(grid.k)]
    nodes = grid.active_nodes()
    root = nodes[0]
    r = bundle.rank
    coords = np.full(grid.shape + (r, r), np.nan)
    coords[root] = np.eye(r)
    visited = np.zeros(grid.shape, dtype=bool)
    visited[root] = True
    heap = [(root, root)]
    tree_edges = set()
    while heap:
        x, _ = heapq.heappop(heap)
        for a in range(grid.k):
            for off in (+1, -1):
                y = grid.shift_index(x, a, off)
                if y is None or visited[y] or not grid.is_active(y):
                    continue
                steps, valid = iso[a]
                if off == +1:
                    if not valid[x]:
                        continue
                    coords[y] = steps[x] @ coords[x]
                else:
                    if not valid[y]:
                        continue
                    coords[y] = np.linalg.solve(steps[y], coords[x])
                visited[y] = True
                tree_edges.add((min(x, y), max(x, y)))
                heapq.heappush(heap, (y, y))
    if not visited[grid.active].all():
        raise GeometryInputError("active region is not connected")

    closure = 0.0
    monodromy = 0.0
    for a in range(grid.k):
        steps, valid = iso[a]
        for x in nodes:
            y = grid.shift_index(x, a, +1)
            if y is None or not valid[x] or not grid.is_active(y):
                continue
            if (min(x, y), max(x, y)) in tree_edges:
                continue
            resid = float(np.linalg.norm(steps[x] @ coords[x] - coords[y], ord=2))
            closure = max(closure, resid)
            if grid.axes[a].periodic and y[a] == (x[a] + 1) % grid.axes[a].n and x[a] == grid.axes[a].n - 1:
                monodromy = max(monodromy, resid)
    if monodromy > 100 * frame_tol:
        raise MonodromyError(f"monodromy obstruction on periodic axis: {monodromy:.3e}")

    sections = []
    amb = np.einsum("...rn,...rj->...jn", bundle.basis, coords)
    for i in range(r):
        vals = amb[..., i, :]
        sections.append(SectionField(grid, bundle.space, np.nan_to_num(vals)))
    gram_field = np.einsum("...ir,...rs,...js->...ij", coords, bundle.fiber_gram(), coords)
    gram = gram_field[root]
    return FrameResult(sections, coords, gram, closure, monodromy, report)


def synthetic_flat_bundle(grid: Grid, space: MetricSpace, rank: int, amplitude: float = 0.7):
    """Analytically flat calibration bundle with a closed-form parallel frame.

    Sections are w_i + g_i(x) w_null with w_null a null vector orthogonal to
    every w_i; their differentials stay metric-orthogonal to the bundle, so
    the induced connection is exactly flat while the fibers genuinely rotate.
    """
    if not 2 <= rank <= space.dim - 2:
        raise GeometryInputError("synthetic flat bundle needs 2 <= rank <= dim-2")
    if space.q < 2 or space.p < rank:
        raise GeometryInputError("need at least two minus axes and rank plus axes")
    n = space.dim
    # null direction orthogonal to every frame vector below
    w_null = np.zeros(n)
    w_null[space.p - 1] = 1.0
    w_null[space.p] = 1.0
    ws = [np.eye(n)[i] for i in range(rank - 1)]
    ws.append(np.eye(n)[-1])  # last timelike axis keeps the fiber metric indefinite
    mesh = grid.mesh()
    phase = sum(mesh)
    sections = []
    for i, w in enumerate(ws):
        gfun = amplitude * np.sin(phase + 0.37 * i)
        vals = np.broadcast_to(w, grid.shape + (n,)).copy()
        vals = vals + gfun[..., None] * w_null
        sections.append(SectionField(grid, space, vals))
    bundle = SubbundleField.from_sections(sections)
    return bundle, sections
