import numpy as np
import pytest

from liesphere import dupin


@pytest.fixture(scope="session")
def scene24():
    return dupin.build_scene(dupin.coincident_params(24, 24))


@pytest.fixture(scope="session")
def generic24():
    return dupin.build_scene(dupin.generic_params(0.7, 24, 24))


@pytest.fixture(scope="session")
def d6_small(scene24):
    return dupin.demoulin_section6(scene24, check_transported_frame=False)


@pytest.fixture()
def rng():
    # fresh deterministic stream per test: results never depend on test order
    return np.random.default_rng(20260810)


def torus_scene(n=28, radius_angle=0.6):
    """Contact lift of a rotation torus: a base with honest curvature
    directions, used for negative Ribaucour controls."""
    from liesphere.grids import Axis, Grid, SectionField, SubbundleField
    from liesphere.pseudo import MetricSpace
    from liesphere.ribaucour import validate_legendre
    from liesphere.spaceform import ImmersionField, embed_points, embed_tangent

    space = MetricSpace(4, 2)
    grid = Grid([Axis(0, 2 * np.pi, n, periodic=True), Axis(0, 2 * np.pi, n, periodic=True)])
    u, v = grid.mesh()
    c1, c2 = np.cos(radius_angle), np.sin(radius_angle)
    vals = np.stack([c1 * np.cos(u), c1 * np.sin(u), c2 * np.cos(v), c2 * np.sin(v)], axis=-1)
    ff = ImmersionField(grid, vals)
    nu = ff.unit_normals()[0]
    phi = embed_points(space, ff.values)
    sig = embed_tangent(space, nu.values)
    sig[..., 5] += 1.0
    f_leg = validate_legendre(
        SubbundleField.from_sections(
            [SectionField(grid, space, phi), SectionField(grid, space, sig)]
        ),
        legendre_tol=1e-10,
    )
    return ff, f_leg, SectionField(grid, space, phi), SectionField(grid, space, sig)


def torus_transform(twist_amplitude, n=28, base_angle=0.9):
    """Second envelope of a tangent-sphere congruence on the torus; a zero
    twist gives a Ribaucour pair, a nonzero one breaks it."""
    from liesphere.grids import SectionField
    from liesphere.ribaucour import second_envelope
    from liesphere.spaceform import ImmersionField

    ff, f_leg, phi, sig = torus_scene(n)
    grid = f_leg.grid
    u, v = grid.mesh()
    th = base_angle + twist_amplitude * np.sin(u + 2 * v)
    vals = np.cos(th)[..., None] * sig.values + np.sin(th)[..., None] * phi.values
    fhat = second_envelope(f_leg, SectionField(grid, f_leg.space, vals))
    pm = _point_maps(fhat)
    return ff, f_leg, fhat, ImmersionField(grid, pm)


def _point_maps(field):
    from liesphere.dupin import point_map_sections

    vals = point_map_sections(field).values
    return vals[..., :4] / vals[..., 4:5]
