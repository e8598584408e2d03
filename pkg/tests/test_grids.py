import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibs2.errors import InvalidArgument, SingularInput
from ibs2.grids import (
    DirectionSet,
    FarFieldMatrix,
    PixelField,
    PixelGrid,
    build_pnodes,
    default_pnodes,
    far_field_factor,
    map_farfield_to_pnodes,
    nearest_pairs,
    pair_points,
    q_of_p,
    q_of_points,
    scale_farfield,
)


@pytest.mark.parametrize("n", [1, 7, 64, 255])
def test_pixel_grid_geometry(n):
    g = PixelGrid(n)
    assert g.spacing * n == pytest.approx(2.0, abs=1e-15)
    assert g.cell_area == pytest.approx((2.0 / n) ** 2)
    X, Y = g.coords
    np.testing.assert_array_equal(g.mask, X ** 2 + Y ** 2 < 1)
    assert np.all(g.support[g.mask])


def test_pixel_grid_areas_sum_to_disk():
    g = PixelGrid(64)
    assert g.area.sum() == pytest.approx(np.pi, abs=1e-12)
    assert np.all(g.area[g.interior] == pytest.approx(g.cell_area))
    assert np.all(g.area <= g.cell_area * (1 + 1e-12))


def test_pixel_grid_rejects_nonpositive():
    with pytest.raises(InvalidArgument):
        PixelGrid(0)


def test_pixel_field_zero_off_support():
    g = PixelGrid(16)
    f = PixelField(g, np.ones((16, 16)))
    assert np.all(f.values[~g.support] == 0)
    assert f.norm() == pytest.approx(np.sqrt(np.pi), rel=1e-12)
    with pytest.raises(InvalidArgument):
        PixelField(g, np.ones((15, 16)))


@pytest.mark.parametrize("n_in", [4, 17, 64])
def test_direction_set(n_in):
    d = DirectionSet(n_in)
    np.testing.assert_allclose(np.hypot(*d.vectors.T), 1.0, atol=1e-15)
    np.testing.assert_allclose(np.diff(d.angles), 2 * np.pi / n_in, atol=1e-13)


def test_pnodes_single_radial():
    P = build_pnodes(1, 4)
    np.testing.assert_allclose(P.radii, np.sqrt(0.5))
    np.testing.assert_allclose(P.angles, [0, np.pi / 2, np.pi, 3 * np.pi / 2])
    np.testing.assert_allclose(P.weights, np.pi / 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(2, 80))
def test_pnodes_measure_and_radius(T, M):
    P = build_pnodes(T, M)
    assert P.size == T * M
    r = np.hypot(*P.nodes.T)
    assert np.all((r > 0) & (r < 1))
    assert np.all(P.weights > 0)
    assert P.weights.sum() == pytest.approx(np.pi, abs=1e-12)
    assert P.integrate(r ** 2).real == pytest.approx(np.pi / 2, abs=1e-12)


def test_pnodes_second_moment_example():
    P = build_pnodes(8, 32)
    assert P.integrate(np.sum(P.nodes ** 2, axis=1)).real == pytest.approx(np.pi / 2, abs=1e-12)


@pytest.mark.parametrize("T,M", [(0, 4), (3, 1), (-1, -1)])
def test_pnodes_invalid(T, M):
    with pytest.raises(InvalidArgument):
        build_pnodes(T, M)


def test_default_pnodes():
    P = default_pnodes(5.0)
    assert (P.T, P.M) == (13, 52)


def test_scale_farfield_examples():
    assert far_field_factor(1.0) == pytest.approx(np.sqrt(8 * np.pi) * np.exp(-0.25j * np.pi))
    F = FarFieldMatrix(4.0, np.array([[1.0, 0.0], [0.0, 0.0]]))
    S = scale_farfield(F)
    assert S.scaled
    assert S.values[0, 0] == pytest.approx(np.sqrt(8 * np.pi) / 8 * np.exp(-0.25j * np.pi))
    assert S.values[0, 1] == 0
    with pytest.raises(InvalidArgument):
        scale_farfield(S)
    with pytest.raises(InvalidArgument):
        FarFieldMatrix(0.0, np.eye(2))
    with pytest.raises(InvalidArgument):
        FarFieldMatrix(1.0, np.array([[np.nan]]))


def test_nearest_pair_exact_hit_and_ties():
    d = DirectionSet(8)
    cand = pair_points(d)
    ij = nearest_pairs(cand[[13, 42]], d)
    # exact hits return a pair with the same location; ties resolve to the smallest index
    for row, target in zip(ij, [13, 42]):
        np.testing.assert_allclose(cand[row[0] * 8 + row[1]], cand[target], atol=1e-15)
    # p = 0 is hit by every (i, i): lexicographic tie-break picks (0, 0)
    np.testing.assert_array_equal(nearest_pairs(np.zeros((1, 2)), d), [[0, 0]])


def test_nearest_pair_distance_64():
    d = DirectionSet(64)
    p = np.array([[0.5, 0.0]])
    i, j = nearest_pairs(p, d)[0]
    dist = np.linalg.norm(p[0] - pair_points(d)[i * 64 + j])
    brute = np.min(np.linalg.norm(pair_points(d) - p[0], axis=1))
    assert dist == pytest.approx(brute, abs=1e-15)
    assert dist <= np.pi / 64


def test_map_farfield_idempotent(rng):
    d = DirectionSet(16)
    F = scale_farfield(FarFieldMatrix(3.0, rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))))
    P = build_pnodes(5, 20)
    a = map_farfield_to_pnodes(F, P)
    b = map_farfield_to_pnodes(F, P)
    np.testing.assert_array_equal(a.values, b.values)
    ij = nearest_pairs(P.nodes, d)
    np.testing.assert_array_equal(a.values, F.values[ij[:, 0], ij[:, 1]])
    with pytest.raises(InvalidArgument):
        map_farfield_to_pnodes(FarFieldMatrix(3.0, np.eye(16)), P)
    with pytest.raises(InvalidArgument):
        map_farfield_to_pnodes(scale_farfield(FarFieldMatrix(3.0, np.eye(3))), P)


def test_q_of_p_examples():
    np.testing.assert_allclose(q_of_p([0.5, 0.0]), [0.0, np.sqrt(0.75)], atol=1e-15)
    np.testing.assert_allclose(q_of_p([0.0, 1.0]), [0.0, 0.0], atol=1e-15)
    with pytest.raises(SingularInput):
        q_of_p([0.0, 0.0])
    with pytest.raises(InvalidArgument):
        q_of_p([0.9, 0.9])


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 1.0), st.floats(0, 2 * np.pi))
def test_q_of_p_unit_directions(r, t):
    p = r * np.array([np.cos(t), np.sin(t)])
    q = q_of_p(p)
    th, xh = q + p, q - p
    assert abs(np.dot(q, p)) < 1e-14
    assert np.linalg.norm(th) == pytest.approx(1.0, abs=1e-14)
    assert np.linalg.norm(xh) == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose((th - xh) / 2, p, atol=1e-15)


def test_q_of_points_matches_scalar():
    P = build_pnodes(4, 9)
    Q = q_of_points(P.nodes)
    for p, q in zip(P.nodes, Q):
        np.testing.assert_allclose(q, q_of_p(p), atol=1e-15)
