import numpy as np
import pytest
import scipy.sparse as sp
from numpy.polynomial import Chebyshev
from scipy.sparse.linalg import eigsh
from scipy.special import roots_legendre

from ibs2.errors import CapTooSmall, EigenpairRejected, InvalidArgument
from ibs2.fourier import norm_lower_bound
from ibs2.grids import PixelGrid, build_pnodes, default_pnodes
from ibs2.pswf import (
    assemble_sturm_liouville,
    build_basis,
    eval_pswf,
    gram_matrix,
    gram_matrix_pixels,
    jacobi_table,
    make_entry,
    prolate_eigenvalue,
    radial_part,
    solve_radial_eigs,
    zernike_radial,
)


def test_jacobi_matches_scipy():
    from scipy.special import eval_jacobi

    x = np.linspace(-1, 1, 41)
    P = jacobi_table(12, 3.0, 1.0, x)
    for n in range(13):
        np.testing.assert_allclose(P[n], eval_jacobi(n, 3.0, 1.0, x), atol=1e-11)


@pytest.mark.parametrize("m", [0, 1, 4])
def test_zernike_orthonormal(m):
    t, w = roots_legendre(80)
    r = 0.5 * (t + 1)
    R = zernike_radial(m, 12, r)
    G = (R * (0.5 * w * r)) @ R.T
    np.testing.assert_allclose(G, np.eye(12), atol=1e-12)


@pytest.mark.parametrize("m", [0, 3])
def test_zernike_derivative(m):
    r = np.linspace(0.05, 0.95, 19)
    _, dR, _ = zernike_radial(m, 8, r, derivative=True)
    eps = 1e-6
    fd = (zernike_radial(m, 8, r + eps) - zernike_radial(m, 8, r - eps)) / (2 * eps)
    np.testing.assert_allclose(dR, fd, atol=1e-6)


@pytest.mark.parametrize("m", [0, 1, 5])
def test_assembly_symmetric_and_banded(m):
    A = assemble_sturm_liouville(m, 10.0, 24)
    assert np.max(np.abs(A - A.T)) <= 1e-13 * np.max(np.abs(A))
    off = np.abs(np.triu(A, 2))
    assert off.max() <= 1e-10 * np.max(np.abs(A))


@pytest.mark.parametrize("m", [0, 2, 7])
def test_zero_bandwidth_is_diagonal(m):
    # Zernike radial functions diagonalize the c-independent part
    A = assemble_sturm_liouville(m, 0.0, 10)
    j = np.arange(10)
    np.testing.assert_allclose(A, np.diag((m + 2 * j) * (m + 2 * j + 2.0)), atol=1e-9)


def test_bandwidth_term():
    c, m, J = 7.0, 2, 16
    diff = assemble_sturm_liouville(m, c, J) - assemble_sturm_liouville(m, 0.0, J)
    t, w = roots_legendre(200)
    r = 0.5 * (t + 1)
    R = zernike_radial(m, J, r) * r
    G = (R * (0.5 * w * r)) @ R.T
    np.testing.assert_allclose(diff, c * c * G, atol=1e-10)


def _fem_lowest(m, c, n=2048, k=3):
    """P1 finite elements for the weak form of D_c on (0, 1)."""
    x = np.linspace(0, 1, n + 1)
    t, w = roots_legendre(4)
    K = sp.lil_matrix((n + 1, n + 1))
    Mm = sp.lil_matrix((n + 1, n + 1))
    for e in range(n):
        a, b = x[e], x[e + 1]
        h = b - a
        rq = a + 0.5 * h * (t + 1)
        wq = 0.5 * h * w
        phi = np.stack([(b - rq) / h, (rq - a) / h])
        dphi = np.array([-1 / h, 1 / h])
        for i in range(2):
            for j in range(2):
                kij = np.sum(wq * rq * (1 - rq ** 2) * dphi[i] * dphi[j])
                kij += np.sum(wq * (c * c * rq ** 3) * phi[i] * phi[j])
                if m:
                    kij += np.sum(wq * m * m / rq * phi[i] * phi[j])
                K[e + i, e + j] += kij
                Mm[e + i, e + j] += np.sum(wq * rq * phi[i] * phi[j])
    K, Mm = K.tocsc(), Mm.tocsc()
    if m:
        K, Mm = K[1:, 1:], Mm[1:, 1:]
    vals = eigsh(K, k=k, M=Mm, sigma=-1.0, which="LM", return_eigenvectors=False)
    return np.sort(vals)


def test_small_bandwidth_against_dense_discretization():
    c = 0.05
    chi, V = solve_radial_eigs(assemble_sturm_liouville(0, c, 16))
    ref = _fem_lowest(0, c)
    np.testing.assert_allclose(chi[:3], ref, rtol=1e-4, atol=1e-5)
    assert abs(V[0, 0]) > 0.999


def test_solve_radial_eigs_properties():
    A = assemble_sturm_liouville(1, 10.0, 24)
    chi, V = solve_radial_eigs(A)
    assert np.all(np.diff(chi) > 0)
    assert np.all(chi > 0)
    np.testing.assert_allclose(V.T @ V, np.eye(24), atol=1e-12)
    for i in range(24):
        nz = np.nonzero(np.abs(V[:, i]) > 1e-14)[0]
        assert V[nz[0], i] > 0
    with pytest.raises(InvalidArgument):
        solve_radial_eigs(np.triu(np.ones((4, 4))))


def _apply_D(m, c, entry, r):
    # Chebyshev interpolant of the polynomial radial part, then exact derivatives
    nodes = 0.5 * (1 - np.cos(np.pi * (np.arange(400) + 0.5) / 400))
    f = Chebyshev.fit(nodes, radial_part(entry, nodes), 2 * len(entry.radial_coeffs) + m,
                      domain=[0, 1])
    u, du, d2u = f(r), f.deriv(1)(r), f.deriv(2)(r)
    return -(1 - r * r) * d2u - du / r + 3 * r * du + (m * m / r ** 2 + c * c * r * r) * u, u


@pytest.mark.parametrize("m", [0, 1, 3])
def test_eigenfunction_residual(m):
    c = 10.0
    r = np.linspace(0.02, 0.999, 2000)
    for n in range(10):
        e = make_entry(m, n, 1, c, J=32)
        Du, u = _apply_D(m, c, e, r)
        rel = np.linalg.norm(Du - e.chi * u) / np.linalg.norm(e.chi * u)
        assert rel <= 1e-6, (m, n, rel)


def test_alpha_zero_bandwidth_limit():
    e = make_entry(0, 0, 1, 1e-3, J=8)
    a = prolate_eigenvalue(e, 1e-3, build_pnodes(6, 12))
    assert a == pytest.approx(np.pi, abs=1e-5)


def test_basis_c10(basis10):
    b = basis10
    assert b.size > 0
    assert b.entries[0].key == (0, 0, 1)
    keys = {e.key for e in b.entries}
    assert (0, 0, 1) in keys
    assert np.all(np.abs(b.alphas) >= b.cutoff)
    assert np.all(np.diff(np.abs(b.alphas)) <= 0)
    assert all(e.residual <= 1e-4 * abs(b.alpha00) for e in b.entries)
    assert abs(b.alpha00) >= norm_lower_bound(5.0)


def test_alpha_shared_between_l(basis10):
    ents = {e.key: e for e in basis10.all_entries}
    for (m, n, l), e in ents.items():
        if m >= 1 and l == 1:
            assert ents[(m, n, 2)].alpha == pytest.approx(e.alpha, abs=1e-4 * abs(basis10.alpha00))


def test_ordering_per_m(basis10):
    ents = basis10.all_entries
    for m in {e.m for e in ents}:
        row = sorted((e for e in ents if e.m == m and e.l == 1), key=lambda e: e.n)
        chi = np.array([e.chi for e in row])
        mag = np.array([abs(e.alpha) for e in row])
        assert np.all(np.diff(chi) > 0)
        good = mag > 1e-10  # below this the measured values are roundoff
        assert np.all(np.diff(mag[good]) < 0)


def test_alpha_decay(basis10):
    ents = basis10.all_entries
    shell = [max(abs(e.alpha) for e in ents if e.m + 2 * e.n >= s) for s in range(0, 25, 4)]
    assert np.all(np.diff(shell) < 0)
    assert shell[-1] < 1e-3 * abs(basis10.alpha00)


def test_alpha_tilde_near_one():
    b = build_basis(10.0, 1 - 1e-6, P=default_pnodes(5.0))
    assert [e.key for e in b.entries] == [(0, 0, 1)]


def test_build_basis_errors():
    with pytest.raises(CapTooSmall):
        build_basis(10.0, 0.9, caps=(2, 2), P=default_pnodes(5.0))
    with pytest.raises(EigenpairRejected):
        build_basis(10.0, 0.9, P=default_pnodes(5.0), residual_tol=1e-30)
    with pytest.raises(InvalidArgument):
        build_basis(10.0, 1.0)


def test_gram_polar_and_pixel(basis10):
    eye = np.eye(basis10.size)
    assert np.max(np.abs(gram_matrix(basis10) - eye)) <= 1e-6
    assert np.max(np.abs(gram_matrix_pixels(basis10, PixelGrid(256)) - eye)) <= 1e-6


def test_eval_pswf_real_and_rotation():
    e1 = make_entry(3, 1, 1, 10.0)
    e2 = make_entry(3, 1, 2, 10.0)
    rng = np.random.default_rng(7)
    r = np.sqrt(rng.uniform(0, 1, 50))
    t = rng.uniform(0, 2 * np.pi, 50)
    pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    t2 = t + np.pi / 6
    rot = np.stack([r * np.cos(t2), r * np.sin(t2)], axis=1)
    v = eval_pswf(e1, rot)
    assert np.isrealobj(v)
    np.testing.assert_allclose(v, -eval_pswf(e2, pts), atol=1e-12)
    with pytest.raises(InvalidArgument):
        eval_pswf(e1, [[1.1, 0.0]])


@pytest.mark.parametrize("k", [10.0, 15.0])
def test_norm_lower_bound_larger_k(k):
    b = build_basis(2 * k, 0.9, P=default_pnodes(k))
    assert abs(b.alpha00) >= norm_lower_bound(k)
