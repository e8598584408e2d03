import types

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ibs2.inverse as inv
from ibs2.analysis import rel_l2_error
from ibs2.born import ScatterDataset, born_data, synthesize
from ibs2.errors import DivergenceDetected, InvalidArgument
from ibs2.fourier import synthesize_field
from ibs2.grids import PData, PixelField, PixelGrid, build_pnodes
from ibs2.inverse import (A_dagger, A_dagger_nodes, A_matrix, K1_dagger, K_m, ReconParams,
                          ReconResult, compositions, convergence_diagnostics, ibs_reconstruct)
from ibs2.media import MediaSpec, generate_media


def _count_oracle(j):
    # ordered compositions of j with at least two parts, by recursion on the first part
    def total(r):
        return 1 if r == 0 else sum(total(r - i) for i in range(1, r + 1))
    return total(j) - 1


# A and A† ----------------------------------------------------------------------


def test_A_examples():
    np.testing.assert_array_equal(A_matrix([1.0, 0.0], 2.0), [[1, 1], [-0.5, 1]])
    A0 = A_matrix([0.0, 0.0], 2.0)
    np.testing.assert_array_equal(A0, [[-1, 1], [-1, 1]])
    assert np.linalg.matrix_rank(A0) == 1


def test_A_dagger_example():
    Ad = A_dagger([0.0, 1.0], 2.0, 0.1)
    np.testing.assert_allclose(Ad, [[2 / 3, -2 / 3], [1 / 3, 2 / 3]], atol=1e-15)
    np.testing.assert_allclose(Ad @ A_matrix([0.0, 1.0], 2.0), np.eye(2), atol=1e-15)


@settings(max_examples=60)
@given(r=st.floats(0.05, 1.0), th=st.floats(0, 2 * np.pi), ell=st.floats(1.2, 4.0))
def test_A_dagger_exact_inverse(r, th, ell):
    p = r * np.array([np.cos(th), np.sin(th)])
    assert abs(np.linalg.det(A_matrix(p, ell)) - 2 * r * r * (1 - ell ** -2)) < 1e-14
    D = A_dagger(p, ell, 0.05) @ A_matrix(p, ell) - np.eye(2)
    assert np.max(np.abs(D)) <= 1e-14 * max(1.0, 1 / (r * r))


def test_A_dagger_saturates_below_epsilon():
    eps, ell = 0.2, 2.0
    pref = ell ** 2 / (2 * eps ** 2 * (ell ** 2 - 1))
    for r in (0.15, 0.05, 1e-6, 0.0):
        p = np.array([r, 0.0])
        ent = np.array([[1, -1], [1 - 2 * r * r / ell ** 2, 2 * r * r - 1]])
        assert np.linalg.norm(A_dagger(p, ell, eps)) == pytest.approx(pref * np.linalg.norm(ent))


def test_A_dagger_nodes_matches_pointwise():
    P = build_pnodes(3, 8)
    Ad = A_dagger_nodes(P.nodes, 3.0, 0.3)
    for i in range(P.size):
        np.testing.assert_allclose(Ad[i], A_dagger(P.nodes[i], 3.0, 0.3), rtol=1e-14)


def test_A_dagger_rejects_bad_parameters():
    with pytest.raises(InvalidArgument):
        A_dagger([0.1, 0.0], 2.0, 0.0)
    with pytest.raises(InvalidArgument):
        A_dagger([0.1, 0.0], 1.0, 0.1)


# compositions --------------------------------------------------------------------


def test_compositions_small_cases():
    assert compositions(2) == [(1, 1)]
    assert sorted(compositions(3)) == sorted([(1, 2), (2, 1), (1, 1, 1)])
    want = {(1, 3), (3, 1), (2, 2), (1, 1, 2), (1, 2, 1), (2, 1, 1), (1, 1, 1, 1)}
    got = compositions(4)
    assert len(got) == 7 and set(got) == want


@pytest.mark.parametrize("j", range(2, 11))
def test_composition_count(j):
    c = compositions(j)
    assert len(c) == len(set(c)) == _count_oracle(j) == 2 ** (j - 1) - 1
    assert all(sum(t) == j and len(t) >= 2 and min(t) >= 1 for t in c)


# parameters --------------------------------------------------------------------------


def test_recon_params_validation():
    with pytest.raises(InvalidArgument):
        ReconParams(N=13)
    for bad in (dict(alpha_tilde=1.0), dict(epsilon=0.0), dict(ell=1.0), dict(N=0),
                dict(term_frequencies=[(5.0, 5.0)])):
        with pytest.raises(InvalidArgument):
            ReconParams(**bad)
    assert ReconParams(N=12).N == 12


def test_term_frequency_schedule():
    p = ReconParams(term_frequencies=[(5.0, 15.0), (10.0, 15.0)])
    assert p.pair_for_term(2, 10.0) == (5.0, 3.0)
    assert p.pair_for_term(3, 10.0) == (10.0, 1.5)
    assert p.pair_for_term(7, 10.0) == (10.0, 1.5)
    assert ReconParams(ell=2.0).pair_for_term(3, 5.0) == (5.0, 2.0)


# K1† ---------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def g64():
    return PixelGrid(64)


def _span_pair(basis, grid, seed, eta_only=False):
    rng = np.random.default_rng(seed)
    cg = np.zeros(basis.size) if eta_only else rng.standard_normal(basis.size)
    ce = rng.standard_normal(basis.size)
    g = PixelField(grid, synthesize_field(cg, basis, grid).values.real)
    e = PixelField(grid, synthesize_field(ce, basis, grid).values.real)
    return g, e


def test_K1_dagger_zero_data(basis10, g64):
    P = basis10.pnodes
    z = np.zeros(P.size)
    phi = ScatterDataset(PData(P, 5.0, z), PData(P, 10.0, z, node_scale=0.5), 2.0)
    g, e = K1_dagger(phi, basis10, ReconParams(), g64)
    assert np.all(g.values == 0) and np.all(e.values == 0)


@pytest.mark.parametrize("eps", [None, 0.2, 0.4])
def test_K1_dagger_recovers_span(basis10, g64, eps):
    gam, eta = _span_pair(basis10, g64, 1)
    prm = ReconParams(0.9, eps, 2.0, 1)
    phi = born_data(gam, eta, 5.0, 2.0, basis10.pnodes)
    est = K1_dagger(phi, basis10, prm, g64)
    err = rel_l2_error((gam, eta), est)[0][2]
    bound = 3 ** -0.5 * np.pi / basis10.cutoff * prm.eps_for(basis10.pnodes)
    assert err <= bound + 1e-4
    if eps is None:
        assert err < 1e-4


def test_K1_dagger_pure_eta(basis10, g64):
    gam, eta = _span_pair(basis10, g64, 2, eta_only=True)
    phi = born_data(gam, eta, 5.0, 2.0, basis10.pnodes)
    gh, eh = K1_dagger(phi, basis10, ReconParams(), g64)
    bound = 3 ** -0.5 * np.pi / basis10.cutoff * basis10.pnodes.min_radius
    assert g64.norm(gh.values) <= bound * eta.norm()
    assert g64.norm(gh.values) < 1e-4 * eta.norm()
    assert g64.norm(eh.values - eta.values) < 1e-4 * eta.norm()


def test_K1_dagger_mismatches(basis10, g64):
    gam, eta = _span_pair(basis10, g64, 3)
    phi = born_data(gam, eta, 5.0, 2.0, basis10.pnodes)
    with pytest.raises(InvalidArgument):
        K1_dagger(phi, basis10, ReconParams(ell=3.0), g64)
    phi6 = born_data(gam, eta, 6.0, 2.0, basis10.pnodes)
    with pytest.raises(InvalidArgument):
        K1_dagger(phi6, basis10, ReconParams(), g64)
    other = born_data(gam, eta, 5.0, 2.0, build_pnodes(3, 8))
    with pytest.raises(InvalidArgument):
        K1_dagger(other, basis10, ReconParams(), g64)


# series --------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_run(basis10):
    g = PixelGrid(32)
    gam, eta = generate_media(MediaSpec("unseparated", 5, 11, (0.02, 0.04)), g)
    phi = synthesize(gam, eta, 5.0, 2.0, P=basis10.pnodes)
    res = ibs_reconstruct(phi, basis10, ReconParams(N=3), g)
    return g, gam, eta, phi, res


def test_series_bookkeeping(small_run):
    g, _, _, _, res = small_run
    assert len(res.terms) == len(res.partial_sums) == 3
    assert res.tuples_evaluated == {2: _count_oracle(2), 3: _count_oracle(3)}
    for N in (1, 2, 3):
        sg = sum(t[0].values for t in res.terms[:N])
        se = sum(t[1].values for t in res.terms[:N])
        np.testing.assert_allclose(res.partial_sums[N - 1][0].values, sg, atol=1e-15)
        np.testing.assert_allclose(res.partial_sums[N - 1][1].values, se, atol=1e-15)
        eg, ee = res.estimate(N)
        assert not np.iscomplexobj(eg.values)
        np.testing.assert_array_equal(eg.values, sg.real)
    assert all(x >= 0 for x in res.term_norms + res.imag_norms)
    assert res.ratios == pytest.approx([res.term_norms[1] / res.term_norms[0],
                                        res.term_norms[2] / res.term_norms[1]])


def test_second_term_definition(small_run, basis10):
    g, _, _, phi, res = small_run
    psi1 = res.terms[0]
    inner = K_m([psi1, psi1], 5.0, 2.0, basis10.pnodes, g)
    t = inv.K1_dagger_values(-inner, basis10, 2.0, basis10.pnodes.min_radius, g)
    np.testing.assert_allclose(res.terms[1][0].values, t.gamma.values, atol=1e-14)
    np.testing.assert_allclose(res.terms[1][1].values, t.eta.values, atol=1e-14)


def test_divergence_truncates(small_run, basis10, monkeypatch):
    _, _, _, phi, _ = small_run

    def boom(*a, **k):
        raise DivergenceDetected("forced", nodes=np.array([0]))

    monkeypatch.setattr(inv, "_inner_sum", boom)
    with pytest.warns(UserWarning):
        res = ibs_reconstruct(phi, basis10, ReconParams(N=3), PixelGrid(32))
    assert res.truncated_at == 1 and len(res.terms) == 1 and res.warnings


# diagnostics ------------------------------------------------------------------------------


def _fake_result(norms):
    r = ReconResult([], [], list(norms), [0.0] * len(norms),
                    [b / a for a, b in zip(norms[:-1], norms[1:])])
    return r


def test_diagnostics_flags():
    bounds = types.SimpleNamespace(radius=0.5)
    d = convergence_diagnostics(_fake_result([0.3, 0.1, 0.05]), bounds)
    assert d.converged_flag and not d.empirical_divergence
    assert abs(d.C_ratio - 0.3 / 0.5) <= 1e-12
    d = convergence_diagnostics(_fake_result([0.7, 0.8, 0.9, 1.0]), bounds)
    assert not d.converged_flag and d.empirical_divergence
    # growth on only two consecutive terms is not flagged
    d = convergence_diagnostics(_fake_result([0.7, 0.8, 0.9, 0.1, 0.2]), bounds)
    assert not d.empirical_divergence
