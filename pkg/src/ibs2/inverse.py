"""Regularized inverse Born series.

ψ_1 = K1†(φ) and ψ_j = -K1†( Σ_{m>=2} Σ_{i_1+...+i_m=j} K_m(ψ_{i_1}, ..., ψ_{i_m}) ),
where K1† = (F^k)† ∘ A†(p).  K_m runs the forward recursion with ψ_{i_1} in
the first step and ψ_{i_m} in the far-field term.  For each term, prefix
states are shared across compositions by walking the prefix tree depth first.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .born import (BATCH, ScatterDataset, born_step, build_kernels, farfield_terms,
                   incident_state)
from .errors import DivergenceDetected, InvalidArgument
from .fourier import basis_on_grid, pseudo_inverse_coeffs, weight_matrix
from .grids import PixelField, PixelGrid, PNodeSet
from .pswf import PswfBasis, build_basis

log = logging.getLogger(__name__)

MAX_TERMS = 12


def A_matrix(p, ell: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    r2 = float(p @ p)
    return np.array([[2 * r2 - 1, 1.0], [2 * r2 / ell ** 2 - 1, 1.0]])


def A_dagger(p, ell: float, epsilon: float) -> np.ndarray:
    """Regularized inverse; the prefactor saturates at |p| = epsilon."""
    if not epsilon > 0 or not ell > 1:
        raise InvalidArgument("need epsilon > 0 and ell > 1")
    p = np.asarray(p, dtype=float)
    r2 = float(p @ p)
    pref = ell ** 2 / (2 * max(epsilon, np.sqrt(r2)) ** 2 * (ell ** 2 - 1))
    return pref * np.array([[1.0, -1.0], [1 - 2 * r2 / ell ** 2, 2 * r2 - 1]])


def A_dagger_nodes(nodes: np.ndarray, ell: float, epsilon: float) -> np.ndarray:
    """A†(p_n) for every node, shape (n_nodes, 2, 2)."""
    r2 = np.sum(nodes ** 2, axis=1)
    pref = ell ** 2 / (2 * np.maximum(epsilon, np.sqrt(r2)) ** 2 * (ell ** 2 - 1))
    out = np.empty((len(nodes), 2, 2))
    out[:, 0, 0] = 1.0
    out[:, 0, 1] = -1.0
    out[:, 1, 0] = 1 - 2 * r2 / ell ** 2
    out[:, 1, 1] = 2 * r2 - 1
    return pref[:, None, None] * out


def compositions(j: int, min_parts: int = 2):
    """Ordered compositions of j into at least ``min_parts`` positive parts.

    Listed by number of parts, then lexicographically.
    """
    out = []

    def rec(rem, prefix):
        if rem == 0:
            if len(prefix) >= min_parts:
                out.append(tuple(prefix))
            return
        for i in range(1, rem + 1):
            rec(rem - i, prefix + [i])

    rec(j, [])
    return sorted(out, key=lambda t: (len(t), t))


@dataclass
class ReconParams:
    alpha_tilde: float = 0.9
    epsilon: float | None = None
    ell: float = 2.0
    N: int = 1
    term_frequencies: list | None = None
    project_real: bool = False

    def __post_init__(self):
        if not 0 < self.alpha_tilde < 1:
            raise InvalidArgument("alpha_tilde must lie in (0, 1)")
        if self.epsilon is not None and not self.epsilon > 0:
            raise InvalidArgument("epsilon must be positive")
        if not self.ell > 1:
            raise InvalidArgument("ell must exceed 1")
        if self.N < 1:
            raise InvalidArgument("N must be >= 1")
        if self.N > MAX_TERMS:
            raise InvalidArgument(f"N = {self.N} exceeds {MAX_TERMS}: composition count explodes")
        if self.term_frequencies is not None:
            for pair in self.term_frequencies:
                k, lk = pair
                if not (k > 0 and lk > k):
                    raise InvalidArgument(f"bad frequency pair {pair}")

    def pair_for_term(self, j: int, k: float):
        """(k', ℓ') used for term j >= 2."""
        tf = self.term_frequencies
        if not tf:
            return k, self.ell
        kk, lk = tf[min(j - 2, len(tf) - 1)]
        return float(kk), float(lk) / float(kk)

    def eps_for(self, P: PNodeSet) -> float:
        return self.epsilon if self.epsilon is not None else P.min_radius


@dataclass
class Term:
    gamma: PixelField
    eta: PixelField
    coeffs: np.ndarray  # (2, basis size)
    k: float

    def pair_norm(self) -> float:
        return float(np.hypot(self.gamma.norm(), self.eta.norm()))

    def imag_norm(self) -> float:
        g = self.gamma.grid
        return float(np.hypot(g.norm(self.gamma.values.imag), g.norm(self.eta.values.imag)))


@dataclass
class ReconResult:
    terms: list
    partial_sums: list
    term_norms: list
    imag_norms: list
    ratios: list
    tuples_evaluated: dict = field(default_factory=dict)
    truncated_at: int | None = None
    warnings: list = field(default_factory=list)

    def estimate(self, N: int | None = None):
        """Real parts of the partial sum through term N (default: all)."""
        g, e = self.partial_sums[(N or len(self.partial_sums)) - 1]
        return (PixelField(g.grid, g.values.real.copy()), PixelField(e.grid, e.values.real.copy()))


def _field_from_coeffs(coeffs, basis: PswfBasis, grid: PixelGrid) -> PixelField:
    v = np.zeros((grid.n, grid.n), complex)
    v[grid.support_index] = coeffs @ basis_on_grid(basis, grid)
    return PixelField(grid, v)


def _check_basis(k: float, basis: PswfBasis):
    if abs(basis.c - 2 * k) > 1e-9 * basis.c:
        raise InvalidArgument(f"basis bandwidth {basis.c} does not match 2k = {2 * k}")


def K1_dagger_values(values: np.ndarray, basis: PswfBasis, ell: float, epsilon: float,
                     grid: PixelGrid) -> Term:
    """Apply A†(p_n) to node pairs ``values[2, n_nodes]``, then (F^k)† per component."""
    P = basis.pnodes
    Ad = A_dagger_nodes(P.nodes, ell, epsilon)
    v = np.einsum("nij,jn->in", Ad, values)
    c = pseudo_inverse_coeffs(v, basis)
    return Term(_field_from_coeffs(c[0], basis, grid), _field_from_coeffs(c[1], basis, grid),
                c, basis.k)


def K1_dagger(phi: ScatterDataset, basis: PswfBasis, params: ReconParams, grid: PixelGrid):
    """(γ̂1, η̂1) = (F^k)†(A†(p) φ(p))."""
    _check_basis(phi.k, basis)
    if (phi.pnodes.T, phi.pnodes.M) != (basis.pnodes.T, basis.pnodes.M):
        raise InvalidArgument("dataset and basis use different p-node sets")
    if abs(phi.ell - params.ell) > 1e-12:
        raise InvalidArgument("dataset ell does not match params.ell")
    t = K1_dagger_values(phi.stacked, basis, phi.ell, params.eps_for(phi.pnodes), grid)
    return t.gamma, t.eta


# ---------------------------------------------------------------------------
# multilinear forward operators


def K_m(args, k: float, ell: float, P: PNodeSet, grid: PixelGrid) -> np.ndarray:
    """K_m(ψ_1, ..., ψ_m) at (k, ℓk) on the nodes of P; returns shape (2, n_nodes).

    ``args`` is a list of (γ_t, η_t) pairs; the first drives the first Born
    step and the last enters the far-field term.
    """
    if len(args) < 1:
        raise InvalidArgument("K_m needs at least one argument")
    out = np.zeros((2, P.size), complex)
    for f, (kk, pts) in enumerate(((k, P.nodes), (ell * k, P.nodes / ell))):
        ks = build_kernels(kk, grid)
        for s in range(0, P.size, BATCH):
            st = incident_state(grid, kk, pts[s:s + BATCH])
            for g, e in args[:-1]:
                st = born_step(st, g, e, ks)
            out[f, s:s + BATCH] = farfield_terms(st, *args[-1])
    return out


def _inner_sum(j: int, psi: dict, k: float, ell: float, P: PNodeSet, grid: PixelGrid):
    """Σ over compositions of j (m >= 2) of K_m(ψ_{i_1}, ..., ψ_{i_m}) on P."""
    out = np.zeros((2, P.size), complex)
    count = [0]
    for f, (kk, pts) in enumerate(((k, P.nodes), (ell * k, P.nodes / ell))):
        ks = build_kernels(kk, grid)
        Wfull = weight_matrix(grid, 2 * kk * pts)
        for s in range(0, P.size, BATCH):
            sl = slice(s, min(s + BATCH, P.size))
            W = Wfull[sl] if Wfull is not None else None
            acc = np.zeros(sl.stop - sl.start, complex)
            n_eval = 0

            def walk(state, used, depth):
                nonlocal acc, n_eval
                last = j - used
                if depth >= 1 and last >= 1:
                    g, e = psi[last]
                    acc = acc + farfield_terms(state, g, e, W)
                    n_eval += 1
                for i in range(1, j - used):
                    g, e = psi[i]
                    walk(born_step(state, g, e, ks), used + i, depth + 1)

            walk(incident_state(grid, kk, pts[sl]), 0, 0)
            out[f, sl] = acc
            if f == 0 and s == 0:
                count[0] = n_eval
    return out, count[0]


# ---------------------------------------------------------------------------
# series


class _Bases:
    def __init__(self, base: PswfBasis, alpha_tilde: float):
        self.alpha_tilde = alpha_tilde
        self.cache = {round(base.k, 12): base}

    def __call__(self, k: float) -> PswfBasis:
        key = round(k, 12)
        if key not in self.cache:
            self.cache[key] = build_basis(2 * k, self.alpha_tilde)
        return self.cache[key]


def ibs_reconstruct(phi: ScatterDataset, basis: PswfBasis, params: ReconParams,
                    grid: PixelGrid, bases=None) -> ReconResult:
    """Truncated inverse Born series through N terms."""
    _check_basis(phi.k, basis)
    bases = bases or _Bases(basis, params.alpha_tilde)
    g1, e1 = K1_dagger(phi, basis, params, grid)
    t1 = Term(g1, e1, None, phi.k)
    terms = [t1]
    res = ReconResult([], [], [], [], [])
    _record(res, t1)
    for j in range(2, params.N + 1):
        kk, ll = params.pair_for_term(j, phi.k)
        b = bases(kk)
        P = b.pnodes
        psi = {}
        for i, t in enumerate(terms, start=1):
            g, e = t.gamma, t.eta
            if params.project_real:
                g = PixelField(g.grid, g.values.real.copy())
                e = PixelField(e.grid, e.values.real.copy())
            psi[i] = (g, e)
        try:
            inner, n_tuples = _inner_sum(j, psi, kk, ll, P, grid)
        except DivergenceDetected as exc:
            msg = f"forward divergence while building term {j}; series truncated at {j - 1}"
            warnings.warn(msg)
            res.warnings.append(msg + f" ({exc})")
            res.truncated_at = j - 1
            break
        res.tuples_evaluated[j] = n_tuples
        t = K1_dagger_values(-inner, b, ll, params.eps_for(P), grid)
        terms.append(t)
        _record(res, t)
    return res


def _record(res: ReconResult, t: Term):
    res.terms.append((t.gamma, t.eta))
    if res.partial_sums:
        pg, pe = res.partial_sums[-1]
        res.partial_sums.append((PixelField(pg.grid, pg.values + t.gamma.values),
                                 PixelField(pe.grid, pe.values + t.eta.values)))
    else:
        res.partial_sums.append((t.gamma, t.eta))
    res.term_norms.append(t.pair_norm())
    res.imag_norms.append(t.imag_norm())
    if len(res.term_norms) > 1:
        prev = res.term_norms[-2]
        res.ratios.append(res.term_norms[-1] / prev if prev > 0 else np.inf)


@dataclass
class Diagnostics:
    psi1_norm: float
    radius: float
    C_ratio: float
    ratios: list
    converged_flag: bool
    empirical_divergence: bool
    imag_norms: list


def convergence_diagnostics(result: ReconResult, bounds) -> Diagnostics:
    """Compare ‖ψ1‖ with the convergence radius and flag growing terms."""
    r = bounds.radius
    n1 = result.term_norms[0]
    rat = list(result.ratios)
    run = 0
    div = False
    for q in rat:
        run = run + 1 if q > 1 else 0
        if run >= 3:
            div = True
    return Diagnostics(n1, r, n1 / r, rat, bool(n1 < r), div, list(result.imag_norms))
