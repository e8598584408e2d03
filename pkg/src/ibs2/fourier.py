"""Restricted Fourier operator F^k and its spectral-cutoff pseudo-inverse."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .grids import PData, PixelField, PixelGrid, PNodeSet, cell_fourier_weights, fourier_apply
from .pswf import PswfBasis

# cached weight matrices above this many entries are streamed instead
_CACHE_ENTRIES = 1.6e7
_CHUNK = 64
_STREAM_ENTRIES = 2e6
_W_CACHE: OrderedDict = OrderedDict()


def _weights_key(grid: PixelGrid, omegas: np.ndarray):
    return grid.n, omegas.shape, hash(omegas.tobytes())


def weight_matrix(grid: PixelGrid, omegas) -> np.ndarray | None:
    """Cached clipped-cell weights W[a, c], or None when too large to keep."""
    omegas = np.ascontiguousarray(np.atleast_2d(omegas), dtype=float)
    if len(omegas) * len(grid.support_index[0]) > _CACHE_ENTRIES:
        return None
    key = _weights_key(grid, omegas)
    W = _W_CACHE.get(key)
    if W is None:
        W = cell_fourier_weights(grid, omegas)
        _W_CACHE[key] = W
        while len(_W_CACHE) > 4:
            _W_CACHE.popitem(last=False)
    else:
        _W_CACHE.move_to_end(key)
    return W


def fourier_sum(grid: PixelGrid, omegas, values) -> np.ndarray:
    """Σ_c W_c(ω_a) f_c for fields given on the grid support.

    ``values`` has shape (..., n_support); the result has shape (..., n_omega).
    """
    omegas = np.ascontiguousarray(np.atleast_2d(omegas), dtype=float)
    values = np.asarray(values)
    ns = len(grid.support_index[0])
    if values.shape[-1] != ns:
        raise InvalidArgument("values must be given on the grid support")
    lead = values.shape[:-1]
    V = values.reshape(-1, ns).T
    W = weight_matrix(grid, omegas)
    if W is not None:
        out = W @ V
    else:
        step = max(1, min(_CHUNK, int(_STREAM_ENTRIES // ns)))
        out = fourier_apply(grid, omegas, V, chunk=step)
    return out.T.reshape(lead + (len(omegas),))


def on_support(f) -> np.ndarray:
    if isinstance(f, PixelField):
        return f.values[f.grid.support_index]
    raise InvalidArgument("expected a PixelField")


def apply_Fk(f: PixelField, P: PNodeSet, k: float, node_scale: float = 1.0) -> PData:
    """F^k(p; f) = ∫_B exp(i 2k p·y) f(y) dy at the points ``node_scale * p_n``.

    Each cell's value is integrated exactly against the exponential over the
    part of the cell inside B.
    """
    if not k > 0:
        raise InvalidArgument("k must be positive")
    vals = fourier_sum(f.grid, 2 * k * node_scale * P.nodes, on_support(f))
    return PData(P, k, vals, node_scale=node_scale)


@dataclass
class SpectralCoeffs:
    basis: PswfBasis
    values: np.ndarray


def _basis_at_nodes(basis: PswfBasis) -> np.ndarray:
    cache = basis.__dict__.setdefault("_node_vals", {})
    P = basis.pnodes
    key = (P.T, P.M)
    if key not in cache:
        cache[key] = basis.eval(P.nodes)
    return cache[key]


def basis_on_grid(basis: PswfBasis, grid: PixelGrid) -> np.ndarray:
    """Retained ψ at the support-cell centers, shape (size, n_support).

    Centers of boundary cells that fall just outside B use the polynomial
    continuation of the radial part, which keeps the samples smooth across
    the circle.
    """
    cache = basis.__dict__.setdefault("_grid_vals", {})
    if grid.n not in cache:
        cache[grid.n] = basis.eval(grid.points(), extend=True)
    return cache[grid.n]


def _check_freq(k: float, basis: PswfBasis):
    if abs(2 * k - basis.c) > 1e-9 * basis.c:
        raise InvalidArgument(f"basis bandwidth c={basis.c} does not match 2k={2 * k}")


def project(f, basis: PswfBasis, k: float | None = None) -> SpectralCoeffs:
    """Coefficients <f, ψ>_B over the retained basis.

    PixelField inputs use the corrected cell weights; PData inputs use p-node weights.
    """
    if isinstance(f, PData):
        _check_freq(f.k, basis)
        if f.node_scale != 1.0:
            raise InvalidArgument("projection needs data on the unscaled p-nodes")
        if (f.pnodes.T, f.pnodes.M) != (basis.pnodes.T, basis.pnodes.M):
            raise InvalidArgument("PData and basis use different p-node sets")
        vals = _basis_at_nodes(basis) @ (basis.pnodes.weights * f.values)
        return SpectralCoeffs(basis, vals)
    if isinstance(f, PixelField):
        if k is not None:
            _check_freq(k, basis)
        g = f.grid
        vals = basis_on_grid(basis, g) @ (g.quad_weights * on_support(f))
        return SpectralCoeffs(basis, vals)
    raise InvalidArgument("project expects a PixelField or PData")


def synthesize_field(coeffs: np.ndarray, basis: PswfBasis, grid: PixelGrid) -> PixelField:
    vals = np.zeros((grid.n, grid.n), dtype=complex)
    vals[grid.support_index] = coeffs @ basis_on_grid(basis, grid)
    return PixelField(grid, vals)


def pseudo_inverse_Fk(g: PData, basis: PswfBasis, grid: PixelGrid) -> PixelField:
    """Σ_retained α^{-1} <g, ψ>_B ψ rasterized on ``grid`` (complex output)."""
    c = project(g, basis).values
    return synthesize_field(c / basis.alphas, basis, grid)


def pseudo_inverse_coeffs(values: np.ndarray, basis: PswfBasis) -> np.ndarray:
    """Coefficient form of (F^k)† for raw node values of shape (..., T*M)."""
    Psi = _basis_at_nodes(basis)
    return (values * basis.pnodes.weights) @ Psi.T / basis.alphas


def norm_lower_bound(k: float) -> float:
    """d(k) = 2 sqrt(min(k, 2)) / k, a lower bound on |α00(2k)|."""
    if not k > 0:
        raise InvalidArgument("k must be positive")
    return 2.0 * np.sqrt(min(k, 2.0)) / k
