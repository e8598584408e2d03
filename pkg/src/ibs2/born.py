"""Volume-integral operators F0..F3, the forward Born recursion and data synthesis.

All four operators are discrete convolutions on a padded grid.  Kernel taps
are exact cell integrals of G, ∇G and ∇∇G: off-centre taps come from the
divergence theorem applied to the square, the self tap of G from a polar
formula, so no lag needs a calibrated value.

States are batched: one FieldState carries the scattered field and its
gradient for a whole set of p-nodes at one frequency.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft
from scipy.special import hankel1, roots_legendre

from .errors import DivergenceDetected, InvalidArgument
from .fourier import apply_Fk, weight_matrix
from .grids import (PData, PixelField, PixelGrid, PNodeSet, cell_fourier_weights,
                    q_of_points)

log = logging.getLogger(__name__)

BATCH = 48
DIVERGENCE_FACTOR = 1e6


# ---------------------------------------------------------------------------
# kernels


def _grad_green(k, dx, dy):
    r = np.hypot(dx, dy)
    g = -(1j * k / 4) * hankel1(1, k * r) / r
    return g * dx, g * dy


def _square_flux(k, dx, dy, h, order):
    """Edge integrals over the square of side h centred at (dx, dy).

    Returns KD (2,) and KH (2, 2) stacks: KD_i = ∮ G n_i, KH_ij = ∮ ∂_j G n_i.
    """
    v, w = roots_legendre(order)
    s = 0.5 * h
    t = s * v
    w = s * w
    dx = dx[..., None]
    dy = dy[..., None]

    def edge(x, y):
        G = 0.25j * hankel1(0, k * np.hypot(x, y))
        gx, gy = _grad_green(k, x, y)
        return (G @ w), (gx @ w), (gy @ w)

    Rg, Rx, Ry = edge(dx + s, dy + t)
    Lg, Lx, Ly = edge(dx - s, dy + t)
    Tg, Tx, Ty = edge(dx + t, dy + s)
    Bg, Bx, By = edge(dx + t, dy - s)
    KD = np.stack([Rg - Lg, Tg - Bg])
    hxx = Rx - Lx
    hyy = Ty - By
    hxy = 0.5 * ((Ry - Ly) + (Tx - Bx))
    KH = np.stack([np.stack([hxx, hxy]), np.stack([hxy, hyy])])
    return KD, KH


def self_cell_green(k: float, h: float, order: int = 32) -> complex:
    """∫ over the centred square of side h of G^k, by polar integration."""
    v, w = roots_legendre(order)
    phi = np.pi / 8 * (v + 1)
    w = np.pi / 8 * w
    R = h / (2 * np.cos(phi))
    inner = 1j * R * hankel1(1, k * R) / (4 * k) - 1 / (2 * np.pi * k * k)
    return complex(8 * np.sum(w * inner))


@dataclass
class ConvKernelSet:
    """Transforms of the truncated cell-integrated kernels on the padded grid."""

    k: float
    grid: PixelGrid
    pad: int
    size: int
    KG: np.ndarray      # transform of ∫_cell G
    KD: np.ndarray      # (2, ...) transform of ∫_cell ∇G
    KH: np.ndarray      # (3, ...) transform of ∫_cell ∇∇G: xx, xy, yy
    taps: dict = field(default_factory=dict, repr=False)

    @property
    def coverage(self) -> np.ndarray:
        g = self.grid
        return g.area / g.cell_area

    @property
    def step_matrix(self) -> np.ndarray:
        """(3, 3, S, S) map from transforms of (γ∇u, ηu) to those of (u, ∇u)."""
        M = self.__dict__.get("_step")
        if M is None:
            k2 = self.k ** 2
            M = np.stack([
                np.stack([self.KD[0], self.KD[1], k2 * self.KG]),
                np.stack([self.KH[0], self.KH[1], k2 * self.KD[0]]),
                np.stack([self.KH[1], self.KH[2], k2 * self.KD[1]]),
            ])
            self.__dict__["_step"] = M
        return M


_KERNEL_CACHE: dict = {}


def build_kernels(k: float, grid: PixelGrid, pad: int = 2) -> ConvKernelSet:
    if pad < 2 or int(pad) != pad:
        raise InvalidArgument("pad must be an integer >= 2 to avoid wraparound")
    if not k > 0:
        raise InvalidArgument("k must be positive")
    key = (float(k), grid.n, int(pad))
    if key in _KERNEL_CACHE:
        return _KERNEL_CACHE[key]
    n, h = grid.n, grid.spacing
    S = pad * n
    idx = np.fft.fftfreq(S, 1.0 / S).astype(int)
    A, Bi = np.meshgrid(idx, idx, indexing="ij")
    dx, dy = A * h, Bi * h
    keep = np.hypot(dx, dy) <= 2.0 + 2.0 * h
    near = keep & (np.maximum(np.abs(A), np.abs(Bi)) <= 2)
    far = keep & ~near
    KG = np.zeros((S, S), complex)
    KD = np.zeros((2, S, S), complex)
    KH = np.zeros((2, 2, S, S), complex)
    for sel, order in ((far, 16), (near, 64)):
        d, hm = _square_flux(k, dx[sel], dy[sel], h, order)
        KD[0][sel], KD[1][sel] = d[0], d[1]
        for i in range(2):
            for j in range(2):
                KH[i, j][sel] = hm[i, j]
    trace = KH[0, 0] + KH[1, 1]
    KG[keep] = -trace[keep] / (k * k)
    KG[0, 0] = self_cell_green(k, h)
    KD[:, 0, 0] = 0.0
    KH[0, 1, 0, 0] = KH[1, 0, 0, 0] = 0.0
    taps = {"G": KG.copy(), "D": KD.copy(), "H": KH.copy()}
    ks = ConvKernelSet(
        k=float(k), grid=grid, pad=int(pad), size=S,
        KG=sfft.fft2(KG), KD=sfft.fft2(KD), KH=sfft.fft2(np.stack([KH[0, 0], KH[0, 1], KH[1, 1]])),
        taps=taps)
    if len(_KERNEL_CACHE) > 6:
        _KERNEL_CACHE.pop(next(iter(_KERNEL_CACHE)))
    _KERNEL_CACHE[key] = ks
    return ks


def _fwd(ks: ConvKernelSet, a):
    """Zero-padded 2-D transform; the first pass skips the all-zero rows."""
    S = ks.size
    return sfft.fft(sfft.fft(a, n=S, axis=-1), n=S, axis=-2)


def _inv(ks: ConvKernelSet, A):
    """Inverse transform cropped to the n x n grid; the second pass skips cropped rows."""
    n = ks.grid.n
    return sfft.ifft(sfft.ifft(A, axis=-2)[..., :n, :], axis=-1)[..., :n]


def _prep(ks, f):
    return np.asarray(f) * ks.coverage


def apply_F0(ks: ConvKernelSet, f):
    """k^2 ∫_B G f."""
    return _inv(ks, ks.k ** 2 * ks.KG * _fwd(ks, _prep(ks, f))) * ks.grid.support


def apply_F1(ks: ConvKernelSet, f):
    """∫_B ∇_x G · f for a vector field ``f[..., 2, n, n]``."""
    F = _fwd(ks, _prep(ks, f))
    return _inv(ks, ks.KD[0] * F[..., 0, :, :] + ks.KD[1] * F[..., 1, :, :]) * ks.grid.support


def apply_F2(ks: ConvKernelSet, f):
    """k^2 ∫_B ∇_x G f, returned as (..., 2, n, n)."""
    F = _fwd(ks, _prep(ks, f))[..., None, :, :]
    return _inv(ks, ks.k ** 2 * ks.KD * F) * ks.grid.support


def apply_F3(ks: ConvKernelSet, f):
    """∫_B ∇_x∇_x G f for a vector field, returned as (..., 2, n, n)."""
    F = _fwd(ks, _prep(ks, f))
    Fx, Fy = F[..., 0, :, :], F[..., 1, :, :]
    out = np.stack([ks.KH[0] * Fx + ks.KH[1] * Fy, ks.KH[1] * Fx + ks.KH[2] * Fy], axis=-3)
    return _inv(ks, out) * ks.grid.support


# ---------------------------------------------------------------------------
# recursion


@dataclass
class FieldState:
    """Scattered field u^s_j and its gradient for a batch of incidence nodes.

    ``u`` has shape (B, n, n); ``grad_u`` has shape (B, 2, n, n); ``p`` holds
    the B node points (already scaled to this frequency), ``q`` the matching
    q(p).
    """

    u: np.ndarray
    grad_u: np.ndarray
    order: int
    k: float
    p: np.ndarray
    q: np.ndarray

    def take(self, idx) -> "FieldState":
        return replace(self, u=self.u[idx], grad_u=self.grad_u[idx], p=self.p[idx], q=self.q[idx])


def incident_state(grid: PixelGrid, k: float, points) -> FieldState:
    """Order-0 state u = exp(ik(q+p)·y), ∇u = ik(q+p)u on the grid support."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    q = q_of_points(p)
    th = q + p
    X, Y = grid.coords
    u = np.exp(1j * k * (th[:, 0, None, None] * X + th[:, 1, None, None] * Y)) * grid.support
    grad = 1j * k * th[:, :, None, None] * u[:, None]
    return FieldState(u, grad, 0, float(k), p, q)


def born_step(state: FieldState, gamma, eta, kernels: ConvKernelSet,
              ref_norm: np.ndarray | None = None) -> FieldState:
    """One step of u_{j+1} = F1(γ∇u_j) + F0(ηu_j), ∇u_{j+1} = F3(γ∇u_j) + F2(ηu_j)."""
    ks = kernels
    if abs(ks.k - state.k) > 1e-12 * state.k:
        raise InvalidArgument("state and kernels are at different frequencies")
    g = _field_values(gamma) * ks.coverage
    e = _field_values(eta) * ks.coverage
    src = np.empty((state.u.shape[0], 3) + state.u.shape[1:], dtype=complex)
    np.multiply(g, state.grad_u, out=src[:, :2])
    np.multiply(e, state.u, out=src[:, 2])
    r = _inv(ks, np.einsum("ijxy,bjxy->bixy", ks.step_matrix, _fwd(ks, src)))
    r *= ks.grid.support
    new = replace(state, u=r[:, 0], grad_u=r[:, 1:], order=state.order + 1)
    if ref_norm is not None:
        nrm = np.sqrt(np.sum(np.abs(new.u) ** 2, axis=(-2, -1)))
        bad = np.nonzero(nrm > DIVERGENCE_FACTOR * np.maximum(ref_norm, 1e-300))[0]
        if len(bad):
            raise DivergenceDetected(f"Born recursion diverged at order {new.order}", nodes=bad)
    return new


def _field_values(f):
    return f.values if isinstance(f, PixelField) else np.asarray(f)


def farfield_terms(state: FieldState, gamma, eta, W: np.ndarray | None = None) -> np.ndarray:
    """u_{j+1}(p;k) = ik^{-1} 𝔽0(γ(q-p)·∇u_j) + 𝔽0(ηu_j) for every node in the batch.

    𝔽0(f) = ∫_B exp(ik(p-q)·y) f dy is evaluated as exact cell weights for
    exp(i2k p·y) against the demodulated envelope exp(-ik(q+p)·y) f.
    ``W`` optionally supplies the weight rows for this batch.
    """
    grid = _grid_of(gamma, eta)
    idx = grid.support_index
    k, p, q = state.k, state.p, state.q
    pts = grid.points()
    th = q + p
    demod = np.exp(-1j * k * (pts[None, :, 0] * th[:, 0, None] + pts[None, :, 1] * th[:, 1, None]))
    g = _field_values(gamma)[idx]
    e = _field_values(eta)[idx]
    d = q - p
    gu = state.grad_u[:, :, idx[0], idx[1]]
    env = (1j / k) * g * (d[:, 0, None] * gu[:, 0] + d[:, 1, None] * gu[:, 1]) \
        + e * state.u[:, idx[0], idx[1]]
    env *= demod
    if W is None:
        W = cell_fourier_weights(grid, 2 * k * p)
    return np.einsum("bc,bc->b", W, env)


def _grid_of(*fields) -> PixelGrid:
    for f in fields:
        if isinstance(f, PixelField):
            return f.grid
    raise InvalidArgument("need at least one PixelField to fix the grid")


def farfield_term(state_prev: FieldState, gamma, eta, p=None, k=None) -> complex:
    """Single-node convenience wrapper around :func:`farfield_terms`."""
    return complex(farfield_terms(state_prev, gamma, eta)[0])


def node_weights(grid: PixelGrid, omegas: np.ndarray):
    """Cached weight matrix for the full node set, or None if too large."""
    return weight_matrix(grid, omegas)


# ---------------------------------------------------------------------------
# synthesis


@dataclass
class FrequencyData:
    values: np.ndarray
    orders: np.ndarray
    converged: np.ndarray


@dataclass
class ScatterDataset:
    """Pair φ = (u(p;k), u(p/ℓ; ℓk)) on a shared PNodeSet."""

    low: PData
    high: PData
    ell: float
    provenance: dict = field(default_factory=dict)
    converged: np.ndarray | None = None
    orders: tuple | None = None

    def __post_init__(self):
        if not self.ell > 1:
            raise InvalidArgument("ell must exceed 1")
        if (self.low.pnodes.T, self.low.pnodes.M) != (self.high.pnodes.T, self.high.pnodes.M):
            raise InvalidArgument("both components must share one PNodeSet")

    @property
    def k(self) -> float:
        return self.low.k

    @property
    def pnodes(self) -> PNodeSet:
        return self.low.pnodes

    @property
    def stacked(self) -> np.ndarray:
        return np.stack([self.low.values, self.high.values])


def series_at_frequency(gamma, eta, k: float, points: np.ndarray, J_max: int, tol: float,
                        batch: int = BATCH) -> FrequencyData:
    """Partial sums Σ_j u_j at ``points`` (already scaled to frequency k)."""
    grid = _grid_of(gamma, eta)
    ks = build_kernels(k, grid)
    Wfull = node_weights(grid, 2 * k * points)
    nn = len(points)
    total = np.zeros(nn, complex)
    orders = np.zeros(nn, int)
    conv = np.zeros(nn, bool)
    for s in range(0, nn, batch):
        ids = np.arange(s, min(s + batch, nn))
        W = Wfull[ids] if Wfull is not None else cell_fourier_weights(grid, 2 * k * points[ids])
        st = incident_state(grid, k, points[ids])
        S = farfield_terms(st, gamma, eta, W)
        orders[ids] = 1
        ref = None
        active = np.arange(len(ids))
        for j in range(2, J_max + 1):
            try:
                st = born_step(st, gamma, eta, ks, ref_norm=ref)
            except DivergenceDetected as exc:
                raise DivergenceDetected(str(exc), nodes=ids[active[exc.nodes]]) from None
            if ref is None:
                ref = np.sqrt(np.sum(np.abs(st.u) ** 2, axis=(-2, -1)))
            inc = farfield_terms(st, gamma, eta, W[active])
            S[active] += inc
            orders[ids[active]] = j
            mag = np.abs(S[active])
            done = np.abs(inc) <= tol * mag
            done |= (np.abs(inc) == 0) & (mag == 0)
            conv[ids[active[done]]] = True
            keep = ~done
            if not np.any(keep):
                break
            active = active[keep]
            st = st.take(keep)
            ref = ref[keep]
        total[ids] = S
    if J_max == 1:
        conv[:] = True
    return FrequencyData(total, orders, conv)


def synthesize(gamma, eta, k: float, ell: float, J_max: int = 20, tol: float = 1e-8,
               P: PNodeSet | None = None) -> ScatterDataset:
    """Forward Born data (u(p;k), u(p/ℓ; ℓk)) on the p-nodes."""
    from .grids import default_pnodes

    if not ell > 1:
        raise InvalidArgument("ell must exceed 1")
    if J_max < 1:
        raise InvalidArgument("J_max must be >= 1")
    P = P or default_pnodes(k)
    lo = series_at_frequency(gamma, eta, k, P.nodes, J_max, tol)
    hi = series_at_frequency(gamma, eta, ell * k, P.nodes / ell, J_max, tol)
    prov = {"kind": "synthesized", "J_max": int(J_max), "tol": float(tol)}
    return ScatterDataset(PData(P, k, lo.values), PData(P, ell * k, hi.values, node_scale=1 / ell),
                          float(ell), prov, converged=lo.converged & hi.converged,
                          orders=(lo.orders, hi.orders))


def born_data(gamma, eta, k: float, ell: float, P: PNodeSet) -> ScatterDataset:
    """K1(γ, η) through the Fourier operator: ((2|p|²-1)F^k γ + F^k η, (2|p|²/ℓ²-1)F^k γ + F^k η)."""
    Fg = apply_Fk(_as_field(gamma), P, k).values
    Fe = apply_Fk(_as_field(eta), P, k).values
    r2 = np.sum(P.nodes ** 2, axis=1)
    lo = (2 * r2 - 1) * Fg + Fe
    hi = (2 * r2 / ell ** 2 - 1) * Fg + Fe
    return ScatterDataset(PData(P, k, lo), PData(P, ell * k, hi, node_scale=1 / ell), float(ell),
                          {"kind": "born"})


def _as_field(f) -> PixelField:
    if not isinstance(f, PixelField):
        raise InvalidArgument("expected a PixelField")
    return f


def add_noise(data: ScatterDataset, level: float, seed: int) -> ScatterDataset:
    """Complex Gaussian noise rescaled to ||δ|| = level ||φ_component|| per frequency."""
    if level < 0:
        raise InvalidArgument("noise level must be non-negative")
    if level == 0:
        return replace(data, provenance={**data.provenance, "noise_level": 0.0})
    from .media import rng_for, NOISE_GROUP

    rng = rng_for(seed, NOISE_GROUP)
    out = []
    for comp in (data.low, data.high):
        n = comp.values.shape[0]
        d = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        d *= level * np.linalg.norm(comp.values) / np.linalg.norm(d)
        out.append(replace(comp, values=comp.values + d))
    prov = {**data.provenance, "noise_level": float(level), "noise_seed": int(seed),
            "noise_model": "complex gaussian, global rescale per component"}
    return replace(data, low=out[0], high=out[1], provenance=prov)


def plane_wave_state(grid: PixelGrid, k: float, direction) -> FieldState:
    """Order-0 state for one incidence direction θ̂ (stored as q = θ̂, p = 0)."""
    th = np.asarray(direction, dtype=float)
    X, Y = grid.coords
    u = (np.exp(1j * k * (th[0] * X + th[1] * Y)) * grid.support)[None]
    grad = 1j * k * th[None, :, None, None] * u[:, None]
    return FieldState(u, grad, 0, float(k), np.zeros((1, 2)), th[None, :].copy())


def synthesize_farfield(gamma, eta, k: float, directions, J_max: int = 20,
                        tol: float = 1e-8):
    """Far-field matrix u∞(x̂_i, θ̂_j; k) from the forward Born series.

    Each term is u_j(p;k) for p = (θ̂ - x̂)/2, divided by the scaling factor
    of :func:`grids.far_field_factor`.
    """
    from .grids import FarFieldMatrix, far_field_factor

    grid = _grid_of(gamma, eta)
    ks = build_kernels(k, grid)
    X = directions.vectors
    n = len(X)
    pts = grid.points()
    idx = grid.support_index
    g = _field_values(gamma)[idx]
    e = _field_values(eta)[idx]
    out = np.zeros((n, n), complex)
    for j, th in enumerate(X):
        W = cell_fourier_weights(grid, k * (th[None, :] - X))
        demod = np.exp(-1j * k * (pts @ th))
        st = plane_wave_state(grid, k, th)
        S = np.zeros(n, complex)
        for order in range(1, J_max + 1):
            if order > 1:
                st = born_step(st, gamma, eta, ks)
            gu = st.grad_u[0][:, idx[0], idx[1]]
            env = (1j / k) * g * (X @ gu) + e * st.u[0][idx]
            inc = np.einsum("ic,ic->i", W, env * demod)
            S += inc
            if np.all(np.abs(inc) <= tol * np.abs(S)):
                break
        out[:, j] = S
    return FarFieldMatrix(k, out / far_field_factor(k))
