"""Disk prolate spheroidal wave functions.

Radial parts are expanded in normalized Zernike polynomials

    Rbar_{m,j}(r) = sqrt(2(m+2j+1)) (-1)^j r^m P_j^{(m,0)}(1-2r^2),

which are orthonormal in r dr on [0, 1].  The Sturm-Liouville operator

    D_c = -(1/r) d/dr (r (1-r^2) d/dr) + m^2/r^2 + c^2 r^2

is assembled in that basis through its bilinear form and diagonalized per
angular order.  Prolate eigenvalues alpha of the restricted Fourier operator
are then measured on p-nodes rather than taken from a phase formula.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import fft
from scipy.special import roots_legendre

from .errors import (AssemblyFailure, CapTooSmall, EigenpairRejected,
                     InvalidArgument, NumericFailure)
from .grids import PNodeSet, default_pnodes

RESIDUAL_TOL = 1e-4
J_BUFFER = 16
DISCARD_FRACTION = 0.25


# ---------------------------------------------------------------------------
# Zernike radial basis


def jacobi_table(nmax: int, a: float, b: float, x: np.ndarray) -> np.ndarray:
    """P_n^{(a,b)}(x) for n = 0..nmax, stacked along axis 0."""
    x = np.asarray(x, dtype=float)
    P = np.zeros((nmax + 1,) + x.shape)
    P[0] = 1.0
    if nmax >= 1:
        P[1] = (a + 1) + (a + b + 2) * (x - 1) / 2
    for n in range(2, nmax + 1):
        s = 2 * n + a + b
        c1 = 2 * n * (n + a + b) * (s - 2)
        c2 = (s - 1) * (s * (s - 2) * x + a * a - b * b)
        c3 = 2 * (n + a - 1) * (n + b - 1) * s
        P[n] = (c2 * P[n - 1] - c3 * P[n - 2]) / c1
    return P


def zernike_radial(m: int, J: int, r: np.ndarray, derivative: bool = False):
    """Normalized radial functions Rbar_{m,j}(r), j < J, as a (J, len(r)) array.

    With ``derivative`` also returns d/dr and Rbar/r (the latter is what the
    m^2/r^2 term needs, and stays finite at r = 0 when m >= 1).
    """
    r = np.asarray(r, dtype=float)
    x = 1.0 - 2.0 * r * r
    j = np.arange(J)
    scale = (np.sqrt(2.0 * (m + 2 * j + 1)) * (-1.0) ** j)[:, None]
    P = jacobi_table(J - 1, m, 0, x)
    rm = r ** m
    R = scale * rm * P
    if not derivative:
        return R
    dP = np.zeros_like(P)
    if J > 1:
        Q = jacobi_table(J - 2, m + 1, 1, x)
        dP[1:] = ((j[1:] + m + 1) / 2.0)[:, None] * Q
    rm1 = r ** (m - 1) if m >= 1 else np.zeros_like(r)
    dR = scale * (m * rm1 * P + rm * dP * (-4.0 * r))
    R_over_r = scale * rm1 * P if m >= 1 else np.zeros_like(R)
    return R, dR, R_over_r


def _sl_blocks(m: int, J: int, nq: int):
    t, w = roots_legendre(nq)
    r = 0.5 * (t + 1.0)
    w = 0.5 * w
    R, dR, Rr = zernike_radial(m, J, r, derivative=True)
    wr = w * r
    D0 = (dR * ((1 - r * r) * wr)) @ dR.T + m * m * (Rr * wr) @ Rr.T
    G = (R * (r * r * wr)) @ R.T
    return D0, G


def assemble_sturm_liouville(m: int, c: float, J: int, nq: int | None = None,
                             tol: float = 1e-10) -> np.ndarray:
    """Galerkin matrix <Rbar_i, D_c Rbar_j>_{r dr} for angular order m."""
    if m < 0 or int(m) != m:
        raise InvalidArgument("angular order must be a non-negative integer")
    if J < 4:
        raise InvalidArgument("need J >= 4")
    if not c >= 0:
        raise InvalidArgument("bandwidth must be non-negative")
    nq = nq or (m + 2 * J + 4)
    D0, G = _sl_blocks(m, J, nq)
    A = D0 + c * c * G
    D0f, Gf = _sl_blocks(m, J, nq + 8)
    Af = D0f + c * c * Gf
    if np.max(np.abs(A - Af)) > tol * max(1.0, np.max(np.abs(A))):
        raise AssemblyFailure(f"assembly for m={m}, J={J} not converged under refinement")
    return 0.5 * (A + A.T)


def solve_radial_eigs(A: np.ndarray):
    """Ascending eigenvalues and column eigenvectors, first nonzero entry positive."""
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(A)))):
        raise InvalidArgument("matrix must be symmetric")
    try:
        chi, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"eigensolver failed: {exc}") from exc
    for i in range(V.shape[1]):
        nz = np.nonzero(np.abs(V[:, i]) > 1e-14)[0]
        if len(nz) and V[nz[0], i] < 0:
            V[:, i] = -V[:, i]
    return chi, V


# ---------------------------------------------------------------------------
# entries and basis


@dataclass
class PswfEntry:
    m: int
    n: int
    l: int
    chi: float
    radial_coeffs: np.ndarray
    alpha: complex = 0j
    residual: float = np.nan

    @property
    def key(self):
        return (self.m, self.n, self.l)


def angular_factor(m: int, l: int, theta):
    theta = np.asarray(theta, dtype=float)
    if m == 0:
        return np.full_like(theta, 1.0 / np.sqrt(2 * np.pi))
    if l == 1:
        return np.cos(m * theta) / np.sqrt(np.pi)
    return np.sin(m * theta) / np.sqrt(np.pi)


def radial_part(entry: PswfEntry, r) -> np.ndarray:
    J = len(entry.radial_coeffs)
    return entry.radial_coeffs @ zernike_radial(entry.m, J, np.asarray(r, dtype=float))


def eval_pswf(entry: PswfEntry, points, extend: bool = False) -> np.ndarray:
    """ψ_{m,n,l} at an ``(npts, 2)`` array of points in the closed disk.

    With ``extend`` the polynomial radial part is evaluated as is slightly
    outside B (used for cell centers of partially covered pixels).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.hypot(pts[:, 0], pts[:, 1])
    if extend:
        if np.any(r > 1.5):
            raise InvalidArgument("extension is only meant for points near the circle")
    elif np.any(r > 1.0 + 1e-12):
        raise InvalidArgument("point outside the closed unit disk")
    else:
        r = np.minimum(r, 1.0)
    th = np.arctan2(pts[:, 1], pts[:, 0])
    return radial_part(entry, r) * angular_factor(entry.m, entry.l, th)


@dataclass
class FourierQuadrature:
    """Polar rule that evaluates F^k ψ on the p-node radii.

    For a mode with angular factor Θ_m, (F^k ψ)(ρ, φ) = g(ρ) Θ_m(φ) with
    g(ρ) = 2π Σ_q w_q r_q R(r_q) Khat_m(r_q, ρ), where Khat_m is the m-th
    trapezoidal Fourier coefficient of θ -> exp(i c r ρ cos θ).
    """

    c: float
    r: np.ndarray
    w: np.ndarray
    khat: np.ndarray  # (m_max+1, Q, T)

    @classmethod
    def build(cls, c: float, rho: np.ndarray, m_max: int, J: int):
        Q = int(np.ceil((m_max + 2 * J + c + 30) / 2))
        L = 8 * int(np.ceil((c + 25 + m_max) / 8)) + 8
        t, w = roots_legendre(Q)
        r = 0.5 * (t + 1)
        w = 0.5 * w
        th = 2 * np.pi * np.arange(L) / L
        arg = c * r[:, None, None] * rho[None, :, None] * np.cos(th)[None, None, :]
        coef = fft(np.exp(1j * arg), axis=-1) / L
        khat = np.moveaxis(coef[..., :m_max + 1], -1, 0)
        return cls(c, r, w, khat)

    def radial_transform(self, m: int, coeffs: np.ndarray) -> np.ndarray:
        """g(ρ_j) for each column of ``coeffs`` (shape (J, nmodes))."""
        R = coeffs.T @ zernike_radial(m, coeffs.shape[0], self.r)
        return 2 * np.pi * (R * (self.w * self.r)) @ self.khat[m]


def _measure(entries, m, coeffs, quad: FourierQuadrature, P: PNodeSet):
    """Least-squares α and L2(B) residual for the modes of one order m."""
    g = quad.radial_transform(m, coeffs)  # (nmodes, T)
    Rp = coeffs.T @ zernike_radial(m, coeffs.shape[0], P.radii)
    out = []
    for l in ((1,) if m == 0 else (1, 2)):
        Th = angular_factor(m, l, P.angles)
        psi = (Rp[:, :, None] * Th[None, None, :]).reshape(len(Rp), -1)
        Fpsi = (g[:, :, None] * Th[None, None, :]).reshape(len(Rp), -1)
        den = psi ** 2 @ P.weights
        alpha = (Fpsi * psi) @ P.weights / den
        res = np.sqrt(np.abs(np.abs(Fpsi - alpha[:, None] * psi) ** 2 @ P.weights))
        out.append((l, alpha, res))
    return out


@dataclass
class PswfBasis:
    c: float
    alpha_tilde: float
    entries: list
    J: int
    caps: tuple
    pnodes: PNodeSet
    alpha00: complex = 0j
    all_entries: list = field(default_factory=list, repr=False)

    @property
    def k(self) -> float:
        return self.c / 2

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([e.alpha for e in self.entries])

    @property
    def cutoff(self) -> float:
        return self.alpha_tilde * abs(self.alpha00)

    def eval(self, points, extend: bool = False) -> np.ndarray:
        """(size, npts) matrix of retained ψ values."""
        return np.stack([eval_pswf(e, points, extend) for e in self.entries])

    def table(self):
        return [(e.m, e.n, e.l, e.chi, abs(e.alpha), e.residual) for e in self.entries]


def default_caps(c: float):
    return int(np.ceil(c)) + 8, int(np.ceil(c / 2)) + 8


def build_basis(c: float, alpha_tilde: float, caps=None, P: PNodeSet | None = None,
                residual_tol: float = RESIDUAL_TOL) -> PswfBasis:
    """Retained disk PSWFs with |α| >= alpha_tilde |α00|, sorted by descending |α|."""
    if not 0 < alpha_tilde < 1:
        raise InvalidArgument("alpha_tilde must lie in (0, 1)")
    if not c > 0:
        raise InvalidArgument("bandwidth must be positive")
    m_max, n_max = caps if caps is not None else default_caps(c)
    P = P or default_pnodes(c / 2)
    J = n_max + J_BUFFER
    keep = int(np.floor((1 - DISCARD_FRACTION) * J))
    quad = FourierQuadrature.build(c, P.radii, m_max, J)

    allent = []
    for m in range(m_max + 1):
        chi, V = solve_radial_eigs(assemble_sturm_liouville(m, c, J))
        nn = min(n_max + 1, keep)
        coeffs = V[:, :nn]
        for l, alpha, res in _measure(None, m, coeffs, quad, P):
            for n in range(nn):
                allent.append(PswfEntry(m, n, l, float(chi[n]), coeffs[:, n].copy(),
                                        complex(alpha[n]), float(res[n])))
    a00 = next(e.alpha for e in allent if e.key == (0, 0, 1))
    cut = alpha_tilde * abs(a00)
    kept = [e for e in allent if abs(e.alpha) >= cut]
    for e in kept:
        if e.m == m_max or e.n == n_max:
            raise CapTooSmall(f"retained mode {e.key} sits on the cap {(m_max, n_max)}")
        if e.residual > residual_tol * abs(a00):
            raise EigenpairRejected(
                f"mode {e.key}: residual {e.residual:.3e} exceeds {residual_tol:g}*|alpha00|")
    kept.sort(key=lambda e: (-abs(e.alpha), e.m, e.n, e.l))
    return PswfBasis(c, alpha_tilde, kept, J, (m_max, n_max), P, a00, allent)


def prolate_eigenvalue(entry: PswfEntry, c: float, P: PNodeSet,
                       tol: float | None = None) -> complex:
    """Measure α for a single entry; sets ``entry.alpha`` and ``entry.residual``.

    ``tol`` is an absolute residual gate; None skips the gate.
    """
    J = len(entry.radial_coeffs)
    quad = FourierQuadrature.build(c, P.radii, entry.m, J)
    for l, alpha, res in _measure(None, entry.m, entry.radial_coeffs[:, None], quad, P):
        if l == entry.l:
            entry.alpha, entry.residual = complex(alpha[0]), float(res[0])
    if tol is not None and entry.residual > tol:
        raise EigenpairRejected(f"mode {entry.key}: residual {entry.residual:.3e} > {tol:.3e}")
    return entry.alpha


def make_entry(m: int, n: int, l: int, c: float, J: int = 32) -> PswfEntry:
    """Single eigenfunction (without α) from a fresh assembly."""
    chi, V = solve_radial_eigs(assemble_sturm_liouville(m, c, J))
    return PswfEntry(m, n, l, float(chi[n]), V[:, n].copy())


def polar_rule(nr: int = 256, nt: int = 256):
    """Gauss-Legendre x trapezoid rule on B: (points, weights)."""
    t, w = roots_legendre(nr)
    r = 0.5 * (t + 1)
    w = 0.5 * w * r
    th = 2 * np.pi * np.arange(nt) / nt
    R, TH = np.meshgrid(r, th, indexing="ij")
    pts = np.stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()], axis=1)
    return pts, np.repeat(w, nt) * (2 * np.pi / nt)


def gram_matrix(basis: PswfBasis, nr: int = 256, nt: int = 256) -> np.ndarray:
    pts, w = polar_rule(nr, nt)
    V = basis.eval(pts)
    return (V * w) @ V.T


def gram_matrix_pixels(basis: PswfBasis, grid, order: int = 3) -> np.ndarray:
    """Gram matrix with the per-cell Gauss rule of a pixel grid."""
    from .grids import pixel_quadrature

    pts, w, _ = pixel_quadrature(grid, order)
    pts = pts / np.maximum(1.0, np.hypot(pts[:, 0], pts[:, 1]))[:, None]
    V = basis.eval(pts)
    return (V * w) @ V.T
