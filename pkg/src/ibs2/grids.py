"""Discretizations of the unit disk B.

Pixel grids carry the contrasts and volume fields; p-node sets carry the
scaled far-field data.  The exact cell/disk clipping used for oscillatory
integrals over B lives here too, since every Fourier-type quadrature in the
package goes through :func:`cell_fourier_weights`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import roots_legendre

from .errors import InvalidArgument, SingularInput

# Gauss-Legendre order per smooth x-subinterval when clipping a cell to B.
_CLIP_ORDER = 16


@dataclass(frozen=True)
class PixelGrid:
    """``n x n`` equispaced cells covering [-1, 1)^2.

    Samples live at cell centers.  ``mask`` marks centers strictly inside B;
    ``support`` marks every cell that meets B with positive area, and
    ``area`` holds the exact area of ``cell ∩ B``.  Fields are stored on the
    support so that partially covered boundary cells still carry a value.
    """

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidArgument(f"grid size must be a positive integer, got {self.n}")

    @property
    def spacing(self) -> float:
        return 2.0 / self.n

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    @cached_property
    def axis(self) -> np.ndarray:
        return -1.0 + self.spacing * (np.arange(self.n) + 0.5)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) center coordinates, ``X[i, j] = axis[i]``."""
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    @cached_property
    def mask(self) -> np.ndarray:
        X, Y = self.coords
        return X ** 2 + Y ** 2 < 1.0

    @cached_property
    def area(self) -> np.ndarray:
        w = clipped_exponential_weights(self, np.zeros((1, 2)))[0].real
        out = np.zeros((self.n, self.n))
        out[self.support_index] = w
        return out

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Second-order corrected integration weights on the support cells."""
        return cell_fourier_weights(self, np.zeros((1, 2)))[0].real

    @cached_property
    def support(self) -> np.ndarray:
        h = self.spacing
        X, Y = self.coords
        # distance from the origin to the closest point of each cell
        dx = np.maximum(np.abs(X) - h / 2, 0.0)
        dy = np.maximum(np.abs(Y) - h / 2, 0.0)
        return dx ** 2 + dy ** 2 < 1.0 - 1e-14

    @cached_property
    def support_index(self) -> tuple[np.ndarray, np.ndarray]:
        return np.nonzero(self.support)

    @cached_property
    def interior(self) -> np.ndarray:
        """Cells entirely inside B."""
        h = self.spacing
        X, Y = self.coords
        fx = np.abs(X) + h / 2
        fy = np.abs(Y) + h / 2
        return fx ** 2 + fy ** 2 <= 1.0

    def points(self) -> np.ndarray:
        """Support-cell centers as an ``(n_support, 2)`` array."""
        X, Y = self.coords
        idx = self.support_index
        return np.stack([X[idx], Y[idx]], axis=1)

    def inner(self, f, g) -> complex:
        """L2(B) inner product <f, g> of two cell-sampled fields."""
        return np.sum(self.area * f * np.conj(g))

    def norm(self, f) -> float:
        return float(np.sqrt(np.sum(self.area * np.abs(f) ** 2)))


@dataclass
class PixelField:
    """Scalar field on a :class:`PixelGrid`; zero off the grid support."""

    grid: PixelGrid
    values: np.ndarray
    gradient: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        n = self.grid.n
        if self.values.shape != (n, n):
            raise InvalidArgument(f"field shape {self.values.shape} does not match grid {n}x{n}")
        self.values = np.where(self.grid.support, self.values, 0)
        if self.gradient is not None:
            self.gradient = np.asarray(self.gradient)
            if self.gradient.shape != (2, n, n):
                raise InvalidArgument("gradient must have shape (2, n, n)")

    def norm(self) -> float:
        return self.grid.norm(self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def real(self) -> "PixelField":
        return PixelField(self.grid, self.values.real.copy())


@dataclass(frozen=True)
class DirectionSet:
    """Equiangular unit directions (cos 2πi/n, sin 2πi/n), i = 0..n-1."""

    n_in: int

    def __post_init__(self):
        if int(self.n_in) != self.n_in or self.n_in < 1:
            raise InvalidArgument("direction count must be a positive integer")

    @cached_property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_in) / self.n_in

    @cached_property
    def vectors(self) -> np.ndarray:
        return np.stack([np.cos(self.angles), np.sin(self.angles)], axis=1)


@dataclass(frozen=True)
class PNodeSet:
    """Gauss-Legendre (radial) x trapezoidal (angular) nodes in B.

    Node ``n = j * M + i`` sits at ``sqrt((t_j + 1)/2) (cos θ_i, sin θ_i)``.
    Its weight ``ω_{t_j} ω_{θ_i} / 4`` integrates over B directly.
    """

    T: int
    M: int

    @cached_property
    def _rule(self):
        t, wt = roots_legendre(self.T)
        return t, wt

    @cached_property
    def radii(self) -> np.ndarray:
        t, _ = self._rule
        return np.sqrt((t + 1.0) / 2.0)

    @cached_property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.M) / self.M

    @cached_property
    def nodes(self) -> np.ndarray:
        r = np.repeat(self.radii, self.M)
        th = np.tile(self.angles, self.T)
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)

    @cached_property
    def weights(self) -> np.ndarray:
        _, wt = self._rule
        return np.repeat(wt, self.M) * (2 * np.pi / self.M) / 4.0

    @property
    def size(self) -> int:
        return self.T * self.M

    @property
    def min_radius(self) -> float:
        return float(self.radii[0])

    def integrate(self, values) -> complex:
        return np.sum(self.weights * values)

    def norm(self, values) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(values) ** 2)))


def build_pnodes(T: int, M: int) -> PNodeSet:
    if int(T) != T or int(M) != M:
        raise InvalidArgument("T and M must be integers")
    if T < 1 or M < 2:
        raise InvalidArgument(f"need T >= 1 and M >= 2, got T={T}, M={M}")
    return PNodeSet(int(T), int(M))


def default_pnodes(k: float) -> PNodeSet:
    """Default node set oversampling the bandwidth 2k: T = ceil(k) + 8, M = 4T."""
    T = int(np.ceil(k)) + 8
    return build_pnodes(T, 4 * T)


@dataclass
class FarFieldMatrix:
    """u∞(x̂_i, θ̂_j; k) over receiver index i and incidence index j."""

    k: float
    values: np.ndarray
    scaled: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise InvalidArgument("far-field matrix must be square (n_in x n_in)")
        if self.values.shape[0] == 0:
            raise InvalidArgument("empty direction set")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgument("far-field matrix has non-finite entries")
        if not self.k > 0:
            raise InvalidArgument("frequency must be positive")

    @property
    def directions(self) -> DirectionSet:
        return DirectionSet(self.values.shape[0])


@dataclass
class PData:
    """Complex samples over ``node_scale * pnodes.nodes`` at frequency k."""

    pnodes: PNodeSet
    k: float
    values: np.ndarray
    node_scale: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.pnodes.size,):
            raise InvalidArgument(
                f"PData length {self.values.shape} does not match {self.pnodes.size} nodes")

    @property
    def points(self) -> np.ndarray:
        return self.node_scale * self.pnodes.nodes


def far_field_factor(k: float) -> complex:
    """sqrt(8π) e^{-iπ/4} k^{-3/2}: maps u∞ to the scaled datum u(p; k)."""
    if not k > 0:
        raise InvalidArgument("frequency must be positive")
    return np.sqrt(8 * np.pi) * np.exp(-0.25j * np.pi) * k ** -1.5


def scale_farfield(F: FarFieldMatrix) -> FarFieldMatrix:
    if F.scaled:
        raise InvalidArgument("far-field matrix is already scaled")
    return FarFieldMatrix(F.k, F.values * far_field_factor(F.k), scaled=True)


def pair_points(directions: DirectionSet) -> np.ndarray:
    """(θ̂_j - x̂_i)/2 for all pairs, flattened receiver-major (index i * n + j)."""
    v = directions.vectors
    return 0.5 * (v[None, :, :] - v[:, None, :]).reshape(-1, 2)


def nearest_pairs(points: np.ndarray, directions: DirectionSet, tie_tol: float = 1e-12):
    """Index pair (i, j) minimizing |p - (θ̂_j - x̂_i)/2| for each point.

    Ties (within ``tie_tol``) go to the smallest i, then the smallest j.
    """
    cand = pair_points(directions)
    n = directions.n_in
    out = np.empty((len(points), 2), dtype=int)
    for s in range(0, len(points), 256):
        p = points[s:s + 256]
        d = np.sqrt(((p[:, None, :] - cand[None, :, :]) ** 2).sum(-1))
        dmin = d.min(axis=1, keepdims=True)
        flat = np.argmax(d <= dmin + tie_tol, axis=1)
        out[s:s + 256, 0] = flat // n
        out[s:s + 256, 1] = flat % n
    return out


def map_farfield_to_pnodes(F_scaled: FarFieldMatrix, P: PNodeSet, node_scale: float = 1.0) -> PData:
    """Nearest-pair reorganization of a scaled far-field matrix onto p-nodes.

    ``node_scale`` selects the points ``node_scale * p_n``; the high-frequency
    component of a dataset uses ``1/ell``.
    """
    if not F_scaled.scaled:
        raise InvalidArgument("map_farfield_to_pnodes expects a scaled far-field matrix")
    dirs = F_scaled.directions
    if dirs.n_in < 4:
        raise InvalidArgument("need at least 4 directions")
    ij = nearest_pairs(node_scale * P.nodes, dirs)
    return PData(P, F_scaled.k, F_scaled.values[ij[:, 0], ij[:, 1]], node_scale=node_scale)


def q_of_p(p) -> np.ndarray:
    """q(p) = sqrt(1-|p|^2)/|p| * rot90(p), so that θ̂ = q + p and x̂ = q - p."""
    p = np.asarray(p, dtype=float)
    r = float(np.hypot(p[0], p[1]))
    if r == 0.0:
        raise SingularInput("q(p) is undefined at p = 0")
    if r > 1.0 + 1e-15:
        raise InvalidArgument(f"|p| = {r} exceeds 1")
    s = np.sqrt(max(0.0, 1.0 - r * r)) / r
    return s * np.array([-p[1], p[0]])


def q_of_points(P: np.ndarray) -> np.ndarray:
    """Row-wise :func:`q_of_p` for an ``(n, 2)`` array."""
    P = np.asarray(P, dtype=float)
    r = np.hypot(P[:, 0], P[:, 1])
    if np.any(r == 0):
        raise SingularInput("q(p) is undefined at p = 0")
    if np.any(r > 1.0 + 1e-15):
        raise InvalidArgument("node outside the closed unit disk")
    s = np.sqrt(np.clip(1.0 - r * r, 0.0, None)) / r
    return s[:, None] * np.stack([-P[:, 1], P[:, 0]], axis=1)


# ---------------------------------------------------------------------------
# exact clipping of cells to B


def _segment_rule(a, b, left_sqrt, right_sqrt, order):
    """Gauss-Legendre nodes on [a, b], graded toward sqrt-type endpoints."""
    v, w = roots_legendre(order)
    v = 0.5 * (v + 1.0)
    w = 0.5 * w
    L = b - a
    if left_sqrt and right_sqrt:
        m = 0.5 * (a + b)
        x1, w1 = _segment_rule(a, m, True, False, order)
        x2, w2 = _segment_rule(m, b, False, True, order)
        return np.concatenate([x1, x2]), np.concatenate([w1, w2])
    if right_sqrt:
        return b - L * v ** 2, 2 * L * v * w
    if left_sqrt:
        return a + L * v ** 2, 2 * L * v * w
    return a + L * v, L * w


@dataclass
class _ClipRule:
    x: np.ndarray      # quadrature abscissae
    wx: np.ndarray     # weights
    ya: np.ndarray     # lower y-limit at each abscissa
    yb: np.ndarray     # upper y-limit
    cell: np.ndarray   # owning boundary-cell index (into the boundary list)


def _clip_rules(grid: PixelGrid, order: int = _CLIP_ORDER) -> _ClipRule:
    h = grid.spacing
    X, Y = grid.coords
    bnd = grid.support & ~grid.interior
    xs, ws, yas, ybs, owner = [], [], [], [], []
    bi = np.nonzero(bnd[grid.support_index])[0]
    pts = grid.points()[bi]
    for c, (xc, yc) in enumerate(pts):
        x0, x1 = xc - h / 2, xc + h / 2
        y0, y1 = yc - h / 2, yc + h / 2
        brk = {max(x0, -1.0), min(x1, 1.0), 0.0}
        for y in (y0, y1):
            if abs(y) < 1:
                s = np.sqrt(1 - y * y)
                brk.update((-s, s))
        brk = sorted(b for b in brk if max(x0, -1.0) <= b <= min(x1, 1.0))
        for a, b in zip(brk[:-1], brk[1:]):
            if b - a <= 1e-15:
                continue
            xq, wq = _segment_rule(a, b, a <= -1.0, b >= 1.0, order)
            s = np.sqrt(np.clip(1 - xq ** 2, 0, None))
            ya = np.maximum(y0, -s)
            yb = np.minimum(y1, s)
            keep = yb > ya
            if not np.any(keep):
                continue
            xs.append(xq[keep]); ws.append(wq[keep])
            yas.append(ya[keep]); ybs.append(yb[keep])
            owner.append(np.full(keep.sum(), c))
    cat = (lambda a: np.concatenate(a)) if xs else (lambda a: np.zeros(0))
    return _ClipRule(cat(xs), cat(ws), cat(yas), cat(ybs),
                     np.concatenate(owner).astype(int) if owner else np.zeros(0, int))


_CLIP_CACHE: dict[int, tuple[_ClipRule, np.ndarray]] = {}


def _clip_for(grid: PixelGrid):
    hit = _CLIP_CACHE.get(grid.n)
    if hit is None:
        bnd = (grid.support & ~grid.interior)[grid.support_index]
        hit = (_clip_rules(grid), np.nonzero(bnd)[0])
        _CLIP_CACHE[grid.n] = hit
    return hit


def _sinc(z):
    return np.sinc(z / np.pi)


def _boundary_data(grid: PixelGrid):
    """Clip rule plus the per-point constants shared by all frequencies."""
    from scipy import sparse

    rule, bidx = _clip_for(grid)
    key = ("bdata", grid.n)
    hit = _CLIP_CACHE.get(key)
    if hit is None:
        ctr = grid.points()[bidx][rule.cell] if len(bidx) else np.zeros((0, 2))
        L = rule.yb - rule.ya
        mid = 0.5 * (rule.yb + rule.ya)
        agg = sparse.csr_matrix((np.ones(len(rule.x)), (np.arange(len(rule.x)), rule.cell)),
                                shape=(len(rule.x), len(bidx)))
        hit = (rule, bidx, L, mid, rule.x - ctr[:, 0], mid - ctr[:, 1], agg)
        _CLIP_CACHE[key] = hit
    return hit


def _boundary_weights(grid: PixelGrid, omegas: np.ndarray, first: bool):
    """Clipped integrals over boundary cells (and first moments if ``first``).

    Gauss-Legendre in x; the y integral of exp(iω_y y) times 1 or (y - y_c)
    is done analytically.
    """
    rule, bidx, L, mid, dx, dmid, agg = _boundary_data(grid)
    wx, wy = omegas[:, 0:1], omegas[:, 1:2]
    e = rule.wx[None, :] * np.exp(1j * (wx * rule.x[None, :] + wy * mid[None, :]))
    m0, m1, _ = _moments_1d(wy * L[None, :] / 2, L[None, :])
    base = e * m0
    S = (agg.T @ base.T).T
    if not first:
        return bidx, S
    Dx = (agg.T @ (base * dx[None, :]).T).T
    Dy = (agg.T @ (base * dmid[None, :] + e * m1).T).T
    return bidx, S, Dx, Dy


def clipped_exponential_weights(grid: PixelGrid, omegas) -> np.ndarray:
    """S[a, c] = ∫_{cell_c ∩ B} exp(i ω_a · y) dy over support cells c.

    Interior cells use the closed form; boundary cells are clipped exactly to
    the circle (Gauss-Legendre in x with breakpoints, analytic in y).
    """
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    h = grid.spacing
    pts = grid.points()
    wx, wy = omegas[:, 0:1], omegas[:, 1:2]
    W = (h * h) * np.exp(1j * (wx * pts[None, :, 0] + wy * pts[None, :, 1]))
    W *= _sinc(wx * h / 2) * _sinc(wy * h / 2)
    bidx, S = _boundary_weights(grid, omegas, first=False)
    if len(bidx):
        W[:, bidx] = S
    return W


# ---------------------------------------------------------------------------
# second-order corrected weights
#
# A field known at cell centers is expanded to second order inside each cell,
# f(y_c + d) ≈ f_c + g·d + ½ dᵀHd, with g and H from finite differences on the
# support.  Integrating against exp(iω·y) gives moment weights that multiply
# g and H; the finite-difference stencils are then folded back onto the cell
# values, so the result is again one weight per cell.  Constants are
# integrated exactly and smooth fields to O(h^4) away from the boundary ring.


def _moments_1d(a, h):
    """∫ t^j exp(i ω t) dt over [-h/2, h/2] for j = 0, 1, 2, with a = ωh/2."""
    a = np.asarray(a, dtype=float)
    small = np.abs(a) < 1e-2
    aa = np.where(small, 1.0, a)
    sa, ca = np.sin(aa), np.cos(aa)
    g0 = sa / aa
    g1 = (sa - aa * ca) / (aa * aa)
    g2 = ((aa * aa - 2) * sa + 2 * aa * ca) / aa ** 3
    if np.any(small):
        b = np.broadcast_to(a, g0.shape)[small]
        b2 = b * b
        g0[small] = 1 - b2 / 6 + b2 * b2 / 120
        g1[small] = b / 3 - b * b2 / 30 + b * b2 * b2 / 840
        g2[small] = 1 / 3 - b2 / 10 + b2 * b2 / 168
    return h * g0, 0.5j * h * h * g1, 0.25 * h ** 3 * g2


_STENCIL_CACHE: dict = {}


def _stencils(grid: PixelGrid):
    """Sparse finite-difference operators on support values.

    Returns (Gx, Gy, Hxx, Hxy, Hyy).  Gradients are central where both
    neighbors exist and one-sided (second order when possible) otherwise;
    second derivatives are only formed where the full central stencil exists.
    """
    from scipy import sparse

    hit = _STENCIL_CACHE.get(grid.n)
    if hit is not None:
        return hit
    n, h = grid.n, grid.spacing
    I, Jj = grid.support_index
    ns = len(I)
    idx = -np.ones((n + 4, n + 4), dtype=np.int64)  # padded by 2
    idx[I + 2, Jj + 2] = np.arange(ns)

    def nb(di, dj):
        return idx[I + 2 + di, Jj + 2 + dj]

    rows = np.arange(ns)

    def grad(axis):
        step = (lambda s: nb(s, 0)) if axis == 0 else (lambda s: nb(0, s))
        p1, m1, p2, m2 = step(1), step(-1), step(2), step(-2)
        r, c, v = [], [], []

        def add(sel, cols, coef):
            for col, cf in zip(cols, coef):
                r.append(rows[sel]); c.append(col[sel]); v.append(np.full(sel.sum(), cf / h))

        central = (p1 >= 0) & (m1 >= 0)
        add(central, [p1, m1], [0.5, -0.5])
        fwd = ~central & (p1 >= 0)
        fwd2 = fwd & (p2 >= 0)
        add(fwd2, [rows, p1, p2], [-1.5, 2.0, -0.5])
        add(fwd & ~fwd2, [rows, p1], [-1.0, 1.0])
        bwd = ~central & ~fwd & (m1 >= 0)
        bwd2 = bwd & (m2 >= 0)
        add(bwd2, [rows, m1, m2], [1.5, -2.0, 0.5])
        add(bwd & ~bwd2, [rows, m1], [1.0, -1.0])
        return sparse.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                                 shape=(ns, ns))

    def second(axis):
        p1, m1 = (nb(1, 0), nb(-1, 0)) if axis == 0 else (nb(0, 1), nb(0, -1))
        sel = (p1 >= 0) & (m1 >= 0)
        r = np.concatenate([rows[sel]] * 3)
        c = np.concatenate([p1[sel], rows[sel], m1[sel]])
        v = np.concatenate([np.full(sel.sum(), x / h ** 2) for x in (1.0, -2.0, 1.0)])
        return sparse.csr_matrix((v, (r, c)), shape=(ns, ns))

    pp, pm, mp, mm = nb(1, 1), nb(1, -1), nb(-1, 1), nb(-1, -1)
    sel = (pp >= 0) & (pm >= 0) & (mp >= 0) & (mm >= 0)
    r = np.concatenate([rows[sel]] * 4)
    c = np.concatenate([pp[sel], pm[sel], mp[sel], mm[sel]])
    v = np.concatenate([np.full(sel.sum(), x / (4 * h * h)) for x in (1.0, -1.0, -1.0, 1.0)])
    Hxy = sparse.csr_matrix((v, (r, c)), shape=(ns, ns))
    out = (grad(0), grad(1), second(0), Hxy, second(1))
    _STENCIL_CACHE[grid.n] = out
    return out


def _interior_stencils(grid: PixelGrid):
    key = ("inner", grid.n)
    hit = _STENCIL_CACHE.get(key)
    if hit is None:
        Gx, Gy, Hxx, Hxy, Hyy = _stencils(grid)
        inner = np.nonzero(grid.interior[grid.support_index])[0]
        _, bidx = _clip_for(grid)
        hit = (inner, bidx, [G[inner] for G in (Gx, Gy, Hxx, Hxy, Hyy)], Gx[bidx], Gy[bidx])
        _STENCIL_CACHE[key] = hit
    return hit


def _rmul(D, G):
    """Dense (m, r) times sparse (r, ns)."""
    return (G.T @ D.T).T


def cell_fourier_weights(grid: PixelGrid, omegas) -> np.ndarray:
    """W[a, c] such that Σ_c W[a, c] f_c ≈ ∫_B exp(i ω_a · y) f(y) dy.

    ``f_c`` are values at support-cell centers.  The weights combine the
    clipped cell integrals with second-order moment corrections (see above).
    """
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    h = grid.spacing
    inner, bidx, Gin, Gxb, Gyb = _interior_stencils(grid)
    pin = grid.points()[inner]
    wx, wy = omegas[:, 0:1], omegas[:, 1:2]
    E = np.exp(1j * (wx * pin[None, :, 0] + wy * pin[None, :, 1]))
    m0x, m1x, m2x = _moments_1d(wx * h / 2, h)
    m0y, m1y, m2y = _moments_1d(wy * h / 2, h)
    W = np.zeros((len(omegas), len(grid.support_index[0])), complex)
    W[:, inner] = E * (m0x * m0y)
    for G, c in zip(Gin, (m1x * m0y, m0x * m1y, 0.5 * m2x * m0y, m1x * m1y, 0.5 * m0x * m2y)):
        W += c * _rmul(E, G)
    if len(bidx):
        _, S, Dx, Dy = _boundary_weights(grid, omegas, first=True)
        W[:, bidx] += S
        W += _rmul(Dx, Gxb) + _rmul(Dy, Gyb)
    return W


def fourier_apply(grid: PixelGrid, omegas, V: np.ndarray, chunk: int = 64) -> np.ndarray:
    """(W @ V) for the weights of :func:`cell_fourier_weights`, without forming W.

    ``V`` has shape (n_support, ncol).  The finite-difference stencils act on
    the values, so only the interior phase matrix is built, in row chunks.
    """
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    h = grid.spacing
    Gx, Gy, Hxx, Hxy, Hyy = _stencils(grid)
    inner, bidx, _, _, _ = _interior_stencils(grid)
    V = np.asarray(V)
    ncol = V.shape[1]
    dV = [V, Gx @ V, Gy @ V, Hxx @ V, Hxy @ V, Hyy @ V]
    U = np.concatenate([d[inner] for d in dV], axis=1)
    pin = grid.points()[inner]
    out = np.empty((len(omegas), ncol), complex)
    for s in range(0, len(omegas), chunk):
        om = omegas[s:s + chunk]
        wx, wy = om[:, 0:1], om[:, 1:2]
        E = np.exp(1j * (wx * pin[None, :, 0] + wy * pin[None, :, 1]))
        m0x, m1x, m2x = _moments_1d(wx * h / 2, h)
        m0y, m1y, m2y = _moments_1d(wy * h / 2, h)
        coef = (m0x * m0y, m1x * m0y, m0x * m1y, 0.5 * m2x * m0y, m1x * m1y, 0.5 * m0x * m2y)
        R = (E @ U).reshape(len(om), 6, ncol)
        acc = sum(c * R[:, t] for t, c in enumerate(coef))
        if len(bidx):
            _, S, Dx, Dy = _boundary_weights(grid, om, first=True)
            acc = acc + S @ V[bidx] + Dx @ dV[1][bidx] + Dy @ dV[2][bidx]
        out[s:s + chunk] = acc
    return out


def pixel_quadrature(grid: PixelGrid, order: int = 3):
    """Per-cell Gauss rule on the support: (points, weights, cell index).

    Interior cells get an ``order x order`` tensor rule; boundary cells are
    clipped to the circle (graded rule in x, ``order`` Gauss points in y).
    Cell indices refer to the support ordering of :meth:`PixelGrid.points`.
    """
    v, w = roots_legendre(order)
    h = grid.spacing
    pts = grid.points()
    inner = np.nonzero(grid.interior[grid.support_index])[0]
    dx = 0.5 * h * v
    ox, oy = np.meshgrid(dx, dx, indexing="ij")
    wt = np.outer(w, w).ravel() * (h * h / 4)
    P_in = pts[inner][:, None, :] + np.stack([ox.ravel(), oy.ravel()], axis=1)[None]
    W_in = np.broadcast_to(wt, (len(inner), wt.size))
    C_in = np.repeat(inner, wt.size)
    rule, bidx = _clip_for(grid)
    L = rule.yb - rule.ya
    yq = 0.5 * (rule.ya + rule.yb)[:, None] + 0.5 * L[:, None] * v[None, :]
    P_b = np.stack([np.broadcast_to(rule.x[:, None], yq.shape), yq], axis=-1).reshape(-1, 2)
    W_b = ((rule.wx * L / 2)[:, None] * w[None, :]).ravel()
    C_b = np.repeat(bidx[rule.cell], order)
    return (np.concatenate([P_in.reshape(-1, 2), P_b]), np.concatenate([W_in.ravel(), W_b]),
            np.concatenate([C_in, C_b]))
