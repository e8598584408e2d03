"""Closed-form constants, convergence radii and error bounds for the series.

Everything is computed with |B| = π substituted.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidArgument, MeasureUndefined, OutOfHypothesis
from .grids import PixelField

AREA = np.pi
# explicit proof-level constants for the two radius lower bounds
C_R_INF = 1.0 / (18 * np.sqrt(2) * (3 * np.sqrt(np.pi) + 2 * np.pi / np.sqrt(3)) * np.pi)
C_R_2 = 1.0 / (72 * np.sqrt(2) * (3 * np.sqrt(np.pi) + 2 * np.pi / np.sqrt(3)) * np.pi)


def bound_abc(k: float):
    """(a, b, c): bounds on sup ||G^k(x,.)||, ||F1||, ||F2|| for k > 1/2."""
    if not k > 0.5:
        raise OutOfHypothesis(f"bounds derived for k > 1/2, got k = {k}")
    a = np.sqrt(2 * k + 1) / (2 * k)
    b = np.sqrt(np.pi) * (3 / (2 * k ** 1.5) + np.sqrt(8 * np.pi / 3)) * np.sqrt(k)
    c = k * k * b
    return a, b, c


def mu0(k: float) -> float:
    a, b, c = bound_abc(k)
    return max(1.0, k * b, c / k, k * k * np.sqrt(AREA) * a)


def mu_constants(k: float, ell: float):
    """(μ0(k), μ0(ℓk), ν∞, μ∞)."""
    if not ell > 1:
        raise InvalidArgument("ell must exceed 1")
    m1, m2 = mu0(k), mu0(ell * k)
    return m1, m2, np.sqrt(2) * AREA, np.sqrt(2) * (m1 + m2)


def measure_M(gamma: PixelField, eta: PixelField) -> float:
    """min of the areas of {γ >= ||γ||∞/2} and {η >= ||η||∞/2} (clipped cell areas)."""
    out = []
    for f in (gamma, eta):
        v = np.real(f.values)
        g = f.grid
        top = np.max(np.abs(f.values[g.support]))
        if top == 0:
            raise MeasureUndefined("measure is undefined for an identically zero field")
        out.append(float(np.sum(g.area[(v >= 0.5 * top) & g.support])))
    return min(out)


def radius(mu: float, nu: float, k1dag_norm: float) -> float:
    """r = (2μ(sqrt(16C²+1) + 4C))^{-1} with C = max(2, ν ||K1†||)."""
    if not (mu > 0 and nu > 0 and k1dag_norm >= 0):
        raise InvalidArgument("radius needs positive mu, nu and a non-negative norm")
    C = max(2.0, nu * k1dag_norm)
    return 1.0 / (2 * mu * (np.sqrt(16 * C * C + 1) + 4 * C))


def k1dag_norm_bound(k: float, ell: float, alpha_tilde: float, epsilon: float) -> float:
    """k / (2 τ̃ sqrt(min(k, 2))) with τ̃ = α̃ ε² (1 - ℓ^{-2})."""
    tau = alpha_tilde * epsilon ** 2 * (1 - ell ** -2)
    return k / (2 * tau * np.sqrt(min(k, 2.0)))


def gate_threshold(mu2: float, C_K1: float) -> float:
    """Largest admissible 𝓜 for the approximation-error estimate."""
    return (1 - np.sqrt(1 - 1 / (1 + C_K1))) / mu2


@dataclass
class ErrorBound:
    value: float
    applicable: bool
    reason: str = ""


def error_bound(N, mu2, C2, C_K1, C_ratio, M_script, alpha, epsilon, delta_alpha) -> ErrorBound:
    """Approximation error bound for the N-term truncated series.

    Returns ``applicable = False`` (value inf) when C_ratio >= 1 or the
    smallness gate on 𝓜 fails.
    """
    if not C_ratio < 1:
        return ErrorBound(np.inf, False, f"C_ratio = {C_ratio:.3e} >= 1")
    gate = gate_threshold(mu2, C_K1)
    if not (mu2 * M_script < 1 and M_script < gate):
        return ErrorBound(np.inf, False, f"M = {M_script:.3e} exceeds gate {gate:.3e}")
    first = 2 * mu2 / (np.sqrt(16 * C2 ** 2 + 1) * (1 - C_ratio)) * C_ratio ** (N + 1)
    damp = 1 + (1 - (1 - mu2 * M_script) ** -2) * C_K1
    second = (3 ** -0.5 * np.pi / alpha * epsilon * M_script + delta_alpha) / damp
    return ErrorBound(float(first + second), True, "")


def rel_l2_error(truth, estimate):
    """(e_γ, e_η, e_joint); zero-norm truth components give absolute errors.

    Returns the errors and a tuple of flags marking absolute entries.
    """
    (g, e), (gh, eh) = truth, estimate
    grid = g.grid
    dg = grid.norm(gh.values - g.values)
    de = grid.norm(eh.values - e.values)
    ng, ne = grid.norm(g.values), grid.norm(e.values)
    nj = np.hypot(ng, ne)
    flags = (ng == 0, ne == 0, nj == 0)
    eg = dg / ng if ng > 0 else dg
    ee = de / ne if ne > 0 else de
    ej = np.hypot(dg, de) / nj if nj > 0 else np.hypot(dg, de)
    return (float(eg), float(ee), float(ej)), flags


@dataclass
class BoundsReport:
    k: float
    ell: float
    alpha_tilde: float
    epsilon: float
    a: float
    b: float
    c: float
    mu0_k: float
    mu0_lk: float
    nu_inf: float
    mu_inf: float
    M: float
    nu2: float
    mu2: float
    K1dag_norm_bound: float
    C: float
    C_K1: float
    radius: float
    radius_inf: float
    radius_lower_thm1: float
    radius_lower_thm2: float
    gate: float
    C_ratio: float | None = None
    M_script: float | None = None
    M_mode: str | None = None
    error_bound_N: float | None = None
    error_bound_applicable: bool | None = None
    error_bound_reason: str = ""
    N: int | None = None

    def as_dict(self):
        return {k: (float(v) if isinstance(v, (np.floating,)) else v) for k, v in asdict(self).items()}


def compute_bounds(k: float, ell: float, alpha_tilde: float, epsilon: float, M: float,
                   psi1_norm: float | None = None, N: int | None = None,
                   M_script: float | None = None, M_mode: str | None = None,
                   alpha: float | None = None, delta_alpha: float = 0.0) -> BoundsReport:
    """All constants for one (k, ℓ) configuration.

    ``alpha`` is the absolute cutoff α̃|α00|; the error bound is only
    evaluated when ``psi1_norm``, ``N``, ``M_script`` and ``alpha`` are given.
    """
    if not 0 < M <= np.pi + 1e-9:
        raise InvalidArgument("measure M must lie in (0, π]")
    a, b, c = bound_abc(k)
    m1, m2, nu_inf, mu_inf = mu_constants(k, ell)
    nu2 = 2 * nu_inf / np.sqrt(M)
    mu2 = 2 * mu_inf / np.sqrt(M)
    kn = k1dag_norm_bound(k, ell, alpha_tilde, epsilon)
    C_K1 = nu2 * kn
    C = max(2.0, C_K1)
    r = radius(mu2, nu2, kn)
    r_inf = radius(mu_inf, nu_inf, kn)
    tau_t = alpha_tilde * epsilon ** 2 * (1 - ell ** -2)
    d = 2 * np.sqrt(min(k, 2.0)) / k
    tau = tau_t * d
    lead = (1 + ell ** 1.5) ** -1 * k ** -1.5
    r1 = C_R_INF * lead * min(2 ** -0.5 * np.pi, tau)
    r2 = C_R_2 * lead * np.sqrt(M) * min(np.sqrt(2) * np.pi, tau * np.sqrt(M))
    rep = BoundsReport(k, ell, alpha_tilde, epsilon, a, b, c, m1, m2, nu_inf, mu_inf, M, nu2, mu2,
                       kn, C, C_K1, r, r_inf, r1, r2, gate_threshold(mu2, C_K1))
    if psi1_norm is not None:
        rep.C_ratio = psi1_norm / r
    if None not in (psi1_norm, N, M_script, alpha):
        eb = error_bound(N, mu2, C, C_K1, rep.C_ratio, M_script, alpha, epsilon, delta_alpha)
        rep.error_bound_N, rep.error_bound_applicable, rep.error_bound_reason = \
            eb.value, eb.applicable, eb.reason
        rep.M_script, rep.M_mode, rep.N = M_script, M_mode, N
    return rep
