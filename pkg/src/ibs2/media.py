"""Seeded Gaussian-sum media on the unit disk.

Random streams: numpy PCG64 seeded by ``SeedSequence(seed, spawn_key=(group,))``
with group 0 for γ, 1 for η and 2 for measurement noise.  Within a field the
draws are taken Gaussian by Gaussian in the order (amplitude, radius, angle,
width fraction), and a final magnitude draw follows when ``magnitude`` is set.
Separated media draw (c+, c-, r, θ, R+ fraction, R- fraction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .grids import PixelField, PixelGrid

GAMMA_GROUP, ETA_GROUP, NOISE_GROUP = 0, 1, 2
FWHM_TO_SIGMA = 1.0 / np.sqrt(8.0 * np.log(2.0))


def rng_for(seed: int, group: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(group),))))


@dataclass(frozen=True)
class Gaussian:
    amplitude: float
    x: float
    y: float
    fwhm: float

    @property
    def sigma(self) -> float:
        return self.fwhm * FWHM_TO_SIGMA


@dataclass(frozen=True)
class MediaSpec:
    """Parameters of the random Gaussian-sum media.

    ``magnitude`` (lo, hi), when given, rescales each field so its maximum
    absolute value is a uniform draw from [lo, hi).
    """

    kind: str = "unseparated"
    J: int = 5
    seed: int = 0
    magnitude: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("unseparated", "separated"):
            raise InvalidArgument(f"unknown media kind {self.kind!r}")
        if self.kind == "unseparated" and self.J < 1:
            raise InvalidArgument("J must be >= 1")
        if self.magnitude is not None:
            lo, hi = self.magnitude
            if not 0 <= lo <= hi:
                raise InvalidArgument("magnitude range must satisfy 0 <= lo <= hi")


def draw_unseparated(rng, J: int):
    out = []
    for _ in range(J):
        c = rng.uniform(0.0, 1.0 / J)
        r = rng.uniform(0.0, 0.5)
        th = rng.uniform(0.0, 2 * np.pi)
        x, y = r * np.cos(th), r * np.sin(th)
        R = (1 - max(abs(x), abs(y))) * rng.uniform(0.3, 1.0)
        out.append(Gaussian(c, x, y, R))
    return out


def draw_separated(rng):
    cp = rng.uniform(0.0, 0.5)
    cm = rng.uniform(0.0, 0.5)
    r = rng.uniform(0.0, 0.5)
    th = rng.uniform(0.0, 2 * np.pi)
    out = []
    for c, s in ((cp, 1.0), (cm, -1.0)):
        x = r * np.cos(th) + s * 0.3
        y = r * np.sin(th) + s * 0.3
        R = (1 - max(abs(x + 0.2), abs(y + 0.2))) * rng.uniform(0.3, 1.0)
        out.append(Gaussian(c, x, y, R))
    return out


def gaussian_sum(gaussians, grid: PixelGrid) -> np.ndarray:
    X, Y = grid.coords
    f = np.zeros((grid.n, grid.n))
    for g in gaussians:
        if g.amplitude == 0 or g.sigma <= 0:
            continue
        f += g.amplitude * np.exp(-((X - g.x) ** 2 + (Y - g.y) ** 2) / (2 * g.sigma ** 2))
    return f * grid.support


def _one(spec: MediaSpec, grid: PixelGrid, group: int):
    rng = rng_for(spec.seed, group)
    gs = draw_unseparated(rng, spec.J) if spec.kind == "unseparated" else draw_separated(rng)
    f = gaussian_sum(gs, grid)
    if spec.magnitude is not None:
        target = rng.uniform(*spec.magnitude) if spec.magnitude[1] > spec.magnitude[0] \
            else spec.magnitude[0]
        peak = np.max(np.abs(f))
        if peak > 0:
            f = f * (target / peak)
    return PixelField(grid, f), gs


def generate_media(spec: MediaSpec, grid: PixelGrid):
    """(γ, η) as PixelFields from independent streams."""
    gamma, _ = _one(spec, grid, GAMMA_GROUP)
    eta, _ = _one(spec, grid, ETA_GROUP)
    return gamma, eta


def media_parameters(spec: MediaSpec, grid: PixelGrid):
    """Drawn Gaussians for γ and η (for provenance records)."""
    return _one(spec, grid, GAMMA_GROUP)[1], _one(spec, grid, ETA_GROUP)[1]
