"""Run configuration: JSON with nested sections or dotted keys."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

DEFAULTS = {
    "grid.n_out": 64,
    "directions.n_in": 64,
    "freq.k": 5.0,
    "freq.ell": 2.0,
    "pnodes.T": None,
    "pnodes.M": None,
    "recon.alpha_tilde": 0.9,
    "recon.epsilon": None,
    "recon.N": 1,
    "recon.term_frequencies": None,
    "synth.J_max": 20,
    "synth.tol": 1e-8,
    "noise.level": 0.02,
    "noise.seed": 0,
    "media.kind": "unseparated",
    "media.J": 5,
    "media.seed": 0,
    "media.magnitude": None,
}


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        flat = _flatten(d)
        unknown = sorted(set(flat) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        vals = dict(DEFAULTS)
        vals.update(flat)
        cfg = cls(vals)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config root must be an object")
        return cls.from_dict(d)

    def validate(self):
        v = self.values

        def num(key, lo=None, integer=False, allow_none=False):
            x = v[key]
            if x is None and allow_none:
                return
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ConfigError(f"{key} must be a number")
            if integer and int(x) != x:
                raise ConfigError(f"{key} must be an integer")
            if lo is not None and not x > lo:
                raise ConfigError(f"{key} must exceed {lo}")

        num("grid.n_out", 0, integer=True)
        num("directions.n_in", 3, integer=True)
        num("freq.k", 0.5)
        num("freq.ell", 1)
        num("pnodes.T", 0, integer=True, allow_none=True)
        num("pnodes.M", 1, integer=True, allow_none=True)
        num("recon.alpha_tilde", 0)
        if not v["recon.alpha_tilde"] < 1:
            raise ConfigError("recon.alpha_tilde must lie in (0, 1)")
        num("recon.epsilon", 0, allow_none=True)
        num("recon.N", 0, integer=True)
        num("synth.J_max", 0, integer=True)
        num("synth.tol", 0)
        num("noise.level", -1e-300)
        num("noise.seed", -1, integer=True)
        num("media.J", 0, integer=True)
        num("media.seed", -1, integer=True)
        if v["media.kind"] not in ("unseparated", "separated"):
            raise ConfigError("media.kind must be 'unseparated' or 'separated'")
        mag = v["media.magnitude"]
        if mag is not None and (not isinstance(mag, (list, tuple)) or len(mag) != 2):
            raise ConfigError("media.magnitude must be a [lo, hi] pair")
        tf = v["recon.term_frequencies"]
        if tf is not None:
            if not isinstance(tf, list) or not all(isinstance(p, (list, tuple)) and len(p) == 2 for p in tf):
                raise ConfigError("recon.term_frequencies must be a list of [k, lk] pairs")

    def to_dict(self) -> dict:
        out: dict = {}
        for key, val in self.values.items():
            sec, name = key.split(".", 1)
            out.setdefault(sec, {})[name] = val
        return out

    # typed accessors ---------------------------------------------------------

    @property
    def k(self) -> float:
        return float(self["freq.k"])

    @property
    def ell(self) -> float:
        return float(self["freq.ell"])

    def pnodes(self):
        from .grids import build_pnodes, default_pnodes

        T, M = self["pnodes.T"], self["pnodes.M"]
        if T is None and M is None:
            return default_pnodes(self.k)
        P0 = default_pnodes(self.k)
        return build_pnodes(int(T or P0.T), int(M or P0.M))

    def media_spec(self):
        from .media import MediaSpec

        mag = self["media.magnitude"]
        return MediaSpec(self["media.kind"], int(self["media.J"]), int(self["media.seed"]),
                         tuple(mag) if mag is not None else None)

    def recon_params(self):
        from .inverse import ReconParams

        tf = self["recon.term_frequencies"]
        return ReconParams(float(self["recon.alpha_tilde"]), self["recon.epsilon"], self.ell,
                           int(self["recon.N"]), [tuple(p) for p in tf] if tf else None)


def save_config(cfg: RunConfig, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
