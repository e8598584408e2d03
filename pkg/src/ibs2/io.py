"""Binary field, far-field and dataset files with JSON sidecars.

Every binary file starts with a 32-byte header::

    magic[8]  version:u32  n:u32  dtype:u32  flags:u32  reserved[8]

followed by a row-major little-endian payload of float64 values (dtype 1) or
interleaved float64 (re, im) pairs (dtype 2).  Far-field and dataset files
store the frequency as a float64 in the reserved bytes.  Writes are atomic.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .born import ScatterDataset
from .errors import ConfigError, InvalidArgument
from .grids import FarFieldMatrix, PData, PixelField, PixelGrid, build_pnodes

VERSION = 1
MAGIC_FIELD = b"IBS2FLD\0"
MAGIC_FAR = b"IBS2FAR\0"
MAGIC_DATA = b"IBS2DAT\0"
REAL, COMPLEX = 1, 2
FLAG_SCALED = 1
FLAG_TWO_COMPONENTS = 2
_HEADER = struct.Struct("<8sIIII8s")


def _atomic_write(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    _atomic_write(path, text.encode())


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o)}")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def sidecar(path) -> Path:
    return Path(str(path) + ".json")


def _payload(values: np.ndarray):
    if np.iscomplexobj(values):
        v = np.ascontiguousarray(values, dtype="<c16")
        return COMPLEX, v.tobytes()
    return REAL, np.ascontiguousarray(values, dtype="<f8").tobytes()


def _decode(buf: bytes, dtype: int, count: int):
    if dtype == REAL:
        arr = np.frombuffer(buf, dtype="<f8", count=count)
    elif dtype == COMPLEX:
        arr = np.frombuffer(buf, dtype="<c16", count=count)
    else:
        raise InvalidArgument(f"unknown dtype tag {dtype}")
    return arr.copy()


def _read_header(path, magic):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise InvalidArgument(f"{path}: truncated header")
    mg, ver, n, dtype, flags, res = _HEADER.unpack_from(raw)
    if mg != magic:
        raise InvalidArgument(f"{path}: bad magic {mg!r}")
    if ver != VERSION:
        raise InvalidArgument(f"{path}: unsupported version {ver}")
    return n, dtype, flags, res, raw[_HEADER.size:]


# fields ---------------------------------------------------------------------


def write_field(path, field: PixelField, meta: dict | None = None):
    dtype, body = _payload(field.values)
    head = _HEADER.pack(MAGIC_FIELD, VERSION, field.grid.n, dtype, 0, b"\0" * 8)
    _atomic_write(path, head + body)
    write_json(sidecar(path), {"grid": {"n": field.grid.n}, **(meta or {})})


def read_field(path):
    n, dtype, _, _, body = _read_header(path, MAGIC_FIELD)
    vals = _decode(body, dtype, n * n).reshape(n, n)
    meta = read_json(sidecar(path)) if sidecar(path).exists() else {}
    return PixelField(PixelGrid(n), vals), meta


# far-field matrices -----------------------------------------------------------


def write_farfield(path, F: FarFieldMatrix):
    _, body = _payload(F.values.astype(complex))
    head = _HEADER.pack(MAGIC_FAR, VERSION, F.values.shape[0], COMPLEX,
                        FLAG_SCALED if F.scaled else 0, struct.pack("<d", F.k))
    _atomic_write(path, head + body)


def read_farfield(path, k: float | None = None) -> FarFieldMatrix:
    """Binary far-field file, or CSV with columns i, j, re, im (needs ``k``)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        if k is None:
            raise ConfigError("CSV far-field import needs --k")
        rows = []
        with open(path, newline="") as fh:
            try:
                for rec in csv.DictReader(fh):
                    rows.append((int(rec["i"]), int(rec["j"]), float(rec["re"]), float(rec["im"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidArgument(f"{path}: malformed far-field CSV ({exc})") from exc
        if not rows:
            raise InvalidArgument("empty far-field CSV")
        n = max(max(r[0], r[1]) for r in rows) + 1
        M = np.full((n, n), np.nan + 0j)
        for i, j, re, im in rows:
            M[i, j] = re + 1j * im
        if np.any(np.isnan(M)):
            raise InvalidArgument("far-field CSV does not cover every (i, j) pair")
        return FarFieldMatrix(k, M)
    n, dtype, flags, res, body = _read_header(path, MAGIC_FAR)
    kf = struct.unpack("<d", res)[0]
    if k is not None and abs(k - kf) > 1e-12 * kf:
        raise ConfigError(f"--k {k} disagrees with file frequency {kf}")
    vals = _decode(body, dtype, n * n).reshape(n, n)
    return FarFieldMatrix(kf, vals, scaled=bool(flags & FLAG_SCALED))


def write_farfield_csv(path, F: FarFieldMatrix):
    lines = ["i,j,re,im"]
    n = F.values.shape[0]
    for i in range(n):
        for j in range(n):
            v = F.values[i, j]
            lines.append(f"{i},{j},{float(v.real)!r},{float(v.imag)!r}")
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


# datasets ---------------------------------------------------------------------


def write_dataset(path, data: ScatterDataset):
    P = data.pnodes
    _, body = _payload(data.stacked)
    head = _HEADER.pack(MAGIC_DATA, VERSION, P.size, COMPLEX, FLAG_TWO_COMPONENTS,
                        struct.pack("<d", data.k))
    _atomic_write(path, head + body)
    meta = {"pnodes": {"T": P.T, "M": P.M}, "k": data.k, "ell": data.ell,
            "high_frequency": data.high.k, "provenance": data.provenance}
    if data.converged is not None:
        meta["converged_nodes"] = int(np.sum(data.converged))
        meta["all_converged"] = bool(np.all(data.converged))
    if data.orders is not None:
        meta["max_order"] = [int(np.max(o)) for o in data.orders]
    write_json(sidecar(path), meta)


def write_pdata(path, data: PData, provenance: dict | None = None):
    """Single-frequency node data (the same container with one component)."""
    P = data.pnodes
    _, body = _payload(np.asarray(data.values, dtype=complex))
    head = _HEADER.pack(MAGIC_DATA, VERSION, P.size, COMPLEX, 0, struct.pack("<d", data.k))
    _atomic_write(path, head + body)
    write_json(sidecar(path), {"pnodes": {"T": P.T, "M": P.M}, "k": data.k,
                               "node_scale": data.node_scale, "provenance": provenance or {}})


def read_pdata(path) -> PData:
    n, dtype, flags, res, body = _read_header(path, MAGIC_DATA)
    if flags & FLAG_TWO_COMPONENTS:
        raise InvalidArgument("file holds a two-frequency dataset; use read_dataset")
    meta = read_json(sidecar(path))
    P = build_pnodes(meta["pnodes"]["T"], meta["pnodes"]["M"])
    if P.size != n:
        raise InvalidArgument("sidecar node counts disagree with the payload")
    return PData(P, struct.unpack("<d", res)[0], _decode(body, dtype, n),
                 node_scale=float(meta.get("node_scale", 1.0)))


def read_dataset(path) -> ScatterDataset:
    n, dtype, flags, res, body = _read_header(path, MAGIC_DATA)
    if not flags & FLAG_TWO_COMPONENTS:
        raise InvalidArgument("dataset file must hold two frequency components")
    meta = read_json(sidecar(path))
    k = struct.unpack("<d", res)[0]
    P = build_pnodes(meta["pnodes"]["T"], meta["pnodes"]["M"])
    if P.size != n:
        raise InvalidArgument("sidecar node counts disagree with the payload")
    v = _decode(body, dtype, 2 * n).reshape(2, n)
    ell = float(meta["ell"])
    return ScatterDataset(PData(P, k, v[0]), PData(P, ell * k, v[1], node_scale=1 / ell), ell,
                          meta.get("provenance", {}))


# basis cache ------------------------------------------------------------------


def cache_dir() -> Path:
    d = os.environ.get("IBS2_CACHE_DIR")
    return Path(d) if d else Path.home() / ".cache" / "ibs2"


def basis_cache_path(c, alpha_tilde, caps, J, T, M) -> Path:
    tag = f"c{c:.12g}_a{alpha_tilde:.12g}_m{caps[0]}_n{caps[1]}_J{J}_T{T}_M{M}".replace(".", "p")
    return cache_dir() / f"pswf_{tag}.npz"


def save_basis(basis, path=None) -> Path:
    path = Path(path) if path else basis_cache_path(basis.c, basis.alpha_tilde, basis.caps,
                                                     basis.J, basis.pnodes.T, basis.pnodes.M)
    ents = basis.entries
    arrs = dict(
        c=basis.c, alpha_tilde=basis.alpha_tilde, J=basis.J, caps=np.array(basis.caps),
        T=basis.pnodes.T, M=basis.pnodes.M, alpha00=basis.alpha00,
        mnl=np.array([e.key for e in ents], dtype=int).reshape(-1, 3),
        chi=np.array([e.chi for e in ents]), alpha=np.array([e.alpha for e in ents]),
        residual=np.array([e.residual for e in ents]),
        coeffs=np.array([e.radial_coeffs for e in ents]).reshape(len(ents), -1),
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npz")
    os.close(fd)
    np.savez(tmp, **arrs)
    os.replace(tmp, path)
    return path


def load_basis(path):
    from .pswf import PswfBasis, PswfEntry

    z = np.load(path)
    ents = [PswfEntry(int(m), int(n), int(l), float(chi), co.copy(), complex(a), float(r))
            for (m, n, l), chi, co, a, r in zip(z["mnl"], z["chi"], z["coeffs"], z["alpha"],
                                               z["residual"])]
    P = build_pnodes(int(z["T"]), int(z["M"]))
    return PswfBasis(float(z["c"]), float(z["alpha_tilde"]), ents, int(z["J"]),
                     tuple(int(x) for x in z["caps"]), P, complex(z["alpha00"]))


def cached_basis(c: float, alpha_tilde: float, P=None):
    """Build the basis or load it from the cache directory."""
    from .grids import default_pnodes
    from .pswf import J_BUFFER, build_basis, default_caps

    P = P or default_pnodes(c / 2)
    caps = default_caps(c)
    path = basis_cache_path(c, alpha_tilde, caps, caps[1] + J_BUFFER, P.T, P.M)
    if path.exists():
        try:
            return load_basis(path)
        except Exception:  # corrupt cache entries are rebuilt
            pass
    b = build_basis(c, alpha_tilde, caps, P)
    try:
        save_basis(b, path)
    except OSError:
        pass
    return b
