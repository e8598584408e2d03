"""Command line interface: ``ibs2 <subcommand> ...``.

Exit codes: 0 success, 2 configuration or argument errors, 3 numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, Ibs2Error, InvalidArgument, NumericFailure

log = logging.getLogger("ibs2")


def _cmd_pswf(args):
    from .grids import build_pnodes, default_pnodes
    from .io import cached_basis, save_basis, write_json

    P = build_pnodes(args.T, args.M) if args.T and args.M else default_pnodes(args.k)
    b = cached_basis(2 * args.k, args.alpha_tilde, P)
    out = Path(args.out)
    rows = [{"m": e.m, "n": e.n, "l": e.l, "chi": e.chi, "abs_alpha": abs(e.alpha),
             "alpha": [e.alpha.real, e.alpha.imag], "residual": e.residual} for e in b.entries]
    write_json(out.with_suffix(".json"), {"c": b.c, "alpha_tilde": b.alpha_tilde,
                                          "alpha00": [b.alpha00.real, b.alpha00.imag],
                                          "caps": list(b.caps), "J": b.J, "entries": rows})
    save_basis(b, out.with_suffix(".npz"))
    print(f"{'m':>3} {'n':>3} {'l':>2} {'chi':>14} {'|alpha|':>12} {'residual':>10}")
    for r in rows:
        print(f"{r['m']:>3} {r['n']:>3} {r['l']:>2} {r['chi']:>14.6f} {r['abs_alpha']:>12.8f} "
              f"{r['residual']:>10.2e}")
    return 0


def _cmd_synth(args):
    from .born import add_noise, synthesize
    from .config import RunConfig
    from .grids import PixelGrid
    from .io import write_dataset, write_field, write_json
    from .media import generate_media, media_parameters

    cfg = RunConfig.load(args.config)
    grid = PixelGrid(int(cfg["grid.n_out"]))
    spec = cfg.media_spec()
    gamma, eta = generate_media(spec, grid)
    P = cfg.pnodes()
    data = synthesize(gamma, eta, cfg.k, cfg.ell, int(cfg["synth.J_max"]), float(cfg["synth.tol"]), P)
    data = add_noise(data, float(cfg["noise.level"]), int(cfg["noise.seed"]))
    gp, ep = media_parameters(spec, grid)
    data.provenance["media"] = {"kind": spec.kind, "J": spec.J, "seed": spec.seed,
                                "magnitude": list(spec.magnitude) if spec.magnitude else None}
    out = Path(args.out)
    write_dataset(out / "data.ibs2", data)
    meta = {"role": "truth", "media": data.provenance["media"]}
    write_field(out / "gamma.fld", gamma, {**meta, "field": "gamma",
                                           "gaussians": [g.__dict__ for g in gp]})
    write_field(out / "eta.fld", eta, {**meta, "field": "eta",
                                       "gaussians": [g.__dict__ for g in ep]})
    write_json(out / "config.json", cfg.to_dict())
    if not np.all(data.converged):
        print(f"warning: {int(np.sum(~data.converged))} nodes did not converge", file=sys.stderr)
    print(f"wrote {out / 'data.ibs2'}")
    return 0


def _cmd_import(args):
    from .born import ScatterDataset
    from .grids import build_pnodes, default_pnodes, map_farfield_to_pnodes, scale_farfield
    from .io import read_farfield, write_dataset, write_pdata

    F = read_farfield(args.farfield, args.k)
    P = build_pnodes(args.T, args.M) if args.T and args.M else default_pnodes(F.k)
    low = map_farfield_to_pnodes(scale_farfield(F), P)
    if args.farfield_lk is None:
        write_pdata(args.out, low, {"kind": "imported", "source": str(args.farfield)})
        print(f"wrote {args.out}")
        return 0
    ell = args.ell
    Fh = read_farfield(args.farfield_lk, None if ell is None else ell * F.k)
    ell = ell or Fh.k / F.k
    high = map_farfield_to_pnodes(scale_farfield(Fh), P, node_scale=1 / ell)
    data = ScatterDataset(low, high, ell, {"kind": "imported", "low": str(args.farfield),
                                           "high": str(args.farfield_lk)})
    write_dataset(args.out, data)
    print(f"wrote {args.out}")
    return 0


def _load_run(args):
    from .config import RunConfig
    from .io import cached_basis, read_dataset

    cfg = RunConfig.load(args.config)
    data = read_dataset(args.data)
    if abs(data.k - cfg.k) > 1e-12 * cfg.k or abs(data.ell - cfg.ell) > 1e-12:
        raise ConfigError("dataset frequencies disagree with the config")
    basis = cached_basis(2 * data.k, float(cfg["recon.alpha_tilde"]), data.pnodes)
    return cfg, data, basis


def _cmd_invert(args):
    from .analysis import compute_bounds, measure_M, rel_l2_error
    from .grids import PixelGrid
    from .inverse import convergence_diagnostics, ibs_reconstruct
    from .io import read_field, write_field, write_json

    cfg, data, basis = _load_run(args)
    grid = PixelGrid(int(cfg["grid.n_out"]))
    params = cfg.recon_params()
    res = ibs_reconstruct(data, basis, params, grid)
    out = Path(args.out)
    for j, (g, e) in enumerate(res.terms, start=1):
        write_field(out / f"gamma_term{j}.fld", g, {"term": j, "field": "gamma"})
        write_field(out / f"eta_term{j}.fld", e, {"term": j, "field": "eta"})
    for j in range(1, len(res.partial_sums) + 1):
        g, e = res.estimate(j)
        write_field(out / f"gamma_sum{j}.fld", g, {"partial_sum": j, "field": "gamma"})
        write_field(out / f"eta_sum{j}.fld", e, {"partial_sum": j, "field": "eta"})
    eps = params.eps_for(data.pnodes)
    metrics = {"term_norms": res.term_norms, "imag_norms": res.imag_norms, "ratios": res.ratios,
               "tuples_evaluated": {str(k): v for k, v in res.tuples_evaluated.items()},
               "truncated_at": res.truncated_at, "warnings": res.warnings, "epsilon": eps,
               "alpha_cutoff": basis.cutoff, "basis_size": basis.size}
    truth_dir = Path(args.truth) if args.truth else None
    if truth_dir is not None:
        gt, _ = read_field(truth_dir / "gamma.fld")
        et, _ = read_field(truth_dir / "eta.fld")
        metrics["errors"] = [rel_l2_error((gt, et), res.estimate(j))[0]
                             for j in range(1, len(res.partial_sums) + 1)]
        M = measure_M(gt, et)
        M_script = float(np.hypot(gt.norm(), et.norm()))
        mode = "validation"
    else:
        g, e = res.estimate()
        M = measure_M(g, e)
        M_script = float(np.hypot(g.norm(), e.norm()))
        mode = "blind"
    rep = compute_bounds(data.k, data.ell, params.alpha_tilde, eps, M, res.term_norms[0],
                         len(res.partial_sums), M_script, mode, basis.cutoff)
    d = convergence_diagnostics(res, rep)
    metrics["diagnostics"] = d.__dict__
    metrics["bounds"] = rep.as_dict()
    write_json(out / "metrics.json", metrics)
    print(f"terms: {len(res.terms)}; norms: " + ", ".join(f"{x:.4e}" for x in res.term_norms))
    if "errors" in metrics:
        print("joint relative errors by N: " + ", ".join(f"{e[2]:.4f}" for e in metrics["errors"]))
    return 0


def _cmd_bounds(args):
    from .analysis import compute_bounds, measure_M
    from .config import RunConfig
    from .grids import PixelGrid
    from .io import write_json
    from .media import generate_media

    cfg = RunConfig.load(args.config)
    P = cfg.pnodes()
    eps = cfg["recon.epsilon"] or P.min_radius
    gamma, eta = generate_media(cfg.media_spec(), PixelGrid(int(cfg["grid.n_out"])))
    rep = compute_bounds(cfg.k, cfg.ell, float(cfg["recon.alpha_tilde"]), eps, measure_M(gamma, eta))
    d = rep.as_dict()
    if args.out:
        write_json(args.out, d)
    for k, v in d.items():
        if v is None or v == "":
            continue
        print(f"{k:>20} = {v:.12g}" if isinstance(v, float) else f"{k:>20} = {v}")
    return 0


def _cmd_render(args):
    from .io import read_field
    from .render import render_panels

    fields = [read_field(p)[0].values for p in args.fields]
    nrow = args.rows
    if len(fields) % nrow:
        raise ConfigError("number of fields must be a multiple of --rows")
    ncol = len(fields) // nrow
    rows = [fields[i * ncol:(i + 1) * ncol] for i in range(nrow)]
    if args.labels:
        labs = args.labels
        if len(labs) != len(fields):
            raise ConfigError("--labels must match --fields")
    else:
        names = ["γ", "η"] if nrow == 2 else [f"f{r}" for r in range(nrow)]
        labs = [f"{names[i]}_{j + 1}" for i in range(nrow) for j in range(ncol)]
    labels = [labs[i * ncol:(i + 1) * ncol] for i in range(nrow)]
    render_panels(rows, args.out, labels, args.title)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ibs2", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("pswf", help="build and cache a disk PSWF basis")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--alpha-tilde", type=float, default=0.9)
    p.add_argument("--T", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--out", required=True, help="output stem (.json table and .npz basis)")
    p.set_defaults(func=_cmd_pswf)

    p = sub.add_parser("synth", help="media, forward synthesis and noise")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("import", help="scale and map external far-field matrices to p-nodes")
    p.add_argument("--farfield", required=True)
    p.add_argument("--k", type=float)
    p.add_argument("--farfield-lk")
    p.add_argument("--ell", type=float)
    p.add_argument("--T", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_import)

    p = sub.add_parser("invert", help="run the truncated inverse Born series")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="directory holding gamma.fld and eta.fld")
    p.set_defaults(func=_cmd_invert)

    p = sub.add_parser("bounds", help="print the convergence constants")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("render", help="PNG heatmaps of field files")
    p.add_argument("--fields", nargs="+", required=True)
    p.add_argument("--rows", type=int, default=2)
    p.add_argument("--labels", nargs="+")
    p.add_argument("--title")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_render)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidArgument, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    except Ibs2Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
