"""Command-line entry point.

Examples::

    tomoprior simulate --config needle.cfg --out runs/sim
    tomoprior project --image runs/sim/truth_0.tpri --views 30 -o sino.tpri
    tomoprior reconstruct --sino sino.tpri --method cs-dct -o recon.tpri
    tomoprior reconstruct --sino sino.tpri --method wprior --templates t1.tpri t2.tpri
    tomoprior evaluate --recon recon.tpri --truth runs/sim/truth_0.tpri --roi 20,17,60,69
    tomoprior protocol --config needle.cfg --out runs/needle --threads 2
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig, build_config, load_config
from .core import ConfigError, FormatError, Geometry, RoI, SolverError, forward_project
from .evaluation import evaluate
from .phantoms import generate_longitudinal
from .pipeline import calibrate_k, run_ksweep, run_protocol
from .prior import PriorParams, build_eigenspace, reconstruct_unweighted, reconstruct_weighted
from .recon import Method, SolverParams, reconstruct
from .transforms import BasisKind
from .weights import WeightsParams, compute_weights

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_FORMAT = 0, 2, 3, 4
RECON_METHODS = ("fbp", "art", "sart", "sirt", "cs-dct", "cs-haar", "prior", "wprior")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _roi(text: str) -> RoI:
    vals = _floats(text)
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("roi needs x0,y0,x1,y1")
    return RoI(*(int(v) for v in vals))


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("TOMOPRIOR_THREADS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"TOMOPRIOR_THREADS must be an integer, got {env!r}") from exc
    return None


def _config(args) -> RunConfig:
    kw = dict(seed=args.seed, out_dir=args.out, threads=_threads(args))
    if args.config:
        return load_config(args.config, **kw)
    return build_config({}, **kw)


def _out_dir(args) -> Path:
    return Path(args.out) if args.out else Path(".")


def _write_image(path: Path, img, weights=False) -> None:
    (io.save_weights if weights else io.save_image)(path, img)
    # the display copy is the only place negative values are clamped
    io.save_pgm(path.with_suffix(".pgm"), img, lo=0.0,
                hi=1.0 if weights else max(float(np.max(img)), 1e-12))
    print(f"wrote {path}")


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = cfg.out_dir or _out_dir(args)
    for t, (img, views) in enumerate(zip(generate_longitudinal(cfg.scenario), cfg.views)):
        _write_image(out / f"truth_{t}.tpri", img)
        sino = forward_project(img, Geometry.equispaced(views, cfg.size,
                                                        bin_spacing=cfg.bin_spacing))
        io.save_sinogram(out / f"sino_{t}.tpri", sino)
        print(f"wrote {out / f'sino_{t}.tpri'} ({views} views)")
    return EXIT_OK


def cmd_project(args) -> int:
    img = io.load_image(args.image)
    h, w = img.shape
    geom = Geometry.equispaced(args.views, w, h, bin_spacing=args.bin_spacing)
    path = Path(args.output) if args.output else _out_dir(args) / "sino.tpri"
    io.save_sinogram(path, forward_project(img, geom))
    print(f"wrote {path} ({args.views} views x {geom.num_bins} bins)")
    return EXIT_OK


def _image_size(args, templates) -> tuple[int, int]:
    if templates:
        h, w = templates[0].shape
        return w, h
    if args.size:
        return args.size, args.size
    raise ConfigError("--size is required without --templates")


def cmd_reconstruct(args) -> int:
    sino = io.load_sinogram(args.sino)
    templates = [io.load_image(p) for p in args.templates or ()]
    width, height = _image_size(args, templates)
    cfg = _config(args) if args.config else None
    if args.method in ("prior", "wprior"):
        if len(templates) < 2:
            raise ConfigError(f"--method {args.method} needs at least two --templates")
        prior = build_eigenspace(templates)
        params = cfg.prior if cfg else PriorParams()
        if args.lambda1 is not None or args.lambda2 is not None:
            params = replace(params,
                             lambda1=params.lambda1 if args.lambda1 is None else args.lambda1,
                             lambda2=params.lambda2 if args.lambda2 is None else args.lambda2)
        basis = BasisKind(args.basis)
        if args.method == "prior":
            x = reconstruct_unweighted(sino, width, height, prior, basis, params)
        else:
            if args.weights:
                w = io.load_image(args.weights)
            else:
                wp = cfg.weights if cfg else WeightsParams()
                if args.k is not None:
                    wp = replace(wp, k=args.k)
                w = compute_weights(sino, templates, wp, _threads(args) or 1)
            x = reconstruct_weighted(sino, width, height, prior, w, basis, params)
    else:
        method = Method.parse(args.method)
        base = SolverParams.algebraic() if method in (Method.ART, Method.SART, Method.SIRT) \
            else SolverParams()
        params = replace(base, seed=args.seed or 0)
        if args.iters is not None:
            params = replace(params, max_iters=args.iters)
        if args.lambda1 is not None:
            params = replace(params, lambda1=args.lambda1)
        x = reconstruct(method, sino, width, height, params, filter=args.filter)
    path = Path(args.output) if args.output else _out_dir(args) / f"recon_{args.method}.tpri"
    _write_image(path, x)
    return EXIT_OK


def cmd_weights(args) -> int:
    sino = io.load_sinogram(args.sino)
    templates = [io.load_image(p) for p in args.templates]
    wp = _config(args).weights if args.config else WeightsParams()
    if args.k is not None:
        wp = replace(wp, k=args.k)
    if args.methods:
        wp = replace(wp, methods=tuple(Method.parse(m) for m in args.methods.split(",")))
    w = compute_weights(sino, templates, wp, _threads(args) or 1)
    path = Path(args.output) if args.output else _out_dir(args) / "weights.tpri"
    _write_image(path, w, weights=True)
    print(f"mean W {w.mean():.4f}  min W {w.min():.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    recon = io.load_image(args.recon)
    truth = io.load_image(args.truth)
    m = evaluate(recon, truth, args.roi, args.window)
    print("ssim_global,ssim_roi,rmse,psnr")
    print(f"{m.ssim_global!r},{m.ssim_roi!r},{m.rmse!r},{m.psnr!r}")
    return EXIT_OK


def _report(rep) -> int:
    sys.stdout.write(rep.summary())
    rep.raise_for_error()
    return EXIT_OK


def cmd_protocol(args) -> int:
    return _report(run_protocol(_config(args)))


def cmd_ksweep(args) -> int:
    return _report(run_ksweep(_config(args), args.k))


def cmd_calibrate(args) -> int:
    rep = calibrate_k(_config(args), args.k)
    code = _report(rep)
    print(f"chosen k = {rep.extras['chosen_k']:g}")
    return code


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="key = value run configuration file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker bound for pilot reconstructions "
                             "(fallback: TOMOPRIOR_THREADS)")

    p = argparse.ArgumentParser(prog="tomoprior", parents=[common],
                                description="Prior-regularised few-view tomography.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write phantom scans and sinograms")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("project", parents=[common], help="forward project an image")
    s.add_argument("--image", required=True)
    s.add_argument("--views", type=int, required=True)
    s.add_argument("--bin-spacing", type=float, default=1.0)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("reconstruct", parents=[common], help="reconstruct a sinogram")
    s.add_argument("--sino", required=True)
    s.add_argument("--method", choices=RECON_METHODS, required=True)
    s.add_argument("--size", type=int, help="image side when no templates are given")
    s.add_argument("--templates", nargs="+", help="template images (prior, wprior)")
    s.add_argument("--weights", help="precomputed weights map (wprior)")
    s.add_argument("--basis", choices=[b.value for b in BasisKind], default="dct2")
    s.add_argument("--filter", choices=("ramlak", "shepp-logan", "hann"), default="ramlak")
    s.add_argument("--iters", type=int)
    s.add_argument("--lambda1", type=float)
    s.add_argument("--lambda2", type=float)
    s.add_argument("--k", type=float)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("weights", parents=[common], help="compute a weights map")
    s.add_argument("--sino", required=True)
    s.add_argument("--templates", nargs="+", required=True)
    s.add_argument("--k", type=float)
    s.add_argument("--methods", help="comma-separated pilot methods")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_weights)

    s = sub.add_parser("evaluate", parents=[common], help="SSIM, RMSE and PSNR of a result")
    s.add_argument("--recon", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--roi", type=_roi)
    s.add_argument("--window", type=int, default=11)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("protocol", parents=[common], help="run the view-escalation protocol")
    s.set_defaults(func=cmd_protocol)

    s = sub.add_parser("ksweep", parents=[common], help="weighted reconstructions over k")
    s.add_argument("--k", type=_floats, help="comma-separated k values")
    s.set_defaults(func=cmd_ksweep)

    s = sub.add_parser("calibrate-k", parents=[common],
                       help="choose k with a held-out template as the test")
    s.add_argument("--k", type=_floats, help="comma-separated candidate k values")
    s.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("config", "seed", "out", "threads"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
