"""Command-line interface wiring the library into reproducible workflows.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 runtime or
optimization failure, 4 I/O failure. Every failure prints exactly one
machine-parseable line to stderr: ``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import color, pngio
from .errors import (DataFormatError, InsufficientDataError, InvalidInputError,
                     InvalidStateError, OptimizationFailedError)
from .image import ImagePlane, Mask

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _fail(kind: str, message: str, code: int) -> int:
    message = " ".join(str(message).split())
    print(f"error: {kind}: {message}", file=sys.stderr)
    return code


def _limit_threads(n: int | None) -> None:
    if not n:
        return
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        os.environ["OMP_NUM_THREADS"] = str(n)


def _read_image(path: str, linear: bool) -> ImagePlane:
    img = pngio.read_png(path, "srgb" if not linear else "linear-rgb")
    if img.channels == 1:
        img = ImagePlane(np.repeat(img.data, 3, axis=2), img.space)
    if not linear:
        img = color.srgb_to_linear(img)
    return img


def _read_mask(path: str | None, height: int, width: int) -> Mask:
    if path is None:
        return Mask.full(height, width)
    mask = pngio.read_mask_png(path)
    if (mask.height, mask.width) != (height, width):
        raise InvalidInputError(
            f"mask size {mask.height}x{mask.width} does not match image {height}x{width}")
    return mask


def _load_light_json(path: str):
    from .sh import ShLighting
    with open(path) as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("version") != "v1" \
            or "coeffs" not in payload:
        raise DataFormatError(f"{path}: expected {{version: 'v1', coeffs: [27 floats]}}")
    return ShLighting.from_flat(payload["coeffs"])


def _write_light_json(path: str, lighting) -> None:
    with open(path, "w") as f:
        json.dump({"version": "v1", "coeffs": lighting.to_flat()}, f, indent=2)
        f.write("\n")


def _export_srgb(path: str, plane: ImagePlane) -> None:
    pngio.write_png(path, color.to_display_srgb(plane), bits=8)


def _build_parser() -> _Parser:
    p = _Parser(prog="relightkit",
                description="Intrinsic decomposition and relighting toolkit",
                epilog=(
                    "File formats: datasets are PNG directories with a versioned "
                    "manifest.json (16-bit linear images, 16-bit normals encoded "
                    "as round((n+1)/2*65535), lightings as 27 floats basis-major "
                    "RGB-minor); lighting JSON is {version:'v1', coeffs:[27]}; "
                    "checkpoints use the RKCP binary container. Plain PNGs are "
                    "read as sRGB unless --linear is given."))
    p.add_argument("--threads", type=int, default=None,
                   help="cap the BLAS/OpenMP worker pool")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic multi-lit dataset")
    g.add_argument("--scenes", type=int, required=True)
    g.add_argument("--k", type=int, default=5, help="lightings per scene")
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    f = sub.add_parser("fit-pair", help="direct optimization on one multi-lit pair")
    f.add_argument("--img1", required=True)
    f.add_argument("--img2", required=True)
    f.add_argument("--mask")
    f.add_argument("--no-relit", action="store_true",
                   help="drop the cross-relighting term")
    f.add_argument("--iters", type=int, default=400)
    f.add_argument("--lr", type=float, default=0.05)
    f.add_argument("--linear", action="store_true",
                   help="inputs hold linear values (e.g. dataset images)")
    f.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train the compact decomposer")
    t.add_argument("--data", required=True)
    t.add_argument("--mode", choices=["full", "light-only"], default="light-only")
    t.add_argument("--no-relit", action="store_true")
    t.add_argument("--steps", type=int, default=2000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--batch", type=int, default=8)
    t.add_argument("--lr", type=float, default=5e-4)
    t.add_argument("--config", help="TrainConfig JSON file (overrides other flags)")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--log", help="JSONL training log path")
    t.add_argument("--out", required=True)

    d = sub.add_parser("decompose", help="decompose one image with a checkpoint")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--img", required=True)
    d.add_argument("--mask")
    d.add_argument("--linear", action="store_true")
    d.add_argument("--out", required=True)

    r = sub.add_parser("relight", help="render stored components under a lighting")
    r.add_argument("--albedo", required=True, help="16-bit linear albedo PNG")
    r.add_argument("--normals", required=True, help="16-bit normal PNG")
    r.add_argument("--light", required=True, help="lighting JSON")
    r.add_argument("--mask")
    r.add_argument("--out", required=True)

    x = sub.add_parser("transfer-light",
                       help="relight a source image with lighting from a reference")
    x.add_argument("--ckpt", required=True)
    x.add_argument("--source", required=True)
    x.add_argument("--reference", required=True)
    x.add_argument("--mask")
    x.add_argument("--linear", action="store_true")
    x.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--pairs", choices=["all", "anchored"], default="anchored")
    e.add_argument("--out", required=True)

    s = sub.add_parser("serve", help="run the HTTP relighting service")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--static", help="directory with the built studio bundle")
    return p


def _cmd_gen_data(args) -> int:
    from .synthgen import generate_dataset
    manifest = generate_dataset(args.scenes, args.k, args.out,
                                seed=args.seed, size=args.size)
    print(f"wrote {len(manifest['scenes'])} scenes x {manifest['k']} lightings "
          f"to {args.out}")
    return EXIT_OK


def _cmd_fit_pair(args) -> int:
    from . import renderer
    from .fit import FitConfig, fit_pair
    from .losses import LossWeights

    i1 = _read_image(args.img1, args.linear)
    i2 = _read_image(args.img2, args.linear)
    mask = _read_mask(args.mask, i1.height, i1.width)
    weights = LossWeights(lambda_relit=0.0 if args.no_relit else 1.0)
    result = fit_pair(i1, i2, mask, weights,
                      FitConfig(iterations=args.iters, lr=args.lr))
    os.makedirs(args.out, exist_ok=True)
    est = result.estimate
    for idx, (alb, nrm, light) in enumerate(
            ((est.albedo_1, est.normals_1, est.light_1),
             (est.albedo_2, est.normals_2, est.light_2)), start=1):
        pngio.write_png(os.path.join(args.out, f"albedo_{idx}.png"), alb, bits=16)
        pngio.write_normals_png(os.path.join(args.out, f"normals_{idx}.png"), nrm)
        _write_light_json(os.path.join(args.out, f"light_{idx}.json"), light)
    _export_srgb(os.path.join(args.out, "relit_1_with_light_2.png"),
                 renderer.relight(est.albedo_1, est.normals_1, est.light_2, mask))
    _export_srgb(os.path.join(args.out, "relit_2_with_light_1.png"),
                 renderer.relight(est.albedo_2, est.normals_2, est.light_1, mask))
    with open(os.path.join(args.out, "trace.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss"])
        for i, v in enumerate(result.trace):
            w.writerow([i, v])
    print(f"fit finished: loss {result.trace[0]:.4f} -> {result.trace[-1]:.4f}; "
          f"outputs in {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    from .losses import LossWeights
    from .synthgen import load_dataset
    from .train import TrainConfig, train

    samples, _ = load_dataset(args.data)
    if args.config:
        with open(args.config) as f:
            config = TrainConfig.from_dict(json.load(f))
    else:
        config = TrainConfig(supervision=args.mode, use_relit=not args.no_relit,
                             steps=args.steps, seed=args.seed,
                             batch_size=args.batch, lr=args.lr,
                             weights=LossWeights())
    _, logs = train(samples, config, out_path=args.out, log_path=args.log,
                    resume_from=args.resume)
    if logs:
        print(f"trained {len(logs)} steps: loss {logs[0]['total']:.4f} -> "
              f"{logs[-1]['total']:.4f}; checkpoint {args.out}")
    else:
        print(f"nothing to do (already at {args.out})")
    return EXIT_OK


def _cmd_decompose(args) -> int:
    from . import renderer
    from .checkpoint import load_checkpoint
    from .model import decompose_single

    params, _ = load_checkpoint(args.ckpt)
    image = _read_image(args.img, args.linear)
    mask = _read_mask(args.mask, image.height, image.width)
    albedo, normals, light = decompose_single(params, image, mask)
    os.makedirs(args.out, exist_ok=True)
    pngio.write_png(os.path.join(args.out, "albedo.png"), albedo, bits=16)
    pngio.write_normals_png(os.path.join(args.out, "normals.png"), normals)
    _write_light_json(os.path.join(args.out, "light.json"), light)
    shading = renderer.shading(normals, light, mask)
    _export_srgb(os.path.join(args.out, "shading.png"), shading)
    _export_srgb(os.path.join(args.out, "reconstruction.png"),
                 renderer.render(albedo, normals, light, mask))
    print(f"decomposition written to {args.out}")
    return EXIT_OK


def _cmd_relight(args) -> int:
    from . import renderer

    albedo = pngio.read_png(args.albedo, "linear-rgb")
    normals = pngio.read_normals_png(args.normals)
    light = _load_light_json(args.light)
    mask = _read_mask(args.mask, albedo.height, albedo.width)
    out = renderer.relight(albedo, normals, light, mask)
    _export_srgb(args.out, out)
    print(f"relit image written to {args.out}")
    return EXIT_OK


def _cmd_transfer_light(args) -> int:
    from . import renderer
    from .checkpoint import load_checkpoint
    from .model import decompose_single

    params, _ = load_checkpoint(args.ckpt)
    source = _read_image(args.source, args.linear)
    reference = _read_image(args.reference, args.linear)
    mask = _read_mask(args.mask, source.height, source.width)
    albedo, normals, _ = decompose_single(params, source, mask)
    ref_mask = Mask.full(reference.height, reference.width)
    _, _, ref_light = decompose_single(params, reference, ref_mask)
    _export_srgb(args.out, renderer.relight(albedo, normals, ref_light, mask))
    print(f"transferred lighting from {args.reference}; wrote {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .metrics import evaluate_relight
    from .model import decompose_single
    from .synthgen import load_dataset

    params, _ = load_checkpoint(args.ckpt)
    samples, _ = load_dataset(args.data)

    def decomposer(image, mask):
        return decompose_single(params, image, mask)

    report, angle = evaluate_relight(decomposer, samples, pair_mode=args.pairs)
    payload = {"version": "v1", "metrics": report.as_dict(),
               "normal_error": angle.as_dict() if angle else None}
    with open(args.out, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    csv_path = os.path.splitext(args.out)[0] + ".csv"
    report.write_csv(csv_path)
    print(f"eval over {report.n_pairs} pairs: L1 recon {report.l1_recon:.2f}, "
          f"L1 relit {report.l1_relit:.2f}; report at {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint_path=args.ckpt, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "fit-pair": _cmd_fit_pair,
    "train": _cmd_train,
    "decompose": _cmd_decompose,
    "relight": _cmd_relight,
    "transfer-light": _cmd_transfer_light,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    _limit_threads(args.threads)
    try:
        return _COMMANDS[args.command](args)
    except (InvalidInputError, InsufficientDataError, DataFormatError) as exc:
        return _fail("invalid-input", str(exc), EXIT_INVALID)
    except OptimizationFailedError as exc:
        return _fail("optimization-failed", str(exc), EXIT_RUNTIME)
    except InvalidStateError as exc:
        return _fail("invalid-state", str(exc), EXIT_RUNTIME)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_IO)
    except KeyboardInterrupt:
        return _fail("interrupted", "cancelled by user", EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
