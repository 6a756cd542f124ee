"""Command line entry point: ``texturebit {train,binarize,reconstruct,eval,synth,compare}``."""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .baselines import METHODS, compare_grid
from .checkpoint import load_checkpoint
from .images import center_crop_resize, from_tensor, load_image, save_image, to_tensor
from .pipeline import binarize_buffer, evaluate, reconstruct_buffer
from .synthgen import SynthConfig, generate_synthetic_buffer
from .trainer import TrainConfig, train

log = logging.getLogger("texturebit")


def _positive_int(s: str) -> int:
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {s}")
    return v


def _bpp(s: str) -> int:
    v = int(s)
    if not 1 <= v <= 8:
        raise argparse.ArgumentTypeError(f"bpp must be in [1, 8], got {s}")
    return v


class _Parser(argparse.ArgumentParser):
    """Usage errors print one diagnostic line, like runtime errors."""

    def error(self, message):
        self.exit(2, f"{self.prog}: error: {' '.join(message.split())}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="texturebit", description=__doc__)
    ap.add_argument("--log-level", default="WARNING",
                    choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--strict-deterministic", action="store_true",
                       help="single-threaded BLAS and fixed evaluation order")

    t = sub.add_parser("train", help="train a model on a directory of PNGs")
    t.add_argument("--data", required=True, type=Path)
    t.add_argument("--out", required=True, type=Path, help="checkpoint path")
    t.add_argument("--steps", type=_nonneg_int, default=1000)
    t.add_argument("--batch", type=_positive_int, default=16)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--alpha", type=float, default=0.1)
    t.add_argument("--beta", type=float, default=0.1)
    t.add_argument("--r", type=_positive_int, default=8)
    t.add_argument("--synthetic-frac", type=float, default=0.1)
    t.add_argument("--noise", type=float, default=0.1)
    t.add_argument("--resolution", type=_positive_int, default=128)
    t.add_argument("--bpp", type=_bpp, default=1)
    t.add_argument("--decoder-layers", type=_positive_int, default=2)
    t.add_argument("--pre-encoder-layers", type=_positive_int, default=10)
    t.add_argument("--channels", type=_positive_int, default=128,
                   help="channels of the pre-encoder and hidden decoder layers")
    t.add_argument("--kernel", type=_positive_int, default=6)
    t.add_argument("--crop-mode", choices=["resize", "crop"], default="resize")
    t.add_argument("--checkpoint-every", type=_positive_int, default=500)
    t.add_argument("--seed", type=int, default=0)
    common(t)

    b = sub.add_parser("binarize", help="write the binary (or L-level) texture image")
    b.add_argument("--model", required=True, type=Path)
    b.add_argument("--input", required=True, type=Path)
    b.add_argument("--output", required=True, type=Path)
    b.add_argument("--bpp", type=_bpp, default=None)
    common(b)

    r = sub.add_parser("reconstruct", help="recover color from a texture image")
    r.add_argument("--model", required=True, type=Path)
    r.add_argument("--input", required=True, type=Path)
    r.add_argument("--output", required=True, type=Path)
    common(r)

    e = sub.add_parser("eval", help="mean per-channel pixel error of binarize+reconstruct")
    e.add_argument("--model", required=True, type=Path)
    e.add_argument("--data", required=True, type=Path)
    e.add_argument("--resolution", type=_positive_int, default=None,
                   help="center-crop and resize images first")
    common(e)

    s = sub.add_parser("synth", help="write synthetic shape images")
    s.add_argument("--count", required=True, type=_nonneg_int)
    s.add_argument("--resolution", type=_positive_int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, type=Path)
    common(s)

    c = sub.add_parser("compare", help="side-by-side grid of binarization methods")
    c.add_argument("--input", required=True, type=Path)
    c.add_argument("--model", type=Path, default=None)
    c.add_argument("--methods", default="otsu,fsd,ours",
                   help=f"comma-separated subset of {','.join(METHODS)}")
    c.add_argument("--output", required=True, type=Path)
    common(c)
    return ap


def cmd_train(args) -> None:
    cfg = TrainConfig(
        learning_rate=args.lr, batch_size=args.batch, alpha=args.alpha, beta=args.beta,
        r=args.r, synthetic_fraction=args.synthetic_frac, input_noise=args.noise,
        steps=args.steps, seed=args.seed, resolution=args.resolution, target_bpp=args.bpp,
        decoder_layers=args.decoder_layers, pre_encoder_layers=args.pre_encoder_layers,
        pre_encoder_channels=args.channels, decoder_channels=args.channels,
        kernel_size=args.kernel, crop_mode=args.crop_mode,
        checkpoint_every=args.checkpoint_every,
        strict_deterministic=args.strict_deterministic,
    )
    train(args.data, cfg, args.out)


def cmd_binarize(args) -> None:
    params = load_checkpoint(args.model)
    if args.bpp is not None and args.bpp != params.config.target_bpp:
        raise ValueError(f"bpp mismatch with checkpoint: requested {args.bpp}, "
                         f"model was trained for {params.config.target_bpp}")
    save_image(binarize_buffer(params, load_image(args.input)), args.output)


def cmd_reconstruct(args) -> None:
    params = load_checkpoint(args.model)
    save_image(reconstruct_buffer(params, load_image(args.input)), args.output)


def cmd_eval(args) -> float:
    params = load_checkpoint(args.model)
    paths = sorted(p for p in args.data.iterdir() if p.suffix.lower() == ".png")
    images = []
    for p in paths:
        buf = load_image(p)
        if args.resolution:
            buf = from_tensor(center_crop_resize(to_tensor(buf, dtype="float64"), args.resolution))
        images.append(buf)
    err = evaluate(params, images, 1 if args.strict_deterministic else None)
    print(f"images={len(images)} mean_pixel_error={err:.4f}")
    return err


def cmd_synth(args) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    cfg = SynthConfig(resolution=args.resolution, seed=args.seed)
    for i in range(args.count):
        save_image(generate_synthetic_buffer(cfg, i), args.out / f"synth_{i:06d}.png")


def cmd_compare(args) -> None:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    save_image(compare_grid(args.input, args.model, methods), args.output)


COMMANDS = {
    "train": cmd_train,
    "binarize": cmd_binarize,
    "reconstruct": cmd_reconstruct,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(name)s %(message)s")
    limits = threadpool_limits(1) if args.strict_deterministic else contextlib.nullcontext()
    try:
        with limits:
            COMMANDS[args.command](args)
    except Exception as exc:  # single-line diagnostic, nonzero exit
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"texturebit {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
