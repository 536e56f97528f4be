"""Command-line surface: train, hide, extract, evaluate, ablate.

Exit codes: 0 success, 1 usage error, 2 data/model error, 3 runtime
failure. All errors go to stderr as one stable line.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from . import metrics, pipeline, reporting
from .errors import (
    ConfigError,
    DataError,
    DfsweError,
    ModelError,
    PlanError,
    ReceiptError,
    SegmentError,
)
from .images import ImageTensor
from .storage import (
    load_checkpoint,
    load_receipt,
    read_image,
    save_receipt,
    write_image,
)
from .training import TrainConfig, history_path, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_DATA_ERRORS = (ConfigError, DataError, ModelError, PlanError, ReceiptError,
                SegmentError)
_ERROR_TAGS = {
    ConfigError: "config", DataError: "data", ModelError: "model",
    PlanError: "plan", ReceiptError: "receipt", SegmentError: "segment",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dfswe",
                     description="Hide images inside freshly generated images "
                                 "using a pair of invertible flow models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[], help="train one flow model on an image folder")
    p.add_argument("--data", required=True, help="directory of training images")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--size", type=int, default=32, help="square image size")
    p.add_argument("--levels", type=int, default=3, help="multi-scale levels")
    p.add_argument("--steps", type=int, default=8, help="flow steps per level")
    p.add_argument("--hidden", type=int, default=256, help="coupling net width")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--max-steps", type=int, default=None,
                   help="hard cap on optimizer steps (use with --epochs 0 for exact budgets)")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--clip", type=float, default=50.0, help="gradient norm clip")
    p.add_argument("--checkpoint-every", type=int, default=200)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("hide", help="hide secret image(s) inside a generated stego image")
    p.add_argument("--secret-model", required=True)
    p.add_argument("--stego-model", required=True)
    p.add_argument("--secret", action="append", required=True,
                   help="secret image; repeat to hide several")
    p.add_argument("--out", required=True, help="stego PNG output path")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--receipt", default=None,
                       help="write moment scalars here for exact extraction")
    group.add_argument("--keyless", action="store_true",
                       help="no side file; extraction self-normalizes (default)")
    p.add_argument("--stego-depth", type=int, choices=(8, 16), default=8)
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-pks", action="store_true",
                   help="use a raw Gaussian carrier instead of prior-knowledge sampling")
    p.add_argument("--no-hdsr", action="store_true",
                   help="allow writing into the deepest carrier block")
    p.add_argument("--no-dct", action="store_true",
                   help="skip moment matching of written runs")
    p.set_defaults(func=_cmd_hide)

    p = sub.add_parser("extract", help="recover secret image(s) from a stego image")
    p.add_argument("--secret-model", required=True)
    p.add_argument("--stego-model", required=True)
    p.add_argument("--stego", required=True)
    p.add_argument("--k", type=int, required=True, help="number of hidden secrets")
    p.add_argument("--receipt", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("evaluate", help="quality metrics for extracted secrets")
    p.add_argument("--original", required=True, help="directory of original secrets")
    p.add_argument("--extracted", required=True, help="directory of extracted secrets")
    p.add_argument("--stego", default=None, help="directory of stego images (for BPP)")
    p.add_argument("--report", required=True, help="CSV output; JSON summary and a "
                                                   "figure land next to it")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="hide/extract under every tactic combination")
    p.add_argument("--secret-model", required=True)
    p.add_argument("--stego-model", required=True)
    p.add_argument("--secrets", required=True, help="directory of secret images")
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_ablate)
    return parser


def _cmd_train(args) -> int:
    config = TrainConfig(
        data_dir=args.data, out_path=args.out, image_size=args.size,
        levels=args.levels, steps_per_level=args.steps, hidden_width=args.hidden,
        epochs=args.epochs, max_steps=args.max_steps, batch_size=args.batch,
        learning_rate=args.lr, warmup_steps=args.warmup,
        gradient_clip_norm=args.clip, checkpoint_every=args.checkpoint_every,
        resume_from=args.resume, seed=args.seed)
    out = train(config)
    hist = history_path(out)
    if hist.exists():
        with open(hist) as fh:
            rows = [(int(r["step"]), float(r["bits_per_dim"]))
                    for r in csv.DictReader(fh)]
        if rows:
            fig = reporting.save_training_curve(rows, out.with_name(out.name + ".loss.png"))
            print(f"loss curve: {fig}")
    print(f"checkpoint: {out}")
    return EXIT_OK


def _load_secret_images(paths: list[str]) -> list[ImageTensor]:
    return [ImageTensor.quantized(read_image(p)) for p in paths]


def _cmd_hide(args) -> int:
    model_se = load_checkpoint(args.secret_model)
    model_st = load_checkpoint(args.stego_model)
    secrets = _load_secret_images(args.secret)
    mode = pipeline.RECEIPT if args.receipt else pipeline.KEYLESS
    opts = pipeline.HideOptions(
        tactics=pipeline.Tactics(pks=not args.no_pks, hdsr=not args.no_hdsr,
                                 dct=not args.no_dct),
        mode=mode, temperature=args.temperature, seed=args.seed,
        stego_bit_depth=args.stego_depth)
    stego, receipt = pipeline.hide(model_se, model_st, secrets, opts)
    write_image(args.out, stego.pixels)
    if args.receipt:
        save_receipt(receipt, args.receipt)
    payload = metrics.bpp([s.shape for s in secrets],
                          (model_st.config.height, model_st.config.width))
    print(f"hid {len(secrets)} secret(s) in {args.out} "
          f"({model_st.config.height}x{model_st.config.width}, "
          f"{args.stego_depth}-bit): payload {payload:g} BPP, mode {mode}")
    return EXIT_OK


def _cmd_extract(args) -> int:
    model_se = load_checkpoint(args.secret_model)
    model_st = load_checkpoint(args.stego_model)
    stego = ImageTensor.quantized(read_image(args.stego))
    receipt = load_receipt(args.receipt) if args.receipt else None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recovered = pipeline.extract(model_se, model_st, stego, args.k, receipt)
    paths = []
    for i, img in enumerate(recovered):
        path = out_dir / f"secret_{i:02d}.png"
        write_image(path, img.pixels)
        paths.append(path)
    print(f"extracted {len(paths)} secret(s) to {out_dir}")
    return EXIT_OK


def _image_dir(path: str) -> list[Path]:
    p = Path(path)
    if not p.is_dir():
        raise DataError(f"not a directory: {p}")
    files = sorted(q for q in p.iterdir() if q.suffix.lower() in
                   {".png", ".jpg", ".jpeg", ".bmp"})
    if not files:
        raise DataError(f"no images in {p}")
    return files


def _cmd_evaluate(args) -> int:
    originals = _image_dir(args.original)
    extracted = _image_dir(args.extracted)
    if len(originals) != len(extracted):
        raise DataError(f"directory size mismatch: {len(originals)} originals vs "
                        f"{len(extracted)} extracted")
    rows = []
    total_shapes = []
    for orig_path, ext_path in zip(originals, extracted):
        a = read_image(orig_path)
        b = read_image(ext_path)
        total_shapes.append(a.shape)
        rows.append({
            "original": orig_path.name,
            "extracted": ext_path.name,
            "psnr": metrics.psnr(a, b),
            "ssim": metrics.ssim(a, b),
            "rmse": metrics.rmse(a, b),
            "bit_accuracy": metrics.bit_accuracy(a, b),
        })
    summary = metrics.summarize(rows)
    if args.stego:
        stego_shapes = [read_image(p).shape for p in _image_dir(args.stego)]
        stego_pixels = sum(h * w for _, h, w in stego_shapes)
        bits = sum(8 * c * h * w for c, h, w in total_shapes)
        summary["bpp"] = bits / stego_pixels
    report = Path(args.report)
    metrics.write_metrics_csv(report, rows)
    metrics.write_summary_json(report.with_suffix(".json"), summary)
    fig = reporting.save_metrics_figure(rows, report.with_suffix(".png"))
    print(f"evaluated {len(rows)} pair(s): mean PSNR "
          f"{summary.get('mean_psnr', float('nan')):.2f} dB; report {report}, "
          f"summary {report.with_suffix('.json')}, figure {fig}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    model_se = load_checkpoint(args.secret_model)
    model_st = load_checkpoint(args.stego_model)
    secrets = _load_secret_images([str(p) for p in _image_dir(args.secrets)])
    rows = pipeline.ablate(model_se, model_st, secrets, trials=args.trials,
                           seed=args.seed)
    report = Path(args.report)
    metrics.write_metrics_csv(report, rows)
    metrics.write_summary_json(report.with_suffix(".json"), metrics.summarize(rows))
    fig = reporting.save_ablation_figure(rows, report.with_suffix(".png"))
    for row in rows:
        print(f"{row['tactics']:>14}: stego {row['stego_bits_per_dim']:.3f} bits/dim, "
              f"extracted PSNR {row['psnr']:.2f} dB")
    print(f"report {report}, figure {fig}")
    return EXIT_OK


def run_cli(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    threads = os.environ.get("DFSWE_NUM_THREADS")
    if threads:
        try:
            import torch
            torch.set_num_threads(max(1, int(threads)))
        except ValueError:
            print(f"error[usage]: DFSWE_NUM_THREADS must be an integer, "
                  f"got {threads!r}", file=sys.stderr)
            return EXIT_USAGE
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        tag = next(t for cls, t in _ERROR_TAGS.items() if isinstance(exc, cls))
        print(f"error[{tag}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DfsweError as exc:
        print(f"error[runtime]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # pragma: no cover - safety net
        print(f"error[runtime]: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
