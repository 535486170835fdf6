"""Command-line entry point: ``sctr <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric error.
Failures print one line ``error: <kind>: <reason>`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import io as sio
from .errors import FormatError, NumericalError
from .guide import strided_guide
from .metrics import CSV_FIELDS, evaluate
from .optim import save_checkpoint
from .synthetic import piecewise_rank1, synthetic_msi
from .trainer import VARIANTS, TrainConfig, feature_image, make_mask, segment, sweep_csv, \
    sweep_granularity, train_ablation

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--config", type=Path, help="JSON file with TrainConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--force-out-of-range", action="store_true",
                   help="allow hyperparameters outside the documented ranges")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="sctr", description="Superpixel-guided continuous low-rank tensor completion")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mask", parents=[common], help="generate an observation mask")
    shape = p.add_mutually_exclusive_group(required=True)
    shape.add_argument("--shape", help="I1,I2,I3")
    shape.add_argument("--like", type=Path, help="tensor file whose shape to use")
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--out", type=Path, default=Path("mask.sctr"))

    p = sub.add_parser("guide", parents=[common], help="HaLRTC guide completion")
    p.add_argument("data", type=Path)
    p.add_argument("mask", type=Path)
    p.add_argument("--out", type=Path, default=Path("guide.sctr"))

    p = sub.add_parser("segment", parents=[common], help="SLIC superpixels of a guide tensor")
    p.add_argument("guide", type=Path)
    p.add_argument("--k", type=int)
    p.add_argument("--compactness", type=float)
    p.add_argument("--out", type=Path, default=Path("labels.png"))
    p.add_argument("--viz", type=Path, help="boundary overlay PNG")

    p = sub.add_parser("train", parents=[common], help="run SCTR or an ablation variant")
    p.add_argument("data", type=Path, nargs="?", help="tensor file or PNG")
    p.add_argument("--mask", type=Path, help="mask tensor file (default: generated from the config)")
    p.add_argument("--synthetic", choices=["msi", "piecewise"], help="use a bundled synthetic tensor")
    p.add_argument("--variant", choices=VARIANTS, default="full")
    p.add_argument("--iterations", type=int)
    p.add_argument("--out", type=Path, default=Path("run"))
    p.add_argument("--dataset", default=None)
    p.add_argument("--method", default=None)

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM between two tensors")
    p.add_argument("reference", type=Path)
    p.add_argument("estimate", type=Path)
    p.add_argument("--peak", type=float)

    p = sub.add_parser("sweep", parents=[common], help="superpixel granularity sweep")
    p.add_argument("data", type=Path)
    p.add_argument("--mask", type=Path)
    p.add_argument("--alphas", default="0,1,2,3")
    p.add_argument("--iterations", type=int)
    p.add_argument("--out", type=Path, default=Path("sweep.csv"))

    p = sub.add_parser("report", parents=[common], help="merge metric CSVs into a Markdown table")
    p.add_argument("csvs", type=Path, nargs="+")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic tensor file")
    p.add_argument("--kind", choices=["msi", "piecewise"], default="msi")
    p.add_argument("--shape", default=None, help="I1,I2,I3")
    p.add_argument("--out", type=Path, default=Path("synthetic.sctr"))

    p = sub.add_parser("convert", parents=[common], help="import a .npy array as a tensor file")
    p.add_argument("src", type=Path)
    p.add_argument("dst", type=Path)
    p.add_argument("--peak", type=float, default=1.0)
    return parser


# ----------------------------------------------------------------- helpers


def _shape(text: str) -> tuple[int, int, int]:
    try:
        dims = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise UsageError(f"bad shape {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise UsageError(f"shape must be three positive integers, got {text!r}")
    return dims


def _config(args) -> TrainConfig:
    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {args.config}: {exc}", offset=exc.pos) from None
    try:
        cfg = TrainConfig.from_dict(raw)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        if getattr(args, "iterations", None) is not None:
            cfg.iterations = args.iterations
        if args.force_out_of_range:
            cfg.force = True
        return cfg.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config: {exc}") from None


def _load(path: Path):
    return sio.load_image(path)


def _load_mask(path: Path, shape) -> np.ndarray:
    m = sio.load_tensor(path) != 0
    if m.shape != tuple(shape):
        raise FormatError(f"mask {path} has shape {m.shape}, data has {tuple(shape)}", offset=0)
    return m


def _fmt_psnr(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.4f}"


def _write_csv_row(path: Path, row: dict):
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerow(row)


# ------------------------------------------------------------- subcommands


def cmd_mask(args):
    cfg = _config(args)
    shape = _shape(args.shape) if args.shape else sio.load_tensor(args.like).shape
    try:
        m = make_mask(shape, args.rate, cfg.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sio.save_tensor(args.out, m.astype(np.float32), kind="mask", sampling_rate=args.rate, seed=cfg.seed)
    print(f"observed={int(m.sum())} total={m.size} out={args.out}")


def cmd_guide(args):
    cfg = _config(args)
    data, peak, _ = _load(args.data)
    mask = _load_mask(args.mask, data.shape)
    res = strided_guide(np.where(mask, data, 0.0), mask, rho=cfg.guide_rho,
                        max_iters=cfg.guide_max_iters, tol=cfg.guide_tol)
    sio.save_tensor(args.out, res.guide, peak=peak, kind="guide", iterations=res.iterations_run,
                    final_residual=res.final_residual, axis3_stride=res.axis3_stride)
    print(f"iterations={res.iterations_run} residual={res.final_residual:.3e} out={args.out}")


def cmd_segment(args):
    cfg = _config(args)
    if args.k is not None:
        cfg.k_target = args.k
    if args.compactness is not None:
        cfg.compactness = args.compactness
    guide, _, _ = _load(args.guide)
    guide = guide.astype(np.float64)
    try:
        labels = segment(guide, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sio.save_labels(args.out, labels, k_target=cfg.k_target, compactness=cfg.compactness, seed=cfg.seed)
    if args.viz is not None:
        feat = feature_image(guide, cfg)
        feat = (feat - feat.min()) / max(float(np.ptp(feat)), 1e-12)
        sio.save_boundaries_png(args.viz, feat, labels)
    print(f"labels={int(labels.max()) + 1} out={args.out}")


def _synthetic(kind: str, shape=None, seed: int = 0) -> np.ndarray:
    if kind == "msi":
        return synthetic_msi(shape or (64, 64, 16), seed=seed)
    return piecewise_rank1(shape or (96, 96, 8), seed=seed)[0]


def cmd_train(args):
    cfg = _config(args)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    inputs = {}
    if args.synthetic:
        data, peak = _synthetic(args.synthetic, seed=cfg.seed), 1.0
        data_path = sio.save_tensor(out / "input.sctr", data, peak=peak, kind=f"synthetic-{args.synthetic}")
        inputs["data"] = str(data_path)
        dataset = args.dataset or f"synthetic-{args.synthetic}"
    elif args.data is not None:
        data, peak, _ = _load(args.data)
        inputs["data"] = str(args.data)
        dataset = args.dataset or args.data.stem
    else:
        raise UsageError("train needs a data file or --synthetic")
    data = data.astype(np.float64)
    if args.mask is not None:
        mask = _load_mask(args.mask, data.shape)
        inputs["mask"] = str(args.mask)
    else:
        mask = make_mask(data.shape, cfg.sampling_rate, cfg.seed)
        mask_path = sio.save_tensor(out / "mask.sctr", mask.astype(np.float32), kind="mask",
                                    sampling_rate=cfg.sampling_rate, seed=cfg.seed)
        inputs["mask"] = str(mask_path)
    sampling_rate = float(mask.mean())

    res = train_ablation(data, mask, cfg, args.variant, peak=peak)

    artifacts = {
        "guide": sio.save_tensor(out / "guide.sctr", res.guide.guide, peak=peak, kind="guide",
                                 axis3_stride=res.guide.axis3_stride),
        "labels": sio.save_labels(out / "labels.png", res.labels, k_target=cfg.k_target,
                                  compactness=cfg.compactness, seed=cfg.seed),
        "reconstruction": sio.save_tensor(out / "reconstruction.sctr", res.reconstruction, peak=peak,
                                          kind="reconstruction"),
    }
    artifacts["labels_meta"] = artifacts["labels"].with_suffix(".json")
    patch_map = {
        str(p.label): {"ranks": list(p.spec.ranks), "bbox": list(p.spec.bbox),
                       "params": [q.name for q in res.model.parameters() if q.name.startswith(f"patch{p.label}.")]}
        for p in res.patches
    }
    artifacts["checkpoint"] = save_checkpoint(out / "checkpoint", res.model.parameters(), res.optimizer,
                                              extra={"patches": patch_map, "variant": args.variant})
    method = args.method or ("SCTR" if args.variant == "full" else f"SCTR-{args.variant}")
    metrics_path = out / "metrics.csv"
    _write_csv_row(metrics_path, res.metrics.csv_row(dataset, method, sampling_rate))
    artifacts["metrics"] = metrics_path
    curve_path = out / "loss_curve.csv"
    curve_path.write_text(res.loss_curve_csv())
    artifacts["loss_curve"] = curve_path

    manifest = {
        "config": cfg.to_dict(),
        "variant": args.variant,
        "inputs": inputs,
        "artifacts": {k: str(v) for k, v in artifacts.items()},
        "metrics": {"psnr_db": res.metrics.psnr_db, "ssim": res.metrics.ssim,
                    "per_band_psnr": res.metrics.per_band_psnr, "peak": res.metrics.peak},
        "wall_time_s": res.wall_time_s,
        "patch_count": res.patch_count,
        "estimated_iteration_cost": res.iteration_cost,
        "guide_iterations": res.guide.iterations_run,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    print(f"psnr={_fmt_psnr(res.metrics.psnr_db)} ssim={res.metrics.ssim:.6f} patches={res.patch_count} "
          f"out={out}")


def cmd_eval(args):
    ref, peak, _ = _load(args.reference)
    est, _, _ = _load(args.estimate)
    if ref.shape != est.shape:
        raise FormatError(f"shape mismatch {ref.shape} vs {est.shape}", offset=0)
    rep = evaluate(ref, est, args.peak if args.peak is not None else peak)
    print(f"psnr={_fmt_psnr(rep.psnr_db)} ssim={round(rep.ssim, 6)}")


def cmd_sweep(args):
    cfg = _config(args)
    data, peak, _ = _load(args.data)
    data = data.astype(np.float64)
    mask = _load_mask(args.mask, data.shape) if args.mask else make_mask(data.shape, cfg.sampling_rate, cfg.seed)
    try:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    except ValueError:
        raise UsageError(f"bad --alphas {args.alphas!r}") from None
    if not alphas:
        raise UsageError("--alphas is empty")
    rows = sweep_granularity(data, mask, cfg, alphas, peak=peak)
    args.out.write_text(sweep_csv(rows))
    for r in rows:
        print(f"alpha={r['alpha']} N={r['n_superpixels']} psnr={_fmt_psnr(r['psnr'])} ssim={r['ssim']:.4f}")


def report_markdown(rows: list[dict]) -> str:
    """Table with sampling rates as column groups and (dataset, method) rows."""
    rates = sorted({float(r["sampling_rate"]) for r in rows})
    cells = defaultdict(list)
    order = []
    for r in rows:
        key = (r["dataset"], r["method"])
        if key not in order:
            order.append(key)
        cells[key + (float(r["sampling_rate"]),)].append((float(r["psnr_db"]), float(r["ssim"])))
    head = ["Data", "Method"] + [f"{rate:.2f} {m}" for rate in rates for m in ("PSNR", "SSIM")]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for key in order:
        row = list(key)
        for rate in rates:
            vals = cells.get(key + (rate,))
            if vals:
                p = float(np.mean([v[0] for v in vals]))
                row += ["inf" if math.isinf(p) else f"{p:.2f}", f"{np.mean([v[1] for v in vals]):.4f}"]
            else:
                row += ["-", "-"]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def cmd_report(args):
    rows = []
    for path in args.csvs:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(CSV_FIELDS) - set(reader.fieldnames or [])
            if missing:
                raise FormatError(f"{path} lacks columns {sorted(missing)}", offset=0)
            rows.extend(reader)
    md = report_markdown(rows)
    if args.out:
        args.out.write_text(md)
    sys.stdout.write(md)


def cmd_synth(args):
    cfg = _config(args)
    shape = _shape(args.shape) if args.shape else None
    data = _synthetic(args.kind, shape, cfg.seed)
    sio.save_tensor(args.out, data, peak=1.0, kind=f"synthetic-{args.kind}", seed=cfg.seed)
    print(f"shape={','.join(map(str, data.shape))} out={args.out}")


def cmd_convert(args):
    sio.convert_npy(args.src, args.dst, peak=args.peak)
    print(f"out={args.dst}")


COMMANDS = {
    "mask": cmd_mask, "guide": cmd_guide, "segment": cmd_segment, "train": cmd_train,
    "eval": cmd_eval, "sweep": cmd_sweep, "report": cmd_report, "synth": cmd_synth,
    "convert": cmd_convert,
}


def _fail(kind: str, code: int, exc) -> int:
    msg = " ".join(str(exc).split())
    print(f"error: {kind}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    except NumericalError as exc:
        return _fail("numeric", EXIT_NUMERIC, exc)
    except (FormatError, OSError, ValueError) as exc:
        return _fail("data", EXIT_DATA, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
