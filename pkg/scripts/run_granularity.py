"""Superpixel granularity sweep: N = round(8 * 2**alpha) segments per run."""

import argparse
from pathlib import Path

from sctr.synthetic import piecewise_rank1
from sctr.trainer import TrainConfig, make_mask, sweep_csv, sweep_granularity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alphas", default="0,1,2,3")
    ap.add_argument("--iterations", type=int, default=1500)
    ap.add_argument("--rate", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("granularity.csv"))
    args = ap.parse_args()

    x, _ = piecewise_rank1((96, 96, 8), seed=args.seed)
    mask = make_mask(x.shape, args.rate, args.seed)
    alphas = [float(a) for a in args.alphas.split(",")]
    rows = sweep_granularity(x, mask, TrainConfig(iterations=args.iterations, seed=args.seed), alphas)
    args.out.write_text(sweep_csv(rows))
    for r in rows:
        print(f"alpha={r['alpha']} N={r['n_superpixels']} patches={r['patches']} "
              f"psnr={r['psnr']:.2f} ssim={r['ssim']:.4f}")


if __name__ == "__main__":
    main()
