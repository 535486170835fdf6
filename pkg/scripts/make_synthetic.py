"""Write the bundled synthetic tensors (and a mask) as tensor files."""

import argparse
from pathlib import Path

import numpy as np

from sctr.io import save_tensor
from sctr.synthetic import piecewise_rank1, synthetic_msi
from sctr.trainer import make_mask


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("data"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rate", type=float, default=0.2)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    pw, regions = piecewise_rank1((96, 96, 8), seed=args.seed)
    save_tensor(args.out / "piecewise.sctr", pw, kind="synthetic-piecewise", seed=args.seed)
    np.save(args.out / "piecewise_regions.npy", regions)
    msi = synthetic_msi((64, 64, 16), seed=args.seed)
    save_tensor(args.out / "msi.sctr", msi, kind="synthetic-msi", seed=args.seed)
    for name, t in (("piecewise", pw), ("msi", msi)):
        m = make_mask(t.shape, args.rate, args.seed)
        save_tensor(args.out / f"{name}_mask.sctr", m.astype(np.float32), kind="mask",
                    sampling_rate=args.rate, seed=args.seed)
    print(f"wrote {sorted(p.name for p in args.out.iterdir())}")


if __name__ == "__main__":
    main()
