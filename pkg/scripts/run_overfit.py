"""Train the default denoiser on an 8-dialogue toy set and summarise the loss curve.

    python3 scripts/run_overfit.py --out runs/overfit [--steps 3000] [--p-uncond 0.1]
"""
import argparse
import os
import time

import numpy as np

from dyadgest.config import RunConfig
from dyadgest.data import ingest
from dyadgest.toy import gen_toy
from dyadgest.train import train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/overfit")
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--p-uncond", type=float, default=0.1)
    args = ap.parse_args()

    out = args.out
    cfg = RunConfig(data_root=os.path.join(out, "data"), cache_dir=os.path.join(out, "cache"),
                    checkpoint=os.path.join(out, "model.gdck"), log_path=os.path.join(out, "train_log.csv"),
                    steps=args.steps, seed=args.seed, p_uncond=args.p_uncond)
    gen_toy(cfg.data_root, n_dialogs=8, seconds=20, rng_seed=args.seed)
    ingest(cfg)

    t0 = time.perf_counter()
    rows = []
    train(cfg, log_rows=rows, on_step=lambda s, loss, gn: s % 200 == 0 and print(f"step {s:5d}  loss {loss:.5f}",
                                                                               flush=True))
    losses = np.array([r[1] for r in rows])
    blocks = losses[: len(losses) // 200 * 200].reshape(-1, 200).mean(axis=1)
    print(f"done in {(time.perf_counter() - t0) / 60:.1f} min")
    print("200-step means:", " ".join(f"{b:.4f}" for b in blocks))
    print(f"final 200-step mean loss {losses[-200:].mean():.5f}")
    print(f"checkpoint {cfg.checkpoint}")


if __name__ == "__main__":
    main()
