"""Sample held-out toy dialogues at graded positive intensity and report the amplitude response.

    python3 scripts/run_conditioning.py --out runs/overfit [--guidance 1.0]

Expects a run directory produced by run_overfit.py.
"""
import argparse
import os

from dyadgest.config import RunConfig
from dyadgest.metrics import evaluate
from dyadgest.toy import gen_toy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/overfit")
    ap.add_argument("--seconds", type=int, default=8)
    ap.add_argument("--guidance", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=6)
    args = ap.parse_args()

    cfg = RunConfig(data_root=os.path.join(args.out, "data"), checkpoint=os.path.join(args.out, "model.gdck"),
                    report=os.path.join(args.out, f"conditioning_g{args.guidance:g}.csv"), guidance=args.guidance)
    levels = [k / 10 for k in range(10) for _ in range(2)]
    gen_toy(cfg.data_root, n_dialogs=len(levels), seconds=args.seconds, rng_seed=args.seed, split="test",
            prefix="eval", intensities=levels)
    rows = evaluate(cfg, split="test")
    print(f"{'dialog':<10} {'planted':>7} {'generated':>9} {'reference':>9}")
    for r in rows[:-1]:
        print(f"{r['dialog_id']:<10} {r['planted_positive']:7.1f} {r['amplitude']:9.2f} "
              f"{r.get('amplitude_reference', float('nan')):9.2f}")
    print(f"Spearman(planted, generated amplitude) = {rows[-1]['condition_spearman']:.3f}")
    print(f"report {cfg.report}")


if __name__ == "__main__":
    main()
