"""Agreement between teachers' softened labels: same-size peers, a small/large
pair, and a label-shuffled control.

    python scripts/agreement_study.py --out runs/agreement
"""
import argparse
import csv
import dataclasses
from pathlib import Path

from atskd import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/agreement")
    ap.add_argument("--tau", type=float, default=1.0)
    ap.add_argument("--topk", type=int, default=5)
    args = ap.parse_args()
    cfg = harness.ExperimentConfig()
    a = harness.run_teacher(cfg, seed=0)
    b = harness.run_teacher(cfg, seed=1)
    small = harness.run_teacher(cfg, role="small_teacher", seed=0)
    control = harness.run_teacher(cfg, seed=0, shuffle_labels=True)
    pairs = {"large_vs_large": (a, b), "large_vs_small": (a, small), "large_vs_shuffled": (a, control)}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "agreement.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair", "spearman", "kendall", "topk_overlap", "l1_distance"])
        for name, (x, y) in pairs.items():
            s = harness.compare_teachers(x, y, args.tau, args.topk)
            w.writerow([name, *(repr(v) for v in dataclasses.astuple(s))])
            print(f"{name:>18}: " + "  ".join(f"{k}={v:.4f}" for k, v in dataclasses.asdict(s).items()))


if __name__ == "__main__":
    main()
