"""Train teachers of increasing width on the default task and tabulate how
their target logits, wrong-logit spread, DV and IV change with capacity.

    python scripts/capacity_study.py --out runs/capacity
"""
import argparse
import csv
import dataclasses
from pathlib import Path

import numpy as np

from atskd import harness
from atskd.metrics import decomposition_rows

WIDTHS = ((20, 8, 10), (20, 16, 10), (20, 32, 10), (20, 64, 64, 10), (20, 256, 256, 10))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/capacity")
    ap.add_argument("--tau", type=float, default=4.0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = harness.ExperimentConfig()
    rows = []
    for dims in WIDTHS:
        cfg = dataclasses.replace(base, teacher=harness.ModelConfig(dims, harness.TEACHER_TRAIN))
        t = harness.run_teacher(cfg)
        f, y = t.logits.logits(), t.logits.labels()
        fy = f[np.arange(len(f)), y]
        g_std = np.array([np.delete(r, k).std() for r, k in zip(f, y)])
        stats = decomposition_rows(f, y, args.tau)
        rows.append({
            "dims": "-".join(map(str, dims)), "train_acc": t.train_acc, "test_acc": t.test_acc,
            "fy_mean": fy.mean(), "wrong_std_mean": g_std.mean(),
            "dv_mean": stats["derived_var"].mean(), "iv_mean": stats["inherent_var"].mean(),
        })
        print("  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in rows[-1].items()))
    with open(out / "capacity.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
