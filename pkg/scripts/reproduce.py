"""Full desk-scale reproduction: the large-teacher sweep (NoKD, TS, ATS, ILS),
the small-teacher baseline, and a summary of the directional claims.

    python scripts/reproduce.py --out runs/reproduce --jobs 1
"""
import argparse
import dataclasses
import statistics
from pathlib import Path

from atskd import harness


def pooled(rows, cond):
    return statistics.median(r.student_test_acc for r in rows if r.condition == cond)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None, help="YAML config (defaults to the built-in default task)")
    ap.add_argument("--out", default="runs/reproduce")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    out = Path(args.out)

    large = harness.sweep(cfg, jobs=args.jobs, out_dir=out / "large")
    harness.emit_report(large, out / "large")
    small_cfg = dataclasses.replace(cfg, name=f"{cfg.name}-small-teacher", teacher=cfg.small_teacher, small_teacher=None)
    small = harness.sweep(small_cfg, jobs=args.jobs, out_dir=out / "small")
    harness.emit_report(small, out / "small")

    oc = large.overconfidence
    print(f"teacher mean f_y {oc['teacher_mean_fy']:.2f} vs small {oc['small_mean_fy']:.2f}: x{oc['ratio']:.2f}")
    for name, rep in (("large teacher", large), ("small teacher", small)):
        best = harness.median_accuracies(rep.rows)["best_grid"]
        print(f"{name}: best-grid medians " + ", ".join(f"{k} {v:.4f}" for k, v in sorted(best.items())))
        print(f"{name}: pooled medians KD {pooled(rep.rows, 'kd_ts'):.4f}, ILS {pooled(rep.rows, 'ils'):.4f}")
        checks = rep.curves["ts"]["checks"]
        print(f"{name}: DV-vs-tau local maxima {checks['dv_local_maxima']}, DA monotone {checks['da_nondecreasing']}")


if __name__ == "__main__":
    main()
