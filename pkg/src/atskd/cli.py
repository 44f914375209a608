"""Command-line entry point: ``atskd {analyze,distill,sweep,verify,gen-data}``.

Exit status is 0 on success, 1 for failed checks under ``verify --strict``,
and 2 for bad input (config, logit file or flags).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import sys
from pathlib import Path

import numpy as np
import yaml

from . import harness
from .data import LogitFileError, generate, read_logit_file
from .metrics import aggregate, decomposition_rows, mean_agreement
from .scaling import TemperaturePair, softened_rows

EXIT_OK, EXIT_FAILED_CHECKS, EXIT_BAD_INPUT = 0, 1, 2


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or min(vals) <= 0:
        raise argparse.ArgumentTypeError(f"temperatures must be positive, got {text!r}")
    return vals


def _pair(text: str) -> TemperaturePair:
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"--ats takes t1,t2, got {text!r}")
    return TemperaturePair(*vals)


def _temps_list(args) -> list:
    temps: list = list(args.temps or [])
    temps += list(args.ats or [])
    return temps


def _describe(temps) -> tuple[float, float]:
    if isinstance(temps, TemperaturePair):
        return temps.tau1, temps.tau2
    return float(temps), float(temps)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def _load_config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    return cfg


def _out_dir(args, cfg=None) -> Path:
    return Path(args.out if args.out else (cfg.output_dir if cfg else "out"))


def cmd_analyze(args) -> int:
    files = [read_logit_file(p) for p in args.files]
    temps = _temps_list(args) or [1.0]
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for ds in files:
        f, y = ds.logits(), ds.labels()
        # a tie at the maximum still satisfies the assumption
        violations = int(np.sum(f.max(axis=1) > f[np.arange(len(f)), y])) if len(ds) else 0
        print(f"{ds.source}: {len(ds)} rows, {ds.num_classes} classes, {violations} rows violate the max-target assumption")
        for t in temps:
            t1, t2 = _describe(t)
            if len(ds):
                cols = decomposition_rows(f, y, t)
                means = {k: float(v.mean()) for k, v in cols.items()}
            else:
                means = {k: float("nan") for k in ("target_prob", "derived_avg", "derived_var", "inherent_var")}
            print(f"  tau1={t1:g} tau2={t2:g}  p_y={means['target_prob']:.6g}  DA={means['derived_avg']:.6g}  "
                  f"DV={means['derived_var']:.6g}  IV={means['inherent_var']:.6g}")
            rows.append([ds.source, repr(t1), repr(t2), len(ds), violations,
                         *(repr(means[k]) for k in ("target_prob", "derived_avg", "derived_var", "inherent_var"))])
    _write_csv(out / "analysis.csv",
               ["file", "tau1", "tau2", "rows", "assumption_violations", "target_prob_mean", "da_mean", "dv_mean", "iv_mean"],
               rows)
    if len(files) == 2:
        a, b = files
        if a.num_classes != b.num_classes or len(a) != len(b):
            print("error: the two logit files differ in shape", file=sys.stderr)
            return EXIT_BAD_INPUT
        agree_rows = []
        for t in temps:
            s = mean_agreement(softened_rows(a.logits(), a.labels(), t), softened_rows(b.logits(), b.labels(), t), args.topk)
            t1, t2 = _describe(t)
            print(f"agreement tau1={t1:g} tau2={t2:g}: spearman={s.spearman:.6g} kendall={s.kendall:.6g} "
                  f"top{args.topk}={s.topk_overlap:.6g} l1={s.l1_distance:.6g}")
            agree_rows.append([repr(t1), repr(t2), args.topk, repr(s.spearman), repr(s.kendall), repr(s.topk_overlap), repr(s.l1_distance)])
        _write_csv(out / "agreement.csv", ["tau1", "tau2", "k", "spearman", "kendall", "topk_overlap", "l1_distance"], agree_rows)
    elif len(files) > 2:
        print("error: analyze takes one or two logit files", file=sys.stderr)
        return EXIT_BAD_INPUT
    return EXIT_OK


def _print_rows(rows) -> None:
    for r in rows:
        temps = "" if r.tau1 is None else f" tau1={r.tau1:g} tau2={r.tau2:g}"
        print(f"{r.condition}{temps} seed={r.seed}: student test acc {r.student_test_acc:.4f}")


def cmd_distill(args) -> int:
    cfg = _load_config(args)
    temps = _temps_list(args)
    if len(temps) > 1:
        print("error: distill takes a single --temps value or a single --ats pair", file=sys.stderr)
        return EXIT_BAD_INPUT
    out = _out_dir(args, cfg)
    report = harness.distill(cfg, temps[0] if temps else None, out_dir=out)
    harness.emit_report(report, out)
    _print_rows(report.rows)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.temps or args.ats:
        grid = cfg.sweep or harness.SweepConfig()
        cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(
            grid,
            ts_grid=tuple(args.temps) if args.temps else grid.ts_grid,
            ats_grid=tuple(args.ats) if args.ats else grid.ats_grid,
        ))
    out = _out_dir(args, cfg)
    report = harness.sweep(cfg, jobs=args.jobs, out_dir=out)
    paths = harness.emit_report(report, out)
    print(f"{len(report.rows)} rows -> {paths['results']}")
    if report.overconfidence:
        oc = report.overconfidence
        flag = "over-confident" if oc["overconfident"] else "NOT over-confident"
        print(f"teacher mean f_y {oc['teacher_mean_fy']:.3f} vs small {oc['small_mean_fy']:.3f} (x{oc['ratio']:.2f}): {flag}")
    return EXIT_OK


def cmd_verify(args) -> int:
    rows = harness.verify_propositions(args.samples, args.seed if args.seed is not None else 0)
    out = _out_dir(args)
    path = harness.write_ledger(rows, out / "ledger.csv")
    width = max(len(r.check_name) for r in rows)
    for r in rows:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.check_name:<{width}}  {r.passed}/{r.total}  max_violation={r.max_violation:.3g}")
    print(f"ledger -> {path}")
    failed = sum(not r.ok for r in rows)
    return EXIT_FAILED_CHECKS if (failed and args.strict) else EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    spec = cfg.data if args.seed is None else dataclasses.replace(cfg.data, seed=args.seed)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    train, test = generate(spec)
    for name, ds in (("train", train), ("test", test)):
        rows = [[int(y), *(repr(float(v)) for v in x)] for x, y in zip(ds.x, ds.y)]
        _write_csv(out / f"{name}.csv", ["label", *(f"x{i}" for i in range(spec.input_dim))], rows)
    (out / "data_spec.yaml").write_text(
        yaml.safe_dump({"data": harness._plain(spec)}, sort_keys=True), encoding="utf-8", newline="\n"
    )
    print(f"{len(train)} train / {len(test)} test samples -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atskd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="override the run seed")
        return sp

    a = sub.add_parser("analyze", help="decomposition and agreement metrics of logit files")
    a.add_argument("files", nargs="+", help="one or two logit files")
    a.add_argument("--out", help="output directory")
    a.add_argument("--temps", type=_floats, help="comma-separated uniform temperatures")
    a.add_argument("--ats", type=_pair, action="append", help="asymmetric pair t1,t2 (repeatable)")
    a.add_argument("--topk", type=int, default=5)
    a.set_defaults(fn=cmd_analyze)

    d = common(sub.add_parser("distill", help="train a teacher and students at one temperature"))
    d.add_argument("--temps", type=_floats)
    d.add_argument("--ats", type=_pair, action="append")
    d.set_defaults(fn=cmd_distill)

    s = common(sub.add_parser("sweep", help="temperature sweep with report"))
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--temps", type=_floats, help="replace the TS grid")
    s.add_argument("--ats", type=_pair, action="append", help="replace the ATS grid (repeatable)")
    s.set_defaults(fn=cmd_sweep)

    v = common(sub.add_parser("verify", help="randomized proposition checks"), config=False)
    v.add_argument("--samples", type=int, default=1000)
    v.add_argument("--strict", action="store_true", help="exit 1 if any check fails")
    v.set_defaults(fn=cmd_verify)

    g = common(sub.add_parser("gen-data", help="write the synthetic dataset as CSV"))
    g.set_defaults(fn=cmd_gen_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "topk", 5) < 1 or getattr(args, "jobs", 1) < 1 or getattr(args, "samples", 1) < 1:
        print("error: --topk, --jobs and --samples must be positive", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        return args.fn(args)
    except (LogitFileError, harness.ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
