"""Config-driven experiments: teacher training, TS/ATS distillation sweeps,
randomized proposition checks, and report emission.

A config is a YAML document whose sections mirror :class:`ExperimentConfig`.
Every section is optional and is merged onto the defaults; unknown keys are
errors that name the offending key path.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import nn
from .data import LogitDataset, SyntheticSpec, generate, read_logit_file, write_logit_file
from .kd import (
    LossConfig,
    batch_loss_and_grad,
    combined_loss,
    grad_student_logits,
    ils_loss,
    kd_decompose,
    kd_loss,
    teacher_label,
    teacher_labels,
)
from .metrics import (
    AgreementStats,
    decomposition_rows,
    decomposition_stats,
    derived_average,
    mean_agreement,
    whole_variance,
)
from .scaling import (
    LogitRecord,
    ProbVector,
    TemperaturePair,
    Temps,
    dprobs_dtau,
    renorm_wrong_probs,
    softened_rows,
    softmax_ats,
    softmax_ts,
)

CONDITIONS = ("nokd", "kd_ts", "kd_ats", "ils")
DEFAULT_TS_GRID = (1.0, 2.0, 4.0, 8.0, 12.0, 16.0)
DEFAULT_ATS_GRID = tuple(TemperaturePair(a, b) for a, b in ((2, 1), (3, 1), (3, 2), (4, 2), (4, 3), (5, 2)))
CURVE_TAUS = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
# the ATS curve uses tau1 = 1.25 tau and tau2 = 0.75 tau
ATS_CURVE_FACTORS = (1.25, 0.75)
OVERCONFIDENCE_RATIO = 1.5
PLATEAU_TOL = 1e-12
RESULT_COLUMNS = (
    "condition", "tau1", "tau2", "seed", "teacher_train_acc", "teacher_test_acc",
    "student_test_acc", "da_mean", "dv_mean", "iv_mean",
)
LEDGER_COLUMNS = ("check_name", "passed", "total", "max_violation")


def _as_pair(p) -> TemperaturePair:
    if isinstance(p, TemperaturePair):
        return p
    t1, t2 = p
    return TemperaturePair(float(t1), float(t2))


def _as_temps(v) -> Temps:
    return _as_pair(v) if isinstance(v, (list, tuple, TemperaturePair)) else float(v)


class ConfigError(ValueError):
    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"config key '{key_path}': {message}")


@dataclass(frozen=True)
class ModelConfig:
    dims: tuple[int, ...]
    train: nn.TrainConfig = nn.TrainConfig()

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) < 2 or min(self.dims) < 1:
            raise ValueError(f"invalid layer dims {self.dims}")


@dataclass(frozen=True)
class LossSettings:
    """Loss knobs shared by every grid point; ``teacher_temps`` is the point used by
    single-run distillation."""

    lam: float = 0.5
    teacher_temps: Temps = 4.0
    student_temp: float | None = None
    multiply_tau_squared: bool = True

    def __post_init__(self):
        self.at(self.teacher_temps)

    def at(self, temps: Temps) -> LossConfig:
        return LossConfig(self.lam, temps, self.student_temp, self.multiply_tau_squared)


@dataclass(frozen=True)
class SweepConfig:
    conditions: tuple[str, ...] = CONDITIONS
    ts_grid: tuple[float, ...] = DEFAULT_TS_GRID
    ats_grid: tuple[TemperaturePair, ...] = DEFAULT_ATS_GRID
    curve_taus: tuple[float, ...] = CURVE_TAUS

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        object.__setattr__(self, "ts_grid", tuple(float(t) for t in self.ts_grid))
        object.__setattr__(self, "ats_grid", tuple(_as_pair(p) for p in self.ats_grid))
        object.__setattr__(self, "curve_taus", tuple(float(t) for t in self.curve_taus))
        bad = [c for c in self.conditions if c not in CONDITIONS]
        if bad or not self.conditions:
            raise ValueError(f"conditions must be a nonempty subset of {CONDITIONS}, got {self.conditions}")
        if not self.ts_grid or not self.ats_grid or not self.curve_taus:
            raise ValueError("grids must be nonempty")
        if min(self.ts_grid + self.curve_taus) <= 0:
            raise ValueError("temperatures must be positive")

    def grid(self, condition: str) -> tuple:
        if condition == "nokd":
            return (None,)
        return self.ats_grid if condition == "kd_ats" else self.ts_grid


TEACHER_TRAIN = nn.TrainConfig(epochs=100, milestones=(60, 80))
STUDENT_TRAIN = nn.TrainConfig(epochs=60, milestones=(36, 48))


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "default"
    data: SyntheticSpec = SyntheticSpec()
    logit_file: str | None = None
    teacher: ModelConfig = ModelConfig((20, 256, 256, 10), TEACHER_TRAIN)
    small_teacher: ModelConfig | None = ModelConfig((20, 16, 10), TEACHER_TRAIN)
    student: ModelConfig = ModelConfig((20, 8, 10), STUDENT_TRAIN)
    loss: LossSettings = LossSettings()
    sweep: SweepConfig | None = SweepConfig()
    seeds: tuple[int, ...] = (1, 2, 3)
    teacher_seed: int = 0
    topk: int = 5
    output_dir: str = "runs/default"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds or min(self.seeds) < 0:
            raise ValueError("seeds must be a nonempty list of unsigned integers")
        if self.logit_file is None:
            for m in (self.teacher, self.small_teacher, self.student):
                if m is not None and (m.dims[0] != self.data.input_dim or m.dims[-1] != self.data.num_classes):
                    raise ValueError(f"dims {m.dims} do not match data ({self.data.input_dim} -> {self.data.num_classes})")
        if self.topk < 1:
            raise ValueError("topk must be positive")


# config parsing

def _merge(default, raw, path: str, nested: dict | None = None):
    """``dataclasses.replace`` driven by a mapping, with key-path errors."""
    if raw is None:
        return default
    if not isinstance(raw, dict):
        raise ConfigError(path, f"expected a mapping, got {type(raw).__name__}")
    names = {f.name for f in dataclasses.fields(default)}
    kwargs = {}
    for key, value in raw.items():
        sub = f"{path}.{key}" if path else str(key)
        if key not in names:
            raise ConfigError(sub, "unknown key")
        conv = (nested or {}).get(key)
        kwargs[key] = conv(value, sub) if conv else value
    try:
        return dataclasses.replace(default, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(path or "<root>", str(e)) from None


def _convert(fn, path):
    try:
        return fn()
    except (TypeError, ValueError) as e:
        raise ConfigError(path, str(e)) from None


def _model_section(default: ModelConfig):
    def conv(raw, path):
        return _merge(default, raw, path, {"train": lambda v, p: _merge(default.train, v, p)})
    return conv


def parse_config(raw: dict | None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    raw = dict(raw or {})
    if "logit_file" in raw:
        raise ConfigError("logit_file", "unknown key (logit files go under data.logit_file)")
    data_raw = raw.get("data")
    if data_raw is not None and not isinstance(data_raw, dict):
        raise ConfigError("data", f"expected a mapping, got {type(data_raw).__name__}")
    if data_raw and "logit_file" in data_raw:
        data_raw = dict(data_raw)
        raw["logit_file"] = str(data_raw.pop("logit_file"))
        raw["data"] = data_raw or None
    small_default = base.small_teacher or ModelConfig((20, 16, 10), TEACHER_TRAIN)
    nested = {
        "data": lambda v, p: _merge(base.data, v, p),
        "teacher": _model_section(base.teacher),
        "small_teacher": lambda v, p: None if v is None else _model_section(small_default)(v, p),
        "student": _model_section(base.student),
        "loss": lambda v, p: _merge(
            base.loss, v, p, {"teacher_temps": lambda t, q: _convert(lambda: _as_temps(t), q)}
        ),
        "sweep": lambda v, p: None if v is None else _merge(base.sweep or SweepConfig(), v, p),
    }
    return _merge(base, raw, "", nested)


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError("<root>", f"{path}: invalid YAML: {e}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("<root>", "top level must be a mapping")
    return parse_config(raw)


def _plain(obj):
    if isinstance(obj, TemperaturePair):
        return [obj.tau1, obj.tau2]
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = _plain(cfg)
    logit_file = d.pop("logit_file")
    if logit_file is not None:
        d["data"] = {"logit_file": logit_file}
    return d


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of everything that affects results (the output directory is excluded)."""
    d = config_to_dict(cfg)
    d.pop("output_dir")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# teachers

@dataclass
class TeacherRun:
    role: str
    seed: int
    model: nn.MlpModel | None
    logits: LogitDataset
    train_acc: float
    test_acc: float
    checkpoint: Path | None = None
    logit_path: Path | None = None

    @property
    def mean_target_logit(self) -> float:
        f = self.logits.logits()
        return float(f[np.arange(len(f)), self.logits.labels()].mean())

    def summary(self) -> dict:
        return {
            "role": self.role,
            "seed": self.seed,
            "dims": None if self.model is None else list(self.model.layer_dims),
            "train_acc": self.train_acc,
            "test_acc": _finite_or_none(self.test_acc),
            "mean_target_logit": self.mean_target_logit,
        }


def _ce_fn(labels: np.ndarray):
    cfg = LossConfig()

    def fn(logits, idx):
        return batch_loss_and_grad(None, logits, labels[idx], cfg)
    return fn


def run_teacher(
    cfg: ExperimentConfig,
    seed: int | None = None,
    out_dir=None,
    role: str = "teacher",
    shuffle_labels: bool = False,
) -> TeacherRun:
    """Train a teacher with cross-entropy (or load logits from the configured file).

    ``role`` picks ``cfg.teacher`` or ``cfg.small_teacher``. With ``shuffle_labels``
    the model is fit to a fixed random permutation of the training labels, which
    gives a control that shares nothing with the class structure. Logit files
    always carry the true labels.
    """
    seed = cfg.teacher_seed if seed is None else int(seed)
    if cfg.logit_file is not None:
        ds = read_logit_file(cfg.logit_file)
        f, y = ds.logits(), ds.labels()
        acc = float(np.mean(f.argmax(axis=1) == y)) if len(ds) else float("nan")
        return TeacherRun(role, seed, None, ds, acc, float("nan"))
    spec = cfg.small_teacher if role == "small_teacher" else cfg.teacher
    if spec is None:
        raise ValueError(f"no {role} configured")
    train_set, test_set = generate(cfg.data)
    fit_set = train_set
    if shuffle_labels:
        perm = np.random.default_rng(np.random.SeedSequence([seed, 7919])).permutation(len(train_set))
        fit_set = nn.Dataset(train_set.x, train_set.y[perm])
    model, _ = nn.train(
        nn.init_model(spec.dims, seed), fit_set, _ce_fn(fit_set.y), dataclasses.replace(spec.train, seed=seed)
    )
    logits = nn.forward(model, train_set.x)
    run = TeacherRun(
        role, seed, model, LogitDataset.from_arrays(logits, train_set.y, source=f"{role}:{seed}"),
        nn.accuracy(model, train_set), nn.accuracy(model, test_set),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tag = f"{role}{'_shuffled' if shuffle_labels else ''}_seed{seed}"
        run.checkpoint = out / f"{tag}.json"
        run.logit_path = out / f"{tag}.logits"
        nn.save_model(model, run.checkpoint)
        write_logit_file(run.logits, run.logit_path)
    return run


def compare_teachers(a: TeacherRun, b: TeacherRun, tau: float = 1.0, k: int = 5) -> AgreementStats:
    """Per-sample agreement between two teachers' softened labels, averaged."""
    pa = softened_rows(a.logits.logits(), a.logits.labels(), tau)
    pb = softened_rows(b.logits.logits(), b.logits.labels(), tau)
    return mean_agreement(pa, pb, k)


# distillation

@dataclass(frozen=True)
class ResultRow:
    condition: str
    tau1: float | None
    tau2: float | None
    seed: int
    teacher_train_acc: float
    teacher_test_acc: float
    student_test_acc: float
    da_mean: float | None
    dv_mean: float | None
    iv_mean: float | None


def _temps_columns(temps) -> tuple[float | None, float | None]:
    if temps is None:
        return None, None
    if isinstance(temps, TemperaturePair):
        return temps.tau1, temps.tau2
    return float(temps), float(temps)


def _label_stats(logits, labels, temps, ils: bool) -> tuple[float, float, float]:
    rows = decomposition_rows(logits, labels, temps)
    if ils:
        # the flattened label keeps DA but has identical wrong entries
        return float(rows["derived_avg"].mean()), 0.0, 0.0
    return tuple(float(rows[k].mean()) for k in ("derived_avg", "derived_var", "inherent_var"))


def _train_student(cfg: ExperimentConfig, train_set, test_set, targets, loss_cfg, seed) -> float:
    labels = train_set.y

    def fn(logits, idx):
        return batch_loss_and_grad(None if targets is None else targets[idx], logits, labels[idx], loss_cfg)

    train_cfg = dataclasses.replace(cfg.student.train, seed=seed)
    model, _ = nn.train(nn.init_model(cfg.student.dims, seed), train_set, fn, train_cfg)
    return nn.accuracy(model, test_set)


def _distill_task(cfg: ExperimentConfig, teacher_logits, teacher_accs, condition, temps, seed) -> ResultRow:
    train_set, test_set = generate(cfg.data)
    if condition == "nokd":
        acc = _train_student(cfg, train_set, test_set, None, LossConfig(), seed)
        return ResultRow(condition, None, None, seed, *teacher_accs, acc, None, None, None)
    if (condition == "kd_ats") != isinstance(temps, TemperaturePair):
        raise ValueError(f"condition {condition} does not take temperatures {temps!r}")
    ils = condition == "ils"
    targets = teacher_labels(teacher_logits, train_set.y, temps, ils)
    acc = _train_student(cfg, train_set, test_set, targets, cfg.loss.at(temps), seed)
    stats = _label_stats(teacher_logits, train_set.y, temps, ils)
    return ResultRow(condition, *_temps_columns(temps), seed, *teacher_accs, acc, *stats)


def run_distillation(
    cfg: ExperimentConfig, teacher: TeacherRun, condition: str, temps: Temps | None, seed: int
) -> ResultRow:
    """Train one student under one condition and grid point."""
    if cfg.logit_file is not None:
        raise ValueError("distillation needs inputs; a logit-file config supports analysis only")
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    accs = (teacher.train_acc, teacher.test_acc)
    return _distill_task(cfg, teacher.logits.logits(), accs, condition, temps, int(seed))


def _task_star(args):
    return _distill_task(*args)


# curves

def count_local_maxima(values: Sequence[float], tol: float = PLATEAU_TOL) -> int:
    """Peaks of a sampled curve; steps within ``tol`` count as flat, so a plateau
    is one peak. Endpoints count when the curve falls away from them."""
    d = np.diff(np.asarray(values, dtype=np.float64))
    signs = [int(np.sign(x)) for x in d if abs(x) > tol]
    if not signs:
        return 1
    peaks = sum(1 for a, b in zip(signs, signs[1:]) if a > 0 > b)
    return peaks + (signs[0] < 0) + (signs[-1] > 0)


def has_interior_peak(values: Sequence[float], tol: float = PLATEAU_TOL) -> bool:
    d = np.diff(np.asarray(values, dtype=np.float64))
    signs = [int(np.sign(x)) for x in d if abs(x) > tol]
    return bool(signs) and signs[0] > 0 and signs[-1] < 0 and count_local_maxima(values, tol) == 1


def decomposition_curve(logits, labels, taus: Sequence[float], ats_factors=None) -> dict[str, list[float]]:
    """Mean DA, DV and IV of the softened labels along a temperature path."""
    curve = {"tau": [], "tau1": [], "tau2": [], "target_prob": [], "da": [], "dv": [], "iv": []}
    for tau in taus:
        temps: Temps = tau if ats_factors is None else TemperaturePair(ats_factors[0] * tau, ats_factors[1] * tau)
        rows = decomposition_rows(logits, labels, temps)
        t1, t2 = _temps_columns(temps)
        curve["tau"].append(float(tau))
        curve["tau1"].append(t1)
        curve["tau2"].append(t2)
        for key, name in (("target_prob", "target_prob"), ("da", "derived_avg"), ("dv", "derived_var"), ("iv", "inherent_var")):
            curve[key].append(float(rows[name].mean()))
    return curve


def curve_checks(curve: dict) -> dict:
    da = np.asarray(curve["da"])
    return {
        "da_nondecreasing": bool(np.all(np.diff(da) >= -PLATEAU_TOL)),
        "dv_local_maxima": count_local_maxima(curve["dv"]),
        "dv_rises_then_falls": has_interior_peak(curve["dv"]),
    }


# sweeps

@dataclass
class RunReport:
    name: str
    config_hash: str
    seeds: tuple[int, ...]
    rows: list[ResultRow] = field(default_factory=list)
    teacher: dict | None = None
    small_teacher: dict | None = None
    overconfidence: dict | None = None
    agreement: dict | None = None
    curves: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return _plain({
            "name": self.name,
            "config_hash": self.config_hash,
            "seeds": list(self.seeds),
            "num_rows": len(self.rows),
            "teacher": self.teacher,
            "small_teacher": self.small_teacher,
            "overconfidence": self.overconfidence,
            "agreement": self.agreement,
            "curves": self.curves,
            "medians": median_accuracies(self.rows),
        })


def median_accuracies(rows: Sequence[ResultRow]) -> dict:
    """Median student accuracy per (condition, grid point) over seeds, and the
    median over seeds of each seed's best grid point per condition."""
    by_point: dict[tuple, list[float]] = {}
    by_seed: dict[tuple, list[float]] = {}
    for r in rows:
        by_point.setdefault((r.condition, r.tau1, r.tau2), []).append(r.student_test_acc)
        by_seed.setdefault((r.condition, r.seed), []).append(r.student_test_acc)
    best: dict[str, list[float]] = {}
    for (cond, _), accs in by_seed.items():
        best.setdefault(cond, []).append(max(accs))
    return {
        "per_point": [
            {"condition": c, "tau1": t1, "tau2": t2, "median": float(np.median(v))}
            for (c, t1, t2), v in by_point.items()
        ],
        "best_grid": {c: float(np.median(v)) for c, v in best.items()},
    }


def overconfidence(teacher: TeacherRun, small: TeacherRun, threshold: float = OVERCONFIDENCE_RATIO) -> dict:
    big, ref = teacher.mean_target_logit, small.mean_target_logit
    ratio = big / ref if ref > 0 else float("inf")
    return {"teacher_mean_fy": big, "small_mean_fy": ref, "ratio": ratio, "threshold": threshold,
            "overconfident": bool(ratio >= threshold)}


def sweep(cfg: ExperimentConfig, jobs: int = 1, out_dir=None) -> RunReport:
    """Teacher(s) once, then every (condition, grid point) x seed student.

    Rows come out grid-major and seed-minor whatever ``jobs`` is.
    """
    teacher = run_teacher(cfg, out_dir=out_dir)
    report = RunReport(cfg.name, config_hash(cfg), cfg.seeds, teacher=teacher.summary())
    f, y = teacher.logits.logits(), teacher.logits.labels()
    if cfg.small_teacher is not None and cfg.logit_file is None:
        small = run_teacher(cfg, role="small_teacher", out_dir=out_dir)
        report.small_teacher = small.summary()
        report.overconfidence = overconfidence(teacher, small)
        report.agreement = dataclasses.asdict(compare_teachers(teacher, small, 1.0, cfg.topk))
    if cfg.sweep is None:
        return report
    if len(y):
        report.curves = {
            "ts": decomposition_curve(f, y, cfg.sweep.curve_taus),
            "ats": decomposition_curve(f, y, cfg.sweep.curve_taus, ATS_CURVE_FACTORS),
        }
        for c in report.curves.values():
            c["checks"] = curve_checks(c)
    if cfg.logit_file is not None:
        return report
    accs = (teacher.train_acc, teacher.test_acc)
    tasks = [
        (cfg, f, accs, cond, temps, seed)
        for cond in cfg.sweep.conditions
        for temps in cfg.sweep.grid(cond)
        for seed in cfg.seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            report.rows = list(pool.map(_task_star, tasks))
    else:
        report.rows = [_task_star(t) for t in tasks]
    return report


def distill(cfg: ExperimentConfig, temps: Temps | None = None, out_dir=None) -> RunReport:
    """One grid point (default ``cfg.loss.teacher_temps``) for every seed, plus NoKD."""
    temps = cfg.loss.teacher_temps if temps is None else temps
    teacher = run_teacher(cfg, out_dir=out_dir)
    report = RunReport(cfg.name, config_hash(cfg), cfg.seeds, teacher=teacher.summary())
    cond = "kd_ats" if isinstance(temps, TemperaturePair) else "kd_ts"
    report.rows = [run_distillation(cfg, teacher, c, t, s) for c, t in (("nokd", None), (cond, temps)) for s in cfg.seeds]
    return report


# reports

def _cell(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_results(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([_cell(getattr(r, c)) for c in RESULT_COLUMNS])
    return buf.getvalue()


def _finite_or_none(v):
    return v if v is None or math.isfinite(v) else None


def _svg(fig, path: Path) -> None:
    import matplotlib

    with matplotlib.rc_context({"svg.hashsalt": "atskd", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _plot_accuracy(report: RunReport, path: Path) -> None:
    from matplotlib.figure import Figure

    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    per = median_accuracies(report.rows)["per_point"]
    for cond, style in (("kd_ts", "o-"), ("ils", "s--")):
        pts = sorted((p["tau1"], p["median"]) for p in per if p["condition"] == cond)
        if pts:
            ax.plot(*zip(*pts), style, label=cond)
    ats = [(p["tau1"], p["median"], p["tau2"]) for p in per if p["condition"] == "kd_ats"]
    if ats:
        ax.plot([a[0] for a in ats], [a[1] for a in ats], "^", label="kd_ats (x = tau1)")
        for x, yv, t2 in ats:
            ax.annotate(f"{t2:g}", (x, yv), fontsize=7, xytext=(3, 3), textcoords="offset points")
    nokd = [p["median"] for p in per if p["condition"] == "nokd"]
    if nokd:
        ax.axhline(nokd[0], color="gray", linestyle=":", label="nokd")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("teacher temperature")
    ax.set_ylabel("median student test accuracy")
    ax.set_title(report.name)
    if ax.lines:
        ax.legend(fontsize=8)
    fig.tight_layout()
    _svg(fig, path)


def _plot_decomposition(report: RunReport, path: Path) -> None:
    from matplotlib.figure import Figure

    fig = Figure(figsize=(9, 3))
    for ax, key, title in zip(fig.subplots(1, 3), ("da", "dv", "iv"), ("derived average", "derived variance", "inherent variance")):
        for name, curve in sorted(report.curves.items()):
            ax.plot(curve["tau"], curve[key], "o-", label=name)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("tau")
        ax.set_title(title, fontsize=9)
        if report.curves:
            ax.legend(fontsize=7)
    fig.tight_layout()
    _svg(fig, path)


def emit_report(report: RunReport, out_dir) -> dict[str, Path]:
    """Write results.csv, summary.json and two SVG charts; the bytes depend only on the report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "results": out / "results.csv",
        "summary": out / "summary.json",
        "accuracy_plot": out / "accuracy_vs_tau.svg",
        "decomposition_plot": out / "decomposition_vs_tau.svg",
    }
    paths["results"].write_text(format_results(report.rows), encoding="utf-8", newline="\n")
    paths["summary"].write_text(
        json.dumps(report.summary(), sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8", newline="\n"
    )
    _plot_accuracy(report, paths["accuracy_plot"])
    _plot_decomposition(report, paths["decomposition_plot"])
    return paths


# proposition checks

@dataclass(frozen=True)
class LedgerRow:
    check_name: str
    passed: int
    total: int
    max_violation: float

    @property
    def ok(self) -> bool:
        return self.passed == self.total


class _Check:
    def __init__(self, name: str, tol: float):
        self.name, self.tol = name, tol
        self.passed = self.total = 0
        self.worst = 0.0

    def add(self, err: float) -> None:
        """``err`` is the amount by which the property fails (<= tol passes)."""
        self.total += 1
        err = float(err) if math.isfinite(err) else math.inf
        self.worst = max(self.worst, err)
        self.passed += err <= self.tol

    def row(self) -> LedgerRow:
        return LedgerRow(self.name, self.passed, self.total, self.worst)


def _rand_record(rng: np.random.Generator, c: int | None = None, assume_max: bool = False) -> LogitRecord:
    c = c or int(rng.choice([3, 10, 100]))
    f = rng.standard_normal(c) * rng.uniform(0.5, 5.0)
    y = int(rng.integers(c))
    if assume_max:
        j = int(f.argmax())
        f[j], f[y] = f[y], f[j]
    return LogitRecord(f, y)


def _rand_temps(rng: np.random.Generator) -> Temps:
    if rng.random() < 0.5:
        return float(rng.choice([0.5, 1.0, 4.0, 16.0]))
    return TemperaturePair(float(rng.uniform(0.5, 8)), float(rng.uniform(0.5, 8)))


def verify_propositions(sample_count: int, seed: int) -> list[LedgerRow]:
    """Randomized checks of the scaling, metric and loss properties.

    Failures are returned as data; nothing here raises on a failed property.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    names_tols = [
        ("ts_normalized", 1e-12), ("ats_normalized", 1e-12), ("ts_rank_preserving", 0.0),
        ("ats_equal_temps_is_ts", 1e-12), ("ats_wrong_block_uses_tau2_only", 1e-10),
        ("dv_da_iv_identity", 1e-10), ("whole_variance_nonincreasing", 1e-14),
        ("target_prob_nonincreasing", 1e-14), ("derived_average_nondecreasing", 1e-14),
        ("derived_average_limit", 1e-4), ("dprob_dtau_finite_difference", 1e-6),
        ("dpy_dtau_nonpositive", 1e-15), ("raise_target_lowers_dv", 0.0),
        ("contract_wrong_lowers_dv", 0.0), ("kd_decomposition_exact", 1e-12),
        ("kd_gradient_finite_difference", 1e-6), ("kd_gradient_sums_to_zero", 1e-10),
        ("ils_removes_class_discriminability", 1e-10),
    ]
    chk = {n: _Check(n, t) for n, t in names_tols}
    grid = (0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 10.0)
    for _ in range(sample_count):
        r = _rand_record(rng)
        c, y = r.num_classes, r.label
        tau = float(rng.uniform(0.2, 10))
        pair = TemperaturePair(float(rng.uniform(0.5, 8)), float(rng.uniform(0.5, 8)))
        p = softmax_ts(r, tau).probs
        pa = softmax_ats(r, pair).probs
        chk["ts_normalized"].add(abs(p.sum() - 1))
        chk["ats_normalized"].add(abs(pa.sum() - 1))
        order = np.argsort(r.logits, kind="stable")
        chk["ts_rank_preserving"].add(max(0.0, -np.diff(p[order]).min()))
        chk["ats_equal_temps_is_ts"].add(np.abs(softmax_ats(r, TemperaturePair(tau, tau)).probs - p).max())
        q = np.delete(pa, y)
        expect = renorm_wrong_probs(r, pair.tau2)
        chk["ats_wrong_block_uses_tau2_only"].add(np.abs(q / q.sum() - expect).max() / expect.max())

        s = decomposition_stats(r, _rand_temps(rng))
        lhs, rhs = s.derived_var, (c - 1) ** 2 * s.derived_avg**2 * s.inherent_var
        chk["dv_da_iv_identity"].add(abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))

        wv = [whole_variance(softmax_ts(r, t)) for t in grid]
        chk["whole_variance_nonincreasing"].add(max(0.0, np.diff(wv).max()))

        ra = _rand_record(rng, assume_max=True)
        ps = [softmax_ts(ra, t).probs for t in grid]
        py = np.array([v[ra.label] for v in ps])
        da = np.array([derived_average(np.delete(v, ra.label)) for v in ps])
        chk["target_prob_nonincreasing"].add(max(0.0, np.diff(py).max()))
        chk["derived_average_nondecreasing"].add(max(0.0, -np.diff(da).min()))
        far = derived_average(np.delete(softmax_ts(ra, 1e6).probs, ra.label))
        chk["derived_average_limit"].add(abs(far - 1 / ra.num_classes))
        chk["dpy_dtau_nonpositive"].add(max(0.0, dprobs_dtau(ra, tau)[ra.label]))

        h = 1e-5
        fd = (softmax_ts(r, tau + h).probs - softmax_ts(r, tau - h).probs) / (2 * h)
        chk["dprob_dtau_finite_difference"].add(np.abs(fd - dprobs_dtau(r, tau)).max())

        # raise-target and contract-wrong constructions on a moderate record so probabilities stay representable
        rc = _rand_record(rng, c=int(rng.integers(3, 30)))
        base = decomposition_stats(rc, 1.0).derived_var
        f = rc.logits.copy()
        f[rc.label] += rng.uniform(0.1, 3.0)
        chk["raise_target_lowers_dv"].add(max(0.0, decomposition_stats(LogitRecord(f, rc.label), 1.0).derived_var - base) + (base == 0))
        f = rc.logits.copy()
        wrong = np.arange(f.size) != rc.label
        g = f[wrong]
        f[wrong] = g.mean() + rng.uniform(0.1, 0.9) * (g - g.mean())
        contracted = decomposition_stats(LogitRecord(f, rc.label), 1.0).derived_var
        chk["contract_wrong_lowers_dv"].add(max(0.0, contracted - base) + (contracted == base))

        t = _rand_record(rng, c=int(rng.integers(2, 12)))
        st = LogitRecord(rng.standard_normal(t.num_classes) * 3, t.label)
        cfg = LossConfig(float(rng.choice([0.0, 0.5, 1.0])), _rand_temps(rng), None, bool(rng.integers(2)))
        pt = ProbVector(teacher_label(t, cfg), cfg.teacher_temps)
        pst = softmax_ts(st, cfg.student_temp)
        terms = kd_decompose(pt, pst, t.label)
        direct = -float(pt.probs @ np.log(pst.probs))
        chk["kd_decomposition_exact"].add(abs(terms.correct_guidance + terms.smooth_regularization + terms.class_discriminability - direct))
        ils = bool(rng.integers(2))
        grad = grad_student_logits(t, st, cfg, ils)
        fdg = np.empty_like(grad)
        for i in range(grad.size):
            zp, zm = st.logits.copy(), st.logits.copy()
            zp[i] += h
            zm[i] -= h
            fdg[i] = (combined_loss(t, LogitRecord(zp, t.label), cfg, ils) - combined_loss(t, LogitRecord(zm, t.label), cfg, ils)) / (2 * h)
        chk["kd_gradient_finite_difference"].add(np.abs(grad - fdg).max())
        chk["kd_gradient_sums_to_zero"].add(abs(grad.sum()))
        gap = kd_loss(t, st, cfg) - ils_loss(t, st, cfg)
        chk["ils_removes_class_discriminability"].add(
            abs(gap - cfg.lam * cfg.scale * terms.class_discriminability) / max(1.0, cfg.scale)
        )
    return [c.row() for c in chk.values()]


def format_ledger(rows: Sequence[LedgerRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LEDGER_COLUMNS)
    for r in rows:
        w.writerow([r.check_name, r.passed, r.total, repr(r.max_violation)])
    return buf.getvalue()


def write_ledger(rows: Sequence[LedgerRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_ledger(rows), encoding="utf-8", newline="\n")
    return path
