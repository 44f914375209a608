import csv
import dataclasses
import io

import numpy as np
import pytest

from atskd import harness
from atskd.data import SyntheticSpec, read_logit_file
from atskd.harness import (
    ConfigError,
    ExperimentConfig,
    ModelConfig,
    ResultRow,
    RunReport,
    SweepConfig,
    config_hash,
    count_local_maxima,
    emit_report,
    has_interior_peak,
    parse_config,
    run_distillation,
    run_teacher,
    sweep,
    verify_propositions,
)
from atskd.nn import TrainConfig
from atskd.scaling import TemperaturePair

FAST = TrainConfig(epochs=4, milestones=())


def tiny_config(**kw) -> ExperimentConfig:
    base = ExperimentConfig(
        name="tiny",
        data=SyntheticSpec(train_per_class=20, test_per_class=20),
        teacher=ModelConfig((20, 24, 10), FAST),
        small_teacher=ModelConfig((20, 6, 10), FAST),
        student=ModelConfig((20, 8, 10), TrainConfig(epochs=3, milestones=())),
        sweep=SweepConfig(conditions=("kd_ts",)),
    )
    return dataclasses.replace(base, **kw)


@pytest.fixture(scope="module")
def default_teacher():
    return run_teacher(ExperimentConfig())


# configs

def test_default_yaml_matches_defaults():
    cfg = harness.load_config("configs/default.yaml")
    assert cfg == ExperimentConfig()
    assert config_hash(cfg) == config_hash(ExperimentConfig())


def test_partial_sections_merge_onto_defaults():
    cfg = parse_config({"teacher": {"train": {"epochs": 7}}, "loss": {"teacher_temps": [4, 2]}, "seeds": [5]})
    assert cfg.teacher.dims == ExperimentConfig().teacher.dims
    assert cfg.teacher.train.epochs == 7 and cfg.teacher.train.milestones == (60, 80)
    assert cfg.loss.teacher_temps == TemperaturePair(4.0, 2.0)
    assert cfg.seeds == (5,)
    assert parse_config({"small_teacher": None, "sweep": None}).small_teacher is None


@pytest.mark.parametrize(
    "raw, path",
    [
        ({"bogus": 1}, "bogus"),
        ({"teacher": {"train": {"epoch": 3}}}, "teacher.train.epoch"),
        ({"data": {"clusters": 3}}, "data.clusters"),
        ({"sweep": {"ts_grid": [1], "atsgrid": []}}, "sweep.atsgrid"),
        ({"loss": {"lambda": 0.5}}, "loss.lambda"),
        ({"logit_file": "x"}, "logit_file"),
        ({"loss": {"lam": 2.0}}, "loss"),
        ({"loss": {"teacher_temps": "hot"}}, "loss.teacher_temps"),
        ({"sweep": {"conditions": ["kd"]}}, "sweep"),
        ({"sweep": {"ts_grid": []}}, "sweep"),
        ({"seeds": []}, "<root>"),
        ({"student": {"dims": [20, 8, 3]}}, "<root>"),
        ({"teacher": "big"}, "teacher"),
    ],
)
def test_config_errors_name_the_key_path(raw, path):
    with pytest.raises(ConfigError) as exc:
        parse_config(raw)
    assert exc.value.key_path == path
    assert path in str(exc.value)


def test_data_and_dims_change_together():
    cfg = parse_config({"data": {"input_dim": 5, "num_classes": 3, "affinity_groups": [[0, 1], [2]]},
                        "teacher": {"dims": [5, 9, 3]}, "small_teacher": None, "student": {"dims": [5, 4, 3]}})
    assert cfg.data.input_dim == 5 and cfg.data.affinity_groups == ((0, 1), (2,))


def test_logit_file_config(tmp_path):
    cfg = parse_config({"data": {"logit_file": str(tmp_path / "t.logits")}})
    assert cfg.logit_file == str(tmp_path / "t.logits")
    assert harness.config_to_dict(cfg)["data"] == {"logit_file": cfg.logit_file}


def test_config_hash():
    a = ExperimentConfig()
    assert config_hash(a) == config_hash(dataclasses.replace(a, output_dir="elsewhere"))
    assert config_hash(a) != config_hash(dataclasses.replace(a, seeds=(4,)))


def test_invalid_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        harness.load_config(p)


# teachers

def test_small_teacher_fits_default_task():
    cfg = dataclasses.replace(ExperimentConfig(), teacher=ModelConfig((20, 32, 10), harness.TEACHER_TRAIN))
    assert run_teacher(cfg).train_acc >= 0.9


def test_teacher_artifacts(tmp_path):
    cfg = tiny_config()
    a = run_teacher(cfg, seed=0, out_dir=tmp_path)
    b = run_teacher(cfg, seed=1, out_dir=tmp_path)
    assert a.checkpoint != b.checkpoint and a.checkpoint.read_bytes() != b.checkpoint.read_bytes()
    ds = read_logit_file(a.logit_path)
    assert len(ds) == cfg.data.num_classes * cfg.data.train_per_class
    np.testing.assert_array_equal(ds.logits(), a.logits.logits())
    again = run_teacher(cfg, seed=0, out_dir=tmp_path / "again")
    assert again.checkpoint.read_bytes() == a.checkpoint.read_bytes()
    assert again.logit_path.read_bytes() == a.logit_path.read_bytes()


def test_shuffled_control_uses_true_labels_in_logit_file():
    cfg = tiny_config()
    run = run_teacher(cfg, shuffle_labels=True)
    assert np.array_equal(run.logits.labels(), np.repeat(np.arange(10), 20))


def test_teacher_from_logit_file(tmp_path):
    cfg = tiny_config()
    src = run_teacher(cfg, out_dir=tmp_path)
    file_cfg = dataclasses.replace(cfg, logit_file=str(src.logit_path))
    loaded = run_teacher(file_cfg)
    assert loaded.model is None
    assert loaded.train_acc == pytest.approx(src.train_acc)
    assert loaded.mean_target_logit == pytest.approx(src.mean_target_logit)
    with pytest.raises(ValueError):
        run_distillation(file_cfg, loaded, "kd_ts", 4.0, 1)
    rep = sweep(file_cfg)
    assert rep.rows == [] and set(rep.curves) == {"ts", "ats"}


# distillation

def test_lambda_zero_equals_nokd():
    cfg = tiny_config(loss=harness.LossSettings(lam=0.0))
    t = run_teacher(cfg)
    nokd = run_distillation(cfg, t, "nokd", None, 3)
    kd = run_distillation(cfg, t, "kd_ts", 4.0, 3)
    assert kd.student_test_acc == nokd.student_test_acc
    assert nokd.tau1 is None and nokd.dv_mean is None


def test_ats_equal_temps_matches_ts():
    cfg = tiny_config(loss=harness.LossSettings(student_temp=2.0))
    t = run_teacher(cfg)
    ts = run_distillation(cfg, t, "kd_ts", 3.0, 1)
    ats = run_distillation(cfg, t, "kd_ats", TemperaturePair(3.0, 3.0), 1)
    assert dataclasses.replace(ats, condition="kd_ts") == ts


def test_condition_temperature_mismatch():
    cfg = tiny_config()
    t = run_teacher(cfg)
    with pytest.raises(ValueError):
        run_distillation(cfg, t, "kd_ats", 4.0, 1)
    with pytest.raises(ValueError):
        run_distillation(cfg, t, "kd", 4.0, 1)


def test_ils_row_has_zero_derived_variance():
    cfg = tiny_config()
    t = run_teacher(cfg)
    ils = run_distillation(cfg, t, "ils", 4.0, 1)
    kd = run_distillation(cfg, t, "kd_ts", 4.0, 1)
    assert ils.dv_mean == 0.0 and ils.da_mean == kd.da_mean and kd.dv_mean > 0


def test_ats_raises_teacher_derived_variance(default_teacher):
    f, y = default_teacher.logits.logits(), default_teacher.logits.labels()
    ts = harness._label_stats(f, y, 4.0, False)
    ats = harness._label_stats(f, y, TemperaturePair(4.0, 2.0), False)
    assert ats[1] > ts[1]


# sweeps and curves

def test_sweep_cardinality_and_order():
    cfg = tiny_config(sweep=SweepConfig(conditions=("kd_ts",)))
    rep = sweep(cfg)
    assert len(rep.rows) == 18
    assert [(r.tau1, r.seed) for r in rep.rows] == [(t, s) for t in harness.DEFAULT_TS_GRID for s in (1, 2, 3)]
    assert all(0 <= r.student_test_acc <= 1 for r in rep.rows)
    assert rep.overconfidence is not None and rep.agreement is not None


def test_sweep_all_conditions_order():
    cfg = tiny_config(seeds=(4,), sweep=SweepConfig(ts_grid=(1.0, 2.0), ats_grid=((3, 1),)))
    rep = sweep(cfg)
    assert [(r.condition, r.tau1, r.tau2) for r in rep.rows] == [
        ("nokd", None, None), ("kd_ts", 1.0, 1.0), ("kd_ts", 2.0, 2.0), ("kd_ats", 3.0, 1.0),
        ("ils", 1.0, 1.0), ("ils", 2.0, 2.0),
    ]


def test_parallel_sweep_matches_serial():
    cfg = tiny_config(seeds=(1, 2), sweep=SweepConfig(ts_grid=(1.0, 4.0), ats_grid=((4, 2),)))
    assert sweep(cfg, jobs=2).rows == sweep(cfg, jobs=1).rows


@pytest.mark.parametrize(
    "values, peaks",
    [
        ([0, 1, 2, 1, 0], 1),
        ([0, 1, 0, 1, 0], 2),
        ([3, 2, 1], 1),
        ([1, 2, 3], 1),
        ([1, 1, 1], 1),
        ([0, 1, 1 + 1e-13, 1, 0], 1),
        ([0, 2, 2, 0], 1),
        ([1, 0, 1], 2),
    ],
)
def test_count_local_maxima(values, peaks):
    assert count_local_maxima(values) == peaks


def test_interior_peak():
    assert has_interior_peak([0, 1, 0])
    assert not has_interior_peak([2, 1, 0])
    assert not has_interior_peak([0, 1, 2])


def test_default_teacher_curves(default_teacher):
    f, y = default_teacher.logits.logits(), default_teacher.logits.labels()
    curve = harness.decomposition_curve(f, y, harness.CURVE_TAUS)
    checks = harness.curve_checks(curve)
    assert checks == {"da_nondecreasing": True, "dv_local_maxima": 1, "dv_rises_then_falls": True}
    ats = harness.decomposition_curve(f, y, harness.CURVE_TAUS, harness.ATS_CURVE_FACTORS)
    assert ats["tau1"][2] == 1.25 and ats["tau2"][2] == 0.75
    # the asymmetric path keeps a larger derived variance at every temperature
    assert all(a > b for a, b in zip(ats["dv"], curve["dv"]))


def test_overconfidence_flag():
    cfg = tiny_config()
    a = run_teacher(cfg)
    oc = harness.overconfidence(a, a)
    assert oc["ratio"] == 1.0 and not oc["overconfident"]


def test_compare_teacher_with_itself():
    a = run_teacher(tiny_config())
    s = harness.compare_teachers(a, a)
    assert (s.spearman, s.kendall, s.topk_overlap, s.l1_distance) == (1.0, 1.0, 1.0, 0.0)


# reports

def test_empty_report_is_header_only(tmp_path):
    paths = emit_report(RunReport("empty", "0", (1,)), tmp_path)
    assert paths["results"].read_text() == ",".join(harness.RESULT_COLUMNS) + "\n"
    assert paths["accuracy_plot"].read_text().startswith("<?xml")


def test_report_round_trip_and_determinism(tmp_path):
    rep = sweep(tiny_config())
    a = emit_report(rep, tmp_path / "a")
    b = emit_report(rep, tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes(), key
    lines = a["results"].read_text().splitlines()
    assert len(lines) == 19
    parsed = list(csv.DictReader(io.StringIO(a["results"].read_text())))
    assert float(parsed[0]["student_test_acc"]) == rep.rows[0].student_test_acc
    assert "<dc:date>" not in a["accuracy_plot"].read_text()


def test_nan_cells_are_blank():
    row = ResultRow("kd_ts", 1.0, 1.0, 1, 1.0, float("nan"), 0.5, 0.1, 0.2, 0.3)
    assert harness.format_results([row]).splitlines()[1] == "kd_ts,1.0,1.0,1,1.0,,0.5,0.1,0.2,0.3"


def test_median_accuracies():
    rows = [
        ResultRow("kd_ts", t, t, s, 1, 1, acc, 0, 0, 0)
        for (t, s, acc) in [(1.0, 1, 0.5), (1.0, 2, 0.7), (2.0, 1, 0.6), (2.0, 2, 0.4)]
    ]
    med = harness.median_accuracies(rows)
    assert med["best_grid"]["kd_ts"] == pytest.approx(0.65)
    assert [p["median"] for p in med["per_point"]] == pytest.approx([0.6, 0.5])


# proposition checks

def test_verify_propositions_all_pass():
    rows = verify_propositions(300, 7)
    assert len({r.check_name for r in rows}) == len(rows) >= 15
    failing = [r for r in rows if not r.ok]
    assert not failing
    assert all(r.total == 300 for r in rows)


def test_verify_is_deterministic_and_validates():
    assert verify_propositions(20, 3) == verify_propositions(20, 3)
    with pytest.raises(ValueError):
        verify_propositions(0, 1)


def test_ledger_format(tmp_path):
    rows = [harness.LedgerRow("x", 2, 3, 0.5)]
    path = harness.write_ledger(rows, tmp_path / "sub" / "ledger.csv")
    assert path.read_text() == "check_name,passed,total,max_violation\nx,2,3,0.5\n"
    assert not rows[0].ok
