import dataclasses
import json

import numpy as np
import pytest

from uqreplay.harness import (
    ExperimentConfig,
    config_fingerprint,
    config_from_dict,
    load_config_dict,
    run_er_baseline,
    run_grid,
    run_online_cl,
    run_single,
)

SMALL = dict(
    class_count=4,
    task_count=2,
    classes_per_task=2,
    dim=4,
    samples_per_class=20,
    batch_size=5,
    memory_capacity=8,
    model="logreg",
    hidden=8,
    seeds=(0,),
)


def small_cfg(**overrides):
    return ExperimentConfig(**{**SMALL, **overrides})


def test_config_defaults_are_the_benchmark():
    cfg = ExperimentConfig()
    assert cfg.batch_size == 10
    assert cfg.learning_rate == 0.1
    assert cfg.task_count == 5 and cfg.classes_per_task == 2 and cfg.class_count == 10
    assert cfg.tta_views == 4 and cfg.tta_sigma == 0.1
    assert cfg.seeds == (0, 1, 2)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config keys: batchsize"):
        config_from_dict({"batchsize": 10})


@pytest.mark.parametrize(
    "field,value",
    [
        ("score", "xx"),
        ("strategy", "middle"),
        ("model", "resnet"),
        ("batch_size", 0),
        ("learning_rate", 0.0),
        ("memory_capacity", -1),
        ("task_count", 1),
        ("imbalance_rho", 0.0),
        ("test_fraction", 0.0),
        ("class_count", 9),
        ("dataset", "png"),
    ],
)
def test_config_validation(field, value):
    with pytest.raises(ValueError):
        small_cfg(**{field: value})


def test_fingerprint_ignores_seeds_and_out_dir_only():
    a = small_cfg()
    assert config_fingerprint(a) == config_fingerprint(small_cfg(seeds=(5, 6), out_dir="x"))
    assert config_fingerprint(a) != config_fingerprint(small_cfg(memory_capacity=9))


def test_load_config_dict_yaml(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("batch_size: 5\nscore: en\nseeds: [1, 2]\n", encoding="utf-8")
    cfg = config_from_dict({**SMALL, **load_config_dict(p)})
    assert cfg.score == "en" and cfg.seeds == (1, 2)
    bad = tmp_path / "bad.yaml"
    bad.write_text("- just\n- a list\n", encoding="utf-8")
    with pytest.raises(ValueError, match="mapping"):
        load_config_dict(bad)


def test_run_is_deterministic():
    cfg = small_cfg(score="bi", strategy="bottom")
    a = run_online_cl(cfg, seed=3)
    b = run_online_cl(cfg, seed=3)
    assert a == b
    c = run_online_cl(cfg, seed=4)
    assert (a.last_accuracy, a.last_forgetting) != (c.last_accuracy, c.last_forgetting)


def test_er_baseline_equals_forcing_er_score():
    cfg = small_cfg()
    assert run_er_baseline(cfg, 1) == run_online_cl(dataclasses.replace(cfg, score="er-random"), 1)


def test_capacity_zero_is_finetuning_with_high_forgetting():
    # without replay, a long second task drags the representation away and
    # forgetting of the first task is near-total
    cfg = ExperimentConfig(
        class_count=4, task_count=2, classes_per_task=2, dim=16,
        samples_per_class=400, memory_capacity=0, seeds=(0,),
    )
    for seed in range(5):
        s = run_online_cl(cfg, seed)
        assert s.last_forgetting > 0.5
    er = run_er_baseline(cfg, 0)
    scored = run_online_cl(cfg, 0)
    assert (er.last_accuracy, er.last_forgetting) == (scored.last_accuracy, scored.last_forgetting)


def test_huge_capacity_makes_all_strategies_coincide():
    cfg = small_cfg(memory_capacity=10_000)
    summaries = {
        run_online_cl(dataclasses.replace(cfg, score=score, strategy=strategy), 2)
        for score, strategy in [("bi", "bottom"), ("bi", "top"), ("lc", "step")]
    }
    summaries.add(run_er_baseline(cfg, 2))
    fingerprint_free = {(s.last_accuracy, s.last_forgetting) for s in summaries}
    assert len(fingerprint_free) == 1


def test_run_single_writes_artifacts(tmp_path):
    cfg = small_cfg(score="bi", strategy="bottom")
    artifacts = run_single(cfg, seed=0, out_dir=tmp_path)
    with open(artifacts.summary_path, encoding="utf-8") as fh:
        payload = json.load(fh)
    assert payload["seed"] == 0
    assert payload["fingerprint"] == config_fingerprint(cfg)
    assert 0.0 <= payload["last_accuracy"] <= 1.0
    assert payload["config"]["memory_capacity"] == 8

    matrix_lines = open(artifacts.matrix_path, encoding="utf-8").read().splitlines()
    assert matrix_lines[0] == "stage,task_0,task_1"
    assert len(matrix_lines) == 3

    memory_lines = open(artifacts.memory_path, encoding="utf-8").read().splitlines()
    assert memory_lines[0] == "sample_id,class,task,score,inserted_at"
    assert len(memory_lines) == 1 + cfg.memory_capacity


def test_run_failure_names_the_batch(monkeypatch):
    cfg = small_cfg()
    import uqreplay.harness as harness

    real_init = harness.init_model

    def flaky_init(*args, **kwargs):
        model = real_init(*args, **kwargs)
        calls = {"n": 0}
        original = model.step

        def exploding_step(X, y):
            calls["n"] += 1
            if calls["n"] >= 3:
                raise RuntimeError("boom")
            return original(X, y)

        model.step = exploding_step
        return model

    monkeypatch.setattr(harness, "init_model", flaky_init)
    with pytest.raises(RuntimeError, match="stream batch 2"):
        run_online_cl(cfg, 0)


def test_run_grid_aggregates_and_relative_improvement(tmp_path):
    cfg = small_cfg(noise_scale=1.5)
    result = run_grid(
        cfg,
        scores=["bi", "er-random"],
        strategies=["bottom"],
        capacities=[8],
        seeds=[0, 1, 2],
        out_dir=tmp_path,
    )
    assert len(result.cells) == 2
    assert len(result.runs) == 6
    by_score = {row["score"]: row for row in result.cells}
    er, bi = by_score["er-random"], by_score["bi"]
    assert er["strategy"] == "random" and er["n_seeds"] == 3
    assert er["rel_forgetting_improvement_vs_er"] == ""
    if er["mean_last_forgetting"] > 0:
        expected = (er["mean_last_forgetting"] - bi["mean_last_forgetting"]) / er[
            "mean_last_forgetting"
        ]
        assert bi["rel_forgetting_improvement_vs_er"] == pytest.approx(expected)
    assert (tmp_path / "grid.csv").exists() and (tmp_path / "runs.csv").exists()


def test_run_grid_single_cell_single_seed():
    result = run_grid(small_cfg(), scores=["lc"], strategies=["top"], capacities=[8], seeds=[0])
    assert len(result.cells) == 1
    row = result.cells[0]
    assert row["n_seeds"] == 1 and row["n_failed"] == 0
    assert row["std_last_accuracy"] == 0.0 and row["std_last_forgetting"] == 0.0


def test_run_grid_records_partial_failures(tmp_path):
    cfg = small_cfg()
    bad = dataclasses.replace(cfg)  # csv dataset that does not exist fails at run time
    result = run_grid(
        dataclasses.replace(bad),
        scores=["bi"],
        strategies=["bottom"],
        capacities=[8],
        seeds=[0],
        out_dir=None,
    )
    assert result.cells[0]["n_failed"] == 0  # sanity: good cell runs

    import uqreplay.harness as harness

    original = harness._execute

    def sometimes_broken(cfg_, seed):
        if cfg_.score == "lc":
            raise RuntimeError("synthetic failure")
        return original(cfg_, seed)
    try:
        harness._execute = sometimes_broken
        result = run_grid(cfg, scores=["bi", "lc"], strategies=["bottom"],
                          capacities=[8], seeds=[0, 1], out_dir=tmp_path)
    finally:
        harness._execute = original
    by_score = {row["score"]: row for row in result.cells}
    assert by_score["bi"]["n_failed"] == 0 and by_score["bi"]["n_seeds"] == 2
    assert by_score["lc"]["n_failed"] == 2 and by_score["lc"]["n_seeds"] == 0
    assert "synthetic failure" in by_score["lc"]["error"]
    assert by_score["lc"]["mean_last_forgetting"] == ""
    runs_csv = (tmp_path / "runs.csv").read_text(encoding="utf-8")
    assert "synthetic failure" in runs_csv


def test_grid_csv_is_byte_deterministic(tmp_path):
    cfg = small_cfg()
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        run_grid(cfg, scores=["bi", "er-random"], strategies=["bottom", "top"],
                 capacities=[4, 8], seeds=[0, 1], out_dir=out)
        blobs.append(((out / "grid.csv").read_bytes(), (out / "runs.csv").read_bytes()))
    assert blobs[0] == blobs[1]


def test_csv_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    lines = ["f0,f1,f2,label"]
    for i in range(80):
        label = i % 4
        row = rng.normal(loc=3.0 * label, scale=1.0, size=3)
        lines.append(",".join(f"{v:.6f}" for v in row) + f",{label}")
    p = tmp_path / "data.csv"
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    cfg = ExperimentConfig(
        dataset="csv", csv_path=str(p), label_column="label",
        task_count=2, classes_per_task=2, batch_size=5, memory_capacity=8,
        model="logreg", seeds=(0,),
    )
    s = run_online_cl(cfg, 0)
    assert 0.0 <= s.last_accuracy <= 1.0
    assert run_online_cl(cfg, 0) == s


def test_csv_dataset_class_count_mismatch(tmp_path):
    p = tmp_path / "two.csv"
    p.write_text("x,label\n1,0\n2,1\n3,0\n4,1\n", encoding="utf-8")
    cfg = ExperimentConfig(
        dataset="csv", csv_path=str(p), label_column="label",
        task_count=2, classes_per_task=2, batch_size=2, memory_capacity=4,
        model="logreg", seeds=(0,), test_fraction=0.25,
    )
    with pytest.raises(ValueError, match="2 classes, config expects 4"):
        run_online_cl(cfg, 0)
