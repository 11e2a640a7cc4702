import json
from pathlib import Path

import pytest

from gps_replay.errors import ConfigError
from gps_replay.experiment import (ExperimentConfig, RunResult, list_presets, load_config,
                                   read_result, report, run_experiment, sweep_csv)

FIXTURE = Path(__file__).parent / "data" / "mnist-5k"


def tiny(method="er-res", **kw):
    d = {"name": f"tiny-{method}", "method": method, "memory_size": 12, "hidden": [8],
         "benchmark": {"kind": "synthetic", "n_tasks": 3,
                       "synthetic": {"n_classes": 3, "dim": 6, "n_per_task": 120, "seed": 2}},
         "train": {"epochs": 1},
         "sim": {"min_stride": 2, "max_stride": 4},
         "repeat": 2}
    d.update(kw)
    return ExperimentConfig.from_dict(d)


def test_presets_load_and_validate():
    assert {"pmnist-full", "pmnist-ci", "skewed-synthetic"} <= set(list_presets())
    full = load_config("pmnist-full")
    assert (full.memory_size, full.hidden, full.train.epochs, full.repeat) == \
        (1000, [100, 100], 5, 5)
    assert full.train.learning_rate == 0.1 and full.train.lam == 1.0


@pytest.mark.parametrize("bad", [
    {"momentum": 0.9},
    {"train": {"epochs": 1, "momentum": 0.9}},
    {"benchmark": {"kind": "synthetic", "synthetic": {"n_classes": 2, "colour": 1}}},
    {"method": "er-magic"},
    {"memory_size": 2},
    {"hidden": [8, 0]},
])
def test_unknown_or_invalid_fields_are_config_errors(bad):
    with pytest.raises(ConfigError):
        run_experiment(tiny(**bad)) if "synthetic" in json.dumps(bad) else tiny(**bad)


def test_missing_preset_or_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config("no-such-preset")
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_results_are_byte_identical_across_runs(tmp_path):
    cfg = tiny("gps")
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for suffix in (".result.json", ".accuracy.csv"):
        a = (tmp_path / "a" / f"tiny-gps{suffix}").read_bytes()
        assert a == (tmp_path / "b" / f"tiny-gps{suffix}").read_bytes()
    assert (tmp_path / "a" / "tiny-gps.timing.json").exists()


def test_result_round_trip_and_tamper_detection(tmp_path):
    res = run_experiment(tiny("oracle"), tmp_path)
    back = read_result(tmp_path / "tiny-oracle.result.json")
    assert back.to_json() == res.to_json()
    assert set(back.traces(0)) == {1, 2}
    d = json.loads((tmp_path / "tiny-oracle.result.json").read_text())
    d["mean_accuracy"] += 0.1
    with pytest.raises(ConfigError):
        RunResult.from_json(d)
    d["schema_version"] = 99
    with pytest.raises(ConfigError):
        RunResult.from_json(d)


def test_repeats_differ_but_share_the_stream():
    res = run_experiment(tiny("er-res"))
    assert len(res.runs) == 2 and res.runs[0].seed != res.runs[1].seed
    assert res.std_accuracy >= 0


def test_report_sorts_by_accuracy_and_refuses_mixed_benchmarks():
    results = [run_experiment(tiny(m, repeat=1)) for m in ("er-res", "er-ring-full", "gps")]
    lines = report(results).splitlines()
    assert lines[0].split()[:2] == ["method", "accuracy"]
    accs = [float(l.split()[1]) for l in lines[1:]]
    assert accs == sorted(accs, reverse=True) and len(lines) == 4
    assert len(report(results[:1]).splitlines()) == 2
    other = tiny("er-res", repeat=1)
    other.benchmark.synthetic = dict(other.benchmark.synthetic, seed=3)
    with pytest.raises(ConfigError):
        report(results + [run_experiment(other)])


def test_sweep_csv_schema():
    text = sweep_csv([(0, 1.5, 0.25), (5, 1.25, 0.5)])
    assert text.splitlines() == ["a_j,loss,accuracy", "0,1.5,0.25", "5,1.25,0.5"]


def test_permuted_fixture_run(tmp_path):
    cfg = load_config("pmnist-ci")
    cfg.method, cfg.train.epochs = "er-hybrid", 1
    res = run_experiment(cfg, data_root=FIXTURE)
    assert 0.5 < res.mean_accuracy <= 1.0
    assert [len(r) for r in res.runs[0].accuracy_matrix] == [1, 2, 3]
