"""Experiment configs, seeded repeats, result files and comparison tables."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import memory as mem
from .errors import ConfigError, ContractError
from .gps import (Learner, RunOutput, SearchTrace, SimConfig, gps_run,
                  offline_oracle_search, static_run, unimodality_report)
from .nn import TrainConfig
from .pseudo import SynthesisSpec, synthesize_sequence
from .seeding import Seeds
from .tasks import (SyntheticSpec, TaskStream, build_permuted_stream, build_split_stream,
                    build_synthetic_stream, end_to_end_difficulty, load_mnist, subsample,
                    train_on_task, zero_shot_transfer)
from .nn import MLP
from .trainer import LocalUpdateSpec

SCHEMA_VERSION = 1
METHODS = ("er-res", "er-ring-full", "er-hybrid", "er-cur-res", "er-cur-ring-full",
           "gps", "oracle", "gps+cur")
BENCHMARK_KINDS = ("pmnist", "split", "synthetic")


def _strict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {unknown}")
    return cls(**data)


@dataclass
class BenchmarkConfig:
    kind: str = "pmnist"
    n_tasks: int = 10
    subsample: float = 1.0
    data_root: str | None = None
    classes_per_task: int = 2
    domain_mode: bool | None = None
    synthetic: dict | None = None


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    method: str = "gps"
    memory_size: int = 1000
    hidden: list = field(default_factory=lambda: [100, 100])
    train: TrainConfig = field(default_factory=TrainConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    gamma: float = 0.2
    repeat: int = 1
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        try:
            if "benchmark" in data:
                data["benchmark"] = _strict(BenchmarkConfig, data["benchmark"], "benchmark")
            if "train" in data:
                data["train"] = _strict(TrainConfig, data["train"], "train")
            if "sim" in data:
                data["sim"] = _strict(SimConfig, data["sim"], "sim")
            cfg = _strict(cls, data, "config")
        except (TypeError, ContractError) as e:
            raise ConfigError(str(e)) from None
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        problems = []
        b = self.benchmark
        if self.method not in METHODS:
            problems.append(f"method: {self.method!r} not in {METHODS}")
        if b.kind not in BENCHMARK_KINDS:
            problems.append(f"benchmark.kind: {b.kind!r} not in {BENCHMARK_KINDS}")
        if b.kind == "synthetic" and not b.synthetic:
            problems.append("benchmark.synthetic: required for kind 'synthetic'")
        if b.n_tasks < 1:
            problems.append("benchmark.n_tasks: must be >= 1")
        if self.memory_size < max(1, b.n_tasks):
            problems.append(f"memory_size: {self.memory_size} < number of tasks {b.n_tasks}")
        if not self.hidden or any(not isinstance(h, int) or h < 1 for h in self.hidden):
            problems.append("hidden: must be a non-empty list of positive ints")
        if self.repeat < 1:
            problems.append("repeat: must be >= 1")
        if self.method in ("er-cur-res", "er-cur-ring-full", "gps+cur") and not 0 < self.gamma <= 1:
            problems.append("gamma: must be in (0, 1]")
        if problems:
            raise ConfigError("invalid config: " + "; ".join(problems))


def load_config(source) -> ExperimentConfig:
    """Read a JSON config from a path, or a shipped preset by name."""
    if isinstance(source, dict):
        return ExperimentConfig.from_dict(source)
    path = Path(source)
    if path.exists():
        text = path.read_text()
    else:
        preset = resources.files("gps_replay.presets").joinpath(f"{source}.json")
        if not preset.is_file():
            raise ConfigError(f"{source}: no such config file or preset "
                              f"(presets: {', '.join(list_presets())})")
        text = preset.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}: not valid JSON ({e})") from None
    return ExperimentConfig.from_dict(data)


def list_presets() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("gps_replay.presets").iterdir()
                  if p.name.endswith(".json"))


# ---------------------------------------------------------------------------
# building blocks

def build_stream(cfg: ExperimentConfig, seeds: Seeds, data_root=None) -> TaskStream:
    b = cfg.benchmark
    if b.kind == "synthetic":
        try:
            spec = _strict(SyntheticSpec, dict(b.synthetic), "benchmark.synthetic")
        except TypeError as e:
            raise ConfigError(str(e)) from None
        spec.n_tasks = b.n_tasks
        return build_synthetic_stream(spec)
    base = load_mnist(data_root or b.data_root)
    base = subsample(base, b.subsample, seeds.rng("subsample"))
    if b.kind == "pmnist":
        perm_seeds = [seeds.seed("permutation", i) for i in range(b.n_tasks)]
        return build_permuted_stream(base, b.n_tasks, perm_seeds)
    stream = build_split_stream(base, b.classes_per_task,
                                domain_mode=bool(b.domain_mode))
    if b.n_tasks > stream.T:
        raise ConfigError(f"split benchmark has {stream.T} tasks, config asks {b.n_tasks}")
    stream.tasks = stream.tasks[:b.n_tasks]
    return stream


def make_learner(cfg: ExperimentConfig, stream: TaskStream, seeds: Seeds) -> Learner:
    t = cfg.train
    spec = LocalUpdateSpec(t.lam, t.epochs, t.batch_size, t.learning_rate)
    return Learner(stream, cfg.memory_size, spec, seeds, tuple(cfg.hidden))


def run_method(cfg: ExperimentConfig, learner: Learner) -> RunOutput:
    m = cfg.method
    if m == "gps":
        return gps_run(learner, cfg.sim)
    if m == "gps+cur":
        return gps_run(learner, cfg.sim, curriculum_gamma=cfg.gamma)
    if m == "oracle":
        return offline_oracle_search(learner, cfg.sim)
    policy = {"er-res": mem.ReservoirPolicy, "er-ring-full": mem.RingFullPolicy,
              "er-hybrid": mem.HybridPolicy}.get(m)
    if policy is not None:
        return static_run(learner, policy())
    cls = mem.CurReservoirPolicy if m == "er-cur-res" else mem.CurRingFullPolicy
    return static_run(learner, cls(cfg.gamma))


# ---------------------------------------------------------------------------
# results

@dataclass
class RunRecord:
    seed: int
    accuracy_matrix: list
    average_accuracy: float
    global_loss: float
    global_loss_per_task: list
    plan: dict
    traces: dict

    @classmethod
    def from_output(cls, seed: int, out: RunOutput) -> "RunRecord":
        return cls(seed, [[float(v) for v in row] for row in out.accuracy_matrix],
                   out.average_accuracy, out.global_loss,
                   [float(v) for v in out.global_loss_per_task],
                   {int(k): int(v) for k, v in out.plan.items()},
                   {int(k): t.to_json() for k, t in out.traces.items()})

    def to_json(self) -> dict:
        d = asdict(self)
        d["plan"] = {str(k): v for k, v in self.plan.items()}
        d["traces"] = {str(k): v for k, v in self.traces.items()}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RunRecord":
        d = dict(d)
        d["plan"] = {int(k): v for k, v in d["plan"].items()}
        d["traces"] = {int(k): v for k, v in d["traces"].items()}
        return cls(**d)


@dataclass
class RunResult:
    config: dict
    runs: list[RunRecord]
    wall_clock_seconds: float = 0.0

    @property
    def method(self) -> str:
        return self.config["method"]

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.average_accuracy for r in self.runs])

    @property
    def mean_accuracy(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std_accuracy(self) -> float:
        a = self.accuracies
        return float(a.std(ddof=1)) if len(a) > 1 else 0.0

    def traces(self, run: int = 0) -> dict[int, SearchTrace]:
        return {k: SearchTrace.from_json(v) for k, v in self.runs[run].traces.items()}

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "config": self.config,
                "method": self.method, "mean_accuracy": self.mean_accuracy,
                "std_accuracy": self.std_accuracy,
                "runs": [r.to_json() for r in self.runs]}

    @classmethod
    def from_json(cls, d: dict) -> "RunResult":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported result schema_version {d.get('schema_version')!r}")
        res = cls(d["config"], [RunRecord.from_json(r) for r in d["runs"]])
        for rec in res.runs:
            if any(len(row) != i for i, row in enumerate(rec.accuracy_matrix, 1)):
                raise ConfigError("accuracy matrix is not lower-triangular")
            if not np.isclose(rec.average_accuracy, np.mean(rec.accuracy_matrix[-1]),
                              rtol=0, atol=1e-12):
                raise ConfigError("stored average accuracy disagrees with its matrix")
        for k in ("mean_accuracy", "std_accuracy"):
            if not np.isclose(d[k], getattr(res, k), rtol=0, atol=1e-12):
                raise ConfigError(f"stored {k} {d[k]} disagrees with the accuracy matrices")
        return res

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def accuracy_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "after_task", "task", "accuracy"])
        for r, rec in enumerate(self.runs):
            for i, row in enumerate(rec.accuracy_matrix, 1):
                for j, acc in enumerate(row, 1):
                    w.writerow([r, i, j, repr(float(acc))])
        return buf.getvalue()

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.config["name"]
        path = out / f"{stem}.result.json"
        path.write_text(self.dumps())
        (out / f"{stem}.accuracy.csv").write_text(self.accuracy_csv())
        (out / f"{stem}.timing.json").write_text(
            json.dumps({"wall_clock_seconds": self.wall_clock_seconds}) + "\n")
        return path


def read_result(path) -> RunResult:
    return RunResult.from_json(json.loads(Path(path).read_text()))


def run_experiment(cfg: ExperimentConfig, out_dir=None, data_root=None) -> RunResult:
    """``cfg.repeat`` seeded runs; repeat ``r`` uses master sub-seed ``('repeat', r)``."""
    cfg.validate()
    t0 = time.perf_counter()
    master = Seeds(cfg.seed)
    runs = []
    for r in range(cfg.repeat):
        seed = master.seed("repeat", r)
        seeds = Seeds(seed)
        stream = build_stream(cfg, seeds, data_root)
        out = run_method(cfg, make_learner(cfg, stream, seeds))
        runs.append(RunRecord.from_output(seed, out))
    res = RunResult(cfg.to_dict(), runs, time.perf_counter() - t0)
    if out_dir is not None:
        res.write(out_dir)
    return res


# ---------------------------------------------------------------------------
# reporting

def _benchmark_key(config: dict) -> str:
    return json.dumps(config["benchmark"], sort_keys=True)


def report(results: list[RunResult]) -> str:
    """Method x accuracy table (percent), best first."""
    if not results:
        raise ConfigError("report needs at least one result")
    keys = {_benchmark_key(r.config) for r in results}
    if len(keys) > 1:
        raise ConfigError(f"results come from {len(keys)} different benchmarks; "
                          "report compares one benchmark at a time")
    rows = sorted(results, key=lambda r: -r.mean_accuracy)
    width = max(len("method"), *(len(r.method) for r in rows))
    lines = [f"{'method':<{width}}  {'accuracy':>15}  runs"]
    for r in rows:
        cell = f"{100 * r.mean_accuracy:6.2f} ± {100 * r.std_accuracy:5.2f}"
        lines.append(f"{r.method:<{width}}  {cell:>15}  {len(r.runs):>4}")
    return "\n".join(lines) + "\n"


def forgetting_csv(result: RunResult) -> str:
    """Accuracy of each task after every later task, one row per point."""
    return result.accuracy_csv()


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["a_j", "loss", "accuracy"])
    for a, loss, acc in rows:
        w.writerow([a, repr(float(loss)), repr(float(acc))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# diagnostics

def diagnose_difficulty(cfg: ExperimentConfig, n_tasks: int = 5, data_root=None) -> dict:
    """End-to-end accuracy of the first tasks and of pseudo-tasks from task 1."""
    seeds = Seeds(cfg.seed)
    stream = build_stream(cfg, seeds, data_root)
    tc = cfg.train
    real = [end_to_end_difficulty(t, tc, tuple(cfg.hidden), stream.n_classes)
            for t in stream.tasks[:n_tasks]]
    out = {"real": real, "real_variance": float(np.var(real))}
    base = stream.tasks[0]
    methods = ["permutation"] + (["rotation", "blurring"] if base.image_shape else [])
    for m in methods:
        seq = synthesize_sequence(base, SynthesisSpec(m, n_tasks, base.n_train,
                                                      seeds.seed("simulation", 0),
                                                      with_test=True),
                                  first_task_id=stream.T + 1)
        accs = [end_to_end_difficulty(t, tc, tuple(cfg.hidden), stream.n_classes)
                for t in seq]
        out[m] = accs
        out[m + "_variance"] = float(np.var(accs))
    return out


def diagnose_zeroshot(cfg: ExperimentConfig, n_tasks: int = 5, data_root=None) -> dict:
    """Train on task 1 alone, then score later real tasks and pseudo-tasks zero-shot."""
    seeds = Seeds(cfg.seed)
    stream = build_stream(cfg, seeds, data_root)
    base = stream.tasks[0]
    model = MLP.init([base.train_x.shape[1], *cfg.hidden, stream.n_classes],
                     seeds.rng("init"))
    train_on_task(model, base, cfg.train, seeds.rng("train", 1))
    out = {"own_task": zero_shot_transfer(model, base),
           "real": [zero_shot_transfer(model, t) for t in stream.tasks[1:1 + n_tasks]]}
    methods = ["permutation"] + (["rotation", "blurring"] if base.image_shape else [])
    for m in methods:
        seq = synthesize_sequence(base, SynthesisSpec(m, n_tasks, base.n_train,
                                                      seeds.seed("simulation", 0),
                                                      with_test=True),
                                  first_task_id=stream.T + 1)
        out[m] = [zero_shot_transfer(model, t) for t in seq]
    return out


def diagnose_unimodality(cfg: ExperimentConfig, step=None, data_root=None) -> dict:
    seeds = Seeds(cfg.seed)
    stream = build_stream(cfg, seeds, data_root)
    return unimodality_report(make_learner(cfg, stream, seeds), step=step, sim=cfg.sim)
