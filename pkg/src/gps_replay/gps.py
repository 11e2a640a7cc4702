"""Switching-point search: simulation, stride-robust bisection, the online
pseudo-task loop and its offline counterpart that replays the real tasks."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, ContractError
from .memory import MemoryBuffer, PlanPolicy, Policy
from .nn import MLP, evaluate
from .pseudo import SynthesisSpec, synthesize_sequence
from .seeding import Seeds
from .tasks import Task, TaskStream
from .trainer import LocalUpdate, LocalUpdateSpec, local_update

# min/max search strides per benchmark
STRIDE_PRESETS = {
    "p-mnist": (20, 100),
    "s-cifar-10": (10, 20),
    "s-cifar-100": (40, 200),
    "tinyimagenet": (40, 200),
}


@dataclass
class SimConfig:
    window: int = 10
    pseudo_epochs: int = 1
    examples_per_pseudo_task: int | None = None
    min_stride: int = 20
    max_stride: int = 100
    synthesis: str = "permutation"
    rotation_step_degrees: float = 15.0
    blur_sigma_step: float = 0.5
    objective: str = "accuracy"

    def __post_init__(self):
        if not 1 <= self.min_stride <= self.max_stride:
            raise ConfigError(f"need 1 <= min_stride <= max_stride, got "
                              f"{self.min_stride}, {self.max_stride}")
        if self.window < 1 or self.pseudo_epochs < 1:
            raise ConfigError("window and pseudo_epochs must be >= 1")
        if self.objective not in ("accuracy", "loss"):
            raise ConfigError(f"objective must be 'accuracy' or 'loss', got {self.objective!r}")


@dataclass
class SearchTrace:
    upper: int
    stride: int
    evaluated: dict[int, tuple[float, float]] = field(default_factory=dict)
    brackets: list[tuple[int, int]] = field(default_factory=list)
    chosen: int | None = None
    fallback_used: bool = False
    degenerate: bool = False

    def to_json(self) -> dict:
        return {"upper": self.upper, "stride": self.stride,
                "evaluated": {str(a): {"loss": l, "accuracy": acc}
                              for a, (l, acc) in sorted(self.evaluated.items())},
                "brackets": [list(b) for b in self.brackets], "chosen": self.chosen,
                "fallback_used": self.fallback_used, "degenerate": self.degenerate}

    @classmethod
    def from_json(cls, d: dict) -> "SearchTrace":
        return cls(d["upper"], d["stride"],
                   {int(a): (v["loss"], v["accuracy"]) for a, v in d["evaluated"].items()},
                   [tuple(b) for b in d["brackets"]], d["chosen"], d["fallback_used"],
                   d["degenerate"])


def clamp_stride(budget: int, min_stride: int, max_stride: int) -> int:
    """Stride ``budget // 5`` bounded to ``[min_stride, max_stride]``."""
    return max(min_stride, min(max_stride, budget // 5))


def _score(value: tuple[float, float], objective: str):
    loss, acc = value
    return (acc, -loss) if objective == "accuracy" else (-loss, acc)


def stride_bisect(evaluate_point: Callable[[int], tuple[float, float]], upper: int,
                  stride: int, objective: str = "accuracy") -> SearchTrace:
    """Bisect ``[0, upper]`` comparing ``mid`` against ``mid +/- stride``.

    ``evaluate_point(a)`` returns ``(loss, accuracy)``; results are memoised.
    The bracket moves toward whichever neighbour beats the midpoint and the
    search stops once the midpoint beats both or the bracket is narrower than
    twice the stride.  The best point evaluated is returned; ``fallback_used`` marks
    searches that ended without an interior optimum.
    """
    trace = SearchTrace(upper, stride)
    if upper < stride:
        trace.chosen = upper
        trace.degenerate = True
        return trace

    def get(a):
        a = min(max(a, 0), upper)
        if a not in trace.evaluated:
            trace.evaluated[a] = tuple(float(v) for v in evaluate_point(a))
        return _score(trace.evaluated[a], objective)

    start, end = 0, upper
    interior = False
    first = True
    # a bracket narrower than 2*stride has no room for a fresh interior probe
    while first or end - start >= 2 * stride:
        first = False
        trace.brackets.append((start, end))
        mid = (start + end) // 2
        here, left = get(mid), get(mid - stride)
        if left > here:
            end = mid
            continue
        right = get(mid + stride)
        if right > here:
            start = mid
        else:
            # ties with a neighbour mean a plateau, not an optimum
            sides = [v for a, v in ((mid - stride, left), (mid + stride, right))
                     if 0 <= a <= upper]
            interior = all(here > v for v in sides)
            break
    trace.fallback_used = not interior
    trace.chosen = max(sorted(trace.evaluated),
                       key=lambda a: _score(trace.evaluated[a], objective))
    return trace


# ---------------------------------------------------------------------------
# shared training plumbing

@dataclass
class Learner:
    """Everything needed to train a stream reproducibly from any task boundary."""
    stream: TaskStream
    capacity: int
    spec: LocalUpdateSpec
    seeds: Seeds
    hidden: tuple[int, ...] = (100, 100)
    g: LocalUpdate | None = None

    def init_model(self) -> MLP:
        d = self.stream.tasks[0].train_x.shape[1]
        return MLP.init([d, *self.hidden, self.stream.n_classes], self.seeds.rng("init"))

    def train(self, model: MLP, buffer: MemoryBuffer, task: Task, policy: Policy, i: int):
        policy.begin(buffer, task, self.seeds.rng("policy", i), self.spec.epochs)
        local_update(model, task, buffer, self.spec, self.seeds.rng("train", i),
                     self.seeds.rng("replay", i), self.g)

    def commit(self, buffer: MemoryBuffer, a: int, i: int) -> None:
        buffer.commit(a, self.seeds.rng("rebuild", i))

    def score(self, model: MLP, task: Task) -> tuple[float, float]:
        """(loss, accuracy) of ``task``'s test split."""
        acc, loss = evaluate(model, task.test_x, task.test_y, self.stream.head(task))
        return loss, acc


def global_loss(model: MLP, stream: TaskStream) -> tuple[float, list[float]]:
    """Sum over tasks of mean test cross-entropy, and the per-task terms."""
    per = [evaluate(model, t.test_x, t.test_y, stream.head(t))[1] for t in stream.tasks]
    return float(sum(per)), per


def global_sim(a: int, pseudo_seq: list[Task], learner: Learner, model: MLP,
               buffer: MemoryBuffer, task: Task, sim: SimConfig, sim_seed: int
               ) -> tuple[float, float]:
    """Simulate the future after committing ``a`` for the staged task.

    ``model`` and ``buffer`` are never modified.  Pseudo-task slots hold a
    plain random selection of pseudo-data.  Returns ``(loss, accuracy)`` of
    ``task``'s test split under the final simulated parameters.
    """
    if buffer.staging is None:
        raise ContractError("global_sim needs the current task staged in the buffer")
    if not 0 <= a <= buffer.staging.budget:
        raise ContractError(f"candidate {a} outside [0, {buffer.staging.budget}]")
    seeds = Seeds(sim_seed)
    m = model.copy()
    buf = buffer.copy()
    buf.commit(a, seeds.rng("rebuild", 0))
    spec = LocalUpdateSpec(learner.spec.lam, sim.pseudo_epochs, learner.spec.batch_size,
                           learner.spec.learning_rate)
    for k, pt in enumerate(pseudo_seq, 1):
        buf.begin_task(pt.task_id, pt.class_ids, keep_res=True, keep_ring=False,
                       rng=seeds.rng("policy", k))
        local_update(m, pt, buf, spec, seeds.rng("train", k), seeds.rng("replay", k),
                     learner.g)
        if k < len(pseudo_seq):
            buf.commit(0, seeds.rng("rebuild", k))
        else:
            buf.discard_staging()
    return learner.score(m, task)


def pseudo_sequence(task: Task, count: int, learner: Learner, sim: SimConfig,
                    seed: int) -> list[Task]:
    if count == 0:
        return []
    spec = SynthesisSpec(sim.synthesis, count,
                         sim.examples_per_pseudo_task or learner.capacity, seed,
                         sim.rotation_step_degrees, sim.blur_sigma_step)
    return synthesize_sequence(task, spec, first_task_id=learner.stream.T + 1)


def global_bs(i: int, learner: Learner, model: MLP, buffer: MemoryBuffer,
              sim: SimConfig) -> SearchTrace:
    """Search the switching point of staged task ``i`` by pseudo-task simulation."""
    T = learner.stream.T
    task = learner.stream.tasks[i - 1]
    b = buffer.staging.budget
    stride = clamp_stride(b, sim.min_stride, sim.max_stride)
    sim_seed = learner.seeds.seed("simulation", i)
    seq = pseudo_sequence(task, min(sim.window, T - i), learner, sim, sim_seed)
    return stride_bisect(lambda a: global_sim(a, seq, learner, model, buffer, task, sim,
                                              sim_seed),
                         b, stride, sim.objective)


# ---------------------------------------------------------------------------
# full runs

@dataclass
class RunOutput:
    model: MLP
    buffer: MemoryBuffer
    accuracy_matrix: list[list[float]]
    plan: dict[int, int]
    traces: dict[int, SearchTrace]
    global_loss: float
    global_loss_per_task: list[float]

    @property
    def average_accuracy(self) -> float:
        return float(np.mean(self.accuracy_matrix[-1]))


def run_stream(learner: Learner, choose: Callable, policy: Policy,
               on_boundary: Callable | None = None) -> RunOutput:
    """Train every task in order; ``choose(i, model, buffer)`` returns
    ``(a_i, trace_or_None)`` at each boundary except the last."""
    stream = learner.stream
    model = learner.init_model()
    buffer = MemoryBuffer(learner.capacity)
    R: list[list[float]] = []
    plan: dict[int, int] = {}
    traces: dict[int, SearchTrace] = {}
    for i, task in enumerate(stream.tasks, 1):
        learner.train(model, buffer, task, policy, i)
        R.append([learner.score(model, t)[1] for t in stream.tasks[:i]])
        if i < stream.T:
            a, trace = choose(i, model, buffer)
            plan[i] = int(a)
            if trace is not None:
                traces[i] = trace
            learner.commit(buffer, a, i)
            policy.after_commit(buffer)
            if on_boundary is not None:
                on_boundary(i, model, buffer)
    total, per = global_loss(model, stream)
    return RunOutput(model, buffer, R, plan, traces, total, per)


def static_run(learner: Learner, policy: Policy, on_boundary=None) -> RunOutput:
    return run_stream(learner, lambda i, m, b: (policy.switch_point(b, i), None), policy,
                      on_boundary)


def gps_run(learner: Learner, sim: SimConfig, curriculum_gamma: float | None = None,
            on_boundary=None) -> RunOutput:
    """Online loop: after each task, fix its switching point by simulation."""
    policy = PlanPolicy()
    policy.curriculum_gamma = curriculum_gamma

    def choose(i, model, buffer):
        trace = global_bs(i, learner, model, buffer, sim)
        return trace.chosen, trace

    return run_stream(learner, choose, policy, on_boundary)


def replay_future(a: int, j: int, learner: Learner, model: MLP, buffer: MemoryBuffer,
                  policy: Policy | None = None) -> tuple[float, float]:
    """Commit ``a`` for staged task ``j``, train the real tasks after it and
    score task ``j`` under the final parameters.  Inputs are not modified.

    Later tasks commit ``policy``'s switching point (pure reservoir by default)
    and reuse the real run's per-task seeds.
    """
    stream = learner.stream
    policy = policy or PlanPolicy()
    m = model.copy()
    buf = buffer.copy()
    learner.commit(buf, a, j)
    for i in range(j + 1, stream.T + 1):
        learner.train(m, buf, stream.tasks[i - 1], policy, i)
        if i < stream.T:
            learner.commit(buf, policy.switch_point(buf, i), i)
    return learner.score(m, stream.tasks[j - 1])


def offline_oracle_search(learner: Learner, sim: SimConfig, on_boundary=None) -> RunOutput:
    """Solve each switching point by bisection over replays of the real future."""
    T = learner.stream.T

    def choose(i, model, buffer):
        b = buffer.staging.budget
        stride = clamp_stride(b, sim.min_stride, sim.max_stride)
        trace = stride_bisect(lambda a: replay_future(a, i, learner, model, buffer), b,
                              stride, sim.objective)
        return trace.chosen, trace

    if T == 1:
        return static_run(learner, PlanPolicy(), on_boundary)
    return run_stream(learner, choose, PlanPolicy(), on_boundary)


# ---------------------------------------------------------------------------
# unimodality diagnostic

def is_unimodal(values, tol: float = 0.0, valley: bool = True) -> bool:
    """True when the sequence falls then rises (``valley``) or rises then falls.

    Steps smaller than ``tol`` count as flat.
    """
    v = np.asarray(values, dtype=np.float64)
    if not valley:
        v = -v
    d = np.diff(v)
    signs = [np.sign(x) if abs(x) > tol else 0 for x in d]
    signs = [s for s in signs if s != 0]
    rises = [k for k, s in enumerate(signs) if s > 0]
    return not rises or all(s > 0 for s in signs[rises[0]:])


def sweep_grid(budget: int, step: int) -> list[int]:
    grid = list(range(0, budget + 1, max(1, step)))
    if grid[-1] != budget:
        grid.append(budget)
    return grid


def sweep_switching_point(learner: Learner, j: int, grid=None, step: int | None = None,
                          sim: SimConfig | None = None, earlier_plan=None):
    """Global loss / accuracy of task ``j`` for each ``a_j`` on a grid.

    Tasks before ``j`` use ``earlier_plan`` (pure reservoir by default); tasks
    after it are replayed for real.  Returns rows ``(a_j, loss, accuracy)``.
    """
    stream = learner.stream
    if not 1 <= j <= stream.T:
        raise ContractError(f"task {j} outside 1..{stream.T}")
    sim = sim or SimConfig()
    policy = PlanPolicy(earlier_plan or {})
    model = learner.init_model()
    buffer = MemoryBuffer(learner.capacity)
    for i in range(1, j + 1):
        learner.train(model, buffer, stream.tasks[i - 1], policy, i)
        if i < j:
            learner.commit(buffer, policy.switch_point(buffer, i), i)
    b = buffer.staging.budget
    if grid is None:
        grid = sweep_grid(b, step or clamp_stride(b, sim.min_stride, sim.max_stride))
    rows = []
    for a in grid:
        loss, acc = replay_future(a, j, learner, model, buffer)
        rows.append((int(a), float(loss), float(acc)))
    return rows


def unimodality_report(learner: Learner, tasks=None, step=None, sim=None, tol=0.0):
    """Sweep each task and report which global-loss profiles are unimodal."""
    tasks = list(tasks or range(1, learner.stream.T))
    profiles = {j: sweep_switching_point(learner, j, step=step, sim=sim) for j in tasks}
    flags = {j: is_unimodal([r[1] for r in rows], tol) for j, rows in profiles.items()}
    frac = sum(flags.values()) / len(flags) if flags else math.nan
    return {"fraction_unimodal": frac, "unimodal": flags, "profiles": profiles}


def sim_config_dict(sim: SimConfig) -> dict:
    return asdict(sim)
