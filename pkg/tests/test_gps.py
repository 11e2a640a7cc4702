import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gps_replay.errors import ConfigError, ContractError
from gps_replay.gps import (Learner, SearchTrace, SimConfig, clamp_stride, global_bs,
                            global_loss, global_sim, gps_run, is_unimodal,
                            offline_oracle_search, pseudo_sequence, static_run,
                            stride_bisect, sweep_grid, sweep_switching_point)
from gps_replay.memory import MemoryBuffer, PlanPolicy, ReservoirPolicy, RingFullPolicy
from gps_replay.nn import MLP, evaluate
from gps_replay.seeding import Seeds
from gps_replay.tasks import SyntheticSpec, build_synthetic_stream
from gps_replay.trainer import LocalUpdateSpec


def unimodal_profile(rng, n, peak=None):
    """Strictly increasing up to ``peak`` and strictly decreasing after it."""
    peak = int(rng.integers(0, n)) if peak is None else peak
    steps = rng.random(n) + 1e-3
    x = np.arange(n)
    v = np.where(x <= peak, np.cumsum(steps)[x] - np.cumsum(steps)[peak],
                 -np.cumsum(steps)[np.abs(x - peak)])
    return v, peak


def as_objective(v):
    return lambda a: (-v[a], v[a])


# -- stride bisection ----------------------------------------------------

def test_stride_clamping():
    assert clamp_stride(20, 10, 100) == 10
    assert clamp_stride(1000, 20, 100) == 100
    assert clamp_stride(200, 20, 100) == 40


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(20, 1000), st.integers(5, 100))
def test_bisection_finds_peak_within_stride_and_respects_budget(seed, upper, stride):
    if upper < stride:
        return
    v, peak = unimodal_profile(np.random.default_rng(seed), upper + 1)
    tr = stride_bisect(as_objective(v), upper, stride)
    assert abs(tr.chosen - peak) <= stride
    assert len(tr.evaluated) <= 2 * math.ceil(math.log2(upper / stride)) + 3


def test_bisection_matches_exhaustive_grid_for_small_budgets():
    rng = np.random.default_rng(0)
    for upper in range(1, 13):
        for peak in range(upper + 1):
            v, _ = unimodal_profile(rng, upper + 1, peak)
            assert stride_bisect(as_objective(v), upper, 1).chosen == int(np.argmax(v))


def test_constant_profile_terminates_on_fallback():
    tr = stride_bisect(lambda a: (1.0, 0.5), 200, 20)
    assert tr.fallback_used and tr.chosen in tr.evaluated


def test_degenerate_budget_skips_search():
    tr = stride_bisect(lambda a: pytest.fail("no evaluation expected"), 7, 10)
    assert tr.degenerate and tr.chosen == 7 and not tr.evaluated


def test_memoisation_evaluates_each_point_once():
    calls = []
    v, _ = unimodal_profile(np.random.default_rng(3), 201)

    def f(a):
        calls.append(a)
        return -v[a], v[a]
    tr = stride_bisect(f, 200, 20)
    assert len(calls) == len(set(calls)) == len(tr.evaluated)


def test_objective_tie_breaks():
    vals = {0: (0.5, 0.9), 10: (0.4, 0.9), 20: (0.3, 0.8)}
    acc = stride_bisect(lambda a: vals.get(a, (9.0, 0.0)), 20, 10)
    assert acc.chosen == 10  # equal accuracy, lower loss wins
    loss = stride_bisect(lambda a: vals.get(a, (9.0, 0.0)), 20, 10, objective="loss")
    assert loss.chosen == 20


def test_trace_json_round_trip():
    v, _ = unimodal_profile(np.random.default_rng(1), 101)
    tr = stride_bisect(as_objective(v), 100, 20)
    back = SearchTrace.from_json(json.loads(json.dumps(tr.to_json())))
    assert back == tr


def test_sim_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(min_stride=30, max_stride=20)
    with pytest.raises(ConfigError):
        SimConfig(objective="f1")


# -- simulation ----------------------------------------------------------

def small_learner(T=3, capacity=30, seed=0, **spec_kw):
    spec = SyntheticSpec(n_tasks=T, n_classes=3, dim=8, n_per_task=300, seed=seed, **spec_kw)
    stream = build_synthetic_stream(spec)
    return Learner(stream, capacity, LocalUpdateSpec(epochs=2), Seeds(seed), (16,))


def staged_after_task_one(learner):
    model, buf = learner.init_model(), MemoryBuffer(learner.capacity)
    learner.train(model, buf, learner.stream.tasks[0], PlanPolicy(), 1)
    return model, buf


def test_global_sim_is_pure_and_deterministic():
    L = small_learner()
    model, buf = staged_after_task_one(L)
    before_theta, before_buf = model.flat(), buf.copy()
    task = L.stream.tasks[0]
    sim = SimConfig()
    seq = pseudo_sequence(task, 2, L, sim, 5)
    a = global_sim(6, seq, L, model, buf, task, sim, 5)
    b = global_sim(6, seq, L, model, buf, task, sim, 5)
    assert a == b
    assert np.array_equal(model.flat(), before_theta)
    assert buf.staging.view() == before_buf.staging.view() and buf.slots == before_buf.slots


def test_global_sim_without_pseudo_tasks_is_evaluate():
    L = small_learner()
    model, buf = staged_after_task_one(L)
    task = L.stream.tasks[0]
    loss, acc = global_sim(0, [], L, model, buf, task, SimConfig(), 1)
    assert (acc, loss) == evaluate(model, task.test_x, task.test_y)


def test_permutation_pseudo_tasks_cause_forgetting():
    L = small_learner(capacity=6)
    model, buf = staged_after_task_one(L)
    task = L.stream.tasks[0]
    sim = SimConfig(examples_per_pseudo_task=240, pseudo_epochs=2)
    seq = pseudo_sequence(task, 2, L, sim, 2)
    _, after = global_sim(0, seq, L, model, buf, task, sim, 2)
    assert after < evaluate(model, task.test_x, task.test_y)[0]


def test_global_sim_rejects_candidate_outside_budget():
    L = small_learner()
    model, buf = staged_after_task_one(L)
    with pytest.raises(ContractError):
        global_sim(buf.staging.budget + 1, [], L, model, buf, L.stream.tasks[0], SimConfig(), 0)


def test_global_bs_leaves_snapshots_untouched():
    L = small_learner()
    model, buf = staged_after_task_one(L)
    theta, keys = model.flat(), buf.key_set()
    trace = global_bs(1, L, model, buf, SimConfig(min_stride=2, max_stride=10))
    assert np.array_equal(model.flat(), theta) and buf.key_set() == keys
    assert 0 <= trace.chosen <= buf.staging.budget


# -- full runs -----------------------------------------------------------

def test_single_task_gps_is_plain_training():
    L = small_learner(T=1)
    g = gps_run(L, SimConfig())
    s = static_run(L, ReservoirPolicy())
    assert g.plan == {} and g.traces == {}
    assert g.model.equals(s.model)
    assert offline_oracle_search(L, SimConfig()).plan == {}


def test_gps_run_is_deterministic_and_never_overwrites():
    L = small_learner(T=4)
    sim = SimConfig(min_stride=2, max_stride=5)
    a, b = gps_run(L, sim), gps_run(L, sim)
    assert a.plan == b.plan and a.model.equals(b.model)
    assert a.buffer.to_json() == b.buffer.to_json()
    for j, slot in a.buffer.slots.items():
        assert slot.switch_point == a.plan[j]
    assert all(len(row) == i for i, row in enumerate(a.accuracy_matrix, 1))


@pytest.mark.parametrize("plan_default,policy", [(0, ReservoirPolicy), ("max", RingFullPolicy)])
def test_boundary_plans_reproduce_static_buffers(plan_default, policy):
    L = small_learner(T=4, capacity=40)
    seen = {"mixed": [], "pure": []}

    def snap(name):
        return lambda i, m, b: seen[name].append({ex.key for ex in b.committed_examples()})
    static_run(L, PlanPolicy(default=plan_default), snap("mixed"))
    static_run(L, policy(), snap("pure"))
    assert len(seen["mixed"]) == 3 and seen["mixed"] == seen["pure"]


def test_oracle_evaluations_reproduce_the_sweep():
    L = small_learner(capacity=12)
    grid = {a: (l, acc) for a, l, acc in sweep_switching_point(L, 1, grid=range(13))}
    out = offline_oracle_search(L, SimConfig(min_stride=1, max_stride=1))
    for a, value in out.traces[1].evaluated.items():
        assert value == grid[a]


def test_global_loss_components():
    L = small_learner()
    m = L.init_model()
    total, per = global_loss(m, L.stream)
    assert per == [evaluate(m, t.test_x, t.test_y)[1] for t in L.stream.tasks]
    assert total == pytest.approx(sum(per))
    uniform = MLP([(np.zeros((3, 8)), np.zeros(3))])
    assert global_loss(uniform, L.stream)[0] == pytest.approx(3 * np.log(3))


def skewed_three_task_learner(seed):
    spec = SyntheticSpec(n_tasks=3, n_classes=3, dim=10, n_per_task=1000, test_fraction=0.3,
                         class_freqs=[0.85, 0.1, 0.05], test_class_freqs=[1, 1, 1], seed=11)
    return Learner(build_synthetic_stream(spec), 50, LocalUpdateSpec(epochs=2), Seeds(seed),
                   (32,))


@pytest.mark.xfail(strict=True, reason="pseudo-task loss profiles are flat near their optimum "
                   "on this stream; GPS lands within one stride of the oracle on 5 of 12 "
                   "decisions over seeds 0-5")
def test_gps_matches_oracle_within_one_stride_on_skewed_stream():
    sim = SimConfig(min_stride=2, max_stride=20, examples_per_pseudo_task=700,
                    pseudo_epochs=2, objective="loss")
    for seed in range(6):
        L = skewed_three_task_learner(seed)
        g, o = gps_run(L, sim), offline_oracle_search(L, sim)
        for j, trace in o.traces.items():
            assert abs(g.plan[j] - o.plan[j]) <= trace.stride


# -- unimodality helpers -------------------------------------------------

def test_is_unimodal_cases():
    assert is_unimodal([5, 3, 2, 4, 6])
    assert is_unimodal([1, 1, 1])
    assert is_unimodal([3, 2, 1])
    assert not is_unimodal([3, 1, 2, 0])
    assert is_unimodal([3, 1, 1.05, 0.5, 2], tol=0.1)
    assert is_unimodal([1, 3, 2], valley=False)


def test_sweep_grid_includes_budget():
    assert sweep_grid(100, 40) == [0, 40, 80, 100]
    assert sweep_grid(0, 5) == [0]
