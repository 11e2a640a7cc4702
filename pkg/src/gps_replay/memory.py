"""Replay memory: per-task slots, base policies and the shrink machinery.

A slot for task ``j`` has a reservoir part and a class-balanced FIFO part
("ring").  Its ring size ``a_j`` (the switching point) is fixed when the slot
is committed; later shrinks consume the reservoir part first.

While a task trains, its examples go to a staging slot that may keep both a
reservoir sample and per-class FIFOs, so any switching point can still be
realised when the task ends.  Prior slots are untouched until ``commit``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, ContractError


class Example(NamedTuple):
    features: np.ndarray
    label: int
    task_id: int
    source_index: int

    @property
    def key(self) -> tuple[int, int]:
        return (self.task_id, self.source_index)


def example_key(ex: Example) -> tuple[int, int]:
    return (ex.task_id, ex.source_index)


# ---------------------------------------------------------------------------
# allocation arithmetic

def slot_budgets(capacity: int, n_tasks: int) -> list[int]:
    """Equal split of ``capacity`` over ``n_tasks``; remainder to the lowest ids."""
    if n_tasks < 1:
        return []
    base, rem = divmod(capacity, n_tasks)
    return [base + (1 if j < rem else 0) for j in range(n_tasks)]


def staging_budget(capacity: int, task_number: int) -> int:
    return capacity // task_number


def class_quotas(total: int, class_ids: Sequence[int]) -> dict[int, int]:
    """Split ``total`` evenly over classes; lower class ids take the remainder."""
    classes = sorted(class_ids)
    if not classes:
        return {}
    base, rem = divmod(total, len(classes))
    return {c: base + (1 if k < rem else 0) for k, c in enumerate(classes)}


# ---------------------------------------------------------------------------
# streaming primitives

def reservoir_update(store: list, items: Sequence, budget: int, seen: int,
                     rng: np.random.Generator,
                     key: Callable[[object], Hashable] | None = None,
                     keys: set | None = None) -> int:
    """Classic reservoir step over ``items``; returns the new seen-counter.

    Item ``j`` of the batch is the ``seen + j + 1``-th item of the stream; once
    the store is full it overwrites ``store[r]`` for ``r ~ U{0..seen+j}`` when
    ``r < budget``.  With ``keys`` given, items already stored are skipped (the
    counter still advances) so repeated epochs cannot create duplicates.
    """
    k = len(items)
    if k == 0:
        return seen
    draws = rng.integers(0, seen + np.arange(1, k + 1))
    j = 0
    while j < k and len(store) < budget:
        item = items[j]
        if keys is None:
            store.append(item)
        else:
            kk = key(item)
            if kk not in keys:
                store.append(item)
                keys.add(kk)
        j += 1
    if j < k:
        for h in np.flatnonzero(draws[j:] < budget) + j:
            item = items[h]
            slot = int(draws[h])
            if keys is None:
                store[slot] = item
                continue
            kk = key(item)
            if kk in keys:
                continue
            keys.discard(key(store[slot]))
            store[slot] = item
            keys.add(kk)
    return seen + k


def ring_push(fifo: deque, item, quota: int, keys: set | None = None,
              key: Callable = example_key) -> None:
    """Append to a class FIFO, evicting the oldest beyond ``quota``."""
    if quota <= 0:
        return
    if keys is not None:
        kk = key(item)
        if kk in keys:
            return
        keys.add(kk)
    fifo.append(item)
    while len(fifo) > quota:
        old = fifo.popleft()
        if keys is not None:
            keys.discard(key(old))


def implicit_curriculum_rank(learned_epoch: np.ndarray, loss: np.ndarray) -> np.ndarray:
    """Indices sorted by (learned epoch, loss), stable; never-learned (inf) last."""
    learned_epoch = np.asarray(learned_epoch, dtype=np.float64)
    loss = np.asarray(loss, dtype=np.float64)
    return np.lexsort((loss, learned_epoch))


# ---------------------------------------------------------------------------
# slots

@dataclass
class TaskSlot:
    task_id: int
    class_ids: tuple[int, ...]
    switch_point: int
    budget: int
    res_part: list[Example] = field(default_factory=list)
    ring_part: dict[int, deque] = field(default_factory=dict)

    @property
    def ring_budget(self) -> int:
        return min(self.switch_point, self.budget)

    @property
    def res_budget(self) -> int:
        return self.budget - self.ring_budget

    def ring_examples(self) -> list[Example]:
        return [ex for c in sorted(self.ring_part) for ex in self.ring_part[c]]

    def examples(self) -> list[Example]:
        return list(self.res_part) + self.ring_examples()

    def __len__(self) -> int:
        return len(self.res_part) + sum(len(q) for q in self.ring_part.values())

    def copy(self) -> "TaskSlot":
        return TaskSlot(self.task_id, self.class_ids, self.switch_point, self.budget,
                        list(self.res_part), {c: deque(q) for c, q in self.ring_part.items()})

    def shrink(self, new_budget: int, rng: np.random.Generator) -> None:
        """Resize to ``new_budget``: reservoir part first, then the ring part."""
        if new_budget > self.budget:
            raise ContractError(f"slot {self.task_id} cannot grow "
                                f"({self.budget} -> {new_budget})")
        self.budget = new_budget
        ring_total = sum(len(q) for q in self.ring_part.values())
        ring_keep = min(ring_total, self.ring_budget)
        res_keep = min(len(self.res_part), self.res_budget)
        if res_keep < len(self.res_part):
            idx = np.sort(rng.choice(len(self.res_part), size=res_keep, replace=False))
            self.res_part = [self.res_part[k] for k in idx]
        if ring_keep < ring_total:
            _shrink_ring(self.ring_part, self.class_ids, ring_keep)


def _shrink_ring(ring: dict[int, deque], class_ids, target: int) -> None:
    quotas = class_quotas(target, class_ids)
    for c, q in ring.items():
        keep = quotas.get(c, 0)
        while len(q) > keep:
            q.popleft()


# ---------------------------------------------------------------------------
# staging

@dataclass
class Curriculum:
    """Easy-pool state for the curriculum variants of a staging slot."""
    gamma: float
    epochs: int
    easy: set = field(default_factory=set)
    learned_epoch: np.ndarray | None = None
    epoch: int = 1
    weighted_seen: float = 0.0

    @property
    def late(self) -> bool:
        return self.epoch > math.ceil(self.epochs / 2)


class Staging:
    """Collects the current task's examples while it trains."""

    def __init__(self, task_id: int, class_ids: Iterable[int], budget: int,
                 keep_res: bool, keep_ring: bool, rng: np.random.Generator,
                 curriculum: Curriculum | None = None):
        if not (keep_res or keep_ring):
            raise ContractError("staging must keep a reservoir or a ring part")
        self.task_id = task_id
        self.class_ids = tuple(sorted(class_ids))
        self.budget = budget
        self.keep_res = keep_res
        self.keep_ring = keep_ring
        self.rng = rng
        self.res: list[Example] = []
        self.res_keys: set = set()
        self.seen = 0
        self.ring: dict[int, deque] = {c: deque() for c in self.class_ids}
        self.ring_keys: set = set()
        self.quotas = class_quotas(budget, self.class_ids)
        self.curriculum = curriculum

    def copy(self) -> "Staging":
        new = Staging.__new__(Staging)
        new.__dict__.update(self.__dict__)
        new.res = list(self.res)
        new.res_keys = set(self.res_keys)
        new.ring = {c: deque(q) for c, q in self.ring.items()}
        new.ring_keys = set(self.ring_keys)
        new.rng = _copy_rng(self.rng)
        if self.curriculum is not None:
            cur = self.curriculum
            new.curriculum = Curriculum(cur.gamma, cur.epochs, set(cur.easy),
                                        None if cur.learned_epoch is None
                                        else cur.learned_epoch.copy(),
                                        cur.epoch, cur.weighted_seen)
        return new

    # -- updates --------------------------------------------------------
    def observe(self, examples: Sequence[Example]) -> None:
        cur = self.curriculum
        if cur is not None and cur.late:
            examples = [ex for ex in examples if ex.source_index in cur.easy]
        if self.keep_res:
            if cur is not None and cur.late:
                # inclusion probability budget / (gamma * N), N += 1/gamma per item
                virtual = int(round(cur.gamma * cur.weighted_seen))
                reservoir_update(self.res, examples, self.budget, virtual, self.rng,
                                 example_key, self.res_keys)
                cur.weighted_seen += len(examples) / cur.gamma
            else:
                self.seen = reservoir_update(self.res, examples, self.budget, self.seen,
                                             self.rng, example_key, self.res_keys)
                if cur is not None:
                    cur.weighted_seen = float(self.seen)
        if self.keep_ring:
            for ex in examples:
                if ex.label not in self.quotas:
                    raise ContractError(f"class {ex.label} is not declared for task "
                                        f"{self.task_id} (classes {self.class_ids})")
                ring_push(self.ring[ex.label], ex, self.quotas[ex.label], self.ring_keys)

    def end_epoch(self, correct: np.ndarray, losses: np.ndarray, labels: np.ndarray,
                  source_index: np.ndarray) -> None:
        """Refresh the easy pool from per-example correctness and loss."""
        cur = self.curriculum
        if cur is None:
            return
        n = len(correct)
        if cur.learned_epoch is None:
            cur.learned_epoch = np.full(n, np.inf)
        le = cur.learned_epoch
        le[~correct] = np.inf
        le[correct & np.isinf(le)] = cur.epoch
        order = implicit_curriculum_rank(le, losses)
        cur.easy = set(easy_pool(order, labels, source_index, cur.gamma,
                                 per_class=not self.keep_res))
        cur.epoch += 1

    def init_curriculum(self, labels: np.ndarray, source_index: np.ndarray) -> None:
        cur = self.curriculum
        if cur is None:
            return
        n = len(labels)
        per_class = not self.keep_res
        size = int(cur.gamma * n)
        if self.keep_res and size < self.budget:
            raise ConfigError(f"easy pool of {size} examples (gamma={cur.gamma}) is smaller "
                              f"than the slot budget {self.budget}")
        if per_class:
            need = max(self.quotas.values(), default=0)
            have = int(cur.gamma * n / max(1, len(self.class_ids)))
            if have < need:
                raise ConfigError(f"per-class easy pool of {have} (gamma={cur.gamma}) is "
                                  f"smaller than the per-class quota {need}")
        if cur.gamma >= 1.0:
            order = np.arange(n)
        else:
            order = self.rng.permutation(n)
        cur.easy = set(easy_pool(order, labels, source_index, cur.gamma, per_class))

    def finish_curriculum(self) -> None:
        """Swap stored non-easy examples for unstored easy ones."""
        cur = self.curriculum
        if cur is None or cur.gamma >= 1.0:
            return
        easy = cur.easy
        if self.keep_res:
            pool = sorted(easy - {ex.source_index for ex in self.res})
            pool = [pool[k] for k in self.rng.permutation(len(pool))]
            self.res = _replace_non_easy(self.res, easy, pool, self._lookup)
            self.res_keys = {ex.key for ex in self.res}
        if self.keep_ring:
            for c, q in self.ring.items():
                stored = {ex.source_index for ex in q}
                pool = sorted(s for s in easy - stored if self._label_of[s] == c)
                pool = [pool[k] for k in self.rng.permutation(len(pool))]
                self.ring[c] = deque(_replace_non_easy(list(q), easy, pool, self._lookup))
            self.ring_keys = {ex.key for q in self.ring.values() for ex in q}

    def bind_source(self, lookup: Callable[[int], Example], label_of: dict) -> None:
        self._lookup = lookup
        self._label_of = label_of

    # -- views ----------------------------------------------------------
    def ring_examples(self) -> list[Example]:
        return [ex for c in self.class_ids for ex in self.ring[c]]

    def view(self) -> list[Example]:
        """What replay sees of the current task during training."""
        return self.res if self.keep_res else self.ring_examples()

    def __len__(self) -> int:
        return len(self.res) if self.keep_res else len(self.ring_keys)

    def materialize(self, a: int) -> TaskSlot:
        """Build the committed slot for switching point ``a``."""
        if not 0 <= a <= self.budget:
            raise ContractError(f"switching point {a} outside [0, {self.budget}]")
        if a > 0 and not self.keep_ring:
            raise ContractError("staging kept no ring part; only a=0 is available")
        if a < self.budget and not self.keep_res:
            raise ContractError("staging kept no reservoir part; only a=budget is available")
        ring: dict[int, deque] = {}
        ring_keys: set = set()
        if self.keep_ring:
            quotas = class_quotas(a, self.class_ids)
            for c in self.class_ids:
                q = self.ring[c]
                keep = min(len(q), quotas[c])
                ring[c] = deque(list(q)[len(q) - keep:]) if keep else deque()
                ring_keys.update(ex.key for ex in ring[c])
        res: list[Example] = []
        if self.keep_res:
            res = [ex for ex in self.res if ex.key not in ring_keys]
            room = self.budget - a
            if len(res) > room:
                idx = np.sort(self.rng.choice(len(res), size=room, replace=False))
                res = [res[k] for k in idx]
        return TaskSlot(self.task_id, self.class_ids, a, self.budget, res, ring)


def easy_pool(order: np.ndarray, labels: np.ndarray, source_index: np.ndarray,
              gamma: float, per_class: bool) -> list[int]:
    n = len(order)
    if not per_class:
        return [int(source_index[k]) for k in order[:int(gamma * n)]]
    classes = np.unique(labels)
    per = int(gamma * n / len(classes))
    out = []
    for c in classes:
        ranked = [k for k in order if labels[k] == c]
        out.extend(int(source_index[k]) for k in ranked[:per])
    return out


def _replace_non_easy(stored: list, easy: set, pool: list, lookup) -> list:
    out = []
    it = iter(pool)
    for ex in stored:
        if ex.source_index in easy:
            out.append(ex)
            continue
        nxt = next(it, None)
        if nxt is not None:
            out.append(lookup(nxt))
    return out


def _copy_rng(rng: np.random.Generator) -> np.random.Generator:
    new = np.random.Generator(type(rng.bit_generator)())
    new.bit_generator.state = rng.bit_generator.state
    return new


# ---------------------------------------------------------------------------
# buffer

class MemoryBuffer:
    """Fixed-capacity replay memory organised by task."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ContractError("memory capacity must be >= 1")
        self.capacity = capacity
        self.slots: dict[int, TaskSlot] = {}
        self.staging: Staging | None = None
        self._cache = None

    # -- lifecycle ------------------------------------------------------
    @property
    def n_tasks(self) -> int:
        """Number of tasks with a committed slot."""
        return len(self.slots)

    def begin_task(self, task_id: int, class_ids: Iterable[int], *, keep_res: bool = True,
                   keep_ring: bool = False, rng: np.random.Generator,
                   curriculum: Curriculum | None = None) -> Staging:
        if self.staging is not None:
            raise ContractError(f"task {self.staging.task_id} is still staged")
        if task_id in self.slots:
            raise ContractError(f"task {task_id} already has a slot")
        budget = staging_budget(self.capacity, self.n_tasks + 1)
        self.staging = Staging(task_id, class_ids, budget, keep_res, keep_ring, rng,
                               curriculum)
        return self.staging

    def observe(self, examples: Sequence[Example]) -> None:
        if self.staging is None:
            raise ContractError("observe() called with no task staged")
        self.staging.observe(examples)

    def commit(self, a: int, rng: np.random.Generator) -> TaskSlot:
        """Turn the staging slot into a slot with ring size ``a`` and rebuild."""
        if self.staging is None:
            raise ContractError("commit() called with no task staged")
        slot = self.staging.materialize(a)
        self.staging = None
        self.slots[slot.task_id] = slot
        self.rebuild(rng)
        return slot

    def discard_staging(self) -> None:
        self.staging = None
        self._cache = None

    def rebuild(self, rng: np.random.Generator, plan: dict[int, int] | None = None) -> None:
        """Shrink every slot to the equal schedule for the committed task count."""
        if plan is not None:
            missing = [j for j in self.slots if j not in plan]
            if missing:
                raise ContractError(f"plan has no switching point for tasks {missing}")
            for j, slot in self.slots.items():
                if plan[j] != slot.switch_point:
                    raise ContractError(
                        f"task {j} was committed with a={slot.switch_point}; "
                        f"switching points are never overwritten (plan says {plan[j]})")
        for slot, b in zip(self._ordered(), slot_budgets(self.capacity, self.n_tasks)):
            if b < slot.budget:
                slot.shrink(b, rng)
        self._cache = None

    def _ordered(self) -> list[TaskSlot]:
        return [self.slots[j] for j in sorted(self.slots)]

    def copy(self) -> "MemoryBuffer":
        new = MemoryBuffer(self.capacity)
        new.slots = {j: s.copy() for j, s in self.slots.items()}
        new.staging = None if self.staging is None else self.staging.copy()
        return new

    # -- reading --------------------------------------------------------
    def committed_examples(self) -> list[Example]:
        return [ex for s in self._ordered() for ex in s.examples()]

    def examples(self) -> list[Example]:
        out = self.committed_examples()
        if self.staging is not None:
            out += self.staging.view()
        return out

    def __len__(self) -> int:
        n = sum(len(s) for s in self.slots.values())
        if self.staging is not None:
            n += len(self.staging)
        return n

    def key_set(self) -> set:
        return {ex.key for ex in self.examples()}

    def _committed_arrays(self):
        if self._cache is None:
            exs = self.committed_examples()
            if exs:
                x = np.stack([ex.features for ex in exs])
                y = np.array([ex.label for ex in exs], dtype=np.int64)
                t = np.array([ex.task_id for ex in exs], dtype=np.int64)
            else:
                x = y = t = None
            self._cache = (len(exs), x, y, t)
        return self._cache

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform with-replacement draw over everything replay can see.

        Returns ``(x, y, task_ids)`` or ``None`` when the buffer is empty.
        """
        n_fixed, x, y, t = self._committed_arrays()
        view = self.staging.view() if self.staging is not None else []
        total = n_fixed + len(view)
        if total == 0:
            return None
        idx = rng.integers(0, total, size=batch_size)
        if not view:
            return x[idx], y[idx], t[idx]
        rows, labels, tids = [], [], []
        for k in idx:
            if k < n_fixed:
                rows.append(x[k]); labels.append(y[k]); tids.append(t[k])
            else:
                ex = view[k - n_fixed]
                rows.append(ex.features); labels.append(ex.label); tids.append(ex.task_id)
        return (np.stack(rows), np.asarray(labels, dtype=np.int64),
                np.asarray(tids, dtype=np.int64))

    def class_counts(self) -> dict[tuple[int, int], int]:
        """Stored count per (task, class) over committed slots, zeros included."""
        counts = {}
        for s in self.slots.values():
            for c in s.class_ids:
                counts[(s.task_id, c)] = 0
            for ex in s.examples():
                counts[(s.task_id, ex.label)] = counts.get((s.task_id, ex.label), 0) + 1
        return counts

    # -- serialisation --------------------------------------------------
    def to_json(self) -> dict:
        entries = []
        for s in self._ordered():
            entries += [{"task_id": ex.task_id, "part": "res", "class_id": int(ex.label),
                         "source_index": int(ex.source_index)} for ex in s.res_part]
            entries += [{"task_id": ex.task_id, "part": "ring", "class_id": int(ex.label),
                         "source_index": int(ex.source_index)} for ex in s.ring_examples()]
        slots = [{"task_id": s.task_id, "class_ids": list(s.class_ids),
                  "switch_point": s.switch_point, "budget": s.budget}
                 for s in self._ordered()]
        return {"capacity": self.capacity, "slots": slots, "entries": entries}

    @classmethod
    def from_json(cls, data: dict, lookup: Callable[[int, int], Example]) -> "MemoryBuffer":
        """Rebuild a committed buffer; ``lookup(task_id, source_index)`` supplies examples."""
        buf = cls(data["capacity"])
        for s in data["slots"]:
            buf.slots[s["task_id"]] = TaskSlot(s["task_id"], tuple(s["class_ids"]),
                                               s["switch_point"], s["budget"], [],
                                               {c: deque() for c in s["class_ids"]})
        for e in data["entries"]:
            slot = buf.slots[e["task_id"]]
            ex = lookup(e["task_id"], e["source_index"])
            if e["part"] == "res":
                slot.res_part.append(ex)
            else:
                slot.ring_part.setdefault(e["class_id"], deque()).append(ex)
        return buf

    def snapshot_keys(self) -> dict[int, dict[str, set]]:
        return {j: {"res": {ex.key for ex in s.res_part},
                    "ring": {ex.key for ex in s.ring_examples()}}
                for j, s in self.slots.items()}


# ---------------------------------------------------------------------------
# policies: which parts to stage and which switching point to commit

class Policy:
    name = "policy"
    keep_res = True
    keep_ring = False
    curriculum_gamma: float | None = None

    def switch_point(self, buffer: MemoryBuffer, task_number: int) -> int:
        raise NotImplementedError

    def after_commit(self, buffer: MemoryBuffer) -> None:
        pass

    def begin(self, buffer: MemoryBuffer, task, rng, epochs: int) -> Staging:
        cur = None
        if self.curriculum_gamma is not None:
            cur = Curriculum(self.curriculum_gamma, epochs)
        st = buffer.begin_task(task.task_id, task.class_ids, keep_res=self.keep_res,
                               keep_ring=self.keep_ring, rng=rng, curriculum=cur)
        if cur is not None:
            st.bind_source(task.example, dict(zip(task.train_src.tolist(),
                                                  task.train_y.tolist())))
            st.init_curriculum(task.train_y, task.train_src)
        return st


class ReservoirPolicy(Policy):
    """ER-Res: every slot is a uniform sample of its task."""
    name = "er-res"
    keep_res, keep_ring = True, False

    def switch_point(self, buffer, task_number):
        return 0


class RingFullPolicy(Policy):
    """ER-Ring-Full: every slot is class-balanced FIFO."""
    name = "er-ring-full"
    keep_res, keep_ring = False, True

    def switch_point(self, buffer, task_number):
        return buffer.staging.budget


class HybridPolicy(Policy):
    """Reservoir until some stored class is down to one example, ring-full after."""
    name = "er-hybrid"
    keep_res, keep_ring = True, True

    def __init__(self):
        self.switched = False

    def switch_point(self, buffer, task_number):
        return buffer.staging.budget if self.switched else 0

    def after_commit(self, buffer):
        if not self.switched and any(v <= 1 for v in buffer.class_counts().values()):
            self.switched = True


class PlanPolicy(Policy):
    """Mixed slots with switching points from a fixed plan (missing -> default)."""
    name = "plan"
    keep_res, keep_ring = True, True

    def __init__(self, plan: dict[int, int] | None = None, default: str | int = 0):
        self.plan = dict(plan or {})
        self.default = default

    def switch_point(self, buffer, task_number):
        b = buffer.staging.budget
        tid = buffer.staging.task_id
        if tid in self.plan:
            return min(self.plan[tid], b)
        if self.default == "max":
            return b
        return min(int(self.default), b)


class CurReservoirPolicy(ReservoirPolicy):
    name = "er-cur-res"

    def __init__(self, gamma: float):
        self.curriculum_gamma = gamma


class CurRingFullPolicy(RingFullPolicy):
    name = "er-cur-ring-full"

    def __init__(self, gamma: float):
        self.curriculum_gamma = gamma


# ---------------------------------------------------------------------------
# constraint checks

def check_invariants(buffer: MemoryBuffer, trained: Iterable[int],
                     history: dict[int, dict[str, set]] | None = None) -> list[str]:
    """Return every violated memory constraint at a task boundary (empty = ok).

    ``trained`` are the ids of tasks trained so far; ``history`` is the
    previous boundary's ``snapshot_keys()``.
    """
    errs: list[str] = []
    trained = set(trained)
    seen: set = set()
    total = 0
    for j, s in buffer.slots.items():
        res_keys = [ex.key for ex in s.res_part]
        ring_keys = [ex.key for ex in s.ring_examples()]
        if any(k[0] != j for k in res_keys + ring_keys):
            errs.append(f"slot {j} holds examples of another task")
        keys = set(res_keys) | set(ring_keys)
        if len(keys) != len(res_keys) + len(ring_keys):
            errs.append(f"slot {j}: duplicate or overlapping res/ring examples")
        if keys & seen:
            errs.append(f"slot {j} overlaps another slot")
        seen |= keys
        total += len(res_keys) + len(ring_keys)
        if j not in trained:
            errs.append(f"slot for untrained task {j}")
        if len(ring_keys) > s.ring_budget:
            errs.append(f"slot {j}: ring {len(ring_keys)} > ring budget {s.ring_budget}")
        if len(res_keys) > s.res_budget:
            errs.append(f"slot {j}: res {len(res_keys)} > res budget {s.res_budget}")
        if s.ring_budget + s.res_budget != s.budget:
            errs.append(f"slot {j}: ring+res budgets != slot budget")
        sizes = [len(s.ring_part.get(c, ())) for c in s.class_ids]
        quotas = class_quotas(s.ring_budget, s.class_ids)
        full = [n for n, c in zip(sizes, s.class_ids) if n >= quotas[c]]
        if sizes and full and max(sizes) - min(full) > 1:
            errs.append(f"slot {j}: ring classes unbalanced {sizes}")
        if history is not None and j in history:
            if not {ex.key for ex in s.res_part} <= history[j]["res"]:
                errs.append(f"slot {j}: res part gained examples")
            if not set(ring_keys) <= history[j]["ring"]:
                errs.append(f"slot {j}: ring part gained examples")
    if total > buffer.capacity:
        errs.append(f"{total} stored > capacity {buffer.capacity}")
    budgets = [buffer.slots[j].budget for j in sorted(buffer.slots)]
    if budgets != slot_budgets(buffer.capacity, len(budgets)):
        errs.append(f"slot budgets {budgets} break the equal schedule")
    if budgets and sum(budgets) != buffer.capacity and buffer.capacity >= len(budgets):
        errs.append("slot budgets do not add up to the capacity")
    return errs
