"""
Reservoir, ring and mixed slots
===============================

Three tasks stream into a 30-slot memory.  We print what each policy keeps.
"""

import numpy as np

from gps_replay.memory import (Example, MemoryBuffer, PlanPolicy, ReservoirPolicy,
                               RingFullPolicy, check_invariants)


class Task:
    def __init__(self, tid):
        self.task_id, self.class_ids = tid, (0, 1, 2)


# class 0 dominates every task: 80% of the 200 examples
rng = np.random.default_rng(0)
labels = rng.choice(3, size=200, p=[0.8, 0.15, 0.05])


def fill(policy):
    buf = MemoryBuffer(30)
    for t in (1, 2, 3):
        policy.begin(buf, Task(t), np.random.default_rng(t), 1)
        buf.observe([Example(np.zeros(1), int(y), t, k) for k, y in enumerate(labels)])
        buf.commit(policy.switch_point(buf, t), np.random.default_rng(10 + t))
        assert check_invariants(buf, range(1, t + 1)) == []
    return buf


for name, policy in [("reservoir", ReservoirPolicy()),
                     ("ring-full", RingFullPolicy()),
                     ("plan a=6", PlanPolicy(default=6))]:
    buf = fill(policy)
    # per slot: (reservoir part, ring part) and the class histogram
    for j, slot in sorted(buf.slots.items()):
        hist = np.bincount([ex.label for ex in slot.examples()], minlength=3)
        print(f"{name:>10}  task {j}: res {len(slot.res_part):2d} "
              f"ring {len(slot.ring_examples()):2d}  classes {hist.tolist()}")

# the reservoir mirrors the skew, the ring balances it, a plan sits in between
