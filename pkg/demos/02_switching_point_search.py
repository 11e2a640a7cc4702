"""
Searching a switching point
===========================

Sweep the first task's switching point on a small skewed stream, then let the
online search and the offline oracle pick one.
"""

from gps_replay.gps import (Learner, SimConfig, gps_run, offline_oracle_search,
                            sweep_switching_point)
from gps_replay.seeding import Seeds
from gps_replay.tasks import SyntheticSpec, build_synthetic_stream
from gps_replay.trainer import LocalUpdateSpec

spec = SyntheticSpec(n_tasks=3, n_classes=3, dim=10, n_per_task=1000, test_fraction=0.3,
                     class_freqs=[0.85, 0.1, 0.05], test_class_freqs=[1, 1, 1], seed=11)
learner = Learner(build_synthetic_stream(spec), 50, LocalUpdateSpec(epochs=2), Seeds(0), (32,))
sim = SimConfig(min_stride=2, max_stride=20, examples_per_pseudo_task=700,
                pseudo_epochs=2, objective="loss")

# task 1 owns a 50-example staging slot; a_1 is how many of them are ring examples
print(" a_1   loss_1   acc_1")
for a, loss, acc in sweep_switching_point(learner, 1, step=5):
    print(f"{a:4d}  {loss:7.4f}  {acc:6.3f}")

# the online search only sees pseudo-tasks; the oracle replays the real future
online = gps_run(learner, sim)
oracle = offline_oracle_search(learner, sim)
print("online plan", online.plan, f"accuracy {online.average_accuracy:.4f}")
print("oracle plan", oracle.plan, f"accuracy {oracle.average_accuracy:.4f}")
print("evaluated by the online search:", sorted(online.traces[1].evaluated))
