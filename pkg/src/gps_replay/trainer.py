"""Local update: joint SGD on current-task batches and replayed memory batches."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import ContractError
from .memory import MemoryBuffer
from .nn import MLP, predict, per_example_loss


@dataclass
class LocalUpdateSpec:
    lam: float = 1.0
    epochs: int = 5
    batch_size: int = 10
    learning_rate: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.lam < 0:
            raise ContractError("lam must be >= 0")


def iterate_minibatches(n: int, batch_size: int, rng: np.random.Generator):
    """Seeded shuffle, consecutive batches, last partial batch kept."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


class LocalUpdate(Protocol):
    def __call__(self, model: MLP, task, buffer: MemoryBuffer, spec: LocalUpdateSpec,
                 rng: np.random.Generator, replay_rng: np.random.Generator,
                 record: list | None = None) -> tuple[MLP, MemoryBuffer]: ...


class ExperienceReplay:
    """loss = L(task batch) + lam * L(memory batch), one SGD step per batch.

    Both terms go through one backward pass on the stacked batch with row
    weights ``1/B_task`` and ``lam/B_mem``.  With ``lam == 0`` the memory batch
    is still drawn but left out of the pass.
    """

    def __call__(self, model, task, buffer, spec, rng, replay_rng, record=None):
        if task.n_train == 0:
            raise ContractError(f"task {task.task_id} has no training examples")
        staging = buffer.staging
        for _ in range(spec.epochs):
            for rows in iterate_minibatches(task.n_train, spec.batch_size, rng):
                x, y = task.train_x[rows], task.train_y[rows]
                mem = buffer.sample(spec.batch_size, replay_rng)
                if mem is None or spec.lam == 0:
                    loss = model.sgd_step(x, y, spec.learning_rate)
                else:
                    mx, my, _ = mem
                    bt, bm = len(y), len(my)
                    w = np.concatenate([np.full(bt, 1.0 / bt), np.full(bm, spec.lam / bm)])
                    loss = model.sgd_step(np.concatenate([x, mx]), np.concatenate([y, my]),
                                          spec.learning_rate, w)
                if record is not None:
                    record.append(loss)
                if staging is not None:
                    staging.observe(task.train_examples(rows))
            if staging is not None and staging.curriculum is not None:
                logits = model.forward(task.train_x)
                correct = predict(logits) == task.train_y
                staging.end_epoch(correct, per_example_loss(logits, task.train_y),
                                  task.train_y, task.train_src)
        if staging is not None:
            staging.finish_curriculum()
        return model, buffer


def local_update(model: MLP, task, buffer: MemoryBuffer, spec: LocalUpdateSpec,
                 rng: np.random.Generator, replay_rng: np.random.Generator | None = None,
                 g: LocalUpdate | None = None, record: list | None = None):
    """Run the local update ``g`` (experience replay by default) on one task."""
    if replay_rng is None:
        replay_rng = np.random.default_rng(rng.bit_generator.seed_seq.spawn(1)[0])
    return (g or ExperienceReplay())(model, task, buffer, spec, rng, replay_rng, record)
