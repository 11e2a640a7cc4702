"""Task sequences: IDX ingestion, permuted / split / synthetic streams and
the two task-level diagnostics (end-to-end difficulty, zero-shot transfer)."""
from __future__ import annotations

import gzip
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, IngestionError
from .memory import Example
from .nn import MLP, TrainConfig, evaluate

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

DATA_ROOT_ENV = "GPS_DATA_ROOT"


@dataclass
class Dataset:
    """A labelled train/test split, optionally image-shaped."""
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    image_shape: tuple[int, int] | None = None

    @property
    def n_classes(self) -> int:
        return int(max(self.train_y.max(), self.test_y.max())) + 1


@dataclass
class Task:
    task_id: int
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    class_ids: tuple[int, ...]
    image_shape: tuple[int, int] | None = None
    train_src: np.ndarray = None
    test_src: np.ndarray = None

    def __post_init__(self):
        n, m = len(self.train_y), len(self.test_y)
        if self.train_src is None:
            self.train_src = np.arange(n)
        if self.test_src is None:
            self.test_src = np.arange(n, n + m)
        self.class_ids = tuple(sorted(int(c) for c in self.class_ids))
        self._pos = None

    @property
    def n_train(self) -> int:
        return len(self.train_y)

    def example(self, source_index: int) -> Example:
        if self._pos is None:
            self._pos = {int(s): k for k, s in enumerate(self.train_src)}
        k = self._pos[int(source_index)]
        return Example(self.train_x[k], int(self.train_y[k]), self.task_id,
                       int(self.train_src[k]))

    def train_examples(self, rows) -> list[Example]:
        x, y, s, t = self.train_x, self.train_y, self.train_src, self.task_id
        return [Example(x[k], int(y[k]), t, int(s[k])) for k in rows]


@dataclass
class TaskStream:
    tasks: list[Task]
    n_classes: int
    domain_mode: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.tasks:
            raise ContractError("a task stream needs at least one task")
        for k, t in enumerate(self.tasks, 1):
            if t.task_id != k:
                raise ContractError(f"task ids must run 1..T in order (position {k} "
                                    f"has id {t.task_id})")

    @property
    def T(self) -> int:
        return len(self.tasks)

    def head(self, task: Task):
        """Output units scored for ``task``: all in domain mode, else its own."""
        return None if self.domain_mode else task.class_ids

    def lookup(self, task_id: int, source_index: int) -> Example:
        return self.tasks[task_id - 1].example(source_index)


# ---------------------------------------------------------------------------
# IDX files

def _open(path):
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: no such file")
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    with _open(path) as f:
        data = f.read()
    if len(data) < 4:
        raise IngestionError(f"{path}: truncated header at offset 0")
    got = struct.unpack(">I", data[:4])[0]
    if got != magic:
        raise IngestionError(f"{path}: bad magic 0x{got:08x} at offset 0 "
                             f"(expected 0x{magic:08x})")
    hdr = 4 + 4 * ndim
    if len(data) < hdr:
        raise IngestionError(f"{path}: truncated header at offset {len(data)}")
    dims = struct.unpack(">" + "I" * ndim, data[4:hdr])
    need = int(np.prod(dims))
    if len(data) - hdr < need:
        raise IngestionError(f"{path}: truncated payload at offset {len(data)}; "
                             f"expected {hdr + need} bytes")
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=hdr).reshape(dims)


def load_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray, tuple[int, int]]:
    """Read an IDX image/label pair; pixels scaled to [0, 1], images flattened."""
    images = _read_idx(images_path, IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise IngestionError(f"{images_path} has {len(images)} images but {labels_path} "
                             f"has {len(labels)} labels (count field at offset 4)")
    n, h, w = images.shape
    x = images.reshape(n, h * w).astype(np.float64) / 255.0
    return x, labels.astype(np.int64), (h, w)


def _find(root: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (root / name).exists():
            return root / name
    raise IngestionError(f"{root}: neither {stem} nor {stem}.gz found")


def load_mnist(root=None) -> Dataset:
    """Load the four standard MNIST IDX files from ``root`` (or $GPS_DATA_ROOT)."""
    root = root or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise IngestionError(f"no dataset root given and ${DATA_ROOT_ENV} is unset")
    root = Path(root)
    tx, ty, shape = load_idx(_find(root, "train-images-idx3-ubyte"),
                             _find(root, "train-labels-idx1-ubyte"))
    vx, vy, _ = load_idx(_find(root, "t10k-images-idx3-ubyte"),
                         _find(root, "t10k-labels-idx1-ubyte"))
    return Dataset(tx, ty, vx, vy, shape)


def subsample(ds: Dataset, fraction: float, rng: np.random.Generator) -> Dataset:
    """Keep a seeded ``fraction`` of both splits (order preserved)."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"subsample fraction must be in (0, 1], got {fraction}")
    if fraction == 1:
        return ds

    def pick(n):
        return np.sort(rng.choice(n, size=max(1, int(round(fraction * n))), replace=False))

    a, b = pick(len(ds.train_y)), pick(len(ds.test_y))
    return Dataset(ds.train_x[a], ds.train_y[a], ds.test_x[b], ds.test_y[b], ds.image_shape)


# ---------------------------------------------------------------------------
# streams

def permutation_from_seed(seed: int, size: int, namespace: str = "benchmark") -> np.ndarray:
    """Pixel permutation; benchmark and simulation namespaces never collide."""
    rng = np.random.default_rng([zlib.crc32(namespace.encode()), int(seed)])
    return rng.permutation(size)


def build_permuted_stream(base: Dataset, T: int, seeds: Sequence[int],
                          namespace: str = "benchmark") -> TaskStream:
    """Task 1 is ``base``; task ``i > 1`` applies the permutation of ``seeds[i-1]``."""
    if len(seeds) != T:
        raise ConfigError(f"need {T} seeds, got {len(seeds)}")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"permutation seeds must be distinct: {list(seeds)}")
    d = base.train_x.shape[1]
    classes = tuple(range(base.n_classes))
    tasks = []
    for i in range(1, T + 1):
        if i == 1:
            tx, vx = base.train_x, base.test_x
        else:
            perm = permutation_from_seed(seeds[i - 1], d, namespace)
            tx, vx = base.train_x[:, perm], base.test_x[:, perm]
        tasks.append(Task(i, tx, base.train_y, vx, base.test_y, classes, base.image_shape))
    return TaskStream(tasks, base.n_classes, domain_mode=True,
                      meta={"kind": "permuted", "seeds": list(seeds)})


def build_split_stream(base: Dataset, classes_per_task: int,
                       domain_mode: bool = False) -> TaskStream:
    """Disjoint consecutive class groups, in label order, one task each."""
    classes = np.unique(np.concatenate([base.train_y, base.test_y]))
    if classes_per_task < 1 or len(classes) % classes_per_task:
        raise ConfigError(f"{len(classes)} classes do not split into groups of "
                          f"{classes_per_task}")
    tasks = []
    for k in range(len(classes) // classes_per_task):
        own = classes[k * classes_per_task:(k + 1) * classes_per_task]
        a = np.flatnonzero(np.isin(base.train_y, own))
        b = np.flatnonzero(np.isin(base.test_y, own))
        n = len(base.train_y)
        tasks.append(Task(k + 1, base.train_x[a], base.train_y[a], base.test_x[b],
                          base.test_y[b], tuple(int(c) for c in own), base.image_shape,
                          train_src=a, test_src=n + b))
    return TaskStream(tasks, int(classes.max()) + 1, domain_mode=domain_mode,
                      meta={"kind": "split", "classes_per_task": classes_per_task})


@dataclass
class SyntheticSpec:
    """Gaussian class clusters per task, sharing one label space.

    ``means`` (per task, per class) and ``class_freqs`` (one list for all tasks
    or one per task) are optional; random means have norm ``mean_scale``.
    ``test_class_freqs`` draws the test split separately with its own class
    mix, e.g. balanced tests over a skewed training stream.
    """
    n_tasks: int = 3
    n_classes: int = 2
    dim: int = 10
    n_per_task: int = 500
    mean_scale: float = 3.0
    std: float = 1.0
    class_freqs: list | None = None
    means: list | None = None
    test_fraction: float = 0.2
    seed: int = 0
    test_class_freqs: list | None = None

    def validate(self):
        if self.n_tasks < 1 or self.n_classes < 1 or self.dim < 1 or self.n_per_task < 2:
            raise ConfigError(f"invalid synthetic spec: {self}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")


def _task_freqs(spec: SyntheticSpec, i: int, f=None) -> np.ndarray:
    f = spec.class_freqs if f is None else f
    if f is None:
        f = [1.0] * spec.n_classes
    elif isinstance(f[0], (list, tuple)):
        f = f[i]
    f = np.asarray(f, dtype=np.float64)
    if len(f) != spec.n_classes or (f < 0).any() or f.sum() <= 0:
        raise ConfigError(f"class_freqs for task {i + 1} must be {spec.n_classes} "
                          f"non-negative weights")
    return f / f.sum()


def _draw(rng, mu, std, counts):
    y = np.repeat(np.arange(len(counts)), counts)
    x = mu[y] + std * rng.normal(size=(len(y), mu.shape[1]))
    order = rng.permutation(len(y))
    return x[order], y[order]


def build_synthetic_stream(spec: SyntheticSpec) -> TaskStream:
    spec.validate()
    rng = np.random.default_rng([zlib.crc32(b"synthetic"), spec.seed])
    classes = tuple(range(spec.n_classes))
    tasks = []
    for i in range(spec.n_tasks):
        if spec.means is not None:
            mu = np.asarray(spec.means[i] if np.ndim(spec.means) == 3 else spec.means,
                            dtype=np.float64)
        else:
            mu = rng.normal(size=(spec.n_classes, spec.dim))
            mu *= spec.mean_scale / np.linalg.norm(mu, axis=1, keepdims=True)
        n_test = max(1, int(round(spec.test_fraction * spec.n_per_task)))
        if spec.test_class_freqs is None:
            x, y = _draw(rng, mu, spec.std,
                         rng.multinomial(spec.n_per_task, _task_freqs(spec, i)))
        else:
            train = rng.multinomial(spec.n_per_task - n_test, _task_freqs(spec, i))
            test = rng.multinomial(n_test, _task_freqs(spec, i, spec.test_class_freqs))
            (vx, vy), (tx, ty) = _draw(rng, mu, spec.std, test), _draw(rng, mu, spec.std, train)
            x, y = np.concatenate([vx, tx]), np.concatenate([vy, ty])
        tasks.append(Task(i + 1, x[n_test:], y[n_test:], x[:n_test], y[:n_test], classes,
                          train_src=np.arange(n_test, len(y)), test_src=np.arange(n_test)))
    return TaskStream(tasks, spec.n_classes, domain_mode=True,
                      meta={"kind": "synthetic"})


# ---------------------------------------------------------------------------
# diagnostics

def train_on_task(model: MLP, task: Task, config: TrainConfig,
                  rng: np.random.Generator) -> MLP:
    """Plain SGD on one task (no replay), mutating ``model``."""
    from .trainer import iterate_minibatches
    for _ in range(config.epochs):
        for rows in iterate_minibatches(task.n_train, config.batch_size, rng):
            model.sgd_step(task.train_x[rows], task.train_y[rows], config.learning_rate)
    return model


def end_to_end_difficulty(task: Task, config: TrainConfig, hidden=(100, 100),
                          n_classes: int | None = None) -> float:
    """Test accuracy of a fresh network trained on ``task`` alone."""
    if task.n_train == 0 or len(task.test_y) == 0:
        raise ContractError(f"task {task.task_id} has an empty split")
    n_classes = n_classes or (max(task.class_ids) + 1)
    rng = np.random.default_rng(config.rng_seed)
    model = MLP.init([task.train_x.shape[1], *hidden, n_classes], rng)
    train_on_task(model, task, config, rng)
    return evaluate(model, task.test_x, task.test_y)[0]


def zero_shot_transfer(params: MLP, task: Task) -> float:
    """Accuracy on ``task``'s test split with no training on it."""
    return evaluate(params, task.test_x, task.test_y)[0]
