"""Pseudo-future tasks synthesised from the current task.

Three transforms: a fresh pixel permutation per pseudo-task, cumulative
rotation (k * step degrees, bilinear, zero fill), and a 5x5 Gaussian blur whose
sigma grows as k * step.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .tasks import Task, permutation_from_seed

METHODS = ("permutation", "rotation", "blurring")


@dataclass
class SynthesisSpec:
    method: str = "permutation"
    count: int = 1
    examples_per_task: int = 1000
    seed: int = 0
    rotation_step_degrees: float = 15.0
    blur_sigma_step: float = 0.5
    blur_kernel: int = 5
    with_test: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown synthesis method {self.method!r}; use one of {METHODS}")
        if self.count < 1 or self.examples_per_task < 1:
            raise ConfigError("count and examples_per_task must be >= 1")


def stratified_subsample(labels: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Row indices, as class-balanced as availability allows, in ascending order."""
    if n >= len(labels):
        return np.arange(len(labels))
    classes = np.unique(labels)
    pools = {c: rng.permutation(np.flatnonzero(labels == c)) for c in classes}
    take = {c: 0 for c in classes}
    left = n
    while left:
        open_ = [c for c in classes if take[c] < len(pools[c])]
        share, extra = divmod(left, len(open_))
        for k, c in enumerate(open_):
            add = min(share + (1 if k < extra else 0), len(pools[c]) - take[c])
            take[c] += add
            left -= add
    return np.sort(np.concatenate([pools[c][:take[c]] for c in classes]))


# ---------------------------------------------------------------------------
# image transforms (batched over rows of flattened images)

def rotate_images(x: np.ndarray, shape: tuple[int, int], degrees: float) -> np.ndarray:
    """Rotate about the image centre; bilinear weights, pixels outside read as 0."""
    h, w = shape
    imgs = np.asarray(x, dtype=np.float64).reshape(-1, h, w)
    theta = np.deg2rad(-degrees)  # counter-clockwise as displayed, row 0 on top
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    # inverse map: output pixel -> source coordinate
    cos, sin = np.cos(theta), np.sin(theta)
    sr = cos * (rr - cy) - sin * (cc - cx) + cy
    sc = sin * (rr - cy) + cos * (cc - cx) + cx
    r0, c0 = np.floor(sr).astype(int), np.floor(sc).astype(int)
    fr, fc = sr - r0, sc - c0
    out = np.zeros_like(imgs)
    for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                        (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        r, c = r0 + dr, c0 + dc
        ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
        out[:, ok] += wgt[ok] * imgs[:, r[ok], c[ok]]
    return out.reshape(len(imgs), h * w)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    if sigma <= 0:
        k = np.zeros((size, size))
        k[size // 2, size // 2] = 1.0
        return k
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def blur_images(x: np.ndarray, shape: tuple[int, int], sigma: float,
                size: int = 5) -> np.ndarray:
    """Zero-padded 2-D correlation with a normalised Gaussian kernel."""
    h, w = shape
    imgs = np.asarray(x, dtype=np.float64).reshape(-1, h, w)
    k = gaussian_kernel(size, sigma)
    p = size // 2
    padded = np.pad(imgs, ((0, 0), (p, p), (p, p)))
    out = np.zeros_like(imgs)
    for i in range(size):
        for j in range(size):
            out += k[i, j] * padded[:, i:i + h, j:j + w]
    return out.reshape(len(imgs), h * w)


# ---------------------------------------------------------------------------

def synthesize_sequence(base: Task, spec: SynthesisSpec, first_task_id: int,
                        identity: bool = False) -> list[Task]:
    """``spec.count`` pseudo-tasks from one class-stratified subsample of ``base``.

    Pseudo-task ``k`` gets id ``first_task_id + k - 1``.  ``identity`` forces
    the identity permutation (a check hook for the permutation path).
    """
    if spec.method != "permutation" and base.image_shape is None:
        raise ContractError(f"{spec.method} needs image-shaped inputs; task "
                            f"{base.task_id} has flat features")
    rng = np.random.default_rng([zlib.crc32(b"pseudo-subsample"), spec.seed])
    rows = stratified_subsample(base.train_y, spec.examples_per_task, rng)
    x, y, src = base.train_x[rows], base.train_y[rows], base.train_src[rows]
    d = x.shape[1]
    out = []
    for k in range(1, spec.count + 1):
        tid = first_task_id + k - 1
        if spec.method == "permutation":
            perm = np.arange(d) if identity else permutation_from_seed(
                spec.seed * 1_000_003 + k, d, namespace="simulation")

            def tf(a, perm=perm):
                return a[:, perm]
        elif spec.method == "rotation":
            def tf(a, k=k):
                return rotate_images(a, base.image_shape, k * spec.rotation_step_degrees)
        else:
            def tf(a, k=k):
                return blur_images(a, base.image_shape, k * spec.blur_sigma_step,
                                   spec.blur_kernel)
        if spec.with_test:
            tx, ty, tsrc = tf(base.test_x), base.test_y, base.test_src
        else:
            tx, ty, tsrc = np.empty((0, d)), np.empty(0, dtype=np.int64), np.empty(0, int)
        out.append(Task(tid, tf(x), y, tx, ty, base.class_ids, base.image_shape,
                        train_src=src, test_src=tsrc))
    return out
