import numpy as np
import pytest
from scipy import ndimage

from gps_replay.errors import ConfigError, ContractError
from gps_replay.pseudo import (SynthesisSpec, blur_images, gaussian_kernel, rotate_images,
                               stratified_subsample, synthesize_sequence)
from gps_replay.tasks import SyntheticSpec, Task, build_synthetic_stream


def image_task(n=60, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 10
    return Task(1, rng.random((n, 784)), y, rng.random((20, 784)), np.arange(20) % 10,
                tuple(range(10)), (28, 28))


def test_identity_permutation_reproduces_subsample():
    task = image_task()
    [pt] = synthesize_sequence(task, SynthesisSpec("permutation", 1, 30, seed=3), 5,
                               identity=True)
    rows = [int(np.flatnonzero(task.train_src == s)[0]) for s in pt.train_src]
    assert np.array_equal(pt.train_x, task.train_x[rows])
    assert np.array_equal(pt.train_y, task.train_y[rows])
    assert pt.task_id == 5 and pt.n_train == 30


def test_relative_permutation_has_few_fixed_points():
    task = image_task()
    a, b = synthesize_sequence(task, SynthesisSpec("permutation", 2, 10, seed=1), 4)
    base = task.train_x[np.isin(task.train_src, a.train_src)]
    # recover each permutation from where the base pixels moved
    pa = np.array([np.flatnonzero(np.all(base == a.train_x[:, [k]], 0))[0] for k in range(784)])
    pb = np.array([np.flatnonzero(np.all(base == b.train_x[:, [k]], 0))[0] for k in range(784)])
    assert np.sum(pa == pb) < 10


def test_stratified_subsample_is_balanced():
    y = np.repeat(np.arange(4), [50, 50, 50, 5])
    rows = stratified_subsample(y, 40, np.random.default_rng(0))
    counts = np.bincount(y[rows])
    assert counts.tolist() == [12, 12, 11, 5]


@pytest.mark.parametrize("degrees", [15.0, 30.0, -45.0, 90.0])
def test_rotation_matches_scipy(degrees):
    img = np.random.default_rng(2).random((28, 28))
    ref = ndimage.rotate(img, degrees, reshape=False, order=1, mode="grid-constant",
                         cval=0.0, prefilter=False)
    ours = rotate_images(img.ravel()[None], (28, 28), degrees)[0].reshape(28, 28)
    np.testing.assert_allclose(ours, ref, atol=1e-12)


def test_rotation_task_k_uses_cumulative_angle():
    task = image_task()
    seq = synthesize_sequence(task, SynthesisSpec("rotation", 2, 20, seed=0), 3)
    rows = [int(np.flatnonzero(task.train_src == s)[0]) for s in seq[1].train_src]
    expected = rotate_images(task.train_x[rows], (28, 28), 30.0)
    np.testing.assert_array_equal(seq[1].train_x, expected)


def test_blur_matches_scipy_and_kernel_normalised():
    img = np.random.default_rng(4).random((28, 28))
    for sigma in (0.5, 1.0, 1.5):
        k = gaussian_kernel(5, sigma)
        assert k.sum() == pytest.approx(1.0)
        ref = ndimage.correlate(img, k, mode="constant", cval=0.0)
        ours = blur_images(img.ravel()[None], (28, 28), sigma)[0].reshape(28, 28)
        np.testing.assert_allclose(ours, ref, atol=1e-12)


def test_flat_features_cannot_rotate_or_blur():
    flat = build_synthetic_stream(SyntheticSpec(n_tasks=1, n_per_task=50)).tasks[0]
    for method in ("rotation", "blurring"):
        with pytest.raises(ContractError):
            synthesize_sequence(flat, SynthesisSpec(method, 1, 10), 2)
    assert len(synthesize_sequence(flat, SynthesisSpec("permutation", 2, 10), 2)) == 2


def test_bad_spec_is_a_config_error():
    with pytest.raises(ConfigError):
        SynthesisSpec("shear")
    with pytest.raises(ConfigError):
        SynthesisSpec(count=0)


def test_synthesis_is_seeded():
    task = image_task()
    a = synthesize_sequence(task, SynthesisSpec("permutation", 2, 20, seed=7), 3)
    b = synthesize_sequence(task, SynthesisSpec("permutation", 2, 20, seed=7), 3)
    c = synthesize_sequence(task, SynthesisSpec("permutation", 2, 20, seed=8), 3)
    assert all(np.array_equal(p.train_x, q.train_x) for p, q in zip(a, b))
    assert not np.array_equal(a[0].train_x, c[0].train_x)
