import struct

import numpy as np
import pytest

from draco.trainbench import (
    ModelSpec,
    SyntheticDataset,
    accuracy,
    generate_synthetic,
    gradient,
    loss,
    per_example_gradients,
    per_example_loss,
    sgd_step,
)

SPECS = [
    ModelSpec("linear", 4),
    ModelSpec("logistic", 4),
    ModelSpec("mlp", 4, (5,), "tanh"),
    ModelSpec("mlp", 3, (4, 3), "relu"),
]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.kind}-{s.activation}-{len(s.hidden)}")
def test_gradient_matches_finite_differences(spec):
    rng = np.random.default_rng(11)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        w = rng.normal(size=spec.dim)
        x = rng.normal(size=(1, spec.feat_dim))
        y = rng.normal(size=1) if spec.kind == "linear" else rng.integers(0, 2, size=1).astype(float)
        g = per_example_gradients(spec, w, x, y)[0]
        fd = np.empty(spec.dim)
        for i in range(spec.dim):
            e = np.zeros(spec.dim)
            e[i] = h
            fd[i] = (per_example_loss(spec, w + e, x, y)[0] - per_example_loss(spec, w - e, x, y)[0]) / (2 * h)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8))
    assert worst <= 1e-5


def test_dims():
    assert ModelSpec("linear", 7).dim == 7
    assert ModelSpec("logistic", 7).dim == 8
    assert ModelSpec("mlp", 3, (4,)).dim == 4 * 3 + 4 + 4 + 1
    with pytest.raises(ValueError):
        ModelSpec("mlp", 3, (0,))
    with pytest.raises(ValueError):
        ModelSpec("cnn", 3)


def test_gradient_examples():
    lin = ModelSpec("linear", 2)
    np.testing.assert_array_equal(gradient(lin, np.zeros(2), np.array([[1.0, 0.0]]), np.array([0.0])), [0, 0])
    logi = ModelSpec("logistic", 2)
    X = np.array([[1.0, 2.0], [-1.0, 0.5]])
    y = np.array([1.0, 0.0])
    expected = np.append(((0.5 - y)[:, None] * X).sum(axis=0), (0.5 - y).sum())
    np.testing.assert_allclose(gradient(logi, np.zeros(3), X, y), expected)
    with pytest.raises(ValueError):
        gradient(lin, np.zeros(2), np.zeros((0, 2)), np.zeros(0))


def test_gradient_sums_in_example_order(rng):
    spec = ModelSpec("logistic", 3)
    X, y = rng.normal(size=(6, 3)), rng.integers(0, 2, 6).astype(float)
    w = rng.normal(size=4)
    rows = per_example_gradients(spec, w, X, y)
    acc = rows[0].copy()
    for r in rows[1:]:
        acc = acc + r
    assert gradient(spec, w, X, y).tobytes() == acc.tobytes()


def test_sgd_step_examples(rng):
    w = rng.normal(size=3)
    np.testing.assert_array_equal(sgd_step(w, np.zeros(3), 0.1, 60), w)
    np.testing.assert_array_equal(sgd_step(np.array([5.0]), np.array([2.0]), 1.0, 1), [3.0])


def test_noiseless_regression_loss_decreases():
    data = generate_synthetic("regression", 600, 5, noise_sd=0.0, seed=1)
    spec = ModelSpec("linear", 5)
    rng = np.random.default_rng(2)
    w = np.zeros(5)
    losses = [loss(spec, w, data.X, data.y)]
    B = 60
    for _ in range(50):
        idx = rng.choice(data.n, B, replace=False)
        w = sgd_step(w, gradient(spec, w, data.X[idx], data.y[idx]), 0.01, B)
        losses.append(loss(spec, w, data.X, data.y))
    assert all(b < a for a, b in zip(losses, losses[1:]))
    # and with a larger step it actually fits the exact solution
    for _ in range(500):
        idx = rng.choice(data.n, B, replace=False)
        w = sgd_step(w, gradient(spec, w, data.X[idx], data.y[idx]), 0.5, B)
    assert loss(spec, w, data.X, data.y) < 1e-12


def test_separated_blobs_are_learned():
    data = generate_synthetic("classification", 400, 5, seed=4, separation=6.0)
    assert data.y.sum() == 200
    spec = ModelSpec("logistic", 5)
    w = np.zeros(spec.dim)
    for _ in range(300):
        w = sgd_step(w, gradient(spec, w, data.X, data.y), 1.0, data.n)
    assert accuracy(spec, w, data.X, data.y) == 1.0
    assert accuracy(ModelSpec("linear", 5), np.zeros(5), data.X, data.y) is None


def test_generation_is_seeded():
    for kind in ("regression", "classification"):
        a = generate_synthetic(kind, 50, 3, 0.1, seed=9)
        b = generate_synthetic(kind, 50, 3, 0.1, seed=9)
        c = generate_synthetic(kind, 50, 3, 0.1, seed=10)
        assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
        assert a.X.tobytes() != c.X.tobytes()
    with pytest.raises(ValueError):
        generate_synthetic("images", 10, 2)


def test_dataset_cache_layout(tmp_path):
    data = generate_synthetic("classification", 7, 3, seed=0)
    path = tmp_path / "d.bin"
    data.save(path)
    raw = path.read_bytes()
    assert raw[:5] == b"DRDS1"
    assert struct.unpack("<QQ", raw[5:21]) == (7, 3)
    assert len(raw) == 21 + 8 * 21 + 8 * 7
    back = SyntheticDataset.load(path)
    assert back.X.tobytes() == data.X.tobytes() and back.y.tobytes() == data.y.tobytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        SyntheticDataset.load(path)
