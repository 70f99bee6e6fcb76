"""Network layers, gradients, training behavior and the model file format.

Numerical ground truth comes from brute-force loops (direct convolution,
finite differences) rather than from the module under test.
"""

import numpy as np
import pytest

from resprate.tcn import (Adam, TcnConfig, TrainSpec, build_model,
                          cross_entropy, dataset_loss, default_dilations,
                          forward, load, loss_and_gradients, make_chunks,
                          predict_labels, receptive_field_radius,
                          rescale_symmetric, save, softmax_probs, train)
from resprate.tcn.nn import ChannelNorm, Conv1d, NORM_EPS


def tiny_config(**overrides):
    base = dict(depth=2, input_channels=2, channels_per_block=4,
                kernel_size=5, dropout=0.0, dilations=(1, 2))
    base.update(overrides)
    return TcnConfig(**base)


def finite_difference_check(model, x, labels, h=1e-6, tol=1e-4):
    _, grads = loss_and_gradients(model, x, labels)
    analytic = {k: v.copy() for k, v in grads.items()}
    worst = 0.0
    for name, arr in model.parameters().items():
        flat = arr.reshape(-1)
        ga = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = loss_and_gradients(model, x, labels)
            flat[i] = orig - h
            lm, _ = loss_and_gradients(model, x, labels)
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(ga[i]), 1e-8)
            worst = max(worst, abs(fd - ga[i]) / denom)
    assert worst < tol, f"worst relative gradient error {worst:.3e}"
    return worst


# ------------------------------------------------------------ architecture

def test_default_dilations_double_then_cap():
    assert default_dilations(4) == (1, 2, 4, 8)
    assert default_dilations(8) == (1, 2, 4, 8, 16, 32, 64, 64)
    assert default_dilations(12) == (1, 2, 4, 8, 16, 32, 64, 64, 64, 64, 64, 64)


def test_receptive_field_radius_formula():
    cfg = TcnConfig(depth=4, input_channels=2)
    assert receptive_field_radius(cfg) == 4 * (1 + 2 + 4 + 8)  # (k-1) * sum(d)
    assert receptive_field_radius(tiny_config()) == 4 * 3


def test_config_validation():
    with pytest.raises(ValueError):
        TcnConfig(depth=0, input_channels=2)
    with pytest.raises(ValueError):
        TcnConfig(depth=4, input_channels=2, kernel_size=4)  # even
    with pytest.raises(ValueError):
        TcnConfig(depth=4, input_channels=2, dropout=1.0)
    with pytest.raises(ValueError):
        TcnConfig(depth=4, input_channels=2, dilations=(1, 2))  # wrong length
    with pytest.raises(ValueError):
        TcnConfig(depth=4, input_channels=0)


def test_build_model_is_seed_deterministic():
    cfg = tiny_config()
    a = build_model(cfg, seed=5).parameters()
    b = build_model(cfg, seed=5).parameters()
    c = build_model(cfg, seed=6).parameters()
    assert sorted(a) == sorted(b)
    for k in a:
        assert np.array_equal(a[k], b[k])
    assert any(not np.array_equal(a[k], c[k]) for k in a)


# ------------------------------------------------------------------ layers

def test_conv1d_matches_direct_convolution():
    rng = np.random.default_rng(0)
    for dilation in (1, 2, 3):
        for kernel in (1, 3, 5):
            conv = Conv1d(3, 2, kernel, dilation, rng)
            x = rng.normal(size=(2, 3, 40))
            y = conv.forward(x, collect=False)
            pad = (kernel - 1) // 2 * dilation
            expected = np.zeros((2, 2, 40))
            for b in range(2):
                for o in range(2):
                    for t in range(40):
                        acc = conv.b[o]
                        for c in range(3):
                            for j in range(kernel):
                                src = t + j * dilation - pad
                                if 0 <= src < 40:
                                    acc += conv.w[o, c, j] * x[b, c, src]
                        expected[b, o, t] = acc
            assert np.allclose(y, expected, atol=1e-12)


def test_channel_norm_standardizes_each_timestep():
    rng = np.random.default_rng(1)
    norm = ChannelNorm(6)
    x = rng.normal(loc=3.0, scale=2.0, size=(2, 6, 10))
    y = norm.forward(x, collect=False)
    assert np.allclose(y.mean(axis=1), 0.0, atol=1e-12)
    assert np.allclose(y.var(axis=1), x.var(axis=1) / (x.var(axis=1) + NORM_EPS),
                       atol=1e-9)


def test_gradients_match_finite_differences():
    cfg = tiny_config()
    model = build_model(cfg, seed=7)
    rng = np.random.default_rng(3)
    x = rescale_symmetric(rng.normal(size=(2, 48)))[None]
    labels = (rng.random((1, 48)) < 0.4).astype(np.int64)
    finite_difference_check(model, x, labels, tol=1e-3)


def test_gradients_survive_multiple_passes():
    # Gradient dicts returned earlier must not be overwritten by later passes.
    cfg = tiny_config()
    model = build_model(cfg, seed=2)
    rng = np.random.default_rng(4)
    x = rescale_symmetric(rng.normal(size=(2, 32)))[None]
    labels = np.zeros((1, 32), dtype=np.int64)
    _, first = loss_and_gradients(model, x, labels)
    snapshot = {k: v.copy() for k, v in first.items()}
    loss_and_gradients(model, x * 0.5, 1 - labels)
    for k in first:
        assert np.array_equal(first[k], snapshot[k])


def test_receptive_field_confinement():
    """A single-sample input change reaches exactly the predicted radius."""
    cfg = tiny_config(dropout=0.0)
    radius = receptive_field_radius(cfg)
    model = build_model(cfg, seed=9)
    rng = np.random.default_rng(5)
    n = 160
    x = rng.normal(size=(2, n))
    base = forward(model, x)
    bumped = x.copy()
    mid = n // 2
    bumped[0, mid] += 0.5
    changed = np.any(forward(model, bumped) != base, axis=1)
    idx = np.nonzero(changed)[0]
    assert idx.size > 0
    assert idx.min() >= mid - radius
    assert idx.max() <= mid + radius
    # The edge of the cone is actually exercised, not just bounded.
    assert idx.max() - mid > radius // 2


# -------------------------------------------------------------- inference

def test_forward_rows_are_probabilities():
    model = build_model(tiny_config(), seed=1)
    x = np.random.default_rng(2).normal(size=(2, 100))
    probs = forward(model, x)
    assert probs.shape == (100, 2)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((probs >= 0) & (probs <= 1))


def test_predict_labels_scale_invariant():
    model = build_model(tiny_config(), seed=3)
    x = np.random.default_rng(6).normal(size=(2, 200))
    a = predict_labels(model, x)
    b = predict_labels(model, 0.05 * x)
    assert a.dtype == np.int8
    assert np.array_equal(a, b)


def test_rescale_symmetric():
    x = np.array([[1.0, -4.0, 2.0], [0.0, 0.0, 0.0]])
    out = rescale_symmetric(x)
    assert np.allclose(out[0], [0.25, -1.0, 0.5])
    assert np.array_equal(out[1], np.zeros(3))  # silent channel passes through
    with pytest.raises(ValueError):
        rescale_symmetric(np.zeros(5))


def test_softmax_and_cross_entropy_against_manual():
    rng = np.random.default_rng(8)
    logits = rng.normal(size=(2, 3, 7))
    labels = rng.integers(0, 3, size=(2, 7))
    p = softmax_probs(logits)
    manual_p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    assert np.allclose(p, manual_p, atol=1e-12)
    loss, grad = cross_entropy(logits, labels)
    manual = -np.mean([np.log(manual_p[b, labels[b, t], t])
                       for b in range(2) for t in range(7)])
    assert loss == pytest.approx(manual, rel=1e-12)
    # Gradient against finite differences on a few logit entries.
    h = 1e-6
    for (b, c, t) in [(0, 0, 0), (1, 2, 6), (0, 1, 3)]:
        bumped = logits.copy()
        bumped[b, c, t] += h
        lp, _ = cross_entropy(bumped, labels)
        bumped[b, c, t] -= 2 * h
        lm, _ = cross_entropy(bumped, labels)
        fd = (lp - lm) / (2 * h)
        assert grad[b, c, t] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_cross_entropy_shape_mismatch():
    with pytest.raises(ValueError):
        cross_entropy(np.zeros((1, 2, 5)), np.zeros((1, 4), dtype=int))


# ----------------------------------------------------------------- Adam

def test_adam_first_step_is_signed_learning_rate():
    # With bias correction the first update is lr * g / (|g| + eps).
    p = {"w": np.array([1.0, -2.0])}
    g = {"w": np.array([0.3, -0.7])}
    adam = Adam(lr=0.01)
    adam.step(p, g)
    expected = np.array([1.0, -2.0]) - 0.01 * np.sign([0.3, -0.7])
    assert np.allclose(p["w"], expected, atol=1e-6)


def test_adam_updates_in_place():
    arr = np.ones(3)
    params = {"w": arr}
    adam = Adam(lr=0.1)
    adam.step(params, {"w": np.ones(3)})
    assert params["w"] is arr
    assert not np.allclose(arr, 1.0)


# -------------------------------------------------------------- training

def test_make_chunks_shapes_and_normalization():
    rng = np.random.default_rng(10)
    x1 = 5.0 * rng.normal(size=(2, 250))
    y1 = rng.integers(0, 2, size=250)
    x2 = rng.normal(size=(2, 99))  # shorter than one chunk: dropped
    y2 = rng.integers(0, 2, size=99)
    xs, ys = make_chunks([(x1, y1), (x2, y2)], chunk_samples=100)
    assert xs.shape == (2, 2, 100)
    assert ys.shape == (2, 100)
    peaks = np.abs(xs).max(axis=2)
    assert np.allclose(peaks, 1.0)  # every chunk is rescaled on its own
    with pytest.raises(ValueError):
        make_chunks([(x2, y2)], chunk_samples=100)


def toy_dataset(seed, n=6, t=1200, rate=600.0):
    """Bursty toy recordings: label 1 where the burst envelope is active."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        x = 0.01 * rng.standard_normal((1, t))
        y = np.zeros(t, dtype=np.int64)
        pos = 100
        while pos + 150 < t:
            x[0, pos:pos + 100] += 0.5 * np.sin(2 * np.pi * 60.0 *
                                                np.arange(100) / rate)
            y[pos:pos + 100] = 1
            pos += int(rng.integers(250, 400))
        out.append((x, y))
    return out


def test_training_learns_toy_task():
    cfg = TcnConfig(depth=2, input_channels=1, channels_per_block=8,
                    kernel_size=5, dropout=0.0, dilations=(1, 2))
    model = build_model(cfg, seed=0)
    spec = TrainSpec(learning_rate=0.003, chunk_samples=400, batch_size=8,
                     max_epochs=30, patience=30)
    result = train(model, toy_dataset(1), toy_dataset(2, n=2), spec, seed=3)
    assert result.best_val_loss < 0.1
    assert result.best_epoch <= 30


def test_training_is_deterministic():
    cfg = tiny_config(input_channels=1)
    spec = TrainSpec(chunk_samples=300, batch_size=4, max_epochs=3, patience=3)
    runs = []
    for _ in range(2):
        model = build_model(cfg, seed=21)
        result = train(model, toy_dataset(4, n=3), toy_dataset(5, n=1), spec, seed=22)
        runs.append((result, model.parameters()))
    assert runs[0][0].history == runs[1][0].history
    for k in runs[0][1]:
        assert np.array_equal(runs[0][1][k], runs[1][1][k])


def test_training_restores_best_epoch_parameters():
    cfg = tiny_config(input_channels=1, dropout=0.2)
    model = build_model(cfg, seed=30)
    spec = TrainSpec(chunk_samples=300, batch_size=4, max_epochs=12, patience=12)
    val = toy_dataset(7, n=2)
    result = train(model, toy_dataset(6, n=3), val, spec, seed=31)
    x_val, y_val = make_chunks(val, spec.chunk_samples)
    recomputed = dataset_loss(model, x_val, y_val, spec.batch_size)
    assert recomputed == pytest.approx(result.best_val_loss, rel=1e-12)
    assert result.best_val_loss == min(v for _, _, v in result.history)


def test_training_stops_early_on_plateau():
    cfg = tiny_config(input_channels=1)
    model = build_model(cfg, seed=33)
    # An unlearnable validation set (random labels) plateaus quickly.
    rng = np.random.default_rng(40)
    val = [(0.01 * rng.standard_normal((1, 600)),
            rng.integers(0, 2, size=600).astype(np.int64))]
    spec = TrainSpec(chunk_samples=300, batch_size=4, max_epochs=60, patience=2)
    result = train(model, toy_dataset(8, n=2), val, spec, seed=34)
    assert result.stopped_early
    assert len(result.history) < 60
    tail = [v for _, _, v in result.history[result.best_epoch:]]
    assert len(tail) == spec.patience  # stopped right after patience ran out


def test_dataset_loss_matches_direct_evaluation():
    cfg = tiny_config(input_channels=1)
    model = build_model(cfg, seed=44)
    xs, ys = make_chunks(toy_dataset(9, n=3), 300)
    batched = dataset_loss(model, xs, ys, batch_size=2)
    logits = model.forward_batch(xs)
    direct, _ = cross_entropy(logits, ys)
    assert batched == pytest.approx(direct, rel=1e-12)


# ----------------------------------------------------------- serialization

def test_save_load_roundtrip(tmp_path):
    cfg = tiny_config()
    model = build_model(cfg, seed=17)
    path = tmp_path / "model.tcn"
    save(model, path, sample_rate=2100.0, channel_mode="both")
    loaded, meta = load(path)
    assert loaded.config == cfg
    assert loaded.rng_seed == 17
    assert meta["sample_rate"] == 2100.0
    assert meta["channel_mode"] == "both"
    a, b = model.parameters(), loaded.parameters()
    assert sorted(a) == sorted(b)
    for k in a:
        assert np.array_equal(a[k], b[k])


def test_save_is_byte_deterministic(tmp_path):
    model = build_model(tiny_config(), seed=17)
    p1, p2 = tmp_path / "a.tcn", tmp_path / "b.tcn"
    save(model, p1, sample_rate=4410.0, channel_mode="c2")
    save(model, p2, sample_rate=4410.0, channel_mode="c2")
    assert p1.read_bytes() == p2.read_bytes()


def test_loaded_model_predicts_identically(tmp_path):
    model = build_model(tiny_config(), seed=23)
    path = tmp_path / "model.tcn"
    save(model, path)
    loaded, _ = load(path)
    x = np.random.default_rng(3).normal(size=(2, 500))
    assert np.array_equal(predict_labels(model, x), predict_labels(loaded, x))


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.tcn"
    path.write_bytes(b"NOTAMODEL" + b"\x00" * 64)
    with pytest.raises(ValueError, match="magic"):
        load(path)


def test_load_rejects_truncation(tmp_path):
    model = build_model(tiny_config(), seed=17)
    path = tmp_path / "model.tcn"
    save(model, path)
    blob = path.read_bytes()
    clipped = tmp_path / "clipped.tcn"
    clipped.write_bytes(blob[:len(blob) // 2])
    with pytest.raises(ValueError, match="truncated"):
        load(clipped)


def test_load_rejects_trailing_garbage(tmp_path):
    model = build_model(tiny_config(), seed=17)
    path = tmp_path / "model.tcn"
    save(model, path)
    padded = tmp_path / "padded.tcn"
    padded.write_bytes(path.read_bytes() + b"\x00\x00")
    with pytest.raises(ValueError, match="trailing"):
        load(padded)
