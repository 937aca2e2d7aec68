import numpy as np
import pytest

from dctattn.transform import dct_matrix
from dctattn.train import (
    MODES,
    DivergenceError,
    ToyDatasetSpec,
    build_model,
    gen_synthetic,
    grad_check,
    train,
)


@pytest.fixture(scope="module")
def data():
    return gen_synthetic(ToyDatasetSpec(samples=128, seed=0))


def test_dataset_deterministic():
    a = gen_synthetic(ToyDatasetSpec(samples=64, seed=5))
    b = gen_synthetic(ToyDatasetSpec(samples=64, seed=5))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    c = gen_synthetic(ToyDatasetSpec(samples=64, seed=6))
    assert not np.array_equal(a.x, c.x)


def test_dataset_balanced_and_shaped():
    d = gen_synthetic(ToyDatasetSpec(samples=512, seed=0))
    assert d.x.shape == (512, 1, 4, 8)
    assert abs(int(d.y.sum()) - 256) <= 0.1 * 256


def test_dataset_zero_rho():
    d = gen_synthetic(ToyDatasetSpec(samples=64, rho=0.0, seed=1))
    assert d.x.shape[0] == 64 and int(d.y.sum()) == 32


def test_dataset_impossible_margin():
    with pytest.raises(ValueError, match="could not balance"):
        gen_synthetic(ToyDatasetSpec(samples=8, margin=1e6))


def test_unknown_mode():
    with pytest.raises(ValueError, match="unknown mode"):
        build_model("resnet")


def test_linear_model_gradcheck(data):
    assert grad_check(build_model("linear", seed=0), data.x[0], data.y[0]) < 1e-8


@pytest.mark.parametrize("mode", MODES)
def test_gradcheck_every_mode(mode, data):
    model = build_model(mode, seed=1, std=0.3, bias_std=0.3)
    assert grad_check(model, data.x[:2], data.y[:2]) < 1e-5


@pytest.mark.parametrize("mode", ["vanilla", "compressed-simplified"])
def test_gradcheck_default_init(mode, data):
    assert grad_check(build_model(mode, seed=0), data.x[0], data.y[0]) < 1e-5


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_gradcheck_rejects_nonfinite_loss(data):
    model = build_model("linear")
    model.head_w[...] = np.inf
    with pytest.raises(ValueError, match="not finite"):
        grad_check(model, data.x[0], data.y[0])


def test_frozen_modes_exclude_matrix():
    model = build_model("dct-k-frozen")
    assert "block.wk" not in model.trainable()
    assert np.array_equal(model.block.wk, dct_matrix(8).d)


@pytest.mark.parametrize("mode,name", [("dct-k-frozen", "wk"), ("dct-v-frozen", "wv")])
def test_frozen_weights_bit_identical(mode, name, data):
    model = build_model(mode, seed=0)
    before = getattr(model.block, name).copy()
    train(model, data, steps=1)
    assert np.array_equal(getattr(model.block, name), before)
    train(model, data, steps=20)
    assert np.array_equal(getattr(model.block, name), before)
    assert not np.array_equal(model.block.wq, build_model(mode, seed=0).block.wq)


def test_training_halves_loss():
    d = gen_synthetic(ToyDatasetSpec(samples=512, seed=0))
    hist = train(build_model("vanilla", seed=0), d, lr=0.05, momentum=0.9, steps=300)
    assert len(hist.losses) == 300
    assert all(np.isfinite(hist.losses))
    assert hist.losses[-1] <= 0.5 * hist.losses[0]
    assert hist.final_accuracy > 0.8


def test_training_deterministic(data):
    h1 = train(build_model("dct-q", seed=3), data, steps=30, seed=3)
    h2 = train(build_model("dct-q", seed=3), data, steps=30, seed=3)
    assert h1.to_csv() == h2.to_csv()
    assert h1.config == h2.config


def test_zero_lr_constant_loss(data):
    hist = train(build_model("compressed-naive", seed=0), data, lr=0.0, steps=10)
    assert np.max(np.abs(np.array(hist.losses) - hist.losses[0])) < 1e-12


def test_divergence_detected(data):
    model = build_model("vanilla", seed=0)
    with pytest.raises(DivergenceError, match="diverged"):
        train(model, data, lr=1e6, momentum=0.9, steps=50)


def test_history_csv_format(data):
    csv = train(build_model("linear"), data, steps=3).to_csv()
    lines = csv.splitlines()
    assert lines[0] == "step,loss" and len(lines) == 4
    assert float(lines[1].split(",")[1]) > 0
