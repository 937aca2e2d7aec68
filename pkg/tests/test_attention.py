import numpy as np
import pytest
from conftest import fd_grads, max_rel_err

from dctattn.attention import (
    AttentionConfig,
    AttentionWeights,
    init_weights,
    msa_backward,
    msa_forward,
    partition,
    relative_bias,
    reverse,
)
from dctattn.dense import MulCounter


def random_weights(c, m, p, rng, scale=0.5):
    w = init_weights(c, m, p, rng, std=scale)
    for name in ("bq", "bk", "bv", "bo", "bhat"):
        arr = getattr(w, name)
        arr[...] = scale * rng.standard_normal(arr.shape)
    return w


def loop_oracle(x, w, m, p):
    """Token-by-token re-implementation with explicit index arithmetic."""
    n, t, c = x.shape
    d = c // p
    y = np.zeros_like(x)
    for win in range(n):
        q = [x[win, i] @ w.wq.T + w.bq for i in range(t)]
        k = [x[win, i] @ w.wk.T + w.bk for i in range(t)]
        v = [x[win, i] @ w.wv.T + w.bv for i in range(t)]
        a = np.zeros((t, c))
        for h in range(p):
            sl = slice(h * d, (h + 1) * d)
            for i in range(t):
                yi, xi = divmod(i, m)
                s = np.empty(t)
                for j in range(t):
                    yj, xj = divmod(j, m)
                    bias = w.bhat[h, yi - yj + m - 1, xi - xj + m - 1]
                    s[j] = q[i][sl] @ k[j][sl] / np.sqrt(d) + bias
                e = np.exp(s - s.max())
                e /= e.sum()
                a[i, sl] = sum(e[j] * v[j][sl] for j in range(t))
        y[win] = a @ w.wo.T + w.bo
    return y


def test_partition_single_window_raster():
    img = np.arange(4 * 4 * 2, dtype=float).reshape(4, 4, 2)
    win = partition(img, 4)
    assert win.shape == (1, 16, 2)
    assert np.array_equal(win[0], img.reshape(16, 2))


def test_partition_window_order():
    img = np.arange(8 * 8 * 1, dtype=float).reshape(8, 8, 1)
    win = partition(img, 4)
    assert win.shape == (4, 16, 1)
    assert win[1, 0, 0] == img[0, 4, 0]
    assert win[2, 0, 0] == img[4, 0, 0]
    assert win[3, 5, 0] == img[5, 5, 0]


def test_partition_roundtrip(rng):
    img = rng.standard_normal((6, 9, 3))
    assert np.array_equal(reverse(partition(img, 3), 6, 9), img)


def test_partition_rejects_indivisible():
    with pytest.raises(ValueError):
        partition(np.zeros((5, 4, 1)), 2)


def test_relative_bias_m1():
    assert np.array_equal(relative_bias(np.array([[3.5]]), 1), [[3.5]])


def test_relative_bias_m2_corners():
    bhat = np.arange(9.0).reshape(3, 3)
    b = relative_bias(bhat, 2)
    assert b[0, 3] == bhat[0, 0]
    assert b[3, 0] == bhat[2, 2]
    assert np.all(np.diag(b) == bhat[1, 1])


def test_relative_bias_constant():
    assert np.all(relative_bias(np.full((5, 5), 0.7), 3) == 0.7)


def test_relative_bias_shape_mismatch():
    with pytest.raises(ValueError):
        relative_bias(np.zeros((3, 3)), 3)


def test_uniform_attention_gives_window_mean(rng):
    c, m = 4, 2
    w = init_weights(c, m, 2, rng)
    w.wq[...] = 0
    w.wk[...] = 0
    w.wv[...] = np.eye(c)
    w.wo[...] = np.eye(c)
    x = rng.standard_normal((3, 4, c))
    y, _ = msa_forward(x, w, AttentionConfig(3, m, c, 2))
    assert np.allclose(y, np.broadcast_to(x.mean(axis=1, keepdims=True), x.shape), atol=1e-14)


def test_single_token(rng):
    w = random_weights(4, 1, 2, rng)
    x = rng.standard_normal((1, 1, 4))
    y, _ = msa_forward(x, w, AttentionConfig(1, 1, 4, 2))
    assert np.allclose(y, (x @ w.wv.T + w.bv) @ w.wo.T + w.bo, atol=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_forward_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    w = random_weights(4, 2, 2, rng)
    x = rng.standard_normal((1, 4, 4))
    y, _ = msa_forward(x, w, AttentionConfig(1, 2, 4, 2))
    assert np.max(np.abs(y - loop_oracle(x, w, 2, 2))) < 1e-12


def test_forward_matches_loop_oracle_multiwindow(rng):
    w = random_weights(6, 3, 3, rng)
    x = rng.standard_normal((2, 9, 6))
    y, _ = msa_forward(x, w, AttentionConfig(2, 3, 6, 3))
    assert np.max(np.abs(y - loop_oracle(x, w, 3, 3))) < 1e-12


def test_attention_rows_sum_to_one(rng):
    w = random_weights(8, 2, 2, rng)
    _, cache = msa_forward(rng.standard_normal((3, 4, 8)), w, AttentionConfig(3, 2, 8, 2))
    assert np.max(np.abs(cache.core.probs.sum(axis=-1) - 1.0)) < 1e-12


def test_window_permutation_equivariance(rng):
    w = random_weights(4, 2, 2, rng)
    cfg = AttentionConfig(5, 2, 4, 2)
    x = rng.standard_normal((5, 4, 4))
    perm = rng.permutation(5)
    y, _ = msa_forward(x, w, cfg)
    yp, _ = msa_forward(x[perm], w, cfg)
    assert np.array_equal(yp, y[perm])


def test_bias_table_shift_invariance(rng):
    w = random_weights(4, 2, 2, rng)
    cfg = AttentionConfig(2, 2, 4, 2)
    x = rng.standard_normal((2, 4, 4))
    y, _ = msa_forward(x, w, cfg)
    w2 = w.copy()
    w2.bhat += 3.7
    y2, _ = msa_forward(x, w2, cfg)
    assert np.max(np.abs(y - y2)) < 1e-10


def test_key_bias_has_no_effect(rng):
    w = random_weights(4, 2, 2, rng)
    cfg = AttentionConfig(1, 2, 4, 2)
    x = rng.standard_normal((1, 4, 4))
    w2 = w.copy()
    w2.bk[...] = 0.0
    assert np.max(np.abs(msa_forward(x, w, cfg)[0] - msa_forward(x, w2, cfg)[0])) < 1e-14
    assert np.max(np.abs(loop_oracle(x, w, 2, 2) - msa_forward(x, w, cfg)[0])) < 1e-12


def test_forward_counts_multiplications(rng):
    c = MulCounter()
    msa_forward(rng.standard_normal((1, 4, 4)), init_weights(4, 2, 1, rng), AttentionConfig(1, 2, 4, 1), c)
    assert c.count == 384


def test_forward_rejects_bad_shapes(rng):
    w = init_weights(4, 2, 2, rng)
    with pytest.raises(ValueError):
        msa_forward(rng.standard_normal((1, 4, 6)), w, AttentionConfig(1, 2, 4, 2))
    with pytest.raises(ValueError):
        msa_forward(rng.standard_normal((1, 4, 4)), w, AttentionConfig(1, 2, 4, 1))
    with pytest.raises(ValueError):
        AttentionConfig(1, 2, 6, 4)


def test_weights_reject_nonfinite():
    w = init_weights(4, 2, 2)
    kw = {n: getattr(w, n) for n in ("wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo", "bhat")}
    kw["wq"] = kw["wq"].copy()
    kw["wq"][0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        AttentionWeights(**kw)


def test_zero_upstream_gives_zero_grads(rng):
    w = random_weights(4, 2, 2, rng)
    y, cache = msa_forward(rng.standard_normal((1, 4, 4)), w, AttentionConfig(1, 2, 4, 2))
    g = msa_backward(cache, np.zeros_like(y))
    assert all(not np.any(v) for v in g.values())


def _sum_sq_fd(w, x, cfg):
    wl = w.copy(np.longdouble)
    xl = x.astype(np.longdouble)
    params = {**wl.params(), "x": xl}

    def loss():
        return np.sum(msa_forward(xl, wl, cfg)[0] ** 2)

    return fd_grads(loss, params)


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("seed", range(5))
def test_backward_matches_finite_differences(seed, p):
    rng = np.random.default_rng(seed)
    cfg = AttentionConfig(1, 2, 4, p)
    w = random_weights(4, 2, p, rng)
    x = rng.standard_normal((1, 4, 4))
    y, cache = msa_forward(x, w, cfg)
    g = msa_backward(cache, 2 * y)
    assert max_rel_err(g, _sum_sq_fd(w, x, cfg)) < 1e-5


def test_backward_is_linear(rng):
    w = random_weights(4, 2, 2, rng)
    y, cache = msa_forward(rng.standard_normal((2, 4, 4)), w, AttentionConfig(2, 2, 4, 2))
    d1, d2 = rng.standard_normal(y.shape), rng.standard_normal(y.shape)
    g1, g2 = msa_backward(cache, d1), msa_backward(cache, d2)
    g = msa_backward(cache, 1.7 * d1 + d2)
    for name in g:
        assert np.max(np.abs(g[name] - (1.7 * g1[name] + g2[name]))) < 1e-10


def test_frozen_parameters_get_zero_grad(rng):
    w = random_weights(4, 2, 2, rng)
    w.frozen = frozenset({"wk", "bhat"})
    y, cache = msa_forward(rng.standard_normal((1, 4, 4)), w, AttentionConfig(1, 2, 4, 2))
    g = msa_backward(cache, y)
    assert not np.any(g["wk"]) and not np.any(g["bhat"])
    assert np.any(g["wq"])


def test_stale_cache_rejected(rng):
    w = random_weights(4, 2, 2, rng)
    y, cache = msa_forward(rng.standard_normal((1, 4, 4)), w, AttentionConfig(1, 2, 4, 2))
    w.version += 1
    with pytest.raises(ValueError, match="stale"):
        msa_backward(cache, y)


def test_mismatched_upstream_rejected(rng):
    w = random_weights(4, 2, 2, rng)
    _, cache = msa_forward(rng.standard_normal((1, 4, 4)), w, AttentionConfig(1, 2, 4, 2))
    with pytest.raises(ValueError, match="upstream"):
        msa_backward(cache, np.zeros((2, 4, 4)))
