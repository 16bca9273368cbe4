import numpy as np
import pytest

from worstfa import autodiff as ad


def test_square():
    v, g = ad.value_and_grad(lambda x: ad.square(ad.take(x, 0)), np.array([3.0]))
    assert v == 9.0 and g.tolist() == [6.0]


def test_sigmoid_at_zero():
    v, g = ad.value_and_grad(lambda x: ad.sigmoid(ad.take(x, 0)), np.array([0.0]))
    assert v == 0.5 and g.tolist() == [0.25]


def central_diff(f, x, eps=1e-6):
    out = np.empty_like(x)
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += eps
        lo[i] -= eps
        out[i] = (float(ad.value_of(f(hi))) - float(ad.value_of(f(lo)))) / (2 * eps)
    return out


def composite_a(x):
    a = ad.reshape(ad.take(x, slice(0, 6)), (2, 3))
    b = ad.softmax(ad.mul(a, ad.take(x, 6)), axis=1)
    c = ad.cumsum(ad.exp(ad.mul(0.3, a)), axis=1)
    d = ad.div(ad.add(c, ad.softplus(a)), ad.add(ad.sqrt(ad.add(ad.square(a), 1.0)), 0.5))
    e = ad.std(ad.concatenate([ad.mul(b, d), ad.log(ad.add(c, 1.0))], axis=0), axis=0)
    return ad.sum(ad.sub(e, ad.mean(ad.sigmoid(ad.neg(d)))))


def composite_b(x):
    knots_x = np.linspace(-2, 2, 5)
    knots_y = ad.cumsum(ad.exp(ad.take(x, slice(0, 5))))
    pts = ad.mul(ad.take(x, slice(5, 7)), np.array([[1.0], [0.7]]))
    y = ad.pwl_interp(ad.expand_dims(ad.add(pts, 0.01), 0), knots_x, knots_y)
    k = np.argmax(ad.value_of(pts), axis=1)[:, None]
    return ad.add(ad.sum(ad.square(y)), ad.sum(ad.take_along_axis(pts, k, axis=1)))


@pytest.mark.parametrize("f,n", [(composite_a, 7), (composite_b, 7)])
@pytest.mark.parametrize("seed", range(5))
def test_composite_matches_central_differences(f, n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    _, g = ad.value_and_grad(f, x)
    fd = central_diff(f, x)
    denom = np.maximum(np.abs(fd), 1e-6 * max(np.abs(fd).max(), 1.0))
    assert np.max(np.abs(g - fd) / denom) < 1e-5


def test_deterministic():
    x = np.random.default_rng(3).normal(size=7)
    v1, g1 = ad.value_and_grad(composite_a, x)
    v2, g2 = ad.value_and_grad(composite_a, x)
    assert v1 == v2 and g1.tobytes() == g2.tobytes()


def test_adam_first_step():
    state = ad.AdamState.zeros(1, lr=0.1)
    state, x = ad.adam_step(state, np.array([1.0]), np.array([2.0]))
    assert x[0] == pytest.approx(1 - 0.1 * 2 / (2 + 1e-8), abs=1e-15)
    assert x[0] == pytest.approx(0.9, abs=1e-8)
    assert state.t == 1


def test_adam_zero_gradient():
    state = ad.AdamState.zeros(3, lr=0.1)
    p = np.array([1.0, -2.0, 3.0])
    state, q = ad.adam_step(state, p, np.zeros(3))
    assert q.tolist() == p.tolist() and state.t == 1


def test_adam_minimizes_quadratic():
    state, x = ad.AdamState.zeros(2, lr=0.05), np.array([3.0, -2.0])
    for _ in range(2000):
        _, g = ad.value_and_grad(lambda t: ad.sum(ad.square(ad.sub(t, np.array([0.5, 1.0])))), x)
        state, x = ad.adam_step(state, x, g)
    np.testing.assert_allclose(x, [0.5, 1.0], atol=1e-3)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        ad.adam_step(ad.AdamState.zeros(2), np.zeros(3), np.zeros(3))


def test_fd_check_quadratic():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    rep = ad.finite_difference_check(lambda x: ad.sum(ad.mul(x, ad.sum(ad.mul(A, x), axis=1))),
                                     np.array([0.7, -1.3]), epsilon=1e-5)
    assert rep.max_rel_error < 1e-9 and rep.passing


def test_fd_check_rejects_hard_indicator():
    rep = ad.finite_difference_check(lambda x: ad.mean(ad.step(ad.sub(x, 0.5))), np.array([0.2, 0.9]))
    assert not rep.smooth
    assert not rep.passing


def test_numpy_functions_on_vars_are_refused():
    with pytest.raises(ad.UnsupportedPrimitive):
        ad.value_and_grad(lambda x: np.tanh(x), np.array([0.1]))


def test_broadcast_gradients():
    x = np.array([1.0, 2.0, 3.0])
    _, g = ad.value_and_grad(lambda t: ad.sum(ad.mul(ad.reshape(t, (3, 1)), np.ones((3, 4)))), x)
    assert g.tolist() == [4.0, 4.0, 4.0]
