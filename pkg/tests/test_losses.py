import math

import numpy as np
import pytest

from cslsel.losses import combined_unsupervised, loss_breakdown, supervised_ce, weighted_ce


def _oracle(pred, target, weights, norm, ignore=255):
    num, cnt, mass = 0.0, 0, 0.0
    K, H, W = pred.shape
    for i in range(H):
        for j in range(W):
            t = int(target[i, j])
            if t == ignore:
                continue
            num += weights[i, j] * -math.log(max(pred[t, i, j], 1e-12))
            cnt += 1
            mass += weights[i, j]
    if cnt == 0:
        return 0.0
    return num / (cnt if norm == "all_pixels" else max(mass, 1.0))


def test_uniform_two_class_pixel():
    p = np.full((2, 1, 1), 0.5)
    assert abs(weighted_ce(p, np.zeros((1, 1), int), np.ones((1, 1))) - math.log(2)) <= 1e-12


@pytest.mark.parametrize("norm", ["all_pixels", "selected_mass"])
def test_matches_loop_oracle(norm):
    rng = np.random.default_rng(0)
    pred = rng.dirichlet(np.ones(5), size=(6, 7)).transpose(2, 0, 1)
    target = rng.integers(0, 5, size=(6, 7))
    target[0, :3] = 255
    w = rng.random((6, 7))
    got = weighted_ce(pred, target, w, norm)
    assert got == pytest.approx(_oracle(pred, target, w, norm), rel=1e-12)


def test_linear_in_weights_and_zero_weight():
    rng = np.random.default_rng(1)
    pred = rng.dirichlet(np.ones(3), size=(4, 4)).transpose(2, 0, 1)
    t = rng.integers(0, 3, size=(4, 4))
    w1, w2 = rng.random((4, 4)), rng.random((4, 4))
    lhs = weighted_ce(pred, t, 0.3 * w1 + 0.7 * w2)
    rhs = 0.3 * weighted_ce(pred, t, w1) + 0.7 * weighted_ce(pred, t, w2)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert weighted_ce(pred, t, np.zeros((4, 4))) == 0.0


def test_all_ignored_and_zero_probability():
    pred = np.array([[[1.0]], [[0.0]]])
    assert weighted_ce(pred, np.full((1, 1), 255), np.ones((1, 1))) == 0.0
    # log is floored, so a zero target probability gives a large finite value
    v = weighted_ce(pred, np.ones((1, 1), int), np.ones((1, 1)))
    assert v == pytest.approx(-math.log(1e-12))


def test_selected_mass_floor():
    p = np.full((2, 1, 2), 0.5)
    # total weight 0.2 < 1 so the denominator is 1
    v = weighted_ce(p, np.zeros((1, 2), int), np.array([[0.1, 0.1]]), "selected_mass")
    assert v == pytest.approx(0.2 * math.log(2))


def test_supervised_and_breakdown():
    p = np.full((4, 2, 2), 0.25)
    t = np.zeros((2, 2), int)
    assert supervised_ce(p, t) == pytest.approx(math.log(4))
    b = loss_breakdown(t, np.ones((2, 2)), p, pred_masked=np.full((4, 2, 2), 0.25), pred_labeled=p, labels=t)
    assert b.l_u == pytest.approx(math.log(4))
    assert b.l_sup == pytest.approx(math.log(4))
    assert set(b.as_dict()) == {"l_sup", "l_u_a", "l_u_m", "l_u", "lambda1", "lambda2", "pixel_norm"}
    b2 = loss_breakdown(t, np.ones((2, 2)), p, lambda1=1.0, lambda2=0.0)
    assert b2.l_sup == 0.0 and b2.l_u == pytest.approx(math.log(4))


def test_combined_defaults_and_errors():
    assert combined_unsupervised(2.0, 4.0) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        combined_unsupervised(1.0, 1.0, -0.1, 1.0)
    p = np.full((2, 2, 2), 0.5)
    with pytest.raises(ValueError):
        weighted_ce(p, np.zeros((2, 3), int), np.ones((2, 2)))
    with pytest.raises(ValueError):
        weighted_ce(p, np.full((2, 2), 2), np.ones((2, 2)))
    with pytest.raises(ValueError):
        weighted_ce(p, np.zeros((2, 2), int), np.ones((2, 2)), norm="mean")
