import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hppnet import tensor as tn
from hppnet.data import PianoRollTargets
from hppnet.loss import EPS, LossShapeError, bce, total_loss
from hppnet.tensor import Tensor


def _pred(arrs, grad=False):
    return {k: Tensor(a, requires_grad=grad) for k, a in zip(("onset", "frame", "offset", "velocity"), arrs)}


def test_bce_perfect_prediction():
    assert bce(1, 1.0, 2.0) < 1e-6
    assert bce(0, 0.0, 1.0) < 1e-6


def test_bce_weight_only_on_positive_term():
    assert bce(0, 0.5, 2.0) == pytest.approx(-math.log(0.5), abs=1e-12)
    assert bce(1, 0.5, 2.0) == pytest.approx(-2 * math.log(0.5), abs=1e-12)
    assert bce(0, 0.5, 2.0) == pytest.approx(0.6931, abs=1e-4)
    assert bce(1, 0.5, 2.0) == pytest.approx(1.3863, abs=1e-4)


def test_single_cell_breakdown(f64):
    ones = np.ones((1, 1))
    tg = PianoRollTargets(ones, ones, ones, np.full((1, 1), 0.8))
    half = np.full((1, 1), 0.5)
    total, br = total_loss(_pred([half] * 4), tg)
    assert br.onset == pytest.approx(2 * math.log(2), abs=1e-6)
    assert br.frame == pytest.approx(math.log(2), abs=1e-6)
    assert br.offset == pytest.approx(math.log(2), abs=1e-6)
    assert br.velocity == pytest.approx(0.09, abs=1e-6)
    assert br.total == pytest.approx(2.8625, abs=1e-4)
    assert float(total.data) == pytest.approx(br.total, abs=1e-12)


def test_perfect_predictions_bounded(f64, rng):
    bits = [rng.integers(0, 2, (6, 88)).astype(float) for _ in range(3)]
    v = rng.uniform(0, 1, (6, 88)) * bits[0]
    _, br = total_loss(_pred([*bits, v]), PianoRollTargets(*bits, v))
    bound = 6 * 88 * 2 * -math.log(1 - EPS) * 1.01
    for part in (br.onset, br.frame, br.offset):
        assert part <= bound
    assert br.velocity == 0.0


def test_velocity_masked_when_no_onsets(f64, rng):
    z = np.zeros((4, 88))
    tg = PianoRollTargets(z, z, z, z)
    _, br = total_loss(_pred([np.full((4, 88), 0.3)] * 3 + [rng.uniform(0, 1, (4, 88))]), tg)
    assert br.velocity == 0.0


def test_velocity_gradient_exactly_zero_off_onsets(f64, rng):
    n = (rng.uniform(size=(5, 88)) < 0.2).astype(float)
    tg = PianoRollTargets(n, n, n, n * 0.7)
    pred = _pred([rng.uniform(0.1, 0.9, (5, 88)) for _ in range(4)], grad=True)
    total, _ = total_loss(pred, tg)
    tn.backward(total)
    g = pred["velocity"].grad
    assert np.all(g[n == 0] == 0.0)
    assert np.any(g[n == 1] != 0.0)


def test_batch_mean_of_clip_sums(f64, rng):
    arrs = [rng.uniform(0.05, 0.95, (3, 7, 88)) for _ in range(4)]
    bits = [(rng.uniform(size=(3, 7, 88)) < 0.3).astype(float) for _ in range(3)]
    tg = PianoRollTargets(*bits, bits[0] * 0.5)
    _, whole = total_loss(_pred(arrs), tg)
    per = [total_loss(_pred([a[i] for a in arrs]),
                      PianoRollTargets(*(getattr(tg, k)[i] for k in "nfov")))[1].total
           for i in range(3)]
    assert whole.total == pytest.approx(sum(per) / 3, rel=1e-12)


def test_shape_mismatch():
    z = np.zeros((2, 88))
    with pytest.raises(LossShapeError):
        total_loss(_pred([np.zeros((3, 88))] * 4), PianoRollTargets(z, z, z, z))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_components_non_negative(seed):
    r = np.random.default_rng(seed)
    with tn.default_dtype(np.float64):
        bits = [(r.uniform(size=(3, 88)) < 0.3).astype(float) for _ in range(3)]
        _, br = total_loss(_pred([r.uniform(0, 1, (3, 88)) for _ in range(4)]),
                           PianoRollTargets(*bits, bits[0] * r.uniform(size=(3, 88))))
    assert min(br.onset, br.frame, br.offset, br.velocity) >= 0
    assert br.total == pytest.approx(br.onset + br.frame + br.offset + br.velocity)
