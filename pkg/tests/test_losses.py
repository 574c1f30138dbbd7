import math

import numpy as np
import pytest

from tsgscada.autograd import Tensor
from tsgscada.head import AnchorSet, HeadOutput, encode_offsets, refine
from tsgscada.losses import (balanced_bce, boundary_loss, build_targets, iou_loss, loss_terms,
                             offset_loss, segment_iou, total_loss)

EPS = 1e-7


def bce_oracle(p, g):
    """Plain loops over frames."""
    L = len(g)
    npos = sum(1 for x in g if x == 1)
    nneg = L - npos
    a_pos = L / (2 * npos) if npos else 0.0
    a_neg = L / (2 * nneg) if nneg else 0.0
    if npos == 0:
        a_neg = 1.0
    if nneg == 0:
        a_pos = 1.0
    s = 0.0
    for pi, gi in zip(p, g):
        pi = min(max(pi, EPS), 1 - EPS)
        s += a_pos * gi * math.log(pi) + a_neg * (1 - gi) * math.log(1 - pi)
    return -s / L


def smooth_l1_oracle(x):
    return 0.5 * x * x if abs(x) < 1 else abs(x) - 0.5


def offset_oracle(off, target, cls):
    pos = [i for i in range(len(cls)) if cls[i] == 1]
    if not pos:
        return 0.0
    s = 0.0
    for i in pos:
        for j in range(4):
            s += smooth_l1_oracle(off[i][j] - target[i][j])
    return s / (4 * len(pos))


def random_case(rng, L=20):
    g = (rng.random(L) < rng.uniform(0.1, 0.6)).astype(float)
    if not g.any():
        g[rng.integers(L)] = 1.0
    return rng.uniform(0.001, 0.999, L), g


def test_bce_half_half_is_ln2():
    p = np.full(10, 0.5)
    g = np.array([1.0] * 5 + [0.0] * 5)
    assert balanced_bce(p, g).item() == pytest.approx(math.log(2), abs=1e-12)


def test_bce_equals_standard_when_balanced():
    rng = np.random.default_rng(0)
    p = rng.uniform(0.05, 0.95, 12)
    g = np.array([1.0, 0.0] * 6)
    standard = -np.mean(g * np.log(p) + (1 - g) * np.log(1 - p))
    assert balanced_bce(p, g).item() == pytest.approx(standard, abs=1e-12)


def test_bce_perfect_predictions_near_zero():
    g = np.array([1.0, 0.0, 0.0, 1.0, 0.0])
    p = np.where(g > 0, 1.0, 0.0)
    assert balanced_bce(p, g).item() < 1e-5


def test_bce_matches_summation_oracle_50_cases():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p, g = random_case(rng)
        assert abs(balanced_bce(p, g).item() - bce_oracle(p, g)) < 1e-12


def test_bce_vanished_class_warns(caplog):
    g = np.zeros(6)
    p = np.full(6, 0.3)
    with caplog.at_level("WARNING"):
        v = balanced_bce(p, g).item()
    assert "without positives" in caplog.text
    assert v == pytest.approx(bce_oracle(p, g), abs=1e-12)


def test_boundary_loss_oracle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        ps, gs = random_case(rng)
        pe, ge = random_case(rng)
        expect = bce_oracle(ps, gs) + bce_oracle(pe, ge)
        assert abs(boundary_loss(ps, pe, gs, ge).item() - expect) < 1e-12


def test_iou_loss_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        score, cls = random_case(rng, 15)
        target = rng.uniform(0, 1, 15)
        mse = sum((s - t) ** 2 for s, t in zip(score, target)) / 15
        assert abs(iou_loss(score, target, cls).item() - (bce_oracle(score, cls) + mse)) < 1e-12


def test_iou_loss_examples():
    score = np.full(8, 0.5)
    cls = np.array([1.0, 0.0] * 4)
    assert iou_loss(score, score, cls).item() == pytest.approx(math.log(2), abs=1e-12)
    sat = np.array([1.0, 0.0] * 4)
    assert iou_loss(sat, sat, sat).item() < 1e-5


def test_offset_loss_examples():
    cls = np.array([1.0])
    zero = np.zeros((1, 4))
    assert offset_loss(np.full((1, 4), 0.5), zero, cls).item() == pytest.approx(0.125)
    assert offset_loss(np.full((1, 4), 2.0), zero, cls).item() == pytest.approx(1.5)
    assert offset_loss(np.ones((3, 4)), np.full((3, 4), np.nan), np.zeros(3)).item() == 0.0


def test_offset_loss_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        cls = (rng.random(10) < 0.3).astype(float)
        off = rng.normal(0, 1.5, (10, 4))
        tgt = np.where(cls[:, None] > 0, rng.normal(0, 1, (10, 4)), np.nan)
        assert abs(offset_loss(off, tgt, cls).item()
                   - offset_oracle(off.tolist(), tgt.tolist(), cls.tolist())) < 1e-12


def fake_output(rng, n, t, lv):
    return HeadOutput(Tensor(rng.uniform(0.01, 0.99, (n, t))), Tensor(rng.uniform(0.01, 0.99, (n, t))),
                      Tensor(rng.uniform(0.01, 0.99, (n, lv))), Tensor(rng.normal(size=(n, lv, 4))))


def test_total_is_sum_of_terms():
    rng = np.random.default_rng(5)
    anchors = AnchorSet(32, (4, 8, 16))
    targets = [build_targets((3, 11), anchors), build_targets((20, 29), anchors)]
    from tsgscada.losses import SupervisionTargets
    tg = SupervisionTargets.stack(targets)
    out = fake_output(rng, 2, 32, len(anchors))
    lb, li, lo = loss_terms(out, tg)
    separate = []
    for i in range(2):
        r, t = out.row(i), targets[i]
        separate.append(boundary_loss(r.start_prob, r.end_prob, t.start_label, t.end_label).item()
                        + iou_loss(r.iou_score, t.iou_target, t.iou_class).item()
                        + offset_loss(r.offsets, t.offset_target, t.iou_class).item())
    assert abs(total_loss(out, tg).item() - np.mean(separate)) < 1e-12
    np.testing.assert_allclose((lb + li + lo).data, separate, atol=1e-12)
    assert total_loss(out, tg).item() >= 0


def test_loss_invariant_to_anchor_permutation():
    rng = np.random.default_rng(6)
    anchors = AnchorSet(32, (4, 8, 16))
    t = build_targets((5, 13), anchors)
    out = fake_output(rng, 1, 32, len(anchors)).row(0)
    perm = rng.permutation(len(anchors))
    a = iou_loss(out.iou_score, t.iou_target, t.iou_class).item() + \
        offset_loss(out.offsets, t.offset_target, t.iou_class).item()
    b = iou_loss(out.iou_score[perm], t.iou_target[perm], t.iou_class[perm]).item() + \
        offset_loss(out.offsets[perm], t.offset_target[perm], t.iou_class[perm]).item()
    assert a == pytest.approx(b, abs=1e-12)


def test_build_targets_labels():
    anchors = AnchorSet(32, (4, 8, 16))
    t = build_targets((8, 16), anchors)
    assert np.flatnonzero(t.start_label).tolist() == [7, 8, 9]
    assert np.flatnonzero(t.end_label).tolist() == [14, 15, 16]
    np.testing.assert_allclose(t.iou_target, segment_iou(anchors.segments, (8, 16)))
    assert t.iou_class.sum() >= 1
    pos = np.flatnonzero(t.iou_class)
    assert np.isnan(t.offset_target[t.iou_class == 0]).all()
    for i in pos:
        assert refine(anchors.segments[i], t.offset_target[i]) == pytest.approx((8, 16), abs=1e-9)


def test_build_targets_promotes_best_anchor():
    anchors = AnchorSet(32, (8,))
    t = build_targets((2, 5), anchors)      # no anchor reaches 0.7
    assert (t.iou_target < 0.7).all()
    assert t.iou_class.sum() >= 1
    assert t.iou_target[t.iou_class > 0].min() == t.iou_target.max()


def test_encode_offsets_shape():
    assert encode_offsets((10, 20), (10, 20)) == pytest.approx([0, 0, 0, 0])
