import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfnet.metrics import (OVERLAY_COLORS, ConfusionCounts, confusion, fold, metrics,
                           render_overlay, render_rm_heatmap, write_metrics_csv)
from cfnet.tensor import ContractError

from oracles import confusion_loops, metrics_formula


class TestConfusion:
    def test_all_ones(self):
        c = confusion(np.ones((10, 10), int), np.ones((10, 10), int))
        assert c == ConfusionCounts(tp=100, fp=0, fn=0, tn=0)

    def test_total_disagreement(self, rng):
        g = (rng.uniform(size=(6, 6)) > 0.5).astype(int)
        c = confusion(1 - g, g)
        assert c.tp == 0 and c.tn == 0 and c.total == 36

    def test_loop_oracle(self, rng):
        p = (rng.uniform(size=(8, 8)) > 0.5).astype(np.uint8)
        g = (rng.uniform(size=(8, 8)) > 0.5).astype(np.uint8)
        c = confusion(p, g)
        assert (c.tp, c.fp, c.fn, c.tn) == confusion_loops(p, g)

    def test_non_binary(self):
        with pytest.raises(ContractError):
            confusion(np.array([[0, 2]]), np.array([[0, 1]]))

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            confusion(np.zeros((2, 2), int), np.zeros((3, 3), int))

    def test_fold_is_sum(self, rng):
        ps = [(rng.uniform(size=(4, 4)) > 0.5).astype(int) for _ in range(3)]
        gs = [(rng.uniform(size=(4, 4)) > 0.5).astype(int) for _ in range(3)]
        folded = fold(confusion(p, g) for p, g in zip(ps, gs))
        assert folded == confusion(np.concatenate(ps), np.concatenate(gs))


class TestMetrics:
    def test_hand_values(self):
        s = metrics(ConfusionCounts(tp=3, fp=1, fn=1, tn=5))
        assert s.iou == pytest.approx(0.6)
        assert s.precision == s.recall == s.f1 == pytest.approx(0.75)
        assert not s.degenerate

    def test_perfect(self):
        s = metrics(ConfusionCounts(tp=7, fp=0, fn=0, tn=2))
        assert (s.iou, s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0, 1.0)

    def test_empty_positive(self):
        s = metrics(ConfusionCounts(tn=10))
        assert (s.iou, s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0, 0.0)
        assert s.degenerate

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
    def test_formulas_and_f1_iou_identity(self, tp, fp, fn, tn):
        s = metrics(ConfusionCounts(tp, fp, fn, tn))
        iou, prec, rec, f1 = metrics_formula(tp, fp, fn)
        assert abs(s.iou - iou) <= 1e-12 and abs(s.precision - prec) <= 1e-12
        assert abs(s.recall - rec) <= 1e-12 and abs(s.f1 - f1) <= 1e-12
        assert abs(s.f1 - 2 * s.iou / (1 + s.iou)) <= 1e-12

    def test_permutation_invariance(self, rng):
        p = (rng.uniform(size=(9, 9)) > 0.4).astype(int)
        g = (rng.uniform(size=(9, 9)) > 0.6).astype(int)
        perm = rng.permutation(81)
        a = metrics(confusion(p, g))
        b = metrics(confusion(p.ravel()[perm], g.ravel()[perm]))
        assert a == b


class TestRendering:
    def test_all_true_positive_is_white(self):
        img = render_overlay(np.ones((3, 3), int), np.ones((3, 3), int))
        assert img.dtype == np.uint8 and np.all(img == 255)

    def test_false_positive_is_green(self):
        img = render_overlay(np.ones((2, 2), int), np.zeros((2, 2), int))
        assert np.all(img == np.array([0, 255, 0], np.uint8))

    def test_truth_table(self):
        pred = np.array([[1, 0], [1, 0]])
        gt = np.array([[1, 0], [0, 1]])
        img = render_overlay(pred, gt)
        assert tuple(img[0, 0]) == OVERLAY_COLORS["tp"] == (255, 255, 255)
        assert tuple(img[0, 1]) == OVERLAY_COLORS["tn"] == (0, 0, 0)
        assert tuple(img[1, 0]) == OVERLAY_COLORS["fp"] == (0, 255, 0)
        assert tuple(img[1, 1]) == OVERLAY_COLORS["fn"] == (255, 0, 0)

    def test_heatmap_ends_and_midpoint(self):
        assert np.all(render_rm_heatmap(np.zeros((2, 2))) == [0, 0, 255])
        assert np.all(render_rm_heatmap(np.ones((2, 2))) == [255, 0, 0])
        assert tuple(render_rm_heatmap(np.array([[0.5]]))[0, 0]) == (127, 0, 128)


def test_csv_columns(tmp_path):
    s = metrics(ConfusionCounts(3, 1, 1, 5))
    path = write_metrics_csv(tmp_path / "m.csv", {"test": s})
    lines = path.read_text().splitlines()
    assert lines[0] == "split,iou,f1,recall,precision"
    assert lines[1] == "test,0.600000,0.750000,0.750000,0.750000"
