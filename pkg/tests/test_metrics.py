import itertools
import math
from dataclasses import replace

import numpy as np
import pytest

from hpunet.backend.rng import RngState
from hpunet.metrics.bootstrap import bootstrap_mean_std
from hpunet.metrics.distribution import (
    distance_matrix, ged2, hungarian_matched_iou, presence_fraction, presence_toggle_rate,
    sample_diversity,
)
from hpunet.metrics.evaluate import EvalSettings, evaluate_dataset
from hpunet.metrics.instance import (
    adapted_rand_error, ap50, average_precision, instance_confidences, labeling_ap50,
)
from hpunet.metrics.iou import AbsencePolicy, SampleSet, iou_fg, pairwise_iou
from hpunet.model.params import build_parameters
from hpunet.synthdata.instances import gen_instances
from hpunet.synthdata.lesions import gen_ambiguous_lesions

FG = (1,)


def _set(*maps, classes=FG, num_classes=2, policy=AbsencePolicy.ABSENCE_IS_ONE):
    return SampleSet.from_list([np.asarray(m) for m in maps], num_classes, classes, policy)


def _rand_oracle(pred, gt):
    """Ordered pixel pairs (self-pairs included) over gt foreground."""
    fg = np.flatnonzero(gt.reshape(-1) != 0)
    p, g = pred.reshape(-1)[fg], gt.reshape(-1)[fg]
    same_p = p[:, None] == p[None, :]
    same_g = g[:, None] == g[None, :]
    both = float((same_p & same_g).sum())
    precision, recall = both / same_p.sum(), both / same_g.sum()
    return 1.0 - 2 * precision * recall / (precision + recall)


A = np.array([[1, 1, 0, 0]])
B = np.array([[1, 0, 0, 0]])


class TestIoU:
    def test_identical(self):
        assert iou_fg(A, A, FG) == 1.0

    def test_both_empty_absence_is_one(self):
        empty = np.zeros((3, 3), dtype=int)
        assert iou_fg(empty, empty, FG, AbsencePolicy.ABSENCE_IS_ONE) == 1.0

    def test_both_empty_absence_excluded_is_undefined(self):
        empty = np.zeros((3, 3), dtype=int)
        assert iou_fg(empty, empty, FG, AbsencePolicy.ABSENCE_EXCLUDED) is None

    def test_shifted_block(self):
        a = np.array([[1, 1, 0, 0], [1, 1, 0, 0]])
        b = np.array([[0, 1, 1, 0], [0, 1, 1, 0]])
        assert iou_fg(a, b, FG) == pytest.approx(2 / 6)

    def test_one_sided_absence_is_zero(self):
        assert iou_fg(A, np.zeros_like(A), FG) == 0.0

    def test_ignored_pixels_excluded(self):
        ignore = np.array([[False, True, False, False]])
        assert iou_fg(A, B, FG, ignore=ignore) == 1.0

    def test_class_mean_with_skipped_class(self):
        a = np.array([[1, 1, 0]])
        b = np.array([[1, 0, 0]])
        assert iou_fg(a, b, (1, 2), AbsencePolicy.ABSENCE_EXCLUDED) == pytest.approx(0.5)
        assert iou_fg(a, b, (1, 2), AbsencePolicy.ABSENCE_IS_ONE) == pytest.approx(0.75)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            iou_fg(A, np.zeros((2, 2)), FG)

    def test_symmetric_on_random_maps(self):
        rng = RngState(0)
        a, b = rng.integers(3, size=(5, 6)), rng.integers(3, size=(5, 6))
        assert iou_fg(a, b, (1, 2)) == pytest.approx(iou_fg(b, a, (1, 2)))

    def test_pairwise_matches_single(self):
        rng = RngState(1)
        maps_a, maps_b = rng.integers(3, size=(3, 4, 4)), rng.integers(3, size=(2, 4, 4))
        matrix = pairwise_iou(maps_a, maps_b, (1, 2))
        for i, j in itertools.product(range(3), range(2)):
            assert matrix[i, j] == pytest.approx(iou_fg(maps_a[i], maps_b[j], (1, 2)))

    def test_label_range_checked(self):
        with pytest.raises(ValueError):
            SampleSet(np.full((1, 2, 2), 2), 2, FG)


class TestGed:
    def test_identical_single(self):
        assert ged2(_set(A), _set(A)) == 0.0

    def test_duplicates_collapse(self):
        assert ged2(_set(A), _set(A, A)) == 0.0

    def test_worked_example(self):
        assert distance_matrix(_set(A), _set(B))[0, 0] == pytest.approx(0.5)
        assert ged2(_set(A), _set(A, B)) == pytest.approx(0.25)

    def test_distinct_pairs_variant(self):
        assert ged2(_set(A), _set(A, B), within_pairs="distinct") == pytest.approx(0.0)

    def test_matches_double_sum(self):
        rng = RngState(2)
        model = [rng.integers(2, size=(4, 4)) for _ in range(3)]
        gt = [rng.integers(2, size=(4, 4)) for _ in range(4)]
        d = lambda x, y: 1.0 - iou_fg(x, y, FG)
        cross = sum(d(s, y) for s in model for y in gt) / 12
        within_s = sum(d(s, t) for s in model for t in model) / 9
        within_y = sum(d(y, z) for y in gt for z in gt) / 16
        assert ged2(_set(*model), _set(*gt)) == pytest.approx(2 * cross - within_s - within_y, abs=1e-12)

    def test_permutation_invariant_and_nonnegative(self):
        rng = RngState(3)
        for _ in range(10):
            model = [rng.integers(2, size=(4, 4)) for _ in range(3)]
            gt = [rng.integers(2, size=(4, 4)) for _ in range(2)]
            value = ged2(_set(*model), _set(*gt))
            assert value >= -1e-12
            assert ged2(_set(*model[::-1]), _set(*gt[::-1])) == pytest.approx(value)

    def test_empty_set(self):
        with pytest.raises(ValueError):
            SampleSet.from_list([], 2, FG)


class TestHungarian:
    def test_identical_sets(self):
        result = hungarian_matched_iou(_set(A, B), _set(A, B))
        assert result.mean_iou == 1.0
        assert sorted(result.pairs) == [(0, 0), (1, 1)]

    def test_single_vs_pair(self):
        result = hungarian_matched_iou(_set(A), _set(A, B))
        assert result.mean_iou == pytest.approx((1.0 + 0.5) / 2)
        assert len(result.pairs) == 2

    @pytest.mark.parametrize("na,nb", [(1, 4), (2, 3), (3, 3), (2, 6), (4, 4), (6, 6), (3, 6)])
    def test_matches_exhaustive_search(self, na, nb):
        rng = RngState(na * 10 + nb)
        a = _set(*[rng.integers(2, size=(4, 4)) for _ in range(na)])
        b = _set(*[rng.integers(2, size=(4, 4)) for _ in range(nb)])
        size = math.lcm(na, nb)
        iou = np.nan_to_num(pairwise_iou(a.maps, b.maps, FG), nan=1.0)
        tiled = iou[np.arange(size) % na][:, np.arange(size) % nb]
        best = max(tiled[np.arange(size), list(p)].mean() for p in itertools.permutations(range(size)))
        assert hungarian_matched_iou(a, b).mean_iou == pytest.approx(best, abs=1e-12)

    def test_lcm_cap(self):
        with pytest.raises(ValueError):
            hungarian_matched_iou(_set(A, A, A), _set(A, A, A, A), max_lcm=10)


class TestDiversityAndPresence:
    def test_diversity(self):
        assert sample_diversity(_set(A, A)) == 0.0
        assert sample_diversity(_set(A, B)) == pytest.approx(0.5)
        assert sample_diversity(_set(A)) == 0.0

    def test_presence(self):
        empty = np.zeros_like(A)
        samples = _set(A, empty, B, empty)
        assert presence_fraction(samples) == 0.5
        assert presence_toggle_rate(samples) == pytest.approx(4 / 6)


class TestAdaptedRand:
    def test_relabeling_is_perfect(self):
        gt = np.array([[1, 1, 0], [2, 2, 0]])
        pred = np.array([[7, 7, 3], [4, 4, 3]])
        assert adapted_rand_error(pred, gt) == pytest.approx(0.0)

    def test_all_merged(self):
        gt = np.array([[1, 1, 2, 2]])
        pred = np.ones_like(gt)
        # same-pred pairs 16, same-gt pairs 8, agreeing 8: P = 0.5, R = 1
        assert adapted_rand_error(pred, gt) == pytest.approx(1 - 2 * 0.5 / 1.5)
        assert adapted_rand_error(pred, gt) == pytest.approx(_rand_oracle(pred, gt))

    def test_matches_pair_oracle(self):
        rng = RngState(4)
        for size in (5, 17, 32):
            gt = rng.integers(4, size=(size, size))
            pred = rng.integers(5, size=(size, size))
            assert adapted_rand_error(pred, gt) == pytest.approx(_rand_oracle(pred, gt), abs=1e-12)

    def test_all_background(self):
        with pytest.raises(ValueError):
            adapted_rand_error(np.ones((2, 2)), np.zeros((2, 2)))


class TestAP:
    def test_perfect(self):
        gt = [np.array([[1, 0], [0, 0]], bool), np.array([[0, 0], [0, 1]], bool)]
        assert ap50([(gt[0], 0.9), (gt[1], 0.8)], gt) == 1.0

    def test_empty_predictions(self):
        assert ap50([], [np.ones((2, 2), bool)]) == 0.0

    def test_tp_then_fp(self):
        gt = [np.array([[1, 1], [0, 0]], bool)]
        fp = np.array([[0, 0], [1, 1]], bool)
        assert ap50([(fp, 0.1), (gt[0], 0.9)], gt) == 1.0

    def test_fp_then_tp(self):
        gt = [np.array([[1, 1], [0, 0]], bool)]
        fp = np.array([[0, 0], [1, 1]], bool)
        assert ap50([(fp, 0.9), (gt[0], 0.1)], gt) == pytest.approx(0.5)

    def test_iou_must_exceed_half(self):
        gt = [np.array([[1, 1, 0, 0]], bool)]
        half = np.array([[1, 0, 0, 0]], bool)
        assert ap50([(half, 1.0)], gt) == 0.0

    def test_average_precision_table(self):
        # TP, FP, TP with 2 gt: precision 1, 1/2, 2/3 at recall 1/2, 1/2, 1
        assert average_precision([True, False, True], 2) == pytest.approx(0.5 * 1.0 + 0.5 * 2 / 3)

    def test_labeling_ap_and_confidences(self):
        labeling = np.array([[1, 1, 0, 2]])
        probs = np.zeros((2, 2, 1, 4))
        probs[:, 1] = [[0.9, 0.7, 0.0, 0.4]]
        probs[:, 0] = 1 - probs[:, 1]
        conf = instance_confidences(labeling, probs, FG)
        assert conf == {1: pytest.approx(0.8), 2: pytest.approx(0.4)}
        gt = np.array([[1, 1, 0, 0]])
        assert labeling_ap50(labeling, conf, gt) == 1.0


class TestBootstrap:
    def test_constant_values(self):
        assert bootstrap_mean_std([0.3] * 5, 100, RngState(0)) == (pytest.approx(0.3), pytest.approx(0.0))

    def test_std_close_to_standard_error(self):
        values = RngState(1).normal((200,), dtype=np.float64)
        mean, std = bootstrap_mean_std(values, 2000, RngState(2))
        assert mean == pytest.approx(values.mean())
        assert std == pytest.approx(values.std() / np.sqrt(200), rel=0.15)


class TestEvaluate:
    def test_rerun_is_identical(self, tiny_params):
        dataset, _ = gen_ambiguous_lesions(3, size=24, seed=2)
        metrics = ["ged2", "hiou", "iourec", "diversity", "presence"]
        settings = EvalSettings(num_samples=3, bootstrap=20, seed=4)
        a = evaluate_dataset(tiny_params, dataset, metrics, settings)
        b = evaluate_dataset(tiny_params, dataset, metrics, settings)
        assert a.per_image == b.per_image
        assert [(s.mean, s.std, s.count) for s in a.summaries] == [(s.mean, s.std, s.count) for s in b.summaries]
        assert a.summaries[2].count == 3

    def test_instance_metrics(self, tiny_model_config):
        dataset = gen_instances(2, size=32, k_range=(2, 3), seed=1)
        config = replace(tiny_model_config, num_classes=dataset.num_classes)
        params = build_parameters(config, RngState(0))
        report = evaluate_dataset(params, dataset, ["rand", "ap50"], EvalSettings(num_samples=4, bootstrap=10))
        for s in report.summaries:
            assert s.count == 2 and 0.0 <= s.mean <= 1.0

    def test_unknown_metric(self, tiny_params):
        dataset, _ = gen_ambiguous_lesions(1, size=24)
        with pytest.raises(ValueError):
            evaluate_dataset(tiny_params, dataset, ["accuracy"], EvalSettings())
