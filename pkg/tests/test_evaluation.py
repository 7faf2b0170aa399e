import numpy as np
import pytest

from helpers import make_pool_dir
from simcurate import evaluation
from simcurate.dataset import BoundingBox, Dataset, ImageRecord
from simcurate.errors import ContractError


# ---------------------------------------------------------------------------
# Independent oracle: recomputes matching and the full PR table from scratch,
# integrating the precision envelope by explicit scanning over recall levels.
# ---------------------------------------------------------------------------

def oracle_iou(a, b):
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / ((ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter)


def oracle_evaluate(preds, truth_records, iou_threshold=0.5):
    truths = {}
    for rec_id, boxes in truth_records.items():
        for box in boxes:
            truths.setdefault(box[0], []).append((rec_id, box[1:], [False]))
    if not truths:
        raise ValueError("no truth")

    aps = {}
    for class_id, class_truths in truths.items():
        class_preds = [p for p in preds if p[1] == class_id]
        class_preds.sort(key=lambda p: (-p[2], p[0]))
        flags = []
        for img_id, _, conf, corners in [
            (p[0], p[1], p[2], p[3]) for p in class_preds
        ]:
            best, best_t = 0.0, None
            for t_img, t_corners, used in class_truths:
                if t_img != img_id or used[0]:
                    continue
                overlap = oracle_iou(corners, t_corners)
                if overlap >= iou_threshold and overlap > best:
                    best, best_t = overlap, used
            if best_t is not None:
                best_t[0] = True
                flags.append(True)
            else:
                flags.append(False)
        aps[class_id] = oracle_ap_from_flags(flags, len(class_truths))
    return aps, sum(aps.values()) / len(aps)


def oracle_ap_from_flags(flags, n_truth):
    points = []
    tp = fp = 0
    for flag in flags:
        tp += bool(flag)
        fp += not flag
        points.append((tp / n_truth, tp / (tp + fp)))
    ap = 0.0
    prev_recall = 0.0
    for recall in sorted({r for r, _ in points}):
        if recall <= prev_recall:
            continue
        best_precision = max(p for r, p in points if r >= recall)
        ap += (recall - prev_recall) * best_precision
        prev_recall = recall
    return ap


def _truth_dataset(tmp_path, truth_records):
    make_pool_dir(tmp_path, n=1)
    image = tmp_path / "images" / "000000.png"
    records = []
    for rec_id, boxes in truth_records.items():
        parsed = tuple(
            BoundingBox(
                class_id=c,
                cx=(x1 + x2) / 2,
                cy=(y1 + y2) / 2,
                w=x2 - x1,
                h=y2 - y1,
            )
            for (c, x1, y1, x2, y2) in boxes
        )
        records.append(
            ImageRecord(id=rec_id, image_path=image, width=48, height=48, boxes=parsed)
        )
    return Dataset(name="truth", role="test", records=tuple(records))


def _detections(preds):
    return [
        evaluation.Detection(
            image_id=img,
            class_id=cls,
            box=BoundingBox(
                class_id=cls, cx=(x1 + x2) / 2, cy=(y1 + y2) / 2, w=x2 - x1, h=y2 - y1
            ),
            confidence=conf,
        )
        for (img, cls, conf, (x1, y1, x2, y2)) in preds
    ]


class TestIoU:
    def test_identical(self):
        box = BoundingBox(class_id=0, cx=0.5, cy=0.5, w=0.2, h=0.2)
        assert evaluation.iou(box, box) == 1.0

    def test_disjoint(self):
        a = BoundingBox(class_id=0, cx=0.2, cy=0.2, w=0.1, h=0.1)
        b = BoundingBox(class_id=0, cx=0.8, cy=0.8, w=0.1, h=0.1)
        assert evaluation.iou(a, b) == 0.0

    def test_hand_case_one_seventh(self):
        # pixel corners (0,0,2,2) and (1,1,3,3): intersection 1, union 7
        assert evaluation.corner_iou((0, 0, 2, 2), (1, 1, 3, 3)) == pytest.approx(
            1 / 7, abs=1e-12
        )
        # same geometry normalized onto a 10x10 canvas
        a = BoundingBox(class_id=0, cx=0.1, cy=0.1, w=0.2, h=0.2)
        b = BoundingBox(class_id=0, cx=0.2, cy=0.2, w=0.2, h=0.2)
        assert evaluation.iou(a, b) == pytest.approx(1 / 7, abs=1e-12)

    def test_touching_edges_are_disjoint(self):
        assert evaluation.corner_iou((0, 0, 1, 1), (1, 0, 2, 1)) == 0.0


class TestEvaluate:
    def test_perfect_predictions(self, tmp_path):
        truth_records = {
            "a": [(0, 0.1, 0.1, 0.3, 0.3), (1, 0.5, 0.5, 0.7, 0.7)],
            "b": [(0, 0.2, 0.2, 0.4, 0.4)],
        }
        truth = _truth_dataset(tmp_path, truth_records)
        preds = _detections(
            [
                ("a", 0, 1.0, (0.1, 0.1, 0.3, 0.3)),
                ("a", 1, 1.0, (0.5, 0.5, 0.7, 0.7)),
                ("b", 0, 1.0, (0.2, 0.2, 0.4, 0.4)),
            ]
        )
        result = evaluation.evaluate(preds, truth)
        assert result.map50 == pytest.approx(1.0)
        assert all(ap == pytest.approx(1.0) for ap in result.per_class_ap.values())

    def test_no_predictions(self, tmp_path):
        truth = _truth_dataset(tmp_path, {"a": [(0, 0.1, 0.1, 0.3, 0.3)]})
        result = evaluation.evaluate([], truth)
        assert result.map50 == 0.0

    def test_empty_truth_rejected(self, tmp_path):
        truth = _truth_dataset(tmp_path, {"a": []})
        with pytest.raises(ContractError):
            evaluation.evaluate([], truth)

    def test_hand_case_half_ap(self, tmp_path):
        # 1 truth box; a disjoint FP at conf 0.9 outranks the TP at conf 0.8:
        # PR points (0, 0) then (1, 0.5); envelope area exactly 0.5
        truth = _truth_dataset(tmp_path, {"a": [(0, 0.1, 0.1, 0.3, 0.3)]})
        preds = _detections(
            [
                ("a", 0, 0.9, (0.6, 0.6, 0.8, 0.8)),
                ("a", 0, 0.8, (0.1, 0.1, 0.3, 0.3)),
            ]
        )
        result = evaluation.evaluate(preds, truth)
        assert result.map50 == pytest.approx(0.5, abs=1e-12)

    def test_unknown_pred_class_ignored(self, tmp_path):
        truth = _truth_dataset(tmp_path, {"a": [(0, 0.1, 0.1, 0.3, 0.3)]})
        preds = _detections(
            [
                ("a", 0, 0.9, (0.1, 0.1, 0.3, 0.3)),
                ("a", 7, 0.99, (0.1, 0.1, 0.3, 0.3)),
            ]
        )
        result = evaluation.evaluate(preds, truth)
        assert 7 not in result.per_class_ap
        assert result.map50 == pytest.approx(1.0)

    def test_each_truth_matched_once(self, tmp_path):
        truth = _truth_dataset(tmp_path, {"a": [(0, 0.1, 0.1, 0.3, 0.3)]})
        # two confident predictions on the same truth box: one TP, one FP
        preds = _detections(
            [
                ("a", 0, 0.9, (0.1, 0.1, 0.3, 0.3)),
                ("a", 0, 0.8, (0.1, 0.1, 0.3, 0.3)),
            ]
        )
        result = evaluation.evaluate(preds, truth)
        assert result.map50 == pytest.approx(1.0)  # TP first; FP after full recall

    def test_lower_confidence_added_prediction_keeps_labels(self, tmp_path):
        truth_records = {"a": [(0, 0.1, 0.1, 0.3, 0.3), (0, 0.5, 0.5, 0.7, 0.7)]}
        truth = _truth_dataset(tmp_path, truth_records)
        base = [
            ("a", 0, 0.9, (0.1, 0.1, 0.3, 0.3)),
            ("a", 0, 0.7, (0.6, 0.6, 0.8, 0.8)),
        ]
        extra = base + [("a", 0, 0.1, (0.5, 0.5, 0.7, 0.7))]
        flags_base = evaluation._match_class(
            sorted(_detections(base), key=lambda p: (-p.confidence, p.image_id)),
            _truths_by_image(truth, 0),
            0.5,
        )
        flags_extra = evaluation._match_class(
            sorted(_detections(extra), key=lambda p: (-p.confidence, p.image_id)),
            _truths_by_image(truth, 0),
            0.5,
        )
        assert flags_extra[: len(flags_base)] == flags_base

    def test_monotone_confidence_transform_invariance(self, tmp_path):
        rng = np.random.default_rng(17)
        truth_records, preds = _random_instance(rng)
        truth = _truth_dataset(tmp_path, truth_records)
        result_a = evaluation.evaluate(_detections(preds), truth)
        squeezed = [(img, cls, conf**2, corners) for (img, cls, conf, corners) in preds]
        result_b = evaluation.evaluate(_detections(squeezed), truth)
        assert result_a.map50 == pytest.approx(result_b.map50, abs=1e-12)

    def test_matches_oracle_on_random_instances(self, tmp_path):
        rng = np.random.default_rng(123)
        truth = None
        for trial in range(120):
            truth_records, preds = _random_instance(rng)
            truth = _truth_dataset(tmp_path / f"t{trial}", truth_records)
            expected_aps, expected_map = oracle_evaluate(preds, truth_records)
            result = evaluation.evaluate(_detections(preds), truth)
            assert result.map50 == pytest.approx(expected_map, abs=1e-9)
            for class_id, ap in expected_aps.items():
                assert result.per_class_ap[class_id] == pytest.approx(ap, abs=1e-9)


def _truths_by_image(truth, class_id):
    table = {}
    for record in truth.records:
        for box in record.boxes:
            if box.class_id == class_id:
                table.setdefault(record.id, []).append(box)
    return table


def _random_instance(rng):
    """Random eval instance: <=6 truth boxes, <=8 predictions, <=3 classes."""
    n_images = int(rng.integers(1, 3))
    n_classes = int(rng.integers(1, 4))
    truth_records = {}
    all_truths = []
    n_boxes = int(rng.integers(1, 7))
    for b in range(n_boxes):
        img = f"img{rng.integers(0, n_images)}"
        cls = int(rng.integers(0, n_classes))
        cx, cy = rng.uniform(0.25, 0.75, size=2)
        w, h = rng.uniform(0.1, 0.4, size=2)
        corners = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
        truth_records.setdefault(img, []).append((cls, *corners))
        all_truths.append((img, cls, corners))

    preds = []
    n_preds = int(rng.integers(0, 9))
    for _ in range(n_preds):
        conf = round(float(rng.uniform(0.05, 1.0)), 2)
        if all_truths and rng.random() < 0.6:
            img, cls, (x1, y1, x2, y2) = all_truths[rng.integers(0, len(all_truths))]
            jitter = rng.uniform(-0.05, 0.05, size=4)
            corners = (
                max(0.0, x1 + jitter[0]),
                max(0.0, y1 + jitter[1]),
                min(1.0, x2 + jitter[2]),
                min(1.0, y2 + jitter[3]),
            )
            if corners[2] - corners[0] < 0.01 or corners[3] - corners[1] < 0.01:
                continue
            if rng.random() < 0.2:
                cls = int(rng.integers(0, n_classes))
        else:
            img = f"img{rng.integers(0, n_images)}"
            cls = int(rng.integers(0, n_classes))
            cx, cy = rng.uniform(0.2, 0.8, size=2)
            w, h = rng.uniform(0.05, 0.3, size=2)
            corners = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
        preds.append((img, cls, conf, corners))
    return truth_records, preds


class TestPredictionsCsv:
    def test_round_trip(self, tmp_path):
        preds = _detections(
            [("a", 0, 0.25, (0.1, 0.1, 0.3, 0.3)), ("b", 2, 1.0, (0.5, 0.5, 0.9, 0.9))]
        )
        path = evaluation.write_predictions_csv(preds, tmp_path / "preds.csv")
        again = evaluation.load_predictions_csv(path)
        assert len(again) == 2
        assert again[0].image_id == "a" and again[1].class_id == 2
        assert again[0].confidence == pytest.approx(0.25)

    def test_bad_row_reports_line(self, tmp_path):
        path = tmp_path / "preds.csv"
        path.write_text("image_id,class_id,cx,cy,w,h,confidence\na,0,0.5,0.5,0.1,0.1,2.5\n")
        with pytest.raises(Exception, match=":2"):
            evaluation.load_predictions_csv(path)

    def test_result_json_shape(self):
        result = evaluation.EvalResult(per_class_ap={1: 0.5, 0: 1.0}, map50=0.75)
        doc = result.to_json()
        assert '"map50": 0.75' in doc
        assert doc.index('"0"') < doc.index('"1"')
