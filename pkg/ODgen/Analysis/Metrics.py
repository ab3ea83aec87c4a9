import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sortedcontainers import SortedList

from ODgen.Core.BBox import BBox2D
from ODgen.Errors.AnnotationParsingError import AnnotationParsingError
from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.UnknownCategoryError import UnknownCategoryError

logger = logging.getLogger(__name__)

IOU_THRESHOLDS = np.linspace(0.5, 0.95, 10)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
ROW_LABELS = {'map': "Prec [mAP]", 'map_50': "Prec [mAP@0.5]", 'map_75': "Prec [mAP@0.75]", 'ar_100': "Acc [@100]"}


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: BBox2D
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvalidParamError("score", self.score, "within [0, 1]")

    @property
    def order_key(self) -> tuple:
        """
        Descending score, ties broken by image id and then the box coordinates.
        """
        return -self.score, self.image_id, self.bbox

    def to_dict(self) -> dict:
        return {'image_id': self.image_id, 'category_id': self.category_id, 'bbox': self.bbox.to_xywh(),
                'score': self.score}

    @staticmethod
    def from_dict(data: dict) -> 'Detection':
        return Detection(int(data['image_id']), int(data['category_id']), BBox2D.from_xywh(data['bbox']),
                         float(data['score']))


@dataclass(frozen=True)
class GroundTruth:
    image_id: int
    category_id: int
    bbox: BBox2D

    @staticmethod
    def from_record(record) -> 'GroundTruth':
        return GroundTruth(record.image_id, record.category_id, record.box)


def iou(a: BBox2D, b: BBox2D) -> float:
    """
    Intersection over union, 0 when the union is empty.
    """
    width = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    height = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    intersection = max(width, 0.0) * max(height, 0.0)
    union = a.area + b.area - intersection
    if union <= 0:
        return 0.0
    return intersection / union


def match_detections(detections: list, ground_truths: list, iou_threshold: float) -> np.ndarray:
    """
    Greedy matching in detection order.

    A detection takes the unmatched ground truth of its image with the highest IoU, provided
    the IoU reaches the threshold; equal IoUs go to the ground truth listed first.

    :param detections: Detections of one category in evaluation order
    :param ground_truths: GroundTruths of the same category
    :param iou_threshold: minimal IoU of a match
    :return: boolean true-positive flag per detection
    """
    by_image = dict()
    for gt in ground_truths:
        by_image.setdefault(gt.image_id, []).append(gt)
    matched = {image_id: [False] * len(gts) for image_id, gts in by_image.items()}

    flags = np.zeros(len(detections), dtype=bool)
    for k, detection in enumerate(detections):
        best, best_iou = None, iou_threshold
        for j, gt in enumerate(by_image.get(detection.image_id, [])):
            if matched[detection.image_id][j]:
                continue
            overlap = iou(detection.bbox, gt.bbox)
            if overlap >= best_iou and (best is None or overlap > best_iou):
                best, best_iou = j, overlap
        if best is not None:
            matched[detection.image_id][best] = True
            flags[k] = True
    return flags


def precision_recall(detections: list, ground_truths: list, iou_threshold: float) -> tuple:
    """
    :return: (precision, recall) arrays along the sorted detections
    """
    ordered = sorted(detections, key=lambda detection: detection.order_key)
    flags = match_detections(ordered, ground_truths, iou_threshold)
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / len(ground_truths) if ground_truths else np.zeros(len(flags))
    precision = tp / np.maximum(tp + fp, 1)
    return precision, recall


def average_precision(detections: list, ground_truths: list, iou_threshold: float) -> float:
    """
    101-point interpolated average precision of one category.

    The interpolated precision at recall r is the highest precision reached at any recall >= r,
    or 0 if recall r is never reached.

    :param detections: Detections of the category
    :param ground_truths: GroundTruths of the category, at least one
    :param iou_threshold: IoU needed for a true positive
    :return: AP in [0, 1]
    """
    if not detections:
        return 0.0
    precision, recall = precision_recall(detections, ground_truths, iou_threshold)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    positions = np.searchsorted(recall, RECALL_POINTS, side='left')
    interpolated = np.where(positions < len(recall), envelope[np.minimum(positions, len(recall) - 1)], 0.0)
    return float(interpolated.mean())


def final_recall(detections: list, ground_truths: list, iou_threshold: float) -> float:
    if not detections:
        return 0.0
    return float(precision_recall(detections, ground_truths, iou_threshold)[1][-1])


def limit_per_image(detections: list, max_dets: int) -> list:
    """
    The max_dets best detections of every image, in evaluation order.
    """
    per_image = dict()
    for detection in detections:
        per_image.setdefault(detection.image_id, SortedList(key=lambda d: d.order_key)).add(detection)
    return [detection for image_id in sorted(per_image) for detection in per_image[image_id][:max_dets]]


@dataclass
class MetricsReport:
    map: float
    map_50: float
    map_75: float
    ar_100: float
    per_category: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {'map': self.map, 'map_50': self.map_50, 'map_75': self.map_75, 'ar_100': self.ar_100,
                'per_category': {str(category): values for category, values in self.per_category.items()}}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'value': [getattr(self, key) for key in ROW_LABELS]}, index=list(ROW_LABELS.values()))

    def to_table(self) -> str:
        text = self.to_frame().to_string(float_format=lambda value: "{:.3f}".format(value))
        if self.per_category:
            categories = pd.DataFrame.from_dict(self.per_category, orient='index')
            text += "\n\n" + categories.to_string(float_format=lambda value: "{:.3f}".format(value))
        return text + "\n"


def evaluate(detections: list, ground_truth: list, max_dets: int = 100, categories: list = None) -> MetricsReport:
    """
    COCO-style box metrics: AP averaged over IoU thresholds 0.50:0.05:0.95, AP at 0.5 and 0.75,
    and recall averaged over the same thresholds keeping max_dets detections per image.
    Categories without ground truth are left out of the means.

    :param detections: list of Detection
    :param ground_truth: list of AnnotationRecord or GroundTruth
    :param max_dets: detections kept per image
    :param categories: [{'id', 'name'}], defaults to the categories present in the ground truth
    :return: MetricsReport
    """
    truths = [gt if isinstance(gt, GroundTruth) else GroundTruth.from_record(gt) for gt in ground_truth]
    if categories is None:
        categories = [{'id': category_id, 'name': str(category_id)}
                      for category_id in sorted({gt.category_id for gt in truths})]
    known = {category['id'] for category in categories}
    for detection in detections:
        if detection.category_id not in known:
            raise UnknownCategoryError(detection.category_id)

    kept = limit_per_image(detections, max_dets)
    per_category, ap_table, recall_table = dict(), [], []
    for category in categories:
        gts = [gt for gt in truths if gt.category_id == category['id']]
        if not gts:
            logger.info("category %s has no ground truth and is left out", category['id'])
            continue
        dets = [detection for detection in kept if detection.category_id == category['id']]
        aps = np.array([average_precision(dets, gts, t) for t in IOU_THRESHOLDS])
        recalls = np.array([final_recall(dets, gts, t) for t in IOU_THRESHOLDS])
        ap_table.append(aps)
        recall_table.append(recalls)
        per_category[category['id']] = {'name': category['name'], 'ap': float(aps.mean()), 'ap_50': float(aps[0]),
                                        'ap_75': float(aps[5]), 'ar_100': float(recalls.mean())}

    if not ap_table:
        return MetricsReport(0.0, 0.0, 0.0, 0.0)
    aps, recalls = np.array(ap_table), np.array(recall_table)
    return MetricsReport(float(aps.mean()), float(aps[:, 0].mean()), float(aps[:, 5].mean()),
                         float(recalls.mean()), per_category)


def load_detections(path: str) -> list:
    """
    Detections from a JSON array of {image_id, category_id, bbox: [x, y, w, h], score}.
    """
    with open(path) as detections_file:
        text = detections_file.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as error:
        raise AnnotationParsingError(error.msg, error.lineno, error.colno)
    if not isinstance(data, list):
        raise AnnotationParsingError("expected an array of detections")
    try:
        return [Detection.from_dict(entry) for entry in data]
    except KeyError as error:
        raise AnnotationParsingError("detection without field {}".format(error))
    except (TypeError, ValueError, InvalidParamError) as error:
        raise AnnotationParsingError("malformed detection: {}".format(error))


def save_detections(detections: list, path: str):
    with open(path, "w") as detections_file:
        detections_file.write(json.dumps([detection.to_dict() for detection in detections], indent=2) + "\n")
