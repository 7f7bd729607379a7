# svann-interpretation/services/metric_services.py

from functools import reduce
from typing import Iterable, List, Sequence

import numpy as np
import pandas as pd

from models.metric_models import METRIC_COLUMNS, ConfusionMatrix, MetricRow, MetricSummary
from models.raster_models import MASK_NODATA, Mask
from utility.exceptions import DataError
from utility.logging import setup_logger

logger = setup_logger(__name__)


def confusion(pred: Mask, truth: Mask) -> ConfusionMatrix:
    """Counts over pixels where neither mask is nodata."""
    if pred.values.shape != truth.values.shape:
        raise DataError(f"confusion: prediction {pred.values.shape} and truth {truth.values.shape} differ")
    p = pred.values
    t = truth.values
    valid = (p != MASK_NODATA) & (t != MASK_NODATA)
    p1 = valid & (p == 1)
    t1 = valid & (t == 1)
    tp = int(np.count_nonzero(p1 & t1))
    fp = int(np.count_nonzero(p1 & ~t1))
    fn = int(np.count_nonzero(t1 & ~p1))
    tn = int(np.count_nonzero(valid)) - tp - fp - fn
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def merge(matrices: Iterable[ConfusionMatrix]) -> ConfusionMatrix:
    return reduce(lambda a, b: a + b, matrices, ConfusionMatrix())


def _ratio(num: int, den: int, name: str, degenerate: List[str]) -> float:
    if den == 0:
        degenerate.append(name)
        return 0.0
    return num / den


def summarize(cm: ConfusionMatrix) -> MetricSummary:
    """Precision, recall, F1 and pixel accuracy; 0/0 gives 0 and is flagged."""
    degenerate: List[str] = []
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", degenerate)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", degenerate)
    if precision + recall == 0:
        degenerate.append("f1")
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    accuracy = _ratio(cm.tp + cm.tn, cm.total, "accuracy", degenerate)
    if degenerate:
        logger.warning(f"Degenerate metrics {degenerate} for counts {cm.model_dump()}")
    return MetricSummary(precision=precision, recall=recall, f1=f1, accuracy=accuracy, degenerate=degenerate)


def metric_row(model: str, zone: str, cm: ConfusionMatrix) -> MetricRow:
    s = summarize(cm)
    return MetricRow(
        model=model, zone=zone, tn=cm.tn, fp=cm.fp, fn=cm.fn, tp=cm.tp,
        precision=s.precision, recall=s.recall, f1=s.f1, accuracy=s.accuracy,
    )


def rows_to_frame(rows: Sequence[MetricRow]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in rows], columns=METRIC_COLUMNS)
