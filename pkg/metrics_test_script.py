import numpy as np
import pytest

from models.metric_models import METRIC_COLUMNS, ConfusionMatrix
from models.raster_models import Mask
from services.metric_services import confusion, merge, metric_row, rows_to_frame, summarize
from utility.exceptions import DataError

# Published confusion counts with their printed precision, recall and F1.
# (model, tn, fp, fn, tp, precision, recall, f1)
PUBLISHED_ROWS = [
    ("Up-Model 1", 1114819, 432164, 763862, 2145603, 0.832, 0.737, 0.782),
    ("Up-Model 2", 240074, 1839944, 13532, 2362898, 0.562, 0.994, 0.718),
    ("Model 1", 94020, 27567, 30313, 126628, 0.821, 0.807, 0.814),
    ("Model 2", 87923, 33664, 57227, 99714, 0.748, 0.635, 0.687),
    ("Up-Model 3", 2266152, 847533, 581179, 1351408, 0.615, 0.699, 0.654),
    ("Up-Model 4", 2423985, 689700, 455228, 1477359, 0.682, 0.764, 0.721),
    ("Model 3", 222181, 63466, 11497, 18248, 0.223, 0.613, 0.327),
    ("Model 4", 237436, 48211, 8830, 20915, 0.303, 0.703, 0.423),
    ("SVANN Model 1", 695391, 522235, 255792, 2983030, 0.851, 0.921, 0.885),
    ("SVANN Model 2", 874312, 672671, 249550, 2659915, 0.798, 0.914, 0.852),
    ("Rule-based Model 1 (forested)", 1066717, 480266, 403777, 2505688, 0.839, 0.861, 0.850),
    ("Rule-based Model 2 (forested)", 1115080, 431903, 518482, 2390983, 0.847, 0.822, 0.834),
    ("OSFA Model (forested)", 736624, 481002, 258417, 2980405, 0.861, 0.920, 0.890),
    ("SVANN Model 3", 2074210, 1039475, 405994, 1526593, 0.595, 0.790, 0.679),
    ("SVANN Model 4", 2586145, 527540, 461125, 1471462, 0.736, 0.761, 0.749),
    ("Rule-based Model 1 (lakes)", 2313277, 800408, 467235, 1465352, 0.647, 0.758, 0.698),
    ("Rule-based Model 2 (lakes)", 2413404, 700281, 536717, 1395870, 0.666, 0.722, 0.693),
    ("OSFA Model (lakes)", 2608688, 504997, 495945, 1436642, 0.740, 0.743, 0.742),
]


def masks(pred, truth):
    return Mask.from_array(np.array(pred, dtype=np.uint8)), Mask.from_array(np.array(truth, dtype=np.uint8))


# ----------------------------------------------------------------------
# --- CONFUSION COUNTS ---
# ----------------------------------------------------------------------

def test_confusion_all_ones():
    """#1 Success: identical all-wetland masks count every pixel as a true positive."""
    cm = confusion(*masks([[1, 1, 1]], [[1, 1, 1]]))
    assert (cm.tp, cm.tn, cm.fp, cm.fn) == (3, 0, 0, 0)


def test_confusion_complement():
    """#2 Success: a prediction that inverts the truth has no correct pixels."""
    cm = confusion(*masks([[1, 0, 1, 0]], [[0, 1, 0, 1]]))
    assert cm.tp == 0 and cm.tn == 0
    assert cm.fp + cm.fn == 4


def test_confusion_hand_enumeration():
    """#3 Success: pred [1,1,0,0] against truth [1,0,1,0] gives one of each outcome."""
    cm = confusion(*masks([[1, 1], [0, 0]], [[1, 0], [1, 0]]))
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (1, 1, 1, 1)


def test_confusion_skips_nodata():
    """#4 Edge: pixels that are nodata in either mask are left out of the counts."""
    cm = confusion(*masks([[1, 255, 0, 1]], [[1, 1, 255, 0]]))
    assert cm.total == 2
    assert (cm.tp, cm.fp) == (1, 1)


def test_confusion_shape_mismatch():
    """#5 Failure: masks of different sizes cannot be compared."""
    pred = Mask.from_array(np.zeros((2, 2), dtype=np.uint8))
    truth = Mask.from_array(np.zeros((2, 3), dtype=np.uint8))
    with pytest.raises(DataError):
        confusion(pred, truth)


def test_merge_adds_counts():
    """#6 Success: merged matrices sum their counts field by field."""
    total = merge([ConfusionMatrix(tp=1, tn=2), ConfusionMatrix(fp=3, fn=4, tp=5)])
    assert (total.tp, total.tn, total.fp, total.fn) == (6, 2, 3, 4)


# ----------------------------------------------------------------------
# --- SUMMARY METRICS ---
# ----------------------------------------------------------------------

@pytest.mark.parametrize("model,tn,fp,fn,tp,precision,recall,f1", PUBLISHED_ROWS, ids=[r[0] for r in PUBLISHED_ROWS])
def test_published_rows_reproduce(model, tn, fp, fn, tp, precision, recall, f1):
    """#7 Success: every published model row reproduces its printed scores to within rounding."""
    s = summarize(ConfusionMatrix(tn=tn, fp=fp, fn=fn, tp=tp))
    assert s.precision == pytest.approx(precision, abs=1e-3)
    assert s.recall == pytest.approx(recall, abs=1e-3)
    assert s.f1 == pytest.approx(f1, abs=1e-3)
    assert s.degenerate == []


def test_symmetric_counts():
    """#8 Success: one of each outcome scores 0.5 everywhere."""
    s = summarize(ConfusionMatrix(tp=1, tn=1, fp=1, fn=1))
    assert (s.precision, s.recall, s.f1, s.accuracy) == (0.5, 0.5, 0.5, 0.5)


def test_f1_is_harmonic_mean():
    """#9 Success: F1 equals 2 / (1/P + 1/R)."""
    s = summarize(ConfusionMatrix(tp=37, tn=12, fp=9, fn=21))
    assert s.f1 == pytest.approx(2 / (1 / s.precision + 1 / s.recall), abs=1e-12)


def test_more_true_positives_never_hurt():
    """#10 Success: raising tp with everything else fixed never lowers precision, recall or F1."""
    previous = summarize(ConfusionMatrix(tp=0, tn=5, fp=4, fn=6))
    for tp in range(1, 20):
        current = summarize(ConfusionMatrix(tp=tp, tn=5, fp=4, fn=6))
        assert current.precision >= previous.precision
        assert current.recall >= previous.recall
        assert current.f1 >= previous.f1
        previous = current


def test_degenerate_counts_are_flagged(mocker):
    """#11 Edge: 0/0 denominators give 0 and are named in the flag list, with a warning."""
    mock_logger = mocker.patch("services.metric_services.logger")
    s = summarize(ConfusionMatrix(tn=10))
    assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)
    assert s.accuracy == 1.0
    assert set(s.degenerate) == {"precision", "recall", "f1"}
    mock_logger.warning.assert_called_once()


def test_report_frame_columns():
    """#12 Success: report rows render with the fixed CSV column order."""
    row = metric_row("rule-ndvi", "A", ConfusionMatrix(tp=3, tn=4, fp=1, fn=2))
    frame = rows_to_frame([row])
    assert list(frame.columns) == METRIC_COLUMNS
    assert frame.iloc[0]["model"] == "rule-ndvi"
    assert frame.iloc[0]["tp"] == 3
