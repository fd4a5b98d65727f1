import csv
import logging
import math
import os

from errors import CurveFormatError
from process.detector import DeadTimeCurve

logger = logging.getLogger(__name__)

# ===============================
# PATH CONFIG
# ===============================
# โฟลเดอร์เก็บตาราง dead time ที่มากับ repo (แก้ ENV ได้)
BASE_CURVE_DIR = os.environ.get(
    "RIE_CURVE_DIR", os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")
)

CURVE_FILES = {
    "default": "dead_time_curve_default.csv",  # anchored to the measured SPCM-AQRH response
    "flat": "dead_time_curve_flat.csv",        # nominal 23.3 ns at every rate
}

CURVE_HEADER = ["lambda_cps", "t_d_seconds"]


def get_curve_path(curve_key: str) -> str:
    """
    Full path of a shipped curve table.
    :param curve_key: "default" or "flat"
    """
    if curve_key not in CURVE_FILES:
        raise CurveFormatError(
            f"❌ Unknown curve key: {curve_key}. Use one of {list(CURVE_FILES.keys())}"
        )
    curve_path = os.path.join(BASE_CURVE_DIR, CURVE_FILES[curve_key])
    if not os.path.exists(curve_path):
        raise FileNotFoundError(f"❌ Curve file not found: {curve_path} (check RIE_CURVE_DIR)")
    return curve_path


def load_curve_csv(path: str) -> DeadTimeCurve:
    """Two columns lambda_cps,t_d_seconds with a header row, ascending in lambda."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"❌ Curve file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CURVE_HEADER:
            raise CurveFormatError(f"❌ {path}: header must be {','.join(CURVE_HEADER)}, got {header}")
        points = []
        for line_number, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                lam, t_d = (float(v) for v in row)
            except ValueError:
                raise CurveFormatError(f"❌ {path}: line {line_number}: bad row {row}") from None
            if not (math.isfinite(lam) and math.isfinite(t_d)):
                raise CurveFormatError(f"❌ {path}: line {line_number}: non-finite value in {row}")
            points.append((lam, t_d))
    if any(b[0] <= a[0] for a, b in zip(points, points[1:])):
        raise CurveFormatError(f"❌ {path}: rows must be sorted ascending by lambda_cps")
    curve = DeadTimeCurve.from_points(points)
    logger.info("✅ Using dead-time curve: %s (%d points)", path, len(curve))
    return curve


def save_curve_csv(curve: DeadTimeCurve, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_HEADER)
        for lam, t_d in curve.points():
            writer.writerow([repr(lam), repr(t_d)])
    return path
