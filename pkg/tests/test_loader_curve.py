import pytest

from errors import CurveFormatError
from process.detector import DeadTimeCurve
from utils.loader_curve import get_curve_path, load_curve_csv, save_curve_csv


def test_presets_load():
    assert load_curve_csv(get_curve_path("default")) == DeadTimeCurve.default()
    flat = load_curve_csv(get_curve_path("flat"))
    assert set(flat.dead_times) == {23.3e-9}


def test_unknown_preset():
    with pytest.raises(CurveFormatError):
        get_curve_path("steep")


def test_save_and_load(tmp_path):
    curve = DeadTimeCurve.from_points([(0.0, 20e-9), (5e6, 22.5e-9), (9e7, 30e-9)])
    path = save_curve_csv(curve, str(tmp_path / "curves" / "c.csv"))
    assert load_curve_csv(path) == curve


@pytest.mark.parametrize("text", [
    "rate,td\n0,2e-8\n",
    "lambda_cps,t_d_seconds\n0,abc\n",
    "lambda_cps,t_d_seconds\n0,2e-8,1\n",
    "lambda_cps,t_d_seconds\n5e6,2e-8\n1e6,2e-8\n",
    "lambda_cps,t_d_seconds\n0,2e-8\nnan,2.5e-8\n",
    "lambda_cps,t_d_seconds\n0,2e-8\n1e6,inf\n",
    "",
])
def test_malformed_curve_files(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(CurveFormatError):
        load_curve_csv(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_curve_csv(str(tmp_path / "none.csv"))
