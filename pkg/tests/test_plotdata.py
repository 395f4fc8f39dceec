import numpy as np
import pytest

from quakeloc.evaluation import rows_from_predictions
from quakeloc.plotdata import HIST_BINS, emit_plot_data, histogram, histogram_csv, scatter_csv, station_map_svg


@pytest.fixture(scope="module")
def rows(small_samples):
    pred = np.random.default_rng(4).normal(0, 0.2, (len(small_samples), 2))
    half = len(small_samples) // 2
    return (rows_from_predictions(small_samples[:half], pred[:half], "train")
            + rows_from_predictions(small_samples[half:], pred[half:], "test"))


def test_scatter_has_one_line_per_row(rows):
    for coord in ("lat", "lon"):
        assert len(scatter_csv(rows, coord).splitlines()) == len(rows) + 1


def test_histogram_conserves_count():
    values = [1.0, 2.0, 2.0, 5.0, float("inf"), -3.0]
    counts, edges = histogram(values)
    assert counts.sum() == len(values) and len(edges) == HIST_BINS + 1
    lines = histogram_csv(values).splitlines()[1:]
    assert sum(int(line.rsplit(",", 1)[1]) for line in lines) == len(values)


def test_constant_values_histogram():
    counts, _ = histogram([7.0, 7.0, 7.0])
    assert counts.sum() == 3


def test_emit_writes_expected_files(rows, small_samples, tmp_path):
    history = [{"epoch": e, "train_loss": 1.0 / (e + 1), "val_loss": 1.2 / (e + 1)} for e in range(5)]
    written = emit_plot_data(tmp_path, rows=rows, samples=small_samples, history=history)
    names = {p.name for p in written}
    assert {"hist_snr_db.csv", "hist_epicentral_distance_km.csv", "hist_depth_km.csv", "hist_magnitude.csv",
            "scatter_lat_train.csv", "scatter_lon_test.csv", "station_map.csv", "station_map.svg",
            "scatter_lat.svg", "history.svg"} <= names
    n_train = sum(r.split == "train" for r in rows)
    assert len((tmp_path / "scatter_lat_train.csv").read_text().splitlines()) == n_train + 1
    hist = (tmp_path / "hist_magnitude.csv").read_text().splitlines()[1:]
    assert sum(int(line.rsplit(",", 1)[1]) for line in hist) == len(small_samples)


def test_svg_is_byte_deterministic(rows, tmp_path):
    emit_plot_data(tmp_path / "a", rows=rows)
    emit_plot_data(tmp_path / "b", rows=list(rows))
    for name in ("station_map.svg", "scatter_lat.svg", "scatter_lon.svg", "station_map.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert station_map_svg(rows).startswith("<svg")


def test_empty_report_rejected(tmp_path):
    with pytest.raises(ValueError, match="nothing to plot"):
        emit_plot_data(tmp_path, rows=[])
