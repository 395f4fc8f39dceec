"""Plot-ready CSV and minimal SVG artifacts: dataset histograms, predicted-vs-true
scatters, station maps and training curves. Output bytes depend only on inputs."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import ReportRow
from .preprocess import WindowedSample

HIST_BINS = 20
HIST_QUANTITIES = ("snr_db", "epicentral_distance_km", "depth_km", "magnitude")


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def histogram(values: Sequence[float], bins: int = HIST_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Counts over equal-width bins spanning the finite values; infinities land in the edge bins."""
    vals = np.asarray(values, dtype=np.float64)
    vals = vals[~np.isnan(vals)]
    finite = vals[np.isfinite(vals)]
    if finite.size == 0:
        lo, hi = 0.0, 1.0
    else:
        lo, hi = float(finite.min()), float(finite.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(np.clip(vals, lo, hi), bins=bins, range=(lo, hi))
    return counts, edges


def histogram_csv(values: Sequence[float], bins: int = HIST_BINS) -> str:
    counts, edges = histogram(values, bins)
    return _csv(("bin_lo", "bin_hi", "count"),
                ((float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)))


def scatter_csv(rows: Sequence[ReportRow], coord: str) -> str:
    return _csv(("record_id", "split", f"true_{coord}", f"pred_{coord}"),
                ((r.record_id, r.split, getattr(r, f"true_{coord}"), getattr(r, f"pred_{coord}")) for r in rows))


def station_map_csv(rows: Sequence[ReportRow]) -> str:
    ordered = sorted(rows, key=lambda r: (r.station_id, r.record_id))
    return _csv(("station_id", "station_lat", "station_lon", "record_id", "true_lat", "true_lon",
                 "pred_lat", "pred_lon", "km_error"),
                ((r.station_id, r.station_lat, r.station_lon, r.record_id, r.true_lat, r.true_lon,
                  r.pred_lat, r.pred_lon, r.km_error) for r in ordered))


class _Canvas:
    """Fixed-size SVG with a linear data->pixel mapping."""

    def __init__(self, xs, ys, width=640, height=480, margin=48):
        xs = [x for x in xs if math.isfinite(x)] or [0.0, 1.0]
        ys = [y for y in ys if math.isfinite(y)] or [0.0, 1.0]
        self.x0, self.x1 = min(xs), max(xs)
        self.y0, self.y1 = min(ys), max(ys)
        if self.x0 == self.x1:
            self.x0, self.x1 = self.x0 - 1, self.x1 + 1
        if self.y0 == self.y1:
            self.y0, self.y1 = self.y0 - 1, self.y1 + 1
        self.w, self.h, self.m = width, height, margin
        self.items: list[str] = []

    def px(self, x: float, y: float) -> tuple[str, str]:
        u = self.m + (x - self.x0) / (self.x1 - self.x0) * (self.w - 2 * self.m)
        v = self.h - self.m - (y - self.y0) / (self.y1 - self.y0) * (self.h - 2 * self.m)
        return f"{u:.2f}", f"{v:.2f}"

    def text(self, x: float, y: float, s: str, anchor: str = "middle") -> None:
        self.items.append(f'<text x="{x:.0f}" y="{y:.0f}" font-size="12" text-anchor="{anchor}">{s}</text>')

    def render(self, title: str, xlabel: str, ylabel: str) -> str:
        m, w, h = self.m, self.w, self.h
        head = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
            f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" fill="none" stroke="black"/>',
        ]
        self.text(w / 2, m / 2, title)
        self.text(w / 2, h - 10, xlabel)
        self.text(12, h / 2, ylabel, anchor="start")
        self.text(m, h - m + 16, f"{self.x0:.3f}")
        self.text(w - m, h - m + 16, f"{self.x1:.3f}")
        self.text(m - 4, h - m, f"{self.y0:.3f}", anchor="end")
        self.text(m - 4, m + 10, f"{self.y1:.3f}", anchor="end")
        return "\n".join(head + self.items + ["</svg>"]) + "\n"


def station_map_svg(rows: Sequence[ReportRow]) -> str:
    """Stations (triangles), true epicenters (circles), predictions (crosses), linked by error lines."""
    ordered = sorted(rows, key=lambda r: (r.station_id, r.record_id))
    lons = [r.station_lon for r in ordered] + [r.true_lon for r in ordered] + [r.pred_lon for r in ordered]
    lats = [r.station_lat for r in ordered] + [r.true_lat for r in ordered] + [r.pred_lat for r in ordered]
    c = _Canvas(lons, lats)
    for r in ordered:
        (tx, ty), (qx, qy) = c.px(r.true_lon, r.true_lat), c.px(r.pred_lon, r.pred_lat)
        c.items.append(f'<line x1="{tx}" y1="{ty}" x2="{qx}" y2="{qy}" stroke="#999" stroke-width="0.5"/>')
        c.items.append(f'<circle cx="{tx}" cy="{ty}" r="2.5" fill="#1f77b4"/>')
        qxf, qyf = float(qx), float(qy)
        c.items.append(f'<path d="M{qxf - 3:.2f},{qyf - 3:.2f}L{qxf + 3:.2f},{qyf + 3:.2f}'
                       f'M{qxf - 3:.2f},{qyf + 3:.2f}L{qxf + 3:.2f},{qyf - 3:.2f}" stroke="#d62728"/>')
    stations = sorted({(r.station_id, r.station_lat, r.station_lon) for r in ordered})
    for _, lat, lon in stations:
        x, y = (float(v) for v in c.px(lon, lat))
        c.items.append(f'<path d="M{x:.2f},{y - 5:.2f}L{x + 5:.2f},{y + 4:.2f}L{x - 5:.2f},{y + 4:.2f}Z" fill="black"/>')
    return c.render("Epicenters: true (blue) vs predicted (red)", "longitude", "latitude")


def scatter_svg(rows: Sequence[ReportRow], coord: str) -> str:
    colors = {"train": "#d62728", "val": "#2ca02c", "test": "#1f77b4"}
    true = [getattr(r, f"true_{coord}") for r in rows]
    pred = [getattr(r, f"pred_{coord}") for r in rows]
    c = _Canvas(true + pred, true + pred)
    a, b = c.px(c.x0, c.y0), c.px(c.x1, c.y1)
    c.items.append(f'<line x1="{a[0]}" y1="{a[1]}" x2="{b[0]}" y2="{b[1]}" stroke="#999"/>')
    for r, t, p in zip(rows, true, pred):
        x, y = c.px(t, p)
        c.items.append(f'<circle cx="{x}" cy="{y}" r="2" fill="{colors.get(r.split, "black")}"/>')
    return c.render(f"Predicted vs true {coord}", f"true {coord}", f"predicted {coord}")


def history_svg(history: Sequence[dict]) -> str:
    epochs = [float(h["epoch"]) for h in history]
    series = {"train_loss": "#d62728", "val_loss": "#1f77b4"}
    values = [float(h[k]) for h in history for k in series]
    c = _Canvas(epochs, values)
    for key, color in series.items():
        pts = [c.px(e, float(h[key])) for e, h in zip(epochs, history) if math.isfinite(float(h[key]))]
        if pts:
            c.items.append(f'<polyline fill="none" stroke="{color}" points="{" ".join(f"{x},{y}" for x, y in pts)}"/>')
    return c.render("Loss (train red, val blue)", "epoch", "loss")


def emit_plot_data(out_dir: str | Path, rows: Sequence[ReportRow] | None = None,
                   samples: Sequence[WindowedSample] | None = None,
                   history: Sequence[dict] | None = None) -> list[Path]:
    """Write every artifact derivable from the given inputs; returns the paths written."""
    if not rows and not samples and not history:
        raise ValueError("nothing to plot: empty report, sample set and history")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    if samples:
        for q in HIST_QUANTITIES:
            files[f"hist_{q}.csv"] = histogram_csv([getattr(s, q) for s in samples])
    if rows:
        by_split: dict[str, list[ReportRow]] = defaultdict(list)
        for r in rows:
            by_split[r.split].append(r)
        for split, split_rows in sorted(by_split.items()):
            for coord in ("lat", "lon"):
                files[f"scatter_{coord}_{split}.csv"] = scatter_csv(split_rows, coord)
        for coord in ("lat", "lon"):
            files[f"scatter_{coord}.svg"] = scatter_svg(rows, coord)
        files["station_map.csv"] = station_map_csv(rows)
        files["station_map.svg"] = station_map_svg(rows)
    if history:
        files["history.svg"] = history_svg(history)
    written = []
    for name, text in files.items():
        path = out / name
        path.write_text(text)
        written.append(path)
    return written
