"""Deterministic SVG line plots and PPM heatmaps for emitted CSV files.

No plotting library is used: identical inputs must give byte-identical
output files.  Heatmaps use a monotone-luminance colormap ("heat":
black - red - yellow - white, or "gray") normalized to the per-map maximum.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import SchemaError

_WIDTH, _HEIGHT = 800, 560
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 36, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = np.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * abs(step):
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _fmt_tick(v: float) -> str:
    return f"{v:.6g}"


def render_curve_svg(x, series, x_label: str, y_label: str, title: str = "") -> str:
    """SVG 1.1 line plot; ``series`` is a list of (name, values) pairs."""
    x = np.asarray(x, dtype=float)
    if x.size == 0 or not series:
        raise SchemaError("no data to plot")
    ys = [np.asarray(v, dtype=float) for _, v in series]
    for y in ys:
        if y.size != x.size:
            raise SchemaError("series length does not match the x grid")
    x_lo, x_hi = float(x.min()), float(x.max())
    y_all = np.concatenate(ys)
    y_lo, y_hi = float(y_all.min()), float(y_all.max())
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(v):
        return _MARGIN_L + (v - x_lo) / (x_hi - x_lo) * (_WIDTH - _MARGIN_L - _MARGIN_R)

    def sy(v):
        return _HEIGHT - _MARGIN_B - (v - y_lo) / (y_hi - y_lo) * (_HEIGHT - _MARGIN_T - _MARGIN_B)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_WIDTH / 2:.1f}" y="22" text-anchor="middle" '
            f'font-family="monospace" font-size="14">{title}</text>'
        )
    axis_color = "#333333"
    x0, y0 = _MARGIN_L, _HEIGHT - _MARGIN_B
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{_WIDTH - _MARGIN_R}" y2="{y0}" '
        f'stroke="{axis_color}" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{_MARGIN_T}" '
        f'stroke="{axis_color}" stroke-width="1"/>'
    )
    for t in _ticks(x_lo, x_hi):
        px = sx(t)
        parts.append(
            f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y0 + 5}" stroke="{axis_color}"/>'
        )
        parts.append(
            f'<text x="{px:.2f}" y="{y0 + 18}" text-anchor="middle" '
            f'font-family="monospace" font-size="11">{_fmt_tick(t)}</text>'
        )
    for t in _ticks(y_lo, y_hi):
        py = sy(t)
        parts.append(
            f'<line x1="{x0 - 5}" y1="{py:.2f}" x2="{x0}" y2="{py:.2f}" stroke="{axis_color}"/>'
        )
        parts.append(
            f'<text x="{x0 - 8}" y="{py + 4:.2f}" text-anchor="end" '
            f'font-family="monospace" font-size="11">{_fmt_tick(t)}</text>'
        )
    parts.append(
        f'<text x="{(_MARGIN_L + _WIDTH - _MARGIN_R) / 2:.1f}" y="{_HEIGHT - 12}" '
        f'text-anchor="middle" font-family="monospace" font-size="12">{x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{(_MARGIN_T + _HEIGHT - _MARGIN_B) / 2:.1f}" text-anchor="middle" '
        f'font-family="monospace" font-size="12" transform="rotate(-90 16 '
        f'{(_MARGIN_T + _HEIGHT - _MARGIN_B) / 2:.1f})">{y_label}</text>'
    )
    for k, (name, y) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        points = " ".join(f"{sx(xv):.2f},{sy(yv):.2f}" for xv, yv in zip(x, np.asarray(y)))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{_WIDTH - _MARGIN_R - 6}" y="{_MARGIN_T + 16 + 16 * k}" '
            f'text-anchor="end" font-family="monospace" font-size="11" '
            f'fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _colormap(values: np.ndarray, colormap: str) -> np.ndarray:
    t = np.clip(values, 0.0, 1.0)
    if colormap == "gray":
        byte = np.rint(t * 255).astype(np.uint8)
        return np.stack([byte, byte, byte], axis=-1)
    # "heat": black -> red -> yellow -> white, monotone luminance
    r = np.clip(3.0 * t, 0.0, 1.0)
    g = np.clip(3.0 * t - 1.0, 0.0, 1.0)
    b = np.clip(3.0 * t - 2.0, 0.0, 1.0)
    return np.rint(np.stack([r, g, b], axis=-1) * 255).astype(np.uint8)


def render_heatmap_ppm(
    intensity: np.ndarray, colormap: str = "heat", log_scale: bool = False
) -> bytes:
    """Binary PPM (P6) heatmap; rows run bottom-to-top (first row at the bottom)."""
    z = np.asarray(intensity, dtype=float)
    if z.ndim != 2 or z.size == 0:
        raise SchemaError("heatmap needs a non-empty 2D intensity array")
    peak = z.max()
    if peak <= 0.0:
        raise SchemaError("heatmap input is empty (all intensities are zero)")
    if log_scale:
        floor = peak * 1e-6
        norm = (np.log10(np.clip(z, floor, None)) - np.log10(floor)) / (
            np.log10(peak) - np.log10(floor)
        )
    else:
        norm = z / peak
    rgb = _colormap(norm[::-1, :], colormap)
    h, w = rgb.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + rgb.tobytes()


def sniff_csv(path) -> tuple[str, list, np.ndarray]:
    """Classify an emitted CSV as curve / map / sweep and parse it."""
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"{path}: line {line_no}: expected {len(header)} cells, got {len(row)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise SchemaError(f"{path}: line {line_no}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    header = [h.strip() for h in header]
    if header == ["t_ps", "lambda_nm", "intensity_au"]:
        return "map", header, data
    if header[0] in ("t_ps", "detuning_nm", "control_nm", "control"):
        return "curve", header, data
    raise SchemaError(f"{path}: unrecognized CSV layout with header {header}")


def render_csv_file(
    path, out_path, fmt: str = "auto", colormap: str = "heat", log_scale: bool = False
) -> Path:
    """Render an emitted CSV to SVG (curves) or PPM (maps)."""
    kind, header, data = sniff_csv(path)
    out_path = Path(out_path)
    if kind == "map":
        t_vals = np.unique(data[:, 0])
        lam_vals = np.unique(data[:, 1])
        if t_vals.size * lam_vals.size != data.shape[0]:
            raise SchemaError(f"{path}: map grid is not complete")
        grid = data[:, 2].reshape(t_vals.size, lam_vals.size)
        if fmt == "svg":
            raise SchemaError("SVG heatmaps are not supported; use PPM (P6)")
        ppm = render_heatmap_ppm(grid, colormap=colormap, log_scale=log_scale)
        out_path.write_bytes(ppm)
        return out_path
    x = data[:, 0]
    series = [(name, data[:, i + 1]) for i, name in enumerate(header[1:])]
    svg = render_curve_svg(x, series, x_label=header[0], y_label=header[1], title=Path(path).name)
    out_path.write_text(svg, encoding="utf-8")
    return out_path
