"""Text artifacts: atomic file writes, simple CSV tables and SVG heatmaps."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from html import escape
from pathlib import Path

import numpy as np

# a coarse viridis ramp, interpolated linearly
_RAMP = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], dtype=float)


def write_atomic(path, text: str) -> Path:
    """Write ``text`` next to ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def table_csv(header, rows, decimals: int = 6) -> str:
    """CSV text with LF endings; floats get a fixed number of decimals."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.{decimals}f}" if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


@dataclass
class HeatmapArtifact:
    values: np.ndarray  # rows: patch lengths, columns: horizons
    patch_lengths: tuple
    horizons: tuple
    vmin: float
    vmax: float
    title: str = ""


def color_for(value: float, vmin: float, vmax: float) -> str:
    if not np.isfinite(value):
        return "#cccccc"
    t = 0.0 if vmax <= vmin else float(np.clip((value - vmin) / (vmax - vmin), 0.0, 1.0))
    pos = t * (len(_RAMP) - 1)
    i = min(int(pos), len(_RAMP) - 2)
    rgb = _RAMP[i] + (pos - i) * (_RAMP[i + 1] - _RAMP[i])
    return "#{:02x}{:02x}{:02x}".format(*np.rint(rgb).astype(int))


def value_range(arrays) -> tuple[float, float]:
    finite = np.concatenate([a[np.isfinite(a)].ravel() for a in arrays] or [np.empty(0)])
    if finite.size == 0:
        return 0.0, 1.0
    return float(finite.min()), float(finite.max())


def heatmap_svg(panels: list[HeatmapArtifact], title: str = "", cell: int = 44) -> str:
    """Side-by-side heatmap panels, one ``<g class="heatmap">`` per panel."""
    margin_left, margin_top, gap = 56, 48, 36
    widths = [len(p.horizons) * cell for p in panels]
    width = margin_left + sum(widths) + gap * len(panels)
    height = margin_top + max(len(p.patch_lengths) for p in panels) * cell + 40
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="10">']
    if title:
        out.append(f'<text x="{margin_left}" y="16" font-size="13">{escape(title)}</text>')
    x0 = margin_left
    for panel, w in zip(panels, widths):
        out.append(f'<g class="heatmap" data-title="{escape(panel.title)}" '
                   f'data-vmin="{panel.vmin:.6f}" data-vmax="{panel.vmax:.6f}">')
        out.append(f'<text x="{x0}" y="{margin_top - 18}" font-size="12">{escape(panel.title)}</text>')
        for i, P in enumerate(panel.patch_lengths):
            y = margin_top + i * cell
            if x0 == margin_left:
                out.append(f'<text x="{x0 - 6}" y="{y + cell / 2 + 3}" text-anchor="end">P={P}</text>')
            for j, H in enumerate(panel.horizons):
                v = panel.values[i, j]
                x = x0 + j * cell
                label = "nan" if not np.isfinite(v) else f"{v:.4f}"
                out.append(f'<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" '
                           f'fill="{color_for(v, panel.vmin, panel.vmax)}" data-p="{P}" data-h="{H}" '
                           f'data-value="{label}"/>')
                out.append(f'<text x="{x + cell / 2}" y="{y + cell / 2 + 3}" text-anchor="middle" '
                           f'font-size="8" fill="#ffffff">{label}</text>')
        y_axis = margin_top + len(panel.patch_lengths) * cell + 14
        for j, H in enumerate(panel.horizons):
            out.append(f'<text x="{x0 + j * cell + cell / 2}" y="{y_axis}" text-anchor="middle">H={H}</text>')
        out.append("</g>")
        x0 += w + gap
    out.append("</svg>")
    return "\n".join(out) + "\n"
