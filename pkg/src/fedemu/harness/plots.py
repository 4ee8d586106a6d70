"""Static SVG export of training curves.

Hand-rolled SVG keeps the output deterministic and lets the raw data series
ride along in a metadata block, so plotted series can be diffed against the
metrics file exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

__all__ = ["polyline_svg", "cmd_export_plots", "PLOT_METRICS"]

PLOT_METRICS = {
    "eval_reward": "episode reward",
    "log_delay": "mean ln(round delay / s)",
    "exchanges": "emulator exchanges per 10 rounds per device",
    "perplexity": "device-average perplexity",
}

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 70, 20, 30, 50


def _scale(vals, lo_px, hi_px):
    v_min, v_max = min(vals), max(vals)
    span = v_max - v_min
    if span == 0:
        span = 1.0
        v_min -= 0.5
    k = (hi_px - lo_px) / span
    return lambda v: lo_px + (v - v_min) * k, v_min, v_max


def polyline_svg(xs, ys, xlabel: str, ylabel: str, title: str) -> str:
    sx, x_min, x_max = _scale(xs, _ML, _W - _MR)
    sy, y_min, y_max = _scale(ys, _H - _MB, _MT)
    points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    data = json.dumps({"x": [repr(float(x)) for x in xs],
                       "y": [repr(float(y)) for y in ys]})
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}">',
        f"<metadata>{data}</metadata>",
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" '
        f'font-size="14">{title}</text>',
        # axes
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
        'stroke="black"/>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
        'stroke="black"/>',
        f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 12}" text-anchor="middle" '
        f'font-size="12">{xlabel}</text>',
        f'<text x="16" y="{(_MT + _H - _MB) / 2}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 16 {(_MT + _H - _MB) / 2})">'
        f"{ylabel}</text>",
        f'<text x="{_ML}" y="{_H - _MB + 16}" font-size="10">{x_min:g}</text>',
        f'<text x="{_W - _MR}" y="{_H - _MB + 16}" text-anchor="end" '
        f'font-size="10">{x_max:g}</text>',
        f'<text x="{_ML - 4}" y="{_H - _MB}" text-anchor="end" '
        f'font-size="10">{y_min:g}</text>',
        f'<text x="{_ML - 4}" y="{_MT + 10}" text-anchor="end" '
        f'font-size="10">{y_max:g}</text>',
        f'<polyline points="{points}" fill="none" stroke="#1f77b4" '
        'stroke-width="1.5"/>',
        "</svg>",
    ]
    return "\n".join(parts)


def cmd_export_plots(run_dirs) -> list[Path]:
    """One SVG per standard metric per run; empty metrics are skipped with a
    warning."""
    written = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        with open(run_dir / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            print(f"warning: {run_dir} has no metrics rows, skipping")
            continue
        plots_dir = run_dir / "plots"
        plots_dir.mkdir(exist_ok=True)
        steps = [float(r["step"]) for r in rows]
        for metric, label in PLOT_METRICS.items():
            ys = [float(r[metric]) for r in rows]
            svg = polyline_svg(steps, ys, "training step", label,
                               f"{run_dir.name}: {metric}")
            path = plots_dir / f"{metric}.svg"
            path.write_text(svg)
            written.append(path)
    return written
