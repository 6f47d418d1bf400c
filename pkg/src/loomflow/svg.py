"""Minimal SVG emission for experiment artifacts: line plots and 2-D overlays."""

from __future__ import annotations

from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_MARGIN = 56.0


def _scale(lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        pad = 0.5 if lo == 0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def line_plot(
    path: str | Path,
    series: list[tuple[str, np.ndarray, np.ndarray]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 720,
    height: int = 440,
) -> None:
    """Write a polyline chart; ``series`` holds (label, xs, ys) triples."""
    xs_all = np.concatenate([np.asarray(s[1], float) for s in series])
    ys_all = np.concatenate([np.asarray(s[2], float) for s in series])
    ys_all = ys_all[np.isfinite(ys_all)]
    x0, x1 = _scale(float(xs_all.min()), float(xs_all.max()))
    y0, y1 = _scale(float(ys_all.min()) if ys_all.size else 0.0,
                    float(ys_all.max()) if ys_all.size else 1.0)
    iw, ih = width - 2 * _MARGIN, height - 2 * _MARGIN

    def px(x):
        return _MARGIN + (x - x0) / (x1 - x0) * iw

    def py(y):
        return height - _MARGIN - (y - y0) / (y1 - y0) * ih

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" font-family="monospace" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{_MARGIN}" y1="{height - _MARGIN}" x2="{width - _MARGIN}" '
        f'y2="{height - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" '
        f'y2="{height - _MARGIN}" stroke="black"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle">{title}</text>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">'
        f"{xlabel}</text>",
        f'<text x="16" y="{height / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {height / 2})">{ylabel}</text>',
        f'<text x="{_MARGIN}" y="{height - _MARGIN + 16}">{_fmt(x0)}</text>',
        f'<text x="{width - _MARGIN}" y="{height - _MARGIN + 16}" '
        f'text-anchor="end">{_fmt(x1)}</text>',
        f'<text x="{_MARGIN - 4}" y="{height - _MARGIN}" '
        f'text-anchor="end">{_fmt(y0)}</text>',
        f'<text x="{_MARGIN - 4}" y="{_MARGIN + 4}" text-anchor="end">'
        f"{_fmt(y1)}</text>",
    ]
    for i, (label, xs, ys) in enumerate(series):
        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        keep = np.isfinite(ys)
        pts = " ".join(
            f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs[keep], ys[keep])
        )
        color = PALETTE[i % len(PALETTE)]
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            'stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{width - _MARGIN - 4}" y="{_MARGIN + 14 * (i + 1)}" '
            f'text-anchor="end" fill="{color}">{label}</text>'
        )
    out.append("</svg>")
    Path(path).write_text("\n".join(out))


def trajectory_plot(
    path: str | Path,
    trajectories: list[np.ndarray],
    endpoints: bool = True,
    width: int = 560,
    height: int = 560,
    title: str = "",
) -> None:
    """Overlay of 2-D trajectories, each an array of (T, 2) states."""
    pts_all = np.concatenate(trajectories)
    x0, x1 = _scale(float(pts_all[:, 0].min()), float(pts_all[:, 0].max()))
    y0, y1 = _scale(float(pts_all[:, 1].min()), float(pts_all[:, 1].max()))
    iw, ih = width - 2 * _MARGIN, height - 2 * _MARGIN

    def px(x):
        return _MARGIN + (x - x0) / (x1 - x0) * iw

    def py(y):
        return height - _MARGIN - (y - y0) / (y1 - y0) * ih

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" font-family="monospace" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle">{title}</text>',
    ]
    for traj in trajectories:
        pts = " ".join(f"{px(p[0]):.1f},{py(p[1]):.1f}" for p in traj)
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="#1f77b4" '
            'stroke-width="1" stroke-opacity="0.55"/>'
        )
        if endpoints:
            out.append(
                f'<circle cx="{px(traj[0, 0]):.1f}" cy="{py(traj[0, 1]):.1f}" '
                'r="2.2" fill="#2ca02c"/>'
            )
            out.append(
                f'<circle cx="{px(traj[-1, 0]):.1f}" cy="{py(traj[-1, 1]):.1f}" '
                'r="2.2" fill="#d62728"/>'
            )
    out.append("</svg>")
    Path(path).write_text("\n".join(out))
