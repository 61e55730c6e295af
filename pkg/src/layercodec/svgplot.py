"""Static SVG scatter for rate-distortion points. Byte-deterministic output:
fixed float formatting, no timestamps, no generated ids."""

from __future__ import annotations

import math

from .metrics import RdPoint

_SERIES = [
    ("psnr_high", "bpp_total", "#c0392b", "PSNR high (all streams)"),
    ("psnr_general", "bpp_total", "#2980b9", "PSNR general (streams 1-2)"),
]

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 16, 28, 46


def _finite(points, attr):
    vals = [getattr(p, attr) for p in points]
    return [v for v in vals if math.isfinite(v)]


def render_rd_svg(points: list[RdPoint]) -> str:
    if not points:
        raise ValueError("no points to plot")
    xs = _finite(points, "bpp_total")
    ys = _finite(points, "psnr_high") + _finite(points, "psnr_general")
    if not ys:
        raise ValueError("no finite distortion values to plot")
    x0, x1 = 0.0, max(xs) * 1.05
    y0, y1 = min(ys) - 1.0, max(ys) + 1.0

    def sx(v):
        return _ML + (v - x0) / (x1 - x0) * (_W - _ML - _MR)

    def sy(v):
        return _H - _MB - (v - y0) / (y1 - y0) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="#444"/>',
    ]
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        parts.append(f'<text x="{sx(xv):.1f}" y="{_H - _MB + 16}" font-size="11" '
                     f'text-anchor="middle">{xv:.3f}</text>')
        parts.append(f'<text x="{_ML - 6}" y="{sy(yv):.1f}" font-size="11" '
                     f'text-anchor="end" dominant-baseline="middle">{yv:.1f}</text>')
    parts.append(f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 10}" '
                 f'font-size="12" text-anchor="middle">bits per pixel</text>')
    parts.append(f'<text x="14" y="{(_MT + _H - _MB) / 2:.1f}" font-size="12" '
                 f'text-anchor="middle" transform="rotate(-90 14 '
                 f'{(_MT + _H - _MB) / 2:.1f})">PSNR (dB)</text>')

    by_qp: dict[int, list[RdPoint]] = {}
    for p in points:
        by_qp.setdefault(p.qp, []).append(p)
    for si, (y_attr, x_attr, color, label) in enumerate(_SERIES):
        line = []
        for qp in sorted(by_qp, reverse=True):
            qps = by_qp[qp]
            xv = sum(getattr(p, x_attr) for p in qps) / len(qps)
            yv_list = [getattr(p, y_attr) for p in qps if math.isfinite(getattr(p, y_attr))]
            if not yv_list:
                continue
            yv = sum(yv_list) / len(yv_list)
            line.append(f"{sx(xv):.2f},{sy(yv):.2f}")
        if line:
            parts.append(f'<polyline points="{" ".join(line)}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
        for p in points:
            yv = getattr(p, y_attr)
            if not math.isfinite(yv):
                continue
            parts.append(f'<circle cx="{sx(getattr(p, x_attr)):.2f}" '
                         f'cy="{sy(yv):.2f}" r="2.4" fill="{color}" '
                         f'fill-opacity="0.55"/>')
        parts.append(f'<circle cx="{_ML + 12}" cy="{_MT + 14 + 16 * si}" r="3" '
                     f'fill="{color}"/>')
        parts.append(f'<text x="{_ML + 20}" y="{_MT + 18 + 16 * si}" '
                     f'font-size="11">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_rd_svg(points: list[RdPoint], path) -> None:
    svg = render_rd_svg(points)
    import os
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(svg)
    os.replace(tmp, os.fspath(path))
