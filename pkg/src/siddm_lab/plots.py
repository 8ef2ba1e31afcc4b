"""Dependency-free SVG scatter panels for 2-D sample clouds."""

from __future__ import annotations

import numpy as np


def svg_scatter(samples: np.ndarray, centers: np.ndarray | None = None,
                extent: float | None = None, size: int = 520,
                title: str | None = None) -> str:
    """Scatter plot of samples with mode centers overlaid as crosses.

    Returns the SVG document as a string; coordinates are fixed to six
    decimals so output is diffable."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError(f"samples must be (n, 2), got {samples.shape}")
    pts = [samples] if centers is None else [samples, np.asarray(centers)]
    if extent is None:
        extent = 1.1 * max(float(np.abs(p).max()) for p in pts if p.size) + 1e-9
    margin = 20.0
    span = size - 2 * margin

    def sx(v):
        return margin + (v + extent) / (2 * extent) * span

    def sy(v):
        return margin + (extent - v) / (2 * extent) * span

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if title:
        lines.append(
            f'<text x="{size / 2:.1f}" y="14" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{title}</text>'
        )
    for x, y in samples:
        lines.append(
            f'<circle cx="{sx(x):.6f}" cy="{sy(y):.6f}" r="1.6" '
            f'fill="#27608f" fill-opacity="0.45"/>'
        )
    if centers is not None:
        for x, y in np.asarray(centers, dtype=np.float64):
            cx, cy = sx(x), sy(y)
            lines.append(
                f'<path d="M {cx - 4:.6f} {cy:.6f} H {cx + 4:.6f} '
                f'M {cx:.6f} {cy - 4:.6f} V {cy + 4:.6f}" '
                f'stroke="#c23b22" stroke-width="1.4"/>'
            )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
