"""Solve-cost heatmaps as standalone SVG (no plotting dependency).

One panel per policy: x is the plane count n, y is the altitude count k,
cell shading is the median step count over the seeds that solved the cell
(log-scaled, darker = costlier).  Cells never solved at any seed are
hatched.
"""

from __future__ import annotations

import math

from .evalgrid import EvalRow

_CELL = 64
_LEFT = 64
_TOP = 48
_BOT = 56

_LIGHT = (0xde, 0xeb, 0xf7)
_DARK = (0x08, 0x30, 0x6b)


def _shade(t: float) -> str:
    rgb = tuple(round(_LIGHT[i] + (_DARK[i] - _LIGHT[i]) * t)
                for i in range(3))
    return "#%02x%02x%02x" % rgb


def heatmap_svg(rows: list[EvalRow], policy: str,
                n_max: int | None = None, k_max: int | None = None) -> str:
    sel = [r for r in rows if r.policy == policy]
    if not sel:
        raise ValueError(f"no rows for policy {policy!r}")
    if n_max is None:
        n_max = max(r.n for r in sel)
    if k_max is None:
        k_max = max(r.k for r in sel)

    med: dict[tuple[int, int], float] = {}
    for n in range(1, n_max + 1):
        for k in range(1, k_max + 1):
            steps = sorted(r.steps for r in sel
                           if r.n == n and r.k == k and r.solved)
            if steps:
                mid = len(steps) // 2
                med[(n, k)] = (steps[mid] if len(steps) % 2
                               else 0.5 * (steps[mid - 1] + steps[mid]))

    if med:
        lo = math.log(max(min(med.values()), 1.0))
        hi = math.log(max(max(med.values()), 1.0))
    else:
        lo = hi = 0.0
    span = hi - lo

    width = _LEFT + n_max * _CELL + 24
    height = _TOP + k_max * _CELL + _BOT
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}" '
        f'font-family="sans-serif">',
        '<defs><pattern id="miss" width="8" height="8" '
        'patternUnits="userSpaceOnUse">'
        '<rect width="8" height="8" fill="#f5f5f5"/>'
        '<path d="M0,8 L8,0" stroke="#b0b0b0" stroke-width="1.5"/>'
        "</pattern></defs>",
        f'<text x="{_LEFT}" y="24" font-size="16">{policy}: '
        "median steps to controller</text>",
    ]
    for n in range(1, n_max + 1):
        for k in range(1, k_max + 1):
            x = _LEFT + (n - 1) * _CELL
            y = _TOP + (k_max - k) * _CELL
            v = med.get((n, k))
            if v is None:
                fill = "url(#miss)"
            else:
                t = 0.5 if span == 0 else (math.log(max(v, 1.0)) - lo) / span
                fill = _shade(t)
            out.append(f'<rect x="{x}" y="{y}" width="{_CELL}" '
                       f'height="{_CELL}" fill="{fill}" stroke="#ffffff"/>')
            if v is not None:
                color = "#ffffff" if span and (math.log(max(v, 1.0)) - lo) \
                    / span > 0.55 else "#1a1a1a"
                label = f"{v:.0f}" if v == int(v) else f"{v:.1f}"
                out.append(f'<text x="{x + _CELL // 2}" '
                           f'y="{y + _CELL // 2 + 5}" font-size="13" '
                           f'text-anchor="middle" fill="{color}">'
                           f"{label}</text>")
    for n in range(1, n_max + 1):
        out.append(f'<text x="{_LEFT + (n - 1) * _CELL + _CELL // 2}" '
                   f'y="{_TOP + k_max * _CELL + 20}" font-size="13" '
                   f'text-anchor="middle">{n}</text>')
    for k in range(1, k_max + 1):
        out.append(f'<text x="{_LEFT - 12}" '
                   f'y="{_TOP + (k_max - k) * _CELL + _CELL // 2 + 5}" '
                   f'font-size="13" text-anchor="end">{k}</text>')
    out.append(f'<text x="{_LEFT + n_max * _CELL // 2}" '
               f'y="{_TOP + k_max * _CELL + 44}" font-size="14" '
               f'text-anchor="middle">planes n</text>')
    out.append(f'<text x="16" y="{_TOP + k_max * _CELL // 2}" '
               f'font-size="14" text-anchor="middle" '
               f'transform="rotate(-90 16 {_TOP + k_max * _CELL // 2})">'
               "altitudes k</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
