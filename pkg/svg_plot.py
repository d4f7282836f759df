"""
SVG曲线输出
生成独立的单折线SVG图（800x600视图框，5等分刻度），相同输入得到逐字节相同的输出
"""
import logging
import math
from xml.sax.saxutils import escape

from errors import ValidationError


logger = logging.getLogger('HyReS.SVG')

WIDTH = 800
HEIGHT = 600
MARGIN_LEFT = 90
MARGIN_RIGHT = 30
MARGIN_TOP = 40
MARGIN_BOTTOM = 80
TICKS = 5


def _scale(values, low, high):
    """把数据映射到 [low, high]；值域退化时取中点"""
    vmin, vmax = min(values), max(values)
    if vmax == vmin:
        middle = (low + high) / 2.0
        return [middle] * len(values), vmin, vmax
    factor = (high - low) / (vmax - vmin)
    return [low + (v - vmin) * factor for v in values], vmin, vmax


def emit_curve_svg(points, x_label, y_label, path=None, title=''):
    """
    生成曲线SVG

    Args:
        points: (x, y) 序列，至少2个点
        x_label: 横轴标签
        y_label: 纵轴标签
        path: 输出路径，None时只返回文本
        title: 可选标题

    Returns:
        SVG文本
    """
    points = [(float(x), float(y)) for x, y in points]
    if len(points) < 2:
        raise ValidationError(f"曲线至少需要2个点，实际: {len(points)}")
    if not all(math.isfinite(x) and math.isfinite(y) for x, y in points):
        raise ValidationError("曲线点包含NaN或Inf")

    left, right = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    top, bottom = MARGIN_TOP, HEIGHT - MARGIN_BOTTOM
    xs, x_min, x_max = _scale([p[0] for p in points], left, right)
    ys, y_min, y_max = _scale([p[1] for p in points], bottom, top)

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}" stroke="black"/>',
    ]
    for i in range(TICKS + 1):
        tx = left + (right - left) * i / TICKS
        ty = bottom - (bottom - top) * i / TICKS
        x_value = x_min + (x_max - x_min) * i / TICKS
        y_value = y_min + (y_max - y_min) * i / TICKS
        lines.append(f'<line x1="{tx:.2f}" y1="{bottom}" x2="{tx:.2f}" y2="{bottom + 6}" stroke="black"/>')
        lines.append(f'<text x="{tx:.2f}" y="{bottom + 22}" font-size="12" text-anchor="middle">{x_value:.4g}</text>')
        lines.append(f'<line x1="{left - 6}" y1="{ty:.2f}" x2="{left}" y2="{ty:.2f}" stroke="black"/>')
        lines.append(f'<text x="{left - 10}" y="{ty + 4:.2f}" font-size="12" text-anchor="end">{y_value:.4g}</text>')

    coords = ' '.join(f'{x:.2f},{y:.2f}' for x, y in zip(xs, ys))
    lines.append(f'<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{coords}"/>')
    lines.append(f'<text x="{(left + right) / 2:.2f}" y="{HEIGHT - 25}" font-size="14" '
                 f'text-anchor="middle">{escape(x_label)}</text>')
    lines.append(f'<text x="20" y="{(top + bottom) / 2:.2f}" font-size="14" text-anchor="middle" '
                 f'transform="rotate(-90 20 {(top + bottom) / 2:.2f})">{escape(y_label)}</text>')
    if title:
        lines.append(f'<text x="{WIDTH / 2:.2f}" y="25" font-size="16" text-anchor="middle">{escape(title)}</text>')
    lines.append('</svg>')
    text = '\n'.join(lines) + '\n'

    if path is not None:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        logger.info(f"曲线图已写出: {path}")
    return text
