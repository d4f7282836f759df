import re

import pytest

from errors import ValidationError
from svg_plot import emit_curve_svg


def _polyline_points(text):
    match = re.search(r'<polyline [^>]*points="([^"]*)"', text)
    return match.group(1).split()


def test_three_points(tmp_path):
    path = str(tmp_path / 'curve.svg')
    text = emit_curve_svg([(0, 0), (1, 2), (2, 1)], 'x', 'y', path)
    assert 'viewBox="0 0 800 600"' in text
    assert len(_polyline_points(text)) == 3
    assert open(path, encoding='utf-8').read() == text


def test_ticks_at_five_divisions():
    text = emit_curve_svg([(0, 0), (10, 5)], 'x', 'y')
    # 每轴6个刻度（含两端）
    assert text.count('text-anchor="middle">') >= 6
    assert text.count('font-size="12"') == 12


def test_deterministic_output():
    points = [(0.1, 0.5), (0.2, 0.25), (0.3, 0.125)]
    assert emit_curve_svg(points, 'f', 'FRC', title='曲线') == emit_curve_svg(points, 'f', 'FRC', title='曲线')


def test_flat_line_is_at_mid_height():
    text = emit_curve_svg([(0, 3.0), (1, 3.0), (2, 3.0)], 'x', 'y')
    ys = {float(pair.split(',')[1]) for pair in _polyline_points(text)}
    assert ys == {(40 + 520) / 2.0}


def test_labels_are_escaped():
    text = emit_curve_svg([(0, 0), (1, 1)], 'a<b', 'c&d')
    assert 'a&lt;b' in text and 'c&amp;d' in text


def test_too_few_points():
    with pytest.raises(ValidationError):
        emit_curve_svg([(0, 0)], 'x', 'y')


def test_non_finite_points():
    with pytest.raises(ValidationError):
        emit_curve_svg([(0, 0), (1, float('nan'))], 'x', 'y')
