"""
Tests for the SVG figures.

These tests verify:
- Output is well-formed SVG carrying its caption as text
- Identical inputs render identical bytes
- Settings with an undefined error ratio are listed, not plotted
"""

import xml.etree.ElementTree as ET

import pytest

from dmvrpx.aggregate import SettingSummary, build_heatmaps
from dmvrpx.domain import PolicyName, enumerate_settings
from dmvrpx.dp import solve_dpc, solve_optimal
from dmvrpx.instgen import generate_instance
from dmvrpx.metrics import compute_errors
from dmvrpx.policies import as_rule
from dmvrpx.viz import (
    DEFAULT_SPECS,
    FigureKind,
    render_heatmap_panel,
    render_objective_profile,
    render_scatter,
    scatter_points,
)


@pytest.fixture(scope="module")
def dpc_heatmaps():
    instance = generate_instance(enumerate_settings()[14], 0, 42)
    records = compute_errors(solve_optimal(instance), as_rule(solve_dpc(instance)), instance)
    return build_heatmaps(records)


def _summary(ordinal, policy, ratio, gap=0.05):
    return SettingSummary(enumerate_settings()[ordinal], policy, 2, 9.0, 10.0, gap, ratio)


def _parse(svg: str) -> ET.Element:
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    return root


# ----------------------------------------------------------------------------
# Heatmap panels
# ----------------------------------------------------------------------------


class TestHeatmapPanel:
    def test_panel_is_svg_with_setting_caption(self, dpc_heatmaps):
        setting = enumerate_settings()[14]
        svg = render_heatmap_panel(setting, PolicyName.DPC, dpc_heatmaps)

        _parse(svg)
        assert setting.label in svg
        assert "decision epoch" in svg

    def test_panel_is_deterministic(self, dpc_heatmaps):
        setting = enumerate_settings()[14]
        first = render_heatmap_panel(setting, PolicyName.DPC, dpc_heatmaps)
        second = render_heatmap_panel(setting, PolicyName.DPC, dpc_heatmaps)

        assert first == second

    def test_missing_tables_render_blank(self):
        svg = render_heatmap_panel(enumerate_settings()[0], PolicyName.MCTS, {})
        _parse(svg)

    def test_default_specs_size_figures(self):
        spec = DEFAULT_SPECS[FigureKind.HEATMAP_PANEL]
        assert spec.figsize == (18.0, 4.2)


# ----------------------------------------------------------------------------
# Scatter and profile
# ----------------------------------------------------------------------------


class TestScatter:
    def test_undefined_ratios_are_omitted_in_canonical_order(self):
        summaries = [
            _summary(3, PolicyName.MCTS, None),
            _summary(0, PolicyName.MYOPIC, 0.3),
            _summary(0, PolicyName.DPC, None),
        ]
        plotted, omitted = scatter_points(summaries)

        assert [(s.setting.ordinal, s.policy) for s in plotted] == [(0, PolicyName.MYOPIC)]
        assert [(s.setting.ordinal, s.policy) for s in omitted] == [
            (0, PolicyName.DPC),
            (3, PolicyName.MCTS),
        ]

    def test_omission_note_lists_left_out_points(self):
        svg = render_scatter([_summary(0, PolicyName.DPC, None), _summary(1, PolicyName.MCTS, 0.7)])

        _parse(svg)
        assert "undefined ratio, omitted (1): 00/dpc" in svg

    def test_no_note_when_every_ratio_is_defined(self):
        svg = render_scatter([_summary(1, PolicyName.MCTS, 0.7)])
        assert "omitted" not in svg

    def test_scatter_is_deterministic(self):
        summaries = [_summary(o, PolicyName.DPC, o / 70) for o in range(0, 66, 5)]
        assert render_scatter(summaries) == render_scatter(list(reversed(summaries)))


class TestObjectiveProfile:
    def test_profile_has_a_panel_per_constraint(self):
        summaries = [_summary(o, p, 0.2) for o in (0, 1, 2, 3) for p in (PolicyName.DPC, PolicyName.MCTS)]
        svg = render_objective_profile(summaries)

        _parse(svg)
        assert "load constraint" in svg
        assert "dist constraint" in svg
