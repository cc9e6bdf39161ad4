"""
SVG figures: per-setting heatmap panels, the error-ratio scatter and the
objective profile across settings.

Figures are drawn with matplotlib's Agg backend and serialized to SVG with
a fixed hash salt and no timestamp, so identical inputs give identical bytes.
"""

from __future__ import annotations

import io
import logging
import textwrap
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from dmvrpx.aggregate import (  # noqa: E402
    BUCKET_WIDTH,
    N_BUCKETS,
    Heatmap,
    HeatmapMetric,
    SettingSummary,
)
from dmvrpx.domain import Constraint, PolicyName, Setting  # noqa: E402


LOG = logging.getLogger(__name__)

SVG_RC = {
    "svg.hashsalt": "dmvrpx",
    "svg.fonttype": "none",
    "path.simplify": False,
}

PANEL_TITLES = {
    HeatmapMetric.E_OVER: "overestimation error",
    HeatmapMetric.E_UNDER: "underestimation error",
    HeatmapMetric.REGRET_OVER: "regret (overestimation)",
    HeatmapMetric.REGRET_UNDER: "regret (underestimation)",
    HeatmapMetric.DECISION_RATE: "decision rate",
}

POLICY_STYLE = {
    PolicyName.OPTIMAL: ("black", "s"),
    PolicyName.DPC: ("tab:blue", "o"),
    PolicyName.MCTS: ("tab:orange", "^"),
    PolicyName.MYOPIC: ("tab:green", "D"),
}


class FigureKind(Enum):
    HEATMAP_PANEL = "heatmap_panel"
    ERROR_RATIO_SCATTER = "error_ratio_scatter"
    OBJECTIVE_PROFILE = "objective_profile"


@dataclass(frozen=True)
class FigureSpec:
    kind: FigureKind
    width_px: int
    height_px: int
    cmap: str = "viridis"
    dpi: int = 100

    @property
    def figsize(self) -> tuple[float, float]:
        return (self.width_px / self.dpi, self.height_px / self.dpi)


DEFAULT_SPECS = {
    FigureKind.HEATMAP_PANEL: FigureSpec(FigureKind.HEATMAP_PANEL, 1800, 420),
    FigureKind.ERROR_RATIO_SCATTER: FigureSpec(FigureKind.ERROR_RATIO_SCATTER, 800, 640),
    FigureKind.OBJECTIVE_PROFILE: FigureSpec(FigureKind.OBJECTIVE_PROFILE, 1200, 800),
}


def _to_svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def _grid(heatmap: Heatmap) -> np.ma.MaskedArray:
    # cells without records stay blank, also in the summed rate table
    values = np.where(heatmap.counts > 0, heatmap.values, np.nan)
    return np.ma.masked_invalid(values)


def render_heatmap_panel(
    setting: Setting,
    policy: PolicyName,
    heatmaps: Mapping[HeatmapMetric, Heatmap],
    spec: FigureSpec | None = None,
) -> str:
    """
    Five lookup tables side by side: epochs top-down on the y-axis,
    capacity buckets on the x-axis, the setting label as caption.
    """
    spec = spec or DEFAULT_SPECS[FigureKind.HEATMAP_PANEL]
    horizon = setting.horizon

    with matplotlib.rc_context(SVG_RC):
        fig, axes = plt.subplots(1, len(HeatmapMetric), figsize=spec.figsize, dpi=spec.dpi)
        cmap = matplotlib.colormaps[spec.cmap].copy()
        cmap.set_bad("white")

        x_edges = np.arange(N_BUCKETS + 1) * BUCKET_WIDTH
        y_edges = np.arange(horizon + 1) + 0.5

        for ax, metric in zip(axes, HeatmapMetric):
            heatmap = heatmaps.get(metric) or Heatmap.empty(metric, horizon)
            grid = _grid(heatmap)
            vmax = float(grid.max()) if grid.count() else 0.0
            mesh = ax.pcolormesh(
                x_edges, y_edges, grid, cmap=cmap, vmin=0.0, vmax=vmax if vmax > 0 else 1.0
            )
            ax.set_ylim(horizon + 0.5, 0.5)
            ax.set_yticks(range(1, horizon + 1))
            ax.set_xticks(x_edges[::2])
            ax.set_xlabel("capacity used (%)")
            ax.set_title(PANEL_TITLES[metric], fontsize=9)
            fig.colorbar(mesh, ax=ax, fraction=0.046, pad=0.04)

        axes[0].set_ylabel("decision epoch")
        fig.suptitle(f"{policy.value}", fontsize=11)
        fig.text(0.5, 0.01, setting.label, ha="center", va="bottom", fontsize=10)
        fig.subplots_adjust(left=0.04, right=0.98, bottom=0.2, top=0.82, wspace=0.45)
        return _to_svg(fig)


def scatter_points(
    summaries: Sequence[SettingSummary],
) -> tuple[list[SettingSummary], list[SettingSummary]]:
    """Summaries with a defined error ratio, and the ones left out."""
    ordered = sorted(summaries, key=lambda s: (s.setting.ordinal, list(PolicyName).index(s.policy)))
    plotted = [s for s in ordered if s.error_ratio is not None]
    omitted = [s for s in ordered if s.error_ratio is None]
    return plotted, omitted


def render_scatter(
    summaries: Sequence[SettingSummary], spec: FigureSpec | None = None
) -> str:
    spec = spec or DEFAULT_SPECS[FigureKind.ERROR_RATIO_SCATTER]
    plotted, omitted = scatter_points(summaries)

    with matplotlib.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=spec.figsize, dpi=spec.dpi)

        for policy in PolicyName:
            points = [s for s in plotted if s.policy is policy]
            if not points:
                continue
            color, marker = POLICY_STYLE[policy]
            ax.scatter(
                [s.error_ratio for s in points],
                [s.mean_gap for s in points],
                c=color,
                marker=marker,
                label=policy.value,
                s=24,
            )
            for s in points:
                ax.annotate(
                    f"{s.setting.ordinal:02d}",
                    (s.error_ratio, s.mean_gap),
                    fontsize=5,
                    xytext=(2, 2),
                    textcoords="offset points",
                )

        ax.axvline(0.5, color="grey", linewidth=0.8, linestyle="--")
        ax.set_xlim(-0.02, 1.02)
        ax.set_xlabel("weighted error ratio")
        ax.set_ylabel("relative optimality gap")
        if plotted:
            ax.legend(loc="upper left", fontsize=8)

        if omitted:
            listing = ", ".join(f"{s.setting.ordinal:02d}/{s.policy.value}" for s in omitted)
            note = f"undefined ratio, omitted ({len(omitted)}): {listing}"
            fig.text(0.01, 0.01, textwrap.fill(note, 140), fontsize=5, va="bottom")
            fig.subplots_adjust(bottom=0.1 + 0.012 * (len(note) // 140 + 1))

        return _to_svg(fig)


def render_objective_profile(
    summaries: Sequence[SettingSummary], spec: FigureSpec | None = None
) -> str:
    """Mean objective of every policy and of the optimum, per setting."""
    spec = spec or DEFAULT_SPECS[FigureKind.OBJECTIVE_PROFILE]
    ordered = sorted(summaries, key=lambda s: (s.setting.ordinal, list(PolicyName).index(s.policy)))

    with matplotlib.rc_context(SVG_RC):
        fig, axes = plt.subplots(len(Constraint), 1, figsize=spec.figsize, dpi=spec.dpi, sharey=False)

        for ax, constraint in zip(axes, Constraint):
            regime = [s for s in ordered if s.setting.constraint is constraint]
            optimum: dict[int, float] = {}
            for s in regime:
                optimum.setdefault(s.setting.ordinal, s.mean_optimal)
            if optimum:
                color, marker = POLICY_STYLE[PolicyName.OPTIMAL]
                ax.plot(
                    list(optimum), list(optimum.values()),
                    color=color, marker=marker, markersize=3, linewidth=0.8, label="optimal",
                )
            for policy in PolicyName:
                if policy is PolicyName.OPTIMAL:
                    continue
                points = [s for s in regime if s.policy is policy]
                if not points:
                    continue
                color, marker = POLICY_STYLE[policy]
                ax.plot(
                    [s.setting.ordinal for s in points],
                    [s.mean_objective for s in points],
                    color=color, marker=marker, markersize=3, linewidth=0.8, label=policy.value,
                )
            ax.axhline(0.0, color="grey", linewidth=0.6)
            ax.set_title(f"{constraint.value} constraint", fontsize=10)
            ax.set_ylabel("mean objective")
            if regime:
                ax.legend(loc="best", fontsize=7)

        axes[-1].set_xlabel("setting")
        fig.tight_layout()
        return _to_svg(fig)
