"""
On-disk layout of a study.

    instances/s{setting:02}_i{instance:02}.json
    metrics/s{setting:02}_i{instance:02}_{policy}.csv    (optional)
    heatmaps/heatmap_{setting:02}_{policy}_{metric}.csv
    figures/*.svg
    summary.csv, report.json, manifest.json, outcomes.jsonl

Every file is written to a temporary sibling first and then moved into
place, so a crashed run never leaves a half-written artifact behind.
"""

import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable

import pandas as pd

from dmvrpx.aggregate import Heatmap, HeatmapMetric, SettingSummary
from dmvrpx.domain import Instance, PolicyName, setting_by_ordinal
from dmvrpx.errors import ArtifactIOError, UsageError


LOG = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

SUMMARY_COLUMNS = (
    "setting",
    "policy",
    "n_instances",
    "J_star",
    "J_pi",
    "gap",
    "E",
    "E_pooled",
    "dominant",
)


def instance_stem(setting_ordinal: int, instance_id: int) -> str:
    return f"s{setting_ordinal:02d}_i{instance_id:02d}"


def heatmap_name(setting_ordinal: int, policy: PolicyName, metric: HeatmapMetric) -> str:
    return f"heatmap_{setting_ordinal:02d}_{policy.value}_{metric.value}.csv"


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def dumps(data: Any, *, sort_keys: bool = True) -> str:
    return json.dumps(data, indent=2, sort_keys=sort_keys, allow_nan=False) + "\n"


def read_instance(path: Path | str) -> Instance:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read instance {path}: {exc}") from exc
    try:
        return Instance.from_json(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"malformed instance {path}: {exc}") from exc


class StudyStore:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ArtifactIOError(f"cannot create output directory {self.root}: {exc}") from exc

    # ---- writing ----

    def write_text(self, relative: str | Path, text: str) -> Path:
        path = self.root / relative
        tmp = path.with_name(path.name + ".tmp")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with tmp.open("w", newline="\n") as f:
                f.write(text)
            tmp.replace(path)
        except OSError as exc:
            raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
        return path

    def write_json(self, relative: str | Path, data: Any, *, sort_keys: bool = True) -> Path:
        return self.write_text(relative, dumps(data, sort_keys=sort_keys))

    def write_frame(self, relative: str | Path, frame: pd.DataFrame) -> Path:
        return self.write_text(relative, frame_to_csv(frame))

    def write_instance(self, instance: Instance) -> Path:
        stem = instance_stem(instance.setting.ordinal, instance.instance_id)
        return self.write_text(Path("instances") / f"{stem}.json", instance.to_json())

    def write_records(
        self, setting_ordinal: int, instance_id: int, policy: PolicyName, frame: pd.DataFrame
    ) -> Path:
        stem = instance_stem(setting_ordinal, instance_id)
        return self.write_frame(Path("metrics") / f"{stem}_{policy.value}.csv", frame)

    def write_outcomes(self, outcomes: Iterable[dict]) -> Path:
        """Per-instance outcome log, one JSON object per line."""
        lines = [json.dumps(o, sort_keys=True, allow_nan=False) + "\n" for o in outcomes]
        return self.write_text("outcomes.jsonl", "".join(lines))

    def write_summaries(self, summaries: Iterable[SettingSummary]) -> Path:
        rows = [s.serialize() for s in summaries]
        frame = pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))
        return self.write_frame("summary.csv", frame)

    def write_heatmaps(self, summary: SettingSummary) -> list[Path]:
        return [
            self.write_frame(
                Path("heatmaps") / heatmap_name(summary.setting.ordinal, summary.policy, metric),
                heatmap.to_frame(),
            )
            for metric, heatmap in summary.heatmaps.items()
        ]

    def write_figure(self, name: str, svg: str) -> Path:
        return self.write_text(Path("figures") / name, svg)

    # ---- reading ----

    def _read(self, relative: str | Path) -> str:
        path = self.root / relative
        try:
            return path.read_text()
        except OSError as exc:
            raise ArtifactIOError(f"cannot read {path}: {exc}") from exc

    def read_outcomes(self) -> list[dict]:
        lines = [line for line in self._read("outcomes.jsonl").splitlines() if line.strip()]
        try:
            return [json.loads(line) for line in lines]
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed JSON in {self.root / 'outcomes.jsonl'}: {exc}") from exc

    def read_heatmaps(
        self, setting_ordinal: int, policy: PolicyName
    ) -> dict[HeatmapMetric, Heatmap]:
        heatmaps = {}
        for metric in HeatmapMetric:
            relative = Path("heatmaps") / heatmap_name(setting_ordinal, policy, metric)
            frame = pd.read_csv(io.StringIO(self._read(relative)))
            heatmaps[metric] = Heatmap.from_frame(metric, frame)
        return heatmaps

    def read_summaries(self, *, with_heatmaps: bool = True) -> list[SettingSummary]:
        frame = pd.read_csv(io.StringIO(self._read("summary.csv")))
        missing = set(SUMMARY_COLUMNS) - set(frame.columns)
        if missing:
            raise UsageError(f"summary.csv lacks columns {sorted(missing)}")

        summaries = []
        for row in frame.itertuples(index=False):
            policy = PolicyName(row.policy)
            ratio = float(row.E)
            pooled = float(row.E_pooled)
            summaries.append(
                SettingSummary(
                    setting=setting_by_ordinal(int(row.setting)),
                    policy=policy,
                    n_instances=int(row.n_instances),
                    mean_objective=float(row.J_pi),
                    mean_optimal=float(row.J_star),
                    mean_gap=float(row.gap),
                    error_ratio=None if math.isnan(ratio) else ratio,
                    pooled_ratio=None if math.isnan(pooled) else pooled,
                    heatmaps=self.read_heatmaps(int(row.setting), policy) if with_heatmaps else {},
                )
            )
        LOG.debug("read %d summaries from %s", len(summaries), self.root)
        return summaries
