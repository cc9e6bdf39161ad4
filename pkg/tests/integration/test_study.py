"""
End-to-end study runs on a two-setting subset.

These tests verify:
- The output tree and its summary contents
- Zero invariant violations
- Byte-identical reruns, independent of the worker count
- The optimal policy measured against itself has no gap and no error ratio
"""

import json

import pandas as pd
import pytest

from dmvrpx.config import StudyConfig
from dmvrpx.domain import PolicyName
from dmvrpx.store import StudyStore
from dmvrpx.study import run_study


def _config(out_dir, **overrides):
    fields = dict(
        root_seed=7,
        instances_per_setting=2,
        settings=[0, 65],
        policies="dpc,mcts,myopic",
        figures=True,
        out_dir=out_dir,
    )
    fields.update(overrides)
    return StudyConfig(**fields)


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def finished_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    report = run_study(_config(out))
    return out, report


class TestStudyOutput:
    def test_output_tree(self, finished_study):
        out, _ = finished_study

        assert sorted(p.name for p in (out / "instances").iterdir()) == [
            "s00_i00.json",
            "s00_i01.json",
            "s65_i00.json",
            "s65_i01.json",
        ]
        for name in ("summary.csv", "report.json", "manifest.json", "outcomes.jsonl"):
            assert (out / name).is_file()
        # 2 settings x 3 policies x 5 tables
        assert len(list((out / "heatmaps").glob("*.csv"))) == 30
        figures = sorted(p.name for p in (out / "figures").iterdir())
        assert "error_ratio_scatter.svg" in figures
        assert "objective_profile.svg" in figures
        assert len(figures) == 2 + 6

    def test_summary_rows_in_canonical_order(self, finished_study):
        out, _ = finished_study
        summary = pd.read_csv(out / "summary.csv")

        assert list(zip(summary["setting"], summary["policy"])) == [
            (0, "dpc"),
            (0, "mcts"),
            (0, "myopic"),
            (65, "dpc"),
            (65, "mcts"),
            (65, "myopic"),
        ]
        assert (summary["n_instances"] == 2).all()
        assert (summary["J_pi"] <= summary["J_star"] + 1e-9).all()

    def test_no_invariant_violations(self, finished_study):
        out, report = finished_study

        assert report.invariants.ok
        assert report.n_failed == 0
        assert report.incomplete_settings == []
        data = json.loads((out / "report.json").read_text())
        assert all(v["violations"] == 0 for v in data["invariants"].values())

    def test_manifest_omits_output_location(self, finished_study):
        out, _ = finished_study
        manifest = json.loads((out / "manifest.json").read_text())

        assert "out_dir" not in manifest["config"]
        assert manifest["config"]["settings"] == [0, 65]
        assert "SeedSequence" in manifest["seed_scheme"]

    def test_outcomes_reproduce_the_error_ratios(self, finished_study):
        out, report = finished_study
        outcomes = StudyStore(out).read_outcomes()

        assert len(outcomes) == 4
        for summary in report.summaries:
            terms = [
                o["regret"][summary.policy.value]
                for o in outcomes
                if o["setting"] == summary.setting.ordinal
            ]
            over = sum(t["over"] for t in terms)
            total = sum(t["total"] for t in terms)
            ratios = [t["E"] for t in terms if t["E"] is not None]

            if summary.pooled_ratio is None:
                assert total == 0.0
            else:
                assert summary.pooled_ratio == pytest.approx(over / total)
            if summary.error_ratio is None:
                assert ratios == []
            else:
                assert summary.error_ratio == pytest.approx(sum(ratios) / len(ratios))

    def test_summaries_read_back(self, finished_study):
        out, report = finished_study
        assert StudyStore(out).read_summaries() == report.summaries


class TestStudyDeterminism:
    def test_rerun_is_byte_identical(self, finished_study, tmp_path):
        out, _ = finished_study
        run_study(_config(tmp_path))

        assert _tree(tmp_path) == _tree(out)

    def test_worker_count_does_not_change_output(self, tmp_path):
        serial = tmp_path / "serial"
        pooled = tmp_path / "pooled"
        run_study(_config(serial, figures=False, dump_metrics=True))
        run_study(_config(pooled, figures=False, dump_metrics=True, workers=2))

        assert _tree(serial) == _tree(pooled)
        assert len(list((serial / "metrics").glob("*.csv"))) == 4 * 3


class TestOptimalPolicy:
    def test_optimal_has_no_gap_and_no_error_ratio(self, tmp_path):
        report = run_study(_config(tmp_path, policies="optimal", figures=False))

        for summary in report.summaries:
            assert summary.policy is PolicyName.OPTIMAL
            assert summary.mean_gap == pytest.approx(0.0, abs=1e-9)
            assert summary.error_ratio is None
        assert report.dominance[PolicyName.OPTIMAL] == 0.0
