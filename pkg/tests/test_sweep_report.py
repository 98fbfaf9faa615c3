"""Sweep structure, correlation, CSV round-trips, and SVG rendering."""

import csv
import io
import re
import xml.etree.ElementTree as ET

import numpy as np
import pandas as pd
import pytest

from rulrl.labeling import CostModel
from rulrl.simenv import NoAction, evaluate
from rulrl.sweep_report import (
    SweepCurve,
    correlation,
    curve_from_csv,
    default_grid,
    emit_csv,
    emit_svg,
    render_sweep_svg,
    sweep,
    worker_count,
)

from conftest import make_traj
from test_policy import threshold_policy
from test_simenv import constant_rul_model

ZERO = CostModel.zero_jitter()


def small_fleet():
    return [make_traj(n, unit_id=i + 1) for i, n in enumerate((40, 50, 60))]


class TestCorrelation:
    def test_identity(self):
        assert correlation(np.arange(5.0), np.arange(5.0)) == 1.0

    def test_negation(self):
        assert correlation(np.arange(5.0), -np.arange(5.0)) == -1.0

    def test_worked_example(self):
        x = np.array([0.0, 1.0, 2.0])
        y = np.array([0.0, 2.0, 3.0])
        # Oracle: direct covariance / product of norms.
        xd, yd = x - x.mean(), y - y.mean()
        expected = (xd * yd).sum() / np.sqrt((xd**2).sum() * (yd**2).sum())
        r = correlation(x, y)
        assert abs(r - expected) < 1e-12
        assert abs(r - 0.982) < 1e-3

    def test_zero_variance_errors(self):
        with pytest.raises(ValueError, match="zero-variance"):
            correlation(np.ones(4), np.arange(4.0))

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            correlation(np.arange(3.0), np.arange(4.0))
        with pytest.raises(ValueError):
            correlation(np.array([1.0]), np.array([2.0]))


class TestSweep:
    def test_single_point_grid(self):
        curve = sweep(
            threshold_policy(), small_fleet(), ZERO, grid=np.array([-5.0]),
            mode="constant", threads=1,
        )
        assert len(curve.records) == 1
        assert curve.argmax_target == -5.0
        # Threshold policy repairs immediately at a negative constant target.
        assert curve.records[0].mean == 1 - 25.0

    def test_always_continue_policy_equals_no_action(self):
        # Zero-scale net ties every decision, and ties go to CONTINUE.
        policy = threshold_policy(scale=0.0)
        fleet = small_fleet()
        grid = np.array([-20.0, 0.0, 20.0])
        curve = sweep(policy, fleet, ZERO, grid=grid, mode="constant", threads=1)
        no_action = evaluate(fleet, NoAction(), ZERO)
        for record in curve.records:
            assert record.mean == no_action.mean

    def test_baseline_selection(self):
        fleet = small_fleet()
        grid = np.array([0.0, 10.0])
        with_rul = sweep(
            threshold_policy(), fleet, ZERO, grid=grid,
            rul_model=constant_rul_model(500.0), mode="constant", threads=1,
        )
        assert [r.rule.split("(")[0] for r in with_rul.baselines] == [
            "no_action", "oracle_rul", "estimated_rul",
        ]
        mixed = fleet + [make_traj(30, unit_id=9, ends_in_failure=False)]
        without_oracle = sweep(
            threshold_policy(), mixed, ZERO, grid=grid, mode="constant", threads=1
        )
        assert [r.rule for r in without_oracle.baselines] == ["no_action"]

    def test_parallel_matches_serial(self, monkeypatch):
        fleet = small_fleet()
        grid = np.linspace(-30, 30, 7)
        serial = sweep(threshold_policy(), fleet, ZERO, grid=grid, mode="constant", threads=1)
        monkeypatch.setenv("RULRL_THREADS", "4")
        parallel = sweep(threshold_policy(), fleet, ZERO, grid=grid, mode="constant")
        assert np.array_equal(serial.means, parallel.means)

    def test_grid_validation(self):
        with pytest.raises(ValueError, match="increasing"):
            SweepCurve(
                grid=np.array([1.0, 1.0]),
                records=[_fake_record(0.0), _fake_record(0.0)],
                baselines=[],
                argmax_target=1.0,
            )

    def test_default_grid_span(self):
        policy = threshold_policy()  # rtg support [-1000, 1000]
        grid = default_grid(policy, points=25)
        assert len(grid) == 25
        assert grid[0] == 0.5 * policy.rtg_min
        assert grid[-1] == 1.5 * policy.rtg_max


def _fake_record(mean, rule="policy", target=0.0, returns=None):
    from rulrl.simenv import EvalRecord

    returns = np.array([mean]) if returns is None else np.asarray(returns, dtype=float)
    return EvalRecord.from_returns(rule, target, returns, len(returns), 1, [])


def _fake_curve():
    grid = np.array([-10.0, 0.0, 10.0, 20.0])
    means = [5.0, 11.0, 8.0, -3.0]
    records = [
        _fake_record(m, target=g, returns=[m - 1.0, m + 1.0]) for g, m in zip(grid, means)
    ]
    baselines = [
        _fake_record(-30.0, rule="no_action", target=None, returns=[-31.0, -29.0]),
        _fake_record(14.0, rule="oracle_rul(10)", target=None, returns=[13.0, 15.0]),
        _fake_record(6.0, rule="estimated_rul(10)", target=None, returns=[5.0, 7.0]),
    ]
    return SweepCurve(grid=grid, records=records, baselines=baselines, argmax_target=0.0)


class TestCsv:
    def test_row_count_and_roundtrip_exact(self, tmp_path):
        curve = _fake_curve()
        path = tmp_path / "curve.csv"
        emit_csv(curve, path)
        rows = list(csv.reader(open(path)))
        assert len(rows) == 1 + len(curve.grid) + 3
        again = curve_from_csv(path)
        assert np.array_equal(again.grid, curve.grid)
        for a, b in zip(again.records + again.baselines, curve.records + curve.baselines):
            assert a.mean == b.mean and a.std == b.std  # exact via repr round-trip
        assert again.argmax_target == curve.argmax_target

    def test_stored_stats_match_recomputation(self, tmp_path):
        curve = _fake_curve()
        path = tmp_path / "curve.csv"
        emit_csv(curve, path)
        parsed = {
            (row["rule"], row["target_return"]): row
            for row in csv.DictReader(open(path))
        }
        for g, record in zip(curve.grid, curve.records):
            row = parsed[(record.rule, repr(float(g)))]
            assert float(row["mean"]) == float(np.asarray(record.returns).mean())
            assert float(row["std"]) == float(np.asarray(record.returns).std())

    def test_rfc4180_by_independent_reader(self, tmp_path):
        path = tmp_path / "curve.csv"
        emit_csv(_fake_curve(), path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["rule", "target_return", "mean", "std", "n_units", "n_draws"]
        assert len(frame) == 7
        assert frame["target_return"].isna().sum() == 3  # baseline rows

    def test_unrecognized_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            curve_from_csv(path)


class TestSvg:
    def test_well_formed_and_self_contained(self, tmp_path):
        path = tmp_path / "curve.svg"
        emit_svg(_fake_curve(), path)
        root = ET.parse(path).getroot()
        assert root.tag.endswith("svg")
        assert root.attrib["viewBox"] == "0 0 960 540"
        text = path.read_text()
        assert "http://" not in text.replace("http://www.w3.org/2000/svg", "")

    def test_polyline_point_count_matches_grid(self):
        svg = render_sweep_svg([("policy", _fake_curve())])
        points = re.search(r'<polyline[^>]*points="([^"]+)"', svg).group(1)
        assert len(points.split()) == 4

    def test_y_pixel_order_matches_means(self):
        curve = _fake_curve()
        svg = render_sweep_svg([("policy", curve)])
        points = re.search(r'<polyline[^>]*points="([^"]+)"', svg).group(1)
        ys = np.array([float(p.split(",")[1]) for p in points.split()])
        # Larger mean -> smaller pixel y; orderings must be exactly reversed.
        assert np.array_equal(np.argsort(ys), np.argsort(-curve.means, kind="stable"))

    def test_baseline_lines_dashed(self):
        svg = render_sweep_svg([("policy", _fake_curve())])
        assert svg.count("stroke-dasharray") >= 3 + 3  # 3 lines + 3 legend swatches

    def test_multi_curve_legend(self):
        svg = render_sweep_svg([("with rul", _fake_curve()), ("without rul", _fake_curve())])
        assert svg.count("<polyline") == 2
        assert "with rul" in svg and "without rul" in svg


class TestWorkerCount:
    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("RULRL_THREADS", "3")
        assert worker_count() == 3

    def test_invalid_env(self, monkeypatch):
        monkeypatch.setenv("RULRL_THREADS", "0")
        with pytest.raises(ValueError):
            worker_count()

    def test_default_positive(self, monkeypatch):
        monkeypatch.delenv("RULRL_THREADS", raising=False)
        assert worker_count() >= 1
