#!/usr/bin/env python3
"""
Unit tests for components/report_view.py

Tests the report viewer functionality including:
- Reading suite reports into data frames
- Pass rates and mismatch tables
- Trace tables: event counts, confirmation timeline and players
- Streamlit rendering with a mocked streamlit module
"""

import json
from unittest.mock import MagicMock

import pytest

from components.report_view import (ReportView, confirmation_timeline, event_counts, list_files, mismatches,
                                    pass_rates, player_table, read_report)
from utils.model import ExecutionConfig, Player, Roster
from utils.trace import ExecutionTrace
from utils.transactions import StakeState, transfer_tx


def _record(instance, seed, status, expected, prop="agreement"):
    return json.dumps({"scenario": "partition", "instance": instance, "seed": seed, "property": prop,
                       "status": status, "expected": expected, "witness": {}, "params": {}})


@pytest.fixture
def report():
    return read_report([
        _record("I0", 0, "fail", "fail"),
        _record("I0", 1, "pass", "fail"),
        "",
        _record("I1", 0, "pass", "pass"),
    ])


@pytest.fixture
def trace():
    roster = Roster([Player("a", {"a"}, labels={"P1"}), Player("z", {"z"}, byzantine=True)])
    trace = ExecutionTrace(ExecutionConfig(duration=3), roster, StakeState({"a": 1}), scenario="demo")
    trace.register_tx(transfer_tx(trace.stake_state(), (), "a", "z", 1, tx_id="pay"))
    trace.record(1, "a", "status", data={"status": "active"})
    trace.record(1, "z", "status", data={"status": "active"})
    trace.record(2, "a", "confirm", data={"txs": ["pay"]})
    trace.record(3, "a", "output", data={"value": 1})
    return trace


class TestReportTables:
    """Test cases for the report helpers."""

    def test_read_report(self, report):
        """Test blank lines are skipped and matches are marked."""
        assert len(report) == 3
        assert list(report["matched"]) == [True, False, True]

    def test_pass_rates(self, report):
        """Test counts and match rates per scenario, instance and property."""
        rows = pass_rates(report).to_dict("records")

        assert rows[0]["instance"] == "I0"
        assert (rows[0]["seeds"], rows[0]["pass"], rows[0]["fail"], rows[0]["n/a"]) == (2, 1, 1, 0)
        assert rows[0]["match_rate"] == 0.5
        assert (rows[1]["instance"], rows[1]["seeds"], rows[1]["match_rate"]) == ("I1", 1, 1.0)

    def test_pass_rates_empty(self):
        """Test an empty report gives an empty table with the usual columns."""
        table = pass_rates(read_report([]))

        assert table.empty
        assert "match_rate" in table.columns

    def test_mismatches(self, report):
        """Test only unmatched records are listed."""
        failed = mismatches(report)

        assert len(failed) == 1
        assert failed.loc[0, "seed"] == 1

    def test_list_files(self):
        """Test files are filtered by suffix and sorted."""
        assert list_files(["b.jsonl", "a.jsonl", "notes.txt"]) == ["a.jsonl", "b.jsonl"]


class TestTraceTables:
    """Test cases for the trace helpers."""

    def test_event_counts(self, trace):
        """Test events are counted per timeslot and kind."""
        counts = event_counts(trace)

        assert counts.loc[1, "status"] == 2
        assert counts.loc[2, "confirm"] == 1
        assert counts.loc[1, "confirm"] == 0

    def test_confirmation_timeline(self, trace):
        """Test honest confirmation changes become rows."""
        assert confirmation_timeline(trace).to_dict("records") == [{"player": "a", "t": 2, "confirmed": 1}]

    def test_player_table(self, trace):
        """Test one row per player with its output."""
        rows = {row["player"]: row for row in player_table(trace).to_dict("records")}

        assert rows["a"]["output"] == 1
        assert rows["a"]["labels"] == "P1"
        assert rows["z"]["byzantine"]


class TestReportView:
    """Test cases for the Streamlit render functions."""

    def test_render_summary(self, report, mocker):
        """Test the summary metrics."""
        mock_st = mocker.patch('components.report_view.st')
        cols = [MagicMock() for _ in range(4)]
        mock_st.columns.return_value = cols

        ReportView.render_summary(report)

        cols[0].metric.assert_called_once_with("Records", 3)
        cols[1].metric.assert_called_once_with("Matched", 2)
        cols[2].metric.assert_called_once_with("Mismatched", 1)
        cols[3].metric.assert_called_once_with("Scenarios", 1)

    def test_render_mismatches(self, report, mocker):
        """Test mismatches are shown one expander each."""
        mock_st = mocker.patch('components.report_view.st')

        ReportView.render_mismatches(report)

        mock_st.error.assert_called_once()
        mock_st.expander.assert_called_once_with("partition/I0 seed 1: agreement")
        mock_st.success.assert_not_called()

    def test_render_all_matched(self, report, mocker):
        """Test a clean report shows a success message."""
        mock_st = mocker.patch('components.report_view.st')

        ReportView.render_mismatches(report[report["matched"]])

        mock_st.success.assert_called_once()
        mock_st.error.assert_not_called()

    def test_render_trace(self, trace, mocker):
        """Test a trace renders its tables and charts."""
        mock_st = mocker.patch('components.report_view.st')

        ReportView.render_trace(trace, trace.header())

        mock_st.subheader.assert_called_once_with("demo / -")
        mock_st.line_chart.assert_called_once()
        mock_st.bar_chart.assert_called_once()
        mock_st.warning.assert_not_called()


if __name__ == "__main__":
    pytest.main([__file__])
