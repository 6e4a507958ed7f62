"""
Report View Components

pandas helpers that turn suite reports and trace files into tables, and the
Streamlit render functions the viewer in app.py is built from.
"""

import json
import logging
from typing import Any, Iterable, List, Mapping, Optional

import pandas as pd
import streamlit as st

from utils.trace import ExecutionTrace

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["scenario", "instance", "seed", "property", "status", "expected", "witness", "params"]


# ----------------------------------------------------------------------------
# Data
# ----------------------------------------------------------------------------

def read_report(lines: Iterable[str]) -> pd.DataFrame:
    """One row per report record; blank lines are skipped."""
    rows = [json.loads(line) for line in lines if line.strip()]
    frame = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    frame["matched"] = frame["status"] == frame["expected"]
    return frame


def load_report(path: str) -> pd.DataFrame:
    with open(path, "r", encoding="utf-8") as f:
        return read_report(f)


def pass_rates(frame: pd.DataFrame) -> pd.DataFrame:
    """Per (scenario, instance, property): seeds run, pass / fail / n/a counts and match rate."""
    if frame.empty:
        return pd.DataFrame(columns=["scenario", "instance", "property", "seeds", "pass", "fail", "n/a",
                                     "match_rate"])
    counts = pd.crosstab([frame["scenario"], frame["instance"], frame["property"]], frame["status"])
    for status in ("pass", "fail", "n/a"):
        if status not in counts.columns:
            counts[status] = 0
    grouped = frame.groupby(["scenario", "instance", "property"])
    table = counts[["pass", "fail", "n/a"]].copy()
    table["seeds"] = grouped["seed"].nunique()
    table["match_rate"] = grouped["matched"].mean().round(4)
    return table.reset_index()[["scenario", "instance", "property", "seeds", "pass", "fail", "n/a",
                                "match_rate"]]


def mismatches(frame: pd.DataFrame) -> pd.DataFrame:
    if frame.empty:
        return frame
    return frame.loc[~frame["matched"], REPORT_COLUMNS].reset_index(drop=True)


def event_counts(trace: ExecutionTrace) -> pd.DataFrame:
    """Events per timeslot and kind."""
    frame = pd.DataFrame(trace.events, columns=["t", "player", "event_kind"])
    if frame.empty:
        return pd.DataFrame()
    return frame.pivot_table(index="t", columns="event_kind", values="player", aggfunc="count", fill_value=0)


def confirmation_timeline(trace: ExecutionTrace) -> pd.DataFrame:
    """Size of every honest player's confirmed set whenever it changes."""
    rows = [{"player": p, "t": t, "confirmed": len(ids)}
            for p in trace.honest_player_ids() for t, ids in trace.confirmed_changes(p)]
    return pd.DataFrame(rows, columns=["player", "t", "confirmed"])


def player_table(trace: ExecutionTrace) -> pd.DataFrame:
    corrupted = trace.corrupted()
    rows = []
    for player in trace.roster:
        output = trace.output_of(player.player_id)
        rows.append({
            "player": player.player_id,
            "identifiers": ", ".join(sorted(player.identifiers)),
            "byzantine": player.byzantine,
            "corrupted_at": corrupted.get(player.player_id),
            "labels": ", ".join(sorted(player.labels)),
            "output": None if output is None else output[1],
        })
    return pd.DataFrame(rows)


# ----------------------------------------------------------------------------
# Rendering
# ----------------------------------------------------------------------------

class ReportView:
    """Streamlit building blocks for the report viewer."""

    @staticmethod
    def render_summary(frame: pd.DataFrame):
        total = len(frame)
        matched = int(frame["matched"].sum()) if total else 0
        cols = st.columns(4)
        cols[0].metric("Records", total)
        cols[1].metric("Matched", matched)
        cols[2].metric("Mismatched", total - matched)
        cols[3].metric("Scenarios", frame["scenario"].nunique() if total else 0)

    @staticmethod
    def render_pass_rates(frame: pd.DataFrame, scenario: Optional[str] = None):
        table = pass_rates(frame)
        if scenario:
            table = table[table["scenario"] == scenario]
        st.dataframe(table, use_container_width=True, hide_index=True)

    @staticmethod
    def render_mismatches(frame: pd.DataFrame):
        failed = mismatches(frame)
        if failed.empty:
            st.success("✅ Every verdict matched its expectation")
            return
        st.error(f"❌ {len(failed)} verdicts did not match")
        for _, row in failed.iterrows():
            title = f"{row['scenario']}/{row['instance'] or '-'} seed {row['seed']}: {row['property']}"
            with st.expander(title):
                st.write(f"status **{row['status']}**, expected **{row['expected']}**")
                st.json(row["witness"] or {})

    @staticmethod
    def render_trace(trace: ExecutionTrace, header: Mapping[str, Any]):
        st.subheader(f"{trace.scenario or 'trace'} / {trace.instance or '-'}")
        st.caption(f"protocol {trace.protocol or '?'} · {trace.duration} timeslots · "
                   f"{len(trace.events)} events · {len(trace.flags)} flags")
        with st.expander("Configuration"):
            st.json(dict(header))
        st.dataframe(player_table(trace), use_container_width=True, hide_index=True)
        timeline = confirmation_timeline(trace)
        if not timeline.empty:
            st.line_chart(timeline.pivot_table(index="t", columns="player", values="confirmed").ffill())
        counts = event_counts(trace)
        if not counts.empty:
            st.bar_chart(counts)
        if trace.flags:
            st.warning(f"⚠️ {len(trace.flags)} trace flags")
            st.dataframe(pd.DataFrame(trace.flags), use_container_width=True, hide_index=True)


def list_files(paths: Iterable[str], suffix: str = ".jsonl") -> List[str]:
    return sorted(p for p in paths if p.endswith(suffix))
