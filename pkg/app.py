import os

import streamlit as st

from app_init import initialize_app
from components.report_view import ReportView, list_files, load_report
from config import get_settings
from utils.errors import SimulationError
from utils.trace import ExecutionTrace

initialize_app()
settings = get_settings()

st.set_page_config(
    page_title="Permissionless Consensus Lab",
    page_icon="🧪",
    layout="wide",
    initial_sidebar_state="expanded",
)

if 'initialized' not in st.session_state:
    st.session_state.initialized = True
    st.session_state.report_path = None
    st.session_state.trace_path = None


def _files(directory: str):
    if not os.path.isdir(directory):
        return []
    return list_files(os.path.join(directory, name) for name in os.listdir(directory))


@st.cache_data
def _report(path: str, mtime: float):
    return load_report(path)


@st.cache_data
def _trace_lines(path: str, mtime: float):
    with open(path, "r", encoding="utf-8") as f:
        return f.read().splitlines()


with st.sidebar:
    st.title("🧪 Consensus Lab")
    st.caption("Read-only viewer for suite reports and trace files")
    reports = _files(settings.report_dir)
    traces = _files(settings.trace_dir)
    st.session_state.report_path = st.selectbox("Report", reports, index=0 if reports else None,
                                                placeholder=f"no reports in {settings.report_dir}/")
    st.session_state.trace_path = st.selectbox("Trace", traces, index=0 if traces else None,
                                               placeholder=f"no traces in {settings.trace_dir}/")

report_tab, trace_tab = st.tabs(["📊 Report", "🔎 Trace"])

with report_tab:
    path = st.session_state.report_path
    if not path:
        st.info("Run `python main.py suite <suite.toml>` to produce a report.")
    else:
        frame = _report(path, os.path.getmtime(path))
        ReportView.render_summary(frame)
        scenarios = sorted(frame["scenario"].unique()) if len(frame) else []
        chosen = st.selectbox("Scenario", ["(all)"] + scenarios)
        ReportView.render_pass_rates(frame, None if chosen == "(all)" else chosen)
        ReportView.render_mismatches(frame)

with trace_tab:
    path = st.session_state.trace_path
    if not path:
        st.info("Run `python main.py run <scenario.toml>` to produce trace files.")
    else:
        try:
            trace = ExecutionTrace.from_lines(_trace_lines(path, os.path.getmtime(path)))
        except SimulationError as e:
            st.error(f"❌ Could not read {path}: {e}")
        else:
            ReportView.render_trace(trace, trace.header())
