"""Streamlit dashboard for reviewing a grading run.

Shows training curves, patch- and slide-level metrics, per-slide score
reports and the reconstructed class maps of one run directory.
"""

import streamlit as st
import pandas as pd
import json
import os
import glob

import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import DEFAULT_RUN_DIR

st.set_page_config(page_title="Gleason Grading Review", layout="wide")


def load_json(path):
    if not os.path.exists(path):
        return None
    with open(path, "r") as f:
        return json.load(f)


def load_scores(run_dir):
    """Reads every per-slide score report into one DataFrame"""
    rows = []
    for file_path in sorted(glob.glob(os.path.join(run_dir, "scores", "*.json"))):
        report = load_json(file_path)
        rows.append({
            "Slide": report["slide_id"],
            "Method": report["method"],
            "Primary": report["primary"],
            "Secondary": report["secondary"],
            "Combined": report["combined"],
            **{f"% {k}": round(100 * v, 1) for k, v in report["percentages"].items()},
        })
    return pd.DataFrame(rows)


def load_history(run_dir, name):
    path = os.path.join(run_dir, "models", f"{name}_history.csv")
    return pd.read_csv(path) if os.path.exists(path) else pd.DataFrame()


# =============================================================================
# SIDEBAR: RUN SELECTION
# =============================================================================
st.sidebar.title("Run")
run_dir = st.sidebar.text_input("Run directory", value=DEFAULT_RUN_DIR)
run_config = load_json(os.path.join(run_dir, "config.json")) or {}
with st.sidebar.expander("Configuration", expanded=False):
    st.json(run_config)

# =============================================================================
# MAIN CONTENT
# =============================================================================
st.title("Gleason Grading Review")

if not os.path.isdir(run_dir):
    st.info("Run directory not found. Run `python main.py run-all` first.")
    st.stop()

tab1, tab2, tab3 = st.tabs(["Metrics", "Slides", "Training"])

with tab1:
    metrics = load_json(os.path.join(run_dir, "metrics.json"))
    if not metrics:
        st.info("No metrics yet. Run the evaluate stage.")
    else:
        patch = metrics.get("patch", {})
        slide = metrics.get("slide", {})
        col1, col2, col3, col4 = st.columns(4)
        with col1:
            st.metric("Patch accuracy", f"{patch.get('accuracy', 0):.3f}")
        with col2:
            st.metric("Patch kappa", f"{patch.get('kappa', 0):.3f}")
        with col3:
            st.metric("Slide kappa (threshold)", f"{slide.get('threshold', {}).get('kappa', 0):.3f}")
        with col4:
            st.metric("Slide kappa (MLP)", f"{slide.get('mlp_loo', {}).get('kappa', 0):.3f}")

        st.subheader("Patch confusion matrix")
        confusion_path = os.path.join(run_dir, "confusion.csv")
        if os.path.exists(confusion_path):
            st.dataframe(pd.read_csv(confusion_path, index_col=0))

        if "cribriform" in metrics:
            st.subheader("Cribriform detection")
            st.write(metrics["cribriform"])
            roc_path = os.path.join(run_dir, "roc.csv")
            if os.path.exists(roc_path):
                st.line_chart(pd.read_csv(roc_path), x="fpr", y="tpr")

with tab2:
    scores = load_scores(run_dir)
    if scores.empty:
        st.info("No score reports yet. Run the score stage.")
    else:
        st.dataframe(scores, width="stretch")
        slide_id = st.selectbox("Slide", sorted(scores["Slide"].unique()))
        overlay_path = os.path.join(run_dir, "slides", slide_id, "classmap_overlay.png")
        if os.path.exists(overlay_path):
            st.image(overlay_path, caption=f"{slide_id}: green GG3, blue GG4, red GG5")

with tab3:
    for name in ("grader", "cribriform"):
        history = load_history(run_dir, name)
        if history.empty:
            continue
        st.subheader(f"{name.capitalize()} training")
        st.line_chart(history, x="epoch", y=["loss", "accuracy"])

if st.button("Refresh"):
    st.rerun()
