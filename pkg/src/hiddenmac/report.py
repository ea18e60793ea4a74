"""Delimited output and figure rendering.

Analytic solutions and simulation statistics flatten onto one row schema
(metric, d, value, ci, n) so the two engines can be diffed column for
column.  Every file starts with ``# key=value`` comment lines carrying
the configuration digest, the seed, and the package version; identical
inputs therefore reproduce byte-identical files.  The same data can be
rendered to PNG next to the CSV.
"""

from __future__ import annotations

import csv
import io
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .cam import CamPerformance
from .model import ModelSolution
from .simulate import SimStats

CSV_COLUMNS = ("metric", "d", "value", "ci", "n")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def solution_rows(sol: ModelSolution, cam: CamPerformance | None = None) -> list:
    rows = []

    def add(metric, value, d=None, ci=None, n=None):
        rows.append({"metric": metric, "d": d, "value": value, "ci": ci, "n": n})

    add("tau", sol.tau)
    add("eta", sol.eta)
    add("rho", sol.rho)
    add("p_i", sol.p_i)
    add("mean_t_bp", sol.mean_t_bp)
    add("mean_t_ntp", sol.mean_t_ntp)
    add("mean_d_s", sol.mean_d_s)
    add("lambda_f_sat_per_slot", sol.lambda_f_sat)
    add("residual", sol.residual)
    if sol.quantities is not None:
        add("p_if", sol.quantities.p_if)
        add("goodput", sol.quantities.goodput)
        add("mean_t_txp", sol.quantities.mean_t_txp)
    if cam is not None:
        for d in range(1, len(cam.t_ui_slots) + 1):
            add("t_ui", cam.t_ui_slots[d - 1], d=d)
            add("t_ui_seconds", cam.t_ui_seconds[d - 1], d=d)
            add("p_fif", cam.p_fif[d - 1], d=d)
            add("p_async", cam.p_async[d - 1], d=d)
    return rows


def stats_rows(stats: SimStats) -> list:
    rows = []
    ci = stats.ci_halfwidth

    def add(metric, value, d=None, c=None, n=None):
        rows.append({"metric": metric, "d": d, "value": value, "ci": c, "n": n})

    add("tau", stats.tau_hat, c=ci.get("tau_hat"), n=stats.n_samples.get("boundaries"))
    add("eta", stats.eta_hat, c=ci.get("eta_hat"), n=stats.n_samples.get("tx_protocol_slots"))
    add("rho", stats.rho_hat, c=ci.get("rho_hat"))
    add("p_i", stats.p_i_hat, c=ci.get("p_i_hat"))
    add("mean_t_bp", stats.mean_t_bp, c=ci.get("mean_t_bp"), n=stats.n_samples.get("busy_runs"))
    add("mean_t_ntp", stats.mean_t_ntp, c=ci.get("mean_t_ntp"))
    add("mean_d_s", stats.mean_d_s, c=ci.get("mean_d_s"), n=stats.n_samples.get("d_s"))
    add("p_if", stats.p_if_hat, c=ci.get("p_if_hat"), n=stats.n_samples.get("reception_events"))
    add("goodput", stats.goodput_hat)
    add("mean_t_txp", stats.mean_t_txp, c=ci.get("mean_t_txp"))
    tui_ci = ci.get("t_ui_mean")
    fif_ci = ci.get("p_fif_hat")
    for d in range(1, len(stats.t_ui_mean) + 1):
        add("t_ui", stats.t_ui_mean[d - 1], d=d,
            c=None if tui_ci is None else tui_ci[d - 1])
        add("p_fif", stats.p_fif_hat[d - 1], d=d,
            c=None if fif_ci is None else fif_ci[d - 1])
        add("p_async", stats.p_async_hat[d - 1], d=d)
    return rows


def write_rows_csv(path, rows, meta: dict, extra_columns=()) -> None:
    """Write schema rows with deterministic formatting and a metadata header."""
    cols = tuple(extra_columns) + CSV_COLUMNS
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    buf.write(",".join(cols) + "\n")
    for row in rows:
        out = []
        for c in cols:
            v = row.get(c)
            out.append("" if v is None else (_fmt(v) if not isinstance(v, str) else v))
        buf.write(",".join(out) + "\n")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_json(path, payload: dict, meta: dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"meta": meta, "data": payload}, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_rows_csv(path):
    meta, rows = {}, []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(dict(zip(header, line.split(","))))
    return meta, rows


def render_series(rows, x_column, out_png, title="", xlabel="", ylabel="",
                  logx=False, logy=False) -> None:
    """Plot value-vs-x curves, one line per (series, metric, d) triple."""
    groups: dict = {}
    for row in rows:
        key = (row.get("series", ""), row["metric"], row.get("d") or "")
        x = float(row[x_column])
        y = row["value"]
        y = float(y) if y not in ("", None) else float("nan")
        ci = row.get("ci")
        ci = float(ci) if ci not in ("", None) else 0.0
        groups.setdefault(key, []).append((x, y, ci))
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for key in sorted(groups):
        pts = sorted(groups[key])
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        es = [p[2] for p in pts]
        label = " ".join(str(k) for k in key if k != "")
        if any(e > 0 for e in es):
            ax.errorbar(xs, ys, yerr=es, marker="o", ms=3, capsize=2, label=label)
        else:
            ax.plot(xs, ys, marker="o", ms=3, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if len(groups) <= 14:
        ax.legend(fontsize=7)
    fig.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(out_png)), exist_ok=True)
    fig.savefig(out_png, dpi=130)
    plt.close(fig)


def cam_rows(source: str, slot_seconds: float, t_ui_slots, p_async, p_fif) -> list:
    """Wide per-distance awareness rows: d, t_ui_s, p_async, p_fif, source."""
    t_ui = np.asarray(t_ui_slots, dtype=float)
    pa = np.asarray(p_async, dtype=float)
    pf = np.asarray(p_fif, dtype=float)
    rows = []
    for d in range(1, len(t_ui) + 1):
        rows.append({
            "d": d,
            "t_ui_s": t_ui[d - 1] * slot_seconds,
            "p_async": pa[d - 1],
            "p_fif": pf[d - 1],
            "source": source,
        })
    return rows


def write_cam_csv(path, rows, meta: dict) -> None:
    cols = ("d", "t_ui_s", "p_async", "p_fif", "source")
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    buf.write(",".join(cols) + "\n")
    for row in rows:
        cells = [row["source"] if c == "source" else _fmt(row[c]) for c in cols]
        buf.write(",".join(str(c) for c in cells) + "\n")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def standard_meta(config_map: dict, seed) -> dict:
    from .config import config_digest

    return {
        "config_hash": config_digest(config_map),
        "seed": seed,
        "version": __version__,
        **{f"param_{k}": v for k, v in sorted(config_map.items())},
    }
