"""Command-line front end.

Verbs: ``oracle`` (raw channel-quantity runs), ``sim`` (one MAC
simulation), ``sweep`` (parameter sweeps over either engine), ``compare``
(analytic versus simulated with a tolerance profile), and ``figure``
(preset sweeps emitting plot-ready CSV plus rendered PNG).  All outputs
are UTF-8 CSV/JSON; re-running a command with the same configuration and
seeds reproduces the files byte for byte.

Exit codes: 0 success, 2 configuration error, 3 tolerance failure in
``compare``, 4 insufficient samples.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import __version__
from .cam import cam_report
from .config import (
    ProtocolConfig,
    QueuePolicy,
    TrafficConfig,
    config_digest,
    load_config,
)
from .errors import HiddenMacError, ConfigError
from .model import solve
from .oracle import OracleParams, build_provider, run_oracle
from .report import (
    render_series,
    solution_rows,
    standard_meta,
    stats_rows,
    write_json,
    write_rows_csv,
)
from .scenario import (
    build_loop_topology,
    load_position_snapshot,
    synthesize_multilane_snapshot,
)
from .simulate import run_protocol_sim
from .units import PhyMode, frame_bytes_to_slots

FULL_PROFILE = dict(oracle_warmup=20_000, oracle_measure=150_000,
                    sim_warmup=None, sim_measure=150_000, n_stations=800)
FAST_PROFILE = dict(oracle_warmup=4_000, oracle_measure=30_000,
                    sim_warmup=8_000, sim_measure=30_000, n_stations=200)

# provider grid: dense at low access probability where the light-load
# solutions live, with the saturated anchors 2/(cw+1) added per command
BASE_GRID = [1e-5, 1e-4, 3e-4, 1e-3, 2.5e-3, 5e-3, 1e-2,
             2.2e-2, 5e-2, 0.1, 0.2, 0.35, 0.5]

PROBABILITY_METRICS = ("tau", "eta", "rho", "p_i", "p_if", "goodput", "p_fif", "p_async")
TIME_METRICS = ("mean_t_bp", "mean_t_ntp", "mean_d_s", "t_ui", "mean_t_txp")


def _profile(args) -> dict:
    return dict(FAST_PROFILE if args.fast else FULL_PROFILE)


def _merge_config(args) -> dict:
    cfg = {}
    if args.config:
        cfg.update(load_config(args.config))
    for key in ("cw_min", "payload_bytes", "frame_slots", "lambda_f", "n_stations",
                "beta", "r_meters", "queue_policy", "warmup", "measure", "param",
                "grid", "engines", "snapshot", "profile"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _frame_slots(cfg) -> int:
    if cfg.get("frame_slots"):
        return int(cfg["frame_slots"])
    payload = int(cfg.get("payload_bytes", 200))
    return frame_bytes_to_slots(payload, PhyMode.QPSK_HALF)


def _protocol(cfg, strict=False) -> ProtocolConfig:
    return ProtocolConfig(
        cw_min=int(cfg.get("cw_min", 63)),
        frame_len_slots=_frame_slots(cfg),
        strict_draw=strict,
    )


def _traffic(cfg) -> TrafficConfig:
    policy = str(cfg.get("queue_policy", "infinite_fifo")).lower()
    mapping = {"infinite_fifo": QueuePolicy.INFINITE_FIFO, "fifo": QueuePolicy.INFINITE_FIFO,
               "single_overwrite": QueuePolicy.SINGLE_OVERWRITE, "overwrite": QueuePolicy.SINGLE_OVERWRITE}
    if policy not in mapping:
        raise ConfigError(f"unknown queue_policy {policy!r}")
    return TrafficConfig(lambda_f=float(cfg.get("lambda_f", 100.0)), queue_policy=mapping[policy])


def _snapshot(cfg, prof):
    if cfg.get("snapshot"):
        return load_position_snapshot(cfg["snapshot"])
    n = int(cfg.get("n_stations", prof["n_stations"]))
    beta = float(cfg.get("beta", 1.0 / 30.0))
    r = float(cfg.get("r_meters", 480.0))
    return build_loop_topology(n, beta, r)


def _provider(args, frame_slots, r_neighbors, cw_values, prof, extra_low=(), n_hint=None):
    anchors = sorted({2.0 / (int(c) + 1) for c in cw_values})
    grid = sorted(set(g for g in BASE_GRID if g <= max(anchors)) | set(anchors) | set(extra_low))
    n = max(n_hint or prof["n_stations"], 4 * r_neighbors + 32)
    return build_provider(
        grid, frame_slots, r_neighbors, n,
        warmup_slots=prof["oracle_warmup"], measure_slots=prof["oracle_measure"],
        master_seed=args.seed, cache_dir=args.cache_dir,
    )


def cmd_oracle(args) -> int:
    cfg = _merge_config(args)
    prof = _profile(args)
    L = _frame_slots(cfg)
    r_n = int(cfg.get("r_neighbors", args.r_neighbors or 16))
    n = int(cfg.get("n_stations", prof["n_stations"]))
    n = max(n, 4 * r_n + 32)
    params = OracleParams(
        p_tx=float(args.p_tx), frame_len_slots=L, r_neighbors=r_n, n_stations=n,
        warmup_slots=int(cfg.get("warmup") or prof["oracle_warmup"]),
        measure_slots=int(cfg.get("measure") or prof["oracle_measure"]),
        seed=args.seed,
    )
    q = run_oracle(params, trace_path=args.trace, trace_limit=args.trace_limit)
    meta = standard_meta({**cfg, "p_tx": args.p_tx, "n_stations": n, "r_neighbors": r_n,
                          "frame_slots": L}, args.seed)
    write_json(f"{args.out_dir}/oracle_quantities.json", q.to_jsonable(), meta)
    rows = [{"metric": k, "d": None, "value": getattr(q, k), "ci": q.ci_halfwidth.get(k), "n": None}
            for k in ("p_ii", "p_tx_given_idle", "mean_t_rb", "p_i", "p_of", "p_if",
                      "mean_t_rxp", "mean_t_txp", "goodput")]
    for d in range(1, len(q.f_d_given_if) + 1):
        rows.append({"metric": "f_d_given_if", "d": d, "value": q.f_d_given_if[d - 1],
                     "ci": None, "n": None})
    write_rows_csv(f"{args.out_dir}/oracle_quantities.csv", rows, meta)
    print(f"wrote {args.out_dir}/oracle_quantities.csv")
    for w in q.warnings:
        print(f"warning: {w}")
    return 4 if q.warnings else 0


def cmd_sim(args) -> int:
    cfg = _merge_config(args)
    prof = _profile(args)
    protocol = _protocol(cfg, strict=args.strict_80211)
    traffic = _traffic(cfg)
    snap = _snapshot(cfg, prof)
    log = [] if args.reception_log else None
    stats = run_protocol_sim(
        protocol, traffic, snap, seed=args.seed,
        warmup_slots=cfg.get("warmup") or prof["sim_warmup"],
        measure_slots=int(cfg.get("measure") or prof["sim_measure"]),
        reception_log=log,
    )
    meta = standard_meta(cfg, args.seed)
    write_json(f"{args.out_dir}/sim_stats.json", stats.to_jsonable(), meta)
    write_rows_csv(f"{args.out_dir}/sim_stats.csv", stats_rows(stats), meta)
    if traffic.queue_policy is QueuePolicy.SINGLE_OVERWRITE:
        from .report import cam_rows, write_cam_csv

        write_cam_csv(
            f"{args.out_dir}/cam_metrics.csv",
            cam_rows("simulated", protocol.slot_seconds,
                     stats.t_ui_mean, stats.p_async_hat, stats.p_fif_hat),
            meta,
        )
    if args.reception_log:
        with open(args.reception_log, "w", encoding="utf-8") as fh:
            fh.write("receiver,transmitter,start_slot,interference_free\n")
            for r, s, t, ok in log:
                fh.write(f"{r},{s},{t},{int(ok)}\n")
    print(f"wrote {args.out_dir}/sim_stats.csv")
    gaps = [w for w in stats.warnings if "fewer than" in w or "no reception" in w]
    return 4 if gaps else 0


def _sweep_point(cfg, name, value):
    point = dict(cfg)
    point[name] = value
    if name == "r":
        point["r_meters"] = value
    return point


def _analytic_rows(point_cfg, args, prof, providers):
    protocol = _protocol(point_cfg)
    traffic = _traffic(point_cfg)
    if point_cfg.get("r_neighbors") is not None:
        r_n = int(point_cfg["r_neighbors"])
    else:
        beta = float(point_cfg.get("beta", 1.0 / 30.0))
        r_m = float(point_cfg.get("r_meters", 480.0))
        r_n = int(math.floor(r_m * beta + 1e-9))
    key = (protocol.frame_len_slots, r_n)
    if key not in providers:
        extra = ()
        if traffic.queue_policy is QueuePolicy.SINGLE_OVERWRITE:
            extra = (2e-6, 5e-6)
        n_hint = int(point_cfg["n_stations"]) if point_cfg.get("n_stations") else None
        providers[key] = _provider(args, key[0], key[1], [protocol.cw_min], prof,
                                   extra_low=extra, n_hint=n_hint)
    sol = solve(protocol, traffic, providers[key])
    cam = None
    if traffic.queue_policy is QueuePolicy.SINGLE_OVERWRITE and sol.quantities is not None:
        cam = cam_report(sol, sol.quantities, protocol)
    return solution_rows(sol, cam)


def _sim_rows(point_cfg, args, prof, seed):
    protocol = _protocol(point_cfg, strict=args.strict_80211)
    traffic = _traffic(point_cfg)
    snap = _snapshot(point_cfg, prof)
    stats = run_protocol_sim(
        protocol, traffic, snap, seed=seed,
        warmup_slots=point_cfg.get("warmup") or prof["sim_warmup"],
        measure_slots=int(point_cfg.get("measure") or prof["sim_measure"]),
    )
    return stats_rows(stats)


def cmd_sweep(args) -> int:
    cfg = _merge_config(args)
    prof = _profile(args)
    name = cfg.get("param", "lambda_f")
    if name not in ("lambda_f", "cw_min", "frame_slots", "r_neighbors", "r", "payload_bytes"):
        raise ConfigError(f"unknown sweep parameter {name!r}")
    grid = _parse_grid(cfg.get("grid"))
    engines = _parse_engines(cfg.get("engines", "analytic,sim"))
    providers: dict = {}
    all_rows = []
    sim_results = _sim_grid(cfg, name, grid, args, prof) if "sim" in engines else {}
    for idx, value in enumerate(grid):
        point = _sweep_point(cfg, name, value)
        for engine in engines:
            try:
                if engine == "analytic":
                    rows = _analytic_rows(point, args, prof, providers)
                else:
                    rows = sim_results[idx]
                    if isinstance(rows, Exception):
                        raise rows
            except HiddenMacError as exc:
                all_rows.append({"swept_param": name, "swept_value": value, "series": engine,
                                 "metric": "error", "d": None, "value": None, "ci": None,
                                 "n": None, "note": type(exc).__name__})
                continue
            for row in rows:
                all_rows.append({"swept_param": name, "swept_value": value, "series": engine, **row})
    meta = standard_meta(cfg, args.seed)
    out_csv = f"{args.out_dir}/sweep_{name}.csv"
    write_rows_csv(out_csv, all_rows, meta, extra_columns=("swept_param", "swept_value", "series"))
    for metric in sorted({r["metric"] for r in all_rows if r["metric"] != "error"}):
        rows = [r for r in all_rows if r["metric"] == metric]
        render_series(rows, "swept_value", f"{args.out_dir}/sweep_{name}_{metric}.png",
                      title=f"{metric} vs {name}", xlabel=name, ylabel=metric,
                      logx=name == "lambda_f")
    print(f"wrote {out_csv}")
    return 0


def _sim_grid(cfg, name, grid, args, prof) -> dict:
    """Simulation runs for every grid point, optionally on a worker pool.

    Results are keyed by grid index, so output ordering follows the grid
    regardless of completion order; each run is deterministic from its
    own derived seed.
    """
    points = [(idx, _sweep_point(cfg, name, value)) for idx, value in enumerate(grid)]
    out: dict = {}
    if args.workers and args.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = {
                idx: pool.submit(_sim_rows_task, point, args.seed + idx,
                                 prof, args.strict_80211)
                for idx, point in points
            }
            for idx, fut in futures.items():
                try:
                    out[idx] = fut.result()
                except HiddenMacError as exc:
                    out[idx] = exc
        return out
    for idx, point in points:
        try:
            out[idx] = _sim_rows(point, args, prof, seed=args.seed + idx)
        except HiddenMacError as exc:
            out[idx] = exc
    return out


def _sim_rows_task(point_cfg, seed, prof, strict):
    protocol = _protocol(point_cfg, strict=strict)
    traffic = _traffic(point_cfg)
    snap = _snapshot(point_cfg, prof)
    stats = run_protocol_sim(
        protocol, traffic, snap, seed=seed,
        warmup_slots=point_cfg.get("warmup") or prof["sim_warmup"],
        measure_slots=int(point_cfg.get("measure") or prof["sim_measure"]),
    )
    return stats_rows(stats)


def _parse_grid(raw):
    if raw is None:
        raise ConfigError("sweep requires a grid")
    if isinstance(raw, str):
        raw = [float(x) for x in raw.split(",") if x.strip()]
    vals = [float(x) for x in raw]
    if not vals or any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("grid must be non-empty and strictly increasing")
    return vals


def _parse_engines(raw):
    if isinstance(raw, str):
        engines = tuple(e.strip() for e in raw.split(",") if e.strip())
    else:
        engines = tuple(raw)
    for e in engines:
        if e not in ("analytic", "sim"):
            raise ConfigError(f"unknown engine {e!r}")
    return engines


def _tolerance_check(metric, d, a, s, ci, profile, fast):
    widen = 2.0 if fast else 1.0
    if profile == "small-cw":
        if metric in ("p_if", "goodput"):
            limit = s + (ci or 0.0) + 1e-12
            return a <= limit, f"directional a<=s+ci ({a:.6g} vs {limit:.6g})"
        return True, "informational"
    if metric in PROBABILITY_METRICS:
        tol = max(0.10 * abs(s), 0.02) * widen
        return abs(a - s) <= tol, f"|a-s|={abs(a - s):.4g} tol={tol:.4g}"
    if metric in TIME_METRICS:
        tol = 0.15 * abs(s) * widen
        return abs(a - s) <= tol, f"|a-s|={abs(a - s):.4g} tol={tol:.4g}"
    return True, "informational"


def cmd_compare(args) -> int:
    cfg = _merge_config(args)
    prof = _profile(args)
    name = cfg.get("param", "lambda_f")
    grid = _parse_grid(cfg.get("grid"))
    profile = args.tolerance_profile
    providers: dict = {}
    report_rows = []
    failures = gaps = 0
    for idx, value in enumerate(grid):
        point = _sweep_point(cfg, name, value)
        a_rows = {(r["metric"], r["d"]): r for r in _analytic_rows(point, args, prof, providers)}
        s_rows = {(r["metric"], r["d"]): r for r in _sim_rows(point, args, prof, seed=args.seed + idx)}
        for key in sorted(set(a_rows) & set(s_rows), key=str):
            metric, d = key
            a = a_rows[key]["value"]
            s = s_rows[key]["value"]
            ci = s_rows[key].get("ci") or 0.0
            if a is None or s is None or not np.isfinite(a) or not np.isfinite(s):
                gaps += 1
                status, note = "gap", "missing counterpart value"
            else:
                ok, note = _tolerance_check(metric, d, a, s, ci, profile, args.fast)
                status = "pass" if ok else "fail"
                failures += 0 if ok else 1
            rel = (abs(a - s) / abs(s)) if (a is not None and s and np.isfinite(a) and np.isfinite(s)) else None
            report_rows.append({
                "swept_param": name, "swept_value": value, "metric": metric, "d": d,
                "analytic": a, "simulated": s, "ci": ci, "rel_error": rel,
                "status": status, "note": note,
            })
    meta = standard_meta({**cfg, "profile": profile}, args.seed)
    out_csv = f"{args.out_dir}/compare_{name}.csv"
    _write_compare_csv(out_csv, report_rows, meta)
    paired = [dict(r, series="analytic", value=r["analytic"]) for r in report_rows] + \
             [dict(r, series="simulated", value=r["simulated"]) for r in report_rows]
    for metric in sorted({r["metric"] for r in report_rows}):
        rows = [r for r in paired if r["metric"] == metric and r["value"] is not None]
        if rows:
            render_series(rows, "swept_value", f"{args.out_dir}/compare_{name}_{metric}.png",
                          title=f"{metric}: analytic vs simulated", xlabel=name,
                          ylabel=metric, logx=name == "lambda_f")
    print(f"wrote {out_csv} ({failures} failures, {gaps} gaps)")
    if failures:
        return 3
    if gaps:
        return 4
    return 0


def _write_compare_csv(path, rows, meta):
    cols = ("swept_param", "swept_value", "metric", "d", "analytic", "simulated",
            "ci", "rel_error", "status", "note")
    out = []
    for r in rows:
        out.append({c: r.get(c) for c in cols})
    import io, os
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    buf.write(",".join(cols) + "\n")
    for r in out:
        cells = []
        for c in cols:
            v = r[c]
            if v is None:
                cells.append("")
            elif isinstance(v, str):
                cells.append(v)
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(repr(float(v)))
        buf.write(",".join(cells) + "\n")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


# ---------------------------------------------------------------------------
# figure presets: parameterised on the reference loop (800 stations at 30 m
# spacing, 16 neighbours per side, 32-slot frames) and the highway scenarios

FIGURES = {
    "fig6": dict(kind="validation", metrics=("tau", "eta", "rho", "p_i")),
    "fig7": dict(kind="validation", metrics=("mean_t_bp", "mean_t_ntp", "mean_d_s")),
    "fig8": dict(kind="validation", metrics=("p_if", "goodput")),
    "fig10": dict(kind="multilane", metrics=("t_ui",)),
    "fig11": dict(kind="multilane", metrics=("p_fif",)),
    "fig12": dict(kind="cam-optim", cw_min=63),
    "fig13": dict(kind="cam-optim", cw_min=127),
}


def cmd_figure(args) -> int:
    spec = FIGURES.get(args.name)
    if spec is None:
        raise ConfigError(f"unknown figure {args.name!r}; choose from {sorted(FIGURES)}")
    prof = _profile(args)
    if spec["kind"] == "validation":
        return _figure_validation(args, spec, prof)
    if spec["kind"] == "multilane":
        return _figure_multilane(args, spec, prof)
    return _figure_cam_optim(args, spec, prof)


def _figure_validation(args, spec, prof):
    lam_grid = [30.0, 120.0, 800.0] if args.fast else \
        [10.0, 30.0, 60.0, 90.0, 120.0, 200.0, 400.0, 800.0, 1300.0]
    providers: dict = {}
    for sub, cw in (("a", 3), ("b", 63)):
        rows = []
        base = {"cw_min": cw, "frame_slots": 32, "lambda_f": None}
        for idx, lam in enumerate(lam_grid):
            point = dict(base, lambda_f=lam)
            for engine in ("analytic", "sim"):
                try:
                    got = (_analytic_rows(point, args, prof, providers) if engine == "analytic"
                           else _sim_rows(point, args, prof, seed=args.seed + idx))
                except HiddenMacError as exc:
                    rows.append({"swept_param": "lambda_f", "swept_value": lam, "series": engine,
                                 "metric": "error", "d": None, "value": None, "ci": None, "n": None})
                    continue
                rows.extend({"swept_param": "lambda_f", "swept_value": lam, "series": engine, **r}
                            for r in got if r["metric"] in spec["metrics"])
        meta = standard_meta({"figure": args.name, "subplot": sub, "cw_min": cw,
                              "frame_slots": 32, "r_neighbors": 16}, args.seed)
        csv_path = f"{args.out_dir}/{args.name}{sub}.csv"
        write_rows_csv(csv_path, rows, meta, extra_columns=("swept_param", "swept_value", "series"))
        render_series(rows, "swept_value", f"{args.out_dir}/{args.name}{sub}.png",
                      title=f"{args.name}({sub}): cw_min={cw}", xlabel="frames per second",
                      ylabel=",".join(spec["metrics"]), logx=True,
                      logy=spec["metrics"][0].startswith("mean"))
        print(f"wrote {csv_path}")
    return 0


def _figure_multilane(args, spec, prof):
    lam_values = [10.0, 40.0, 60.0]
    n_st = 200 if args.fast else 615
    snap = synthesize_multilane_snapshot(
        n_stations=n_st, sensing_range_m=184.6,
        station_density_per_m=16.02 / 184.6, vehicle_multiplicity_mean=1.3,
        seed=args.seed,
    )
    providers: dict = {}
    from .cam import multilane_cam_analysis

    for sub, payload in (("a", 200), ("b", 512)):
        L = frame_bytes_to_slots(payload, PhyMode.QPSK_HALF)
        rows = []
        for idx, lam in enumerate(lam_values):
            point = {"cw_min": 63, "frame_slots": L, "lambda_f": lam,
                     "queue_policy": "single_overwrite"}
            key = (L, snap.effective_r)
            if key not in providers:
                providers[key] = _provider(args, L, snap.effective_r, [63], prof,
                                           extra_low=(2e-6, 5e-6))
            rep = multilane_cam_analysis(snap, _protocol(point), lam, providers[key])
            a_rows = []
            for d in range(1, len(rep.t_ui_slots) + 1):
                a_rows.append({"metric": "t_ui", "d": d, "value": rep.t_ui_slots[d - 1],
                               "ci": None, "n": None})
                a_rows.append({"metric": "p_fif", "d": d, "value": rep.p_fif[d - 1],
                               "ci": None, "n": None})
            rows.extend({"swept_param": "d", "swept_value": r["d"], "series": f"analytic lam={lam:g}", **r}
                        for r in a_rows if r["metric"] in spec["metrics"] and r["d"] is not None)
            stats = run_protocol_sim(
                _protocol(point), _traffic(point), snap, seed=args.seed + idx,
                warmup_slots=prof["sim_warmup"], measure_slots=prof["sim_measure"],
            )
            rows.extend({"swept_param": "d", "swept_value": r["d"], "series": f"sim lam={lam:g}", **r}
                        for r in stats_rows(stats) if r["metric"] in spec["metrics"] and r["d"] is not None)
        meta = standard_meta({"figure": args.name, "subplot": sub, "payload_bytes": payload,
                              "frame_slots": L, "effective_r": snap.effective_r,
                              "n_vehicles": snap.n_vehicles}, args.seed)
        csv_path = f"{args.out_dir}/{args.name}{sub}.csv"
        write_rows_csv(csv_path, rows, meta, extra_columns=("swept_param", "swept_value", "series"))
        render_series(rows, "swept_value", f"{args.out_dir}/{args.name}{sub}.png",
                      title=f"{args.name}({sub}): payload {payload} B",
                      xlabel="hop distance", ylabel=",".join(spec["metrics"]),
                      logy=spec["metrics"][0] == "t_ui")
        print(f"wrote {csv_path}")
    return 0


def _figure_cam_optim(args, spec, prof):
    beta = 0.2
    r_grid = [20.0] if args.fast else [20.0, 160.0, 640.0]
    lam_grid = [1.0, 10.0, 60.0] if args.fast else [1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 60.0, 100.0]
    cw = spec["cw_min"]
    providers: dict = {}
    for sub, payload in (("a", 200), ("b", 512)):
        L = frame_bytes_to_slots(payload, PhyMode.QPSK_HALF)
        rows = []
        for r_m in r_grid:
            r_n = int(math.floor(r_m * beta + 1e-9))
            for lam in lam_grid:
                point = {"cw_min": cw, "frame_slots": L, "lambda_f": lam,
                         "queue_policy": "single_overwrite", "r_neighbors": r_n}
                got = _analytic_rows(point, args, prof, providers)
                for row in got:
                    if row["metric"] != "t_ui_seconds" or row["d"] is None:
                        continue
                    if row["d"] in (min(8, r_n), r_n):
                        tag = "d8" if row["d"] == min(8, r_n) else "dmax"
                        rows.append({"swept_param": "lambda_f", "swept_value": lam,
                                     "series": f"r{r_m:g} {tag}", **row})
        meta = standard_meta({"figure": args.name, "subplot": sub, "cw_min": cw,
                              "payload_bytes": payload, "frame_slots": L, "beta": beta},
                             args.seed)
        csv_path = f"{args.out_dir}/{args.name}{sub}.csv"
        write_rows_csv(csv_path, rows, meta, extra_columns=("swept_param", "swept_value", "series"))
        render_series(rows, "swept_value", f"{args.out_dir}/{args.name}{sub}.png",
                      title=f"{args.name}({sub}): cw_min={cw}, payload {payload} B",
                      xlabel="updates per second", ylabel="update interval [s]",
                      logx=True, logy=True)
        print(f"wrote {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hiddenmac", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--cache-dir", default=None, help="oracle run cache directory")
    p.add_argument("--fast", action="store_true", help="small desk profile for quick runs")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for simulation grid points")
    p.add_argument("--strict-80211", action="store_true",
                   help="standard initial draw over [0, cw_min] (excluded from analytics)")
    sub = p.add_subparsers(dest="verb", required=True)

    common_scn = argparse.ArgumentParser(add_help=False)
    for flag, typ in (("--cw-min", int), ("--payload-bytes", int), ("--frame-slots", int),
                      ("--lambda-f", float), ("--n-stations", int), ("--beta", float),
                      ("--r-meters", float), ("--warmup", int), ("--measure", int)):
        common_scn.add_argument(flag, type=typ, dest=flag[2:].replace("-", "_"))
    common_scn.add_argument("--queue-policy", dest="queue_policy",
                            choices=("infinite_fifo", "single_overwrite"))
    common_scn.add_argument("--snapshot", help="position snapshot file")

    o = sub.add_parser("oracle", parents=[common_scn], help="one raw channel-quantity run")
    o.add_argument("--p-tx", type=float, required=True)
    o.add_argument("--r-neighbors", type=int)
    o.add_argument("--trace", help="dump slot,station,state CSV here")
    o.add_argument("--trace-limit", type=int, default=2000)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("sim", parents=[common_scn], help="one MAC simulation run")
    s.add_argument("--reception-log", help="dump reception log CSV here")
    s.set_defaults(func=cmd_sim)

    w = sub.add_parser("sweep", parents=[common_scn], help="parameter sweep")
    w.add_argument("--param", choices=("lambda_f", "cw_min", "frame_slots",
                                       "r_neighbors", "r", "payload_bytes"))
    w.add_argument("--grid", help="comma-separated, strictly increasing")
    w.add_argument("--engines", help="subset of analytic,sim")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", parents=[common_scn], help="analytic vs simulation")
    c.add_argument("--param", choices=("lambda_f", "cw_min"))
    c.add_argument("--grid", help="comma-separated, strictly increasing")
    c.add_argument("--tolerance-profile", choices=("default", "small-cw"), default="default")
    c.set_defaults(func=cmd_compare)

    f = sub.add_parser("figure", help="preset figure data and rendering")
    f.add_argument("name", choices=sorted(FIGURES))
    f.set_defaults(func=cmd_figure)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.cache_dir is None:
        args.cache_dir = f"{args.out_dir}/oracle-cache"
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except HiddenMacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
