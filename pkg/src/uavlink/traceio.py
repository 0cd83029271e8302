"""File formats: trace/positions/metrics CSV, truth/verdicts/ranking JSON.

Runs are tied together by a run id derived from the trace CSV bytes, so a
detection result can be checked against the ground truth of the simulation
that produced its input without any shared database.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict

import numpy as np

from .heatmap import HeatMap, LocalizationResult
from .metrics import METRIC_FIELDS, MetricWindow
from .relations import MrPerformance, MrVerdict
from .simulate import (
    ANOMALY_KINDS,
    AnomalyEvent,
    GroundTruthEntry,
    TraceRecord,
)

TRACE_HEADER = [
    "link_src", "link_dst", "seq", "t_enqueue", "t_tx_start", "t_rx_end",
    "outcome", "rssi_dbm", "sinr_db", "lqi", "retries", "distance_m",
]
POSITIONS_HEADER = ["t", "node_id", "x", "y", "z"]
METRICS_HEADER = ["link_src", "link_dst", "t_start", "t_end"] + METRIC_FIELDS + ["n_packets"]

OUTCOMES = {"delivered", "corrupted", "dropped_queue", "lost_link"}


class SchemaError(ValueError):
    """A file does not conform to its documented schema."""

    def __init__(self, path, row, column, message):
        self.path = path
        self.row = row
        self.column = column
        super().__init__(f"{path}: row {row}, column {column!r}: {message}")


def _fmt(value, decimals=6) -> str:
    if value is None:
        return ""
    return f"{value:.{decimals}f}"


# -- trace CSV -----------------------------------------------------------------


def write_trace_csv(records: list[TraceRecord], path) -> str:
    """Write the trace and return its run id (digest of the file bytes)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in records:
            w.writerow(
                [
                    r.link_src,
                    r.link_dst,
                    r.seq,
                    _fmt(r.t_enqueue, 9),
                    _fmt(r.t_tx_start, 9),
                    _fmt(r.t_rx_end, 9),
                    r.outcome,
                    _fmt(r.rssi_dbm),
                    _fmt(r.sinr_db),
                    "" if r.lqi is None else r.lqi,
                    r.retries,
                    _fmt(r.distance_m),
                ]
            )
    return trace_run_id(path)


def trace_run_id(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()[:12]


def _parse_float(path, row, col, text, required):
    if text == "":
        if required:
            raise SchemaError(path, row, col, "value required")
        return None
    try:
        return float(text)
    except ValueError:
        raise SchemaError(path, row, col, f"not a number: {text!r}") from None


def _parse_int(path, row, col, text, required=True):
    if text == "":
        if required:
            raise SchemaError(path, row, col, "value required")
        return None
    try:
        return int(text)
    except ValueError:
        raise SchemaError(path, row, col, f"not an integer: {text!r}") from None


def read_trace_csv(path) -> list[TraceRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise SchemaError(path, 1, "header", f"expected {TRACE_HEADER}, got {header}")
        for i, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_HEADER):
                raise SchemaError(path, i, "row", f"expected {len(TRACE_HEADER)} fields")
            vals = dict(zip(TRACE_HEADER, row))
            outcome = vals["outcome"]
            if outcome not in OUTCOMES:
                raise SchemaError(path, i, "outcome", f"unknown outcome {outcome!r}")
            lqi = _parse_int(path, i, "lqi", vals["lqi"], required=False)
            if lqi is not None and not 0 <= lqi <= 255:
                raise SchemaError(path, i, "lqi", f"out of range: {lqi}")
            rec = TraceRecord(
                link_src=_parse_int(path, i, "link_src", vals["link_src"]),
                link_dst=_parse_int(path, i, "link_dst", vals["link_dst"]),
                seq=_parse_int(path, i, "seq", vals["seq"]),
                t_enqueue=_parse_float(path, i, "t_enqueue", vals["t_enqueue"], True),
                t_tx_start=_parse_float(path, i, "t_tx_start", vals["t_tx_start"], False),
                t_rx_end=_parse_float(path, i, "t_rx_end", vals["t_rx_end"], False),
                outcome=outcome,
                rssi_dbm=_parse_float(path, i, "rssi_dbm", vals["rssi_dbm"], False),
                sinr_db=_parse_float(path, i, "sinr_db", vals["sinr_db"], False),
                lqi=lqi,
                retries=_parse_int(path, i, "retries", vals["retries"]),
                distance_m=_parse_float(path, i, "distance_m", vals["distance_m"], False),
            )
            if rec.t_tx_start is not None and rec.t_tx_start < rec.t_enqueue - 1e-9:
                raise SchemaError(path, i, "t_tx_start", "precedes t_enqueue")
            if rec.t_rx_end is not None and (
                rec.t_tx_start is None or rec.t_rx_end < rec.t_tx_start - 1e-9
            ):
                raise SchemaError(path, i, "t_rx_end", "precedes t_tx_start")
            records.append(rec)
    return records


# -- positions CSV ---------------------------------------------------------------


def write_positions_csv(times: np.ndarray, positions: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(POSITIONS_HEADER)
        for k, t in enumerate(times):
            for node in range(positions.shape[1]):
                x, y, z = positions[k, node]
                w.writerow([_fmt(t, 3), node, _fmt(x), _fmt(y), _fmt(z)])


def read_positions_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (times, positions[T, n_nodes, 3])."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != POSITIONS_HEADER:
            raise SchemaError(path, 1, "header", f"expected {POSITIONS_HEADER}, got {header}")
        for i, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise SchemaError(path, i, "row", "expected 5 fields")
            t = _parse_float(path, i, "t", row[0], True)
            node = _parse_int(path, i, "node_id", row[1])
            x = _parse_float(path, i, "x", row[2], True)
            y = _parse_float(path, i, "y", row[3], True)
            z = _parse_float(path, i, "z", row[4], True)
            rows.append((t, node, x, y, z))
    if not rows:
        raise SchemaError(path, 2, "row", "empty positions file")
    nodes = sorted({r[1] for r in rows})
    if nodes != list(range(len(nodes))):
        raise SchemaError(path, 2, "node_id", f"node ids must be 0..n-1, got {nodes}")
    times = sorted({r[0] for r in rows})
    index = {t: k for k, t in enumerate(times)}
    positions = np.full((len(times), len(nodes), 3), np.nan)
    for t, node, x, y, z in rows:
        positions[index[t], node] = (x, y, z)
    if np.isnan(positions).any():
        raise SchemaError(path, 2, "row", "missing (t, node) position samples")
    return np.asarray(times), positions


# -- metrics CSV -----------------------------------------------------------------


def write_metrics_csv(windows: list[MetricWindow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for win in windows:
            row = [win.link_src, win.link_dst, _fmt(win.t_start, 3), _fmt(win.t_end, 3)]
            for name in METRIC_FIELDS:
                value = getattr(win, name)
                if value is None:
                    row.append("")
                elif isinstance(value, int):
                    row.append(value)
                else:
                    row.append(_fmt(value, 9))
            row.append(win.n_packets)
            w.writerow(row)


def read_metrics_csv(path) -> list[MetricWindow]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != METRICS_HEADER:
            raise SchemaError(path, 1, "header", f"expected {METRICS_HEADER}, got {header}")
        int_fields = {"queue_drop_count", "packets_received"}
        for i, row in enumerate(reader, start=2):
            if len(row) != len(METRICS_HEADER):
                raise SchemaError(path, i, "row", f"expected {len(METRICS_HEADER)} fields")
            vals = dict(zip(METRICS_HEADER, row))
            kwargs = {
                "link_src": _parse_int(path, i, "link_src", vals["link_src"]),
                "link_dst": _parse_int(path, i, "link_dst", vals["link_dst"]),
                "t_start": _parse_float(path, i, "t_start", vals["t_start"], True),
                "t_end": _parse_float(path, i, "t_end", vals["t_end"], True),
                "n_packets": _parse_int(path, i, "n_packets", vals["n_packets"]),
            }
            for name in METRIC_FIELDS:
                if name in int_fields:
                    v = _parse_int(path, i, name, vals[name], required=False)
                    kwargs[name] = 0 if v is None else v
                else:
                    kwargs[name] = _parse_float(path, i, name, vals[name], False)
            out.append(MetricWindow(**kwargs))
    return out


# -- JSON artifacts ---------------------------------------------------------------


def write_ground_truth_json(entries: list[GroundTruthEntry], run_id: str, path) -> None:
    doc = {
        "run_id": run_id,
        "events": [
            {
                "kind": e.event.kind,
                "node": e.event.node,
                "t_start": e.event.t_start,
                "t_end": e.event.t_end,
                "magnitude": e.event.magnitude,
                "affected_links": [list(l) for l in e.affected_links],
            }
            for e in entries
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_ground_truth_json(path) -> tuple[list[GroundTruthEntry], str]:
    with open(path) as fh:
        doc = json.load(fh)
    entries = []
    for ev in doc.get("events", []):
        if ev["kind"] not in ANOMALY_KINDS:
            raise SchemaError(path, 0, "kind", f"unknown anomaly kind {ev['kind']!r}")
        entries.append(
            GroundTruthEntry(
                event=AnomalyEvent(
                    kind=ev["kind"],
                    node=int(ev["node"]),
                    t_start=float(ev["t_start"]),
                    t_end=float(ev["t_end"]),
                    magnitude=float(ev.get("magnitude", 0.0)),
                ),
                affected_links=[tuple(l) for l in ev["affected_links"]],
            )
        )
    return entries, doc.get("run_id", "")


def write_verdicts_json(verdicts: list[MrVerdict], run_id: str, params: dict, path) -> None:
    doc = {
        "run_id": run_id,
        "params": params,
        "verdicts": [
            {
                "mr": v.mr,
                "link": list(v.link),
                "t_start": v.t_start,
                "t_end": v.t_end,
                "r": v.r,
                "p": v.p,
                "violated": v.violated,
                "r_trend": v.r_trend,
                "p_trend": v.p_trend,
            }
            for v in verdicts
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_verdicts_json(path) -> tuple[list[MrVerdict], str]:
    with open(path) as fh:
        doc = json.load(fh)
    verdicts = []
    for v in doc.get("verdicts", []):
        verdicts.append(
            MrVerdict(
                mr=v["mr"],
                link=tuple(v["link"]),
                window_index=int(v.get("window_index", 0)),
                t_start=float(v["t_start"]),
                t_end=float(v["t_end"]),
                r=v.get("r"),
                p=v.get("p"),
                violated=bool(v["violated"]),
                r_trend=v.get("r_trend"),
                p_trend=v.get("p_trend"),
            )
        )
    return verdicts, doc.get("run_id", "")


def write_ranking_json(ranking: list[MrPerformance], path) -> None:
    doc = [asdict(p) for p in ranking]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_localization_json(result: LocalizationResult | None, path) -> None:
    if result is None:
        doc = {"detected": False}
    else:
        doc = {
            "detected": True,
            "link": list(result.link),
            "link_index": result.link_index,
            "node": result.node,
            "onset_window": result.onset_window,
            "onset_s": result.onset_s,
            "confidence": result.confidence,
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_heatmap_csv(heatmap: HeatMap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_start"] + [f"{s}-{d}" for s, d in heatmap.links])
        for k, t in enumerate(heatmap.row_times):
            w.writerow([_fmt(t, 3)] + [_fmt(v, 9) for v in heatmap.values[k]])


def write_manifest_json(manifest: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
