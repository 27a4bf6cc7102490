"""Scenario JSON documents and trace/summary files.

Scenario document::

    {
      "name": "reference",
      "m": 9, "s": 6,
      "mobile_positions": [[x, y], ...],     # m rows, agent ids 1..m
      "static_positions": [[x, y], ...],     # s rows, agent ids m+1..m+s
      "flows": [{"id": 16, "source": 10, "destination": 11, "active": true}],
      "events": [{"tick": 4500, "flow": 18, "activate": true}],
      "params": {"rho0": 0.15, ...},         # optional, missing keys take defaults
      "max_ticks": 13000, "icp_period": 25, "seed": 0
    }

A trace in CSV form is a directory of files:

* ``trace.csv``: ``tick,flow_id,cost,active,spacing_err``, one row per tick per flow
* ``ticks.csv``: ``tick,connected,icp_ran,core_connected``
* ``commands.csv``: ``tick,agent,target``
* ``positions.csv``: ``tick,agent,x,y`` every ``position_stride`` ticks
* ``trace_meta.json``: flow ids, agent counts, stride and fault

The JSON form packs the same content into ``trace.json``. Numbers are
written with 9 significant digits.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from routeswarm.icp import IcpCommand
from routeswarm.model import Flow, FlowEvent, Params, Scenario
from routeswarm.sim import FlowRecord, TickRecord, Trace

PathLike = Union[str, os.PathLike]

TRACE_HEADER = ["tick", "flow_id", "cost", "active", "spacing_err"]
TICKS_HEADER = ["tick", "connected", "icp_ran", "core_connected"]
COMMANDS_HEADER = ["tick", "agent", "target"]
POSITIONS_HEADER = ["tick", "agent", "x", "y"]


class ScenarioFormatError(ValueError):
    """The scenario document cannot be read or has the wrong structure."""


def fmt(x: float) -> str:
    return f"{x:.9g}"


def _bool(s: str) -> bool:
    if s in ("1", "true", "True"):
        return True
    if s in ("0", "false", "False"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_bool(s: str) -> Optional[bool]:
    return None if s == "" else _bool(s)


# scenarios -----------------------------------------------------------------

def scenario_to_dict(sc: Scenario) -> Dict[str, Any]:
    return {
        "name": sc.name,
        "m": sc.m,
        "s": sc.s,
        "mobile_positions": sc.initial_mobile_positions.tolist(),
        "static_positions": sc.static_positions.tolist(),
        "flows": [dataclasses.asdict(fl) for fl in sc.flows],
        "events": [dataclasses.asdict(ev) for ev in sc.events],
        "params": dataclasses.asdict(sc.params),
        "max_ticks": sc.max_ticks,
        "icp_period": sc.icp_period,
        "seed": sc.seed,
    }


def _need(doc, key, kind):
    if key not in doc:
        raise ScenarioFormatError(f"missing field {key!r}")
    v = doc[key]
    if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
        raise ScenarioFormatError(f"field {key!r} must be an integer")
    if kind is list and not isinstance(v, list):
        raise ScenarioFormatError(f"field {key!r} must be a list")
    return v


def _points(rows, key, count):
    try:
        arr = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"field {key!r}: {exc}") from exc
    if count == 0 and arr.size == 0:
        return np.zeros((0, 2))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ScenarioFormatError(f"field {key!r} must be a list of [x, y] pairs")
    return arr


def scenario_from_dict(doc: Dict[str, Any]) -> Scenario:
    """Build a scenario from a parsed document.

    Structural problems raise :class:`ScenarioFormatError`; semantic ones
    (radius ordering, connectivity and so on) are left to
    :func:`routeswarm.model.validate_scenario`.
    """
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario document must be a JSON object")
    m = _need(doc, "m", int)
    s = _need(doc, "s", int)
    mobiles = _points(_need(doc, "mobile_positions", list), "mobile_positions", m)
    statics = _points(_need(doc, "static_positions", list), "static_positions", s)
    try:
        flows = [
            Flow(int(f["id"]), int(f["source"]), int(f["destination"]), bool(f.get("active", True)))
            for f in _need(doc, "flows", list)
        ]
        events = [
            FlowEvent(int(e["tick"]), int(e["flow"]), bool(e["activate"]))
            for e in doc.get("events", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"bad flow or event entry: {exc}") from exc
    raw = doc.get("params", {})
    if not isinstance(raw, dict):
        raise ScenarioFormatError("field 'params' must be an object")
    known = {f.name for f in dataclasses.fields(Params)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ScenarioFormatError(f"unknown parameters: {unknown}")
    try:
        params = Params(**{k: float(v) for k, v in raw.items()})
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"bad parameter value: {exc}") from exc
    opt = {}
    for key in ("max_ticks", "icp_period", "seed"):
        if key in doc:
            opt[key] = _need(doc, key, int)
    return Scenario(
        m=m,
        s=s,
        static_positions=statics,
        initial_mobile_positions=mobiles,
        flows=flows,
        events=events,
        params=params,
        name=str(doc.get("name", "")),
        **opt,
    )


def load_scenario(path: PathLike) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioFormatError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(doc)


def save_scenario(sc: Scenario, path: PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=2)
        fh.write("\n")


# traces --------------------------------------------------------------------

def _meta(trace: Trace) -> Dict[str, Any]:
    return {
        "flow_ids": trace.flow_ids,
        "m": trace.m,
        "s": trace.s,
        "position_stride": trace.position_stride,
        "fault": trace.fault,
        "fault_tick": trace.fault_tick,
    }


def _b(x: Optional[bool]) -> str:
    return "" if x is None else str(int(x))


def write_trace_csv(trace: Trace, out: PathLike) -> List[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "trace.csv": (TRACE_HEADER, (
            [r.tick, k, fmt(r.flows[k].cost), int(r.flows[k].active), fmt(r.flows[k].spacing_err)]
            for r in trace.records for k in trace.flow_ids
        )),
        "ticks.csv": (TICKS_HEADER, (
            [r.tick, int(r.connected), int(r.icp_ran), _b(r.core_connected)] for r in trace.records
        )),
        "commands.csv": (COMMANDS_HEADER, (
            [r.tick, c.agent, c.target] for r in trace.records for c in r.commands
        )),
        "positions.csv": (POSITIONS_HEADER, (
            [t * trace.position_stride, i + 1, fmt(x), fmt(y)]
            for t, snap in enumerate(trace.positions) for i, (x, y) in enumerate(snap)
        )),
    }
    written = []
    for name, (header, rows) in files.items():
        path = out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(path)
    meta = out / "trace_meta.json"
    meta.write_text(json.dumps(_meta(trace), indent=2) + "\n")
    written.append(meta)
    return written


def _rows(path: Path, header: List[str]) -> List[List[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != header:
        raise ValueError(f"{path}: expected header {','.join(header)}")
    return rows[1:]


def _assemble(meta, tick_rows, flow_rows, cmd_rows, pos_rows) -> Trace:
    trace = Trace(
        list(meta["flow_ids"]),
        int(meta["m"]),
        int(meta["s"]),
        fault=meta.get("fault"),
        fault_tick=meta.get("fault_tick"),
        position_stride=int(meta.get("position_stride", 1)),
    )
    by_tick: Dict[int, TickRecord] = {}
    for tick, conn, ran, core in tick_rows:
        rec = TickRecord(tick=tick, connected=conn, flows={}, icp_ran=ran, core_connected=core)
        by_tick[tick] = rec
        trace.records.append(rec)
    for tick, k, cost, active, err in flow_rows:
        by_tick[tick].flows[k] = FlowRecord(cost, active, err)
    for tick, agent, target in cmd_rows:
        by_tick[tick].commands.append(IcpCommand(agent, target))
    n = trace.m + trace.s
    snaps: Dict[int, np.ndarray] = {}
    for tick, agent, x, y in pos_rows:
        snaps.setdefault(tick, np.zeros((n, 2)))[agent - 1] = (x, y)
    trace.positions = [snaps[t] for t in sorted(snaps)]
    return trace


def read_trace_csv(out: PathLike) -> Trace:
    out = Path(out)
    meta = json.loads((out / "trace_meta.json").read_text())
    ticks = [
        (int(t), _bool(c), _bool(r), _opt_bool(cc))
        for t, c, r, cc in _rows(out / "ticks.csv", TICKS_HEADER)
    ]
    flows = [
        (int(t), int(k), float(c), _bool(a), float(e))
        for t, k, c, a, e in _rows(out / "trace.csv", TRACE_HEADER)
    ]
    cmds = [tuple(int(v) for v in row) for row in _rows(out / "commands.csv", COMMANDS_HEADER)]
    pos = [
        (int(t), int(i), float(x), float(y))
        for t, i, x, y in _rows(out / "positions.csv", POSITIONS_HEADER)
    ]
    return _assemble(meta, ticks, flows, cmds, pos)


def _num(x: float):
    # JSON has no NaN literal
    return None if math.isnan(x) else float(fmt(x))


def trace_to_dict(trace: Trace) -> Dict[str, Any]:
    return {
        "meta": _meta(trace),
        "ticks": [
            {
                "tick": r.tick,
                "connected": r.connected,
                "icp_ran": r.icp_ran,
                "core_connected": r.core_connected,
                "flows": [
                    {"flow_id": k, "cost": _num(r.flows[k].cost), "active": r.flows[k].active,
                     "spacing_err": _num(r.flows[k].spacing_err)}
                    for k in trace.flow_ids
                ],
                "commands": [[c.agent, c.target] for c in r.commands],
            }
            for r in trace.records
        ],
        "positions": [
            {"tick": t * trace.position_stride, "xy": [[_num(x), _num(y)] for x, y in snap]}
            for t, snap in enumerate(trace.positions)
        ],
    }


def _unnum(v) -> float:
    return float("nan") if v is None else float(v)


def trace_from_dict(doc: Dict[str, Any]) -> Trace:
    ticks, flows, cmds, pos = [], [], [], []
    for r in doc["ticks"]:
        t = int(r["tick"])
        ticks.append((t, bool(r["connected"]), bool(r["icp_ran"]), r["core_connected"]))
        for f in r["flows"]:
            flows.append((t, int(f["flow_id"]), _unnum(f["cost"]), bool(f["active"]), _unnum(f["spacing_err"])))
        cmds.extend((t, int(a), int(k)) for a, k in r["commands"])
    for snap in doc["positions"]:
        t = int(snap["tick"])
        pos.extend((t, i + 1, _unnum(x), _unnum(y)) for i, (x, y) in enumerate(snap["xy"]))
    return _assemble(doc["meta"], ticks, flows, cmds, pos)


def write_trace_json(trace: Trace, out: PathLike) -> List[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trace.json"
    path.write_text(json.dumps(trace_to_dict(trace), separators=(",", ":")) + "\n")
    return [path]


def read_trace_json(out: PathLike) -> Trace:
    path = Path(out)
    if path.is_dir():
        path = path / "trace.json"
    return trace_from_dict(json.loads(path.read_text()))


def write_trace(trace: Trace, out: PathLike, fmt_name: str = "csv") -> List[Path]:
    if fmt_name == "csv":
        return write_trace_csv(trace, out)
    if fmt_name == "json":
        return write_trace_json(trace, out)
    raise ValueError(f"unknown trace format {fmt_name!r}")


def read_trace(out: PathLike, fmt_name: str = "csv") -> Trace:
    if fmt_name == "csv":
        return read_trace_csv(out)
    if fmt_name == "json":
        return read_trace_json(out)
    raise ValueError(f"unknown trace format {fmt_name!r}")


def write_summary(report: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report, indent=2, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(fmt(float(o)))
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
