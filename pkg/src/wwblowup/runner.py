"""Run orchestration: time loop, diagnostics emission, snapshots and resume."""

from __future__ import annotations

import datetime as _dt
import json
import math
import os
import queue
import threading
from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig, load_config
from .dynamics import NonFiniteState, SurfaceState, TraceFields, WaterWaveModel, trace_defect
from .elliptic import EllipticBreakdown
from .flattening import FlatteningError
from .monitor import COLUMNS, BlowupMonitor, CriterionAccumulators, MonitorSettings
from .paradiff import RayleighTaylorError
from .presets import initial_state
from .snapshot import Snapshot
from .spectral import SpectralGrid

CSV_NAME = "diagnostics.csv"
EVENTS_NAME = "events.jsonl"
REPORT_NAME = "report.json"
SNAPSHOT_NAME = "snapshot.wwbk"

EXIT_OK = 0
EXIT_BREAKDOWN = 3

# surface-formula traces vs strip-solution traces, relative to 1 + max|B|
TRACE_TOL = 1e-6


def format_row(values) -> str:
    return ",".join(repr(float(v)) for v in values)


class DiagnosticsWriter:
    """Background writer for CSV rows and JSONL events.

    ``keep_rows`` truncates an existing CSV to its first ``keep_rows`` data
    rows (used when resuming into the original directory).
    """

    def __init__(self, out_dir: str, keep_rows: int | None = None):
        os.makedirs(out_dir, exist_ok=True)
        self.csv_path = os.path.join(out_dir, CSV_NAME)
        self.events_path = os.path.join(out_dir, EVENTS_NAME)
        header = ",".join(COLUMNS) + "\n"
        if keep_rows is not None and os.path.exists(self.csv_path):
            with open(self.csv_path) as fh:
                lines = fh.readlines()
            if not lines or lines[0] != header or len(lines) - 1 < keep_rows:
                raise ValueError(f"{self.csv_path} does not hold the {keep_rows} rows the snapshot expects")
            with open(self.csv_path, "w") as fh:
                fh.writelines(lines[: keep_rows + 1])
            self._csv = open(self.csv_path, "a")
            self._events = open(self.events_path, "a")
        else:
            self._csv = open(self.csv_path, "w")
            self._csv.write(header)
            self._events = open(self.events_path, "w")
        self._q: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._work, daemon=True)
        self._thread.start()

    def _work(self):
        while True:
            item = self._q.get()
            if item is None:
                break
            kind, payload = item
            if kind == "row":
                self._csv.write(format_row(payload) + "\n")
            else:
                self._events.write(json.dumps(payload, sort_keys=True) + "\n")

    def row(self, values) -> None:
        self._q.put(("row", tuple(values)))

    def event(self, kind: str, **data) -> None:
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self._q.put(("event", {"time": stamp, "event": kind, **data}))

    def close(self) -> None:
        self._q.put(None)
        self._thread.join()
        self._csv.close()
        self._events.close()


@dataclass
class Entry:
    step: int
    state: SurfaceState
    traces: TraceFields
    dn: np.ndarray


_ENTRY_FIELDS = ("eta", "psi", "V", "B", "zeta", "a", "dn")


class Simulation:
    def __init__(self, cfg: RunConfig, out_dir: str | None = None):
        self.cfg = cfg
        self.out_dir = out_dir if out_dir is not None else cfg["io.out"]
        self.grid = SpectralGrid(cfg["grid.n"], cfg["grid.length"], cfg["grid.dim"])
        self.model = WaterWaveModel(
            self.grid, g=cfg["physics.g"], depth=cfg["physics.depth"], nz_upper=cfg["elliptic.nz_upper"],
            nz_lower=cfg["elliptic.nz_lower"], tol=cfg["elliptic.tol"],
            integrating_factor=cfg["integrator.integrating_factor"], filter_on=cfg["integrator.filter"],
            cfl=cfg["integrator.cfl"])
        self.dt = cfg["integrator.dt"] or self.model.dt_max()
        pts = cfg["monitor.sup_points"] or None
        self.settings = MonitorSettings(cfg["indices.s"], cfg["indices.s0"], cfg["indices.s0_reduced"],
                                        cfg["indices.eps"], cfg["monitor.sup_threshold"],
                                        cfg["monitor.int_threshold"], pts)
        self.monitor = BlowupMonitor(self.grid, self.model.depth, self.model.g, self.settings)
        self.stride = cfg["monitor.stride"]
        self.fd = cfg["monitor.da_method"] == "fd"
        self.window: list[Entry] = []
        self.emitted = 0
        self.step = 0
        self.state: SurfaceState | None = None
        self.writer: DiagnosticsWriter | None = None
        self.rows: list = []

    def auto_dt(self, state: SurfaceState) -> float:
        """Linear stability bound, tightened by an advective bound for steep data."""
        speed = float(np.max(np.abs(self.grid.grad(state.psi))))
        dx = min(self.grid.dx)
        adv = self.cfg["integrator.cfl_advective"] * dx / speed if speed > 0 else math.inf
        return min(self.model.dt_max(), adv)

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.cfg["integrator.t_end"] / self.dt - 1e-9))

    # ------------------------------------------------------------------
    def _emit(self, e: Entry, Da: np.ndarray, final: bool = False):
        if e.step % self.stride and not final:
            return
        rec = self.monitor.record(e.state, replace(e.traces, Da=Da), e.dn)
        row = rec.row()
        self.rows.append(row)
        if self.writer:
            self.writer.row(row)
            if not all(math.isfinite(v) for v in row):
                self.writer.event("nonfinite_row", t=rec.t)
        self.emitted += 1
        if not rec.accepted:
            self._rejected = True

    def _check_traces(self, ev, tr):
        gap = trace_defect(ev, tr)
        scale = 1.0 + float(np.max(np.abs(tr.B)))
        if self.writer and not gap <= TRACE_TOL * scale:
            self.writer.event("trace_mismatch", step=self.step, t=ev.state.t, defect=gap)

    def _convect(self, e: Entry, a_t: np.ndarray) -> np.ndarray:
        return a_t + np.sum(e.traces.V * self.grid.grad(e.traces.a), axis=0)

    def _ingest(self, e: Entry):
        if not self.fd:
            self._emit(e, e.traces.Da)
            return
        self.window.append(e)
        self.window = self.window[-3:]
        w, dt = self.window, self.dt
        if e.step == 2:
            a0, a1, a2 = (x.traces.a for x in w)
            self._emit(w[0], self._convect(w[0], (-3 * a0 + 4 * a1 - a2) / (2 * dt)))
            self._emit(w[1], self._convect(w[1], (a2 - a0) / (2 * dt)))
        elif e.step > 2:
            self._emit(w[1], self._convect(w[1], (w[2].traces.a - w[0].traces.a) / (2 * dt)))

    def _flush(self):
        if not self.fd or not self.window:
            return
        w, dt = self.window, self.dt
        last = w[-1]
        if last.step == 0:
            ev = self.model.evaluate(last.state)
            self._emit(last, self.model.traces(ev, exact_da=True).Da, final=True)
        elif last.step == 1:
            a_t = (w[1].traces.a - w[0].traces.a) / dt
            self._emit(w[0], self._convect(w[0], a_t))
            self._emit(w[1], self._convect(w[1], a_t), final=True)
        else:
            a_t = (3 * w[2].traces.a - 4 * w[1].traces.a + w[0].traces.a) / (2 * dt)
            self._emit(w[2], self._convect(w[2], a_t), final=True)
        self.window = []

    # ------------------------------------------------------------------
    def snapshot(self) -> Snapshot:
        meta = {
            "step": self.step, "dt": self.dt, "t": self.state.t, "emitted": self.emitted,
            "accumulators": self.monitor.acc.state_dict(), "window_steps": [e.step for e in self.window],
            "window_t": [e.state.t for e in self.window], "seed": None,
        }
        arrays = {"eta": (self.grid_dims(), self.state.eta), "psi": (self.grid_dims(), self.state.psi)}
        for i, e in enumerate(self.window):
            for f in _ENTRY_FIELDS:
                v = self._entry_field(e, f)
                dims = self.grid_dims() if v.ndim == self.grid.dim else ("component",) + self.grid_dims()
                arrays[f"window{i}.{f}"] = (dims, v)
        return Snapshot(self.cfg.hash(), self.cfg.to_toml(), meta, arrays)

    def grid_dims(self) -> tuple:
        return ("x", "y")[: self.grid.dim]

    @staticmethod
    def _entry_field(e: Entry, f: str) -> np.ndarray:
        return {"eta": e.state.eta, "psi": e.state.psi, "V": e.traces.V, "B": e.traces.B,
                "zeta": e.traces.zeta, "a": e.traces.a, "dn": e.dn}[f]

    def restore(self, snap: Snapshot):
        m = snap.meta
        self.step = m["step"]
        self.dt = m["dt"]
        self.emitted = m["emitted"]
        self.state = SurfaceState(snap.arrays["eta"][1], snap.arrays["psi"][1], m["t"])
        self.monitor.acc = CriterionAccumulators.from_state_dict(m["accumulators"])
        self.window = []
        for i, (step, t) in enumerate(zip(m["window_steps"], m["window_t"])):
            f = {k: snap.arrays[f"window{i}.{k}"][1] for k in _ENTRY_FIELDS}
            self.window.append(Entry(step, SurfaceState(f["eta"], f["psi"], t),
                                     TraceFields(f["V"], f["B"], f["zeta"], f["a"]), f["dn"]))

    def _save_snapshot(self, periodic: bool):
        snap = self.snapshot()
        if periodic:
            d = os.path.join(self.out_dir, "snapshots")
            os.makedirs(d, exist_ok=True)
            path = os.path.join(d, f"step_{self.step:08d}.wwbk")
        else:
            path = os.path.join(self.out_dir, SNAPSHOT_NAME)
        snap.save(path)
        if self.writer:
            self.writer.event("snapshot", step=self.step, t=self.state.t, path=path, records=self.emitted)

    # ------------------------------------------------------------------
    def run(self, resume_from: Snapshot | None = None, write: bool = True) -> int:
        if resume_from is not None:
            self.restore(resume_from)
        else:
            self.state = initial_state(self.grid, self.cfg)
            if not self.cfg["integrator.dt"]:
                self.dt = self.auto_dt(self.state)
        self._rejected = False
        if write:
            os.makedirs(self.out_dir, exist_ok=True)
            with open(os.path.join(self.out_dir, "config.toml"), "w") as fh:
                fh.write(self.cfg.to_toml())
            self.writer = DiagnosticsWriter(self.out_dir, self.emitted if resume_from is not None else None)
            self.writer.event("resume" if resume_from else "start", step=self.step, t=self.state.t,
                              dt=self.dt, config_hash=self.cfg.hash())
            if self.cfg["integrator.filter"]:
                self.writer.event("filter", enabled=True)
        termination = "time limit"
        every = self.cfg["io.snapshot_every"]
        fresh = True
        try:
            while True:
                ev = self.model.evaluate(self.state)
                if not (resume_from is not None and fresh):
                    tr = self.model.traces(ev, exact_da=not self.fd)
                    self._check_traces(ev, tr)
                    self._ingest(Entry(self.step, self.state, tr, ev.dn))
                fresh = False
                if self._rejected:
                    termination = "rejected record (h or c not positive)"
                    break
                if self.monitor.crossed and self.cfg["monitor.stop_on_crossing"]:
                    termination = "threshold crossing"
                    break
                if self.step >= self.n_steps:
                    break
                if write and every and self.step and self.step % every == 0:
                    self._save_snapshot(periodic=True)
                self.state = self.model.step(self.state, self.dt, ev=ev)
                self.step += 1
                self.state = replace(self.state, t=self.step * self.dt)
        except NonFiniteState as exc:
            termination = f"non-finite state: {exc}"
        except (EllipticBreakdown, FlatteningError, RayleighTaylorError) as exc:
            termination = f"{type(exc).__name__}: {exc}"
        if write and termination == "time limit":
            self._save_snapshot(periodic=False)
        self._flush()
        report = self.monitor.verdict(termination)
        self.report = report
        broke = termination != "time limit" or report.overall_leading is not None
        if write:
            self.writer.event("verdict", termination=termination, verdict=report.verdict,
                              leading=report.overall_leading, t=report.final_time)
            self.writer.close()
            with open(os.path.join(self.out_dir, REPORT_NAME), "w") as fh:
                fh.write(report.to_json() + "\n")
        return EXIT_BREAKDOWN if broke else EXIT_OK


class ResumeRefused(ValueError):
    pass


def resume(snapshot_path: str, overrides: dict | None = None, out_dir: str | None = None,
           config_path: str | None = None) -> tuple[int, Simulation]:
    """Continue a run from a snapshot; only io.* and integrator.t_end may change."""
    snap = Snapshot.load(snapshot_path)
    base = load_config(text=snap.config_text)
    if base.hash() != snap.config_hash:
        raise ResumeRefused("snapshot config text does not match its hash")
    cfg = base
    if config_path is not None:
        cfg = load_config(config_path)
    if overrides:
        cfg = cfg.updated(overrides)
    if cfg.hash() != snap.config_hash:
        raise ResumeRefused("configuration differs from the snapshot:\n  " + "\n  ".join(base.diff(cfg)))
    sim = Simulation(cfg, out_dir)
    return sim.run(resume_from=snap), sim
