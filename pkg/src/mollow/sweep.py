"""Parallel grid sweeps with deterministic aggregation and resume.

A sweep evaluates one registered scalar observable on the Cartesian
product of linear axes.  Workers pull grid indices; results are
aggregated by grid index, so the output file is byte-identical for any
worker count or scheduling.  Progress is persisted in an append-only
binary checkpoint (magic ``MCKP1``): a header embedding the canonical
plan JSON, CRC-protected per-point records, and a final completion
record.  Resuming re-computes only missing points; a checkpoint is
bound to its plan by a hash over everything that affects the numbers
(worker count and checkpoint interval are excluded -- they change the
schedule, never the values).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .correlators import (CorrelationRequest, ResultGrid, _autocorr_at_eps,
                          _converged_scalar, g_zero_delay)
from .errors import ConfigError, ConvergenceError, IntegrityError, PrecisionError
from .model import SensorSpec, SystemParams, default_epsilon

MAGIC = b"MCKP1"
#: Sentinel index marking a completed sweep in the record log.
_DONE = 0xFFFFFFFF


@dataclass(frozen=True)
class SweepAxis:
    name: str
    start: float
    stop: float
    points: int

    def __post_init__(self):
        if self.points < 1:
            raise ConfigError(f"axis {self.name}: point count must be >= 1")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class SweepPlan:
    """Template + axes; hashable identity of the numerical content."""

    evaluator: str                 # registry key
    template: dict                 # evaluator-specific fixed parameters
    axes: tuple[SweepAxis, ...]
    workers: int = 1
    checkpoint_interval: int = 16

    def __post_init__(self):
        if self.evaluator not in EVALUATORS:
            raise ConfigError(f"unknown evaluator {self.evaluator!r}; "
                              f"known: {sorted(EVALUATORS)}")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names) or not names:
            raise ConfigError("axis names must be unique and nonempty")
        if self.workers < 1:
            raise ConfigError("worker count must be >= 1")
        if self.checkpoint_interval < 1:
            raise ConfigError("checkpoint interval must be >= 1")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.points for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def canonical_json(self) -> str:
        # workers / checkpoint_interval affect scheduling only, never values
        return json.dumps({
            "evaluator": self.evaluator,
            "template": self.template,
            "axes": [{"name": a.name, "start": a.start, "stop": a.stop,
                      "points": a.points} for a in self.axes],
        }, sort_keys=True)

    def plan_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @staticmethod
    def from_canonical(doc: dict, workers: int = 1, checkpoint_interval: int = 16
                       ) -> "SweepPlan":
        return SweepPlan(evaluator=doc["evaluator"], template=doc["template"],
                         axes=tuple(SweepAxis(**a) for a in doc["axes"]),
                         workers=workers, checkpoint_interval=checkpoint_interval)


# ---------------------------------------------------------------------------
# evaluators (module-level: must pickle into worker processes)


def _params_from(template: dict) -> SystemParams:
    s = template["system"]
    return SystemParams(rabi=s["rabi"], detuning=s.get("detuning", 0.0),
                        gamma=s.get("gamma", 1.0))


def _eval_correlation(template: dict, point: dict) -> float:
    params = _params_from(template)
    partition = tuple(template["partition"])
    linewidths = tuple(template["linewidths"])
    freqs = []
    for mu in range(len(partition)):
        key = f"frequency_{mu + 1}"
        freqs.append(point[key] if key in point else template["frequencies"][mu])
    req = CorrelationRequest(partition=partition, frequencies=tuple(freqs),
                             linewidths=linewidths)
    return g_zero_delay(params, req, epsilon=template.get("epsilon")).value


def _eval_spectrum(template: dict, point: dict) -> float:
    # un-normalized sensor population; the aggregator normalizes the grid
    from .correlators import _ladder_moment
    from .model import build_model
    from .steady import solve_steady_state_sectored
    params = _params_from(template)
    sensor = SensorSpec(frequency=point["frequency"],
                        linewidth=template["linewidth"], bundle_order=1)
    eps = template.get("epsilon") or default_epsilon(params, (sensor,))
    model = build_model(params, (sensor,), epsilon=eps)
    rho = solve_steady_state_sectored(model)
    return _ladder_moment(model.xi[0], 1, rho.matrix).real


def _eval_autocorr(template: dict, point: dict) -> float:
    params = _params_from(template)
    order = int(template["order"])
    lw = template["linewidth"]
    w = point["frequency"]
    eps0 = template.get("epsilon") or default_epsilon(
        params, (SensorSpec(w, lw, order),))
    return _converged_scalar(
        lambda e: _autocorr_at_eps(params, order, lw, w, e), eps0).value


EVALUATORS = {
    "correlation": _eval_correlation,
    "spectrum": _eval_spectrum,
    "autocorrelation": _eval_autocorr,
}


def _worker(args):
    """One grid point; failures become flagged NaN, never crash the pool."""
    index, evaluator, template, point = args
    try:
        value = EVALUATORS[evaluator](template, point)
        reason = "undefined: zero denominator" if math.isnan(value) else ""
        return index, value, reason
    except (ConvergenceError, PrecisionError) as exc:
        return index, math.nan, f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------------------
# checkpoint file

_REC = struct.Struct("<IdI")  # index, value, reason length


def _write_header(fh, plan: SweepPlan):
    blob = plan.canonical_json().encode()
    fh.write(MAGIC)
    fh.write(struct.pack("<I", len(blob)))
    fh.write(blob)


def _append_records(fh, records):
    for index, value, reason in records:
        rb = reason.encode()
        payload = _REC.pack(index, value, len(rb)) + rb
        fh.write(payload + struct.pack("<I", zlib.crc32(payload)))
    fh.flush()
    os.fsync(fh.fileno())


def _read_checkpoint(path: str):
    """Returns (plan canonical dict, {index: (value, reason)}, complete)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:5] != MAGIC:
        raise IntegrityError(f"{path}: bad magic, not a checkpoint")
    try:
        (hlen,) = struct.unpack_from("<I", raw, 5)
        doc = json.loads(raw[9:9 + hlen].decode())
    except (struct.error, ValueError) as exc:
        raise IntegrityError(f"{path}: unreadable plan header: {exc}") from exc
    pos = 9 + hlen
    done = {}
    complete = False
    rec_no = 0
    while pos < len(raw):
        try:
            index, value, rlen = _REC.unpack_from(raw, pos)
            body_end = pos + _REC.size + rlen
            payload = raw[pos:body_end]
            (crc,) = struct.unpack_from("<I", raw, body_end)
        except struct.error as exc:
            raise IntegrityError(f"{path}: truncated record", record_index=rec_no) from exc
        if zlib.crc32(payload) != crc:
            raise IntegrityError(f"{path}: checksum mismatch", record_index=rec_no)
        reason = payload[_REC.size:].decode()
        if index == _DONE:
            complete = True
        else:
            done[index] = (value, reason)
        pos = body_end + 4
        rec_no += 1
    return doc, done, complete


# ---------------------------------------------------------------------------
# driver


def _grid_points(plan: SweepPlan):
    axes_vals = [a.values() for a in plan.axes]
    names = [a.name for a in plan.axes]
    for k in range(plan.size):
        idx = np.unravel_index(k, plan.shape)
        yield k, {n: float(axes_vals[d][i]) for d, (n, i) in enumerate(zip(names, idx))}


def _assemble(plan: SweepPlan, done: dict) -> ResultGrid:
    values = np.full(plan.shape, math.nan)
    flags = {}
    for k in range(plan.size):
        idx = np.unravel_index(k, plan.shape)
        key = tuple(int(i) for i in idx) if len(idx) > 1 else int(idx[0])
        v, reason = done[k]
        values[idx] = v
        if reason:
            flags[key] = reason
    meta = dict(plan.template)
    meta["evaluator"] = plan.evaluator
    meta["plan_hash"] = plan.plan_hash()
    grid = ResultGrid(axes=[(a.name, a.values()) for a in plan.axes],
                      values=values, metadata=meta, flags=flags)
    if plan.evaluator == "spectrum":
        total = np.nansum(grid.values)
        if total > 0:
            grid.values = grid.values / total
            grid.metadata["normalization"] = "unit-grid-sum"
    return grid


def run_sweep(plan: SweepPlan, checkpoint_path: str,
              compute_counter: list | None = None) -> ResultGrid:
    """Evaluate the plan, checkpointing progress; resumes transparently.

    ``compute_counter`` (test hook) collects the grid indices actually
    evaluated in this call, proving no point is computed twice across a
    resume.
    """
    done = {}
    if os.path.exists(checkpoint_path) and os.path.getsize(checkpoint_path) > 0:
        doc, done, complete = _read_checkpoint(checkpoint_path)
        theirs = SweepPlan.from_canonical(doc)
        if theirs.plan_hash() != plan.plan_hash():
            raise IntegrityError(
                f"{checkpoint_path} belongs to a different plan "
                f"({theirs.plan_hash()[:12]} != {plan.plan_hash()[:12]}); refusing to resume")
        if complete and len(done) == plan.size:
            return _assemble(plan, done)
        fh = open(checkpoint_path, "r+b")
        fh.seek(0, os.SEEK_END)
    else:
        fh = open(checkpoint_path, "wb")
        _write_header(fh, plan)
        fh.flush()

    try:
        todo = [(k, point) for k, point in _grid_points(plan) if k not in done]
        if compute_counter is not None:
            compute_counter.extend(k for k, _ in todo)
        tasks = [(k, plan.evaluator, plan.template, point) for k, point in todo]
        pending = []

        def drain(force=False):
            if pending and (force or len(pending) >= plan.checkpoint_interval):
                _append_records(fh, pending)
                pending.clear()

        if plan.workers == 1:
            for t in tasks:
                k, v, reason = _worker(t)
                done[k] = (v, reason)
                pending.append((k, v, reason))
                drain()
        else:
            with ProcessPoolExecutor(max_workers=plan.workers) as pool:
                for k, v, reason in pool.map(_worker, tasks, chunksize=4):
                    done[k] = (v, reason)
                    pending.append((k, v, reason))
                    drain()
        drain(force=True)
        _append_records(fh, [(_DONE, 0.0, "")])
    finally:
        fh.close()
    return _assemble(plan, done)


def resume(checkpoint_path: str, workers: int = 1) -> ResultGrid:
    """Finish (or just re-emit) a sweep from its checkpoint file."""
    if not os.path.exists(checkpoint_path):
        raise IntegrityError(f"checkpoint {checkpoint_path} does not exist")
    doc, _, _ = _read_checkpoint(checkpoint_path)
    plan = SweepPlan.from_canonical(doc, workers=workers)
    return run_sweep(plan, checkpoint_path)
