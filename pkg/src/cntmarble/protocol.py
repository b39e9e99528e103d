"""Stimulation waveforms and the runners that drive a device through them.

Two stimulus families are supported:

* pulse-train protocols -- phases of identical triangular pulses separated by
  0 V rests, sampled once per pulse at its peak;
* double-sided triangular IV sweeps, sampled at the end of every dwell step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .device import DeviceKind, DeviceParams, DeviceState, _euler, _resistance, initial_state

__all__ = [
    "PhaseSpec",
    "concat_protocols",
    "ProtocolSpec",
    "SweepSpec",
    "Trace",
    "loop_area",
    "paper_protocol",
    "read_trace_csv",
    "run_protocol",
    "run_sweep",
    "voltage_at",
    "write_trace_csv",
]

CSV_HEADER = ("t_s", "v_volt", "i_amp", "r_ohm", "phase", "pulse")
_DT_TOL = 1e-12


@dataclass(frozen=True)
class PhaseSpec:
    amplitude: float
    pulse_count: int
    ramp_time: float = 0.5
    off_time: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")
        if int(self.pulse_count) != self.pulse_count or self.pulse_count <= 0:
            raise ValueError("pulse_count must be a positive integer")
        if not self.ramp_time > 0:
            raise ValueError("ramp_time must be positive")
        if not self.off_time >= 0:
            raise ValueError("off_time must be non-negative")

    @property
    def cycle(self) -> float:
        return 2.0 * self.ramp_time + self.off_time

    @property
    def duration(self) -> float:
        return self.pulse_count * self.cycle


@dataclass(frozen=True)
class ProtocolSpec:
    phases: tuple[PhaseSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))

    @property
    def duration(self) -> float:
        return sum(p.duration for p in self.phases)

    def phase_starts(self) -> tuple[float, ...]:
        starts, t = [], 0.0
        for p in self.phases:
            starts.append(t)
            t += p.duration
        return tuple(starts)

    @property
    def n_samples(self) -> int:
        return sum(p.pulse_count for p in self.phases)


@dataclass(frozen=True)
class SweepSpec:
    v_max: float = 3.0
    steps_per_leg: int = 60
    dwell: float = 0.1

    def __post_init__(self):
        if not (math.isfinite(self.v_max) and self.v_max > 0):
            raise ValueError("v_max must be positive")
        if int(self.steps_per_leg) != self.steps_per_leg or self.steps_per_leg < 1:
            raise ValueError("steps_per_leg must be a positive integer")
        if not self.dwell > 0:
            raise ValueError("dwell must be positive")

    def levels(self) -> np.ndarray:
        """Voltage levels 0 -> +v_max -> 0 -> -v_max -> 0 (4n+1 points)."""
        n = self.steps_per_leg
        j = np.concatenate([np.arange(0, n), np.arange(n, 0, -1),
                            -np.arange(0, n), -np.arange(n, -1, -1)])
        return self.v_max * j / n


@dataclass
class Trace:
    """Recorded samples of a simulated run, stored column-wise.

    ``phase_starts`` holds the absolute start time of every phase when known;
    onset times are measured from these.
    """

    t: np.ndarray
    v: np.ndarray
    i: np.ndarray
    r: np.ndarray
    phase: np.ndarray
    pulse: np.ndarray
    phase_starts: tuple[float, ...] | None = None
    final_state: DeviceState | None = field(default=None, compare=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.i = np.asarray(self.i, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        self.phase = np.asarray(self.phase, dtype=np.int64)
        self.pulse = np.asarray(self.pulse, dtype=np.int64)
        n = len(self.t)
        if any(len(a) != n for a in (self.v, self.i, self.r, self.phase, self.pulse)):
            raise ValueError("trace columns must have equal length")

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def empty(cls) -> "Trace":
        z = np.zeros(0)
        return cls(z, z, z, z, z.astype(np.int64), z.astype(np.int64), phase_starts=())

    def phases(self) -> list[int]:
        return sorted(set(self.phase.tolist()))

    def select_phase(self, phase_index: int) -> "Trace":
        m = self.phase == phase_index
        return Trace(self.t[m], self.v[m], self.i[m], self.r[m], self.phase[m],
                     self.pulse[m], self.phase_starts)

    def phase_start(self, phase_index: int) -> float:
        if self.phase_starts is not None and 0 <= phase_index < len(self.phase_starts):
            return self.phase_starts[phase_index]
        # without protocol metadata fall back to the phase's first sample
        return float(self.t[self.phase == phase_index][0])

    def shifted(self, dt: float) -> "Trace":
        starts = None if self.phase_starts is None else tuple(s + dt for s in self.phase_starts)
        return Trace(self.t + dt, self.v, self.i, self.r, self.phase, self.pulse, starts)


def paper_protocol() -> ProtocolSpec:
    """Four phases of 375 triangular 3 V pulses, polarity +, -, +, -."""
    return ProtocolSpec(tuple(
        PhaseSpec(amplitude=a, pulse_count=375, ramp_time=0.5, off_time=1.0)
        for a in (3.0, -3.0, 3.0, -3.0)
    ))


def voltage_at(protocol: ProtocolSpec, t: float) -> float:
    """Instantaneous drive voltage at time ``t``."""
    if not (0 <= t < protocol.duration):
        raise ValueError(f"t={t!r} outside [0, {protocol.duration})")
    start = 0.0
    for phase in protocol.phases:
        if t < start + phase.duration:
            tau = math.fmod(t - start, phase.cycle)
            if tau <= phase.ramp_time:
                return phase.amplitude * tau / phase.ramp_time
            if tau < 2 * phase.ramp_time:
                return phase.amplitude * (2 * phase.ramp_time - tau) / phase.ramp_time
            return 0.0
        start += phase.duration
    raise AssertionError("unreachable")


def _steps(span: float, dt: float, what: str) -> int:
    n = int(round(span / dt))
    if abs(n * dt - span) > _DT_TOL:
        raise ValueError(f"dt={dt!r} does not divide {what}={span!r}")
    return n


def _check_dt(dt: float) -> float:
    dt = float(dt)
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError("dt must be finite and positive")
    return dt


def _param_tuple(p: DeviceParams):
    return (p.r_high, p.r_low, p.q_threshold, p.entrain_gain, p.k_on, p.k_off,
            p.leak_rate, float(p.attract_sign), p.i_limit)


@njit(cache=True)
def _run_pulses(x, q, e, latch, kind, amps, counts, n_ramp, n_off, contacts, dt,
                r_high, r_low, q_threshold, entrain_gain, k_on, k_off, leak_rate,
                attract_sign, i_limit):
    total = 0
    for p in range(len(counts)):
        total += counts[p]
    out_v = np.empty(total)
    out_i = np.empty(total)
    out_r = np.empty(total)
    k = 0
    for p in range(len(counts)):
        amp = amps[p]
        nr = n_ramp[p]
        steps_per_cycle = 2 * nr + n_off[p]
        contact = contacts[p]
        for _ in range(counts[p]):
            for s in range(steps_per_cycle):
                if s <= nr:
                    v = amp * s / nr
                elif s < 2 * nr:
                    v = amp * (2 * nr - s) / nr
                else:
                    v = 0.0
                r_model = _resistance(r_high, r_low, contact, x)
                x, q, e, latch, i = _euler(
                    x, q, e, latch, v, dt, kind, r_high, r_low, contact, q_threshold,
                    entrain_gain, k_on, k_off, leak_rate, attract_sign, i_limit)
                if s == nr:
                    out_v[k] = v
                    out_i[k] = i
                    out_r[k] = v / i if i != 0.0 else r_model
                    k += 1
    return out_v, out_i, out_r, x, q, e, latch


@njit(cache=True)
def _run_levels(x, q, e, latch, kind, levels, n_dwell, dt, contact, r_high, r_low,
                q_threshold, entrain_gain, k_on, k_off, leak_rate, attract_sign, i_limit):
    n = len(levels)
    out_i = np.empty(n)
    out_r = np.empty(n)
    for k in range(n):
        v = levels[k]
        i = 0.0
        r_model = 0.0
        for _ in range(n_dwell):
            r_model = _resistance(r_high, r_low, contact, x)
            x, q, e, latch, i = _euler(
                x, q, e, latch, v, dt, kind, r_high, r_low, contact, q_threshold,
                entrain_gain, k_on, k_off, leak_rate, attract_sign, i_limit)
        out_i[k] = i
        out_r[k] = v / i if i != 0.0 else r_model
    return out_i, out_r, x, q, e, latch


def run_protocol(params: DeviceParams, kind: DeviceKind, protocol: ProtocolSpec,
                 dt: float = 0.01, state: DeviceState | None = None) -> Trace:
    """Integrate the device through ``protocol`` and record every pulse peak.

    For free-liquid CNT devices the contact factor is reduced by
    ``drift_per_phase`` at each completed phase boundary.
    """
    dt = _check_dt(dt)
    kind = DeviceKind.parse(kind)
    state = initial_state() if state is None else state
    if not protocol.phases:
        return Trace.empty()

    n_ramp = np.array([_steps(p.ramp_time, dt, "ramp_time") for p in protocol.phases], dtype=np.int64)
    n_off = np.array([_steps(p.off_time, dt, "off_time") for p in protocol.phases], dtype=np.int64)
    counts = np.array([p.pulse_count for p in protocol.phases], dtype=np.int64)
    amps = np.array([p.amplitude for p in protocol.phases], dtype=float)
    drift = params.drift_per_phase if kind is DeviceKind.CNT_FREE_LIQUID else 0.0
    contacts = np.array([params.contact_factor * (1.0 - drift) ** k
                         for k in range(len(protocol.phases))])

    v, i, r, x, q, e, latch = _run_pulses(
        state.x, state.q, state.e, state.switched_high, kind.code, amps, counts,
        n_ramp, n_off, contacts, dt, *_param_tuple(params))

    starts = protocol.phase_starts()
    t = np.concatenate([starts[k] + np.arange(p.pulse_count) * p.cycle + p.ramp_time
                        for k, p in enumerate(protocol.phases)])
    phase = np.repeat(np.arange(len(protocol.phases)), counts)
    pulse = np.concatenate([np.arange(c) for c in counts])
    final = DeviceState(x=x, q=q, e=int(e), switched_high=bool(latch))
    return Trace(t, v, i, r, phase, pulse, phase_starts=starts, final_state=final)


def run_sweep(params: DeviceParams, kind: DeviceKind, sweep: SweepSpec,
              dt: float = 0.01, state: DeviceState | None = None) -> Trace:
    """Double-sided staircase IV sweep, one sample at the end of each dwell.

    ``phase`` numbers the four legs (0 -> +, + -> 0, 0 -> -, - -> 0) and
    ``pulse`` is the level index along the whole sweep.
    """
    dt = _check_dt(dt)
    kind = DeviceKind.parse(kind)
    state = initial_state() if state is None else state
    n_dwell = _steps(sweep.dwell, dt, "dwell")
    levels = sweep.levels()
    i, r, x, q, e, latch = _run_levels(
        state.x, state.q, state.e, state.switched_high, kind.code, levels, n_dwell, dt,
        params.contact_factor, *_param_tuple(params))
    idx = np.arange(len(levels))
    t = (idx + 1) * sweep.dwell
    phase = np.minimum(idx // sweep.steps_per_leg, 3)
    leg = sweep.steps_per_leg * sweep.dwell
    final = DeviceState(x=x, q=q, e=int(e), switched_high=bool(latch))
    return Trace(t, levels, i, r, phase, idx,
                 phase_starts=tuple(k * leg for k in range(4)), final_state=final)


def _shoelace(v: np.ndarray, i: np.ndarray) -> float:
    return 0.5 * abs(float(np.dot(v, np.roll(i, -1)) - np.dot(i, np.roll(v, -1))))


def loop_area(iv: Trace, zero_tol: float = 1e-12) -> float:
    """Enclosed I-V area (V*A), summed over the lobes between zero crossings.

    The path must start and end at 0 V.  It is split at every interior sample
    with ``|v| <= zero_tol`` and each lobe is closed back to its first point.
    """
    v, i = iv.v, iv.i
    if len(v) < 2 or abs(v[0]) > zero_tol or abs(v[-1]) > zero_tol:
        raise ValueError("I-V path must start and end at 0 V")
    cuts = np.flatnonzero(np.abs(v) <= zero_tol)
    area = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a >= 2:
            area += _shoelace(v[a:b + 1], i[a:b + 1])
    return area


def write_trace_csv(trace: Trace, path: str | Path) -> None:
    """Write ``trace`` as CSV with 9-significant-digit floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in zip(trace.t, trace.v, trace.i, trace.r, trace.phase, trace.pulse):
            w.writerow([f"{row[0]:.9g}", f"{row[1]:.9g}", f"{row[2]:.9g}",
                        f"{row[3]:.9g}", int(row[4]), int(row[5])])


def read_trace_csv(path: str | Path, protocol: ProtocolSpec | None = None) -> Trace:
    """Load a trace CSV.  ``protocol`` restores phase start times if given."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = [r for r in reader if r]
    if not rows:
        return Trace.empty()
    cols = list(zip(*rows))
    starts = protocol.phase_starts() if protocol is not None else None
    return Trace(
        np.array(cols[0], dtype=float), np.array(cols[1], dtype=float),
        np.array(cols[2], dtype=float), np.array(cols[3], dtype=float),
        np.array(cols[4], dtype=np.int64), np.array(cols[5], dtype=np.int64),
        phase_starts=starts,
    )


def concat_protocols(*protocols: Sequence[PhaseSpec] | ProtocolSpec) -> ProtocolSpec:
    phases: list[PhaseSpec] = []
    for p in protocols:
        phases.extend(p.phases if isinstance(p, ProtocolSpec) else p)
    return ProtocolSpec(tuple(phases))
