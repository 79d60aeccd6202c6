"""Stepwise multilevel-oscillation search.

Each step holds q constant and watches the occupied-level count K in the
q = 0 eigenbasis until it reaches its first local minimum, then sweeps q
over a geometric grid and keeps the best hold.  Repeating the step
drives K down to 1 (the total-spin-zero state); mirroring the resulting
schedule through q -> -q then converts that state into the twin-Fock
state.  The construction is deterministic: the grid is fixed by the
config, grid points are scanned in ascending order and every tie-break
is total.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import SectorBasis, StateVector
from .observables import reference_eigensystem
from .operators import PhysicsParams, hamiltonian_sector
from .schedule import Hold, Schedule, mirror_schedule, reference_ramp, run_schedule
from .spectra import EigenSystem, eigensolve_tridiagonal

log = logging.getLogger(__name__)

_SCAN_CHUNK = 256


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs of the stepwise hold search."""

    q_min_hz: float = 1e-4
    q_max_hz: float | None = None  # default: q at the end of the entry ramp
    points_per_decade: int = 40
    dwell_window: int = 50
    sample_dt_s: float = 1e-3
    step_time_cap_s: float = 3.0
    max_steps: int = 6
    k_threshold: float = 1e-3
    seed: int = 0
    refine_factor: int = 4
    plateau_s: float = 0.32

    def __post_init__(self):
        if self.q_min_hz <= 0:
            raise ValueError("q_min_hz must be > 0")
        if not math.isfinite(self.step_time_cap_s) or self.step_time_cap_s <= 0:
            raise ValueError("step_time_cap_s must be finite and positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class HoldScan:
    """Outcome of watching K during one constant-q hold."""

    q_hz: float
    k: int
    t_s: float
    pop_two_lowest: float
    flag: str  # "", "flat" or "capped"
    amplitudes: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class StepResult:
    """Winning hold of one grid sweep plus the per-q diagnostics table."""

    q_star_hz: float
    t_star_s: float
    k_star: int
    psi_out: StateVector
    table: tuple[HoldScan, ...]


@dataclass(frozen=True)
class AmoResult:
    schedule: Schedule          # the emitted holds only
    final_state: StateVector
    steps: tuple[StepResult, ...]
    k_history: tuple[int, ...]  # K before the first step, then after each
    reached_target: bool


def geometric_grid(q_min_hz: float, q_max_hz: float, points_per_decade: int) -> np.ndarray:
    """Ascending geometric grid covering [q_min, q_max] inclusive."""
    if q_max_hz < q_min_hz:
        raise ValueError("q_max must be >= q_min")
    if q_max_hz == q_min_hz:
        return np.array([q_min_hz])
    span = math.log10(q_max_hz / q_min_hz)
    n = max(2, int(round(span * points_per_decade)) + 1)
    return np.geomspace(q_min_hz, q_max_hz, n)


def first_local_min_k(
    state: StateVector,
    q_hz: float,
    params: PhysicsParams,
    cfg: OptimizerConfig,
    reference: EigenSystem,
) -> HoldScan:
    """Evolve at constant q, sampling K, until its first local minimum.

    A sample is a local minimum when it is <= every K in the preceding
    ``dwell_window`` samples and <= every K in the following window, and
    it must lie below the starting K (a hold only counts once the level
    count has actually refocused downward; otherwise t = 0 would qualify
    vacuously before any dynamics happen).  A trace that never changes
    returns its first sample flagged "flat"; if nothing qualifies before
    the time cap, the earliest global minimum of the capped scan is
    returned with flag "capped".
    """
    basis = state.basis
    h = hamiltonian_sector(params.with_q(q_hz), basis)
    eig = eigensolve_tridiagonal(h)
    c0 = eig.vectors.T @ state.amplitudes
    change = reference.vectors.T @ eig.vectors  # reference <- hold eigenbasis

    dt = cfg.sample_dt_s
    w = cfg.dwell_window
    j_max = int(math.floor(cfg.step_time_cap_s / dt))
    ks = np.empty(j_max + 1, dtype=np.int64)
    pop2s = np.empty(j_max + 1, dtype=np.float64)
    have = 0  # samples evaluated so far

    def extend(upto: int):
        nonlocal have
        upto = min(upto, j_max + 1)
        while have < upto:
            hi = min(have + _SCAN_CHUNK, upto)
            taus = np.arange(have, hi) * dt
            phases = np.exp(-1j * np.outer(eig.values, taus))
            pops = np.abs(change @ (phases * c0[:, None])) ** 2
            ks[have:hi] = np.maximum((pops > cfg.k_threshold).sum(axis=0), 1)
            pop2s[have:hi] = pops[:2].sum(axis=0)
            have = hi

    found = -1
    flag = ""
    j = 1
    while j + w <= j_max:
        extend(j + w + 1)
        if ks[j] < ks[0]:
            following_ok = ks[j] <= ks[j + 1 : j + w + 1].min()
            preceding_ok = ks[j] <= ks[max(0, j - w) : j].min()
            if following_ok and preceding_ok:
                found = j
                break
        j += 1

    if found < 0:
        extend(j_max + 1)
        if np.all(ks[: j_max + 1] == ks[0]):
            found = 0
            flag = "flat"
        else:
            # no certified local minimum before the cap: take the global
            # minimum, represented by the sample that best concentrates
            # population in the two lowest levels (earliest on ties)
            k_min = ks[: j_max + 1].min()
            at_min = np.flatnonzero(ks[: j_max + 1] == k_min)
            found = int(at_min[np.argmax(pop2s[at_min])])
            flag = "capped"

    t_star = found * dt
    col = eig.vectors @ (np.exp(-1j * eig.values * t_star) * c0)
    pops_star = np.abs(reference.vectors.T @ col) ** 2
    return HoldScan(
        q_hz=float(q_hz),
        k=int(ks[found]),
        t_s=float(t_star),
        pop_two_lowest=float(pops_star[:2].sum()),
        flag=flag,
        amplitudes=col,
    )


def optimize_step(
    state: StateVector,
    q_upper_hz: float,
    params: PhysicsParams,
    cfg: OptimizerConfig,
    reference: EigenSystem,
    grid: np.ndarray | None = None,
) -> StepResult:
    """Sweep the geometric q grid and keep the hold minimizing K.

    Ties go to the larger population in the two lowest reference levels,
    then to the shorter hold, then to the lower q (scan order).
    """
    if grid is None:
        grid = geometric_grid(cfg.q_min_hz, q_upper_hz, cfg.points_per_decade)
    if grid.size == 0:
        raise ValueError("empty q grid")
    best: HoldScan | None = None
    table = []
    for q in grid:
        scan = first_local_min_k(state, float(q), params, cfg, reference)
        table.append(scan)
        if (
            best is None
            or scan.k < best.k
            or (scan.k == best.k and scan.pop_two_lowest > best.pop_two_lowest)
            or (
                scan.k == best.k
                and scan.pop_two_lowest == best.pop_two_lowest
                and scan.t_s < best.t_s
            )
        ):
            best = scan
    return StepResult(
        q_star_hz=best.q_hz,
        t_star_s=best.t_s,
        k_star=best.k,
        psi_out=StateVector(state.basis, best.amplitudes.copy()),
        table=tuple(table),
    )


def _count_k(state: StateVector, reference: EigenSystem, threshold: float) -> int:
    pops = np.abs(reference.vectors.T @ state.amplitudes) ** 2
    return max(int(np.sum(pops > threshold)), 1)


def run_amo(
    state: StateVector,
    params: PhysicsParams,
    cfg: OptimizerConfig,
    reference: EigenSystem | None = None,
) -> AmoResult:
    """Shrink K to 1 by successive optimized holds.

    A step that fails to reduce K triggers one grid refinement
    (``refine_factor`` x the point density around the best q); if that
    also fails to improve, the flagged best is accepted and iteration
    continues, so K is non-increasing by construction.
    """
    basis = state.basis
    if not isinstance(basis, SectorBasis):
        raise TypeError("the hold search runs on chain sectors")
    if reference is None:
        reference = reference_eigensystem(basis.n_atoms, basis.magnetization)
    if cfg.q_max_hz is None:
        raise ValueError("cfg.q_max_hz must be set (q at the end of the entry ramp)")

    k_now = _count_k(state, reference, cfg.k_threshold)
    k_history = [k_now]
    holds: list[Hold] = []
    steps: list[StepResult] = []
    current = state
    q_upper = cfg.q_max_hz

    while k_now > 1 and len(steps) < cfg.max_steps:
        step = optimize_step(current, q_upper, params, cfg, reference)
        if step.k_star >= k_now and step.k_star > 1:
            spacing = 10.0 ** (1.0 / cfg.points_per_decade)
            refined = geometric_grid(
                max(cfg.q_min_hz, step.q_star_hz / spacing),
                min(q_upper, step.q_star_hz * spacing),
                cfg.refine_factor * cfg.points_per_decade,
            )
            log.info(
                "step %d did not improve K (%d); refining grid around q=%.3g Hz",
                len(steps) + 1,
                step.k_star,
                step.q_star_hz,
            )
            retry = optimize_step(current, q_upper, params, cfg, reference, grid=refined)
            if retry.k_star < step.k_star:
                step = retry
        if step.k_star > k_now:
            raise AssertionError(
                f"K increased from {k_now} to {step.k_star}; the hold scan contract is broken"
            )
        steps.append(step)
        if steps and len(steps) >= 2 and step.q_star_hz > steps[-2].q_star_hz:
            log.warning(
                "selected q %.3g Hz is larger than the previous step's %.3g Hz",
                step.q_star_hz,
                steps[-2].q_star_hz,
            )
        if step.t_star_s > 0:
            holds.append(Hold(step.q_star_hz, step.t_star_s))
            current = step.psi_out
        k_now = step.k_star
        k_history.append(k_now)
        if step.t_star_s == 0 and step.k_star == k_history[-2]:
            log.info("step made no progress even after refinement; stopping")
            break

    return AmoResult(
        schedule=Schedule(tuple(holds)),
        final_state=current,
        steps=tuple(steps),
        k_history=tuple(k_history),
        reached_target=(k_now == 1),
    )


@dataclass(frozen=True)
class ProtocolResult:
    """A full optimized protocol: schedule, final state, search details."""

    schedule: Schedule
    final_state: StateVector
    amo: AmoResult


def run_amo_protocol(
    state0: StateVector,
    params: PhysicsParams,
    cfg: OptimizerConfig,
    ramp: Schedule | None = None,
    ramp_dt: float | None = None,
) -> ProtocolResult:
    """Entry ramp plus optimized holds, from an arbitrary starting state."""
    from .propagate import evolve_ramp

    if ramp is None:
        ramp = reference_ramp()
    current = state0
    for seg in ramp.segments:
        current, _ = evolve_ramp(current, seg, params, dt=ramp_dt)
    q_entry = float(ramp.segments[-1].q_hz_at(ramp.segments[-1].duration))
    if cfg.q_max_hz is None:
        cfg = replace(cfg, q_max_hz=q_entry)
    amo = run_amo(current, params, cfg)
    full = Schedule(tuple(ramp.segments) + amo.schedule.segments)
    return ProtocolResult(schedule=full, final_state=amo.final_state, amo=amo)


def run_amoa_protocol(
    state0: StateVector,
    params: PhysicsParams,
    cfg: OptimizerConfig,
    ramp: Schedule | None = None,
    ramp_dt: float | None = None,
    fw: ProtocolResult | None = None,
) -> ProtocolResult:
    """Optimized protocol, zero-q plateau, then the mirrored protocol.

    The mirrored half replays the found schedule backwards with q -> -q;
    nothing is re-optimized there.  A precomputed forward result can be
    passed to skip the search.
    """
    if state0.basis.n_atoms % 2:
        raise ValueError("the mirrored protocol requires an even atom number")
    if fw is None:
        fw = run_amo_protocol(state0, params, cfg, ramp=ramp, ramp_dt=ramp_dt)
    segments = (
        fw.schedule.segments
        + (Hold(0.0, cfg.plateau_s),)
        + mirror_schedule(fw.schedule).segments
    )
    full = Schedule(segments)
    back = Schedule((Hold(0.0, cfg.plateau_s),) + mirror_schedule(fw.schedule).segments)
    _, final = run_schedule(
        fw.final_state, back, params, sample_dt=None, ramp_dt=ramp_dt
    )
    return ProtocolResult(schedule=full, final_state=final, amo=fw.amo)
