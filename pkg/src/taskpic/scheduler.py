"""One PIC iteration under either execution mode, and the run loop.

Tasks-off (Algorithm-1 style): each collection's patches sit in a shared
dynamic queue; a worker claims a patch and runs the whole per-species
pipeline for it (all-bins interpolate, push, pre-BC, project, then the
current reduction) before claiming the next.

Tasks-on (Algorithm-2 style): per (patch, species) a sizing task owns a
group of per-bin operator chains linked by has_interpolated/has_pushed/
has_done_bc tags; a reduction task consumes has_done_dynamics and
serializes per patch through the has_reduced_densities tag.

Both modes deposit through bin subgrids with fixed-point reduction, so
final states are bitwise identical across modes and worker counts.

Reported particle-operation times are virtual-schedule makespans built
from per-thread CPU time (see runtime.replay_schedule): they expose the
scheduling behavior -- idle workers, saturation, task-level balancing --
independently of how many hardware cores actually backed the threads.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .balance import compute_loads, rebalance
from .config import Mode
from .exchange import (
    apply_particle_bc_and_migrate,
    sum_current_ghosts,
    sync_field_ghosts,
)
from .fields import maxwell_step, reduce_bin_currents
from .runtime import DepTag, Task, TaskGraph, TraceEvent, replay_schedule

OP_INTERPOLATION = "Interpolation"
OP_PUSH = "Push"
OP_PRE_BC = "pre-BC"
OP_PROJECTION = "Projection"
OP_REDUCTION = "Reduction"
OP_SIZING = "Sizing"

PARTICLE_OP_KINDS = (
    OP_INTERPOLATION, OP_PUSH, OP_PRE_BC, OP_PROJECTION, OP_REDUCTION, OP_SIZING,
)


@dataclass
class SimulationReport:
    """Per-operator timers and trace data for one run."""

    iterations: int
    mode: str
    n_collections: int
    workers_per_collection: int
    particle_makespan_s: list = field(default_factory=list)
    busy_by_kind: list = field(default_factory=list)  # per collection
    t_particle_wall_s: float = 0.0
    t_maxwell_s: float = 0.0
    t_sync_s: float = 0.0
    t_total_s: float = 0.0
    events: list = field(default_factory=list)
    executed_units: int = 0

    @property
    def t_particle_ops_s(self):
        """Virtual particle-phase makespan averaged over collections."""
        if not self.particle_makespan_s:
            return 0.0
        return float(np.mean(self.particle_makespan_s))

    def coarse_particle_busy_s(self, collection=None):
        """Sum of the per-operation busy windows (coarse phase timer)."""
        if collection is None:
            return sum(sum(d.values()) for d in self.busy_by_kind) * 1e-9
        return sum(self.busy_by_kind[collection].values()) * 1e-9

    def busy_by_kind_s(self):
        out = {}
        for d in self.busy_by_kind:
            for k, v in d.items():
                out[k] = out.get(k, 0.0) + v * 1e-9
        return out


class _Engine:
    """Shared op plumbing for both modes: kernels, clocks, records."""

    def __init__(self, domain):
        cfg = domain.config
        self.domain = domain
        self.cfg = cfg
        self.inv_dx = 1.0 / cfg.dx
        self.inv_dy = 1.0 / cfg.dy
        self.dx_over_dt = cfg.dx / cfg.dt
        self.dy_over_dt = cfg.dy / cfg.dt
        self.charge = [s.charge for s in domain.species]
        self.mass = [s.mass for s in domain.species]
        self.n_species = cfg.n_species
        self.n_bins = cfg.n_bins

    # -- operator bodies (shared by both modes) --------------------------

    def size_buffer(self, patch, ispec):
        patch.buffers[ispec].size_for(patch.arenas[ispec].n)

    def interpolate(self, patch, ispec, ibin):
        a = patch.arenas[ispec]
        buf = patch.buffers[ispec]
        buf.require_sized(a.n)
        s0, s1 = a.bin_slice(ibin)
        f = patch.fields
        kernels.gather_fields(
            a.x, a.y, s0, s1, f.ex, f.ey, f.ez, f.bx, f.by, f.bz,
            buf.cix, buf.ciy, buf.dlx, buf.dly,
            buf.epx, buf.epy, buf.epz, buf.bpx, buf.bpy, buf.bpz,
            self.inv_dx, self.inv_dy, patch.cell0x, patch.cell0y,
        )

    def push(self, patch, ispec, ibin):
        a = patch.arenas[ispec]
        buf = patch.buffers[ispec]
        s0, s1 = a.bin_slice(ibin)
        bad = kernels.boris_push(
            a.x, a.y, a.px, a.py, a.pz, s0, s1,
            buf.epx, buf.epy, buf.epz, buf.bpx, buf.bpy, buf.bpz,
            self.charge[ispec], self.mass[ispec], self.cfg.dt,
        )
        if bad >= 0:
            raise FloatingPointError(
                f"non-finite momentum for particle id {int(a.id[bad])} "
                f"(patch {patch.patch_ix},{patch.patch_iy} species {ispec})"
            )

    def pre_bc(self, patch, ispec, ibin):
        a = patch.arenas[ispec]
        s0, s1 = a.bin_slice(ibin)
        kernels.flag_boundaries(
            a.x, a.y, s0, s1, a.flags,
            patch.xmin, patch.xmax, patch.ymin, patch.ymax,
        )

    def project(self, patch, ispec, ibin):
        a = patch.arenas[ispec]
        buf = patch.buffers[ispec]
        s0, s1 = a.bin_slice(ibin)
        sub = patch.subgrids[ispec][ibin]
        bad = kernels.esirkepov_project(
            a.x, a.y, a.px, a.py, a.pz, a.weight, s0, s1,
            buf.cix, buf.ciy, buf.dlx, buf.dly,
            sub.jx, sub.jy, sub.jz,
            self.charge[ispec], self.mass[ispec], self.inv_dx, self.inv_dy,
            self.dx_over_dt, self.dy_over_dt,
            patch.cell0x + sub.x_shift, patch.cell0y,
        )
        if bad >= 0:
            raise FloatingPointError(
                f"particle id {int(a.id[bad])} moved more than one cell per "
                f"step (Courant violation, patch {patch.patch_ix},{patch.patch_iy})"
            )

    def reduce_and_release(self, patch, ispec):
        reduce_bin_currents(patch, ispec)
        patch.buffers[ispec].release()


class _OffDriver:
    """Dynamic patch queue for one collection (tasks-off mode)."""

    _OPS = (
        (OP_INTERPOLATION, "interpolate"),
        (OP_PUSH, "push"),
        (OP_PRE_BC, "pre_bc"),
        (OP_PROJECTION, "project"),
    )

    def __init__(self, engine, patches, n_workers):
        self.engine = engine
        self.queue = deque(patches)
        self.lock = threading.Lock()
        self.claims_by_worker = [[] for _ in range(n_workers)]

    def work(self, widx):
        eng = self.engine
        while True:
            with self.lock:
                if not self.queue:
                    return
                patch = self.queue.popleft()
            recs = []
            pid = patch.flat_id
            for s in range(eng.n_species):
                o0 = time.thread_time_ns()
                i0 = time.thread_time_ns()
                eng.size_buffer(patch, s)
                i1 = time.thread_time_ns()
                recs.append((OP_SIZING, pid, s, -1, time.thread_time_ns() - o0, i1 - i0))
                for kind, name in self._OPS:
                    op = getattr(eng, name)
                    for b in range(eng.n_bins):
                        o0 = time.thread_time_ns()
                        i0 = time.thread_time_ns()
                        op(patch, s, b)
                        i1 = time.thread_time_ns()
                        recs.append((kind, pid, s, b, time.thread_time_ns() - o0, i1 - i0))
                o0 = time.thread_time_ns()
                i0 = time.thread_time_ns()
                eng.reduce_and_release(patch, s)
                i1 = time.thread_time_ns()
                recs.append((OP_REDUCTION, pid, s, -1, time.thread_time_ns() - o0, i1 - i0))
            self.claims_by_worker[widx].append(recs)


def _build_task_graph(engine, patches):
    """Submit the Algorithm-2 task set for one collection's patches."""
    graph = TaskGraph()
    for patch in patches:
        pid = patch.flat_id
        for s in range(engine.n_species):
            dyn = graph.submit(Task(
                _bind(engine.size_buffer, patch, s),
                out_tags=[DepTag("has_done_dynamics", (pid, s))],
                meta=(OP_SIZING, pid, s, -1),
            ))
            for b in range(engine.n_bins):
                graph.submit(Task(
                    _bind(engine.interpolate, patch, s, b),
                    out_tags=[DepTag("has_interpolated", (pid, s, b))],
                    meta=(OP_INTERPOLATION, pid, s, b),
                    group=dyn,
                ))
            for b in range(engine.n_bins):
                graph.submit(Task(
                    _bind(engine.push, patch, s, b),
                    in_tags=[DepTag("has_interpolated", (pid, s, b))],
                    out_tags=[DepTag("has_pushed", (pid, s, b))],
                    meta=(OP_PUSH, pid, s, b),
                    group=dyn,
                ))
            for b in range(engine.n_bins):
                graph.submit(Task(
                    _bind(engine.pre_bc, patch, s, b),
                    in_tags=[DepTag("has_pushed", (pid, s, b))],
                    out_tags=[DepTag("has_done_bc", (pid, s, b))],
                    meta=(OP_PRE_BC, pid, s, b),
                    group=dyn,
                ))
            for b in range(engine.n_bins):
                graph.submit(Task(
                    _bind(engine.project, patch, s, b),
                    in_tags=[DepTag("has_done_bc", (pid, s, b))],
                    meta=(OP_PROJECTION, pid, s, b),
                    group=dyn,
                ))
            graph.submit(Task(
                _bind(engine.reduce_and_release, patch, s),
                in_tags=[DepTag("has_done_dynamics", (pid, s))],
                out_tags=[DepTag("has_reduced_densities", (pid,))],
                meta=(OP_REDUCTION, pid, s, -1),
            ))
    return graph


def _bind(fn, *args):
    def body():
        fn(*args)
    return body


class _WorkerPool:
    """Persistent threads dispatched in rounds of per-worker jobs."""

    def __init__(self, n_threads):
        self.n = n_threads
        self._cond = threading.Condition()
        self._round = 0
        self._jobs = None
        self._done = 0
        self._stop = False
        self._failures = []
        self._threads = [
            threading.Thread(target=self._main, args=(i,), daemon=True)
            for i in range(n_threads)
        ]
        for t in self._threads:
            t.start()

    def _main(self, idx):
        seen = 0
        while True:
            with self._cond:
                while self._round == seen and not self._stop:
                    self._cond.wait()
                if self._stop:
                    return
                seen = self._round
                job = self._jobs[idx]
            try:
                if job is not None:
                    job()
            except BaseException as exc:  # noqa: BLE001 - propagated below
                with self._cond:
                    self._failures.append(exc)
            finally:
                with self._cond:
                    self._done += 1
                    self._cond.notify_all()

    def run_round(self, jobs):
        if len(jobs) != self.n:
            raise ValueError("need one job per worker")
        with self._cond:
            self._jobs = list(jobs)
            self._done = 0
            self._round += 1
            self._cond.notify_all()
            while self._done < self.n:
                self._cond.wait()
            if self._failures:
                exc = self._failures[0]
                self._failures = []
                raise exc

    def shutdown(self):
        with self._cond:
            self._stop = True
            self._cond.notify_all()
        for t in self._threads:
            t.join()


def iterate_tasks_off(engine, patches, n_workers):
    """Run one tasks-off particle phase for one collection; returns the
    driver carrying the recorded claims."""
    driver = _OffDriver(engine, patches, n_workers)
    threads = [
        threading.Thread(target=driver.work, args=(w,), daemon=True)
        for w in range(n_workers)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return driver


def iterate_tasks_on(engine, patches, n_workers, graph=None):
    """Build and run the Algorithm-2 graph for one collection (standalone
    helper; run_simulation drives the same pieces through its pool)."""
    if graph is None:
        graph = _build_task_graph(engine, patches)
    graph.execute(n_workers)
    return graph


def _off_schedule_results(driver, n_workers, collection, iteration, tracing):
    """Virtual replay of a tasks-off phase: per-worker claim chains."""
    clocks = [0] * n_workers
    events = []
    busy = {}
    units = 0
    for w, claims in enumerate(driver.claims_by_worker):
        for recs in claims:
            for kind, pid, s, b, outer, inner in recs:
                if tracing:
                    events.append(TraceEvent(
                        collection, w, kind, pid, s, b, iteration,
                        clocks[w], inner,
                    ))
                clocks[w] += outer
                busy[kind] = busy.get(kind, 0) + outer
                units += 1
    return max(clocks) if clocks else 0, events, busy, units


def _on_schedule_results(graph, n_workers, collection, iteration, tracing):
    makespan = replay_schedule(graph.tasks, n_workers)
    events = []
    busy = {}
    for t in graph.tasks:
        kind = t.meta[0]
        busy[kind] = busy.get(kind, 0) + t.busy_ns
        if tracing:
            events.append(TraceEvent(
                collection, t.worker, kind, t.meta[1], t.meta[2], t.meta[3],
                iteration, t.vstart, t.inner_ns,
            ))
    return makespan, events, busy, len(graph.tasks)


def run_simulation(domain, config=None, *, tracing=False, trace_window=None,
                   on_iteration_end=None):
    """Run the configured number of PIC iterations.

    Each iteration: particle phase (chosen mode, per collection) ->
    exchange/sync (particle BCs + migration, current ghost folding) ->
    Maxwell step per patch -> field ghost sync -> periodic load balance.

    trace_window: optional (first, last_exclusive) iteration range for
    event retention; timers always cover the whole run.
    """
    cfg = domain.config if config is None else config
    if config is not None and config is not domain.config:
        raise ValueError("config must be the domain's config")
    kernels.warmup()
    n_coll = cfg.n_collections
    n_work = cfg.workers_per_collection
    report = SimulationReport(
        iterations=cfg.n_iterations,
        mode=cfg.mode.value,
        n_collections=n_coll,
        workers_per_collection=n_work,
        particle_makespan_s=[0.0] * n_coll,
        busy_by_kind=[{} for _ in range(n_coll)],
    )
    if cfg.n_iterations == 0:
        if on_iteration_end is not None:
            on_iteration_end(domain, -1)
        return report

    if cfg.lb_period > 0:
        rebalance(domain, compute_loads(domain))

    engine = _Engine(domain)
    pool = _WorkerPool(n_coll * n_work)
    t_run0 = time.perf_counter()
    try:
        for it in range(cfg.n_iterations):
            retain = tracing and (
                trace_window is None or trace_window[0] <= it < trace_window[1]
            )
            for p in domain.patches:
                p.fields.zero_current_accumulators()
            groups = domain.collections()

            t0 = time.perf_counter()
            if cfg.mode is Mode.TASKS_OFF:
                drivers = [_OffDriver(engine, g, n_work) for g in groups]
                jobs = [
                    _bind(drivers[gw // n_work].work, gw % n_work)
                    for gw in range(n_coll * n_work)
                ]
                pool.run_round(jobs)
                results = [
                    _off_schedule_results(drivers[c], n_work, c, it, retain)
                    for c in range(n_coll)
                ]
            else:
                holders = [_GraphHolder() for _ in range(n_coll)]
                jobs = [
                    _bind(_on_worker_job, engine, groups[gw // n_work],
                          holders[gw // n_work], gw % n_work)
                    for gw in range(n_coll * n_work)
                ]
                pool.run_round(jobs)
                for h in holders:
                    h.graph.raise_failure()
                results = [
                    _on_schedule_results(holders[c].graph, n_work, c, it, retain)
                    for c in range(n_coll)
                ]
            report.t_particle_wall_s += time.perf_counter() - t0

            for c, (makespan, events, busy, units) in enumerate(results):
                report.particle_makespan_s[c] += makespan * 1e-9
                for k, v in busy.items():
                    report.busy_by_kind[c][k] = report.busy_by_kind[c].get(k, 0) + v
                report.events.extend(events)
                report.executed_units += units

            t0 = time.perf_counter()
            apply_particle_bc_and_migrate(domain)
            sum_current_ghosts(domain)
            report.t_sync_s += time.perf_counter() - t0

            t0 = time.perf_counter()
            for p in domain.patches:
                maxwell_step(p, cfg.dt)
            report.t_maxwell_s += time.perf_counter() - t0

            t0 = time.perf_counter()
            sync_field_ghosts(domain)
            report.t_sync_s += time.perf_counter() - t0

            if cfg.lb_period > 0 and (it + 1) % cfg.lb_period == 0:
                rebalance(domain, compute_loads(domain))

            if on_iteration_end is not None:
                on_iteration_end(domain, it)
    finally:
        pool.shutdown()
    report.t_total_s = time.perf_counter() - t_run0
    return report


class _GraphHolder:
    def __init__(self):
        self.graph = None
        self.ready = threading.Event()


def _on_worker_job(engine, patches, holder, local_widx):
    """Tasks-on round job: local worker 0 submits, everyone executes."""
    if local_widx == 0:
        try:
            graph = _build_task_graph(engine, patches)
            graph._seal()
            holder.graph = graph
        finally:
            holder.ready.set()
    else:
        holder.ready.wait()
    if holder.graph is not None:
        holder.graph.work_loop(local_widx)
