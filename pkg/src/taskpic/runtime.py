"""Dependency-driven task executor with in/out tag semantics and tracing.

Edges are derived from tags at submission time following the OpenMP-4.5
rules: a task reading a tag depends on the tag's last writer; a task
writing a tag depends on the last writer and on every reader seen since.
A task may own a group of member tasks: members start only after the
owner's body ran, and the owner completes (releasing its out-edges) only
once every member finished -- the taskgroup join.

Execution is greedy: workers pull ready tasks from a shared queue and no
worker idles while one is available.  Per-task busy time is measured with
the per-thread CPU clock; after a run, `replay_schedule` lays the recorded
schedule out on per-worker virtual clocks, yielding a makespan and event
timeline that reflect scheduling quality independently of how many
hardware cores backed the workers.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from typing import NamedTuple


class DepTag(NamedTuple):
    """Structural dependence tag: a kind plus an index tuple."""

    kind: str
    index: tuple


class TraceEvent(NamedTuple):
    collection: int
    worker: int
    kind: str
    ipatch: int
    ispec: int
    ibin: int
    iteration: int
    start_ns: int
    dur_ns: int


class TaskError(RuntimeError):
    """A task body failed; carries the task meta."""


class Task:
    __slots__ = (
        "tid", "body", "in_tags", "out_tags", "meta", "group",
        "preds", "succs", "members", "indegree",
        "worker", "seq", "busy_ns", "inner_ns",
        "body_done", "pending_members",
        "vstart", "vfinish", "vcomplete",
    )

    def __init__(self, body, in_tags=(), out_tags=(), meta=None, group=None):
        self.body = body
        self.in_tags = tuple(in_tags)
        self.out_tags = tuple(out_tags)
        # meta: (op kind, ipatch, ispec, ibin) for tracing
        self.meta = meta if meta is not None else ("task", -1, -1, -1)
        self.group = group
        self.tid = -1
        self.preds = []
        self.succs = []
        self.members = []
        self.indegree = 0
        self.worker = -1
        self.seq = -1
        self.busy_ns = 0
        self.inner_ns = 0
        self.body_done = False
        self.pending_members = 0
        self.vstart = 0
        self.vfinish = 0
        self.vcomplete = 0


class TaskGraph:
    """Submission-ordered task set with tag-derived edges and an executor."""

    def __init__(self):
        self.tasks = []
        self._last_writer = {}
        self._readers = {}
        self._executing = False
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._ready = deque()
        self._completed = 0
        self._claim_seq = 0
        self._failure = None

    def submit(self, task):
        """Add a task, deriving edges from its tags; returns the task id."""
        if self._executing:
            raise RuntimeError("cannot submit tasks after execution started")
        task.tid = len(self.tasks)
        preds = set()
        for tag in task.in_tags:
            writer = self._last_writer.get(tag)
            if writer is not None:
                preds.add(writer)
            self._readers.setdefault(tag, []).append(task.tid)
        for tag in task.out_tags:
            writer = self._last_writer.get(tag)
            if writer is not None:
                preds.add(writer)
            preds.update(self._readers.get(tag, ()))
            self._last_writer[tag] = task.tid
            self._readers[tag] = []
        preds.discard(task.tid)
        task.preds = sorted(preds)
        task.indegree = len(task.preds)
        for p in task.preds:
            self.tasks[p].succs.append(task.tid)
        if task.group is not None:
            owner = self.tasks[task.group]
            owner.members.append(task.tid)
            owner.pending_members += 1
            task.indegree += 1  # implicit owner-body edge
        self.tasks.append(task)
        return task.tid

    def __len__(self):
        return len(self.tasks)

    def edges(self):
        """Derived (pred, succ) pairs, including implicit group edges."""
        out = []
        for t in self.tasks:
            for p in t.preds:
                out.append((p, t.tid))
            if t.group is not None:
                out.append((t.group, t.tid))
        return out

    # -- execution ---------------------------------------------------------

    def _seal(self):
        self._executing = True
        self._completed = 0
        for t in self.tasks:
            if t.indegree == 0:
                self._ready.append(t.tid)

    def work_loop(self, worker_index, recorder=None):
        """Claim and run ready tasks until the graph drains.

        Safe to call from several threads; `recorder(task)` runs after
        each body with busy time filled in.
        """
        tasks = self.tasks
        while True:
            with self._cond:
                while True:
                    if self._failure is not None or self._completed == len(tasks):
                        return
                    if self._ready:
                        tid = self._ready.popleft()
                        t = tasks[tid]
                        t.worker = worker_index
                        t.seq = self._claim_seq
                        self._claim_seq += 1
                        break
                    self._cond.wait()
            c0 = time.thread_time_ns()
            i0 = time.thread_time_ns()
            try:
                t.body()
            except BaseException as exc:  # noqa: BLE001 - abort with meta
                with self._cond:
                    self._failure = (t, exc)
                    self._cond.notify_all()
                return
            i1 = time.thread_time_ns()
            t.busy_ns = time.thread_time_ns() - c0
            t.inner_ns = i1 - i0
            if recorder is not None:
                recorder(t)
            with self._cond:
                self._body_finished(t)

    def _body_finished(self, t):
        t.body_done = True
        woke = False
        for m in t.members:
            mt = self.tasks[m]
            mt.indegree -= 1
            if mt.indegree == 0:
                self._ready.append(m)
                woke = True
        if t.pending_members == 0:
            woke |= self._complete(t)
        if woke or self._completed == len(self.tasks):
            self._cond.notify_all()

    def _complete(self, t):
        """Task fully done (body + members); release successor edges."""
        self._completed += 1
        woke = False
        for s in t.succs:
            st = self.tasks[s]
            st.indegree -= 1
            if st.indegree == 0:
                self._ready.append(s)
                woke = True
        if t.group is not None:
            owner = self.tasks[t.group]
            owner.pending_members -= 1
            if owner.pending_members == 0 and owner.body_done:
                woke |= self._complete(owner)
        return woke

    def execute(self, n_workers, recorder=None):
        """Run every task exactly once on n worker threads."""
        self._seal()
        if not self.tasks:
            return
        threads = [
            threading.Thread(
                target=self.work_loop, args=(w, recorder), daemon=True
            )
            for w in range(n_workers)
        ]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        self.raise_failure()
        if self._completed != len(self.tasks):
            raise TaskError("executor quiesced before all tasks completed")

    def raise_failure(self):
        if self._failure is not None:
            t, exc = self._failure
            raise TaskError(f"task {t.meta} failed: {exc!r}") from exc

    @property
    def completed_count(self):
        return self._completed


def replay_schedule(tasks, n_workers):
    """Lay a recorded schedule on virtual per-worker clocks.

    Keeps each worker's claim order and every dependence edge; task start
    is the later of its worker becoming free and its predecessors (and,
    for group owners, their members) finishing.  Returns the makespan in
    nanoseconds.  The laid-out times are stored on the tasks (vstart,
    vfinish, vcomplete).
    """
    clocks = [0] * n_workers
    by_tid = {}
    makespan = 0
    for t in sorted((t for t in tasks if t.seq >= 0), key=lambda t: t.seq):
        ready = 0
        for p in t.preds:
            ready = max(ready, by_tid[p].vcomplete)
        if t.group is not None:
            # members start after the owner body ran
            ready = max(ready, by_tid[t.group].vfinish)
        t.vstart = max(clocks[t.worker], ready)
        t.vfinish = t.vstart + t.busy_ns
        t.vcomplete = t.vfinish
        clocks[t.worker] = t.vfinish
        by_tid[t.tid] = t
        if t.group is not None:
            owner = by_tid[t.group]
            owner.vcomplete = max(owner.vcomplete, t.vfinish)
        makespan = max(makespan, t.vfinish)
    return makespan
