"""Concurrent batch execution in two modes.

Shared mode runs calls on an in-process thread pool (shared memory, no
serialization).  Isolated mode runs each call inside a supervised worker
process: arguments and results cross a pickle boundary, a dying or hanging
worker affects only the call it was running, and the worker is reclaimed and
respawned.  Handlers that cannot cross the boundary are detected up front and,
with fallback enabled, executed in shared mode instead of failing.

A deliberately small custom worker pool is used for isolated mode because the
stdlib process pool tears down every in-flight call when a single worker dies,
which breaks per-call fault isolation.
"""

from __future__ import annotations

import enum
import multiprocessing as mp
import os
import pickle
import queue
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping

from .core import Tool, ToolCall, ToolCallResult, run_tool

__all__ = [
    "ExecutionMode",
    "RetryPolicy",
    "ExecutorConfig",
    "Executor",
    "execute_batch",
    "run_sync_bridge",
    "classify_transferable",
]


class ExecutionMode(enum.Enum):
    SHARED = "shared"
    ISOLATED = "isolated"


@dataclass(frozen=True)
class RetryPolicy:
    """Retries applied only to transport errors; everything else is deterministic."""

    max_retries: int = 2
    base_delay: float = 0.1
    factor: float = 2.0


@dataclass(frozen=True)
class ExecutorConfig:
    mode: ExecutionMode = ExecutionMode.SHARED
    pool_size: int = field(default_factory=lambda: os.cpu_count() or 1)
    per_call_timeout: float = 30.0
    fallback_on_nontransferable: bool = True
    retry: RetryPolicy | None = None

    def __post_init__(self):
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.per_call_timeout <= 0:
            raise ValueError("per_call_timeout must be > 0")


def run_sync_bridge(tool: Tool, arguments: Mapping[str, Any], call_id: str = "") -> ToolCallResult:
    """The single invocation choke point used by pool workers.

    Same contract as :func:`toolbus.core.run_tool`: blocking, total, and safe
    to call from inside an async context (async handlers are driven on a
    separate event-loop thread).
    """
    return run_tool(tool, arguments, call_id=call_id)


def run_call(
    tool: Tool,
    arguments: Mapping[str, Any],
    call_id: str = "",
    retry: RetryPolicy | None = None,
) -> ToolCallResult:
    result = run_sync_bridge(tool, arguments, call_id=call_id)
    if retry is not None:
        attempt = 0
        while (
            result.status == "error"
            and result.error is not None
            and result.error.kind == "transport"
            and attempt < retry.max_retries
        ):
            time.sleep(retry.base_delay * retry.factor**attempt)
            attempt += 1
            result = run_sync_bridge(tool, arguments, call_id=call_id)
    return result


def classify_transferable(tool: Tool) -> bool:
    """True iff the tool's handler can cross the isolated-worker boundary.

    The registration-time capability mark wins when set; otherwise a cheap
    serialization probe decides.  The probe is deterministic, so repeated
    calls agree.
    """
    if tool.transferable is not None:
        return tool.transferable
    try:
        pickle.dumps(tool.handler)
    except Exception:
        return False
    return True


# ---------------------------------------------------------------------------
# Isolated worker pool
# ---------------------------------------------------------------------------


def _worker_main(conn) -> None:
    """Worker process loop: receive (tool, args, id, retry), run, reply."""
    while True:
        try:
            item = conn.recv()
        except (EOFError, OSError):
            return
        if item is None:
            return
        tool, arguments, call_id, retry = item
        result = run_call(tool, arguments, call_id=call_id, retry=retry)
        try:
            conn.send(result)
        except (BrokenPipeError, OSError):
            return


@dataclass
class _WorkItem:
    tool: Tool
    arguments: dict[str, Any]
    call_id: str
    timeout: float
    retry: RetryPolicy | None
    future: Future


class _Worker:
    def __init__(self, ctx):
        self.conn, child_conn = ctx.Pipe()
        self.process = ctx.Process(target=_worker_main, args=(child_conn,), daemon=True)
        self.process.start()
        child_conn.close()

    def kill(self):
        try:
            self.process.kill()
            self.process.join(timeout=2)
        except (OSError, ValueError, AttributeError):
            pass
        try:
            self.conn.close()
        except OSError:
            pass


class _IsolatedWorkerPool:
    """Fixed-size pool of single-task worker processes with per-call reclaim.

    Each supervisor thread owns one worker process and feeds it one call at a
    time.  A timeout or abnormal termination is charged to exactly the call
    the worker was running; the worker is killed (if needed) and respawned.
    """

    def __init__(self, size: int, start_method: str | None = None):
        if start_method is None:
            start_method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
        self._ctx = mp.get_context(start_method)
        self._queue: queue.Queue[_WorkItem | None] = queue.Queue()
        self._closed = False
        self._supervisors = [
            threading.Thread(target=self._supervise, name=f"toolbus-isolated-{i}", daemon=True)
            for i in range(size)
        ]
        for t in self._supervisors:
            t.start()

    def submit(self, item: _WorkItem) -> None:
        if self._closed:
            raise RuntimeError("isolated pool is shut down")
        self._queue.put(item)

    def _send(self, worker: _Worker, item: _WorkItem) -> _Worker | None:
        payload = (item.tool, item.arguments, item.call_id, item.retry)
        try:
            worker.conn.send(payload)
            return worker
        except (BrokenPipeError, OSError, ValueError):
            worker.kill()
        # one respawn attempt; the worker may have died between tasks
        worker = _Worker(self._ctx)
        try:
            worker.conn.send(payload)
            return worker
        except Exception as exc:  # pickling or pipe failure
            worker.kill()
            item.future.set_result(
                ToolCallResult.fail(
                    item.call_id, "execution", f"could not dispatch call to worker: {exc}"
                )
            )
            return None

    def _supervise(self) -> None:
        worker: _Worker | None = None
        while True:
            item = self._queue.get()
            if item is None:
                if worker is not None:
                    worker.kill()
                return
            if worker is None or not worker.process.is_alive():
                if worker is not None:
                    worker.kill()
                worker = _Worker(self._ctx)
            sent = self._send(worker, item)
            if sent is None:
                worker = None
                continue
            worker = sent
            worker, result = self._await_result(worker, item)
            item.future.set_result(result)

    def _await_result(self, worker: _Worker, item: _WorkItem) -> tuple[_Worker | None, ToolCallResult]:
        deadline = time.monotonic() + item.timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                worker.kill()
                return None, ToolCallResult.fail(
                    item.call_id,
                    "timeout",
                    f"call exceeded {item.timeout:g}s; worker reclaimed",
                )
            if worker.conn.poll(min(remaining, 0.05)):
                try:
                    return worker, worker.conn.recv()
                except (EOFError, OSError):
                    return self._reap(worker, item)
            if not worker.process.is_alive():
                # died without replying; drain anything already buffered
                if worker.conn.poll(0):
                    try:
                        return worker, worker.conn.recv()
                    except (EOFError, OSError):
                        pass
                return self._reap(worker, item)

    def _reap(self, worker: _Worker, item: _WorkItem) -> tuple[None, ToolCallResult]:
        worker.process.join(timeout=2)
        code = worker.process.exitcode
        worker.kill()
        return None, ToolCallResult.fail(
            item.call_id, "execution", f"worker terminated abnormally (exit code {code})"
        )

    def shutdown(self) -> None:
        if self._closed:
            return
        self._closed = True
        for _ in self._supervisors:
            self._queue.put(None)
        for t in self._supervisors:
            t.join(timeout=5)


# ---------------------------------------------------------------------------
# Executor
# ---------------------------------------------------------------------------


class ExecutorStats:
    """Coarse counters; thread-safe because batches may run concurrently."""

    def __init__(self):
        self._lock = threading.Lock()
        self.started = 0
        self.succeeded = 0
        self.failed = 0
        self.timed_out = 0

    def bump(self, field: str, amount: int = 1) -> None:
        with self._lock:
            setattr(self, field, getattr(self, field) + amount)

    def __repr__(self) -> str:
        return (f"ExecutorStats(started={self.started}, succeeded={self.succeeded}, "
                f"failed={self.failed}, timed_out={self.timed_out})")


class Executor:
    """Owns the pools; blocking from the caller's view, concurrent inside.

    Pools are created lazily per requested size and reused across batches;
    concurrent batches may share them safely because every batch collects its
    own futures.  Shutdown is idempotent.
    """

    def __init__(self, config: ExecutorConfig | None = None, start_method: str | None = None):
        self._config = config or ExecutorConfig()
        self._start_method = start_method
        self._shared_pools: dict[int, ThreadPoolExecutor] = {}
        self._isolated_pools: dict[int, _IsolatedWorkerPool] = {}
        self._lock = threading.Lock()
        self._closed = False
        self.stats = ExecutorStats()

    @property
    def config(self) -> ExecutorConfig:
        return self._config

    def _shared_pool(self, size: int) -> ThreadPoolExecutor:
        with self._lock:
            if self._closed:
                raise RuntimeError("executor is shut down")
            pool = self._shared_pools.get(size)
            if pool is None:
                pool = ThreadPoolExecutor(max_workers=size, thread_name_prefix="toolbus-shared")
                self._shared_pools[size] = pool
            return pool

    def _isolated_pool(self, size: int) -> _IsolatedWorkerPool:
        with self._lock:
            if self._closed:
                raise RuntimeError("executor is shut down")
            pool = self._isolated_pools.get(size)
            if pool is None:
                pool = _IsolatedWorkerPool(size, start_method=self._start_method)
                self._isolated_pools[size] = pool
            return pool

    def execute_batch(
        self,
        lookup: Callable[[str], Tool | None],
        calls: Iterable[ToolCall],
        config: ExecutorConfig | None = None,
    ) -> dict[str, ToolCallResult]:
        """Run a batch; the result map has exactly one entry per call id.

        Three layers: normalize (resolve names, route per transferability),
        execute (dispatch to the pools), transform (collect per-id results).
        No failure propagates: unknown names, validation failures, handler
        exceptions, timeouts, and worker deaths are all encoded per call.
        """
        cfg = config or self._config
        calls = list(calls)
        seen: set[str] = set()
        for call in calls:
            if call.id in seen:
                raise ValueError(f"duplicate call id {call.id!r} in batch")
            seen.add(call.id)

        results: dict[str, ToolCallResult] = {}
        shared: list[tuple[ToolCall, Tool]] = []
        isolated: list[tuple[ToolCall, Tool]] = []
        for call in calls:
            tool = lookup(call.name)
            if tool is None:
                results[call.id] = ToolCallResult.fail(
                    call.id, "not_found", f"no tool named {call.name!r}"
                )
                continue
            if cfg.mode is ExecutionMode.ISOLATED:
                if classify_transferable(tool):
                    isolated.append((call, tool))
                elif cfg.fallback_on_nontransferable:
                    shared.append((call, tool))
                else:
                    results[call.id] = ToolCallResult.fail(
                        call.id,
                        "execution",
                        f"handler of {tool.name!r} cannot cross the worker boundary "
                        "and fallback is disabled",
                    )
            else:
                shared.append((call, tool))

        pending: list[Future] = []
        if isolated:
            pool = self._isolated_pool(cfg.pool_size)
            for call, tool in isolated:
                future: Future = Future()
                pool.submit(
                    _WorkItem(tool, call.arguments, call.id, cfg.per_call_timeout, cfg.retry, future)
                )
                pending.append(future)
            self.stats.bump("started", len(isolated))
        if shared:
            results.update(self._run_shared(shared, cfg))
        for future in pending:
            result = future.result()
            results[result.id] = result

        for result in results.values():
            if result.status == "success":
                self.stats.bump("succeeded")
            elif result.error is not None and result.error.kind == "timeout":
                self.stats.bump("timed_out")
            else:
                self.stats.bump("failed")
        return results

    def _run_shared(
        self, items: list[tuple[ToolCall, Tool]], cfg: ExecutorConfig
    ) -> dict[str, ToolCallResult]:
        pool = self._shared_pool(cfg.pool_size)
        starts: dict[str, float] = {}

        def traced(call: ToolCall, tool: Tool) -> ToolCallResult:
            starts[call.id] = time.monotonic()
            return run_call(tool, call.arguments, call_id=call.id, retry=cfg.retry)

        futures = {call.id: (pool.submit(traced, call, tool), call) for call, tool in items}
        self.stats.bump("started", len(items))
        results: dict[str, ToolCallResult] = {}
        pending = set(futures)
        while pending:
            progressed = False
            now = time.monotonic()
            for call_id in list(pending):
                future, call = futures[call_id]
                if future.done():
                    results[call_id] = future.result()
                    pending.discard(call_id)
                    progressed = True
                    continue
                started_at = starts.get(call_id)
                if started_at is not None and now - started_at > cfg.per_call_timeout:
                    # no safe preemption in-process: record timeout, abandon the work
                    results[call_id] = ToolCallResult.fail(
                        call_id,
                        "timeout",
                        f"call exceeded {cfg.per_call_timeout:g}s and was abandoned",
                    )
                    pending.discard(call_id)
                    progressed = True
            if pending and not progressed:
                wait([futures[c][0] for c in pending], timeout=0.02)
        return results

    def shutdown(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            shared = list(self._shared_pools.values())
            isolated = list(self._isolated_pools.values())
            self._shared_pools.clear()
            self._isolated_pools.clear()
        for pool in shared:
            pool.shutdown(wait=False)
        for ipool in isolated:
            ipool.shutdown()


_default_executor: Executor | None = None
_default_lock = threading.Lock()


def execute_batch(
    lookup: Callable[[str], Tool | None],
    calls: Iterable[ToolCall],
    config: ExecutorConfig | None = None,
) -> dict[str, ToolCallResult]:
    """Run a batch on the process-wide default executor."""
    global _default_executor
    with _default_lock:
        if _default_executor is None:
            _default_executor = Executor()
        executor = _default_executor
    return executor.execute_batch(lookup, calls, config=config)
