"""Dual-mode batch execution.

Shared mode keeps every call in-process on a thread pool: no serialization,
ideal for I/O-bound tools.  Isolated mode gives each call a supervised worker
process: a crashing handler takes down only its own call, and the worker is
reclaimed.  Tools that cannot cross the process boundary fall back to shared
mode automatically.
"""

import time

from toolbus import ExecutionMode, Executor, ExecutorConfig, ToolCall
from toolbus.core import run_tool
from toolbus.hub import calculator_tools
from toolbus.testkit import make_latency_tool, make_worker_killer_tool

tools = {t.name: t for t in calculator_tools()}
tools["latency"] = make_latency_tool(0.05)
tools["killer"] = make_worker_killer_tool()
executor = Executor()

# --- concurrency: 100 fixed-latency calls vs. a sequential loop -------------
calls = [ToolCall(id=f"c{i}", name="latency", arguments={"i": i}) for i in range(100)]

started = time.perf_counter()
for call in calls[:20]:
    run_tool(tools["latency"], call.arguments)
sequential_per_call = (time.perf_counter() - started) / 20

started = time.perf_counter()
results = executor.execute_batch(tools.get, calls, ExecutorConfig(pool_size=32))
batch_wall = time.perf_counter() - started
print(f"sequential estimate for 100 calls: {100 * sequential_per_call:6.2f}s")
print(f"shared-mode batch of 100:          {batch_wall:6.2f}s "
      f"({100 * sequential_per_call / batch_wall:.1f}x speedup)")
assert all(r.is_success for r in results.values())

# --- fault isolation: three crashing calls inside a batch of ten ------------
config = ExecutorConfig(mode=ExecutionMode.ISOLATED, pool_size=2)
batch = [
    ToolCall(id=f"f{i}", name="killer" if i % 3 == 0 else "add",
             arguments={} if i % 3 == 0 else {"a": i, "b": 1})
    for i in range(10)
]
results = executor.execute_batch(tools.get, batch, config)
for call in batch:
    outcome = results[call.id]
    label = outcome.value if outcome.is_success else f"{outcome.error.kind}: {outcome.error.message}"
    print(f"{call.id} ({call.name:>6}) -> {label}")
crashed = [r for r in results.values() if not r.is_success]
print(f"{len(crashed)} crashed calls, {len(results) - len(crashed)} unaffected successes")

executor.shutdown()
