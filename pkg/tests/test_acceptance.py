"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Tolerances are pinned in the assertions below.
"""

from __future__ import annotations

import ast
import json
import os
import random
import subprocess
import sys
import time
from pathlib import Path

import jsonschema
import pytest

from toolbus.compat import ApiFormat, convert_tool_calls, format_tool_definition, recover_assistant_message
from toolbus.core import ToolCall, make_tool, run_tool, tool_from_declared_signature
from toolbus.executor import ExecutionMode, Executor, ExecutorConfig
from toolbus.hub import calculator_tools
from toolbus.mcp import McpTransportConfig, connect, list_tools, mcp_tool_from_descriptor
from toolbus.openapi import HttpClientConfig, extract_operations, operation_to_tool
from toolbus.registry import ToolRegistry, UnknownPrefix
from toolbus.testkit import make_latency_tool, make_worker_killer_tool

REPO = Path(__file__).resolve().parent.parent
DATA = Path(__file__).parent / "data"


def passed(number: int, detail: str) -> None:
    print(f"\n[criterion {number:2}] PASS - {detail}")


class TestCriterion1BenchSuccessRates:
    def test_default_bench_reports_full_success(self, tmp_path):
        from toolbus.cli import main

        started = time.perf_counter()
        rates = {}
        for kind in ("native", "openapi", "mcp"):
            report_path = tmp_path / f"{kind}.json"
            assert main(["bench", kind, "--report", str(report_path)]) == 0
            report = json.loads(report_path.read_text())
            assert report["calls"] == 100 and report["iterations"] == 10
            rates[kind] = report["success_rate"]
        elapsed = time.perf_counter() - started
        assert rates == {"native": 1.0, "openapi": 1.0, "mcp": 1.0}
        assert elapsed < 120, f"bench suite took {elapsed:.1f}s, budget is 120s"
        passed(1, f"success_rate 1.0 for native/openapi/mcp defaults in {elapsed:.1f}s")


class TestCriterion2SharedModeSuperiority:
    def test_shared_beats_isolated_for_native_tools(self):
        from toolbus.cli import run_bench

        shared = run_bench("native", 100, 10, ExecutorConfig(mode=ExecutionMode.SHARED))
        isolated = run_bench("native", 100, 10, ExecutorConfig(mode=ExecutionMode.ISOLATED))
        ratio = shared["calls_per_s"]["median"] / isolated["calls_per_s"]["median"]
        print(f"\n[criterion  2] measured shared/isolated median ratio: {ratio:.1f}x "
              f"on {os.cpu_count()} logical CPUs")
        if (os.cpu_count() or 1) < 4:
            pytest.skip("criterion is stated for machines with >= 4 logical CPUs")
        assert ratio >= 1.5
        passed(2, f"shared-mode median is {ratio:.1f}x isolated-mode median (threshold 1.5x)")


class TestCriterion3ConcurrencySpeedup:
    def test_batch_within_a_third_of_sequential_baseline(self):
        delay = 0.05
        tool = make_latency_tool(delay)
        lookup = {"latency": tool}.get
        suite_start = time.perf_counter()

        baseline_start = time.perf_counter()
        for i in range(100):
            assert run_tool(tool, {"i": i}).is_success
        baseline = time.perf_counter() - baseline_start

        executor = Executor()
        try:
            calls = [ToolCall(id=f"c{i}", name="latency", arguments={"i": i}) for i in range(100)]
            batch_start = time.perf_counter()
            results = executor.execute_batch(
                lookup, calls, config=ExecutorConfig(mode=ExecutionMode.SHARED, pool_size=32)
            )
            batch = time.perf_counter() - batch_start
        finally:
            executor.shutdown()

        assert all(r.is_success for r in results.values())
        assert batch <= baseline / 3, f"batch {batch:.2f}s vs sequential {baseline:.2f}s"
        assert time.perf_counter() - suite_start < 30
        passed(3, f"100x{delay * 1000:.0f}ms calls: batch {batch:.2f}s vs sequential "
                  f"{baseline:.2f}s ({baseline / batch:.1f}x, threshold 3x)")


class TestCriterion4FaultIsolation:
    def test_three_killers_in_twenty_deterministic_over_fifty_runs(self):
        tools = {t.name: t for t in calculator_tools()}
        tools["killer"] = make_worker_killer_tool()
        config = ExecutorConfig(mode=ExecutionMode.ISOLATED)
        executor = Executor()
        try:
            rng = random.Random(1234)
            for repetition in range(50):
                killer_ids = set(rng.sample(range(20), 3))
                calls = [
                    ToolCall(
                        id=f"r{repetition}-{i}",
                        name="killer" if i in killer_ids else "add",
                        arguments={} if i in killer_ids else {"a": i, "b": 1},
                    )
                    for i in range(20)
                ]
                results = executor.execute_batch(tools.get, calls, config=config)
                errors = [r for r in results.values() if not r.is_success]
                assert len(errors) == 3, f"repetition {repetition}: {len(errors)} errors"
                assert len(results) - len(errors) == 17
                for result in errors:
                    assert result.error.kind == "execution"
        finally:
            executor.shutdown()
        passed(4, "50 repetitions of 20-call batches: exactly 3 errors, 17 successes each")


class TestCriterion5FallbackSoundness:
    def test_non_transferable_batch_fully_succeeds_in_isolated_mode(self):
        def make_closure_tool(name: str, value: int):
            secret = {"value": value}

            def handler(**kwargs):
                return secret["value"]

            return make_tool(name, "closure-bound", {"type": "object", "additionalProperties": True}, handler)

        tools = {f"t{i}": make_closure_tool(f"t{i}", i) for i in range(5)}
        executor = Executor()
        try:
            calls = [ToolCall(id=f"c{i}", name=f"t{i % 5}", arguments={}) for i in range(25)]
            results = executor.execute_batch(
                tools.get, calls, config=ExecutorConfig(mode=ExecutionMode.ISOLATED, fallback_on_nontransferable=True)
            )
        finally:
            executor.shutdown()
        assert all(r.is_success for r in results.values())
        assert [results[f"c{i}"].value for i in range(25)] == [i % 5 for i in range(25)]
        passed(5, "25 non-transferable calls in isolated mode: 100% success via fallback")


class TestCriterion6MultiProtocolCaseStudy:
    def test_example_program_runs_and_is_small(self):
        example = REPO / "demos" / "multi_protocol_calculator.py"
        statements = len(ast.parse(example.read_text()).body)
        assert statements <= 20, f"example has {statements} top-level statements"
        completed = subprocess.run(
            [sys.executable, str(example)], capture_output=True, text=True, timeout=120
        )
        assert completed.returncode == 0, completed.stderr
        assert "every protocol computed: 5" in completed.stdout
        passed(6, f"example ran all three protocols to the same result in {statements} statements")


class TestCriterion7WireFormatRoundTrip:
    def make_calls(self, rng: random.Random) -> list[ToolCall]:
        def value(depth=0):
            kind = rng.randint(0, 6 if depth < 2 else 4)
            if kind == 0:
                return None
            if kind == 1:
                return rng.random() < 0.5
            if kind == 2:
                return rng.randint(-10**6, 10**6)
            if kind == 3:
                return rng.choice([0.5, -2.25, 3.0, 1e-3, 123.456])
            if kind == 4:
                return "".join(rng.choice("abc é中") for _ in range(rng.randint(0, 5)))
            if kind == 5:
                return [value(depth + 1) for _ in range(rng.randint(0, 3))]
            return {f"k{i}": value(depth + 1) for i in range(rng.randint(0, 3))}

        count = rng.randint(0, 5)
        return [
            ToolCall(
                id=f"id-{rng.randint(0, 10**9)}-{i}",
                name=rng.choice(["add", "ns.tool", "a-b_c.d"]),
                arguments={f"a{i}": value() for i in range(rng.randint(0, 4))},
            )
            for i in range(count)
        ]

    def test_thousand_round_trips_both_formats(self):
        rng = random.Random(20250809)
        lists = 0
        for _ in range(500):
            calls = self.make_calls(rng)
            for api_format in (ApiFormat.OPENAI_CHAT_COMPLETION, ApiFormat.OPENAI_RESPONSE):
                assert convert_tool_calls(recover_assistant_message(calls, api_format), api_format) == calls
                lists += 1
        assert lists >= 1000
        passed(7, f"convert∘recover identity held for {lists} generated call lists")

    def test_tool_definition_goldens_byte_exact(self):
        add = next(t for t in calculator_tools() if t.name == "add")
        chat = json.dumps(format_tool_definition(add, ApiFormat.OPENAI_CHAT_COMPLETION), indent=2) + "\n"
        flat = json.dumps(format_tool_definition(add, ApiFormat.OPENAI_RESPONSE), indent=2) + "\n"
        assert chat == (DATA / "tool_definition_chat.json").read_text()
        assert flat == (DATA / "tool_definition_response.json").read_text()
        passed(7, "both tool-definition golden fixtures matched byte-exactly")


class TestCriterion8SchemaValidity:
    def test_representative_tool_population_meta_validates(self, mock_openapi, mock_mcp, schema_meta_checks):
        population = list(calculator_tools())
        population.append(make_latency_tool(0.01))
        population.append(make_worker_killer_tool())
        population.append(
            tool_from_declared_signature("declared", "d", [("x", "integer", True, "an int")], lambda **kw: 0)
        )
        client = HttpClientConfig(base_url=mock_openapi.url)
        population += [operation_to_tool(op, client) for op in extract_operations(mock_openapi.spec)]
        with connect(McpTransportConfig.sse(mock_mcp.sse_url)) as session:
            population += [mcp_tool_from_descriptor(d, session) for d in list_tools(session)]

        for tool in population:
            jsonschema.Draft202012Validator.check_schema(tool.parameters.root)
        assert len(population) >= 18
        assert schema_meta_checks["failures"] == []
        assert schema_meta_checks["count"] >= len(population)
        passed(8, f"{len(population)} tools from every constructor meta-validated; "
                  f"{schema_meta_checks['count']} schemas checked run-wide, zero failures")


class TestCriterion9McpTransportEquivalence:
    VECTOR = [
        ("add", {"a": 2, "b": 3}),
        ("add", {"a": -1.5, "b": 0.25}),
        ("add", {"a": 1e6, "b": 1}),
        ("subtract", {"a": 10, "b": 4}),
        ("subtract", {"a": 0.5, "b": 0.25}),
        ("multiply", {"a": 6, "b": 7}),
        ("multiply", {"a": -2, "b": 0.5}),
        ("add", {"a": 1}),
        ("subtract", {"a": "x", "b": 1}),
        ("multiply", {}),
    ] * 2

    def test_twenty_case_vector_identical_across_transports(self, mock_mcp):
        assert len(self.VECTOR) == 20
        descriptor_lists = {}
        outcomes = {}
        for kind, config in {
            "stdio": mock_mcp.stdio_config,
            "sse": McpTransportConfig.sse(mock_mcp.sse_url),
            "streamable_http": McpTransportConfig.streamable_http(mock_mcp.http_url),
        }.items():
            with connect(config) as session:
                descriptors = list_tools(session)
                descriptor_lists[kind] = [(d.name, d.description, d.input_schema) for d in descriptors]
                tools = {d.name: mcp_tool_from_descriptor(d, session) for d in descriptors}
                outcomes[kind] = [run_tool(tools[name], args).to_dict() for name, args in self.VECTOR]
        assert descriptor_lists["stdio"] == descriptor_lists["sse"] == descriptor_lists["streamable_http"]
        assert outcomes["stdio"] == outcomes["sse"] == outcomes["streamable_http"]
        passed(9, "identical descriptors and 20-case call results over stdio/sse/streamable_http")


class TestCriterion10RegistryAlgebra:
    def named(self, name: str):
        return make_tool(name, "", {"type": "object", "additionalProperties": True}, _return_zero)

    def test_thousand_randomized_algebra_cases(self):
        rng = random.Random(97)
        cases = 0
        for _ in range(250):
            # merge/spinoff duality with disjoint name sets
            a = ToolRegistry()
            for i in range(rng.randint(0, 4)):
                a.register(self.named(f"a{i}"))
            b = ToolRegistry()
            prefix = rng.choice(["p", "q", "longer-prefix"])
            for i in range(rng.randint(1, 4)):
                b.register(self.named(f"b{i}"), namespace=prefix)
            b_names = set(b.names())
            a_before = len(a)
            a.merge(b)
            spun = a.spinoff(prefix)
            assert set(spun.names()) == b_names
            assert len(a) == a_before
            cases += 1

            # spinoff conserves total count
            c = ToolRegistry()
            for i in range(rng.randint(1, 5)):
                c.register(self.named(f"t{i}"), namespace="keep" if rng.random() < 0.5 else "cut")
            total = len(c)
            try:
                cut = c.spinoff("cut")
            except UnknownPrefix:
                cut = ToolRegistry()
            assert len(c) + len(cut) == total
            cases += 1

            # reduce_namespace conserves count and round-trips
            d = ToolRegistry()
            names = [f"n{i}" for i in range(rng.randint(1, 5))]
            for name in names:
                d.register(self.named(name), namespace="ns")
            before = sorted(d.names())
            d.reduce_namespace("ns")
            assert sorted(d.names()) == sorted(names)
            tools = [d.get_tool(n) for n in d.names()]
            d2 = ToolRegistry()
            d2.register_toolset(tools, with_namespace="ns")
            assert sorted(d2.names()) == before
            cases += 1

            # key-name coherence after a random mutation burst
            e = ToolRegistry()
            for _ in range(rng.randint(1, 8)):
                try:
                    op = rng.randint(0, 3)
                    if op == 0:
                        e.register(self.named(rng.choice(["x", "y", "z"])))
                    elif op == 1:
                        e.register(self.named(rng.choice(["x", "y"])), namespace="m")
                    elif op == 2:
                        e.spinoff("m")
                    else:
                        e.reduce_namespace("m")
                except Exception:
                    pass
            assert all(key == tool.name for key, tool in e._tools.items())
            cases += 1
        assert cases >= 1000
        passed(10, f"{cases} randomized merge/spinoff/reduce cases held all invariants")


def _return_zero(**kwargs):
    return 0
