"""Validation soundness: our validator agrees with an independent reference.

The reference side is the jsonschema library's Draft202012Validator run over
the identical schema/instance pair; agreement is checked over a seeded corpus
of well over 1000 pairs drawn from the supported keyword grammar.
"""

from __future__ import annotations

import random

import jsonschema
import pytest

from toolbus.core import ParameterSchema, _first_error

PRIMITIVES = ["string", "number", "integer", "boolean", "null"]


def gen_subschema(rng: random.Random, depth: int = 0) -> dict:
    choices = ["type", "enum", "empty"]
    if depth < 2:
        choices += ["object", "array", "anyOf", "oneOf", "allOf", "type_list"]
    kind = rng.choice(choices)
    if kind == "type":
        return {"type": rng.choice(PRIMITIVES)}
    if kind == "type_list":
        return {"type": rng.sample(PRIMITIVES + ["array", "object"], k=rng.randint(1, 3))}
    if kind == "enum":
        return {"enum": [gen_value(rng, 0) for _ in range(rng.randint(1, 4))]}
    if kind == "empty":
        return {}
    if kind == "object":
        names = [f"p{i}" for i in range(rng.randint(0, 3))]
        props = {n: gen_subschema(rng, depth + 1) for n in names}
        required = [n for n in names if rng.random() < 0.5]
        out: dict = {"type": "object", "properties": props}
        if required:
            out["required"] = required
        if rng.random() < 0.5:
            out["additionalProperties"] = rng.random() < 0.5
        return out
    if kind == "array":
        return {"type": "array", "items": gen_subschema(rng, depth + 1)}
    combinator = {"anyOf": "anyOf", "oneOf": "oneOf", "allOf": "allOf"}[kind]
    return {combinator: [gen_subschema(rng, depth + 1) for _ in range(rng.randint(1, 3))]}


def gen_value(rng: random.Random, depth: int = 0):
    choices = ["null", "bool", "int", "float", "str"]
    if depth < 2:
        choices += ["list", "dict"]
    kind = rng.choice(choices)
    if kind == "null":
        return None
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "int":
        return rng.randint(-5, 5)
    if kind == "float":
        return rng.choice([0.0, 1.0, 2.5, -3.25, 7.0])
    if kind == "str":
        return rng.choice(["", "a", "bc", "2", "true"])
    if kind == "list":
        return [gen_value(rng, depth + 1) for _ in range(rng.randint(0, 3))]
    return {f"k{i}": gen_value(rng, depth + 1) for i in range(rng.randint(0, 3))}


def gen_matching_value(rng: random.Random, schema: dict, depth: int = 0):
    """Best-effort instance aimed at satisfying the schema (keeps the accept
    side of the corpus from starving)."""
    if "enum" in schema:
        return rng.choice(schema["enum"])
    declared = schema.get("type")
    if isinstance(declared, list):
        declared = rng.choice(declared)
    if declared == "object" or (declared is None and "properties" in schema):
        props = schema.get("properties", {})
        out = {}
        for name, sub in props.items():
            if name in schema.get("required", ()) or rng.random() < 0.5:
                out[name] = gen_matching_value(rng, sub, depth + 1)
        return out
    if declared == "array":
        return [gen_matching_value(rng, schema.get("items", {}), depth + 1) for _ in range(rng.randint(0, 3))]
    sample = {
        "string": "s",
        "number": rng.choice([1, 2.5]),
        "integer": rng.choice([0, 3, -2]),
        "boolean": True,
        "null": None,
        None: gen_value(rng, depth),
    }
    for key in ("anyOf", "oneOf", "allOf"):
        if key in schema:
            return gen_matching_value(rng, rng.choice(schema[key]), depth + 1)
    return sample[declared]


def agree(schema: dict, instance) -> tuple[bool, bool]:
    ours = _first_error(schema, instance, "") is None
    reference = jsonschema.Draft202012Validator(schema).is_valid(instance)
    return ours, reference


class TestSoundnessCorpus:
    def test_validator_matches_reference_over_corpus(self):
        rng = random.Random(20240811)
        checked = 0
        for _ in range(700):
            schema = gen_subschema(rng)
            for instance in (gen_value(rng), gen_matching_value(rng, schema)):
                ours, reference = agree(schema, instance)
                assert ours == reference, f"disagreement on schema={schema!r} instance={instance!r}"
                checked += 1
        assert checked >= 1000

    def test_root_schemas_through_parameter_schema(self):
        rng = random.Random(99)
        for _ in range(200):
            names = [f"p{i}" for i in range(rng.randint(0, 3))]
            root = {
                "type": "object",
                "properties": {n: gen_subschema(rng, 1) for n in names},
                "required": [n for n in names if rng.random() < 0.4],
                "additionalProperties": rng.random() < 0.5,
            }
            schema = ParameterSchema.from_dict(root)
            for instance in (gen_value(rng), gen_matching_value(rng, schema.root)):
                if not isinstance(instance, dict):
                    continue
                ours = schema.first_error(instance) is None
                reference = jsonschema.Draft202012Validator(schema.root).is_valid(instance)
                assert ours == reference


class TestKnownEdgeCases:
    @pytest.mark.parametrize(
        "schema,instance,valid",
        [
            ({"type": "integer"}, 2.0, True),
            ({"type": "integer"}, 2.5, False),
            ({"type": "integer"}, True, False),
            ({"type": "number"}, True, False),
            ({"type": "number"}, 3, True),
            ({"enum": [1, "a"]}, 1.0, True),
            ({"enum": [1]}, True, False),
            ({"enum": [True]}, 1, False),
            ({"enum": [[1]]}, [True], False),
            ({"enum": [[1]]}, [1.0], True),
            ({"required": ["a"], "properties": {"a": {}}}, 5, True),
            ({"properties": {"a": {"type": "number"}}, "required": ["a"]}, [1], True),
            ({"oneOf": [{"type": "integer"}, {"type": "number"}]}, 2, False),
            ({"oneOf": [{"type": "integer"}, {"type": "string"}]}, 2, True),
            ({"anyOf": [{"type": "integer"}, {"type": "number"}]}, 2.5, True),
            ({"allOf": [{"type": "number"}, {"enum": [2, 3]}]}, 2, True),
            ({"allOf": [{"type": "number"}, {"enum": [2, 3]}]}, 4, False),
            ({"type": "object", "additionalProperties": {"type": "number"}}, {"x": 1}, True),
            ({"type": "object", "additionalProperties": {"type": "number"}}, {"x": "s"}, False),
        ],
    )
    def test_case_matches_reference(self, schema, instance, valid):
        ours, reference = agree(schema, instance)
        assert reference == valid, "fixture expectation is wrong"
        assert ours == valid
