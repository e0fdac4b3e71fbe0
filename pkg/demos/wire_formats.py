"""The full provider message loop, without a provider.

A registry renders tool definitions for the request, a simulated assistant
message carries tool calls back, the batch executes, and results re-enter the
conversation as tool messages.  Both supported dialects are shown.
"""

import json

from toolbus import ApiFormat, ToolRegistry, convert_tool_calls, recover_assistant_message, recover_tool_message
from toolbus.hub import calculator_tools

registry = ToolRegistry()
registry.register_toolset(calculator_tools(), with_namespace="calc")

# 1. definitions, as they would appear in the request payload
definitions = registry.get_tools_json(ApiFormat.OPENAI_CHAT_COMPLETION)
print(f"{len(definitions)} tool definitions; first:")
print(json.dumps(definitions[0], indent=2))

# 2. an assistant message asking for two calls (as a provider would return)
assistant = {
    "role": "assistant",
    "content": None,
    "tool_calls": [
        {"id": "call_a", "type": "function",
         "function": {"name": "calc.add", "arguments": '{"a": 19, "b": 23}'}},
        {"id": "call_b", "type": "function",
         "function": {"name": "calc.divide", "arguments": '{"a": 1, "b": 0}'}},
    ],
}
calls = convert_tool_calls(assistant, ApiFormat.OPENAI_CHAT_COMPLETION)
print("\nnormalized calls:", [(c.id, c.name) for c in calls])

# 3. execute and convert back into tool messages
results = registry.execute_tool_calls(calls)
for call in calls:
    print(json.dumps(recover_tool_message(results[call.id], ApiFormat.OPENAI_CHAT_COMPLETION)))

# 4. the reverse direction round-trips exactly
rebuilt = recover_assistant_message(calls, ApiFormat.OPENAI_CHAT_COMPLETION)
assert convert_tool_calls(rebuilt, ApiFormat.OPENAI_CHAT_COMPLETION) == calls
print("\nassistant-message round-trip: exact")

# 5. the response-API dialect uses flat items instead
print(json.dumps(recover_tool_message(results["call_a"], ApiFormat.OPENAI_RESPONSE)))
registry.close()
