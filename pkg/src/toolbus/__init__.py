"""toolbus: protocol-agnostic tool management for LLM function calling.

Native functions, OpenAPI services, and MCP servers register into one
:class:`~toolbus.registry.ToolRegistry`, execute through a dual-mode
concurrent batch executor, and convert to and from provider wire formats.
"""

from .compat import ApiFormat, convert_tool_calls, recover_assistant_message, recover_tool_message
from .core import (
    InvalidName,
    InvalidSchema,
    Param,
    ParameterSchema,
    Tool,
    ToolCall,
    ToolCallResult,
    ToolError,
    ValidationError,
    make_tool,
    run_tool,
    tool_from_declared_signature,
    tool_from_function,
    update_namespace,
    validate_arguments,
)
from .executor import ExecutionMode, Executor, ExecutorConfig, RetryPolicy, execute_batch
from .registry import DuplicateName, ToolRegistry

__version__ = "0.1.0"

__all__ = [
    "ApiFormat",
    "convert_tool_calls",
    "recover_assistant_message",
    "recover_tool_message",
    "InvalidName",
    "InvalidSchema",
    "Param",
    "ParameterSchema",
    "Tool",
    "ToolCall",
    "ToolCallResult",
    "ToolError",
    "ValidationError",
    "make_tool",
    "run_tool",
    "tool_from_declared_signature",
    "tool_from_function",
    "update_namespace",
    "validate_arguments",
    "ExecutionMode",
    "Executor",
    "ExecutorConfig",
    "RetryPolicy",
    "execute_batch",
    "DuplicateName",
    "ToolRegistry",
    "__version__",
]
