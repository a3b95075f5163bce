"""Reasoning backends: scripted decision rules and an HTTP chat client."""

from surroflow.agents.client import AgentMessage, LLMError, ReasonerConfig, llm_complete
from surroflow.agents.instructions import parse_instruction, parse_instruction_report
from surroflow.agents.loop import AgentStep, agent_loop
from surroflow.agents.scripted import scripted_reason

__all__ = [
    "AgentMessage",
    "ReasonerConfig",
    "LLMError",
    "llm_complete",
    "parse_instruction",
    "parse_instruction_report",
    "scripted_reason",
    "agent_loop",
    "AgentStep",
]
