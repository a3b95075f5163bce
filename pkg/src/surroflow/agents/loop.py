"""Minimal tool-use loop: a policy proposes tool calls until it finishes."""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from surroflow.errors import ConfigurationError, PipelineError


@dataclass
class AgentStep:
    index: int
    tool: str
    args: Dict[str, Any]
    observation: Any


def agent_loop(policy: Callable[[Dict], Dict], tools: Dict[str, Callable],
               state: Optional[Dict] = None, max_steps: int = 8,
               on_step: Optional[Callable[[AgentStep], None]] = None) -> Any:
    """Run policy(state) until it returns {"finish": value}.

    The policy otherwise returns {"tool": name, "args": {...}}; the tool result
    is appended to state["steps"] so the next decision can see it. on_step fires
    exactly once per tool invocation, which is where callers hang their audit.
    """
    state = state if state is not None else {}
    steps: List[AgentStep] = state.setdefault("steps", [])
    for index in range(max_steps):
        decision = policy(state)
        if "finish" in decision:
            return decision["finish"]
        name = decision.get("tool")
        if name not in tools:
            raise ConfigurationError(f"policy asked for unknown tool {name!r}; "
                                     f"available: {sorted(tools)}")
        args = decision.get("args", {})
        observation = tools[name](**args)
        step = AgentStep(index, name, args, observation)
        steps.append(step)
        if on_step is not None:
            on_step(step)
    raise PipelineError(f"agent loop did not finish within {max_steps} steps")
