"""HTTP chat-completion client with archiving and scripted fallback."""

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Dict, List, Optional

import requests

from surroflow.agents.scripted import scripted_reason
from surroflow.errors import SurroflowError

ENDPOINT_ENV = "SURROFLOW_LLM_ENDPOINT"
MODEL_ENV = "SURROFLOW_LLM_MODEL"
TOKEN_ENV = "SURROFLOW_LLM_TOKEN"


class LLMError(SurroflowError):
    """Transport, protocol, or response-shape failure of the chat backend."""


@dataclass(frozen=True)
class AgentMessage:
    role: str
    content: str

    def to_dict(self) -> Dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ReasonerConfig:
    backend: str = "scripted"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    temperature: float = 0.0
    timeout_s: float = 30.0
    max_retries: int = 2
    fallback_scripted: bool = True

    def resolved(self) -> "ReasonerConfig":
        """Fill endpoint/model from the environment when flags left them unset."""
        endpoint = self.endpoint or os.environ.get(ENDPOINT_ENV)
        model = self.model or os.environ.get(MODEL_ENV)
        return ReasonerConfig(self.backend, endpoint, model, self.temperature,
                              self.timeout_s, self.max_retries, self.fallback_scripted)


def _archive(archive_dir: Optional[str], tag: str, record: Dict) -> None:
    if archive_dir is None:
        return
    os.makedirs(archive_dir, exist_ok=True)
    n = sum(1 for f in os.listdir(archive_dir) if f.startswith(tag + "-"))
    with open(os.path.join(archive_dir, f"{tag}-{n:03d}.json"), "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def llm_complete(cfg: ReasonerConfig, messages: List[AgentMessage],
                 archive_dir: Optional[str] = None, tag: str = "call") -> str:
    """One chat completion; archives request and response under the run dir."""
    if not cfg.endpoint:
        raise LLMError(f"no endpoint configured (flag or {ENDPOINT_ENV})")
    body = {"model": cfg.model or "default",
            "messages": [m.to_dict() for m in messages],
            "temperature": cfg.temperature}
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(TOKEN_ENV)
    if token:
        headers["Authorization"] = f"Bearer {token}"

    last_error = None
    for attempt in range(cfg.max_retries + 1):
        try:
            resp = requests.post(cfg.endpoint, json=body, headers=headers,
                                 timeout=cfg.timeout_s)
            resp.raise_for_status()
            data = resp.json()
            content = data["choices"][0]["message"]["content"]
            _archive(archive_dir, tag,
                     {"request": body, "response": data, "attempt": attempt})
            return content
        except (requests.RequestException, KeyError, IndexError,
                TypeError, ValueError) as exc:
            last_error = exc
    _archive(archive_dir, tag, {"request": body, "error": str(last_error)})
    raise LLMError(f"chat completion failed after {cfg.max_retries + 1} attempts: "
                   f"{last_error}")


def _render_prompt(stage: str, context: Dict) -> List[AgentMessage]:
    base = resources.files("surroflow.agents") / "prompts"
    system = (base / "system.txt").read_text()
    template = (base / f"{stage}.txt").read_text()
    user = template.format(context=json.dumps(context, indent=2, sort_keys=True,
                                              default=str))
    return [AgentMessage("system", system), AgentMessage("user", user)]


def _extract_json(text: str) -> Dict:
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise LLMError(f"no JSON object in reply: {text[:200]!r}")
    return json.loads(text[start:end + 1])


def _validate_doc(stage: str, doc: Dict, context: Dict) -> Dict:
    if not isinstance(doc.get("rationale"), str):
        raise LLMError("decision document lacks a rationale string")
    if stage in ("ranking", "switch_ranking"):
        ranking = doc.get("ranking")
        known = set(context["cards"]) - set(context.get("exclude", ()))
        if not isinstance(ranking, list) or not ranking:
            raise LLMError("decision document lacks a non-empty ranking")
        if not set(ranking) <= set(context["cards"]):
            raise LLMError(f"ranking names unknown models: {ranking}")
        # Anything feasible the model forgot goes to the back, deterministically.
        doc["ranking"] = [n for n in ranking if n in known] + \
            sorted(known - set(ranking))
    return doc


Reasoner = Callable[[str, Dict], Dict]


def make_reasoner(cfg: ReasonerConfig, archive_dir: Optional[str] = None) -> Reasoner:
    """Stage-decision callable; the scripted rules serve as backend and net."""
    if cfg.backend == "scripted":
        return scripted_reason
    cfg = cfg.resolved()

    def reason(stage: str, context: Dict) -> Dict:
        try:
            content = llm_complete(cfg, _render_prompt(stage, context),
                                   archive_dir, tag=stage)
            return _validate_doc(stage, _extract_json(content), context)
        except (LLMError, json.JSONDecodeError) as exc:
            if not cfg.fallback_scripted:
                raise
            doc = scripted_reason(stage, context)
            doc["fallback"] = f"scripted fallback after backend error: {exc}"
            return doc

    return reason
