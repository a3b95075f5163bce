"""Scripted reasoner, tool loop, instruction parsing, and the chat backend."""

import http.server
import json
import threading

import pytest

from surroflow.agents.client import (
    AgentMessage,
    LLMError,
    ReasonerConfig,
    _extract_json,
    _validate_doc,
    llm_complete,
    make_reasoner,
)
from surroflow.agents.instructions import parse_instruction, parse_instruction_report
from surroflow.agents.loop import agent_loop
from surroflow.agents.scripted import SMOOTH_ORDER, SPARSE_ORDER, scripted_reason
from surroflow.core import DEFAULT_TARGET_THRESHOLD, resolve_targets
from surroflow.errors import ConfigurationError, PipelineError
from surroflow.zoo import REGISTRY, get_card

ALL_CARDS = list(REGISTRY)


# ------------------------------------------------------- scripted reasoner

def test_sparse_ranking_prefers_presence_losses():
    doc = scripted_reason("ranking", {"qoi": "saturation", "sparse": True,
                                      "cards": ALL_CARDS})
    assert tuple(doc["ranking"]) == SPARSE_ORDER
    # the top picks are exactly the families with the auxiliary mask head
    leaders = [n for n in doc["ranking"] if get_card(n).supports_aux_bce]
    assert doc["ranking"][:len(leaders)] == leaders
    assert "sparse" in doc["rationale"]


def test_smooth_ranking_prefers_residual_then_spectral():
    doc = scripted_reason("ranking", {"qoi": "pressure", "sparse": False,
                                      "cards": ALL_CARDS})
    assert tuple(doc["ranking"]) == SMOOTH_ORDER
    assert "smooth" in doc["rationale"]


def test_ranking_excludes_and_keeps_unlisted_cards():
    cards = ["FNO", "UNet", "HomebrewNet", "ResUNet"]
    doc = scripted_reason("ranking", {"sparse": False, "cards": cards,
                                      "exclude": ["UNet"]})
    # preference order first, unknown leftovers appended, excluded gone
    assert doc["ranking"] == ["ResUNet", "FNO", "HomebrewNet"]
    assert "excluded: ['UNet']" in doc["rationale"]


def test_switch_ranking_reports_prior_quality():
    ctx = {"sparse": False, "cards": ALL_CARDS,
           "performance": {"UNet": 0.81234, "FNO": "failed"}}
    doc = scripted_reason("switch_ranking", ctx)
    assert "; prior round quality: FNO=failed, UNet=0.8123" in doc["rationale"]
    assert tuple(doc["ranking"]) == SMOOTH_ORDER


def test_switch_ranking_without_history_matches_ranking():
    ctx = {"sparse": True, "cards": ALL_CARDS}
    assert scripted_reason("switch_ranking", dict(ctx)) == \
        scripted_reason("ranking", dict(ctx))


def test_preprocessing_decision():
    doc = scripted_reason("preprocessing",
                          {"pressure_stats": {"min": 1.013e7, "max": 3.2e7}})
    assert doc["decision"] == {"normalize_pressure": True,
                               "saturation_passthrough": True}
    assert "[101.3, 320.0] bar" in doc["rationale"]


def test_diagnosis_narration_lists_signals_and_action():
    ctx = {"diagnosis": {"state": "unstable",
                         "signals": {"grad_explosion": True, "nan_loss": 3}},
           "action": {"kind": "stability_restart", "reason": "norms blew up"}}
    doc = scripted_reason("diagnosis_narration", ctx)
    assert doc["rationale"] == ("diagnosed unstable (grad_explosion=True, "
                                "nan_loss=3); action: stability_restart "
                                "because norms blew up")


def test_diagnosis_narration_without_telemetry():
    doc = scripted_reason("diagnosis_narration",
                          {"diagnosis": {"state": "converging", "signals": {}}})
    assert doc["rationale"] == "diagnosed converging (no adverse telemetry)"


def test_unknown_stage_raises():
    with pytest.raises(ConfigurationError, match="no stage 'training'"):
        scripted_reason("training", {})


# --------------------------------------------------------------- tool loop

def test_agent_loop_runs_tools_then_finishes():
    calls = []

    def policy(state):
        if len(state["steps"]) < 2:
            return {"tool": "add", "args": {"a": len(state["steps"]), "b": 10}}
        return {"finish": [s.observation for s in state["steps"]]}

    result = agent_loop(policy, {"add": lambda a, b: a + b}, on_step=calls.append)
    assert result == [10, 11]
    assert [(s.index, s.tool, s.args) for s in calls] == \
        [(0, "add", {"a": 0, "b": 10}), (1, "add", {"a": 1, "b": 10})]


def test_agent_loop_unknown_tool():
    with pytest.raises(ConfigurationError, match="unknown tool 'frobnicate'"):
        agent_loop(lambda s: {"tool": "frobnicate", "args": {}}, {"add": sum})


def test_agent_loop_step_budget():
    with pytest.raises(PipelineError, match="within 3 steps"):
        agent_loop(lambda s: {"tool": "noop", "args": {}},
                   {"noop": lambda: None}, max_steps=3)


# ----------------------------------------------------- instruction parsing

@pytest.mark.parametrize("text,value", [
    ("R2 higher than 0.95", 0.95),
    ("accuracy of at least 0.9 please", 0.9),
    ("r2 > 0.8", 0.8),
    ("must be >= 0.85", 0.85),
    ("above 0.7", 0.7),
    ("should exceed 0.99", 0.99),
    ("greater than 0.5", 0.5),
])
def test_threshold_phrasings(text, value):
    targets, recognized, note = parse_instruction_report(text)
    assert recognized
    for q in ("pressure", "saturation"):
        assert targets.per_qoi[q].mode == "threshold"
        assert targets.per_qoi[q].threshold == value
    assert f"{value:g}" in note


@pytest.mark.parametrize("text", [
    "make it as high as possible",
    "as accurate as possible",
    "maximize the accuracy",
    "maximise r2",
    "best possible fit",
])
def test_maximize_phrasings(text):
    targets, recognized, _ = parse_instruction_report(text)
    assert recognized
    assert all(t.mode == "maximize" for t in targets.per_qoi.values())


def test_instruction_scopes_to_named_qoi():
    targets, recognized, note = parse_instruction_report(
        "the saturation field must be above 0.9")
    assert recognized
    assert targets.per_qoi["saturation"] == \
        targets.per_qoi["saturation"].__class__("threshold", 0.9)
    assert targets.per_qoi["pressure"].threshold == DEFAULT_TARGET_THRESHOLD
    assert "saturation" in note and "pressure" not in note


def test_unrecognized_instruction_falls_back():
    targets, recognized, note = parse_instruction_report("do something nice")
    assert not recognized
    assert "not recognized" in note
    assert targets.source == "default"
    assert all(t.threshold == DEFAULT_TARGET_THRESHOLD
               for t in targets.per_qoi.values())


def test_empty_instruction_uses_defaults():
    for text in (None, "", "   "):
        targets, recognized, note = parse_instruction_report(text)
        assert not recognized
        assert "no instruction" in note
        assert targets.source == "default"


def test_resolve_targets_precedence():
    parsed = parse_instruction("pressure above 0.8")
    assert resolve_targets("saturation above 0.6", parsed) is parsed
    via_text = resolve_targets("saturation above 0.6")
    assert via_text.per_qoi["saturation"].threshold == 0.6
    assert resolve_targets().per_qoi["pressure"].threshold == \
        DEFAULT_TARGET_THRESHOLD
    assert via_text.source == "instruction"
    assert via_text.instruction == "saturation above 0.6"


# ------------------------------------------------------------ chat backend

class _ChatHandler(http.server.BaseHTTPRequestHandler):
    """Pops canned replies off the server's queue; 500s when empty."""

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        self.server.requests.append(json.loads(self.rfile.read(length)))
        if not self.server.replies:
            self.send_error(500, "exhausted")
            return
        status, payload = self.server.replies.pop(0)
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def chat_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _ChatHandler)
    server.replies = []
    server.requests = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    thread.join()


def _chat_reply(content):
    return (200, {"choices": [{"message": {"content": content}}]})


def _cfg(server, **kw):
    base = dict(backend="llm", endpoint=f"http://127.0.0.1:{server.server_port}",
                model="tiny", max_retries=1)
    base.update(kw)
    return ReasonerConfig(**base)


def test_llm_complete_round_trip(chat_server, tmp_path):
    chat_server.replies.append(_chat_reply("hello there"))
    cfg = _cfg(chat_server)
    out = llm_complete(cfg, [AgentMessage("user", "hi")],
                       archive_dir=str(tmp_path), tag="probe")
    assert out == "hello there"
    sent = chat_server.requests[0]
    assert sent["model"] == "tiny"
    assert sent["messages"] == [{"role": "user", "content": "hi"}]
    archived = json.loads((tmp_path / "probe-000.json").read_text())
    assert archived["request"] == sent
    assert archived["attempt"] == 0


def test_llm_complete_retries_then_succeeds(chat_server):
    chat_server.replies.append((500, {}))
    chat_server.replies.append(_chat_reply("second try"))
    assert llm_complete(_cfg(chat_server), [AgentMessage("user", "x")]) == \
        "second try"
    assert len(chat_server.requests) == 2


def test_llm_complete_exhausts_retries(chat_server, tmp_path):
    cfg = _cfg(chat_server, max_retries=1)
    with pytest.raises(LLMError, match="failed after 2 attempts"):
        llm_complete(cfg, [AgentMessage("user", "x")], archive_dir=str(tmp_path))
    # the failure is archived too, with the error in place of a response
    record = json.loads((tmp_path / "call-000.json").read_text())
    assert "error" in record and "response" not in record


def test_llm_complete_requires_endpoint():
    with pytest.raises(LLMError, match="no endpoint configured"):
        llm_complete(ReasonerConfig(backend="llm"), [])


def test_llm_reasoner_validates_and_completes_ranking(chat_server, tmp_path):
    reply = json.dumps({"ranking": ["FNO", "UNet"],
                        "rationale": "spectral mixing first"})
    chat_server.replies.append(_chat_reply("Sure!\n" + reply + "\nDone."))
    reason = make_reasoner(_cfg(chat_server), archive_dir=str(tmp_path))
    doc = reason("ranking", {"qoi": "pressure", "sparse": False,
                             "cards": ["UNet", "FNO", "ResUNet", "UFNO"],
                             "exclude": ["UFNO"]})
    # forgotten feasible cards go to the back, excluded ones never appear
    assert doc["ranking"] == ["FNO", "UNet", "ResUNet"]
    assert doc["rationale"] == "spectral mixing first"
    assert (tmp_path / "ranking-000.json").exists()


def test_llm_reasoner_falls_back_to_scripted(chat_server):
    chat_server.replies.append(_chat_reply("no json here at all"))
    reason = make_reasoner(_cfg(chat_server, max_retries=0))
    doc = reason("ranking", {"qoi": "pressure", "sparse": False,
                             "cards": ALL_CARDS})
    assert tuple(doc["ranking"]) == SMOOTH_ORDER
    assert doc["fallback"].startswith("scripted fallback after backend error")


def test_llm_reasoner_strict_mode_raises(chat_server):
    chat_server.replies.append(_chat_reply("still no json"))
    reason = make_reasoner(_cfg(chat_server, max_retries=0,
                                fallback_scripted=False))
    with pytest.raises(LLMError):
        reason("ranking", {"sparse": False, "cards": ALL_CARDS})


def test_scripted_backend_ignores_endpoint():
    reason = make_reasoner(ReasonerConfig(backend="scripted",
                                          endpoint="http://nowhere.invalid"))
    assert reason is scripted_reason


def test_extract_json_from_prose():
    assert _extract_json('prefix {"a": [1, 2]} suffix') == {"a": [1, 2]}
    with pytest.raises(LLMError, match="no JSON object"):
        _extract_json("nothing structured")


def test_validate_doc_rejects_malformed_rankings():
    ctx = {"cards": ["UNet", "FNO"]}
    with pytest.raises(LLMError, match="rationale"):
        _validate_doc("ranking", {"ranking": ["UNet"]}, ctx)
    with pytest.raises(LLMError, match="non-empty ranking"):
        _validate_doc("ranking", {"rationale": "r", "ranking": []}, ctx)
    with pytest.raises(LLMError, match="unknown models"):
        _validate_doc("ranking", {"rationale": "r", "ranking": ["GPTNet"]}, ctx)
    # non-ranking stages only need the rationale
    assert _validate_doc("preprocessing", {"rationale": "r"}, {}) == \
        {"rationale": "r"}
