"""Natural-language instruction parsing into task targets.

The grammar is deliberately small: a quality phrase either names a strict
threshold ("higher than 0.95", "at least 0.9", "> 0.8", "above 0.7") or
asks for maximization ("as high as possible", "maximize"). Mentioning a
quantity name scopes the phrase to it; otherwise it applies to every
requested quantity. Unrecognized text falls back to the defaults and the
caller is told, so it can leave an audit warning.
"""

import re
from typing import Optional, Sequence, Tuple

from surroflow.core import QOIS, TargetSpec, TaskTargets, default_targets

_THRESHOLD_RE = re.compile(
    r"(?:higher\s+than|greater\s+than|above|at\s+least|exceed(?:s|ing)?|>=?)\s*"
    r"(0?\.\d+|1(?:\.0*)?|0)", re.IGNORECASE)
_MAXIMIZE_RE = re.compile(
    r"as\s+(?:high|good|accurate)\s+as\s+possible|maximi[sz]e|best\s+possible",
    re.IGNORECASE)


def parse_instruction_report(text: Optional[str],
                             qois: Sequence[str] = QOIS
                             ) -> Tuple[TaskTargets, bool, str]:
    """Parse and also report whether anything matched.

    Returns (targets, recognized, note). ``recognized`` False means the
    defaults were used; the note says why.
    """
    if not text or not text.strip():
        return default_targets(qois), False, "no instruction given; defaults apply"

    scoped = [q for q in qois if re.search(q, text, re.IGNORECASE)]
    applies_to = scoped or list(qois)

    threshold = _THRESHOLD_RE.search(text)
    maximize = _MAXIMIZE_RE.search(text)
    if threshold:
        spec = TargetSpec("threshold", float(threshold.group(1)))
        note = (f"threshold {spec.threshold:g} (strict) parsed from "
                f"{threshold.group(0)!r} for {', '.join(applies_to)}")
    elif maximize:
        spec = TargetSpec("maximize")
        note = f"maximize parsed from {maximize.group(0)!r} for {', '.join(applies_to)}"
    else:
        return (default_targets(qois), False,
                f"instruction {text!r} not recognized; defaults apply")

    base = default_targets(qois).per_qoi
    per_qoi = {q: (spec if q in applies_to else base[q]) for q in qois}
    return TaskTargets(per_qoi, source="instruction", instruction=text), True, note


def parse_instruction(text: Optional[str], qois: Sequence[str] = QOIS) -> TaskTargets:
    """Total on arbitrary text: anything unrecognized maps to the defaults."""
    return parse_instruction_report(text, qois)[0]
