"""Feasibility probe: parameter count plus measured activation footprint.

The estimate models AdamW training at float32: 16 bytes per parameter
(weights, gradients, two optimizer moments) plus twice the forward
activation bytes per sample (forward tensors and their backward buffers),
scaled linearly by batch size. Activations are measured by running one
batch-1 forward pass with hooks that sum module output sizes.
"""

from dataclasses import dataclass
from typing import Dict, Optional

import torch

from surroflow.zoo import ModelCard, ModelShape, build_model

PARAM_BYTES_PER = 16
ACTIVATION_FACTOR = 2


@dataclass(frozen=True)
class MemoryEstimate:
    model: str
    param_count: int
    activation_bytes: int
    total_bytes: int
    batch_size: int
    feasible: bool
    reason: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            "model": self.model,
            "param_count": self.param_count,
            "activation_bytes": self.activation_bytes,
            "total_bytes": self.total_bytes,
            "batch_size": self.batch_size,
            "feasible": self.feasible,
            "reason": self.reason,
        }


def estimate_memory(card: ModelCard, hp: Dict, shape: ModelShape,
                    batch_size: int, budget_bytes: int) -> MemoryEstimate:
    """Probe one configuration against a byte budget. Never raises: a model
    that cannot even be constructed comes back infeasible with the reason."""
    name = card if isinstance(card, str) else card.name
    try:
        torch.manual_seed(0)
        model = build_model(card, hp, shape)
    except Exception as exc:
        return MemoryEstimate(name, 0, 0, 0, batch_size, False,
                              reason=f"construction failed: {exc}")

    param_count = sum(p.numel() for p in model.parameters())
    seen = set()
    kept = []  # hold tensors so freed-storage ids cannot alias in `seen`
    sizes = []

    def hook(_module, _inputs, output):
        for out in (output if isinstance(output, (tuple, list)) else (output,)):
            if torch.is_tensor(out) and id(out) not in seen:
                seen.add(id(out))
                kept.append(out)
                sizes.append(out.numel() * out.element_size())

    handles = [m.register_forward_hook(hook) for m in model.modules()]
    try:
        with torch.no_grad():
            model(torch.zeros(1, 1, *shape.spatial))
    except Exception as exc:
        return MemoryEstimate(name, param_count, 0, 0, batch_size, False,
                              reason=f"probe forward failed: {exc}")
    finally:
        for h in handles:
            h.remove()

    activation_bytes = int(sum(sizes))
    total = PARAM_BYTES_PER * param_count \
        + ACTIVATION_FACTOR * batch_size * activation_bytes
    feasible = total <= budget_bytes
    reason = None if feasible else \
        f"needs {total} bytes, budget {budget_bytes}"
    return MemoryEstimate(name, param_count, activation_bytes, total,
                          batch_size, feasible, reason)
