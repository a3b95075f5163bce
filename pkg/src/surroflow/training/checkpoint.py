"""Weight serialization: raw little-endian float32 archive + JSON manifest."""

import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import torch

from surroflow.errors import StructuralValidationError

WEIGHTS_FORMAT = "surroflow-weights/v1"


def save_weights(state: Dict[str, torch.Tensor], prefix: str,
                 meta: Optional[Dict] = None) -> None:
    """Write ``<prefix>.bin`` (concatenated float32 tensors) + ``<prefix>.json``."""
    tensors = []
    offset = 0
    with open(prefix + ".bin", "wb") as fh:
        for name, tensor in state.items():
            arr = tensor.detach().cpu().numpy().astype("<f4")
            raw = arr.tobytes()
            tensors.append({"name": name, "shape": list(arr.shape),
                            "dtype": "<f4", "offset": offset, "nbytes": len(raw)})
            fh.write(raw)
            offset += len(raw)
    manifest = {"format": WEIGHTS_FORMAT, "tensors": tensors, "meta": meta or {}}
    with open(prefix + ".json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_weights(prefix: str) -> Dict[str, np.ndarray]:
    manifest_path = prefix + ".json"
    if not os.path.isfile(manifest_path):
        raise StructuralValidationError(f"missing weights manifest {manifest_path!r}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != WEIGHTS_FORMAT:
        raise StructuralValidationError(
            f"unsupported weights format {manifest.get('format')!r}")
    with open(prefix + ".bin", "rb") as fh:
        blob = fh.read()
    out = {}
    for spec in manifest["tensors"]:
        raw = blob[spec["offset"]:spec["offset"] + spec["nbytes"]]
        if len(raw) != spec["nbytes"]:
            raise StructuralValidationError(
                f"weights archive truncated at tensor {spec['name']!r}")
        out[spec["name"]] = np.frombuffer(raw, dtype="<f4").reshape(spec["shape"]).copy()
    return out


def load_into(model: torch.nn.Module, prefix: str) -> None:
    arrays = load_weights(prefix)
    state = model.state_dict()
    if set(state) != set(arrays):
        missing = sorted(set(state) ^ set(arrays))
        raise StructuralValidationError(
            f"weights do not match the model; mismatched names: {missing[:5]}")
    model.load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})


@dataclass(frozen=True)
class CheckpointRef:
    qoi: str
    round_index: int
    kind: str
    prefix: str
    score: float
    epoch: int

    def to_dict(self) -> Dict:
        return {"qoi": self.qoi, "round_index": self.round_index, "kind": self.kind,
                "prefix": self.prefix, "score": self.score, "epoch": self.epoch}

    @staticmethod
    def from_dict(d: Dict) -> "CheckpointRef":
        return CheckpointRef(d["qoi"], d["round_index"], d["kind"], d["prefix"],
                             d["score"], d["epoch"])


class CheckpointStore:
    """Round-scoped checkpoint files under ``checkpoints/<qoi>/<round>-<kind>``.

    Refs carry prefixes RELATIVE to the run directory so two runs with the
    same seed produce identical context/report documents wherever they live.
    """

    SUBDIR = "checkpoints"

    def __init__(self, run_dir: str):
        self.run_dir = run_dir
        self.refs: List[CheckpointRef] = []

    def prefix_for(self, qoi: str, round_index: int, kind: str) -> str:
        return os.path.join(self.SUBDIR, qoi, f"{round_index}-{kind}")

    def resolve(self, ref: CheckpointRef) -> str:
        return os.path.join(self.run_dir, ref.prefix)

    def save(self, state: Dict[str, torch.Tensor], qoi: str, round_index: int,
             kind: str, score: float, epoch: int,
             meta: Optional[Dict] = None) -> CheckpointRef:
        prefix = self.prefix_for(qoi, round_index, kind)
        path = os.path.join(self.run_dir, prefix)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        info = {"qoi": qoi, "round_index": round_index, "kind": kind,
                "score": score, "epoch": epoch}
        info.update(meta or {})
        save_weights(state, path, meta=info)
        ref = CheckpointRef(qoi, round_index, kind, prefix, score, epoch)
        self.refs = [r for r in self.refs if r.prefix != prefix] + [ref]
        return ref

    def exists(self, ref: CheckpointRef) -> bool:
        path = self.resolve(ref)
        return os.path.isfile(path + ".bin") and os.path.isfile(path + ".json")
