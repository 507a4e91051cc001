"""Declarative pre/post-processing applied around model execution.

Preprocess steps: scale(factor), offset(value), reshape(shape). Postprocess
steps: identity, argmax, topk(k), with at most one of argmax/topk. Steps are
plain JSON data so they embed unchanged in bundle manifests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from inferforge.errors import ProcessingSpecError

_PRE_OPS = {"scale", "offset", "reshape"}
_POST_OPS = {"argmax", "topk", "identity"}


def _normalize_step(step, allowed: set[str]) -> dict:
    if isinstance(step, str):
        step = {"op": step}
    if not isinstance(step, dict) or "op" not in step:
        raise ProcessingSpecError(f"processing step must be an op mapping, got {step!r}")
    op = step["op"]
    if op not in allowed:
        raise ProcessingSpecError(f"unknown processing op {op!r} (allowed: {sorted(allowed)})")
    if op == "scale":
        if not isinstance(step.get("factor"), (int, float)):
            raise ProcessingSpecError("scale step needs a numeric 'factor'")
        return {"op": "scale", "factor": float(step["factor"])}
    if op == "offset":
        if not isinstance(step.get("value"), (int, float)):
            raise ProcessingSpecError("offset step needs a numeric 'value'")
        return {"op": "offset", "value": float(step["value"])}
    if op == "reshape":
        shape = step.get("shape")
        if (not isinstance(shape, (list, tuple)) or not shape
                or any(not isinstance(d, int) or d < 1 for d in shape)):
            raise ProcessingSpecError("reshape step needs a list of positive integers 'shape'")
        return {"op": "reshape", "shape": [int(d) for d in shape]}
    if op == "topk":
        k = step.get("k")
        if not isinstance(k, int) or k < 1:
            raise ProcessingSpecError("topk step needs a positive integer 'k'")
        return {"op": "topk", "k": k}
    return {"op": op}


@dataclass
class ProcessingSpec:
    preprocess: list[dict] = field(default_factory=list)
    postprocess: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.preprocess = [_normalize_step(s, _PRE_OPS) for s in self.preprocess]
        self.postprocess = [_normalize_step(s, _POST_OPS) for s in self.postprocess]
        reducers = [s for s in self.postprocess if s["op"] in ("argmax", "topk")]
        if len(reducers) > 1:
            raise ProcessingSpecError("at most one of argmax/topk is allowed in postprocess")

    @classmethod
    def from_obj(cls, obj) -> "ProcessingSpec":
        if obj is None:
            return cls()
        if not isinstance(obj, dict):
            raise ProcessingSpecError(f"processing spec must be a mapping, got {obj!r}")
        unknown = set(obj) - {"preprocess", "postprocess"}
        if unknown:
            raise ProcessingSpecError(f"unknown processing keys {sorted(unknown)}")
        return cls(preprocess=list(obj.get("preprocess", [])),
                   postprocess=list(obj.get("postprocess", [])))

    def to_json(self) -> dict:
        return {"preprocess": self.preprocess, "postprocess": self.postprocess}

    def reshape_target(self) -> tuple[int, ...] | None:
        for step in self.preprocess:
            if step["op"] == "reshape":
                return tuple(step["shape"])
        return None

    def reducer(self) -> dict | None:
        for step in self.postprocess:
            if step["op"] in ("argmax", "topk"):
                return step
        return None

    def validate_for_model(self, input_shape, output_dim: int) -> None:
        """Check the steps against a concrete model signature."""
        target = self.reshape_target()
        if target is not None:
            want = int(np.prod(input_shape))
            got = int(np.prod(target))
            if got != want:
                raise ProcessingSpecError(
                    f"reshape target size {got} does not match model input size {want}")
        red = self.reducer()
        if red is not None and red["op"] == "topk" and red["k"] > output_dim:
            raise ProcessingSpecError(
                f"topk k={red['k']} exceeds model output dimension {output_dim}")

    def apply_preprocess(self, sample: np.ndarray) -> np.ndarray:
        x = sample
        for step in self.preprocess:
            op = step["op"]
            if op == "scale":
                x = x * np.float32(step["factor"])
            elif op == "offset":
                x = x + np.float32(step["value"])
            else:
                x = x.reshape(step["shape"])
        return x

    def apply_postprocess(self, outputs: np.ndarray) -> dict:
        """Reduce a [batch, output_dim] result; returns response payload fields."""
        red = self.reducer()
        if red is None:
            return {"outputs": outputs}
        if red["op"] == "argmax":
            return {"class_ids": [int(i) for i in outputs.argmax(axis=1)]}
        k = red["k"]
        ids = []
        scores = []
        for row in outputs:
            order = np.argsort(-row, kind="stable")[:k]
            ids.extend(int(i) for i in order)
            scores.extend(float(row[i]) for i in order)
        return {"class_ids": ids, "scores": scores}
