"""Interface for dumping language-model activations into an activation store.

Only the job description and its validation live here; running real models
is not part of this package.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

POSITIONS = ("final_prompt", "answer_pos", "answer_neg")
PRECISIONS = ("float32", "float16", "bfloat16")


@dataclass
class ExtractionJob:
    model: str
    dataset: Path
    out: Path
    positions: list[str] = field(default_factory=lambda: list(POSITIONS))
    layers: list[int] | None = None  # 0-indexed; None means every layer
    batch_size: int = 8
    precision: str = "float32"  # compute precision; slabs are always float32

    def validate(self) -> None:
        unknown = [p for p in self.positions if p not in POSITIONS]
        if unknown:
            raise ValueError(f"unknown positions: {unknown}")
        if not self.positions:
            raise ValueError("at least one position is required")
        if ("answer_pos" in self.positions) != ("answer_neg" in self.positions):
            raise ValueError("answer_pos and answer_neg must be requested together")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {PRECISIONS}")
        if self.layers is not None and any(l < 0 for l in self.layers):
            raise ValueError("layers are 0-indexed and non-negative")

    def to_json(self) -> str:
        d = asdict(self)
        d["dataset"] = str(self.dataset)
        d["out"] = str(self.out)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExtractionJob":
        d = json.loads(text)
        job = cls(**{**d, "dataset": Path(d["dataset"]), "out": Path(d["out"])})
        job.validate()
        return job


def extract(job: ExtractionJob) -> Path:
    """Runs the model over the dataset and writes a store directory."""
    job.validate()
    raise NotImplementedError("model extraction is provided by a separate component")


def lm_output_auroc(job: ExtractionJob) -> dict[str, float]:
    """Per-slice AUROC of log p(choice 1) - log p(choice 0)."""
    job.validate()
    raise NotImplementedError("model extraction is provided by a separate component")
