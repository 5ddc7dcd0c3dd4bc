"""Weighted-voting classification from per-class reconstruction errors.

Every frame of the query sequence votes for every class; the vote weight
is exp(-e) where e is the Euclidean error of reconstructing the frame with
that class's model. The class with the highest accumulated weight wins;
ties break toward the lowest class label.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError
from .hddm import ClassModel, reconstruct
from .scsp import ScspSequence

TIE_BREAK = "lowest-label"


@dataclass
class ClassificationReport:
    labels: list[int]  # ascending class labels
    weights: np.ndarray  # accumulated vote weight per class
    frame_errors: np.ndarray  # (n_classes, n_frames) reconstruction errors
    predicted: int
    tie_break: str = TIE_BREAK
    video_id: str = ""

    def weight_of(self, label: int) -> float:
        return float(self.weights[self.labels.index(label)])

    def to_json_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "predicted": self.predicted,
            "tie_break": self.tie_break,
            "classes": [
                {
                    "label": lab,
                    "weight": float(w),
                    "frame_errors": [float(e) for e in errs],
                }
                for lab, w, errs in zip(self.labels, self.weights, self.frame_errors)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)

    def to_table(self) -> str:
        """Aligned-column text table of accumulated weights and mean errors."""
        rows = [("class", "weight", "mean_error")]
        for lab, w, errs in zip(self.labels, self.weights, self.frame_errors):
            rows.append((str(lab), f"{w:.6f}", f"{float(np.mean(errs)):.6f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = ["  ".join(c.ljust(widths[i]) for i, c in enumerate(row)) for row in rows]
        lines.append(f"predicted: {self.predicted}  (tie-break: {self.tie_break})")
        return "\n".join(lines)


def vote_weight(frame: np.ndarray, model: ClassModel) -> float:
    """exp(-||frame - reconstruction||_2); 1 at perfect reconstruction."""
    _, err = reconstruct(frame, model)
    return math.exp(-err)


def classify(query: ScspSequence, models) -> ClassificationReport:
    """Accumulate per-frame vote weights over all frames and take the argmax."""
    models = sorted(models, key=lambda m: m.label)
    if not models:
        raise DataError("classification needs at least one class model")
    labels = [m.label for m in models]
    if len(set(labels)) != len(labels):
        raise DataError(f"duplicate class labels: {labels}")
    frames = np.asarray(query.frames, dtype=np.float64)
    for m in models:
        if m.params.input_dim != frames.shape[1]:
            raise DimensionError(
                f"query frames have length {frames.shape[1]} but class {m.label} "
                f"expects {m.params.input_dim}"
            )
    errors = np.empty((len(models), frames.shape[0]))
    for ci, m in enumerate(models):
        xt, _ = reconstruct(frames, m)
        errors[ci] = np.linalg.norm(frames - xt, axis=1)
    weights = np.exp(-errors).sum(axis=1)
    best = int(np.argmax(weights))  # argmax returns the first (lowest) on ties
    return ClassificationReport(
        labels=labels,
        weights=weights,
        frame_errors=errors,
        predicted=labels[best],
        video_id=query.video_id,
    )
