"""Corpora, raw-video files, synthetic generation, evaluation, metrics.

Raw videos travel in the zero-dependency RVT1 container:

    bytes 0..7   magic b"RVT1\\x00\\x00\\x00\\x00"
    bytes 8..23  four u32 little-endian dims T, H, W, C
    then         T*H*W*C bytes of 8-bit intensities, index order (t, y, x, c)

Intensities are mapped to [0, 1] on load (value / 255). Manifests are text
files with one `path<TAB>label` per line, `#` starting a comment; paths are
resolved relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .numeric import RngStream, derive_seed

RVT_MAGIC = b"RVT1\x00\x00\x00\x00"


@dataclass
class CorpusItem:
    video_id: str
    video: np.ndarray  # (T, H, W, C) float64 in [0, 1]
    label: int


@dataclass
class LabeledCorpus:
    items: list[CorpusItem]
    n_classes: int
    manifest: str = ""

    def __len__(self) -> int:
        return len(self.items)

    def labels(self) -> list[int]:
        return [it.label for it in self.items]

    def of_class(self, label: int) -> list[CorpusItem]:
        return [it for it in self.items if it.label == label]


@dataclass
class EvalResult:
    protocol: str
    predictions: list[dict]  # {"video_id", "true", "predicted"}
    accuracy: float
    mean_ap: float
    confusion: np.ndarray  # (C, C), rows = true label, cols = predicted
    seed: int
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "accuracy": self.accuracy,
            "mean_average_precision": self.mean_ap,
            "confusion": self.confusion.tolist(),
            "predictions": self.predictions,
            "seed": self.seed,
            "config": self.config,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), sort_keys=True, indent=2))

    def write_confusion_csv(self, path) -> None:
        c = self.confusion.shape[0]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\pred"] + [str(j + 1) for j in range(c)])
            for i in range(c):
                writer.writerow([str(i + 1)] + [int(v) for v in self.confusion[i]])


# ---------------------------------------------------------------------------
# RVT1 video files


def write_video(path, video: np.ndarray) -> None:
    """Quantize to 8 bits and write one RVT1 file."""
    v = np.asarray(video, dtype=np.float64)
    if v.ndim == 3:
        v = v[..., np.newaxis]
    if v.ndim != 4:
        raise DataError(f"video must be (T, H, W, C), got shape {v.shape}")
    if v.min() < 0.0 or v.max() > 1.0:
        raise DataError("pixels must lie in [0, 1] before quantization")
    t, h, w, c = v.shape
    if c not in (1, 3):
        raise DataError(f"channel count must be 1 or 3, got {c}")
    body = np.round(v * 255.0).astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(RVT_MAGIC)
        fh.write(struct.pack("<IIII", t, h, w, c))
        fh.write(body)


def read_video(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"video file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 24:
        raise DataError(f"{path}: truncated RVT1 header")
    if blob[:8] != RVT_MAGIC:
        raise DataError(f"{path}: bad magic {blob[:8]!r}, expected {RVT_MAGIC!r}")
    t, h, w, c = struct.unpack_from("<IIII", blob, 8)
    if min(t, h, w, c) < 1 or c not in (1, 3):
        raise DataError(f"{path}: malformed dims T={t} H={h} W={w} C={c}")
    need = t * h * w * c
    body = blob[24:]
    if len(body) != need:
        raise DataError(f"{path}: payload is {len(body)} bytes, expected {need}")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(t, h, w, c)
    return pixels.astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# Manifests


def load_corpus(manifest_path) -> LabeledCorpus:
    """Read a manifest and decode every referenced video."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DataError(f"manifest not found: {manifest_path}")
    base = manifest_path.parent
    entries: list[tuple[str, int]] = []
    for ln, line in enumerate(manifest_path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(
                f"{manifest_path}:{ln}: expected 'path<TAB>label', got {line!r}"
            )
        try:
            label = int(parts[1])
        except ValueError as exc:
            raise DataError(f"{manifest_path}:{ln}: label {parts[1]!r} is not an integer") from exc
        entries.append((parts[0], label))
    if not entries:
        raise DataError(f"manifest {manifest_path} lists no videos")
    labels = sorted({lab for _, lab in entries})
    n_classes = labels[-1]
    if labels[0] < 1 or labels != list(range(1, n_classes + 1)):
        raise DataError(
            f"labels must cover 1..C contiguously, got {labels} in {manifest_path}"
        )
    items = []
    for rel, label in entries:
        p = (base / rel).resolve()
        items.append(CorpusItem(video_id=Path(rel).stem, video=read_video(p), label=label))
    return LabeledCorpus(items=items, n_classes=n_classes, manifest=str(manifest_path))


def write_manifest(path, entries) -> None:
    """Write `(relative_path, label)` pairs as a manifest file."""
    lines = ["# corpus manifest: path<TAB>label"]
    lines += [f"{rel}\t{label}" for rel, label in entries]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Synthetic corpora


def generate_synthetic(
    n_classes: int,
    per_class: int,
    frames: int,
    height: int,
    width: int,
    seed: int,
    channels: int = 1,
    noise: float = 0.02,
) -> LabeledCorpus:
    """Desk-scale dynamic-texture stand-in corpus.

    Each class is a translating sinusoidal grating with class-specific
    orientation, spatial frequency, and speed; each video adds a random
    phase, small parameter jitter, and seeded pixel noise. Deterministic
    under (seed, shape) and clamped to [0, 1].
    """
    if n_classes < 1 or per_class < 1:
        raise DataError("class count and videos per class must be >= 1")
    root = RngStream(derive_seed(seed, 3))
    ys, xs = np.meshgrid(
        np.arange(height) / max(height, 1),
        np.arange(width) / max(width, 1),
        indexing="ij",
    )
    items = []
    for label in range(1, n_classes + 1):
        theta = np.pi * (label - 1) / n_classes
        freq = 2.0 + 1.0 * (label - 1)
        speed = 0.08 + 0.05 * (label - 1)
        for v in range(per_class):
            rng = root.child(label * 1000 + v)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            th = theta + rng.normal(scale=0.02)
            fq = freq * (1.0 + rng.normal(scale=0.02))
            sp = speed * (1.0 + rng.normal(scale=0.05))
            carrier = fq * (xs * np.cos(th) + ys * np.sin(th))
            t_idx = np.arange(frames)[:, None, None]
            clip = 0.5 + 0.35 * np.sin(2.0 * np.pi * (carrier[None] - sp * t_idx) + phase)
            clip = clip + rng.normal(scale=noise, size=clip.shape)
            clip = np.clip(clip, 0.0, 1.0)
            video = np.repeat(clip[..., None], channels, axis=3)
            items.append(
                CorpusItem(video_id=f"synth_c{label}_v{v}", video=video, label=label)
            )
    return LabeledCorpus(items=items, n_classes=n_classes, manifest="<synthetic>")


# ---------------------------------------------------------------------------
# Metrics


def accuracy_from_confusion(confusion: np.ndarray) -> float:
    total = confusion.sum()
    return float(np.trace(confusion) / total) if total else 0.0


def mean_average_precision(scores: np.ndarray, truth) -> float:
    """Mean over classes of ranked-retrieval average precision.

    `scores[q, c]` ranks query q for class c (higher = more confident);
    AP for class c averages precision at each rank where a true class-c
    query appears. Classes without positives are excluded with a warning.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=int)
    if scores.ndim != 2 or scores.shape[0] != truth.shape[0]:
        raise DataError(
            f"scores {scores.shape} and truth {truth.shape} are inconsistent"
        )
    aps = []
    for c in range(scores.shape[1]):
        label = c + 1
        positives = truth == label
        if not positives.any():
            warnings.warn(f"class {label} has no positive queries; excluded from mAP")
            continue
        # stable ranking: ties broken by query index for determinism
        order = np.lexsort((np.arange(len(truth)), -scores[:, c]))
        hits = positives[order]
        ranks = np.flatnonzero(hits) + 1
        precisions = np.cumsum(hits)[hits.astype(bool)] / ranks
        aps.append(float(np.mean(precisions)))
    if not aps:
        raise DataError("no class has positive queries; mAP undefined")
    return float(np.mean(aps))


# ---------------------------------------------------------------------------
# Evaluation protocols


def _aggregate(tag, outcomes, corpus, seed, config_echo) -> EvalResult:
    c = corpus.n_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    predictions = []
    scores = np.zeros((len(outcomes), c))
    truth = np.zeros(len(outcomes), dtype=int)
    for q, (item, report) in enumerate(outcomes):
        confusion[item.label - 1, report.predicted - 1] += 1
        predictions.append(
            {"video_id": item.video_id, "true": item.label, "predicted": report.predicted}
        )
        for lab, w in zip(report.labels, report.weights):
            scores[q, lab - 1] = w
        truth[q] = item.label
    return EvalResult(
        protocol=tag,
        predictions=predictions,
        accuracy=accuracy_from_confusion(confusion),
        mean_ap=mean_average_precision(scores, truth),
        confusion=confusion,
        seed=seed,
        config=config_echo or {},
    )


def loo_evaluate(corpus: LabeledCorpus, config, threads: int | None = None) -> EvalResult:
    """Leave-one-out: retrain on the remainder, classify each held-out video.

    Dictionary, standardization, pre-training, and fine-tuning are all
    fold-local, so the held-out item never influences its own models.
    """
    from . import pipeline  # deferred: pipeline builds on this module

    if len(corpus) < 2:
        raise DataError("leave-one-out needs at least two corpus items")
    if corpus.n_classes < 2:
        raise DataError("evaluation needs at least two classes")
    for i in range(len(corpus)):
        rest = [it.label for j, it in enumerate(corpus.items) if j != i]
        missing = set(range(1, corpus.n_classes + 1)) - set(rest)
        if missing:
            raise DataError(
                f"fold {i} (holding out {corpus.items[i].video_id!r}) leaves "
                f"class(es) {sorted(missing)} without training videos"
            )
    outcomes = pipeline.run_loo_folds(corpus, config, threads=threads)
    return _aggregate("loo", outcomes, corpus, config.seed, config.to_dict())


def split_evaluate(
    train: LabeledCorpus, test: LabeledCorpus, config, threads: int | None = None
) -> EvalResult:
    """Fixed train/test split: train once, classify every test video."""
    from . import pipeline

    if train.n_classes < 2:
        raise DataError("evaluation needs at least two classes")
    if test.n_classes > train.n_classes:
        raise DataError(
            f"test corpus has label {test.n_classes} beyond the "
            f"{train.n_classes} trained classes"
        )
    outcomes = pipeline.run_split(train, test, config)
    # test corpora may cover fewer classes; confusion is sized by the train set
    test_sized = LabeledCorpus(items=test.items, n_classes=train.n_classes)
    return _aggregate("split", outcomes, test_sized, config.seed, config.to_dict())


def export_embedding_csv(path, corpus: LabeledCorpus, config) -> None:
    """One row per video: label plus its sparse code over the corpus dictionary."""
    from . import pipeline

    rows = pipeline.corpus_codes(corpus, config)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        n = len(rows[0][2]) if rows else 0
        writer.writerow(["video_id", "label"] + [f"coef_{i}" for i in range(n)])
        for video_id, label, code in rows:
            writer.writerow([video_id, label] + [repr(float(c)) for c in code])
