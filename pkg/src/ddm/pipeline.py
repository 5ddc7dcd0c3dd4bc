"""End-to-end wiring: features -> pre-training -> class models -> voting.

Feature handling in "scsp" mode: the whole-video descriptor is scaled to
unit norm, sparse-coded against the segment dictionary, reshaped into a
short sequence, and finally squashed through the logistic function so the
model sees frames in (0, 1) that a sigmoid output layer can actually
reproduce. Sequence files on disk keep the raw (pre-squash) codes; the
squash happens at model-consumption time.

In "raw" mode the videos bypass sparse coding entirely: frames are
average-pooled by `raw_downsample`, flattened, and fed to the model
directly (pixels already live in [0, 1]).

All randomness is derived from the config seed through fixed index paths,
so reruns are bit-identical and leave-one-out folds are independent of
execution order or worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import grbm, hddm, scsp
from .classify import ClassificationReport, classify
from .config import PipelineConfig
from .data import CorpusItem, LabeledCorpus
from .errors import DataError, DimensionError
from .numeric import RngStream, sigmoid

# seed derivation namespaces
_SEED_TRAIN = 100
_SEED_FOLD = 101
_SEED_PRETRAIN = 1
_SEED_SUBSET = 2
_SEED_CLASS = 3


@dataclass
class Provenance:
    """Video ids that influenced each trained artifact (leakage audit)."""

    dictionary: list[str] = field(default_factory=list)
    pretraining: list[str] = field(default_factory=list)
    finetuning: dict[int, list[str]] = field(default_factory=dict)

    def all_ids(self) -> set[str]:
        ids = set(self.dictionary) | set(self.pretraining)
        for used in self.finetuning.values():
            ids |= set(used)
        return ids


@dataclass
class TrainedSet:
    models: list[hddm.ClassModel]
    init_params: hddm.HddmParams
    pretrain: grbm.PretrainResult
    provenance: Provenance


def auto_sequence_len(n_frames: int, cfg: PipelineConfig) -> int:
    if cfg.sequence_len:
        return cfg.sequence_len
    return max(1, n_frames // cfg.block_d)


def video_code(features: np.ndarray, dictionary: scsp.Dictionary, cfg: PipelineConfig) -> np.ndarray:
    """Sparse code of one unit-norm whole-video descriptor."""
    norm = float(np.linalg.norm(features))
    if norm == 0.0:
        raise DataError("video descriptor is the zero vector; cannot sparse-code it")
    if features.shape[0] != dictionary.atoms.shape[0]:
        raise DimensionError(
            f"video descriptor length {features.shape[0]} does not match the "
            f"dictionary's {dictionary.atoms.shape[0]} rows; video and segment "
            "lengths must span the same number of temporal slabs"
        )
    return scsp.sparse_code(features / norm, dictionary, cfg.lasso_lambda)


def scsp_sequence(
    item: CorpusItem, dictionary: scsp.Dictionary, cfg: PipelineConfig,
    features: np.ndarray | None = None,
) -> scsp.ScspSequence:
    """Raw-code sequence for one video (pre-squash, as stored on disk)."""
    if features is None:
        features = scsp.encode_video(item.video, cfg.block_spec()).features
    code = video_code(features, dictionary, cfg)
    length = auto_sequence_len(item.video.shape[0], cfg)
    return scsp.reshape_to_sequence(code, length, video_id=item.video_id)


def raw_sequence(item: CorpusItem, cfg: PipelineConfig) -> scsp.ScspSequence:
    """Downsampled raw frames as a model-ready sequence (one frame per frame)."""
    v = scsp.check_video(item.video)
    f = cfg.raw_downsample
    t, h, w, c = v.shape
    hh, ww = h // f, w // f
    if hh < 1 or ww < 1:
        raise DataError(
            f"raw_downsample {f} leaves no pixels for a {h}x{w} frame"
        )
    pooled = v[:, : hh * f, : ww * f, :].reshape(t, hh, f, ww, f, c).mean(axis=(2, 4))
    return scsp.ScspSequence(
        frames=pooled.reshape(t, hh * ww * c), video_id=item.video_id, n_pad=0
    )


def to_model_space(seq: scsp.ScspSequence, cfg: PipelineConfig) -> scsp.ScspSequence:
    """Squash sparse-code frames into (0, 1); raw frames pass through."""
    if cfg.features == "raw":
        return seq
    return scsp.ScspSequence(
        frames=sigmoid(seq.frames), video_id=seq.video_id, n_pad=seq.n_pad
    )


def corpus_dictionary(corpus: LabeledCorpus, cfg: PipelineConfig) -> scsp.Dictionary:
    return scsp.build_dictionary(
        [it.video for it in corpus.items],
        cfg.block_spec(),
        cfg.effective_segment_len(),
        ids=[it.video_id for it in corpus.items],
    )


def corpus_codes(corpus: LabeledCorpus, cfg: PipelineConfig):
    """(video_id, label, sparse code) per video against the corpus dictionary."""
    dictionary = corpus_dictionary(corpus, cfg)
    rows = []
    for it in corpus.items:
        feats = scsp.encode_video(it.video, cfg.block_spec()).features
        rows.append((it.video_id, it.label, video_code(feats, dictionary, cfg)))
    return rows


def select_pretrain_frames(sequences, cfg: PipelineConfig, seed: int):
    """Shuffle all frames from all classes, keep the first `pretrain_subset`."""
    frames = np.concatenate([s.frames for s in sequences], axis=0)
    owners = np.concatenate(
        [np.full(s.frames.shape[0], i) for i, s in enumerate(sequences)]
    )
    rng = RngStream(seed)
    order = rng.permutation(frames.shape[0])[: cfg.pretrain_subset]
    chosen = frames[order]
    used_ids = sorted({sequences[int(i)].video_id for i in owners[order]})
    return chosen, used_ids


def _check_frame_dims(sequences) -> int:
    input_dim = sequences[0].frame_len
    for s in sequences:
        if s.frame_len != input_dim:
            raise DimensionError(
                f"sequence {s.video_id!r} has frame length {s.frame_len}, "
                f"expected {input_dim}"
            )
    return input_dim


def pretrain_init(sequences, cfg: PipelineConfig, seed_path=(_SEED_TRAIN,)):
    """Subset selection + greedy GRBM stack + tied autoencoder initialization.

    Returns (init params, pre-training result, contributing video ids).
    Uses the same derived seeds as train_models, so pre-training separately
    and passing the result back in reproduces a one-shot training run.
    """
    sequences = list(sequences)
    if not sequences:
        raise DataError("need at least one sequence to pre-train on")
    input_dim = _check_frame_dims(sequences)
    subset, subset_ids = select_pretrain_frames(
        sequences, cfg, cfg.derive(*seed_path, _SEED_SUBSET)
    )
    sizes = (input_dim, *cfg.layer_sizes)
    cd_cfg = cfg.cd_config(seed=cfg.derive(*seed_path, _SEED_PRETRAIN))
    pretrained = grbm.pretrain_stack(subset, sizes, cd_cfg)
    return hddm.init_from_pretraining(pretrained), pretrained, subset_ids


def train_models(
    sequences,
    labels,
    cfg: PipelineConfig,
    seed_path=(_SEED_TRAIN,),
    init_params: hddm.HddmParams | None = None,
) -> TrainedSet:
    """Pre-train once on a shuffled subset, then fine-tune one model per class.

    `sequences` are model-ready (already squashed / raw); `labels` aligns
    with them. Every class present must have at least one sequence. An
    externally pre-trained `init_params` skips the pre-training stage.
    """
    sequences = list(sequences)
    labels = [int(l) for l in labels]
    if not sequences or len(sequences) != len(labels):
        raise DataError("need a non-empty, label-aligned training set")
    input_dim = _check_frame_dims(sequences)
    if init_params is None:
        init_params, pretrained, subset_ids = pretrain_init(sequences, cfg, seed_path)
    else:
        if init_params.input_dim != input_dim:
            raise DimensionError(
                f"init expects input dim {init_params.input_dim}, "
                f"features have {input_dim}"
            )
        pretrained = grbm.PretrainResult(
            grbms=[], input_mean=np.zeros(input_dim), input_std=np.ones(input_dim)
        )
        subset_ids = []

    ft_cfg = cfg.finetune_config()
    class_rng_root = RngStream(cfg.derive(*seed_path, _SEED_CLASS))
    provenance = Provenance(pretraining=subset_ids)
    models = []
    for label in sorted(set(labels)):
        class_seqs = [s for s, l in zip(sequences, labels) if l == label]
        model = hddm.fine_tune(
            label, class_seqs, init_params.copy(), ft_cfg, class_rng_root.child(label)
        )
        models.append(model)
        provenance.finetuning[label] = sorted(s.video_id for s in class_seqs)
    return TrainedSet(
        models=models, init_params=init_params, pretrain=pretrained, provenance=provenance
    )


# ---------------------------------------------------------------------------
# Evaluation runners


@dataclass
class _FeatureCache:
    """Fold-independent per-video artifacts (pure functions of each video)."""

    full: list[np.ndarray] | None = None  # whole-video descriptors
    segments: list[list[np.ndarray]] | None = None  # per-segment descriptors
    raw: list[scsp.ScspSequence] | None = None  # raw-mode sequences


def _build_cache(corpus: LabeledCorpus, cfg: PipelineConfig) -> _FeatureCache:
    if cfg.features == "raw":
        return _FeatureCache(raw=[raw_sequence(it, cfg) for it in corpus.items])
    spec = cfg.block_spec()
    k = cfg.effective_segment_len()
    return _FeatureCache(
        full=[scsp.encode_video(it.video, spec).features for it in corpus.items],
        segments=[scsp.encode_segments(it.video, spec, k) for it in corpus.items],
    )


def _model_ready(
    corpus: LabeledCorpus,
    cfg: PipelineConfig,
    cache: _FeatureCache,
    train_idx: list[int],
) -> tuple[list[scsp.ScspSequence], list[str]]:
    """Model-space sequences for every corpus item, trained artifacts fold-local.

    Returns (sequences for all items in corpus order, dictionary provenance).
    """
    if cfg.features == "raw":
        return list(cache.raw), []
    ids = [corpus.items[i].video_id for i in train_idx]
    dictionary = scsp.dictionary_from_segments(
        [cache.segments[i] for i in train_idx], ids, cfg.block_spec(),
        cfg.effective_segment_len(),
    )
    seqs = []
    for i, it in enumerate(corpus.items):
        seq = scsp_sequence(it, dictionary, cfg, features=cache.full[i])
        seqs.append(to_model_space(seq, cfg))
    return seqs, [vid for vid, _ in dictionary.provenance]


def run_training_fold(
    corpus: LabeledCorpus,
    cfg: PipelineConfig,
    cache: _FeatureCache,
    train_idx: list[int],
    query_idx: list[int],
    seed_path,
) -> tuple[list[ClassificationReport], Provenance]:
    seqs, dict_ids = _model_ready(corpus, cfg, cache, train_idx)
    trained = train_models(
        [seqs[i] for i in train_idx],
        [corpus.items[i].label for i in train_idx],
        cfg,
        seed_path=seed_path,
    )
    trained.provenance.dictionary = dict_ids
    reports = [classify(seqs[q], trained.models) for q in query_idx]
    return reports, trained.provenance


_POOL_STATE: dict = {}


def _pool_init(corpus, cfg, cache):
    _POOL_STATE["corpus"] = corpus
    _POOL_STATE["cfg"] = cfg
    _POOL_STATE["cache"] = cache


def _pool_fold(i: int):
    corpus, cfg, cache = _POOL_STATE["corpus"], _POOL_STATE["cfg"], _POOL_STATE["cache"]
    train_idx = [j for j in range(len(corpus)) if j != i]
    reports, prov = run_training_fold(
        corpus, cfg, cache, train_idx, [i], seed_path=(_SEED_FOLD, i)
    )
    return i, reports[0], prov


def run_loo_folds(
    corpus: LabeledCorpus,
    cfg: PipelineConfig,
    threads: int | None = None,
    collect_provenance: list | None = None,
):
    """One fold per corpus item; results always merged in fold order."""
    cache = _build_cache(corpus, cfg)
    n = len(corpus)
    workers = threads if threads is not None else cfg.threads
    if workers == 0:
        workers = os.cpu_count() or 1
    workers = max(1, min(workers, n))
    results: dict[int, tuple] = {}
    if workers == 1:
        _pool_init(corpus, cfg, cache)
        for i in range(n):
            results[i] = _pool_fold(i)[1:]
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_pool_init, initargs=(corpus, cfg, cache)
        ) as pool:
            for i, report, prov in pool.map(_pool_fold, range(n)):
                results[i] = (report, prov)
    outcomes = []
    for i in range(n):
        report, prov = results[i]
        if collect_provenance is not None:
            collect_provenance.append(prov)
        outcomes.append((corpus.items[i], report))
    return outcomes


def run_split(train: LabeledCorpus, test: LabeledCorpus, cfg: PipelineConfig):
    """Train on `train`, classify every item of `test`."""
    merged = LabeledCorpus(
        items=list(train.items) + list(test.items), n_classes=train.n_classes
    )
    ids = [it.video_id for it in merged.items]
    if len(set(ids)) != len(ids):
        raise DataError("train and test corpora share video ids")
    cache = _build_cache(merged, cfg)
    train_idx = list(range(len(train.items)))
    query_idx = list(range(len(train.items), len(merged.items)))
    reports, _ = run_training_fold(
        merged, cfg, cache, train_idx, query_idx, seed_path=(_SEED_TRAIN,)
    )
    return [(test.items[j], reports[j]) for j in range(len(test.items))]
