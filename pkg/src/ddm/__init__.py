"""Video classification by per-class deep autoencoder reconstruction voting.

Pipeline: cubic symmetric-variation descriptors, sparse coding against a
dictionary of encoded training segments, greedy GRBM pre-training, tied
initialization of a deep autoencoder fine-tuned per class, and
reconstruction-error weighted voting for classification.
"""

from .classify import ClassificationReport, classify, vote_weight
from .config import PipelineConfig, load_config
from .data import LabeledCorpus, generate_synthetic, load_corpus, loo_evaluate
from .errors import ConfigError, DataError, DimensionError, NumericError, PipelineError
from .grbm import CdConfig, GrbmParams, pretrain_stack
from .hddm import ClassModel, FineTuneConfig, HddmParams, fine_tune, init_from_pretraining
from .numeric import RngStream
from .scsp import BlockSpec, Dictionary, ScspSequence, encode_video, sparse_code

__version__ = "0.1.0"

__all__ = [
    "BlockSpec",
    "CdConfig",
    "ClassModel",
    "ClassificationReport",
    "ConfigError",
    "DataError",
    "Dictionary",
    "DimensionError",
    "FineTuneConfig",
    "GrbmParams",
    "HddmParams",
    "LabeledCorpus",
    "NumericError",
    "PipelineConfig",
    "PipelineError",
    "RngStream",
    "ScspSequence",
    "classify",
    "encode_video",
    "fine_tune",
    "generate_synthetic",
    "init_from_pretraining",
    "load_config",
    "load_corpus",
    "loo_evaluate",
    "pretrain_stack",
    "sparse_code",
    "vote_weight",
]
