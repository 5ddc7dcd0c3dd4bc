"""Command-line front end.

Subcommands: synth, extract, pretrain, train, classify, evaluate. Every
pipeline config key is exposed as a same-named flag (underscores become
dashes) and overrides the config file. Exit codes: 0 success, 2
usage/config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from . import data, hddm, pipeline, scsp
from .config import PipelineConfig, apply_overrides, load_config
from .errors import ConfigError, DataError, NumericError


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline config overrides")
    for f in fields(PipelineConfig):
        group.add_argument(
            "--" + f.name.replace("_", "-"),
            dest="cfg_" + f.name,
            default=None,
            metavar="V",
            help=f"override config key {f.name}",
        )


def _resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    for f in fields(PipelineConfig):
        v = getattr(args, "cfg_" + f.name, None)
        if v is not None:
            overrides[f.name] = v
    return apply_overrides(cfg, overrides)


def _need_manifest(cfg: PipelineConfig) -> Path:
    if not cfg.manifest:
        raise ConfigError("no manifest configured; set manifest= or pass --manifest")
    path = Path(cfg.manifest)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    return path


def _need(cfg: PipelineConfig, key: str) -> str:
    value = getattr(cfg, key)
    if not value:
        raise ConfigError(f"no {key} configured; set {key}= or pass --{key.replace('_', '-')}")
    return value


def _dictionary_path(cfg: PipelineConfig) -> Path:
    if cfg.dictionary_file:
        return Path(cfg.dictionary_file)
    return Path(_need(cfg, "feature_dir")) / "dictionary.scspd"


def cmd_synth(args, cfg: PipelineConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = data.generate_synthetic(
        n_classes=args.classes,
        per_class=args.per_class,
        frames=args.frames,
        height=args.height,
        width=args.width,
        seed=cfg.seed,
    )
    entries = []
    for item in corpus.items:
        name = f"{item.video_id}.rvt"
        data.write_video(out / name, item.video)
        entries.append((name, item.label))
    manifest = out / "manifest.tsv"
    data.write_manifest(manifest, entries)
    print(f"wrote {len(entries)} videos and {manifest} (seed {cfg.seed})")
    return 0


def cmd_extract(args, cfg: PipelineConfig) -> int:
    _need_manifest(cfg)
    corpus = data.load_corpus(cfg.manifest)
    feature_dir = Path(_need(cfg, "feature_dir"))
    feature_dir.mkdir(parents=True, exist_ok=True)
    echo = cfg.to_dict()
    if cfg.features == "scsp":
        dictionary = pipeline.corpus_dictionary(corpus, cfg)
        scsp.write_dictionary(_dictionary_path(cfg), dictionary, config_echo=echo)
        spec = cfg.block_spec()
        for item in corpus.items:
            feats = scsp.encode_video(item.video, spec).features
            seq = pipeline.scsp_sequence(item, dictionary, cfg, features=feats)
            scsp.write_sequence(feature_dir / f"{item.video_id}.scsp", seq, config_echo=echo)
        data.export_embedding_csv(feature_dir / "embedding.csv", corpus, cfg)
    else:
        for item in corpus.items:
            seq = pipeline.raw_sequence(item, cfg)
            scsp.write_sequence(
                feature_dir / f"{item.video_id}.scsp", seq, config_echo=echo,
                kind="raw-sequence",
            )
    print(f"extracted features for {len(corpus)} videos into {feature_dir}")
    return 0


def _load_feature_corpus(cfg: PipelineConfig):
    """Sequences (model space) and labels for every manifest entry."""
    corpus_meta = data.load_corpus(cfg.manifest)
    feature_dir = Path(_need(cfg, "feature_dir"))
    seqs, labels = [], []
    for item in corpus_meta.items:
        path = feature_dir / f"{item.video_id}.scsp"
        if not path.is_file():
            raise DataError(f"feature file missing for {item.video_id!r}: {path}")
        seq = scsp.read_sequence(path)
        seqs.append(pipeline.to_model_space(seq, cfg))
        labels.append(item.label)
    return seqs, labels


def cmd_pretrain(args, cfg: PipelineConfig) -> int:
    _need_manifest(cfg)
    seqs, _ = _load_feature_corpus(cfg)
    init_params, pretrained, subset_ids = pipeline.pretrain_init(seqs, cfg)
    model_file = Path(_need(cfg, "model_file"))
    hddm.write_model(
        model_file, [], config_echo=cfg.to_dict(), seed=cfg.seed, init_params=init_params
    )
    print(
        f"pre-trained {len(pretrained.grbms)} layers on {len(subset_ids)} videos; "
        f"wrote {model_file}"
    )
    return 0


def cmd_train(args, cfg: PipelineConfig) -> int:
    _need_manifest(cfg)
    seqs, labels = _load_feature_corpus(cfg)
    init_params = None
    if args.init:
        _, init_params, _ = hddm.read_model(args.init)
        if init_params is None:
            raise DataError(f"{args.init} carries no initialization block")
    trained = pipeline.train_models(seqs, labels, cfg, init_params=init_params)
    for model in trained.models:
        for epoch, c in enumerate(model.epoch_costs):
            print(f"class {model.label} epoch {epoch} cost {c:.6f}")
    model_file = Path(_need(cfg, "model_file"))
    hddm.write_model(
        model_file,
        trained.models,
        config_echo=cfg.to_dict(),
        seed=cfg.seed,
        init_params=trained.init_params,
    )
    print(f"wrote {len(trained.models)} class models to {model_file}")
    return 0


def cmd_classify(args, cfg: PipelineConfig) -> int:
    models, _, _ = hddm.read_model(_need(cfg, "model_file"))
    if not models:
        raise DataError(f"{cfg.model_file} contains no class models")
    video = data.read_video(args.query)
    item = data.CorpusItem(video_id=Path(args.query).stem, video=video, label=0)
    if cfg.features == "scsp":
        dictionary = scsp.read_dictionary(_dictionary_path(cfg))
        seq = pipeline.to_model_space(pipeline.scsp_sequence(item, dictionary, cfg), cfg)
    else:
        seq = pipeline.raw_sequence(item, cfg)
    report = pipeline.classify(seq, models)
    print(report.to_table())
    if cfg.report_out:
        Path(cfg.report_out).write_text(report.to_json() + "\n")
    return 0


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    _need_manifest(cfg)
    corpus = data.load_corpus(cfg.manifest)
    if args.protocol == "loo":
        result = data.loo_evaluate(corpus, cfg)
    else:
        if not args.test_manifest:
            raise ConfigError("split protocol needs --test-manifest")
        test = data.load_corpus(args.test_manifest)
        result = data.split_evaluate(corpus, test, cfg)
    print(
        f"protocol {result.protocol}: accuracy {result.accuracy:.4f}, "
        f"mAP {result.mean_ap:.4f} over {len(result.predictions)} queries "
        f"(seed {result.seed})"
    )
    if cfg.report_out:
        out = Path(cfg.report_out)
        result.write_json(out)
        result.write_confusion_csv(out.with_suffix(".confusion.csv"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddm",
        description="Video classification by per-class autoencoder reconstruction voting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, fn):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="flat key=value config file")
        _add_config_flags(p)
        p.set_defaults(fn=fn)
        return p

    p = add("synth", "generate a synthetic labelled corpus", cmd_synth)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--height", type=int, default=24)
    p.add_argument("--width", type=int, default=24)

    add("extract", "encode and sparse-code every corpus video", cmd_extract)
    add("pretrain", "layer-wise GRBM pre-training only", cmd_pretrain)
    p = add("train", "pre-train and fine-tune one model per class", cmd_train)
    p.add_argument("--init", default=None, help="model file with a pre-trained init block")
    p = add("classify", "classify one query video", cmd_classify)
    p.add_argument("query", help="query video (RVT1 file)")
    p = add("evaluate", "run an evaluation protocol over the corpus", cmd_evaluate)
    p.add_argument("--protocol", choices=("loo", "split"), default="loo")
    p.add_argument("--test-manifest", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _resolve_config(args)
        return args.fn(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
