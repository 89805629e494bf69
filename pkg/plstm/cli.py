import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from plstm.checkpoint import atomic_output, load_checkpoint, save_checkpoint
from plstm.config import RunConfig, load_config
from plstm.corpus import (Document, Label, LabeledExample, Vocabulary, build_vocabulary, corpus_summary,
                          frequency_table, infer_format, load_labeled_dataset, load_plain_text, write_frequency_csv)
from plstm.errors import ConfigError, DataError
from plstm.evaluate import (DatasetSpec, benchmark, branch_reports, format_benchmark_table, format_report_table,
                            write_benchmark_csv, write_report_csv)
from plstm.model import Aggregation, init_model, summary
from plstm.train import cadence_table, encode_examples, train, write_epoch_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 2
EXIT_CONFIG = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
LOG_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}

CHECKPOINT_NAME = "model.ckpt"
VOCAB_NAME = "vocab.json"
CONFIG_NAME = "config.yaml"


def setup_logging(verbose: int) -> None:
    """루트 로거 설정 (0: WARNING, 1: INFO, 2: DEBUG)"""
    logging.basicConfig(level=LOG_LEVELS.get(verbose, logging.DEBUG), format=LOG_FORMAT, force=True)


def _read_documents(path: str) -> Tuple[List[Document], Optional[List[Label]]]:
    data_format = infer_format(path)
    if data_format is None:
        if not Path(path).is_file():
            raise DataError("file not found", path=path)
        return load_plain_text(path), None
    examples = load_labeled_dataset(path, data_format)
    return [example.doc for example in examples], [example.label for example in examples]


def _read_labeled(path: Optional[str]) -> List[LabeledExample]:
    if path is None:
        raise ConfigError("no dataset given (--data or 'data' in the config)")
    data_format = infer_format(path)
    if data_format is None:
        raise DataError("expected a labeled dataset (.tsv, .csv or .jsonl)", path=path)
    return load_labeled_dataset(path, data_format)


def _resolve(args: argparse.Namespace, **overrides) -> RunConfig:
    config = load_config(getattr(args, "config", None), overrides)
    setup_logging(config.train.verbose)
    return config


def cmd_stats(args: argparse.Namespace) -> int:
    """빈도 표 CSV를 쓰고 코퍼스 요약을 출력"""
    if args.top_k < 1:
        raise ConfigError(f"--top-k must be >= 1, got {args.top_k}")
    documents, labels = _read_documents(args.data)
    table = frequency_table(documents, args.top_k)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with atomic_output(out) as tmp:
        write_frequency_csv(table, tmp)
    for line in corpus_summary(documents, labels).lines():
        print(line)
    print(f"frequency table: {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """
    학습 후 체크포인트, 에폭 CSV, 설정, 어휘, 모델 요약을 out_dir에 쓴다
    """
    config = _resolve(args, data=args.data, seed=args.seed, out_dir=args.out, epochs=args.epochs,
                      hidden=args.hidden, embedding_dim=args.embedding_dim, batch_size=args.batch_size,
                      verbose=args.verbose, gate_mode=args.gate_mode)
    settings = config.train
    examples = _read_labeled(config.data)
    vocab = build_vocabulary([example.doc for example in examples], settings.min_count)
    encoded = encode_examples(examples, vocab, settings.sequence_length)
    model = init_model(len(vocab), settings.embedding_dim, settings.hidden, settings.seed, settings.sequence_length,
                       settings.gate, Aggregation(config.aggregation), settings.dropout_embed,
                       settings.dropout_recurrent)
    if settings.verbose >= 1:
        print(summary(model))
    model, logs = train(model, encoded, settings)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = Path(config.checkpoint) if config.checkpoint else out_dir / CHECKPOINT_NAME
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, checkpoint)
    with atomic_output(checkpoint.parent / VOCAB_NAME) as tmp:
        vocab.save(tmp)
    with atomic_output(checkpoint.parent / CONFIG_NAME) as tmp:
        config.save(tmp)
    if checkpoint.parent != out_dir:
        with atomic_output(out_dir / CONFIG_NAME) as tmp:
            config.save(tmp)
    with atomic_output(out_dir / "epochs.csv") as tmp:
        write_epoch_csv(logs, tmp, settings.record_time)
    with atomic_output(out_dir / "summary.txt") as tmp:
        tmp.write_text(summary(model), encoding="utf-8")
    table = cadence_table(logs)
    with atomic_output(out_dir / "cadence.txt") as tmp:
        tmp.write_text(table, encoding="utf-8")

    if settings.verbose >= 1:
        print(table)
        print(f"checkpoint: {checkpoint}")
    return EXIT_OK


def _load_run(checkpoint: Path) -> Tuple[RunConfig, Vocabulary]:
    config_path = checkpoint.parent / CONFIG_NAME
    config = load_config(config_path if config_path.is_file() else None)
    return config, Vocabulary.load(checkpoint.parent / VOCAB_NAME)


def cmd_eval(args: argparse.Namespace) -> int:
    """브랜치별 분류 리포트 출력 + CSV"""
    checkpoint = Path(args.checkpoint)
    config, vocab = _load_run(checkpoint)
    setup_logging(config.train.verbose)
    model = load_checkpoint(checkpoint, config.train.gate, Aggregation(config.aggregation))
    if len(vocab) != model.vocab_size:
        raise DataError(f"bad checkpoint: vocabulary has {len(vocab)} rows, checkpoint {model.vocab_size}",
                        path=str(checkpoint))
    examples = _read_labeled(args.data)
    reports = branch_reports(model, encode_examples(examples, vocab, model.sequence_length))
    out = Path(args.out) if args.out else checkpoint.parent / "report.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with atomic_output(out) as tmp:
        write_report_csv(reports, tmp)
    print(format_report_table(reports))
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    """코퍼스마다 k-fold 학습 + 전체 코퍼스 평가 (한 줄이라도 성공하면 0)"""
    config = _resolve(args, out_dir=args.out, seed=args.seed, workers=args.workers)
    datasets = [DatasetSpec.parse(entry) for entry in args.datasets]
    results = benchmark(config, datasets)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with atomic_output(out_dir / "benchmark.csv") as tmp:
        write_benchmark_csv(results, tmp)
    table = format_benchmark_table(results)
    with atomic_output(out_dir / "benchmark.txt") as tmp:
        tmp.write_text(table, encoding="utf-8")
    with atomic_output(out_dir / CONFIG_NAME) as tmp:
        config.save(tmp)
    print(table)
    return EXIT_OK if any(result.succeeded for result in results) else EXIT_DATA


def cmd_summary(args: argparse.Namespace) -> int:
    checkpoint = Path(args.checkpoint)
    config_path = checkpoint.parent / CONFIG_NAME
    config = load_config(config_path if config_path.is_file() else None)
    print(summary(load_checkpoint(checkpoint, config.train.gate, Aggregation(config.aggregation))))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plstm", description="pLSTM sarcasm detection: train, evaluate, benchmark")
    subparsers = parser.add_subparsers(dest="command", required=True)

    stats = subparsers.add_parser("stats", help="word frequency table and corpus summary")
    stats.add_argument("--data", required=True, help="corpus file (.tsv/.csv/.jsonl labeled, .txt plain)")
    stats.add_argument("--top-k", type=int, default=100, help="number of frequent words to keep")
    stats.add_argument("--out", default="frequency.csv", help="output CSV path")
    stats.set_defaults(handler=cmd_stats)

    train_p = subparsers.add_parser("train", help="train a model and write a checkpoint")
    train_p.add_argument("--data", help="labeled dataset")
    train_p.add_argument("--config", help="YAML config file")
    train_p.add_argument("--seed", type=int)
    train_p.add_argument("--out", help="output directory")
    train_p.add_argument("--epochs", type=int)
    train_p.add_argument("--hidden", type=int)
    train_p.add_argument("--embedding-dim", type=int)
    train_p.add_argument("--batch-size", type=int)
    train_p.add_argument("--verbose", type=int, choices=(0, 1, 2))
    train_p.add_argument("--gate-mode", choices=("standard", "literal_eq9"))
    train_p.set_defaults(handler=cmd_train)

    eval_p = subparsers.add_parser("eval", help="per-branch classification report for a checkpoint")
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--data", required=True, help="labeled dataset")
    eval_p.add_argument("--out", help="report CSV path (default: report.csv next to the checkpoint)")
    eval_p.set_defaults(handler=cmd_eval)

    bench = subparsers.add_parser("benchmark", help="5-fold 3:2 cross-training and entire-corpus testing")
    bench.add_argument("--config", help="YAML config file")
    bench.add_argument("--datasets", nargs="+", required=True, help="entries of the form name=path[@labels]")
    bench.add_argument("--out", help="output directory")
    bench.add_argument("--seed", type=int)
    bench.add_argument("--workers", type=int, help="fold trainings run concurrently")
    bench.set_defaults(handler=cmd_benchmark)

    summary_p = subparsers.add_parser("summary", help="print the layer table of a checkpoint")
    summary_p.add_argument("--checkpoint", required=True)
    summary_p.set_defaults(handler=cmd_summary)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    CLI 진입점

    Returns:
        int: 0 성공, 2 데이터/입출력 오류, 3 설정 오류
    """
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
