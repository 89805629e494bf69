import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from plstm.config import RunConfig
from plstm.corpus import (Label, LabeledExample, attach_labels, build_vocabulary, infer_format, load_labeled_dataset,
                          load_labels, load_plain_text, make_folds)
from plstm.errors import DataError, ShapeError
from plstm.model import BRANCH_ORDER, Aggregation, ParallelModel, forward_batch, init_model
from plstm.tensor import ActivationKind
from plstm.train import EVAL_CHUNK, EncodedExample, encode_examples, epoch_metrics, final_accuracies, train

logger = logging.getLogger(__name__)

BENCHMARK_HEADER = ("dataset", "V", "branch", "mean_train_acc", "entire_corpus_acc")
REPORT_HEADER = ("branch", "precision", "recall", "f1", "accuracy")


@dataclass(frozen=True)
class ConfusionCounts:
    """이진 혼동 행렬 (양성 = sarcastic)"""
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClassificationReport:
    """정확한 유리수로 계산한 지표 (출력할 때만 소수 4자리 반올림)"""
    precision: Fraction
    recall: Fraction
    f1: Fraction
    accuracy: Fraction

    def rendered(self) -> Tuple[str, str, str, str]:
        return render(self.precision), render(self.recall), render(self.f1), render(self.accuracy)


def render(value: Fraction, places: int = 4) -> str:
    """
    유리수를 소수점 아래 places자리로 반올림 (0.5는 올림)

    Args:
        value: 값
        places: 자리수

    Returns:
        str: 예) Fraction(4851, 4925) (= 0.98497…) → '0.9850'
    """
    value = Fraction(value)
    exact = Decimal(value.numerator) / Decimal(value.denominator)
    return str(exact.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def confusion(predictions: Sequence[int], truths: Sequence[int]) -> ConfusionCounts:
    """
    예측과 정답으로 혼동 행렬 세기

    Args:
        predictions: 예측 라벨 (0/1)
        truths: 정답 라벨 (0/1)

    Returns:
        ConfusionCounts: tp, fp, fn, tn
    """
    if len(predictions) != len(truths):
        raise ShapeError(f"{len(predictions)} predictions for {len(truths)} labels")
    if len(truths) == 0:
        raise ValueError("confusion of an empty label set")
    predicted = np.asarray([int(p) for p in predictions]) == Label.SARCASTIC
    actual = np.asarray([int(t) for t in truths]) == Label.SARCASTIC
    return ConfusionCounts(
        tp=int(np.sum(predicted & actual)),
        fp=int(np.sum(predicted & ~actual)),
        fn=int(np.sum(~predicted & actual)),
        tn=int(np.sum(~predicted & ~actual)),
    )


def _ratio(numerator: int, denominator: int) -> Fraction:
    return Fraction(numerator, denominator) if denominator else Fraction(0)


def f1_score(precision: Fraction, recall: Fraction) -> Fraction:
    """조화 평균 2PR/(P+R) (P+R=0이면 0)"""
    precision, recall = Fraction(precision), Fraction(recall)
    if precision + recall == 0:
        return Fraction(0)
    return 2 * precision * recall / (precision + recall)


def classification_report(counts: ConfusionCounts) -> ClassificationReport:
    """
    혼동 행렬 → 정밀도, 재현율, F1, 정확도

    Args:
        counts: 혼동 행렬

    Returns:
        ClassificationReport: 분모가 0인 지표는 0
    """
    if counts.total == 0:
        raise ValueError("classification report of zero examples")
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    return ClassificationReport(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        accuracy=Fraction(counts.tp + counts.tn, counts.total),
    )


def branch_predictions(model: ParallelModel, examples: Sequence[EncodedExample]) -> Dict[ActivationKind, List[Label]]:
    """평가 모드에서 브랜치별 argmax 라벨"""
    if not examples:
        raise ValueError("cannot predict an empty example set")
    ids = np.stack([example.sequence.ids for example in examples])
    mask = np.stack([example.sequence.mask for example in examples])
    labels: Dict[ActivationKind, List[Label]] = {kind: [] for kind in BRANCH_ORDER}
    for start in range(0, len(examples), EVAL_CHUNK):
        chunk = slice(start, start + EVAL_CHUNK)
        for kind, (scores, _) in forward_batch(model, ids[chunk], mask[chunk]).items():
            labels[kind].extend(Label(int(i)) for i in np.argmax(scores, axis=1))
    return labels


def branch_reports(model: ParallelModel, examples: Sequence[EncodedExample]) -> Dict[ActivationKind, ClassificationReport]:
    """
    브랜치별 분류 리포트

    Args:
        model: 모델
        examples: 정답이 있는 인코딩된 예제

    Returns:
        Dict[ActivationKind, ClassificationReport]: BRANCH_ORDER 순서
    """
    truths = [example.label for example in examples]
    predictions = branch_predictions(model, examples)
    return {kind: classification_report(confusion(predictions[kind], truths)) for kind in BRANCH_ORDER}


def format_report_table(reports: Dict[ActivationKind, ClassificationReport]) -> str:
    lines = [f"{'Modules':<18}{'Precision':>11}{'Recall':>9}{'F1-Score':>10}{'Accuracy':>10}"]
    for kind, report in reports.items():
        precision, recall, f1, accuracy = report.rendered()
        lines.append(f"{'pLSTM + ' + kind.value:<18}{precision:>11}{recall:>9}{f1:>10}{accuracy:>10}")
    return "\n".join(lines) + "\n"


def write_report_csv(reports: Dict[ActivationKind, ClassificationReport], path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for kind, report in reports.items():
            writer.writerow([kind.value, *report.rendered()])


@dataclass(frozen=True)
class DatasetSpec:
    """벤치마크 대상 코퍼스 (라벨 없는 텍스트는 labels_path가 필요)"""
    name: str
    path: str
    labels_path: Optional[str] = None

    @classmethod
    def parse(cls, entry: str) -> "DatasetSpec":
        """'name=path' 또는 'name=path@labels' (이름이 없으면 파일 이름)"""
        name, sep, rest = entry.partition("=")
        if not sep:
            name, rest = Path(entry.split("@", 1)[0]).stem, entry
        path, _, labels = rest.partition("@")
        return cls(name=name, path=path, labels_path=labels or None)


@dataclass
class BenchmarkResult:
    """
    코퍼스 하나의 벤치마크 결과

    entire_corpus_acc는 학습에 쓰인 예제를 포함한 전체 코퍼스에서 잰 정확도이고,
    held_out_acc는 폴드별 test 분할에서 잰 정확도의 평균이다.
    """
    dataset: str
    vocab_size: int = 0
    size_mb: float = 0.0
    mean_train_acc: Dict[ActivationKind, float] = field(default_factory=dict)
    entire_corpus_acc: Dict[ActivationKind, float] = field(default_factory=dict)
    held_out_acc: Dict[ActivationKind, float] = field(default_factory=dict)
    entire_corpus_f1: Dict[ActivationKind, Fraction] = field(default_factory=dict)
    skipped: Optional[str] = None

    @property
    def succeeded(self) -> bool:
        return self.skipped is None


def load_benchmark_examples(spec: DatasetSpec) -> List[LabeledExample]:
    """
    벤치마크 코퍼스 읽기

    Raises:
        DataError: 파일이 없거나, 라벨 없는 텍스트에 라벨 파일이 없을 때
    """
    path = Path(spec.path)
    if not path.is_file():
        raise DataError("file not found", path=spec.path)
    data_format = infer_format(path)
    if data_format is not None:
        return load_labeled_dataset(path, data_format)
    if spec.labels_path is None:
        raise DataError("unlabeled corpus without a label file", path=spec.path)
    return attach_labels(load_plain_text(path), load_labels(spec.labels_path))


def _mean(values: List[Dict[ActivationKind, float]]) -> Dict[ActivationKind, float]:
    return {kind: sum(value[kind] for value in values) / len(values) for kind in BRANCH_ORDER}


def benchmark_dataset(config: RunConfig, spec: DatasetSpec) -> BenchmarkResult:
    """
    코퍼스 하나에 대해 k번의 무작위 3:2 분할 학습 후 전체 코퍼스 평가

    어휘는 코퍼스 전체로 만들고, 폴드마다 새 모델을 학습한다.
    전체 코퍼스 정확도는 마지막 폴드 모델로 잰다.

    Args:
        config: 실행 설정 (folds, train_fraction, workers 포함)
        spec: 코퍼스

    Returns:
        BenchmarkResult: 성공한 결과 (실패는 예외로 알림)
    """
    examples = load_benchmark_examples(spec)
    if not examples:
        raise DataError("corpus has no examples", path=spec.path)
    train_config = replace(config.train, verbose=0)
    vocab = build_vocabulary([example.doc for example in examples], train_config.min_count)
    encoded = encode_examples(examples, vocab, train_config.sequence_length)
    plan = make_folds(len(encoded), config.folds, config.train_fraction, train_config.seed)

    def run_fold(fold: int) -> Tuple[ParallelModel, Dict[ActivationKind, float], Dict[ActivationKind, float]]:
        train_indices, test_indices = plan.folds[fold]
        model = init_model(len(vocab), train_config.embedding_dim, train_config.hidden, train_config.seed,
                           train_config.sequence_length, train_config.gate, Aggregation(config.aggregation),
                           train_config.dropout_embed, train_config.dropout_recurrent)
        model, logs = train(model, [encoded[i] for i in train_indices], train_config)
        held_out = epoch_metrics(model, [encoded[i] for i in test_indices])
        logger.info("%s fold %d/%d done", spec.name, fold + 1, len(plan))
        return model, final_accuracies(logs), held_out

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            outcomes = list(executor.map(run_fold, range(len(plan))))
    else:
        outcomes = [run_fold(fold) for fold in range(len(plan))]

    last_model = outcomes[-1][0]
    truths = [example.label for example in encoded]
    predictions = branch_predictions(last_model, encoded)
    result = BenchmarkResult(
        dataset=spec.name,
        vocab_size=vocab.content_size,
        size_mb=Path(spec.path).stat().st_size / (1024 * 1024),
        mean_train_acc=_mean([train_acc for _, train_acc, _ in outcomes]),
        held_out_acc=_mean([held_out for _, _, held_out in outcomes]),
    )
    for kind in BRANCH_ORDER:
        report = classification_report(confusion(predictions[kind], truths))
        result.entire_corpus_acc[kind] = float(100 * report.accuracy)
        result.entire_corpus_f1[kind] = report.f1
    return result


def benchmark(config: RunConfig, datasets: Sequence[DatasetSpec]) -> List[BenchmarkResult]:
    """
    여러 코퍼스 벤치마크 (실패한 코퍼스는 이유와 함께 skipped로 남긴다)

    Args:
        config: 실행 설정
        datasets: 코퍼스 목록

    Returns:
        List[BenchmarkResult]: datasets 순서
    """
    results = []
    for spec in datasets:
        try:
            results.append(benchmark_dataset(config, spec))
        except (DataError, OSError, ValueError) as exc:
            logger.warning("skipping %s: %s", spec.name, exc)
            results.append(BenchmarkResult(dataset=spec.name, skipped=str(exc)))
    return results


def write_benchmark_csv(results: Sequence[BenchmarkResult], path: Union[str, Path]) -> None:
    """dataset,V,branch,mean_train_acc,entire_corpus_acc (건너뛴 코퍼스는 branch 칸에 이유)"""
    with Path(path).open("w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(BENCHMARK_HEADER)
        for result in results:
            if not result.succeeded:
                writer.writerow([result.dataset, "", f"skipped: {result.skipped}", "", ""])
                continue
            for kind in BRANCH_ORDER:
                writer.writerow([result.dataset, result.vocab_size, kind.value,
                                 f"{result.mean_train_acc[kind]:.2f}", f"{result.entire_corpus_acc[kind]:.2f}"])


def format_benchmark_table(results: Sequence[BenchmarkResult]) -> str:
    """사람이 읽는 정렬된 표"""
    header = (f"{'Dataset':<16}{'Size (MB)':>10}{'V':>8}  {'Branch':<9}{'Mean train acc':>15}"
              f"{'Entire-corpus acc':>19}{'Held-out acc':>14}{'Entire-corpus F1':>18}")
    lines = [header, "-" * len(header)]
    for result in results:
        if not result.succeeded:
            lines.append(f"{result.dataset:<16}  skipped: {result.skipped}")
            continue
        for kind in BRANCH_ORDER:
            lines.append(
                f"{result.dataset:<16}{result.size_mb:>10.4f}{result.vocab_size:>8}  {kind.value:<9}"
                f"{result.mean_train_acc[kind]:>15.2f}{result.entire_corpus_acc[kind]:>19.2f}"
                f"{result.held_out_acc[kind]:>14.2f}{render(result.entire_corpus_f1[kind]):>18}"
            )
    return "\n".join(lines) + "\n"
