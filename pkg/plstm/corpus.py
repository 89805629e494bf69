import csv
import json
import logging
import math
import string
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np

from plstm.errors import CorpusError, DataError
from plstm.tensor import RngStream

logger = logging.getLogger(__name__)

# 코퍼스의 최장 대사 길이 (65단어)
DEFAULT_SEQUENCE_LENGTH = 65

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

LABELED_HEADER = ("id", "text", "label")


class Source(Enum):
    """문서 출처"""
    LABELED_DIALOGUE = "labeled_dialogue"
    PLAIN_LITERATURE = "plain_literature"


class Label(IntEnum):
    """이진 분류 라벨 (값 = 클래스 인덱스)"""
    NON_SARCASTIC = 0
    SARCASTIC = 1


class DatasetFormat(Enum):
    TSV = "tsv"
    CSV = "csv"
    JSON_LINES = "json_lines"


@dataclass(frozen=True)
class Document:
    id: int
    text: str
    source: Source = Source.LABELED_DIALOGUE


@dataclass(frozen=True)
class LabeledExample:
    doc: Document
    label: Label


@dataclass(frozen=True)
class FrequencyEntry:
    word: str
    count: int
    distribution: float


@dataclass
class FrequencyTable:
    """상위 빈출 단어 표 (distribution = 100·count/total_tokens)"""
    entries: List[FrequencyEntry]
    total_tokens: int

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class EncodedSequence:
    """고정 길이 L의 토큰 id 배열과 마스크"""
    ids: np.ndarray
    mask: np.ndarray
    length: int

    @property
    def max_length(self) -> int:
        return int(self.ids.shape[0])


@dataclass
class SplitPlan:
    """k개의 (train, test) 인덱스 분할"""
    folds: List[Tuple[List[int], List[int]]]
    seed: int
    ratio: Fraction

    def __len__(self) -> int:
        return len(self.folds)


@dataclass
class CorpusSummary:
    documents: int
    tokens: int
    vocabulary: int
    min_length: int
    max_length: int
    mean_length: float
    class_counts: Dict[str, int] = field(default_factory=dict)

    def lines(self) -> List[str]:
        result = [
            f"documents: {self.documents}",
            f"tokens: {self.tokens}",
            f"vocabulary: {self.vocabulary}",
            f"words per document: min {self.min_length}, max {self.max_length}, mean {self.mean_length:.2f}",
        ]
        if self.class_counts:
            balance = ", ".join(f"{name} {count}" for name, count in self.class_counts.items())
            result.append(f"labels: {balance}")
        return result


def tokenize(text: str) -> List[str]:
    """
    소문자화 후 공백으로 나누고 각 토큰 양 끝의 ASCII 구두점을 제거

    Args:
        text: 원문 문자열

    Returns:
        List[str]: 토큰 리스트 (내부 아포스트로피는 유지)
    """
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(string.punctuation)
        if token:
            tokens.append(token)
    return tokens


def count_tokens(documents: Iterable[Document]) -> Counter:
    """
    전체 토큰 수 세기

    Counter는 처음 등장한 순서를 유지하므로 안정 정렬하면
    동률은 첫 등장 순서로 정리된다.
    """
    counts: Counter = Counter()
    for doc in documents:
        counts.update(tokenize(doc.text))
    return counts


def ranked_counts(counts: Counter) -> List[Tuple[str, int]]:
    """빈도 내림차순, 동률은 첫 등장 순서"""
    return sorted(counts.items(), key=lambda item: -item[1])


class Vocabulary:
    """단어 ↔ id 매핑 (pad=0, unk=1, 내용 단어는 2부터)"""

    def __init__(self, words: Iterable[str]):
        """
        Args:
            words: id 순서대로 정렬된 내용 단어들
        """
        self.word_to_id: Dict[str, int] = {}
        self.id_to_word: Dict[int, str] = {PAD_ID: PAD_TOKEN, UNK_ID: UNK_TOKEN}
        for word in words:
            if word in self.word_to_id:
                raise ValueError(f"duplicate vocabulary word {word!r}")
            index = len(self.word_to_id) + 2
            self.word_to_id[word] = index
            self.id_to_word[index] = word

    @property
    def pad_id(self) -> int:
        return PAD_ID

    @property
    def unk_id(self) -> int:
        return UNK_ID

    @property
    def content_size(self) -> int:
        """특수 토큰을 뺀 단어 수 V"""
        return len(self.word_to_id)

    def __len__(self) -> int:
        """임베딩 테이블 행 수 (V + 2)"""
        return len(self.word_to_id) + 2

    def __contains__(self, word: str) -> bool:
        return word in self.word_to_id

    def lookup(self, word: str) -> int:
        return self.word_to_id.get(word, UNK_ID)

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.id_to_word.get(int(i), UNK_TOKEN) for i in ids if int(i) != PAD_ID]

    def to_dict(self) -> Dict:
        words = [self.id_to_word[i] for i in range(2, len(self))]
        return {"pad_id": PAD_ID, "unk_id": UNK_ID, "words": words}

    @classmethod
    def from_dict(cls, payload: Dict) -> "Vocabulary":
        return cls(payload["words"])

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as file:
            json.dump(self.to_dict(), file, ensure_ascii=False, indent=1)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        try:
            with Path(path).open("r", encoding="utf-8") as file:
                return cls.from_dict(json.load(file))
        except (KeyError, TypeError, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"bad vocabulary file ({exc})", path=str(path)) from exc

    def __str__(self) -> str:
        return f"Vocabulary(V={self.content_size})"

    def __repr__(self) -> str:
        return self.__str__()


def build_vocabulary(documents: List[Document], min_count: int = 1) -> Vocabulary:
    """
    코퍼스에서 어휘 사전 만들기

    Args:
        documents: 문서 리스트
        min_count: 포함할 최소 등장 횟수

    Returns:
        Vocabulary: 빈도 내림차순(동률은 첫 등장 순서)으로 id가 매겨진 사전
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts = count_tokens(documents)
    if not counts:
        raise CorpusError("documents contain no tokens")
    words = [word for word, count in ranked_counts(counts) if count >= min_count]
    if not words:
        raise CorpusError(f"no token meets min_count={min_count}")
    vocab = Vocabulary(words)
    logger.info("vocabulary built: V=%d (min_count=%d)", vocab.content_size, min_count)
    return vocab


def frequency_table(documents: List[Document], top_k: int = 100) -> FrequencyTable:
    """
    최빈 단어 표 만들기

    Args:
        documents: 문서 리스트
        top_k: 남길 항목 수

    Returns:
        FrequencyTable: 상위 top_k 항목 (어휘가 작으면 그보다 적음)
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    counts = count_tokens(documents)
    total = sum(counts.values())
    entries = [
        FrequencyEntry(word, count, 100.0 * count / total)
        for word, count in ranked_counts(counts)[:top_k]
    ]
    return FrequencyTable(entries=entries, total_tokens=total)


def write_frequency_csv(table: FrequencyTable, path: Union[str, Path]) -> None:
    """rank,word,count,distribution_pct 형식으로 저장"""
    with Path(path).open("w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(["rank", "word", "count", "distribution_pct"])
        for rank, entry in enumerate(table.entries, start=1):
            writer.writerow([rank, entry.word, entry.count, f"{entry.distribution:.2f}"])


def encode(tokens: List[str], vocab: Vocabulary, length: int = DEFAULT_SEQUENCE_LENGTH) -> EncodedSequence:
    """
    토큰을 고정 길이 id 배열로 변환 (뒤쪽 패딩, 뒤쪽 자르기)

    Args:
        tokens: 토큰 리스트
        vocab: 어휘 사전
        length: 고정 길이 L

    Returns:
        EncodedSequence: ids, mask, 실제 토큰 수
    """
    if length < 1:
        raise ValueError(f"sequence length must be >= 1, got {length}")
    kept = tokens[:length]
    ids = np.full(length, PAD_ID, dtype=np.int64)
    ids[:len(kept)] = [vocab.lookup(token) for token in kept]
    mask = np.zeros(length, dtype=bool)
    mask[:len(kept)] = True
    return EncodedSequence(ids=ids, mask=mask, length=len(kept))


def encode_text(text: str, vocab: Vocabulary, length: int = DEFAULT_SEQUENCE_LENGTH) -> EncodedSequence:
    return encode(tokenize(text), vocab, length)


def parse_label(value, path: Optional[str] = None, line: Optional[int] = None) -> Label:
    """0/1 또는 클래스 이름을 Label로 변환"""
    if isinstance(value, bool):
        raise CorpusError(f"invalid label {value!r}", path=path, line=line)
    normalized = str(value).strip().lower()
    if normalized in ("1", Label.SARCASTIC.name.lower()):
        return Label.SARCASTIC
    if normalized in ("0", Label.NON_SARCASTIC.name.lower()):
        return Label.NON_SARCASTIC
    raise CorpusError(f"invalid label {value!r}", path=path, line=line)


def _parse_id(value, path: str, line: int) -> int:
    try:
        return int(str(value).strip())
    except ValueError:
        raise CorpusError(f"invalid id {value!r}", path=path, line=line) from None


def _text_lines(path: Path) -> Iterator[Tuple[int, str]]:
    """
    줄 번호와 UTF-8로 디코딩한 줄 (줄바꿈 포함)

    디코딩할 수 없는 줄은 그 줄 번호로 CorpusError를 낸다.
    """
    with path.open("rb") as file:
        for line_number, raw in enumerate(file, start=1):
            try:
                yield line_number, raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CorpusError(f"not valid UTF-8 text (byte {exc.start} of the line)",
                                  path=str(path), line=line_number) from None


def _read_tsv(path: Path) -> Iterable[Tuple[int, object, str, object]]:
    for line_number, line in _text_lines(path):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        if line_number == 1 and tuple(line.split("\t")) == LABELED_HEADER:
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2 or "\t" not in parts[1]:
            raise CorpusError("expected 3 tab-separated fields", path=str(path), line=line_number)
        text, label = parts[1].rsplit("\t", 1)
        yield line_number, parts[0], text, label


def _read_csv(path: Path) -> Iterable[Tuple[int, object, str, object]]:
    reader = csv.reader(line for _, line in _text_lines(path))
    try:
        header = next(reader)
    except StopIteration:
        return
    if tuple(cell.strip() for cell in header) != LABELED_HEADER:
        raise CorpusError("CSV header must be id,text,label", path=str(path), line=1)
    for row in reader:
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != 3:
            raise CorpusError(f"expected 3 fields, got {len(row)}", path=str(path), line=reader.line_num)
        yield reader.line_num, row[0], row[1], row[2]


def _read_json_lines(path: Path) -> Iterable[Tuple[int, object, str, object]]:
    for line_number, line in _text_lines(path):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            fields = record["id"], str(record["text"]), record["label"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorpusError(f"bad JSON record ({exc})", path=str(path), line=line_number) from None
        yield (line_number, *fields)


_READERS = {
    DatasetFormat.TSV: _read_tsv,
    DatasetFormat.CSV: _read_csv,
    DatasetFormat.JSON_LINES: _read_json_lines,
}


def load_labeled_dataset(path: Union[str, Path], format: DatasetFormat = DatasetFormat.TSV) -> List[LabeledExample]:
    """
    라벨이 달린 데이터셋 읽기

    Args:
        path: 파일 경로
        format: tsv, csv, json_lines 중 하나

    Returns:
        List[LabeledExample]: 파일 순서대로의 예제 (빈 텍스트는 제외)
    """
    path = Path(path)
    if not path.is_file():
        raise DataError("file not found", path=str(path))
    examples = []
    seen_ids = set()
    for line_number, raw_id, text, raw_label in _READERS[DatasetFormat(format)](path):
        doc_id = _parse_id(raw_id, str(path), line_number)
        label = parse_label(raw_label, str(path), line_number)
        if doc_id in seen_ids:
            raise CorpusError(f"duplicate id {doc_id}", path=str(path), line=line_number)
        seen_ids.add(doc_id)
        if not text.strip():
            continue
        examples.append(LabeledExample(Document(doc_id, text.strip(), Source.LABELED_DIALOGUE), label))
    logger.info("loaded %d labeled examples from %s", len(examples), path)
    return examples


def load_plain_text(path: Union[str, Path]) -> List[Document]:
    """
    일반 텍스트 읽기 (비어있지 않은 줄 하나가 문서 하나)

    Args:
        path: UTF-8 텍스트 파일

    Returns:
        List[Document]: source가 plain_literature인 문서들
    """
    documents = []
    for _, line in _text_lines(Path(path)):
        text = line.strip()
        if text:
            documents.append(Document(len(documents), text, Source.PLAIN_LITERATURE))
    logger.info("loaded %d plain-text documents from %s", len(documents), path)
    return documents


def load_labels(path: Union[str, Path]) -> List[Label]:
    """한 줄에 라벨 하나인 외부 라벨 파일 읽기"""
    labels = []
    for line_number, line in _text_lines(Path(path)):
        if line.strip():
            labels.append(parse_label(line, str(path), line_number))
    return labels


def attach_labels(documents: List[Document], labels: List[Label]) -> List[LabeledExample]:
    """문서와 외부 라벨을 순서대로 짝짓기"""
    if len(documents) != len(labels):
        raise CorpusError(f"{len(documents)} documents but {len(labels)} labels")
    return [LabeledExample(doc, label) for doc, label in zip(documents, labels)]


def infer_format(path: Union[str, Path]) -> Optional[DatasetFormat]:
    """확장자로 형식 추정 (.txt 등 라벨 없는 텍스트는 None)"""
    suffix = Path(path).suffix.lower()
    if suffix == ".tsv":
        return DatasetFormat.TSV
    if suffix == ".csv":
        return DatasetFormat.CSV
    if suffix in (".jsonl", ".json"):
        return DatasetFormat.JSON_LINES
    return None


def parse_ratio(value: Union[str, float, Fraction]) -> Fraction:
    """'3:2' 같은 train:test 비율이나 분수를 train 비율로 변환"""
    if isinstance(value, str) and ":" in value:
        train, test = (int(part) for part in value.split(":", 1))
        if train <= 0 or test <= 0:
            raise ValueError(f"invalid ratio {value!r}")
        return Fraction(train, train + test)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10 ** 6)
    return Fraction(value)


def train_size(n: int, train_fraction: Fraction) -> int:
    """round(train_fraction·n), 0.5는 올림"""
    return math.floor(Fraction(train_fraction) * n + Fraction(1, 2))


def make_folds(n: int, k: int = 5, train_fraction: Union[str, float, Fraction] = Fraction(3, 5),
               seed: int = 0) -> SplitPlan:
    """
    k번의 독립적인 시드 셔플로 train/test 분할 만들기

    Args:
        n: 예제 수
        k: 폴드 수
        train_fraction: train 비율 (기본 3:2)
        seed: 시드

    Returns:
        SplitPlan: 폴드별 (train 인덱스, test 인덱스)
    """
    fraction = parse_ratio(train_fraction)
    if n < 2:
        raise ValueError(f"need at least 2 examples to split, got {n}")
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if not 0 < fraction < 1:
        raise ValueError(f"train fraction must be in (0, 1), got {fraction}")
    size = train_size(n, fraction)
    if size < 1 or size >= n:
        raise ValueError(f"split of {n} examples at {fraction} leaves an empty side")

    root = RngStream(seed)
    folds = []
    for fold in range(k):
        order = root.substream(fold).permutation(n)
        train = sorted(int(i) for i in order[:size])
        test = sorted(int(i) for i in order[size:])
        folds.append((train, test))
    return SplitPlan(folds=folds, seed=seed, ratio=fraction)


def corpus_summary(documents: List[Document], labels: Optional[List[Label]] = None) -> CorpusSummary:
    """문서 수, 토큰 수, 어휘 크기, 문서 길이 통계"""
    lengths = [len(tokenize(doc.text)) for doc in documents]
    counts = count_tokens(documents)
    class_counts = {}
    if labels is not None:
        tally = Counter(labels)
        class_counts = {label.name.lower(): tally.get(label, 0) for label in Label}
    return CorpusSummary(
        documents=len(documents),
        tokens=sum(lengths),
        vocabulary=len(counts),
        min_length=min(lengths) if lengths else 0,
        max_length=max(lengths) if lengths else 0,
        mean_length=(sum(lengths) / len(lengths)) if lengths else 0.0,
        class_counts=class_counts,
    )


if __name__ == "__main__":
    # 데모
    docs = [Document(0, "Oh, I really know!"), Document(1, "Oh yeah, I don't know.")]
    print(tokenize(docs[0].text))
    vocab = build_vocabulary(docs)
    print(vocab, vocab.word_to_id)
    for entry in frequency_table(docs, 5).entries:
        print(f"{entry.word:<8} {entry.count:>3} {entry.distribution:6.2f}")
    print(encode(tokenize(docs[1].text), vocab, 8))
    print(make_folds(5, 2, "3:2", seed=0))
