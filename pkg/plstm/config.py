import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import yaml

from plstm.corpus import parse_ratio
from plstm.errors import ConfigError
from plstm.model import BRANCH_ORDER, Aggregation, GateMode

ENV_SEED = "PLSTM_SEED"
ENV_OUT_DIR = "PLSTM_OUT_DIR"


def _all_branches() -> List[str]:
    return [kind.value for kind in BRANCH_ORDER]


@dataclass
class TrainConfig:
    """학습 하이퍼파라미터"""
    epochs: int = 500
    batch_size: int = 32
    seed: int = 0
    verbose: int = 1
    hidden: int = 64
    embedding_dim: int = 400
    sequence_length: int = 65
    gate_mode: str = GateMode.STANDARD.value
    learning_rate: float = 0.01
    dropout_embed: float = 0.6
    dropout_recurrent: float = 0.4
    grad_clip: float = 5.0
    min_count: int = 1
    trainable_branches: List[str] = field(default_factory=_all_branches)
    parallel: bool = False
    record_time: bool = False

    def validate(self) -> "TrainConfig":
        """값 범위 검사 (잘못되면 ConfigError)"""
        _require(self.epochs >= 1, f"epochs must be >= 1, got {self.epochs}")
        _require(self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}")
        _require(self.seed >= 0, f"seed must be >= 0, got {self.seed}")
        _require(self.verbose in (0, 1, 2), f"verbose must be 0, 1 or 2, got {self.verbose}")
        _require(self.hidden >= 1, f"hidden must be >= 1, got {self.hidden}")
        _require(self.embedding_dim >= 1, f"embedding_dim must be >= 1, got {self.embedding_dim}")
        _require(self.sequence_length >= 1, f"sequence_length must be >= 1, got {self.sequence_length}")
        _require(self.learning_rate > 0, f"learning_rate must be > 0, got {self.learning_rate}")
        _require(0 <= self.dropout_embed < 1, f"dropout_embed must be in [0, 1), got {self.dropout_embed}")
        _require(0 <= self.dropout_recurrent < 1,
                 f"dropout_recurrent must be in [0, 1), got {self.dropout_recurrent}")
        _require(self.grad_clip >= 0, f"grad_clip must be >= 0 (0 disables), got {self.grad_clip}")
        _require(self.min_count >= 1, f"min_count must be >= 1, got {self.min_count}")
        _require(self.gate_mode in [mode.value for mode in GateMode], f"unknown gate_mode {self.gate_mode!r}")
        _require(len(self.trainable_branches) > 0, "trainable_branches must not be empty")
        for name in self.trainable_branches:
            _require(name in _all_branches(), f"unknown branch {name!r} in trainable_branches")
        return self

    @property
    def gate(self) -> GateMode:
        return GateMode(self.gate_mode)


@dataclass
class RunConfig:
    """한 번의 CLI 실행 설정 (TrainConfig + 경로와 평가 옵션)"""
    train: TrainConfig = field(default_factory=TrainConfig)
    data: Optional[str] = None
    out_dir: str = "runs"
    checkpoint: Optional[str] = None
    aggregation: str = Aggregation.PRIMARY_BRANCH.value
    folds: int = 5
    train_fraction: str = "3:2"
    workers: int = 1

    def validate(self) -> "RunConfig":
        self.train.validate()
        _require(self.aggregation in [a.value for a in Aggregation], f"unknown aggregation {self.aggregation!r}")
        _require(self.folds >= 1, f"folds must be >= 1, got {self.folds}")
        try:
            fraction = parse_ratio(self.train_fraction)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"invalid train_fraction {self.train_fraction!r}") from None
        # YAML은 따옴표 없는 3:2를 60진수 정수로 읽는다
        _require(0 < fraction < 1,
                 f"train_fraction must be a ratio like '3:2' (quoted in YAML), got {self.train_fraction!r}")
        _require(self.workers >= 1, f"workers must be >= 1, got {self.workers}")
        return self

    def to_dict(self) -> Dict:
        """평평한 매핑 (config.yaml로 저장되는 형태)"""
        result = asdict(self.train)
        for item in fields(self):
            if item.name != "train":
                result[item.name] = getattr(self, item.name)
        return result

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "RunConfig":
        train_keys = {item.name for item in fields(TrainConfig)}
        run_keys = {item.name for item in fields(cls)} - {"train"}
        unknown = sorted(set(mapping) - train_keys - run_keys)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        train_values = {key: value for key, value in mapping.items() if key in train_keys}
        run_values = {key: value for key, value in mapping.items() if key in run_keys}
        if "train_fraction" in run_values:
            run_values["train_fraction"] = str(run_values["train_fraction"])
        try:
            return cls(train=TrainConfig(**train_values), **run_values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def save(self, path: Union[str, Path]) -> None:
        with Path(path).open("w", encoding="utf-8") as file:
            yaml.safe_dump(self.to_dict(), file, sort_keys=True, default_flow_style=False)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping] = None,
                environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    설정 읽기: 기본값 < YAML 파일 < 환경 변수 < overrides (CLI 인자)

    Args:
        path: YAML 파일 경로 (없으면 기본값)
        overrides: 명시적으로 덮어쓸 값 (None 값은 무시)
        environ: 환경 변수 (기본 os.environ)

    Returns:
        RunConfig: 검증된 설정
    """
    mapping: Dict = {}
    if path is not None:
        try:
            with Path(path).open("r", encoding="utf-8") as file:
                loaded = yaml.safe_load(file)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except (yaml.YAMLError, UnicodeDecodeError) as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping")
        mapping.update(loaded)

    environ = os.environ if environ is None else environ
    if environ.get(ENV_SEED):
        try:
            mapping["seed"] = int(environ[ENV_SEED])
        except ValueError:
            raise ConfigError(f"{ENV_SEED} must be an integer") from None
    if environ.get(ENV_OUT_DIR):
        mapping["out_dir"] = environ[ENV_OUT_DIR]

    for key, value in (overrides or {}).items():
        if value is not None:
            mapping[key] = value
    try:
        return RunConfig.from_mapping(mapping).validate()
    except TypeError as exc:
        raise ConfigError(f"invalid config value ({exc})") from None
