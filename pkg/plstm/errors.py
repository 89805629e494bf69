from typing import Optional


class PlstmError(Exception):
    """pLSTM 패키지의 모든 예외의 기반 클래스"""


class ShapeError(PlstmError, ValueError):
    """행렬/벡터 차원이 맞지 않을 때"""


class ConfigError(PlstmError, ValueError):
    """설정 값이 유효하지 않을 때 (CLI 종료 코드 3)"""


class DataError(PlstmError):
    """
    데이터/입출력 오류 (CLI 종료 코드 2)

    Args:
        message: 오류 메시지
        path: 문제가 된 파일 경로
        line: 문제가 된 줄 번호 (1부터 시작)
    """

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.path = path
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        location = ""
        if self.path is not None:
            location = str(self.path)
            if self.line is not None:
                location += f":{self.line}"
            location += ": "
        elif self.line is not None:
            location = f"line {self.line}: "
        return location + self.message


class CorpusError(DataError):
    """코퍼스 파싱/라벨 오류"""


class CheckpointError(DataError):
    """체크포인트 magic/버전/길이 불일치"""


class NumericError(PlstmError, ValueError):
    """NaN/Inf 같은 유한하지 않은 값이 검사 모드에서 발견될 때"""
