import logging
import sys
import os
from contextlib import contextmanager
from pathlib import Path

import pytest

# 프로젝트 루트 디렉토리를 Python path에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@contextmanager
def preserved_root_logging():
    """블록 안에서 바뀐 루트 로거의 핸들러와 레벨을 원래대로 되돌림"""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    try:
        yield root
    finally:
        for handler in root.handlers[:]:
            if handler not in handlers:
                root.removeHandler(handler)
                handler.close()
        for handler in handlers:
            if handler not in root.handlers:
                root.addHandler(handler)
        root.setLevel(level)


@pytest.fixture(autouse=True)
def restore_root_logging():
    """CLI의 setup_logging(force=True)이 남긴 루트 핸들러를 테스트가 끝나면 제거 (pytest 자신의 핸들러는 그대로)"""
    root = logging.getLogger()
    before, level = root.handlers[:], root.level
    yield
    for handler in root.handlers[:]:
        if handler not in before and not type(handler).__module__.startswith("_pytest"):
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)


@pytest.fixture
def data_dir() -> Path:
    """저장소에 포함된 데이터 디렉토리"""
    return DATA_DIR
