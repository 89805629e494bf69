#!/usr/bin/env python3
"""
pLSTM 메인 실행 파일
"""

import sys

from plstm.cli import main

if __name__ == "__main__":
    if len(sys.argv) == 1:
        print("pLSTM 반어 탐지기 🎭")
        print("명령:")
        print("  stats     : 단어 빈도 표와 코퍼스 요약")
        print("  train     : 학습 후 체크포인트 저장")
        print("  eval      : 브랜치별 분류 리포트")
        print("  benchmark : 5-fold 3:2 교차 학습 + 전체 코퍼스 평가")
        print("  summary   : 체크포인트의 층 구성 출력")
        print()
        print("예) python main.py train --data data/synthetic_train.tsv --config data/small.yaml")
        sys.exit(0)
    sys.exit(main())
