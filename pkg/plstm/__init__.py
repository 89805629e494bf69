"""
pLSTM: 네 개의 병렬 양방향 LSTM 브랜치로 대사의 반어(sarcasm) 여부를 판별한다
"""

__version__ = "0.1.0"
