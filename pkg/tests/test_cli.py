import csv
import logging

import pytest

from conftest import preserved_root_logging
from plstm.cli import CHECKPOINT_NAME, CONFIG_NAME, EXIT_CONFIG, EXIT_DATA, EXIT_OK, VOCAB_NAME, main

TINY_YAML = """\
embedding_dim: 4
hidden: 3
sequence_length: 8
epochs: 3
batch_size: 8
verbose: 0
seed: 0
"""


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """환경 변수가 설정을 덮어쓰지 않도록"""
    monkeypatch.delenv("PLSTM_SEED", raising=False)
    monkeypatch.delenv("PLSTM_OUT_DIR", raising=False)


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY_YAML, encoding="utf-8")
    return path


def _train(data_dir, config, out, *extra):
    return main(["train", "--data", str(data_dir / "synthetic_train.tsv"), "--config", str(config),
                 "--out", str(out), *extra])


def _read_csv(path):
    with path.open(encoding="utf-8", newline="") as file:
        return list(csv.reader(file))


class TestStats:
    """stats 명령 테스트"""

    def test_frequency_table_matches_hand_count(self, data_dir, tmp_path, capsys):
        """세 줄 샘플의 빈도 표가 손으로 센 결과와 같음"""
        out = tmp_path / "frequency.csv"

        code = main(["stats", "--data", str(data_dir / "stats_sample.txt"), "--out", str(out)])

        assert code == EXIT_OK
        golden = (data_dir / "stats_sample_frequency.csv").read_text(encoding="utf-8")
        assert out.read_text(encoding="utf-8") == golden
        printed = capsys.readouterr().out
        assert "documents: 3" in printed
        assert "tokens: 13" in printed
        assert "vocabulary: 8" in printed

    def test_labeled_corpus_prints_class_balance(self, data_dir, tmp_path, capsys):
        code = main(["stats", "--data", str(data_dir / "synthetic_train.tsv"), "--out", str(tmp_path / "f.csv")])
        assert code == EXIT_OK
        assert "labels:" in capsys.readouterr().out

    def test_missing_file(self, tmp_path, capsys):
        """없는 파일은 종료 코드 2, 출력 파일 없음"""
        out = tmp_path / "frequency.csv"

        code = main(["stats", "--data", str(tmp_path / "nope.txt"), "--out", str(out)])

        assert code == EXIT_DATA
        assert not out.exists()
        assert capsys.readouterr().err.startswith("error: ")

    @pytest.mark.parametrize("top_k", ["0", "-3"])
    def test_non_positive_top_k_is_a_config_error(self, data_dir, tmp_path, capsys, top_k):
        out = tmp_path / "frequency.csv"

        code = main(["stats", "--data", str(data_dir / "stats_sample.txt"), "--top-k", top_k, "--out", str(out)])

        assert code == EXIT_CONFIG
        assert "--top-k" in capsys.readouterr().err
        assert not out.exists()

    def test_invalid_utf8_text(self, tmp_path, capsys):
        """UTF-8이 아닌 텍스트는 종료 코드 2와 줄 번호"""
        data = tmp_path / "latin.txt"
        data.write_bytes(b"plain line\ncaf\xe9 au lait\n")

        code = main(["stats", "--data", str(data), "--out", str(tmp_path / "frequency.csv")])

        assert code == EXIT_DATA
        assert f"{data}:2: not valid UTF-8" in capsys.readouterr().err


class TestTrain:
    """train 명령 테스트"""

    def test_writes_all_outputs(self, data_dir, tiny_config, tmp_path):
        out = tmp_path / "run"

        code = _train(data_dir, tiny_config, out)

        assert code == EXIT_OK
        for name in (CHECKPOINT_NAME, VOCAB_NAME, CONFIG_NAME, "epochs.csv", "summary.txt", "cadence.txt"):
            assert (out / name).is_file(), name
        rows = _read_csv(out / "epochs.csv")
        assert rows[0] == ["epoch", "branch", "loss", "accuracy", "seconds"]
        assert len(rows) == 1 + 3 * 4
        assert not list(out.glob(".*.tmp"))

    def test_same_seed_gives_identical_files(self, data_dir, tiny_config, tmp_path):
        """같은 시드로 두 번 학습하면 에폭 CSV와 체크포인트가 바이트 단위로 같음"""
        first, second = tmp_path / "a", tmp_path / "b"

        assert _train(data_dir, tiny_config, first) == EXIT_OK
        assert _train(data_dir, tiny_config, second) == EXIT_OK

        assert (first / "epochs.csv").read_bytes() == (second / "epochs.csv").read_bytes()
        assert (first / CHECKPOINT_NAME).read_bytes() == (second / CHECKPOINT_NAME).read_bytes()

    def test_verbose_prints_summary_and_cadence(self, data_dir, tiny_config, tmp_path, capsys):
        code = _train(data_dir, tiny_config, tmp_path / "run", "--verbose", "1")

        assert code == EXIT_OK
        printed = capsys.readouterr().out
        assert "Total params:" in printed
        assert "epoch    3, softmax, loss" in printed
        assert "S/NS 3" in printed
        assert "checkpoint:" in printed

    def test_zero_epochs_is_a_config_error(self, data_dir, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"

        code = _train(data_dir, tiny_config, out, "--epochs", "0")

        assert code == EXIT_CONFIG
        assert "epochs" in capsys.readouterr().err
        assert not out.exists()

    def test_root_logging_restored_after_run(self, data_dir, tiny_config, tmp_path):
        """CLI가 바꾼 루트 로거 핸들러는 블록을 벗어나면 원래대로"""
        root = logging.getLogger()
        before = (root.handlers[:], root.level)

        with preserved_root_logging():
            assert _train(data_dir, tiny_config, tmp_path / "run", "--verbose", "2") == EXIT_OK
            assert root.level == logging.DEBUG

        assert (root.handlers, root.level) == before

    def test_bad_config_file(self, data_dir, tmp_path):
        config = tmp_path / "bad.yaml"
        config.write_text("hiden: 3\n", encoding="utf-8")
        assert _train(data_dir, config, tmp_path / "run") == EXIT_CONFIG

    def test_plain_text_cannot_be_trained(self, data_dir, tiny_config, tmp_path):
        code = main(["train", "--data", str(data_dir / "stats_sample.txt"), "--config", str(tiny_config),
                     "--out", str(tmp_path / "run")])
        assert code == EXIT_DATA

    def test_bad_label_reports_line(self, tiny_config, tmp_path, capsys):
        data = tmp_path / "bad.tsv"
        data.write_text("id\ttext\tlabel\n1\toh great\t1\n2\tplain words\tmaybe\n", encoding="utf-8")

        code = main(["train", "--data", str(data), "--config", str(tiny_config), "--out", str(tmp_path / "run")])

        assert code == EXIT_DATA
        assert f"{data}:3:" in capsys.readouterr().err

    def test_invalid_utf8_dataset_reports_line(self, tiny_config, tmp_path, capsys):
        data = tmp_path / "bad.tsv"
        data.write_bytes(b"id\ttext\tlabel\n1\toh great\t1\n2\t\xff\xfe broken\t0\n")

        code = main(["train", "--data", str(data), "--config", str(tiny_config), "--out", str(tmp_path / "run")])

        assert code == EXIT_DATA
        assert f"{data}:3: not valid UTF-8" in capsys.readouterr().err
        assert not (tmp_path / "run").exists()


class TestEvalAndSummary:
    """eval, summary 명령 테스트"""

    def test_eval_matches_final_training_accuracy(self, data_dir, tiny_config, tmp_path, capsys):
        """학습 세트를 다시 평가하면 마지막 에폭 정확도와 같음"""
        # Given
        out = tmp_path / "run"
        assert _train(data_dir, tiny_config, out) == EXIT_OK
        final = {row[1]: float(row[3]) for row in _read_csv(out / "epochs.csv")[1:] if row[0] == "3"}

        # When
        code = main(["eval", "--checkpoint", str(out / CHECKPOINT_NAME),
                     "--data", str(data_dir / "synthetic_train.tsv")])

        # Then
        assert code == EXIT_OK
        rows = _read_csv(out / "report.csv")
        assert rows[0] == ["branch", "precision", "recall", "f1", "accuracy"]
        for branch, *_, accuracy in rows[1:]:
            assert float(accuracy) * 100 == pytest.approx(final[branch], abs=0.02)
        assert "pLSTM + softmax" in capsys.readouterr().out

    def test_truncated_checkpoint(self, data_dir, tiny_config, tmp_path, capsys):
        """잘린 체크포인트는 종료 코드 2와 bad checkpoint 메시지"""
        out = tmp_path / "run"
        assert _train(data_dir, tiny_config, out) == EXIT_OK
        checkpoint = out / CHECKPOINT_NAME
        checkpoint.write_bytes(checkpoint.read_bytes()[:-16])

        code = main(["eval", "--checkpoint", str(checkpoint), "--data", str(data_dir / "synthetic_train.tsv")])

        assert code == EXIT_DATA
        assert "bad checkpoint" in capsys.readouterr().err
        assert not (out / "report.csv").exists()

    def test_summary(self, data_dir, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        assert _train(data_dir, tiny_config, out) == EXIT_OK
        capsys.readouterr()

        code = main(["summary", "--checkpoint", str(out / CHECKPOINT_NAME)])

        assert code == EXIT_OK
        printed = capsys.readouterr().out
        assert "Total params:" in printed
        assert "tanh/lstm_forward" in printed


class TestBenchmark:
    """benchmark 명령 테스트"""

    def test_missing_corpus_is_skipped(self, data_dir, tiny_config, tmp_path, capsys):
        """없는 코퍼스는 skipped 줄로 남고 나머지는 계속 진행"""
        out = tmp_path / "bench"

        code = main(["benchmark", "--config", str(tiny_config), "--out", str(out), "--datasets",
                     f"dialogue={data_dir / 'bench_dialogue.tsv'}",
                     f"monologue={data_dir / 'bench_monologue.csv'}",
                     f"lost={tmp_path / 'lost.tsv'}"])

        assert code == EXIT_OK
        rows = _read_csv(out / "benchmark.csv")
        assert [row[0] for row in rows[1:]].count("dialogue") == 4
        assert [row[0] for row in rows[1:]].count("monologue") == 4
        assert rows[-1][0] == "lost"
        assert rows[-1][2].startswith("skipped:")
        assert (out / "benchmark.txt").is_file()
        assert (out / CONFIG_NAME).is_file()
        assert "Entire-corpus acc" in capsys.readouterr().out

    def test_all_missing_fails(self, tiny_config, tmp_path):
        code = main(["benchmark", "--config", str(tiny_config), "--out", str(tmp_path / "bench"),
                     "--datasets", f"a={tmp_path / 'a.tsv'}", f"b={tmp_path / 'b.tsv'}"])
        assert code == EXIT_DATA
