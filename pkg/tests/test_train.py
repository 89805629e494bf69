import logging
from unittest.mock import patch

import numpy as np
import numpy.testing as npt
import pytest

from plstm.config import TrainConfig
from plstm.corpus import Label, Vocabulary, build_vocabulary, encode_text, load_labeled_dataset
from plstm.errors import ConfigError, ShapeError
from plstm.model import BRANCH_ORDER, init_model
from plstm.tensor import ActivationKind, RngStream
from plstm.train import (AdamState, BranchEpoch, EncodedExample, EpochLog, accuracy_percent, adam_step,
                         cadence_table, clip_by_global_norm, encode_examples, epoch_metrics, shuffle_order, train,
                         write_epoch_csv)

SMALL = dict(hidden=4, embedding_dim=6, sequence_length=10, verbose=0)


@pytest.fixture
def synthetic(data_dir):
    """합성 학습 세트 (L=10으로 인코딩)와 어휘"""
    examples = load_labeled_dataset(data_dir / "synthetic_train.tsv")
    vocab = build_vocabulary([e.doc for e in examples])
    return encode_examples(examples, vocab, 10), vocab


def _model(vocab, config: TrainConfig):
    return init_model(len(vocab), config.embedding_dim, config.hidden, config.seed, config.sequence_length)


class TestAdam:
    """Adam 업데이트 테스트"""

    def test_zero_gradient_leaves_parameters_unchanged(self):
        """기울기가 0이면 파라미터가 비트 단위로 그대로"""
        params = {"w": np.array([[0.3, -1.2], [5.0, 0.0]])}
        before = params["w"].copy()
        adam_step(AdamState(), params, {"w": np.zeros((2, 2))})
        assert np.array_equal(params["w"], before)

    def test_scalar_hand_check(self):
        """θ=1, g=4, lr=0.01 → 0.99"""
        # Given
        state = AdamState(learning_rate=0.01)
        params = {"theta": np.array([1.0])}

        # When
        adam_step(state, params, {"theta": np.array([4.0])})

        # Then
        assert abs(params["theta"][0] - 0.99) <= 1e-6
        assert state.t == 1
        npt.assert_allclose(state.m["theta"], [0.4])
        npt.assert_allclose(state.v["theta"], [0.016])

    @pytest.mark.parametrize("gradient", [1e-3, 1.0, 1e3])
    def test_first_step_magnitude_is_learning_rate(self, gradient):
        """첫 스텝 크기는 |g|와 무관하게 lr에 가까움"""
        params = {"theta": np.array([0.0])}
        adam_step(AdamState(learning_rate=0.01), params, {"theta": np.array([gradient])})
        assert abs(abs(params["theta"][0]) - 0.01) <= 1e-6

    def test_second_moment_stays_non_negative(self):
        rng = RngStream(0)
        state = AdamState()
        params = {"w": rng.uniform(-1, 1, (3, 3))}
        for _ in range(50):
            adam_step(state, params, {"w": rng.uniform(-10, 10, (3, 3))})
            assert np.all(state.v["w"] >= 0.0)
        assert state.t == 50

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step(AdamState(), {"w": np.zeros(3)}, {"w": np.zeros(4)})
        with pytest.raises(ShapeError):
            adam_step(AdamState(), {"w": np.zeros(3)}, {})


class TestHelpers:
    """학습 보조 함수 테스트"""

    def test_accuracy_percent(self):
        assert accuracy_percent([1, 0, 1], [1, 0, 1]) == 100.0
        assert accuracy_percent([1, 1], [1, 0]) == 50.0
        with pytest.raises(ValueError):
            accuracy_percent([], [])

    def test_clip_by_global_norm(self):
        """전역 노름이 max_norm을 넘으면 같은 비율로 줄어드는지 테스트"""
        grads = {"a": np.array([3.0]), "b": np.array([0.0])}
        clipped, dx = clip_by_global_norm(grads, np.array([4.0]), 1.0)
        npt.assert_allclose(clipped["a"], [0.6])
        npt.assert_allclose(dx, [0.8])
        same, _ = clip_by_global_norm(grads, np.array([4.0]), 0.0)
        assert same is grads

    def test_shuffle_order_is_pure(self):
        """에폭 순서는 (seed, epoch)만의 함수"""
        assert np.array_equal(shuffle_order(3, 7, 20), shuffle_order(3, 7, 20))
        assert not np.array_equal(shuffle_order(3, 7, 20), shuffle_order(3, 8, 20))
        assert sorted(shuffle_order(0, 1, 10).tolist()) == list(range(10))

    def test_cadence_table(self):
        """100 에폭마다, 그리고 마지막 에폭의 정확도 열"""
        logs = []
        for epoch in range(1, 251):
            log = EpochLog(epoch)
            for kind in BRANCH_ORDER:
                log.per_branch[kind] = BranchEpoch(loss=0.1, accuracy=epoch / 250 * 100)
            logs.append(log)

        table = cadence_table(logs)

        lines = table.splitlines()
        assert "S/NS 100" in lines[0] and "S/NS 200" in lines[0] and "S/NS 250" in lines[0]
        assert "S/NS 1 " not in lines[0]
        assert lines[1].startswith("pLSTM + softmax")
        assert lines[1].split()[-1] == "100.00"
        assert cadence_table([]) == ""

    def test_epoch_csv(self, tmp_path):
        """seconds 열은 record_time일 때만 채워지는지 테스트"""
        log = EpochLog(1, {kind: BranchEpoch(0.5, 75.0) for kind in BRANCH_ORDER}, seconds=1.25)
        path = tmp_path / "epochs.csv"

        write_epoch_csv([log], path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "epoch,branch,loss,accuracy,seconds"
        assert lines[1] == "1,softmax,0.500000,75.00,"

        write_epoch_csv([log], path, record_time=True)
        assert path.read_text(encoding="utf-8").splitlines()[4] == "1,tanh,0.500000,75.00,1.250"


class TestEpochMetrics:
    """브랜치별 정확도 테스트"""

    def test_random_model_on_balanced_set(self):
        """무작위 모델은 균형 잡힌 1000개에서 40~60%"""
        # Given
        vocab = Vocabulary([f"w{i}" for i in range(20)])
        rng = RngStream(5)
        examples = []
        for index in range(1000):
            words = " ".join(f"w{int(i)}" for i in rng.generator.integers(0, 20, 6))
            examples.append(EncodedExample(encode_text(words, vocab, 8), Label(index % 2)))
        model = init_model(len(vocab), 4, 3, seed=1, sequence_length=8)

        # When
        metrics = epoch_metrics(model, examples)

        # Then
        assert list(metrics) == list(BRANCH_ORDER)
        for accuracy in metrics.values():
            assert 40.0 <= accuracy <= 60.0

    def test_empty_set(self):
        model = init_model(5, 2, 2, sequence_length=4)
        with pytest.raises(ValueError):
            epoch_metrics(model, [])


class TestTrain:
    """학습 루프 테스트"""

    def test_one_epoch_gives_one_log(self, synthetic):
        encoded, vocab = synthetic
        config = TrainConfig(epochs=1, **SMALL)
        model, logs = train(_model(vocab, config), encoded, config)
        assert len(logs) == 1
        assert logs[0].epoch == 1
        assert list(logs[0].per_branch) == list(BRANCH_ORDER)
        for result in logs[0].per_branch.values():
            assert 0.0 <= result.accuracy <= 100.0

    def test_zero_epochs_rejected(self, synthetic):
        encoded, vocab = synthetic
        config = TrainConfig(epochs=0, **SMALL)
        with pytest.raises(ConfigError):
            train(init_model(len(vocab), 6, 4, sequence_length=10), encoded, config)

    def test_empty_dataset(self, synthetic):
        _, vocab = synthetic
        config = TrainConfig(epochs=1, **SMALL)
        with pytest.raises(ValueError):
            train(_model(vocab, config), [], config)

    def test_length_mismatch(self, synthetic):
        encoded, vocab = synthetic
        config = TrainConfig(epochs=1, **SMALL)
        model = init_model(len(vocab), 6, 4, sequence_length=12)
        with pytest.raises(ShapeError):
            train(model, encoded, config)

    def test_single_class_warns(self, synthetic, caplog):
        """한 클래스만 있으면 경고"""
        encoded, vocab = synthetic
        config = TrainConfig(epochs=1, **SMALL)
        only_sarcastic = [e for e in encoded if e.label is Label.SARCASTIC]
        with caplog.at_level(logging.WARNING, logger="plstm.train"):
            train(_model(vocab, config), only_sarcastic, config)
        assert "single class" in caplog.text

    def test_epoch_seconds_use_the_clock(self, synthetic, tmp_path):
        """에폭 시간은 perf_counter 차이이고, record_time일 때만 CSV에 기록"""
        # Given
        encoded, vocab = synthetic
        config = TrainConfig(epochs=2, **SMALL)

        # When
        with patch("plstm.train.time") as clock:
            clock.perf_counter.side_effect = [10.0, 11.5, 20.0, 20.25]
            _, logs = train(_model(vocab, config), encoded, config)
        write_epoch_csv(logs, tmp_path / "timed.csv", record_time=True)

        # Then
        assert [log.seconds for log in logs] == [1.5, 0.25]
        rows = (tmp_path / "timed.csv").read_text(encoding="utf-8").splitlines()
        assert rows[1].endswith(",1.500")
        assert rows[-1].endswith(",0.250")

    def test_deterministic(self, synthetic):
        """같은 설정과 시드로 두 번 학습하면 기록과 파라미터가 비트 단위로 같음"""
        encoded, vocab = synthetic
        config = TrainConfig(epochs=3, batch_size=8, **SMALL)

        first_model, first_logs = train(_model(vocab, config), encoded, config)
        second_model, second_logs = train(_model(vocab, config), encoded, config)

        assert [(l.epoch, l.per_branch) for l in first_logs] == [(l.epoch, l.per_branch) for l in second_logs]
        for name, block in first_model.parameters().items():
            assert np.array_equal(block, second_model.parameters()[name])

    def test_parallel_matches_single_task(self, synthetic):
        """병렬 모드도 결과가 같음"""
        encoded, vocab = synthetic
        single = TrainConfig(epochs=2, batch_size=8, **SMALL)
        parallel = TrainConfig(epochs=2, batch_size=8, parallel=True, **SMALL)

        single_model, single_logs = train(_model(vocab, single), encoded, single)
        parallel_model, parallel_logs = train(_model(vocab, parallel), encoded, parallel)

        assert [l.per_branch for l in single_logs] == [l.per_branch for l in parallel_logs]
        for name, block in single_model.parameters().items():
            assert np.array_equal(block, parallel_model.parameters()[name])

    def test_frozen_branches_do_not_touch_others(self, synthetic):
        """relu/tanh 학습을 끄면 그 파라미터가 무엇이든 softmax 궤적이 같음"""
        # Given
        encoded, vocab = synthetic
        config = TrainConfig(epochs=2, batch_size=16, trainable_branches=["softmax", "sigmoid"], **SMALL)
        plain = _model(vocab, config)
        disturbed = _model(vocab, config)
        for kind in (ActivationKind.RELU, ActivationKind.TANH):
            for block in disturbed.branches[kind].parameters().values():
                block += 0.25
        frozen_before = {name: block.copy() for name, block in plain.branches[ActivationKind.RELU].parameters().items()}

        # When
        plain, plain_logs = train(plain, encoded, config)
        disturbed, disturbed_logs = train(disturbed, encoded, config)

        # Then
        for a, b in zip(plain_logs, disturbed_logs):
            assert a.per_branch[ActivationKind.SOFTMAX] == b.per_branch[ActivationKind.SOFTMAX]
        for name, block in plain.branches[ActivationKind.SOFTMAX].parameters().items():
            assert np.array_equal(block, disturbed.branches[ActivationKind.SOFTMAX].parameters()[name])
        assert np.array_equal(plain.embedding, disturbed.embedding)
        for name, block in plain.branches[ActivationKind.RELU].parameters().items():
            assert np.array_equal(block, frozen_before[name])

    def test_pad_row_never_updated(self, synthetic):
        encoded, vocab = synthetic
        config = TrainConfig(epochs=2, **SMALL)
        model, _ = train(_model(vocab, config), encoded, config)
        npt.assert_array_equal(model.embedding[0], 0.0)

    def test_verbose_prints_cadence_lines(self, synthetic, capsys):
        """verbose 1이면 마지막 에폭의 브랜치별 줄을 출력"""
        encoded, vocab = synthetic
        config = TrainConfig(epochs=2, **dict(SMALL, verbose=1))
        train(_model(vocab, config), encoded, config)
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 4
        assert out[0].startswith("epoch    2, softmax")
        assert out[0].endswith("%")

    @pytest.mark.slow
    def test_overfits_synthetic_corpus(self, synthetic):
        """합성 32개, hidden 16, 500 에폭 → softmax ≥ 95%, sigmoid ≥ 90%"""
        # Given
        encoded, vocab = synthetic
        config = TrainConfig(epochs=500, hidden=16, embedding_dim=16, sequence_length=10, verbose=0)

        # When
        _, logs = train(_model(vocab, config), encoded, config)

        # Then
        final = logs[-1].per_branch
        assert final[ActivationKind.SOFTMAX].accuracy >= 95.0
        assert final[ActivationKind.SIGMOID].accuracy >= 90.0
        assert final[ActivationKind.SOFTMAX].loss < logs[0].per_branch[ActivationKind.SOFTMAX].loss
