import numpy as np
import pytest

from core.errors import DataError, EmptyClassError
from core.folds import FoldAssignment, split_patches
from core.fsconv import (TopModel, FreezeDepth, build_fsconv, train_grader, predict_patches, build_cribriform,
                         cribriform_config, train_cribriform, predict_cribriform, freeze_depth_sweep,
                         cross_validate, compare_top_models, cross_validate_freeze)
from core.grades import Grade
from core.losses import class_weights
from core.metrics import roc_auc
from core.trainer import TrainConfig

SMALL_FILTERS = (4, 8, 8)
QUICK = dict(epochs=2, batch_size=8, learning_rate=0.01)


@pytest.fixture
def trained_grader(texture_patches):
    net = build_fsconv("GMP", input_side=16, filters=SMALL_FILTERS, seed=3)
    train_grader(net, texture_patches(n=4), config=TrainConfig(**QUICK))
    return net


class TestArchitecture:
    def test_layer_names(self):
        names = [layer.name for layer in build_fsconv("GMP_FC", input_side=16, filters=SMALL_FILTERS).layers]
        assert names == ["Conv_1", "ReLU_1", "Max-Pooling_1", "Conv_2", "ReLU_2", "Max-Pooling_2",
                         "Conv_3", "ReLU_3", "Max-Pooling_3", "GMP", "FC_1", "ReLU_FC", "Dropout_1",
                         "Output", "Softmax"]

    @pytest.mark.parametrize("top", list(TopModel))
    def test_every_top_outputs_a_distribution(self, top, rng):
        net = build_fsconv(top, input_side=16, filters=SMALL_FILTERS)
        out = net.predict(rng.random((3, 16, 16, 3)))
        assert out.shape == (3, 4)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, rtol=1e-5)

    def test_freeze_depth_names(self):
        assert [d.layer_name for d in FreezeDepth] == ["Conv_1", "Conv_2", "Conv_3"]


class TestGrader:
    def test_class_weights_follow_training_counts(self, texture_patches):
        patches = texture_patches(n=4) + texture_patches(n=2, grades=(Grade.GG5,), seed=1)
        net = build_fsconv("GMP", input_side=16, filters=SMALL_FILTERS)
        result = train_grader(net, patches, config=TrainConfig(**QUICK))
        np.testing.assert_allclose(result.class_weights, class_weights([4, 4, 4, 6]))
        assert net.trained
        assert len(result.history) == 2

    def test_missing_grade_is_named(self, texture_patches):
        patches = texture_patches(n=3, grades=(Grade.NC, Grade.GG3, Grade.GG4))
        net = build_fsconv("GMP", input_side=16, filters=SMALL_FILTERS)
        with pytest.raises(EmptyClassError) as info:
            train_grader(net, patches, config=TrainConfig(**QUICK))
        assert info.value.class_name == "GG5"

    def test_fold_selection(self, texture_patches):
        patches = texture_patches(n=4, patients=2)
        net = build_fsconv("GMP", input_side=16, filters=SMALL_FILTERS)
        result = train_grader(net, patches, folds=[0], config=TrainConfig(**QUICK))
        np.testing.assert_allclose(result.class_weights, class_weights([2, 2, 2, 2]))

    def test_training_is_deterministic(self, texture_patches):
        patches = texture_patches(n=3)
        losses = []
        for _ in range(2):
            net = build_fsconv("GMP", input_side=16, filters=SMALL_FILTERS, seed=11)
            losses.append(train_grader(net, patches, config=TrainConfig(**QUICK, seed=4)).history)
        assert losses[0] == losses[1]

    @pytest.mark.slow
    def test_learns_separable_textures(self, texture_patches):
        patches = texture_patches(n=20, patients=4, seed=2)
        train, holdout = split_patches(patches, [0, 1, 2], [3])
        net = build_fsconv("GMP", input_side=16, filters=(8, 16, 16), seed=0)
        train_grader(net, train, config=TrainConfig(epochs=40, batch_size=8, learning_rate=0.05, augment=False))
        for split in (train, holdout):
            predicted = predict_patches(net, np.stack([p.pixels for p in split])).argmax(axis=1)
            labels = np.array([int(p.label) for p in split])
            assert np.mean(predicted == labels) >= 0.9


class TestCribriform:
    def test_untrained_grader_is_rejected(self, small_grader):
        with pytest.raises(DataError):
            build_cribriform(small_grader)

    def test_grader_without_gmp_is_rejected(self):
        net = build_fsconv("GAP", input_side=16, filters=SMALL_FILTERS)
        net.trained = True
        with pytest.raises(DataError):
            build_cribriform(net)

    def test_base_is_copied_and_frozen(self, trained_grader):
        net = build_cribriform(trained_grader, FreezeDepth.CONV2)
        for name in ("Conv_1", "Conv_2", "Conv_3"):
            np.testing.assert_array_equal(net.layer(name).params["W"], trained_grader.layer(name).params["W"])
        trainable = {layer.name for layer, _, _ in net.trainable_parameters()}
        assert trainable == {"Conv_3", "Output"}
        assert net.output_shape == (1,)
        assert net.layers[-1].kind == "sigmoid"

    def test_fine_tuning_leaves_frozen_layers_untouched(self, trained_grader, texture_patches):
        gg4 = texture_patches(n=6, grades=(Grade.GG4,))
        net = build_cribriform(trained_grader, "conv2")
        frozen = {(name, p): net.layer(name).params[p].copy() for name in ("Conv_1", "Conv_2") for p in ("W", "b")}
        conv3 = net.layer("Conv_3").params["W"].copy()
        train_cribriform(net, gg4, cribriform_config(epochs=2, batch_size=4))
        for (name, p), before in frozen.items():
            assert net.layer(name).params[p].tobytes() == before.tobytes()
        assert not np.array_equal(net.layer("Conv_3").params["W"], conv3)
        scores = predict_cribriform(net, np.stack([p.pixels for p in gg4]))
        assert np.all((scores > 0) & (scores < 1))

    def test_rejects_non_gg4_and_single_class(self, trained_grader, texture_patches):
        net = build_cribriform(trained_grader)
        with pytest.raises(DataError):
            train_cribriform(net, texture_patches(n=2, grades=(Grade.GG3,)))
        single = [p for p in texture_patches(n=4, grades=(Grade.GG4,)) if p.cribriform]
        with pytest.raises(DataError):
            train_cribriform(net, single)

    def test_freeze_depth_sweep(self, trained_grader, cribriform_patches):
        gg4 = cribriform_patches(n=16, patients=4)
        train, holdout = split_patches(gg4, [0, 1], [2, 3])
        results = freeze_depth_sweep(trained_grader, train, holdout, cribriform_config(epochs=1, batch_size=4))
        assert list(results) == ["conv1", "conv2", "conv3"]
        params = [results[d]["trainable_params"] for d in results]
        assert params[0] > params[1] > params[2]
        assert all(0.0 <= r["auc"] <= 1.0 for r in results.values())

    @pytest.mark.slow
    def test_detects_lumina_on_held_out_patches(self, trained_grader, cribriform_patches):
        gg4 = cribriform_patches(n=40, patients=4, seed=5)
        train, holdout = split_patches(gg4, [0, 1, 2], [3])
        net = build_cribriform(trained_grader, FreezeDepth.CONV2)
        train_cribriform(net, train, cribriform_config(epochs=40, batch_size=8, learning_rate=0.05))
        scores = predict_cribriform(net, np.stack([p.pixels for p in holdout]))
        labels = np.array([p.cribriform for p in holdout])
        assert labels.sum() == 5
        assert roc_auc(scores, labels).auc >= 0.95


def _three_patient_folds():
    return FoldAssignment({"p0": 0, "p1": 1, "p2": 2}, 3)


class TestCrossValidation:
    def test_rotates_the_validation_fold(self, texture_patches):
        patches = texture_patches(n=6, patients=3)
        frame = cross_validate(patches, _three_patient_folds(), TrainConfig(**QUICK), "GAP", test_fold=0,
                               filters=SMALL_FILTERS)
        per_fold = frame[~frame["fold"].isin(["mean", "std"])]
        assert per_fold["fold"].tolist() == [1, 2]
        assert per_fold["train_patches"].tolist() == [8, 8]
        assert per_fold["holdout_patches"].tolist() == [8, 8]
        assert set(frame["top"]) == {"GAP"}

        mean = frame[frame["fold"] == "mean"].iloc[0]
        std = frame[frame["fold"] == "std"].iloc[0]
        accuracy = per_fold["accuracy"].astype(float).to_numpy()
        assert mean["accuracy"] == pytest.approx(accuracy.mean())
        assert std["accuracy"] == pytest.approx(accuracy.std())
        assert all(0.0 <= a <= 1.0 for a in accuracy)

    def test_test_fold_never_trains(self, texture_patches):
        patches = texture_patches(n=6, patients=3)
        frame = cross_validate(patches, _three_patient_folds(), TrainConfig(**QUICK), test_fold=2,
                               filters=SMALL_FILTERS)
        per_fold = frame[~frame["fold"].isin(["mean", "std"])]
        assert per_fold["fold"].tolist() == [0, 1]
        assert per_fold["train_patches"].tolist() == [8, 8]

    def test_needs_two_validation_folds(self, texture_patches):
        patches = texture_patches(n=2, patients=2)
        with pytest.raises(DataError):
            cross_validate(patches, FoldAssignment({"p0": 0, "p1": 1}, 2), TrainConfig(**QUICK), test_fold=0,
                           filters=SMALL_FILTERS)

    def test_compares_top_models(self, texture_patches):
        patches = texture_patches(n=6, patients=3)
        frame = compare_top_models(patches, _three_patient_folds(), TrainConfig(**QUICK), tops=("GMP", "FC"),
                                   test_fold=0, filters=SMALL_FILTERS, fc_units=8)
        means = frame[frame["fold"] == "mean"]
        assert means["top"].tolist() == ["GMP", "FC"]
        assert len(frame) == 8

    def test_freeze_depths(self, trained_grader, cribriform_patches):
        gg4 = cribriform_patches(n=12, patients=3)
        frame = cross_validate_freeze(trained_grader, gg4, _three_patient_folds(),
                                      cribriform_config(epochs=1, batch_size=4), test_fold=0)
        assert frame["freeze"].drop_duplicates().tolist() == ["conv1", "conv2", "conv3"]
        per_fold = frame[~frame["fold"].isin(["mean", "std"])]
        assert len(per_fold) == 6
        assert per_fold["auc"].between(0.0, 1.0).all()
        assert (per_fold["holdout_patches"] == 4).all()
