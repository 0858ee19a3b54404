"""Tests for the scalar networks, their checkpoints and dataset augmentation."""
import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from drw_richards.errors import CheckpointError, ConfigurationError, ParameterError
from drw_richards.models import AugmentConfig, MlpSpec, ParticleScale, TrainConfig
from drw_richards.services.neural_map import (
    NeuralParticleMap,
    Normalization,
    augment,
    copies_for_target,
    describe,
    init_network,
    load_checkpoint,
    loss_gradients,
    mlp_forward,
    retrain,
    retrain_maps,
    save_checkpoint,
    split_indices,
    train,
    train_maps,
    training_rows,
)

SCALE = ParticleScale(particles_per_unit_head=1e10)


@pytest.fixture
def line_data():
    x = np.linspace(-1.0, 1.0, 200)
    return x, 3.0 * x


@pytest.fixture
def small_net():
    return init_network(MlpSpec(hidden_layers=[5, 3]), np.random.default_rng(1))


class TestNetwork:
    def test_output_shape_follows_input(self, small_net):
        assert mlp_forward(small_net, np.zeros((4, 2))).shape == (4, 2)
        assert small_net.layer_sizes == [1, 5, 3, 1]

    def test_normalization_round_trip(self):
        norm = Normalization.from_data(np.array([2.0, 6.0]))
        assert_allclose(norm.apply(np.array([2.0, 4.0, 6.0])), [-1.0, 0.0, 1.0])
        assert_allclose(norm.invert(norm.apply(np.array([3.3]))), [3.3])
        assert norm.bounds == (2.0, 6.0)

    def test_constant_data_keeps_unit_span(self):
        assert Normalization.from_data(np.array([5.0, 5.0])).half_span == 1.0

    def test_gradients_match_finite_differences(self, small_net):
        """Backpropagated weight gradients agree with central differences."""
        x = np.array([-0.7, -0.2, 0.4, 0.9])
        y = np.array([0.1, -0.3, 0.5, 0.2])
        _, grad_w, _ = loss_gradients(small_net, x, y)
        h = 1e-6
        for k, (i, j) in ((0, (0, 2)), (1, (3, 1)), (2, (2, 0))):
            original = small_net.weights[k][i, j]
            small_net.weights[k][i, j] = original + h
            up, _, _ = loss_gradients(small_net, x, y)
            small_net.weights[k][i, j] = original - h
            down, _, _ = loss_gradients(small_net, x, y)
            small_net.weights[k][i, j] = original
            assert (up - down) / (2 * h) == pytest.approx(grad_w[k][i, j], rel=1e-4, abs=1e-9)


class TestTraining:
    def test_fits_a_line(self, line_data):
        x, y = line_data
        result = train(x, y, MlpSpec(hidden_layers=[16]), TrainConfig(learning_rate=0.02, epochs=300, seed=2))
        assert not result.diverged
        assert result.epochs_run == 300
        assert result.history[-1] < 0.1 * result.history[0]
        assert result.validation_mse < 0.3

    def test_same_seed_same_weights(self, line_data):
        x, y = line_data
        config = TrainConfig(epochs=5, seed=11)
        first = train(x, y, MlpSpec(hidden_layers=[8]), config)
        second = train(x, y, MlpSpec(hidden_layers=[8]), config)
        for a, b in zip(first.network.weights, second.network.weights):
            assert np.array_equal(a, b)

    def test_history_lengths(self, line_data):
        x, y = line_data
        result = train(x, y, MlpSpec(hidden_layers=[4]), TrainConfig(epochs=3))
        assert len(result.history) == 4
        assert len(result.validation_history) == 3

    @pytest.mark.parametrize("x,y", [([], []), ([1.0, 2.0], [1.0]), ([1.0, np.nan], [1.0, 2.0])])
    def test_rejects_bad_data(self, x, y):
        with pytest.raises(ParameterError):
            train(x, y, MlpSpec(hidden_layers=[2]), TrainConfig(epochs=1))

    def test_divergence_restores_last_finite_weights(self, line_data):
        """A huge learning rate stops training instead of returning NaN weights."""
        x, y = line_data
        result = train(x, y, MlpSpec(hidden_layers=[16, 16]), TrainConfig(learning_rate=1e6, epochs=50))
        assert result.diverged
        assert all(np.all(np.isfinite(w)) for w in result.network.weights)

    def test_split_keeps_a_training_row(self):
        train_idx, val_idx = split_indices(1, 0.9, np.random.default_rng(0))
        assert train_idx.tolist() == [0]
        assert val_idx.size == 0


class TestCheckpoints:
    def _saved(self, tmp_path, small_net, name="net.npz"):
        meta = describe(small_net, "forward", SCALE, TrainConfig(), epochs_run=3, problem="celia_1d")
        return save_checkpoint(small_net, tmp_path / name, meta)

    def test_round_trip(self, tmp_path, small_net):
        path = self._saved(tmp_path, small_net)
        loaded = load_checkpoint(path)
        x = np.linspace(-1.0, 1.0, 7)
        assert_allclose(loaded(x), small_net(x))
        assert loaded.metadata.direction == "forward"
        assert loaded.metadata.problem == "celia_1d"
        assert len(loaded.metadata.train_config_digest) == 16

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.npz")

    def test_truncated_file(self, tmp_path, small_net):
        path = self._saved(tmp_path, small_net)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_tampered_weights(self, tmp_path, small_net):
        """Weights that no longer hash to the stored id are rejected."""
        meta = describe(small_net, "forward", SCALE)
        small_net.weights[0][0, 0] += 1.0
        path = save_checkpoint(small_net, tmp_path / "tampered.npz", meta)
        with pytest.raises(CheckpointError, match="does not match"):
            load_checkpoint(path)

    def test_metadata_required(self, tmp_path, small_net):
        with pytest.raises(CheckpointError):
            save_checkpoint(small_net, tmp_path / "bare.npz")

    def test_retrain_names_parent(self, tmp_path, small_net, line_data):
        path = self._saved(tmp_path, small_net)
        parent_id = load_checkpoint(path).metadata.checkpoint_id
        x, y = line_data
        result = retrain(path, x, y, TrainConfig(epochs=2))
        assert result.network.metadata.parent_id == parent_id
        assert result.network.metadata.checkpoint_id != parent_id
        assert result.network.norm_in == small_net.norm_in


class TestDatasets:
    @pytest.fixture
    def reference(self):
        psi = np.linspace(-1.0, -0.1, 6)
        return pd.DataFrame({
            "cell_id": np.arange(6),
            "time_index": 0,
            "psi": psi,
            "n_particles": -1e10 * psi,
            "converged_flag": [True, True, True, True, True, False],
        })

    def test_copies_for_target(self):
        assert copies_for_target(10, 3, 20) == [4, 3, 3]
        with pytest.raises(ParameterError):
            copies_for_target(10, 3, 5)

    def test_default_augmentation_size(self, reference):
        """Five sigmas with two copies each give eleven times the rows."""
        out = augment(reference)
        assert len(out) == 11 * len(reference)
        assert (out["augmented_sigma"].iloc[:6] == 0.0).all()
        assert_allclose(out["psi"].iloc[:6], reference["psi"])

    def test_target_rows(self, reference):
        out = augment(reference, AugmentConfig(sigma_list=[0.1, 0.2], target_rows=11))
        assert len(out) == 11
        assert out["augmented_sigma"].value_counts().to_dict() == {0.0: 6, 0.1: 3, 0.2: 2}

    def test_augmentation_is_seeded(self, reference):
        config = AugmentConfig(seed=4)
        pd.testing.assert_frame_equal(augment(reference, config), augment(reference, config))

    def test_training_rows_drop_flagged(self, reference):
        assert len(training_rows(reference)) == 5
        assert len(training_rows(reference, include_nonconverged=True)) == 6

    def test_training_rows_need_columns(self, reference):
        with pytest.raises(ConfigurationError):
            training_rows(reference.drop(columns=["n_particles"]))

    def test_train_maps_directions(self, reference):
        forward, inverse = train_maps(reference, MlpSpec(hidden_layers=[4]), TrainConfig(epochs=2), SCALE)
        assert forward.network.metadata.direction == "forward"
        assert inverse.network.metadata.direction == "inverse"
        maps = NeuralParticleMap(forward.network, inverse.network, SCALE)
        lo, hi = inverse.network.norm_in.bounds
        assert maps.count_out_of_range(np.array([lo - 1.0, 0.5 * (lo + hi), hi + 1.0])) == 2

    def test_retrain_maps_keeps_directions_and_parents(self, reference):
        forward, inverse = train_maps(reference, MlpSpec(hidden_layers=[4]), TrainConfig(epochs=2), SCALE)
        tuned_forward, tuned_inverse = retrain_maps((forward.network, inverse.network), reference,
                                                    TrainConfig(epochs=1), SCALE)
        assert tuned_forward.network.metadata.direction == "forward"
        assert tuned_inverse.network.metadata.direction == "inverse"
        assert tuned_forward.network.metadata.parent_id == forward.network.metadata.checkpoint_id
        assert tuned_inverse.network.metadata.parent_id == inverse.network.metadata.checkpoint_id
        assert tuned_inverse.network.norm_in == inverse.network.norm_in

    def test_slope_is_finite_inside_and_outside_range(self, reference):
        forward, inverse = train_maps(reference, MlpSpec(hidden_layers=[4]), TrainConfig(epochs=2), SCALE)
        maps = NeuralParticleMap(forward.network, inverse.network, SCALE)
        slopes = maps.slope(np.array([-5.0, -0.5, 3.0]))
        assert slopes.shape == (3,)
        assert np.all(np.isfinite(slopes))
        lo, hi = inverse.network.norm_in.bounds
        assert_allclose(maps.slope(np.array([lo - 10.0])), maps.slope(np.array([lo])))
