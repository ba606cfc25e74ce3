import numpy as np
import pytest

from d2nn.detection import default_layout
from d2nn.electronic import FC, make_net
from d2nn.fields import GridSpec
from d2nn.hybrid import (HybridTask, PerfectImagerTask, SensorSpec, Stage1Task,
                         default_sensor, sensor_adjoint, sensor_readout,
                         virtual_relaunch)
from d2nn.layers import PHASE_ONLY, RELU_NORM, build_model
from d2nn.training import DetectorContext, grad_check


@pytest.fixture
def grid_sensor(grid64):
    return grid64, default_sensor(grid64, 10)


class TestSensorSpec:
    def test_block(self):
        assert SensorSpec(10, 30).block == 3

    def test_rejects_indivisible(self):
        with pytest.raises(ValueError):
            SensorSpec(10, 35)

    def test_default_covered_region(self, grid64):
        # 53.3 * (64/200) / 0.53 ~ 32.2 samples, floored to a multiple of 10
        sensor = default_sensor(grid64, 10)
        assert sensor.covered_samples == 30

    def test_too_small_grid(self):
        with pytest.raises(ValueError):
            default_sensor(GridSpec(28, 28), 50)


class TestReadout:
    def test_uniform_intensity(self, grid_sensor):
        grid, sensor = grid_sensor
        pixels = sensor_readout(np.full(grid.shape, 3.0), sensor, grid)
        assert pixels.shape == (10, 10)
        assert np.allclose(pixels, 3.0)

    def test_block_average(self):
        grid = GridSpec(4, 4)
        sensor = SensorSpec(2, 4)
        intensity = np.arange(16, dtype=np.float64).reshape(4, 4)
        pixels = sensor_readout(intensity, sensor, grid)
        assert pixels[0, 0] == pytest.approx(np.mean([0, 1, 4, 5]))
        assert pixels[1, 1] == pytest.approx(np.mean([10, 11, 14, 15]))

    def test_batched(self, grid_sensor, rng):
        grid, sensor = grid_sensor
        batch = rng.random((3,) + grid.shape)
        out = sensor_readout(batch, sensor, grid)
        assert out.shape == (3, 10, 10)
        assert np.allclose(out[1], sensor_readout(batch[1], sensor, grid))

    def test_adjoint_of_readout(self, grid_sensor, rng):
        # <dP, readout(S)> == <adjoint(dP), S>
        grid, sensor = grid_sensor
        s = rng.random((2,) + grid.shape)
        dp = rng.random((2, 10, 10))
        lhs = np.sum(dp * sensor_readout(s, sensor, grid))
        rhs = np.sum(sensor_adjoint(dp, sensor, grid, (2,)) * s)
        assert lhs == pytest.approx(rhs)


class TestRelaunch:
    def test_amplitude_is_sqrt(self, grid_sensor):
        grid, sensor = grid_sensor
        pixels = np.full((10, 10), 4.0)
        v = virtual_relaunch(pixels, sensor, grid)
        covered = np.abs(v) > 0
        assert covered.sum() == sensor.covered_samples ** 2
        assert np.allclose(v[covered], 2.0)
        assert np.allclose(np.imag(v), 0.0)

    def test_rejects_negative(self, grid_sensor):
        grid, sensor = grid_sensor
        with pytest.raises(ValueError):
            virtual_relaunch(np.full((10, 10), -1.0), sensor, grid)

    def test_round_trip_identity(self, grid_sensor, rng):
        # readout of the relaunched field recovers the pixel values
        grid, sensor = grid_sensor
        pixels = rng.random((10, 10))
        v = virtual_relaunch(pixels, sensor, grid)
        back = sensor_readout(np.abs(v) ** 2, sensor, grid)
        assert np.allclose(back, pixels)


def _fd_check(task, images, labels, seed, n_probes=8, h=1e-5):
    loss, grads = task.loss_and_grads(images, labels)
    params = task.params()

    def loss_fn():
        task.set_params(params)
        return task.loss_and_grads(images, labels)[0]

    return grad_check(loss_fn, params, grads, np.random.default_rng(seed),
                      n_probes=n_probes, h=h)


@pytest.fixture
def small_setup(rng):
    grid = GridSpec(32, 32)
    model = build_model(grid, 2, 6.4, PHASE_ONLY, RELU_NORM)
    for layer in model.layers:
        layer.beta = rng.normal(size=grid.shape, scale=0.1) + 0.5
    sensor = default_sensor(grid, 5)
    images = rng.random((4, 28, 28)).astype(np.float32)
    labels = rng.integers(0, 10, size=4)
    return grid, model, sensor, images, labels


class TestStage1:
    def test_gradients_match_fd(self, small_setup):
        grid, model, sensor, images, labels = small_setup
        det = DetectorContext(default_layout(grid), grid)
        task = Stage1Task(model, sensor, det, "amplitude", dtype=np.complex128)
        assert _fd_check(task, images, labels, 3) < 1e-4

    def test_param_keys(self, small_setup):
        grid, model, sensor, images, labels = small_setup
        det = DetectorContext(default_layout(grid), grid)
        task = Stage1Task(model, sensor, det, "amplitude")
        keys = set(task.params())
        assert (0, "beta") in keys and (1, "beta") in keys
        assert ("virtual", "beta") in keys

    def test_predict_shape(self, small_setup):
        grid, model, sensor, images, labels = small_setup
        det = DetectorContext(default_layout(grid), grid)
        task = Stage1Task(model, sensor, det, "amplitude")
        assert task.predict(images).shape == (4,)


class TestHybridJoint:
    def test_gradients_match_fd(self, small_setup):
        grid, model, sensor, images, labels = small_setup
        net = make_net(FC, 5, rng=np.random.default_rng(2))
        task = HybridTask(model, sensor, net, "amplitude", dtype=np.complex128)
        assert _fd_check(task, images, labels, 4) < 1e-4

    def test_frozen_optics(self, small_setup):
        grid, model, sensor, images, labels = small_setup
        net = make_net(FC, 5, rng=np.random.default_rng(2))
        task = HybridTask(model, sensor, net, "amplitude", train_optical=False)
        _, grads = task.loss_and_grads(images, labels)
        assert all(k[0] == "net" for k in grads)

    def test_snapshot_restores_running_stats(self, small_setup):
        grid, model, sensor, images, labels = small_setup
        net = make_net(FC, 5, rng=np.random.default_rng(2))
        task = HybridTask(model, sensor, net, "amplitude")
        task.loss_and_grads(images, labels)   # perturbs bn running stats
        snap = task.snapshot()
        before = task.predict(images).copy()
        task.loss_and_grads(images, labels)
        task.restore(snap)
        assert np.array_equal(task.predict(images), before)


class TestPerfectImager:
    def test_pooling_uniform(self):
        net = make_net(FC, 5, rng=np.random.default_rng(0))
        task = PerfectImagerTask(5, net)
        images = np.full((2, 28, 28), 0.5, dtype=np.float32)
        pixels = task.pool_images(images)
        assert pixels.shape == (2, 5, 5)
        assert np.allclose(pixels, 0.25)   # intensity 0.5^2 everywhere

    def test_gradients_match_fd(self, rng):
        net = make_net(FC, 5, rng=np.random.default_rng(1))
        task = PerfectImagerTask(5, net)
        images = rng.random((4, 28, 28)).astype(np.float32)
        labels = rng.integers(0, 10, size=4)
        assert _fd_check(task, images, labels, 5) < 1e-4
