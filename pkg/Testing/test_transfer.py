import os
import tempfile
import unittest
from dataclasses import replace
from unittest import mock

import numpy as np
import pytest

from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.InvalidRangeError import InvalidRangeError
from ODgen.Errors.NumericalOverflowError import NumericalOverflowError
from ODgen.Errors.ShapeMismatchError import ShapeMismatchError
from ODgen.Parsing.ParseConfig import load_config
from ODgen.Transfer.Domains import DomainSpec, build_crops, distance_pairs
from ODgen.Transfer.Experiment import FEATURE_CUT, ExperimentConfig, ablation_domains, run_ablation, \
    run_transfer_experiment
from ODgen.Transfer.Features import feature_distance_histogram, pair_distances
from ODgen.Transfer.GradCheck import grad_check, gradient_errors
from ODgen.Transfer.TinyNet import Conv2D, GlobalAvgPool, Linear, ReLU, TinyNet, cross_entropy, softmax, to_input
from ODgen.Transfer.Training import FreezeSchedule, TrainConfig, backward_and_step, train

import Testing.objects_testing as objects

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def small_net(seed: int = 0, classes: int = 3) -> TinyNet:
    return TinyNet.default(classes, np.random.default_rng(seed), input_size=16, channels=(4, 6))


def toy_data(count: int = 24, seed: int = 0) -> tuple:
    """
    Flat-colored 16x16 images; the brightest channel is the label.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, size=count)
    images = rng.uniform(0.0, 0.3, size=(count, 16, 16, 3))
    images[np.arange(count), :, :, labels] += 0.6
    return images, labels


def naive_conv(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, stride: int) -> np.ndarray:
    k = weights.shape[0]
    n, height, width, _ = x.shape
    out_h, out_w = (height - k) // stride + 1, (width - k) // stride + 1
    out = np.zeros((n, out_h, out_w, weights.shape[3]))
    for i in range(out_h):
        for j in range(out_w):
            window = x[:, i * stride:i * stride + k, j * stride:j * stride + k, :]
            out[:, i, j, :] = np.einsum('nabc,abco->no', window, weights) + bias
    return out


class TestLayers(unittest.TestCase):
    def test_zero_network(self):
        net = small_net()
        for _, _, value in net.parameters():
            value[...] = 0.0
        probabilities = softmax(net.forward(np.random.default_rng(1).uniform(size=(5, 16, 16, 3))))
        np.testing.assert_allclose(probabilities, np.full((5, 3), 1 / 3))

    def test_conv_bias(self):
        conv = Conv2D(3, 2, 4)
        conv.initialize(np.random.default_rng(2))
        conv.params['b'] = np.array([1.0, -2.0, 0.5, 3.0])
        out = conv.forward(np.zeros((2, 8, 8, 2)))
        self.assertEqual(out.shape, (2, 6, 6, 4))
        np.testing.assert_allclose(out, np.broadcast_to(conv.params['b'], out.shape))

    def test_conv_oracle(self):
        rng = np.random.default_rng(3)
        for kernel, stride in ((3, 1), (5, 2), (3, 2)):
            conv = Conv2D(kernel, 2, 3, stride)
            conv.initialize(rng)
            conv.params['b'] = rng.normal(size=3)
            x = rng.normal(size=(2, 11, 9, 2))
            expected = naive_conv(x, conv.params['W'], conv.params['b'], stride)
            out = conv.forward(x)
            np.testing.assert_allclose(out, expected, atol=1e-12)
            self.assertEqual(out.shape[1:], conv.output_shape((11, 9, 2)))

    def test_pool(self):
        x = np.random.default_rng(4).normal(size=(3, 5, 7, 2))
        pool = GlobalAvgPool()
        np.testing.assert_allclose(pool.forward(x), x.mean(axis=(1, 2)))
        grad = pool.backward(np.ones((3, 2)))
        np.testing.assert_allclose(grad, np.full(x.shape, 1 / 35))

    def test_relu(self):
        relu = ReLU()
        np.testing.assert_array_equal(relu.forward(np.array([[-1.0, 0.0, 2.0]])), [[0.0, 0.0, 2.0]])
        np.testing.assert_array_equal(relu.backward(np.array([[5.0, 5.0, 5.0]])), [[0.0, 0.0, 5.0]])

    def test_cross_entropy(self):
        logits = np.array([[0.0, 0.0], [10.0, -10.0]])
        loss, grad = cross_entropy(logits, np.array([0, 0]))
        self.assertAlmostEqual(loss, (np.log(2) + np.log1p(np.exp(-20.0))) / 2)
        np.testing.assert_allclose(grad.sum(axis=1), [0.0, 0.0], atol=1e-15)

    def test_shapes(self):
        net = small_net()
        self.assertEqual(net.shapes, [(16, 16, 3), (6, 6, 4), (6, 6, 4), (2, 2, 6), (2, 2, 6), (6,), (3,)])
        self.assertEqual(net.classes, 3)
        self.assertEqual(net.features(np.zeros((16, 16, 3))).shape, (6,))
        with self.assertRaises(ShapeMismatchError):
            net.forward(np.zeros((2, 8, 8, 3)))
        with self.assertRaises(ShapeMismatchError):
            TinyNet([GlobalAvgPool(), Linear(4, 2)], 1, (8, 8, 3))
        with self.assertRaises(InvalidParamError):
            TinyNet([GlobalAvgPool()], 2, (8, 8, 3))

    def test_copy(self):
        net = small_net()
        other = net.copy()
        other.layers[0].params['W'] += 1.0
        self.assertFalse(np.array_equal(net.layers[0].params['W'], other.layers[0].params['W']))
        head = [value.copy() for index, _, value in net.parameters() if index >= net.feature_cut]
        extractor = [value.copy() for index, _, value in net.parameters() if index < net.feature_cut]
        net.reinitialize_head(np.random.default_rng(9))
        for before, (_, _, after) in zip(extractor, [p for p in net.parameters() if p[0] < net.feature_cut]):
            np.testing.assert_array_equal(before, after)
        self.assertFalse(np.array_equal(head[0], net.layers[-1].params['W']))


class TestFreezing(unittest.TestCase):
    def setUp(self):
        self.images, self.labels = toy_data()
        self.config = TrainConfig(learning_rate=0.05, momentum=0.9, steps=10, batch_size=8, seed=0)

    def test_fully_frozen(self):
        net = small_net()
        before = net.snapshot()
        train(net, self.images, self.labels, FreezeSchedule('all', len(net)), self.config)
        for old, new in zip(before, net.snapshot()):
            for name in old:
                np.testing.assert_array_equal(old[name], new[name])

    def test_nothing_frozen(self):
        net = small_net()
        before = net.snapshot()
        train(net, self.images, self.labels, FreezeSchedule('finetune', 0), self.config)
        for index in (0, 2, 5):
            self.assertFalse(np.array_equal(before[index]['W'], net.layers[index].params['W']))

    def test_first_conv_frozen(self):
        net = small_net()
        before = net.snapshot()
        train(net, self.images, self.labels, FreezeSchedule('freeze-conv1', 2), self.config)
        np.testing.assert_array_equal(before[0]['W'], net.layers[0].params['W'])
        np.testing.assert_array_equal(before[0]['b'], net.layers[0].params['b'])
        self.assertFalse(np.array_equal(before[2]['W'], net.layers[2].params['W']))

    def test_unfreeze(self):
        net = small_net()
        schedule = FreezeSchedule('unfreeze', FEATURE_CUT, unfreeze_at_step=5)
        initial = net.snapshot()
        snapshots = []
        for step in range(8):
            chosen = np.arange(step, step + 8) % len(self.images)
            backward_and_step(net, self.images[chosen], self.labels[chosen], schedule, self.config, step)
            snapshots.append(net.snapshot())
        for step in range(5):
            np.testing.assert_array_equal(snapshots[step][0]['W'], initial[0]['W'])
            np.testing.assert_array_equal(snapshots[step][2]['W'], initial[2]['W'])
            self.assertFalse(np.array_equal(snapshots[step][5]['W'], initial[5]['W']))
        self.assertFalse(np.array_equal(snapshots[5][0]['W'], initial[0]['W']))
        self.assertFalse(np.array_equal(snapshots[7][2]['W'], snapshots[4][2]['W']))
        self.assertEqual(schedule.frozen_at(4), FEATURE_CUT)
        self.assertEqual(schedule.frozen_at(5), 0)

    def test_frozen_extractor_long_run(self):
        net = small_net()
        probe = self.images[:4]
        features = net.features(probe)
        extractor = net.snapshot()[:FEATURE_CUT]
        losses = train(net, self.images, self.labels, FreezeSchedule('freeze-extractor', FEATURE_CUT),
                       replace(self.config, steps=1000))
        self.assertEqual(len(losses), 1000)
        for old, layer in zip(extractor, net.layers[:FEATURE_CUT]):
            for name in old:
                np.testing.assert_array_equal(old[name], layer.params[name])
        np.testing.assert_array_equal(net.features(probe), features)

    def test_loss_decreases(self):
        net = small_net()
        losses = train(net, self.images, self.labels, FreezeSchedule('finetune', 0), replace(self.config, steps=150))
        self.assertLess(np.mean(losses[-15:]), np.mean(losses[:15]))

    def test_overflow(self):
        net = small_net()
        net.layers[-1].params['W'][...] = np.inf
        with self.assertRaises(NumericalOverflowError):
            backward_and_step(net, self.images[:4], self.labels[:4], FreezeSchedule('finetune'), self.config, 0)

    def test_invalid(self):
        with self.assertRaises(InvalidParamError):
            FreezeSchedule('bad', -1)
        with self.assertRaises(InvalidParamError):
            FreezeSchedule('too many', 7).check(small_net())
        with self.assertRaises(InvalidParamError):
            TrainConfig(momentum=1.0)
        with self.assertRaises(InvalidParamError):
            TrainConfig(learning_rate=0.0)


class TestGradCheck(unittest.TestCase):
    def test_linear_only(self):
        rng = np.random.default_rng(5)
        net = TinyNet([GlobalAvgPool(), Linear(3, 4)], feature_cut=1, input_shape=(4, 4, 3))
        net.initialize(rng)
        sample = (rng.uniform(size=(1, 4, 4, 3)), np.array([2]))
        errors = gradient_errors(net, sample, epsilon=3e-5, min_grad=0.1)
        self.assertGreater(len(errors), 0)
        self.assertLess(errors.max(), 1e-9)

    def test_default_architecture(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            net = TinyNet.default(3, rng)
            sample = (rng.uniform(size=(2, 64, 64, 3)), rng.integers(0, 3, size=2))
            errors = gradient_errors(net, sample, epsilon=1e-5, count=200, rng=rng)
            self.assertEqual(len(errors), 200)
            self.assertLess(errors.max(), 1e-4)

    def test_small_nets(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            sample = (rng.uniform(size=(4, 16, 16, 3)), rng.integers(0, 3, size=4))
            self.assertLess(grad_check(small_net(seed), sample, epsilon=1e-5, count=200, rng=rng), 1e-4)

    def test_zeroed_conv_gradients(self):
        backward = Conv2D.backward

        def zeroed(layer, grad):
            dx = backward(layer, grad)
            layer.grads['W'] = np.zeros_like(layer.grads['W'])
            layer.grads['b'] = np.zeros_like(layer.grads['b'])
            return dx

        rng = np.random.default_rng(4)
        net = small_net(4)
        sample = (rng.uniform(size=(4, 16, 16, 3)), rng.integers(0, 3, size=4))
        with mock.patch.object(Conv2D, 'backward', zeroed):
            error = grad_check(net, sample, epsilon=1e-5, count=200, rng=rng)
        self.assertGreater(error, 1e-4)
        self.assertEqual(error, 1.0)

    def test_nothing_qualifies(self):
        with self.assertLogs('ODgen.Transfer.GradCheck', level='WARNING'):
            errors = gradient_errors(small_net(), toy_data(2), count=10, min_grad=1e3)
        self.assertEqual(len(errors), 0)
        with self.assertRaises(InvalidParamError):
            grad_check(small_net(), toy_data(2), count=10, min_grad=1e3)

    def test_weights_restored(self):
        net = small_net()
        before = net.snapshot()
        images, labels = toy_data(4)
        grad_check(net, (images, labels), count=20)
        for old, new in zip(before, net.snapshot()):
            for name in old:
                np.testing.assert_array_equal(old[name], new[name])

    def test_epsilon_range(self):
        with self.assertRaises(InvalidRangeError):
            grad_check(small_net(), toy_data(2), epsilon=0.1)


class TestFeatures(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(6)
        self.images = rng.integers(0, 256, size=(10, 16, 16, 3), dtype=np.uint8)
        self.net = small_net()

    def test_identical_pairs(self):
        pairs = [(image, image.copy()) for image in self.images]
        histogram = feature_distance_histogram(pairs, self.net, bins=4)
        np.testing.assert_array_equal(histogram.distances, np.zeros(10))
        self.assertEqual(histogram.counts.tolist(), [10, 0, 0, 0])
        self.assertEqual(histogram.median, 0.0)

    def test_histogram(self):
        pairs = list(zip(self.images[:5], self.images[5:]))
        histogram = feature_distance_histogram(pairs, self.net, bins=3)
        self.assertEqual(histogram.counts.sum(), 5)
        self.assertEqual(histogram.edges[0], 0.0)
        self.assertAlmostEqual(histogram.edges[-1], histogram.distances.max())
        fixed = feature_distance_histogram(pairs, self.net, bins=3, bin_range=(0.0, 100.0))
        self.assertEqual(fixed.edges[-1], 100.0)

    def test_lipschitz_bound(self):
        bound = self.net.lipschitz_bound()
        rng = np.random.default_rng(7)
        for image in self.images:
            other = np.clip(image.astype(int) + rng.integers(-30, 31, size=image.shape), 0, 255).astype(np.uint8)
            distance = pair_distances([(image, other)], self.net)[0]
            change = np.linalg.norm(to_input(image) - to_input(other))
            self.assertLessEqual(distance, bound * change + 1e-12)

    def test_errors(self):
        with self.assertRaises(InvalidParamError):
            pair_distances([], self.net)
        with self.assertRaises(ShapeMismatchError):
            pair_distances([(self.images[0], self.images[0][:8])], self.net)


class TestDomains(unittest.TestCase):
    def setUp(self):
        _, self.experiment = load_config(objects.data_path("small.json"))

    def test_plain_domain(self):
        config = DomainSpec.plain_synthetic().generation_config(objects.small_config(), 32, 50.0, 6, 11, 2)
        self.assertEqual((config.camera.width, config.camera.height), (32, 32))
        self.assertEqual(config.compose.noise_sigma_range, (0.0, 0.0))
        self.assertEqual(config.backgrounds.mode, 'constant')
        self.assertFalse(config.emit_masks)
        self.assertEqual(config.master_seed, 11)

    def test_crops(self):
        ctx = self.experiment.context(self.experiment.real_domain, 6, 0)
        crops = build_crops(ctx, range(6))
        self.assertEqual(crops.images.shape, (6, 32, 32, 3))
        self.assertEqual(crops.labels.tolist(), [0, 1, 0, 1, 0, 1])

    def test_plain_pairs(self):
        plain = replace(self.experiment, real_domain=DomainSpec.plain_synthetic())
        ctx = plain.context(plain.real_domain, 4, 0)
        for image, counterpart in distance_pairs(ctx, range(4)):
            np.testing.assert_array_equal(image, counterpart)

    def test_invalid(self):
        with self.assertRaises(InvalidParamError):
            DomainSpec('odd', background_mode='video')
        with self.assertRaises(InvalidRangeError):
            DomainSpec('odd', noise_sigma_range=(2.0, 1.0))


class TestExperiment(unittest.TestCase):
    def setUp(self):
        _, self.experiment = load_config(objects.data_path("small.json"))

    def test_transfer(self):
        report = run_transfer_experiment(self.experiment, jobs=2)
        self.assertEqual(len(report.runs), 4 * 2)
        self.assertEqual(list(dict.fromkeys(report.runs['schedule'])),
                         ['finetune', 'freeze-conv1', 'freeze-extractor', 'unfreeze-at-2'])
        self.assertEqual(report.reference['seed'].tolist(), [0, 1])
        self.assertTrue(report.runs['accuracy'].between(0.0, 1.0).all())
        self.assertEqual(set(report.histograms), {'frozen', 'finetuned'})
        np.testing.assert_array_equal(report.histograms['frozen'].edges, report.histograms['finetuned'].edges)
        self.assertEqual(len(report.histograms['frozen'].distances), 6 * 2)
        self.assertEqual(list(report.summary().index)[-2:], ['real', 'synthetic'])

        again = run_transfer_experiment(self.experiment, jobs=1)
        self.assertEqual(report.runs['accuracy'].tolist(), again.runs['accuracy'].tolist())
        self.assertEqual(report.runs['final_loss'].tolist(), again.runs['final_loss'].tolist())

        with tempfile.TemporaryDirectory() as directory:
            report.save(directory)
            self.assertEqual(sorted(os.listdir(directory)), ['report.json', 'summary.txt'])
            with open(os.path.join(directory, "summary.txt")) as summary:
                self.assertIn("freeze-extractor", summary.read())

    def test_selected_schedules(self):
        config = replace(self.experiment, seeds=(3,))
        report = run_transfer_experiment(config, schedules=(FreezeSchedule('freeze-extractor', FEATURE_CUT),),
                                         histograms=False)
        self.assertEqual(report.runs['schedule'].tolist(), ['freeze-extractor'])
        self.assertEqual(report.histograms, {})

    def test_ablation(self):
        domains = ablation_domains(self.experiment)
        self.assertEqual(len(domains), 16)
        self.assertEqual(len({domain.name for domain in domains}), 16)

        table = run_ablation(replace(self.experiment, seeds=(0,), train_crops=12, test_crops=8))
        self.assertEqual(len(table), 16)
        self.assertEqual(list(table.columns), ['blur', 'noise', 'light_jitter', 'background', 'accuracy',
                                               'accuracies'])
        self.assertEqual(int(table['blur'].sum()), 8)
        self.assertTrue(table['accuracy'].between(0.0, 1.0).all())

    def test_invalid(self):
        with self.assertRaises(InvalidParamError):
            ExperimentConfig(self.experiment.generation, seeds=())
        with self.assertRaises(InvalidParamError):
            ExperimentConfig(self.experiment.generation, schedules=(FreezeSchedule('scratch'),))

    @pytest.mark.slow
    def test_desk_scale_outcome(self):
        _, experiment = load_config(os.path.join(ROOT, "configs", "default.json"))
        report = run_transfer_experiment(experiment, jobs=4)
        accuracy = report.runs.groupby('schedule')['accuracy'].mean()
        self.assertGreaterEqual(accuracy['freeze-extractor'] - accuracy['finetune'], 0.05)
        self.assertLess(report.histograms['frozen'].median, report.histograms['finetuned'].median)
