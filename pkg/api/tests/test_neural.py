# api/tests/test_neural.py
import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from api.services.exceptions import CheckpointError, ShapeError
from api.services.neural import (
    NetworkParams, NetworkSpec, adamw_step, backward, clip_gradients, forward, global_norm,
    greedy_actions, huber_loss_and_grad, init_network, init_optimizer, load_checkpoint, polyak_update,
    save_checkpoint,
)

SMALL_SPEC = NetworkSpec(
    in_channels=2, view_size=5, vector_dim=7, conv_filters=(4, 4),
    vector_hidden=6, merge_hidden=8, n_actions=5,
)


def small_inputs(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    spatial = rng.random((n, SMALL_SPEC.in_channels, SMALL_SPEC.view_size, SMALL_SPEC.view_size))
    vector = rng.normal(scale=5.0, size=(n, SMALL_SPEC.vector_dim))
    return spatial, vector


class ForwardTests(SimpleTestCase):

    def test_default_shapes(self):
        params = init_network(0)
        rng = np.random.default_rng(0)
        q_values, _ = forward(params, rng.random((3, 4, 15, 15)), rng.random((3, 13)))
        self.assertEqual(q_values.shape, (3, 5))
        self.assertEqual(q_values.dtype, np.float32)

    def test_single_observation(self):
        params = init_network(1, SMALL_SPEC)
        spatial, vector = small_inputs(1)
        q_batch, _ = forward(params, spatial, vector)
        q_single, _ = forward(params, spatial[0], vector[0])
        np.testing.assert_allclose(q_batch, q_single)
        self.assertEqual(greedy_actions(params, spatial, vector).shape, (1,))

    def test_shape_errors(self):
        params = init_network(0, SMALL_SPEC)
        spatial, vector = small_inputs(2)
        with self.assertRaises(ShapeError):
            forward(params, spatial[:, :1], vector)
        with self.assertRaises(ShapeError):
            forward(params, spatial, vector[:, :3])
        with self.assertRaises(ShapeError):
            forward(params, spatial, vector[:1])

    def test_same_seed_same_weights(self):
        a = init_network(5, SMALL_SPEC)
        b = init_network(5, SMALL_SPEC)
        np.testing.assert_array_equal(a.flat(), b.flat())

    def test_kaiming_bounds_and_zero_bias(self):
        params = init_network(2)
        bound = np.sqrt(6.0 / (4 * 3 * 3))
        self.assertLessEqual(np.abs(params['conv1.w']).max(), bound)
        self.assertEqual(np.abs(params['head.b']).max(), 0.0)
        bound = np.sqrt(6.0 / 13)
        self.assertLessEqual(np.abs(params['vector.w']).max(), bound)

    def test_flat_round_trip(self):
        params = init_network(3, SMALL_SPEC)
        rebuilt = NetworkParams.from_flat(SMALL_SPEC, params.flat())
        np.testing.assert_array_equal(rebuilt.flat(), params.flat())
        self.assertEqual(params.num_parameters, params.flat().size)
        with self.assertRaises(ShapeError):
            NetworkParams.from_flat(SMALL_SPEC, params.flat()[:-1])


class GradientTests(SimpleTestCase):

    def test_backward_matches_finite_differences(self):
        params = init_network(7, SMALL_SPEC, dtype=np.float64)
        spatial, vector = small_inputs(3, seed=1)
        rng = np.random.default_rng(2)
        grad_q = rng.normal(size=(3, SMALL_SPEC.n_actions))

        def objective(p):
            q_values, _ = forward(p, spatial, vector)
            return float(np.sum(q_values * grad_q))

        _, cache = forward(params, spatial, vector)
        grads = backward(params, cache, grad_q)
        h = 1e-6
        for name in params.names:
            tensor = params[name]
            for flat_index in rng.choice(tensor.size, size=min(6, tensor.size), replace=False):
                index = np.unravel_index(flat_index, tensor.shape)
                original = tensor[index]
                tensor[index] = original + h
                plus = objective(params)
                tensor[index] = original - h
                minus = objective(params)
                tensor[index] = original
                numeric = (plus - minus) / (2 * h)
                self.assertAlmostEqual(grads[name][index], numeric, delta=1e-5 + 1e-4 * abs(numeric),
                                       msg=f"{name}{index}")

    def test_gradient_shape_checked(self):
        params = init_network(0, SMALL_SPEC)
        spatial, vector = small_inputs(2)
        _, cache = forward(params, spatial, vector)
        with self.assertRaises(ShapeError):
            backward(params, cache, np.zeros((2, 3)))


class LossAndOptimizerTests(SimpleTestCase):

    def test_huber_regions(self):
        loss, grad = huber_loss_and_grad([0.5, 3.0], [0.0, 0.0])
        self.assertAlmostEqual(loss, (0.125 + 2.5) / 2)
        np.testing.assert_allclose(grad, [0.25, 0.5])

    def test_huber_weights(self):
        loss, grad = huber_loss_and_grad([-3.0], [0.0], weights=[0.5])
        self.assertAlmostEqual(loss, 1.25)
        np.testing.assert_allclose(grad, [-0.5])
        with self.assertRaises(ShapeError):
            huber_loss_and_grad([1.0, 2.0], [1.0])

    def test_clip_gradients(self):
        grads = {'a': np.array([3.0, 0.0]), 'b': np.array([4.0])}
        self.assertAlmostEqual(global_norm(grads), 5.0)
        clipped = clip_gradients(grads, max_norm=1.0)
        self.assertAlmostEqual(global_norm(clipped), 1.0)
        np.testing.assert_allclose(clipped['a'], [0.6, 0.0])
        self.assertIs(clip_gradients(grads, max_norm=10.0), grads)

    def test_adamw_first_step(self):
        params = init_network(0, SMALL_SPEC, dtype=np.float64)
        opt = init_optimizer(params, lr=1e-3, weight_decay=1e-2)
        grads = {name: np.ones_like(value) for name, value in params.tensors.items()}
        updated, opt = adamw_step(params, grads, opt)
        self.assertEqual(opt.step, 1)
        expected = params['head.w'] - 1e-3 * (1.0 / (1.0 + 1e-8)) - 1e-3 * 1e-2 * params['head.w']
        np.testing.assert_allclose(updated['head.w'], expected, rtol=1e-10, atol=1e-12)
        # l'entrée n'est pas modifiée
        self.assertFalse(np.allclose(updated['head.w'], params['head.w']))

    def test_polyak(self):
        zeros = NetworkParams(SMALL_SPEC, {k: np.zeros(s) for k, s in SMALL_SPEC.shapes().items()})
        ones = NetworkParams(SMALL_SPEC, {k: np.ones(s) for k, s in SMALL_SPEC.shapes().items()})
        mixed = polyak_update(zeros, ones, tau=0.005)
        np.testing.assert_allclose(mixed.flat(), 0.005)
        np.testing.assert_array_equal(polyak_update(zeros, ones, tau=1.0).flat(), ones.flat())


class CheckpointTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / 'ckpt' / 'model.npz'

    def test_round_trip(self):
        params = init_network(4, SMALL_SPEC)
        target = init_network(5, SMALL_SPEC)
        opt = init_optimizer(params, lr=3e-4)
        opt.m['head.b'][:] = 0.25
        save_checkpoint(self.path, params, target, opt, global_step=42, extra={'stage_index': 1})
        checkpoint = load_checkpoint(self.path)
        self.assertEqual(checkpoint.params.spec, SMALL_SPEC)
        self.assertEqual(checkpoint.global_step, 42)
        self.assertEqual(checkpoint.extra, {'stage_index': 1})
        self.assertEqual(checkpoint.optimizer.lr, 3e-4)
        np.testing.assert_array_equal(checkpoint.params.flat(), params.flat())
        np.testing.assert_array_equal(checkpoint.target.flat(), target.flat())
        np.testing.assert_array_equal(checkpoint.optimizer.m['head.b'], np.full(5, 0.25, dtype=np.float32))

    def test_missing_file(self):
        with self.assertRaises(CheckpointError):
            load_checkpoint(Path(self.tmp.name) / 'absent.npz')

    def test_foreign_format(self):
        self.path.parent.mkdir(parents=True)
        with open(self.path, 'wb') as handle:
            np.savez(handle, __meta__=np.array(json.dumps({'format': 'autre', 'version': 1})))
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_corrupt_file(self):
        self.path.parent.mkdir(parents=True)
        self.path.write_bytes(b'pas un npz')
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)
