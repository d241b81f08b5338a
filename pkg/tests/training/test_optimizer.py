import unittest

import numpy as np

from src.core.exceptions import NonFiniteGradientError, ShapeMismatchError
from src.core.model.params import init_params
from src.core.training.optimizer import OptimState, sgd_step


def small_params(seed=0):
    return init_params(seed=seed, d_raw=3, hidden=4, d=2, k=3, k_specific=1, num_domains=2)


class TestSgdStep(unittest.TestCase):
    """动量 SGD"""

    def test_zero_grads_leave_params(self):
        params = small_params()
        grads = {name: np.zeros_like(t) for name, t in params.tensors().items()}
        updated = sgd_step(params, grads, OptimState())
        for name, tensor in params.tensors().items():
            np.testing.assert_array_equal(updated.tensors()[name], tensor)

    def test_scalar_step(self):
        params = small_params()
        before = params.classifier.b.copy()
        opt = OptimState(learning_rate=0.1, momentum=0.0)
        updated = sgd_step(params, {'classifier.b': np.ones(2)}, opt)
        np.testing.assert_allclose(updated.classifier.b, before - 0.1)
        self.assertEqual(opt.iteration, 1)

    def test_quadratic_bowl_shrinks(self):
        params = small_params()
        opt = OptimState(learning_rate=0.1, momentum=0.0)
        norms = []
        for _ in range(50):
            p = params.vocabulary.words
            norms.append(float(np.linalg.norm(p)))
            params = sgd_step(params, {'vocabulary.words': 2.0 * p}, opt)
        self.assertTrue(all(b < a for a, b in zip(norms, norms[1:])))

    def test_momentum_accumulates(self):
        params = small_params()
        before = params.classifier.b.copy()
        opt = OptimState(learning_rate=0.1, momentum=0.5)
        params = sgd_step(params, {'classifier.b': np.ones(2)}, opt)
        params = sgd_step(params, {'classifier.b': np.ones(2)}, opt)
        # 0.1 * 1 + 0.1 * (0.5 + 1)
        np.testing.assert_allclose(params.classifier.b, before - 0.25)

    def test_lr_drop(self):
        opt = OptimState(learning_rate=0.01, drop_iter=2, dropped_lr=0.001)
        params = small_params()
        lrs = []
        for _ in range(4):
            lrs.append(opt.current_lr())
            params = sgd_step(params, {}, opt)
        self.assertEqual(lrs, [0.01, 0.01, 0.001, 0.001])

    def test_non_finite_gradient_rejected(self):
        params = small_params()
        opt = OptimState()
        grad = np.zeros_like(params.encoder.w1)
        grad[0, 1] = np.nan
        with self.assertLogs('optimizer', level='ERROR'):
            with self.assertRaises(NonFiniteGradientError) as ctx:
                sgd_step(params, {'encoder.w1': grad}, opt)
        self.assertEqual(ctx.exception.tensor_name, 'encoder.w1')
        self.assertEqual(opt.iteration, 0)
        self.assertEqual(opt.velocity, {})

    def test_shape_and_name_checks(self):
        params = small_params()
        with self.assertRaises(ShapeMismatchError):
            sgd_step(params, {'classifier.b': np.ones(3)}, OptimState())
        with self.assertRaises(KeyError):
            sgd_step(params, {'classifier.gamma': np.ones(2)}, OptimState())

    def test_state_validation(self):
        with self.assertRaises(ValueError):
            OptimState(learning_rate=0.0)
        with self.assertRaises(ValueError):
            OptimState(momentum=1.0)


if __name__ == '__main__':
    unittest.main()
