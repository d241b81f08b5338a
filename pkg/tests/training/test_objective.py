import itertools
import math
import unittest
from unittest.mock import MagicMock

import numpy as np

from src.core.exceptions import LabelRangeError, NonFiniteError, SingleDomainError
from src.core.model.layers import TwoLayerMLP
from src.core.numkernel import check_gradient, make_rng
from src.core.training.objective import (
    LabeledEmbeddingBatch,
    LossTerm,
    LossWeights,
    adversarial_grl,
    cross_entropy_and_grad,
    total_objective,
    triplet_loss_and_grad,
)


def brute_force_triplet(emb, labels, m):
    values = []
    for a, p, n in itertools.product(range(len(labels)), repeat=3):
        if a != p and labels[a] == labels[p] and labels[a] != labels[n]:
            d_ap = float(np.sum((emb[a] - emb[p]) ** 2))
            d_an = float(np.sum((emb[a] - emb[n]) ** 2))
            values.append(max(0.0, d_ap - d_an + m))
    return sum(values) / len(values)


class TestCrossEntropy(unittest.TestCase):
    """交叉熵"""

    def test_uniform_two_classes(self):
        loss, _ = cross_entropy_and_grad(np.zeros((4, 2)), np.array([0, 1, 0, 1]))
        self.assertAlmostEqual(loss, math.log(2), places=12)

    def test_direct_evaluation(self):
        loss, _ = cross_entropy_and_grad(np.array([[2.0, 0.0]]), np.array([0]))
        self.assertAlmostEqual(loss, math.log1p(math.exp(-2.0)), places=12)
        self.assertAlmostEqual(loss, 0.1269, places=4)

    def test_uniform_three_domains(self):
        loss, _ = cross_entropy_and_grad(np.zeros((3, 3)), np.array([0, 1, 2]))
        self.assertAlmostEqual(loss, math.log(3), places=12)

    def test_gradient_rows_sum_to_zero(self):
        _, grad = cross_entropy_and_grad(make_rng(0).standard_normal((5, 3)), np.array([0, 1, 2, 0, 1]))
        np.testing.assert_allclose(grad.sum(axis=1), np.zeros(5), atol=1e-15)

    def test_label_out_of_range(self):
        with self.assertRaises(LabelRangeError):
            cross_entropy_and_grad(np.zeros((2, 2)), np.array([0, 2]))


class TestTriplet(unittest.TestCase):
    """三元组损失"""

    def _batch(self, emb, labels):
        return LabeledEmbeddingBatch(np.asarray(emb, dtype=float), np.asarray(labels), np.ones(len(labels)))

    def test_identical_embeddings_give_margin(self):
        result = triplet_loss_and_grad(self._batch(np.ones((4, 3)), [0, 0, 1, 1]), m=0.1)
        self.assertAlmostEqual(result.loss, 0.1, places=15)

    def test_separated_classes(self):
        emb = [[0.0, 0.0], [0.0, 0.01], [5.0, 0.0], [5.0, 0.01]]
        result = triplet_loss_and_grad(self._batch(emb, [0, 0, 1, 1]), m=0.1)
        self.assertEqual(result.loss, 0.0)
        self.assertEqual(result.num_active, 0)
        self.assertFalse(result.grad.any())

    def test_no_valid_triplet(self):
        with self.assertLogs('objective', level='WARNING'):
            result = triplet_loss_and_grad(self._batch(np.eye(3), [1, 1, 1]))
        self.assertTrue(result.no_valid_triplet)
        self.assertEqual(result.loss, 0.0)
        self.assertFalse(result.grad.any())

    def test_brute_force_and_gradient(self):
        emb = make_rng(3).standard_normal((4, 5))
        labels = np.array([0, 1, 0, 1])
        result = triplet_loss_and_grad(self._batch(emb, labels), m=0.1)
        self.assertEqual(result.num_valid, 8)
        self.assertAlmostEqual(result.loss, brute_force_triplet(emb, labels, 0.1), delta=1e-12)
        f = lambda x: triplet_loss_and_grad(self._batch(x, labels), m=0.1).loss
        self.assertLess(check_gradient(f, emb, result.grad).max_rel_err, 1e-5)


class TestAdversarial(unittest.TestCase):
    """梯度反转对抗"""

    def test_generator_gradient_is_reversed(self):
        g = make_rng(4).standard_normal((4, 3))
        disc = MagicMock()
        disc.forward.return_value = (np.zeros((4, 2)), 'cache')
        disc.backward.return_value = (g, {'w1': np.ones(1)})
        result = adversarial_grl(np.ones((4, 3)), np.array([1, 1, 2, 2]), disc, grl_coeff=0.5)
        np.testing.assert_array_equal(result.grad_generator, -0.5 * g)
        np.testing.assert_array_equal(result.grad_input, g)
        disc.backward.assert_called_once()

    def test_uniform_logits_three_domains(self):
        rng = make_rng(5)
        disc = TwoLayerMLP.init(rng, 4, 3, 3)
        disc = disc.with_tensors({'w2': np.zeros((3, 3)), 'b2': np.zeros(3)})
        result = adversarial_grl(rng.standard_normal((6, 4)), np.array([1, 2, 3, 1, 2, 3]), disc)
        self.assertAlmostEqual(result.domain_loss, math.log(3), places=12)

    def test_single_domain_rejected(self):
        disc = TwoLayerMLP.init(make_rng(6), 2, 2, 2)
        with self.assertRaises(SingleDomainError):
            adversarial_grl(np.ones((3, 2)), np.array([1, 1, 1]), disc)


class TestTotalObjective(unittest.TestCase):
    """加权总目标"""

    def _parts(self, values):
        return {name: LossTerm(value, {'flat': np.full(2, value)}) for name, value in values.items()}

    def test_zero_weights_leave_classification(self):
        w = LossWeights(lambda1=0, lambda2=0, lambda3=0, lambda4=0, lambda5=0)
        values = {'cls': 0.7, 'triplet': 3.0, 'adv': 1.1, 'ortho': 2.0, 'c_adapt': 5.0, 'intra': -1.0}
        total, grads = total_objective(self._parts(values), w)
        self.assertEqual(total, 0.7)
        np.testing.assert_array_equal(grads['flat'], np.full(2, 0.7))

    def test_weighted_sum(self):
        rng = make_rng(7)
        values = dict(zip(['cls', 'triplet', 'adv', 'ortho', 'c_adapt', 'intra'], rng.random(6)))
        w = LossWeights(lambda1=0.3, lambda2=0.2, lambda3=0.05, lambda4=0.7, lambda5=1.5)
        total, _ = total_objective(self._parts(values), w)
        expected = (values['cls'] + 0.3 * values['triplet'] + 0.2 * values['adv'] + 0.05 * values['ortho']
                    + 0.7 * values['c_adapt'] + 1.5 * values['intra'])
        self.assertAlmostEqual(total, expected, delta=1e-15)

    def test_non_finite_term_is_named(self):
        with self.assertRaises(NonFiniteError) as ctx:
            total_objective(self._parts({'cls': 0.5, 'ortho': float('nan')}), LossWeights())
        self.assertIn('ortho', str(ctx.exception))

    def test_weights_validation(self):
        with self.assertRaises(ValueError):
            LossWeights(temperature=0.0)
        with self.assertRaises(ValueError):
            LossWeights(margin=-1.0)


if __name__ == '__main__':
    unittest.main()
