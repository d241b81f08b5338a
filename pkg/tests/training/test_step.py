import unittest

import numpy as np

from src.core.exceptions import ShapeMismatchError
from src.core.model.params import init_params
from src.core.numkernel import make_rng
from src.core.training.objective import LossWeights
from src.core.training.step import (
    LOSS_TERMS,
    TrainingBatch,
    _evaluate_parts,
    embed_batch,
    forward_backward,
    generator_surrogate,
    loss_breakdown,
    plain_total,
)


def make_batch(seed=0, b=8, n=5, d_raw=3, domains=2):
    rng = make_rng(seed)
    return TrainingBatch(
        raw=rng.standard_normal((b, n, d_raw)),
        class_labels=np.arange(b) % 2,
        domain_labels=np.arange(b) * domains // b + 1,
    )


class TestForwardBackward(unittest.TestCase):
    """单批前向/反向"""

    def setUp(self):
        self.params = init_params(seed=0, d_raw=3, hidden=6, d=4, k=5, k_specific=1, num_domains=2)
        self.batch = make_batch()

    def test_all_terms_and_grads(self):
        result = forward_backward(self.params, self.batch, LossWeights())
        self.assertEqual(tuple(result.breakdown), LOSS_TERMS)
        self.assertEqual(set(result.grads), set(self.params.tensors()))
        for name, tensor in self.params.tensors().items():
            self.assertEqual(result.grads[name].shape, tensor.shape, name)
            self.assertTrue(np.all(np.isfinite(result.grads[name])), name)
        self.assertFalse(result.no_valid_triplet)
        self.assertIsNotNone(result.centroid_stats)

    def test_total_is_weighted_breakdown(self):
        w = LossWeights(lambda1=0.2, lambda2=0.3, lambda3=0.4, lambda4=0.5, lambda5=0.6)
        result = forward_backward(self.params, self.batch, w)
        self.assertAlmostEqual(result.total, plain_total(result.breakdown, w), delta=1e-12)
        self.assertNotAlmostEqual(generator_surrogate(result.breakdown, w), result.total)

    def test_zero_weights_total_is_classification(self):
        w = LossWeights(lambda1=0, lambda2=0, lambda3=0, lambda4=0, lambda5=0)
        result = forward_backward(self.params, self.batch, w)
        self.assertEqual(result.total, result.breakdown['cls'])
        self.assertFalse(result.grads['discriminator.w1'].any())

    def test_gap_model_has_three_terms(self):
        params = init_params(seed=0, d_raw=3, hidden=6, d=4, k=5, k_specific=1, num_domains=2,
                             aggregation='gap')
        breakdown = loss_breakdown(params, self.batch, LossWeights())
        self.assertEqual(set(breakdown), {'cls', 'triplet', 'adv'})
        result = forward_backward(params, self.batch, LossWeights())
        self.assertEqual(set(result.grads), set(params.tensors()))

    def test_embeddings_have_unit_norm(self):
        emb = embed_batch(self.params, self.batch.raw)
        self.assertEqual(emb.shape, (8, 20))
        np.testing.assert_allclose(np.linalg.norm(emb, axis=1), np.ones(8), atol=1e-12)

    def test_shared_only_classifier(self):
        params = init_params(seed=2, d_raw=3, hidden=6, d=4, k=5, k_specific=2, num_domains=2,
                             use_specific=False)
        result = forward_backward(params, self.batch, LossWeights())
        self.assertEqual(result.grads['classifier.w'].shape, (12, 2))

    def test_adversarial_gradient_skips_specific_slice(self):
        state = _evaluate_parts(self.params, self.batch, LossWeights(), normalize_intra=True)
        d_flat = state.parts['adv'].grads['flat']
        sw = self.params.shared_width
        self.assertEqual(d_flat.shape[1] - sw, 4)
        self.assertFalse(d_flat[:, sw:].any())
        self.assertTrue(d_flat[:, :sw].any())

    def test_batch_validation(self):
        with self.assertRaises(ShapeMismatchError):
            TrainingBatch(raw=np.ones((3, 2)), class_labels=np.zeros(3), domain_labels=np.ones(3))
        with self.assertRaises(ShapeMismatchError):
            TrainingBatch(raw=np.ones((3, 2, 2)), class_labels=np.zeros(2), domain_labels=np.ones(3))


if __name__ == '__main__':
    unittest.main()
