import os
import tempfile
import unittest
from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pandas as pd

from src.core.exceptions import NonFiniteError, SingleDomainError, TrainingDivergedError
from src.core.harness.metrics import evaluate_metrics
from src.core.harness.sampler import sample_batch
from src.core.harness.trainer import TRACE_COLUMNS, TrainConfig, Trainer, run_training
from src.core.model.params import (
    classifier_backward,
    encode_batch,
    encode_batch_backward,
    heads_apply,
    init_params,
)
from src.core.numkernel import make_rng, spawn_rngs
from src.core.training.checkpoint import save_checkpoint
from src.core.training.objective import LossWeights, cross_entropy_and_grad
from src.core.training.optimizer import OptimState, sgd_step
from src.core.vlad.aggregation import vlad_backward_batch, vlad_forward_batch
from src.data.descriptor_io import write_frame
from src.data.synthetic import generate_synthetic, make_synthetic_spec, select_domains

SMALL = TrainConfig(
    per_domain_real=3, per_domain_fake=3, iterations=6, k=4, k_specific=1, hidden=6, d=3,
    disc_hidden=5, lr_drop_iter=4, eval_every=2,
)


def cls_only_losses(sources, cfg):
    """只含分类损失的参考训练循环"""
    sampler_rng, _ = spawn_rngs(cfg.seed, 2)
    params = Trainer(cfg).init_model(sources, make_rng(0))
    opt = OptimState(learning_rate=cfg.learning_rate, momentum=cfg.momentum,
                     drop_iter=cfg.lr_drop_iter, dropped_lr=cfg.lr_dropped)
    losses = []
    for _ in range(cfg.iterations):
        batch = sample_batch(sources, cfg, sampler_rng)
        encoded, enc_cache = encode_batch(batch.raw, params)
        flat, cache = vlad_forward_batch(encoded, params.vocabulary.words, cfg.temperature)
        heads = heads_apply(flat, params, with_domain=False)
        loss, d_logits = cross_entropy_and_grad(heads.class_logits, batch.class_labels)
        d_flat, cls_grads = classifier_backward(heads, d_logits, params)
        grad_features, grad_words = vlad_backward_batch(cache, d_flat)
        _, enc_grads = encode_batch_backward(enc_cache, grad_features, params)
        grads = {'vocabulary.words': grad_words}
        grads.update({f"encoder.{k}": v for k, v in enc_grads.items()})
        grads.update({f"classifier.{k}": v for k, v in cls_grads.items()})
        params = sgd_step(params, grads, opt)
        losses.append(loss)
    return np.array(losses)


class TestTrainer(unittest.TestCase):
    """训练循环"""

    @classmethod
    def setUpClass(cls):
        spec = make_synthetic_spec(num_domains=3, n_locals=5, d_raw=4, samples_per_domain_per_class=10, seed=1)
        cls.datasets = generate_synthetic(spec)
        cls.sources = select_domains(cls.datasets, [1, 2])

    def test_zero_iterations_returns_initial_params(self):
        result = run_training(self.sources, replace(SMALL, iterations=0))
        expected = init_params(seed=0, d_raw=4, hidden=6, d=3, k=4, k_specific=1, num_domains=2, disc_hidden=5)
        for name, tensor in expected.tensors().items():
            np.testing.assert_array_equal(result.params.tensors()[name], tensor)
        self.assertEqual(len(result.trace), 0)
        self.assertEqual(list(result.trace.columns), TRACE_COLUMNS)

    def test_trace_and_lr_schedule(self):
        result = run_training(self.sources, SMALL)
        self.assertEqual(len(result.trace), 6)
        self.assertEqual(result.trace['lr'].tolist(), [0.01] * 4 + [0.001] * 2)
        self.assertEqual(result.source_domains, (1, 2))
        self.assertTrue(np.all(np.isfinite(result.trace['total'])))

    def test_zero_weights_match_classification_only(self):
        weights = LossWeights(lambda1=0, lambda2=0, lambda3=0, lambda4=0, lambda5=0)
        cfg = replace(SMALL, weights=weights)
        result = run_training(self.sources, cfg)
        expected = cls_only_losses(self.sources, cfg)
        np.testing.assert_allclose(result.trace['cls'].to_numpy(), expected, rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(result.trace['total'].to_numpy(), expected, rtol=1e-10, atol=1e-14)

    def test_deterministic(self):
        a = run_training(self.sources, SMALL)
        b = run_training(self.sources, SMALL)
        self.assertTrue(a.trace.equals(b.trace))
        m_a = evaluate_metrics(a.params, self.datasets[3])
        m_b = evaluate_metrics(b.params, self.datasets[3])
        self.assertEqual(m_a, m_b)

        blobs = []
        with tempfile.TemporaryDirectory() as tmp:
            for tag, result, metrics in (('a', a, m_a), ('b', b, m_b)):
                ckpt = os.path.join(tmp, f"model_{tag}.bin")
                csv = os.path.join(tmp, f"metrics_{tag}.csv")
                save_checkpoint(ckpt, result.params)
                write_frame(csv, pd.DataFrame([{'holdout': 3, **metrics.to_row()}]), 'seed=0')
                with open(ckpt, 'rb') as f_ckpt, open(csv, 'rb') as f_csv:
                    blobs.append((f_ckpt.read(), f_csv.read()))
        self.assertEqual(blobs[0][0], blobs[1][0])
        self.assertEqual(blobs[0][1], blobs[1][1])

    def test_kmeans_vocabulary_and_gap(self):
        result = run_training(self.sources, replace(SMALL, vocab_init='kmeans', iterations=2))
        self.assertEqual(result.params.vocabulary.words.shape, (4, 3))
        result = run_training(self.sources, replace(SMALL, aggregation='gap', iterations=2))
        self.assertIsNone(result.params.vocabulary)
        self.assertTrue((result.trace['ortho'] == 0.0).all())

    def test_single_source_rejected(self):
        with self.assertRaises(SingleDomainError):
            run_training(select_domains(self.datasets, [1]), SMALL)

    def test_non_finite_loss_aborts(self):
        error = NonFiniteError("loss term 'intra' is non-finite: nan", where='intra')
        with patch('src.core.harness.trainer.forward_backward', side_effect=error):
            with self.assertLogs('trainer', level='ERROR'):
                with self.assertRaises(TrainingDivergedError) as ctx:
                    run_training(self.sources, SMALL)
        self.assertEqual(ctx.exception.iteration, 0)
        self.assertIn('cls', ctx.exception.breakdown)

    def test_config_validation(self):
        with self.assertRaises(ValueError):
            TrainConfig(iterations=-1)
        with self.assertRaises(ValueError):
            TrainConfig(vocab_init='spectral')

    def test_classification_loss_descends(self):
        spec = make_synthetic_spec(seed=0)
        sources = select_domains(generate_synthetic(spec), [1, 2, 3])
        result = run_training(sources, TrainConfig(iterations=200, lr_drop_iter=150))
        cls = result.trace['cls'].to_numpy()
        self.assertLess(cls[-20:].mean(), cls[:20].mean())


if __name__ == '__main__':
    unittest.main()
