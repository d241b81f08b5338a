import unittest

import numpy as np

from src.core.exceptions import SingleClassError
from src.core.harness.metrics import compute_metrics, evaluate_metrics, pairwise_auc, rates_at
from src.core.model.params import init_params
from src.core.numkernel import make_rng
from src.data.synthetic import FAKE, REAL, generate_synthetic, make_synthetic_spec


class TestMetrics(unittest.TestCase):
    """AUC / HTER"""

    def test_perfect_separation(self):
        scores = [0.9, 0.8, 0.1, 0.2]
        labels = [REAL, REAL, FAKE, FAKE]
        m = compute_metrics(scores, labels)
        self.assertEqual(m.auc, 1.0)
        self.assertEqual(m.hter, 0.0)
        self.assertEqual(m.eer_threshold, 0.8)

    def test_inverted_labels(self):
        m = compute_metrics([0.1, 0.2, 0.9, 0.8], [REAL, REAL, FAKE, FAKE])
        self.assertEqual(m.auc, 0.0)

    def test_pairwise_example(self):
        scores = [0.1, 0.6, 0.9, 0.4]
        labels = [REAL, REAL, FAKE, FAKE]
        self.assertAlmostEqual(pairwise_auc(scores, labels, positive_label=FAKE), 0.75)
        self.assertAlmostEqual(compute_metrics(scores, labels, positive_label=FAKE).auc, 0.75)

    def test_roc_matches_pairwise_with_ties(self):
        rng = make_rng(0)
        scores = np.round(rng.random(40), 1)
        labels = rng.permutation(np.repeat([REAL, FAKE], 20))
        self.assertAlmostEqual(compute_metrics(scores, labels).auc, pairwise_auc(scores, labels), delta=1e-12)

    def test_roc_matches_pairwise_on_seeded_sets(self):
        for seed in range(50):
            rng = make_rng(100 + seed)
            n_real, n_fake = (int(x) for x in rng.integers(2, 30, size=2))
            scores = rng.random(n_real + n_fake)
            if seed % 2:
                scores = np.round(scores, 1)
            labels = rng.permutation(np.repeat([REAL, FAKE], [n_real, n_fake]))
            self.assertAlmostEqual(compute_metrics(scores, labels).auc, pairwise_auc(scores, labels),
                                   delta=1e-9)

    def test_eer_rates_within_one_step(self):
        for seed in range(50):
            rng = make_rng(200 + seed)
            n_real, n_fake = (int(x) for x in rng.integers(1, 25, size=2))
            scores = rng.random(n_real + n_fake)
            labels = rng.permutation(np.repeat([REAL, FAKE], [n_real, n_fake]))
            m = compute_metrics(scores, labels)
            self.assertLessEqual(abs(m.far - m.frr), 1.0 / min(n_real, n_fake) + 1e-12)

    def test_hter_is_mean_of_rates(self):
        rng = make_rng(1)
        scores = rng.random(30)
        labels = rng.permutation(np.repeat([REAL, FAKE], 15))
        m = compute_metrics(scores, labels)
        self.assertAlmostEqual(m.hter, (m.far + m.frr) / 2)
        far, frr = rates_at(scores, labels, m.eer_threshold)
        self.assertAlmostEqual(m.far, far, delta=1e-12)
        self.assertAlmostEqual(m.frr, frr, delta=1e-12)
        self.assertGreaterEqual(m.hter, 0.0)
        self.assertLessEqual(m.hter, 1.0)

    def test_fixed_threshold(self):
        m = compute_metrics([0.7, 0.3, 0.6, 0.2], [REAL, REAL, FAKE, FAKE],
                            threshold_mode='fixed', fixed_threshold=0.5)
        self.assertEqual((m.far, m.frr), (0.5, 0.5))
        self.assertEqual(m.eer_threshold, 0.5)
        with self.assertRaises(ValueError):
            compute_metrics([0.1, 0.2], [REAL, FAKE], threshold_mode='best')

    def test_single_class_rejected(self):
        with self.assertRaises(SingleClassError):
            compute_metrics([0.1, 0.2], [REAL, REAL])

    def test_format_line(self):
        m = compute_metrics([0.9, 0.1], [REAL, FAKE])
        self.assertIn("auc=1.000000", m.format_line())
        self.assertEqual(set(m.to_row()), {'auc', 'hter', 'eer_threshold', 'far', 'frr'})

    def test_evaluate_model(self):
        samples = generate_synthetic(make_synthetic_spec(num_domains=1, n_locals=4, d_raw=3,
                                                         samples_per_domain_per_class=5))[1]
        params = init_params(seed=0, d_raw=3, hidden=4, d=2, k=3, k_specific=1, num_domains=2)
        m = evaluate_metrics(params, samples)
        self.assertTrue(0.0 <= m.auc <= 1.0)
        with self.assertRaises(SingleClassError):
            evaluate_metrics(params, samples[:5])


if __name__ == '__main__':
    unittest.main()
