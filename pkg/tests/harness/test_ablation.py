import unittest
from dataclasses import replace
from unittest.mock import patch

import pandas as pd

from src.core.harness.ablation import (
    ABLATION_COLUMNS,
    CORE_VARIANTS,
    EXTENDED_VARIANTS,
    AblationRunner,
    directional_verdict,
    protocol_splits,
    run_ablation,
    run_k2_sweep,
    summarize,
    variant_config,
)
from src.core.harness.trainer import TrainConfig, run_training
from src.core.training.checkpoint import encode_tensors
from src.data.synthetic import generate_synthetic, make_synthetic_spec, select_domains

BASE = TrainConfig(per_domain_real=2, per_domain_fake=2, iterations=3, k=4, k_specific=1, hidden=5, d=3,
                   disc_hidden=4, lr_drop_iter=None, lr_dropped=None)


class TestVariants(unittest.TestCase):
    """变体配置"""

    def test_core_variants(self):
        self.assertEqual(list(CORE_VARIANTS), ['gap', 'vlad', 'vlad_vs', 'vlad_va', 'vlad_vsa'])
        vlad = variant_config('vlad', BASE)
        self.assertEqual(vlad.k_specific, 0)
        self.assertEqual((vlad.weights.lambda3, vlad.weights.lambda4, vlad.weights.lambda5), (0.0, 0.0, 0.0))
        vs = variant_config('vlad_vs', BASE)
        self.assertEqual(vs.k_specific, 1)
        self.assertEqual((vs.weights.lambda4, vs.weights.lambda5), (0.0, 0.0))
        va = variant_config('vlad_va', BASE)
        self.assertEqual((va.k_specific, va.weights.lambda3, va.weights.lambda4), (0, 0.0, 0.1))
        self.assertEqual(variant_config('gap', BASE).aggregation, 'gap')
        self.assertIs(variant_config('vlad_vsa', BASE), BASE)

    def test_extended_variants(self):
        self.assertFalse(variant_config('vs_wo_specific', BASE).use_specific)
        self.assertEqual(variant_config('va_wo_intra', BASE).weights.lambda5, 0.0)
        self.assertEqual(len(EXTENDED_VARIANTS), 4)
        with self.assertRaises(KeyError):
            variant_config('vlad_xyz', BASE)

    def test_protocol_splits(self):
        self.assertEqual(protocol_splits([1, 2, 3]), [(1, (2, 3)), (2, (1, 3)), (3, (1, 2))])
        self.assertEqual(protocol_splits([1, 2, 3, 4], holdouts=[4]), [(4, (1, 2, 3))])
        self.assertEqual(protocol_splits([1, 2, 3, 4], source_domains=[2, 1]), [(3, (1, 2)), (4, (1, 2))])


class TestSummaries(unittest.TestCase):
    """汇总与结论"""

    def test_summary_and_verdict(self):
        table = pd.DataFrame([
            {'variant': 'gap', 'holdout': 1, 'seed': 0, 'hter': 0.4, 'auc': 0.6},
            {'variant': 'gap', 'holdout': 1, 'seed': 1, 'hter': 0.2, 'auc': 0.8},
            {'variant': 'vlad', 'holdout': 1, 'seed': 0, 'hter': 0.1, 'auc': 0.9},
        ], columns=ABLATION_COLUMNS)
        summary = summarize(table)
        gap = summary[summary['variant'] == 'gap'].iloc[0]
        self.assertAlmostEqual(gap['auc_mean'], 0.7)
        self.assertGreater(gap['auc_std'], 0.0)
        self.assertEqual(summary[summary['variant'] == 'vlad'].iloc[0]['auc_std'], 0.0)
        self.assertEqual(directional_verdict(table), {'vlad_gt_gap': True})


class TestRunner(unittest.TestCase):
    """端到端消融 (小配置)"""

    @classmethod
    def setUpClass(cls):
        cls.spec = make_synthetic_spec(num_domains=3, n_locals=4, d_raw=3, samples_per_domain_per_class=6, seed=4)
        cls.datasets = generate_synthetic(cls.spec)

    def test_rows_per_variant_holdout_seed(self):
        result = run_ablation(self.spec, seeds=[0, 1], base=BASE, variants=['gap', 'vlad', 'vlad_vsa'],
                              holdouts=[3], datasets=self.datasets)
        self.assertEqual(len(result.table), 6)
        self.assertEqual(list(result.table.columns), ABLATION_COLUMNS)
        self.assertEqual(len(result.summary), 3)
        self.assertEqual(set(result.verdict), {'vlad_gt_gap', 'vsa_ge_vlad'})
        self.assertTrue(result.table['auc'].between(0, 1).all())

    def test_limited_sources(self):
        table = AblationRunner(self.datasets, BASE).run(['vlad_vs'], [0], source_domains=[1, 2])
        self.assertEqual(table['holdout'].tolist(), [3])

    def test_k2_zero_equals_plain_vlad(self):
        sweep = run_k2_sweep(self.spec, seeds=[0], k2_values=(0, 2), base=BASE, holdouts=[2],
                             datasets=self.datasets)
        self.assertEqual(sweep['k2'].tolist(), [0, 2])
        plain = AblationRunner(self.datasets, BASE).run(['vlad'], [0], holdouts=[2])
        self.assertEqual(sweep.iloc[0]['auc'], plain.iloc[0]['auc'])
        self.assertEqual(sweep.iloc[0]['hter'], plain.iloc[0]['hter'])

    def test_k2_sweep_trains_separation_variant(self):
        runner = AblationRunner(self.datasets, BASE)
        with patch.object(AblationRunner, 'evaluate_config', return_value={'hter': 0.5, 'auc': 0.5}) as ev:
            runner.k2_sweep(seeds=[0], k2_values=[0, 2], holdouts=[3])
        zero, two = (c.args[0] for c in ev.call_args_list)
        self.assertEqual(zero.k_specific, 0)
        self.assertEqual((zero.weights.lambda3, zero.weights.lambda4, zero.weights.lambda5), (0.0, 0.0, 0.0))
        self.assertEqual(two.k_specific, 2)
        self.assertEqual((two.weights.lambda3, two.weights.lambda4, two.weights.lambda5), (0.1, 0.0, 0.0))

    def test_separation_without_specific_words_is_plain_vlad(self):
        sources = select_domains(self.datasets, [1, 2])
        vs = run_training(sources, replace(variant_config('vlad_vs', BASE), k_specific=0, iterations=10))
        vlad = run_training(sources, replace(variant_config('vlad', BASE), iterations=10))
        pd.testing.assert_frame_equal(vs.trace, vlad.trace, check_exact=True)
        self.assertEqual(encode_tensors(vs.params.tensors()), encode_tensors(vlad.params.tensors()))

    def test_requires_seeds(self):
        with self.assertRaises(ValueError):
            AblationRunner(self.datasets, BASE).run(['vlad'], [])


if __name__ == '__main__':
    unittest.main()
