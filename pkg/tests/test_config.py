import glob
import os
import tempfile
import unittest
from dataclasses import replace

from src.core.config import (
    CliConfig,
    config_line,
    load_config,
    parse_config,
    parse_int_list,
    parse_json_config,
    render_config,
    to_synthetic_spec,
    to_train_config,
)
from src.core.exceptions import ConfigError

CONFIG_DIR = os.path.join(os.path.dirname(__file__), '..', 'config')


class TestConfigParsing(unittest.TestCase):
    """配置文件解析"""

    def test_render_round_trip(self):
        cfg = replace(CliConfig(), learning_rate=0.1 + 0.2, use_specific=False, seeds='3,4', aggregation='gap')
        self.assertEqual(parse_config(render_config(cfg)), cfg)

    def test_comments_and_values(self):
        cfg = parse_config("# comment\n\nk = 8\nnormalize_intra = off\nrho_cue=0.5\n")
        self.assertEqual((cfg.k, cfg.normalize_intra, cfg.rho_cue), (8, False, 0.5))

    def test_unknown_key_reports_line(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("k = 8\n\nwarp_speed = 9\n", source='run.cfg')
        self.assertTrue(str(ctx.exception).startswith("run.cfg:3:"))
        self.assertEqual(ctx.exception.line, 3)

    def test_malformed_value(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("k = eight\n", source='run.cfg')
        self.assertIn("run.cfg:1:", str(ctx.exception))
        with self.assertRaises(ConfigError):
            parse_config("use_specific = maybe\n")
        with self.assertRaises(ConfigError):
            parse_config("just words\n")

    def test_json(self):
        cfg = parse_json_config('{"k": 8, "extended": true, "lambda1": 0.5}')
        self.assertEqual((cfg.k, cfg.extended, cfg.lambda1), (8, True, 0.5))
        with self.assertRaises(ConfigError):
            parse_json_config('{"k": 8, "bogus": 1}')
        with self.assertRaises(ConfigError) as ctx:
            parse_json_config('{\n"k": 8,\n}', source='p.json')
        self.assertIn("p.json:", str(ctx.exception))

    def test_shipped_configs_load(self):
        self.assertEqual(load_config(os.path.join(CONFIG_DIR, 'default.cfg')), CliConfig())
        presets = glob.glob(os.path.join(CONFIG_DIR, 'presets', '*.json'))
        self.assertTrue(presets)
        for path in presets:
            load_config(path)

    def test_file_on_top_of_base(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'a.cfg')
            with open(path, 'w', encoding='utf-8') as f:
                f.write("iterations = 7\n")
            cfg = load_config(path, base=replace(CliConfig(), k=12))
        self.assertEqual((cfg.iterations, cfg.k), (7, 12))

    def test_int_lists(self):
        self.assertEqual(parse_int_list('0, 1,2'), [0, 1, 2])
        self.assertEqual(replace(CliConfig(), source_domains='').source_list, None)
        with self.assertRaises(ConfigError):
            parse_int_list('1,x', 'seeds')


class TestConversions(unittest.TestCase):
    """配置转换"""

    def test_train_config(self):
        cfg = replace(CliConfig(), lambda3=0.25, temperature=5.0, lr_drop_iter=0, k=10, k_specific=3)
        train = to_train_config(cfg)
        self.assertIsNone(train.lr_drop_iter)
        self.assertEqual(train.weights.lambda3, 0.25)
        self.assertEqual(train.temperature, 5.0)
        self.assertEqual(train.k_shared, 7)

    def test_synthetic_spec(self):
        spec = to_synthetic_spec(replace(CliConfig(), num_domains=3, n_locals=6, data_seed=9))
        self.assertEqual((spec.num_domains, spec.n_locals, spec.seed), (3, 6, 9))

    def test_config_line_is_single_line(self):
        line = config_line(CliConfig())
        self.assertNotIn("\n", line)
        self.assertIn("k=32", line)


if __name__ == '__main__':
    unittest.main()
