#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行入口
子命令: gen-data | train | eval | ablate | gradcheck | stats
退出码: 0 成功, 1 用法/配置错误, 2 数值失败 (损失非有限或梯度校验失败), 3 I/O 错误
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

import pandas as pd

from ..data.descriptor_io import export_csv, read_samples, write_frame, write_samples
from ..data.synthetic import Sample, generate_synthetic, select_domains
from .config import (
    CliConfig,
    apply_entries,
    config_line,
    load_config,
    to_synthetic_spec,
    to_train_config,
)
from .exceptions import ConfigError, DescriptorFormatError, NumericalError, VladVsaError
from .harness.ablation import run_ablation, run_k2_sweep
from .harness.gradcheck import GradCheckConfig, GradientChecker, all_passed
from .harness.metrics import evaluate_metrics
from .harness.stats import assignment_stats, class_view, domain_view, residual_dump
from .harness.trainer import run_training
from .training.checkpoint import load_checkpoint, save_checkpoint

logger = logging.getLogger('cli')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

LOG_FORMAT = '%(asctime)s %(name)s %(levelname)s %(message)s'

# 命令行标志 -> 配置键
FLAG_KEYS = {
    'seed': 'seed',
    'k': 'k',
    'k2': 'k_specific',
    't': 'temperature',
    'iterations': 'iterations',
    'holdout': 'holdout',
    'checkpoint': 'checkpoint',
    'data_dir': 'data_dir',
    'out_dir': 'out_dir',
    'seeds': 'seeds',
}


class UsageError(Exception):
    """命令行用法错误"""
    pass


class ArgumentParser(argparse.ArgumentParser):
    """用法错误抛异常, 由 parse_and_dispatch 统一映射退出码"""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument('--config', help='配置文件 (.cfg 或 .json)')
    common.add_argument('--seed', help='随机种子')
    common.add_argument('--k', help='词表大小 K')
    common.add_argument('--k2', help='特定词数量 K2')
    common.add_argument('--t', help='软分配温度')
    common.add_argument('--lambda', dest='lam', help='同时设置 lambda1..lambda5')
    common.add_argument('--iterations', help='训练迭代次数')
    common.add_argument('--holdout', help='目标域')
    common.add_argument('--checkpoint', help='检查点路径')
    common.add_argument('--data-dir', dest='data_dir', help='特征文件目录')
    common.add_argument('--out-dir', dest='out_dir', help='输出目录')
    common.add_argument('--seeds', help='消融种子列表, 如 0,1,2')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='覆盖任意配置键, 可重复')
    common.add_argument('--log-level', dest='log_level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])

    parser = ArgumentParser(prog='vladvsa', description='VLAD 词表分离与适应的合成数据实验')
    sub = parser.add_subparsers(dest='command', parser_class=ArgumentParser)
    sub.required = True
    sub.add_parser('gen-data', parents=[common], help='生成合成数据').add_argument(
        '--csv', action='store_true', help='同时导出 CSV')
    sub.add_parser('train', parents=[common], help='训练并写出检查点与损失轨迹')
    sub.add_parser('eval', parents=[common], help='在目标域上评估检查点')
    ablate = sub.add_parser('ablate', parents=[common], help='消融实验')
    ablate.add_argument('--extended', action='store_true', help='加入扩展变体')
    ablate.add_argument('--k2-sweep', dest='k2_sweep', action='store_true', help='改为扫描 K2')
    sub.add_parser('gradcheck', parents=[common], help='有限差分梯度校验')
    sub.add_parser('stats', parents=[common], help='词表分配统计')
    return parser


def resolve_config(args: argparse.Namespace) -> CliConfig:
    """优先级: 命令行标志 > 配置文件 > 默认值"""
    cfg = load_config(args.config) if args.config else CliConfig()
    entries: Dict[str, tuple] = {}
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            entries[key] = (str(value), None)
    if args.lam is not None:
        for i in range(1, 6):
            entries[f"lambda{i}"] = (str(args.lam), None)
    for item in args.overrides:
        key, sep, value = item.partition('=')
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}", '<command line>')
        entries[key.strip()] = (value, None)
    if getattr(args, 'extended', False):
        entries['extended'] = ('true', None)
    return apply_entries(cfg, entries, '<command line>')


def domain_path(cfg: CliConfig, domain: int, ext: str = 'vvsa') -> str:
    return os.path.join(cfg.data_dir, f"domain_{domain}.{ext}")


def load_datasets(cfg: CliConfig) -> Dict[int, List[Sample]]:
    """读取 data_dir 下各域的特征文件; 一个都没有时按配置现场生成"""
    domains = range(1, cfg.num_domains + 1)
    paths = {d: domain_path(cfg, d) for d in domains}
    present = [d for d, p in paths.items() if os.path.exists(p)]
    if not present:
        logger.info(f"未找到特征文件, 按配置生成 | data_dir={cfg.data_dir}")
        return generate_synthetic(to_synthetic_spec(cfg))
    missing = [paths[d] for d in domains if d not in present]
    if missing:
        raise FileNotFoundError(f"missing feature files: {missing}")
    return {d: read_samples(p) for d, p in paths.items()}


def split_sources(cfg: CliConfig, datasets: Dict[int, List[Sample]]) -> Dict[int, List[Sample]]:
    if cfg.holdout not in datasets:
        raise ConfigError(f"holdout domain {cfg.holdout} not in {sorted(datasets)}", '<config>')
    sources = cfg.source_list or [d for d in datasets if d != cfg.holdout]
    return select_domains(datasets, [d for d in sources if d != cfg.holdout])


def cmd_gen_data(cfg: CliConfig, args: argparse.Namespace) -> int:
    os.makedirs(cfg.data_dir, exist_ok=True)
    datasets = generate_synthetic(to_synthetic_spec(cfg))
    for domain, samples in datasets.items():
        write_samples(domain_path(cfg, domain), samples)
        if args.csv:
            export_csv(domain_path(cfg, domain, 'csv'), samples, config_line(cfg))
    print(f"wrote {len(datasets)} domain files to {cfg.data_dir}")
    return EXIT_OK


def cmd_train(cfg: CliConfig, args: argparse.Namespace) -> int:
    datasets = load_datasets(cfg)
    result = run_training(split_sources(cfg, datasets), to_train_config(cfg))
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = cfg.checkpoint_path
    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
    save_checkpoint(path, result.params)
    write_frame(os.path.join(cfg.out_dir, 'loss_trace.csv'), result.trace, config_line(cfg))
    print(f"checkpoint: {path}")
    return EXIT_OK


def cmd_eval(cfg: CliConfig, args: argparse.Namespace) -> int:
    params = load_checkpoint(cfg.checkpoint_path)
    datasets = load_datasets(cfg)
    if cfg.holdout not in datasets:
        raise ConfigError(f"holdout domain {cfg.holdout} not in {sorted(datasets)}", '<config>')
    metrics = evaluate_metrics(params, datasets[cfg.holdout], cfg.temperature,
                               cfg.threshold_mode, cfg.fixed_threshold)
    print(metrics.format_line())
    os.makedirs(cfg.out_dir, exist_ok=True)
    frame = pd.DataFrame([{'holdout': cfg.holdout, **metrics.to_row()}])
    write_frame(os.path.join(cfg.out_dir, f"metrics_holdout{cfg.holdout}.csv"), frame, config_line(cfg))
    return EXIT_OK


def cmd_ablate(cfg: CliConfig, args: argparse.Namespace) -> int:
    spec = to_synthetic_spec(cfg)
    datasets = load_datasets(cfg)
    base = to_train_config(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    header = config_line(cfg)
    if args.k2_sweep:
        table = run_k2_sweep(spec, cfg.seed_list, cfg.k2_list, base, datasets=datasets)
        write_frame(os.path.join(cfg.out_dir, 'k2_sweep.csv'), table, header)
        print(table.groupby('k2')[['hter', 'auc']].mean().to_string())
        return EXIT_OK
    result = run_ablation(spec, cfg.seed_list, base, extended=cfg.extended,
                          source_domains=cfg.source_list, datasets=datasets)
    write_frame(os.path.join(cfg.out_dir, 'ablation.csv'), result.table, header)
    write_frame(os.path.join(cfg.out_dir, 'ablation_summary.csv'), result.summary, header)
    print(result.summary.to_string(index=False))
    for name, ok in result.verdict.items():
        print(f"{name}: {'yes' if ok else 'no'}")
    return EXIT_OK


def cmd_gradcheck(cfg: CliConfig, args: argparse.Namespace) -> int:
    checker = GradientChecker(GradCheckConfig(instances=cfg.gradcheck_instances, seed=cfg.seed))
    reports = checker.run()
    for report in reports:
        print(report.format_line())
    return EXIT_OK if all_passed(reports) else EXIT_NUMERICAL


def cmd_stats(cfg: CliConfig, args: argparse.Namespace) -> int:
    params = load_checkpoint(cfg.checkpoint_path)
    datasets = load_datasets(cfg)
    samples = [s for domain in sorted(datasets) for s in datasets[domain]]
    if cfg.stats_samples > 0:
        selection = {'sample_count': cfg.stats_samples}
    else:
        selection = {'per_domain_per_class': cfg.per_domain_per_class}
    table = assignment_stats(params, samples, seed=cfg.seed, **selection)
    residuals = residual_dump(params, samples, seed=cfg.seed, **selection)
    os.makedirs(cfg.out_dir, exist_ok=True)
    header = config_line(cfg)
    write_frame(os.path.join(cfg.out_dir, 'assignment_stats.csv'), table, header)
    write_frame(os.path.join(cfg.out_dir, 'assignment_by_class.csv'), class_view(table), header)
    write_frame(os.path.join(cfg.out_dir, 'assignment_by_domain.csv'), domain_view(table), header)
    write_frame(os.path.join(cfg.out_dir, 'residuals.csv'), residuals, header)
    print(table.to_string(index=False))
    return EXIT_OK


HANDLERS = {
    'gen-data': cmd_gen_data,
    'train': cmd_train,
    'eval': cmd_eval,
    'ablate': cmd_ablate,
    'gradcheck': cmd_gradcheck,
    'stats': cmd_stats,
}


def parse_and_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """解析参数并执行子命令, 返回退出码"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    try:
        cfg = resolve_config(args)
        return HANDLERS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        logger.error(f"数值失败 | {e}", exc_info=True)
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, DescriptorFormatError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except (VladVsaError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == '__main__':
    main()
