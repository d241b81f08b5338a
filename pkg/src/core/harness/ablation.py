#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
消融实验
功能：
1. 五个核心变体 (gap, vlad, vlad_vs, vlad_va, vlad_vsa) 与四个扩展变体
2. 留一域协议, 或指定源域的有限源协议
3. 特定词数量 K2 扫描
4. 汇总表 (均值 ± 标准差) 与方向性结论
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd

from ...data.synthetic import Sample, SyntheticSpec, generate_synthetic, select_domains
from .metrics import evaluate_metrics
from .trainer import TrainConfig, run_training

ABLATION_COLUMNS = ['variant', 'holdout', 'seed', 'hter', 'auc']
SWEEP_COLUMNS = ['k2', 'holdout', 'seed', 'hter', 'auc']
DEFAULT_K2_VALUES = (0, 2, 4, 6, 10)


def _weights(cfg: TrainConfig, **changes) -> TrainConfig:
    return replace(cfg, weights=replace(cfg.weights, **changes))


def _gap(cfg: TrainConfig) -> TrainConfig:
    return replace(cfg, aggregation='gap')


def _vlad(cfg: TrainConfig) -> TrainConfig:
    return _weights(replace(cfg, k_specific=0), lambda3=0.0, lambda4=0.0, lambda5=0.0)


def _vlad_vs(cfg: TrainConfig) -> TrainConfig:
    return _weights(cfg, lambda4=0.0, lambda5=0.0)


def _vlad_va(cfg: TrainConfig) -> TrainConfig:
    return _weights(replace(cfg, k_specific=0), lambda3=0.0)


def _vlad_vsa(cfg: TrainConfig) -> TrainConfig:
    return cfg


CORE_VARIANTS: Dict[str, Callable[[TrainConfig], TrainConfig]] = {
    'gap': _gap,
    'vlad': _vlad,
    'vlad_vs': _vlad_vs,
    'vlad_va': _vlad_va,
    'vlad_vsa': _vlad_vsa,
}

EXTENDED_VARIANTS: Dict[str, Callable[[TrainConfig], TrainConfig]] = {
    'vs_wo_specific': lambda cfg: replace(_vlad_vs(cfg), use_specific=False),
    'vs_wo_ortho': lambda cfg: _weights(_vlad_vs(cfg), lambda3=0.0),
    'va_wo_c_adapt': lambda cfg: _weights(_vlad_va(cfg), lambda4=0.0),
    'va_wo_intra': lambda cfg: _weights(_vlad_va(cfg), lambda5=0.0),
}


def variant_config(name: str, base: TrainConfig) -> TrainConfig:
    """变体名 -> 训练配置"""
    table = {**CORE_VARIANTS, **EXTENDED_VARIANTS}
    if name not in table:
        raise KeyError(f"unknown variant: {name}")
    return table[name](base)


def protocol_splits(
    domains: Sequence[int],
    holdouts: Optional[Sequence[int]] = None,
    source_domains: Optional[Sequence[int]] = None,
) -> List[tuple]:
    """
    返回 [(holdout, 源域元组)]
    未给源域时为留一域; 给定源域时默认以其余各域为目标
    """
    domains = sorted(domains)
    if source_domains is None:
        targets = domains if holdouts is None else sorted(holdouts)
        return [(h, tuple(d for d in domains if d != h)) for h in targets]
    sources = tuple(sorted(source_domains))
    targets = [d for d in domains if d not in sources] if holdouts is None else sorted(holdouts)
    return [(h, tuple(d for d in sources if d != h)) for h in targets]


@dataclass
class AblationResult:
    table: pd.DataFrame
    summary: pd.DataFrame
    verdict: Dict[str, bool]


def summarize(table: pd.DataFrame, key: str = 'variant') -> pd.DataFrame:
    """按 (key, holdout) 汇总 HTER/AUC 的均值与标准差"""
    summary = (
        table.groupby([key, 'holdout'], sort=False)
        .agg(hter_mean=('hter', 'mean'), hter_std=('hter', 'std'),
             auc_mean=('auc', 'mean'), auc_std=('auc', 'std'))
        .reset_index()
    )
    return summary.fillna({'hter_std': 0.0, 'auc_std': 0.0})


def directional_verdict(table: pd.DataFrame) -> Dict[str, bool]:
    """平均 AUC 上 VLAD > GAP, VLAD-VSA >= VLAD (只判断表中出现的变体)"""
    means = table.groupby('variant')['auc'].mean()
    verdict: Dict[str, bool] = {}
    if {'vlad', 'gap'} <= set(means.index):
        verdict['vlad_gt_gap'] = bool(means['vlad'] > means['gap'])
    if {'vlad_vsa', 'vlad'} <= set(means.index):
        verdict['vsa_ge_vlad'] = bool(means['vlad_vsa'] >= means['vlad'])
    return verdict


class AblationRunner:
    """在固定的合成数据上按协议训练并评估多个配置"""

    def __init__(self, datasets: Dict[int, List[Sample]], base: TrainConfig = TrainConfig()):
        self.datasets = datasets
        self.base = base
        self.logger = logging.getLogger('ablation')

    def evaluate_config(self, cfg: TrainConfig, holdout: int, sources: Sequence[int]) -> Dict[str, float]:
        result = run_training(select_domains(self.datasets, sources), cfg)
        metrics = evaluate_metrics(result.params, self.datasets[holdout], cfg.temperature)
        return {'hter': metrics.hter, 'auc': metrics.auc}

    def run(
        self,
        variants: Sequence[str],
        seeds: Sequence[int],
        holdouts: Optional[Sequence[int]] = None,
        source_domains: Optional[Sequence[int]] = None,
    ) -> pd.DataFrame:
        if not seeds:
            raise ValueError("ablation needs at least one seed")
        rows = []
        for holdout, sources in protocol_splits(self.datasets.keys(), holdouts, source_domains):
            for name in variants:
                for seed in seeds:
                    cfg = replace(variant_config(name, self.base), seed=seed)
                    row = {'variant': name, 'holdout': holdout, 'seed': seed,
                           **self.evaluate_config(cfg, holdout, sources)}
                    self.logger.info(
                        f"变体完成 | {name} | holdout={holdout} | sources={list(sources)} | seed={seed} | "
                        f"hter={row['hter']:.4f} | auc={row['auc']:.4f}"
                    )
                    rows.append(row)
        return pd.DataFrame(rows, columns=ABLATION_COLUMNS)

    def k2_sweep(
        self,
        seeds: Sequence[int],
        k2_values: Sequence[int] = DEFAULT_K2_VALUES,
        holdouts: Optional[Sequence[int]] = None,
    ) -> pd.DataFrame:
        rows = []
        for holdout, sources in protocol_splits(self.datasets.keys(), holdouts):
            for k2 in k2_values:
                for seed in seeds:
                    if k2 == 0:
                        cfg = replace(_vlad(self.base), seed=seed)
                    else:
                        cfg = replace(_vlad_vs(self.base), k_specific=k2, seed=seed)
                    row = {'k2': k2, 'holdout': holdout, 'seed': seed,
                           **self.evaluate_config(cfg, holdout, sources)}
                    self.logger.info(
                        f"K2 扫描 | k2={k2} | holdout={holdout} | seed={seed} | "
                        f"hter={row['hter']:.4f} | auc={row['auc']:.4f}"
                    )
                    rows.append(row)
        return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def run_ablation(
    spec: SyntheticSpec,
    seeds: Sequence[int],
    base: TrainConfig = TrainConfig(),
    extended: bool = False,
    variants: Optional[Sequence[str]] = None,
    holdouts: Optional[Sequence[int]] = None,
    source_domains: Optional[Sequence[int]] = None,
    datasets: Optional[Dict[int, List[Sample]]] = None,
) -> AblationResult:
    """
    按留一域 (或有限源) 协议训练并评估各变体
    行数 = 变体数 × 目标域数 × 种子数
    """
    if variants is None:
        variants = list(CORE_VARIANTS) + (list(EXTENDED_VARIANTS) if extended else [])
    if datasets is None:
        datasets = generate_synthetic(spec)
    table = AblationRunner(datasets, base).run(variants, seeds, holdouts, source_domains)
    verdict = directional_verdict(table)
    logging.getLogger('ablation').info(f"消融完成 | rows={len(table)} | verdict={verdict}")
    return AblationResult(table=table, summary=summarize(table), verdict=verdict)


def run_k2_sweep(
    spec: SyntheticSpec,
    seeds: Sequence[int],
    k2_values: Sequence[int] = DEFAULT_K2_VALUES,
    base: TrainConfig = TrainConfig(),
    holdouts: Optional[Sequence[int]] = None,
    datasets: Optional[Dict[int, List[Sample]]] = None,
) -> pd.DataFrame:
    """K 固定, 在词表分离变体上扫描特定词数量 (不含适应损失); K2=0 一行即普通 VLAD"""
    if datasets is None:
        datasets = generate_synthetic(spec)
    return AblationRunner(datasets, base).k2_sweep(seeds, k2_values, holdouts)
