#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
均衡的多域批采样
每个源域无放回抽 per_domain_real 个真样本和 per_domain_fake 个假样本,
域标签按源域编号升序重新编为 1..S_train
"""

import logging
from typing import TYPE_CHECKING, Dict, List, Sequence

import numpy as np

from ...data.synthetic import FAKE, REAL, Sample, split_by_class
from ..exceptions import InsufficientSamplesError
from ..training.step import TrainingBatch

if TYPE_CHECKING:
    from .trainer import TrainConfig

logger = logging.getLogger('sampler')


def relabel_domains(domains: Sequence[int]) -> Dict[int, int]:
    """数据集域编号 -> 训练用域标签 1..S_train"""
    return {domain: idx + 1 for idx, domain in enumerate(sorted(domains))}


def _draw(pool: List[Sample], count: int, rng: np.random.Generator, domain: int, kind: str) -> List[Sample]:
    if count > len(pool):
        raise InsufficientSamplesError(
            f"domain {domain} has {len(pool)} {kind} samples, batch needs {count}"
        )
    picks = rng.choice(len(pool), size=count, replace=False)
    return [pool[i] for i in picks]


def sample_indices(
    datasets: Dict[int, List[Sample]],
    per_domain_real: int,
    per_domain_fake: int,
    rng: np.random.Generator,
) -> List[Sample]:
    """按源域升序逐域抽样, 返回样本列表 (域内先真后假)"""
    chosen: List[Sample] = []
    for domain in sorted(datasets):
        by_class = split_by_class(datasets[domain])
        chosen.extend(_draw(by_class[REAL], per_domain_real, rng, domain, 'real'))
        chosen.extend(_draw(by_class[FAKE], per_domain_fake, rng, domain, 'fake'))
    return chosen


def sample_batch(
    datasets: Dict[int, List[Sample]],
    cfg: "TrainConfig",
    rng: np.random.Generator,
) -> TrainingBatch:
    """
    抽一个训练批, 批大小 = S_train × (per_domain_real + per_domain_fake)
    Raises:
        InsufficientSamplesError: 某个域/类别样本不足
    """
    chosen = sample_indices(datasets, cfg.per_domain_real, cfg.per_domain_fake, rng)
    mapping = relabel_domains(datasets.keys())
    raw = np.stack([s.raw_features.features for s in chosen])
    classes = np.array([s.class_label for s in chosen], dtype=np.int64)
    domains = np.array([mapping[s.domain_label] for s in chosen], dtype=np.int64)
    return TrainingBatch(raw=raw, class_labels=classes, domain_labels=domains)
