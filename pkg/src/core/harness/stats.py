#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
词表分配统计
功能：
1. 选取样本 (总数或每域每类), 编码后硬分配到最近的词
2. 每个簇的总数、真/假计数、各域计数; 特定词排在最后
3. 硬分配残差导出, 供外部降维可视化
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from ...data.synthetic import FAKE, REAL, Sample, stack_samples
from ..exceptions import InsufficientSamplesError, VocabularyError
from ..model.params import ModelParams, encode_batch
from ..numkernel import make_rng
from ..vlad.base import hard_assign

logger = logging.getLogger('stats')

DEFAULT_PER_DOMAIN_PER_CLASS = 70


def select_samples(
    samples: Sequence[Sample],
    sample_count: Optional[int] = None,
    per_domain_per_class: Optional[int] = None,
    seed: int = 0,
) -> List[Sample]:
    """
    sample_count: 从全体无放回抽取的个数 (None 表示全部)
    per_domain_per_class: 每个 (域, 类别) 抽取的个数, 不足时取全部
    """
    rng = make_rng(seed)
    if per_domain_per_class is not None:
        chosen: List[Sample] = []
        for domain in sorted({s.domain_label for s in samples}):
            for label in (REAL, FAKE):
                pool = [s for s in samples if s.domain_label == domain and s.class_label == label]
                take = min(per_domain_per_class, len(pool))
                picks = np.sort(rng.choice(len(pool), size=take, replace=False))
                chosen.extend(pool[i] for i in picks)
        return chosen
    if sample_count is None:
        return list(samples)
    if sample_count > len(samples):
        raise InsufficientSamplesError(f"sample_count {sample_count} exceeds dataset size {len(samples)}")
    picks = np.sort(rng.choice(len(samples), size=sample_count, replace=False))
    return [samples[i] for i in picks]


def _assign(params: ModelParams, samples: Sequence[Sample]):
    if params.vocabulary is None:
        raise VocabularyError("assignment statistics need a VLAD model with a vocabulary")
    raw, classes, domains = stack_samples(samples)
    encoded, _ = encode_batch(raw, params)
    b, n, d = encoded.shape
    locals_flat = encoded.reshape(b * n, d)
    clusters = hard_assign(locals_flat, params.vocabulary.words)
    return locals_flat, clusters, np.repeat(classes, n), np.repeat(domains, n)


def assignment_stats(
    params: ModelParams,
    samples: Sequence[Sample],
    sample_count: Optional[int] = None,
    per_domain_per_class: Optional[int] = None,
    seed: int = 0,
) -> pd.DataFrame:
    """
    Returns:
        列 cluster, is_specific, total, real, fake, domain_<id>...; 行按簇序号, 特定词在最后
    """
    chosen = select_samples(samples, sample_count, per_domain_per_class, seed)
    if not chosen:
        raise InsufficientSamplesError("no samples selected for assignment statistics")
    _, clusters, classes, domains = _assign(params, chosen)
    vocab = params.vocabulary
    k = vocab.k

    table = pd.DataFrame({
        'cluster': np.arange(k),
        'is_specific': np.arange(k) >= vocab.k_shared,
        'total': np.bincount(clusters, minlength=k),
        'real': np.bincount(clusters[classes == REAL], minlength=k),
        'fake': np.bincount(clusters[classes == FAKE], minlength=k),
    })
    for domain in sorted(np.unique(domains)):
        table[f"domain_{domain}"] = np.bincount(clusters[domains == domain], minlength=k)
    logger.info(
        f"分配统计完成 | samples={len(chosen)} | locals={int(table['total'].sum())} | "
        f"K={k} | K2={vocab.k_specific}"
    )
    return table


def class_view(table: pd.DataFrame) -> pd.DataFrame:
    """按类别的视图"""
    return table[['cluster', 'is_specific', 'total', 'real', 'fake']]


def domain_view(table: pd.DataFrame) -> pd.DataFrame:
    """按域的视图"""
    cols = [c for c in table.columns if c.startswith('domain_')]
    return table[['cluster', 'is_specific', 'total', *cols]]


def residual_dump(
    params: ModelParams,
    samples: Sequence[Sample],
    sample_count: Optional[int] = None,
    per_domain_per_class: Optional[int] = None,
    seed: int = 0,
) -> pd.DataFrame:
    """每个局部特征一行: cluster, class, domain, r_0..r_{d-1} (f - c_k, 硬分配)"""
    chosen = select_samples(samples, sample_count, per_domain_per_class, seed)
    if not chosen:
        raise InsufficientSamplesError("no samples selected for residual dump")
    locals_flat, clusters, classes, domains = _assign(params, chosen)
    residuals = locals_flat - params.vocabulary.words[clusters]
    frame = pd.DataFrame(residuals, columns=[f"r_{j}" for j in range(residuals.shape[1])])
    frame.insert(0, 'domain', domains)
    frame.insert(0, 'class', classes)
    frame.insert(0, 'cluster', clusters)
    return frame
