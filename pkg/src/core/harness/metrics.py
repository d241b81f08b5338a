#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
检测指标
功能：
1. 精确 ROC 上的梯形 AUC
2. EER 阈值 (或固定阈值) 下的 FAR / FRR / HTER
3. 成对计数 AUC, 作为 ROC 实现的对照
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np
from sklearn.metrics import auc, roc_curve

from ...data.synthetic import REAL, Sample, stack_samples
from ..exceptions import ShapeMismatchError, SingleClassError
from ..model.params import ModelParams
from ..training.step import real_probability

logger = logging.getLogger('metrics')

THRESHOLD_MODES = ('eer', 'fixed')


@dataclass(frozen=True)
class Metrics:
    """分数越高越像真脸; FAR = 假脸被接受, FRR = 真脸被拒绝"""
    auc: float
    hter: float
    eer_threshold: float
    far: float
    frr: float

    def to_row(self) -> Dict[str, float]:
        return asdict(self)

    def format_line(self) -> str:
        return (
            f"auc={self.auc:.6f} | hter={self.hter:.6f} | threshold={self.eer_threshold:.6f} | "
            f"far={self.far:.6f} | frr={self.frr:.6f}"
        )


def _check_inputs(scores, labels) -> tuple:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ShapeMismatchError(f"{scores.size} scores for {labels.size} labels", (scores.shape, labels.shape))
    if np.unique(labels).size < 2:
        raise SingleClassError(f"evaluation set needs both classes, got labels {np.unique(labels)}")
    return scores, labels


def pairwise_auc(scores, labels, positive_label: int = REAL) -> float:
    """
    正类分数高于负类的 (正, 负) 对所占比例, 平局记 1/2
    """
    scores, labels = _check_inputs(scores, labels)
    pos = scores[labels == positive_label]
    neg = scores[labels != positive_label]
    diff = pos[:, None] - neg[None, :]
    wins = np.sum(diff > 0) + 0.5 * np.sum(diff == 0)
    return float(wins / (pos.size * neg.size))


def rates_at(scores, labels, threshold: float, positive_label: int = REAL) -> tuple:
    """分数 >= threshold 判为正类, 返回 (FAR, FRR)"""
    scores, labels = _check_inputs(scores, labels)
    accepted = scores >= threshold
    pos = labels == positive_label
    far = float(np.mean(accepted[~pos]))
    frr = float(np.mean(~accepted[pos]))
    return far, frr


def compute_metrics(
    scores,
    labels,
    positive_label: int = REAL,
    threshold_mode: str = 'eer',
    fixed_threshold: float = 0.5,
) -> Metrics:
    """
    Args:
        scores: 每个样本的分数, 越大越偏向 positive_label
        labels: 0 真 / 1 假
        threshold_mode: 'eer' 在评估集自身的 EER 点取阈值, 'fixed' 用 fixed_threshold
    Raises:
        SingleClassError: 评估集只有一个类别
    """
    if threshold_mode not in THRESHOLD_MODES:
        raise ValueError(f"unknown threshold mode: {threshold_mode}")
    scores, labels = _check_inputs(scores, labels)
    y_true = (labels == positive_label).astype(np.int64)
    # 候选阈值为全部不同分数加 +inf
    fpr, tpr, thresholds = roc_curve(y_true, scores, drop_intermediate=False)
    area = float(auc(fpr, tpr))

    if threshold_mode == 'eer':
        fnr = 1.0 - tpr
        idx = int(np.argmin(np.abs(fpr - fnr)))
        threshold = float(thresholds[idx])
        far, frr = float(fpr[idx]), float(fnr[idx])
    else:
        threshold = float(fixed_threshold)
        far, frr = rates_at(scores, labels, threshold, positive_label)

    return Metrics(auc=area, hter=(far + frr) / 2.0, eer_threshold=threshold, far=far, frr=frr)


def score_samples(params: ModelParams, samples: Sequence[Sample], temperature: float = 3.0) -> np.ndarray:
    """每个样本的真脸概率"""
    raw, _, _ = stack_samples(samples)
    return real_probability(params, raw, temperature)


def evaluate_metrics(
    params: ModelParams,
    samples: Sequence[Sample],
    temperature: float = 3.0,
    threshold_mode: str = 'eer',
    fixed_threshold: float = 0.5,
) -> Metrics:
    """在目标域上评估: 分数 = 分类头给出的真脸概率"""
    if not samples:
        raise SingleClassError("evaluation set is empty")
    labels = np.array([s.class_label for s in samples])
    scores = score_samples(params, samples, temperature)
    metrics = compute_metrics(scores, labels, REAL, threshold_mode, fixed_threshold)
    logger.debug(f"评估完成 | samples={len(samples)} | {metrics.format_line()}")
    return metrics
