#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
VLAD 聚合基础模块
包含：
1. 局部特征集合与词表数据结构
2. 分配矩阵与描述子
3. 聚类统计
"""

from dataclasses import dataclass, field, replace
from enum import Enum, auto
from typing import Optional

import numpy as np
from typing_extensions import Self

from ..exceptions import ShapeMismatchError, VocabularyError
from ..numkernel import as_matrix


class AssignmentMode(Enum):
    """分配方式"""
    SOFT = auto()
    HARD = auto()

    @classmethod
    def from_str(cls, s: str) -> Self:
        """从字符串解析"""
        s = s.lower()
        if s == 'soft':
            return cls.SOFT
        elif s == 'hard':
            return cls.HARD
        raise ValueError(f"Invalid assignment mode: {s}")


@dataclass(frozen=True)
class LocalFeatureSet:
    """局部特征 L = {f_i}, N×d"""
    features: np.ndarray

    def __post_init__(self):
        arr = as_matrix(self.features, "features")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatchError(f"feature set must be non-empty, got {arr.shape}", (arr.shape,))
        object.__setattr__(self, 'features', arr)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Vocabulary:
    """视觉词表: 前 K₁ 行为共享词, 后 K₂ 行为特定词"""
    words: np.ndarray
    k_specific: int = 0

    def __post_init__(self):
        arr = as_matrix(self.words, "words")
        if self.k_specific < 0 or self.k_specific >= arr.shape[0]:
            raise VocabularyError(
                f"need 0 <= K2 < K, got K2={self.k_specific}, K={arr.shape[0]}"
            )
        object.__setattr__(self, 'words', arr)

    @property
    def k(self) -> int:
        return self.words.shape[0]

    @property
    def d(self) -> int:
        return self.words.shape[1]

    @property
    def k_shared(self) -> int:
        return self.k - self.k_specific

    @property
    def shared(self) -> np.ndarray:
        return self.words[:self.k_shared]

    @property
    def specific(self) -> np.ndarray:
        return self.words[self.k_shared:]

    def with_words(self, words: np.ndarray) -> "Vocabulary":
        """替换词向量, 保留划分"""
        return replace(self, words=words)


@dataclass(frozen=True)
class AssignmentMatrix:
    """分配矩阵 A (N×K)"""
    scores: np.ndarray
    mode: AssignmentMode


@dataclass(frozen=True)
class VladDescriptor:
    """VLAD 描述子"""
    per_cluster: np.ndarray     # K×d 原始残差和
    flat: np.ndarray            # K·d, 块内归一化 + 展平 + L2
    k_shared: int

    @property
    def d(self) -> int:
        return self.per_cluster.shape[1]

    @property
    def shared_slice(self) -> np.ndarray:
        return self.flat[:self.k_shared * self.d]

    @property
    def specific_slice(self) -> np.ndarray:
        return self.flat[self.k_shared * self.d:]


@dataclass(frozen=True)
class GapDescriptor:
    """全局平均池化描述子"""
    flat: np.ndarray


@dataclass
class ClusterStats:
    """
    每个聚类的硬分配统计
    centers 为成员特征均值, 残差中心为 (f_i - c_k) 按类别求均值; 空集合的中心为 0
    """
    counts: np.ndarray                  # N_k
    centers: np.ndarray                 # L_k^c, K×d
    real_counts: np.ndarray
    fake_counts: np.ndarray
    real_residual_centers: np.ndarray   # K×d
    fake_residual_centers: np.ndarray   # K×d
    assignment: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def non_empty(self) -> np.ndarray:
        return self.counts > 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def hard_assign(features: np.ndarray, words: np.ndarray) -> np.ndarray:
    """每个特征分配给点积最大的词 (argmax_k f_i·c_k)"""
    if features.shape[1] != words.shape[1]:
        raise ShapeMismatchError(
            f"feature width {features.shape[1]} != word width {words.shape[1]}",
            (features.shape, words.shape),
        )
    return np.argmax(features @ words.T, axis=1)


def compute_cluster_stats(
    features: np.ndarray,
    words: np.ndarray,
    local_labels: Optional[np.ndarray] = None,
) -> ClusterStats:
    """
    硬分配并统计每个聚类
    Args:
        features: M×d 局部特征
        words: K×d 词表
        local_labels: 每个局部特征的类别 (0 真 / 1 假); 缺省全部记为真
    """
    k, d = words.shape
    assign = hard_assign(features, words)
    labels = np.zeros(features.shape[0], dtype=np.int64) if local_labels is None \
        else np.asarray(local_labels, dtype=np.int64)
    if labels.shape[0] != features.shape[0]:
        raise ShapeMismatchError(
            f"{labels.shape[0]} labels for {features.shape[0]} features",
            (labels.shape, features.shape),
        )

    counts = np.bincount(assign, minlength=k)
    real_mask = labels == 0
    real_counts = np.bincount(assign[real_mask], minlength=k)
    fake_counts = np.bincount(assign[~real_mask], minlength=k)

    sums = np.zeros((k, d))
    np.add.at(sums, assign, features)
    real_sums = np.zeros((k, d))
    np.add.at(real_sums, assign[real_mask], features[real_mask])
    fake_sums = np.zeros((k, d))
    np.add.at(fake_sums, assign[~real_mask], features[~real_mask])

    centers = _safe_mean(sums, counts)
    real_centers = _safe_mean(real_sums, real_counts) - np.where(real_counts[:, None] > 0, words, 0.0)
    fake_centers = _safe_mean(fake_sums, fake_counts) - np.where(fake_counts[:, None] > 0, words, 0.0)

    return ClusterStats(
        counts=counts,
        centers=centers,
        real_counts=real_counts,
        fake_counts=fake_counts,
        real_residual_centers=real_centers,
        fake_residual_centers=fake_centers,
        assignment=assign,
    )


def _safe_mean(sums: np.ndarray, counts: np.ndarray) -> np.ndarray:
    return sums / np.maximum(counts, 1)[:, None]
