#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
词表构建与词表损失
功能：
1. 随机 / k-means++ 初始化词表 (共享-特定划分)
2. 正交损失 ||V_sh V_sp^T||_F^2
3. 中心适配损失 (模仿 k-means 最大化步)
4. 簇内判别损失 (拉开真/假残差中心夹角)
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..exceptions import ShapeMismatchError, VocabularyError
from ..numkernel import DEFAULT_EPS, l2_normalize_rows, l2_normalize_rows_backward, make_rng
from .base import ClusterStats, LocalFeatureSet, Vocabulary, compute_cluster_stats

logger = logging.getLogger('vocabulary')

DEFAULT_K = 32
DEFAULT_K_SPECIFIC = 4
KMEANS_TOL = 1e-9


@dataclass
class KMeansResult:
    """k-means 结果"""
    centroids: np.ndarray
    labels: np.ndarray
    inertia_history: List[float] = field(default_factory=list)
    iterations: int = 0

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1] if self.inertia_history else float('nan')


@dataclass
class IntraLossResult:
    """簇内判别损失及梯度"""
    loss: float
    grad_features: np.ndarray           # M×d
    grad_words: np.ndarray              # K×d
    grad_real_centers: np.ndarray       # K×d, 对未归一化真实残差中心
    grad_fake_centers: np.ndarray       # K×d
    contributing: np.ndarray            # K, 同时含两类的簇
    stats: ClusterStats


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ 播种: 按 D² 概率依次选点"""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # 剩余点都与已选中心重合
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(remaining))
        else:
            idx = int(rng.choice(n, p=closest / total))
        chosen.append(idx)
        closest = np.minimum(closest, np.sum((points - points[idx]) ** 2, axis=1))
    return points[chosen].copy()


def lloyd(
    points: np.ndarray,
    centroids: np.ndarray,
    iters: int = 100,
    tol: float = KMEANS_TOL,
) -> KMeansResult:
    """
    Lloyd 迭代; 记录每次分配步后的惯性, 该序列单调不增
    空簇保留原中心
    """
    centroids = centroids.copy()
    history: List[float] = []
    labels = np.zeros(points.shape[0], dtype=np.int64)
    it = 0
    for it in range(1, iters + 1):
        dist = _sq_distances(points, centroids)
        labels = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(points.shape[0]), labels].sum()))

        new_centroids = centroids.copy()
        for j in range(centroids.shape[0]):
            members = points[labels == j]
            if members.shape[0]:
                new_centroids[j] = members.mean(axis=0)
            else:
                logger.warning(f"k-means 空簇 | cluster={j} | iteration={it}")
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break

    dist = _sq_distances(points, centroids)
    labels = np.argmin(dist, axis=1)
    history.append(float(dist[np.arange(points.shape[0]), labels].sum()))
    return KMeansResult(centroids=centroids, labels=labels, inertia_history=history, iterations=it)


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    iters: int = 100,
    n_init: int = 3,
) -> KMeansResult:
    """
    k-means++ 播种 + Lloyd, 多次重启保留最终惯性最小的结果
    Raises:
        VocabularyError: 不同点的数量少于 k
    """
    points = np.asarray(points, dtype=np.float64)
    distinct = np.unique(points, axis=0).shape[0]
    if distinct < k:
        raise VocabularyError(f"k-means needs >= {k} distinct points, pool has {distinct}")
    rng = make_rng(seed)
    best: Optional[KMeansResult] = None
    for _ in range(max(1, n_init)):
        result = lloyd(points, kmeans_plus_plus(points, k, rng), iters)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def init_vocabulary(
    mode: str,
    k: int,
    k_specific: int,
    d: int,
    seed: int,
    features: Optional[LocalFeatureSet] = None,
    iters: int = 100,
    n_init: int = 3,
) -> Vocabulary:
    """
    初始化词表
    Args:
        mode: 'random' (i.i.d. N(0,1)/√d) 或 'kmeans'
        features: kmeans 模式下的特征池
    """
    if k_specific < 0 or k_specific >= k:
        raise VocabularyError(f"need 0 <= K2 < K, got K2={k_specific}, K={k}")
    if mode == 'random':
        words = make_rng(seed).standard_normal((k, d)) / np.sqrt(d)
    elif mode == 'kmeans':
        if features is None:
            raise VocabularyError("kmeans init requires a feature pool")
        if features.d != d:
            raise ShapeMismatchError(f"pool width {features.d} != d={d}", (features.features.shape,))
        if features.n < k:
            raise VocabularyError(f"pool of {features.n} rows is smaller than K={k}")
        result = kmeans(features.features, k, seed, iters, n_init)
        logger.info(f"k-means 初始化完成 | K={k} | 迭代={result.iterations} | 惯性={result.inertia:.6f}")
        words = result.centroids
    else:
        raise VocabularyError(f"unknown vocabulary init mode: {mode}")
    return Vocabulary(words=words, k_specific=k_specific)


def ortho_loss_and_grad(V: Vocabulary) -> Tuple[float, np.ndarray]:
    """L_ortho = ||V_sh V_sp^T||_F^2 及其对全部词的梯度"""
    grad = np.zeros_like(V.words)
    if V.k_specific == 0:
        return 0.0, grad
    overlap = V.shared @ V.specific.T        # K1×K2
    loss = float(np.sum(overlap ** 2))
    grad[:V.k_shared] = 2.0 * overlap @ V.specific
    grad[V.k_shared:] = 2.0 * overlap.T @ V.shared
    return loss, grad


def centroid_adapt_loss_and_grad(
    batch_features: LocalFeatureSet,
    V: Vocabulary,
    local_labels: Optional[np.ndarray] = None,
) -> Tuple[float, np.ndarray, ClusterStats]:
    """
    L_c_adapt = Σ_k ||L_k^c - c_k||^2 (仅非空簇)
    分配与特征中心视为常数, 梯度只经 c_k 流入词表
    """
    stats = compute_cluster_stats(batch_features.features, V.words, local_labels)
    loss, grad = centroid_adapt_from_stats(V, stats)
    return loss, grad, stats


def centroid_adapt_from_stats(V: Vocabulary, stats: ClusterStats) -> Tuple[float, np.ndarray]:
    """给定 (冻结的) 分配与特征中心, 只对词求损失与梯度"""
    diff = np.where(stats.non_empty[:, None], stats.centers - V.words, 0.0)
    return float(np.sum(diff ** 2)), -2.0 * diff


def intra_cluster_loss_and_grad(
    features: np.ndarray,
    local_labels: np.ndarray,
    V: Vocabulary,
    normalize: bool = True,
    eps: float = DEFAULT_EPS,
) -> IntraLossResult:
    """
    L_intra = Σ_k (1 - ||r̂_real - r̂_fake||^2), 只统计同时含真/假特征的簇
    残差中心默认先做 L2 归一化; 梯度经归一化回传到残差 (f_i - c_k)
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(local_labels, dtype=np.int64)
    stats = compute_cluster_stats(features, V.words, labels)
    contributing = (stats.real_counts > 0) & (stats.fake_counts > 0)

    m_real = stats.real_residual_centers
    m_fake = stats.fake_residual_centers
    if normalize:
        p, n_real = l2_normalize_rows(m_real, eps)
        q, n_fake = l2_normalize_rows(m_fake, eps)
    else:
        p, q = m_real, m_fake

    diff = p - q
    terms = 1.0 - np.sum(diff ** 2, axis=1)
    loss = float(np.sum(terms[contributing]))

    dp = np.where(contributing[:, None], -2.0 * diff, 0.0)
    dq = -dp
    if normalize:
        dm_real = l2_normalize_rows_backward(dp, p, n_real, eps)
        dm_fake = l2_normalize_rows_backward(dq, q, n_fake, eps)
    else:
        dm_real, dm_fake = dp, dq

    # 均值中心 -> 每个成员残差 -> 特征 (+) 与词 (-)
    assign = stats.assignment
    real_mask = labels == 0
    per_real = dm_real / np.maximum(stats.real_counts, 1)[:, None]
    per_fake = dm_fake / np.maximum(stats.fake_counts, 1)[:, None]
    grad_features = np.where(real_mask[:, None], per_real[assign], per_fake[assign])
    grad_words = -(np.where((stats.real_counts > 0)[:, None], dm_real, 0.0)
                   + np.where((stats.fake_counts > 0)[:, None], dm_fake, 0.0))

    return IntraLossResult(
        loss=loss,
        grad_features=grad_features,
        grad_words=grad_words,
        grad_real_centers=dm_real,
        grad_fake_centers=dm_fake,
        contributing=contributing,
        stats=stats,
    )

