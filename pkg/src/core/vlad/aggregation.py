#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
NetVLAD / GAP 聚合
功能：
1. 全局平均池化
2. 软/硬分配与 VLAD 前向 (块内归一化 + 展平 + L2)
3. 软分配下的精确反向传播
4. 匹配核恒等式的暴力校验
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..exceptions import AssignmentModeError, ShapeMismatchError
from ..numkernel import (
    DEFAULT_EPS,
    ensure_finite,
    l2_normalize_rows,
    l2_normalize_rows_backward,
    softmax_rows,
)
from .base import (
    AssignmentMatrix,
    AssignmentMode,
    GapDescriptor,
    LocalFeatureSet,
    VladDescriptor,
    Vocabulary,
    hard_assign,
)

DEFAULT_TEMPERATURE = 3.0


@dataclass(frozen=True)
class VladCache:
    """一次前向调用的中间量, 供反向使用 (批维度在前)"""
    features: np.ndarray        # B×N×d
    words: np.ndarray           # K×d
    temperature: float
    mode: AssignmentMode
    assignment: np.ndarray      # B×N×K
    blocks: np.ndarray          # B×K×d, 未归一化残差和
    block_norms: np.ndarray     # B×K
    intra: np.ndarray           # B×K×d, 块内归一化后
    flat_norms: np.ndarray      # B
    flat: np.ndarray            # B×K·d


def gap_pool(L: LocalFeatureSet) -> GapDescriptor:
    """列均值 F_avg"""
    return GapDescriptor(flat=L.features.mean(axis=0))


def gap_pool_batch(features: np.ndarray) -> np.ndarray:
    """B×N×d -> B×d"""
    return features.mean(axis=1)


def gap_backward_batch(upstream: np.ndarray, n_locals: int) -> np.ndarray:
    """B×d -> B×N×d, 均值的梯度均分到每个局部特征"""
    return np.repeat(upstream[:, None, :] / n_locals, n_locals, axis=1)


def _check_widths(features: np.ndarray, words: np.ndarray) -> None:
    if features.shape[-1] != words.shape[1]:
        raise ShapeMismatchError(
            f"feature width {features.shape[-1]} != vocabulary width {words.shape[1]}: "
            f"{features.shape} vs {words.shape}",
            (features.shape, words.shape),
        )


def assignment_scores(
    features: np.ndarray,
    words: np.ndarray,
    temperature: float = DEFAULT_TEMPERATURE,
    mode: AssignmentMode = AssignmentMode.SOFT,
) -> np.ndarray:
    """
    A = L V^T 之后的软/硬分配, 支持 (..., N, d) 批输入
    Returns:
        (..., N, K) 分配分数
    """
    _check_widths(features, words)
    dots = features @ words.T
    if mode is AssignmentMode.HARD:
        out = np.zeros_like(dots)
        idx = np.argmax(dots, axis=-1)
        np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
        return out
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    return softmax_rows(temperature * dots)


def compute_assignment(
    L: LocalFeatureSet,
    V: Vocabulary,
    t: float = DEFAULT_TEMPERATURE,
    mode: AssignmentMode = AssignmentMode.SOFT,
) -> AssignmentMatrix:
    """单样本分配矩阵"""
    return AssignmentMatrix(scores=assignment_scores(L.features, V.words, t, mode), mode=mode)


def vlad_forward_batch(
    features: np.ndarray,
    words: np.ndarray,
    temperature: float = DEFAULT_TEMPERATURE,
    mode: AssignmentMode = AssignmentMode.SOFT,
    eps: float = DEFAULT_EPS,
) -> Tuple[np.ndarray, VladCache]:
    """
    批量 VLAD 前向
    Args:
        features: B×N×d
        words: K×d
    Returns:
        (B×K·d 归一化描述子, 缓存)
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise ShapeMismatchError(f"batched features must be B×N×d, got {features.shape}", (features.shape,))
    _check_widths(features, words)
    b, _, d = features.shape
    k = words.shape[0]

    assign = assignment_scores(features, words, temperature, mode)
    mass = assign.sum(axis=1)                                   # B×K
    # F_vlad^k = Σ_i a_ik f_i - (Σ_i a_ik) c_k
    blocks = np.einsum('bnk,bnd->bkd', assign, features) - mass[:, :, None] * words[None]
    intra, block_norms = l2_normalize_rows(blocks, eps)
    flat_raw = intra.reshape(b, k * d)
    flat, flat_norms = l2_normalize_rows(flat_raw, eps)
    ensure_finite(flat, "vlad descriptor")

    cache = VladCache(
        features=features,
        words=words,
        temperature=temperature,
        mode=mode,
        assignment=assign,
        blocks=blocks,
        block_norms=block_norms,
        intra=intra,
        flat_norms=flat_norms,
        flat=flat,
    )
    return flat, cache


def vlad_backward_batch(
    cache: VladCache, upstream: np.ndarray, eps: float = DEFAULT_EPS
) -> Tuple[np.ndarray, np.ndarray]:
    """
    批量 VLAD 反向
    Returns:
        (B×N×d 特征梯度, K×d 词表梯度)
    """
    if cache.mode is not AssignmentMode.SOFT:
        raise AssignmentModeError("hard-assignment VLAD is not differentiable; backward rejected")
    b, _, d = cache.features.shape
    k = cache.words.shape[0]
    upstream = np.asarray(upstream, dtype=np.float64).reshape(b, k * d)

    # 全局 L2
    d_flat_raw = l2_normalize_rows_backward(upstream, cache.flat, cache.flat_norms, eps)
    # 块内 L2
    d_blocks = l2_normalize_rows_backward(
        d_flat_raw.reshape(b, k, d), cache.intra, cache.block_norms, eps
    )

    A = cache.assignment
    L = cache.features
    V = cache.words
    # 残差和对特征/词的直接项
    grad_L = np.einsum('bnk,bkd->bnd', A, d_blocks)
    grad_V = -np.einsum('bk,bkd->kd', A.sum(axis=1), d_blocks)

    # dA_ik = (f_i - c_k)·dB_k
    dA = np.einsum('bnd,bkd->bnk', L, d_blocks) - np.einsum('kd,bkd->bk', V, d_blocks)[:, None, :]
    # softmax 反向, Z = t L V^T
    dZ = A * (dA - np.sum(A * dA, axis=-1, keepdims=True))
    t = cache.temperature
    grad_L += t * np.einsum('bnk,kd->bnd', dZ, V)
    grad_V += t * np.einsum('bnk,bnd->kd', dZ, L)
    return grad_L, grad_V


def vlad_forward(
    L: LocalFeatureSet,
    V: Vocabulary,
    t: float = DEFAULT_TEMPERATURE,
    mode: AssignmentMode = AssignmentMode.SOFT,
) -> Tuple[VladDescriptor, VladCache]:
    """单样本 VLAD 前向"""
    flat, cache = vlad_forward_batch(L.features[None], V.words, t, mode)
    descriptor = VladDescriptor(per_cluster=cache.blocks[0], flat=flat[0], k_shared=V.k_shared)
    return descriptor, cache


def vlad_backward(cache: VladCache, upstream_grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """单样本 VLAD 反向, 返回 (N×d, K×d)"""
    grad_L, grad_V = vlad_backward_batch(cache, np.asarray(upstream_grad)[None])
    return grad_L[0], grad_V


def raw_vlad(features: np.ndarray, words: np.ndarray) -> np.ndarray:
    """未归一化的硬分配 VLAD (K×d), 用于匹配核恒等式"""
    assign = hard_assign(features, words)
    out = np.zeros_like(words, dtype=np.float64)
    np.add.at(out, assign, features - words[assign])
    return out


def matching_kernel_oracle(
    x1: LocalFeatureSet, x2: LocalFeatureSet, V: Vocabulary
) -> Tuple[float, float]:
    """
    硬分配、不归一化下的暴力匹配核
    Returns:
        (gap_sim, vlad_sim): 全对全局部点积和, 以及同簇残差点积和
    """
    if x1.d != x2.d or x1.d != V.d:
        raise ShapeMismatchError(
            f"dimension mismatch: {x1.features.shape}, {x2.features.shape}, {V.words.shape}",
            (x1.features.shape, x2.features.shape, V.words.shape),
        )
    a1 = hard_assign(x1.features, V.words)
    a2 = hard_assign(x2.features, V.words)

    gap_sim = 0.0
    vlad_sim = 0.0
    for i, fi in enumerate(x1.features):
        for j, fj in enumerate(x2.features):
            gap_sim += float(np.dot(fi, fj))
            if a1[i] == a2[j]:
                c = V.words[a1[i]]
                vlad_sim += float(np.dot(fi - c, fj - c))
    return gap_sim, vlad_sim
