#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
数值内核
功能：
1. 带维度检查的稠密矩阵运算 (float64)
2. 可复现的随机数约定 (Philox 计数器生成器)
3. 中心差分梯度与梯度校验报告
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .exceptions import NonFiniteError, ShapeMismatchError

DEFAULT_EPS = 1e-12
DEFAULT_STEP = 1e-5
# 相对误差分母下限, 避免解析梯度为 0 的坐标被噪声放大
REL_ERR_FLOOR = 1e-6

Coordinate = Tuple[int, ...]


def make_rng(seed: int) -> np.random.Generator:
    """同一种子在所有平台上产生同一序列"""
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, count: int) -> list:
    """从一个种子派生 count 个相互独立的子生成器"""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """转换为二维 float64 数组并检查有限性"""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {arr.shape}", (arr.shape,))
    ensure_finite(arr, name)
    return arr


def ensure_finite(arr: np.ndarray, name: str = "value") -> None:
    """出现 NaN/Inf 时抛出异常并给出第一个坐标"""
    arr = np.asarray(arr)
    if arr.size and not np.all(np.isfinite(arr)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
        raise NonFiniteError(f"{name} has non-finite entry at {bad}", where=bad)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """标准矩阵乘积, 维度不符时报告两个形状"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul dimension mismatch: {a.shape} x {b.shape}", (a.shape, b.shape)
        )
    out = a @ b
    ensure_finite(out, "matmul result")
    return out


def l2_normalize(v: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """L2 归一化; 范数不超过 eps 时原样返回"""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm > eps:
        return v / norm
    return v.copy()


def l2_normalize_rows(x: np.ndarray, eps: float = DEFAULT_EPS) -> Tuple[np.ndarray, np.ndarray]:
    """沿最后一维逐行归一化, 返回 (结果, 范数)"""
    norms = np.linalg.norm(x, axis=-1)
    safe = norms > eps
    scale = np.where(safe, norms, 1.0)
    return x / scale[..., None], norms


def l2_normalize_rows_backward(
    upstream: np.ndarray, normalized: np.ndarray, norms: np.ndarray, eps: float = DEFAULT_EPS
) -> np.ndarray:
    """逐行归一化的反向传播; 未归一化的行梯度原样透传"""
    safe = norms > eps
    proj = np.sum(normalized * upstream, axis=-1, keepdims=True)
    scale = np.where(safe, norms, 1.0)[..., None]
    grad = (upstream - normalized * proj) / scale
    return np.where(safe[..., None], grad, upstream)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """减去行最大值后的 softmax"""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / np.sum(expd, axis=-1, keepdims=True)


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = DEFAULT_STEP
) -> np.ndarray:
    """
    逐坐标中心差分 (f(x+h·e_i) - f(x-h·e_i)) / 2h
    Returns:
        与 x 同形状的数值梯度
    """
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + h
        right = float(f(x))
        x.flat[i] = old - h
        left = float(f(x))
        x.flat[i] = old
        if not (np.isfinite(right) and np.isfinite(left)):
            coord = tuple(int(c) for c in np.unravel_index(i, x.shape))
            raise NonFiniteError(f"non-finite function value at coordinate {coord}", where=coord)
        grad.flat[i] = (right - left) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class GradCheckReport:
    """梯度校验结果"""
    name: str
    max_abs_err: float
    max_rel_err: float
    num_params_checked: int
    worst_index: Coordinate

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err < tol

    def merge(self, other: "GradCheckReport") -> "GradCheckReport":
        """合并多个实例的报告, 保留最差坐标"""
        worst = self if self.max_rel_err >= other.max_rel_err else other
        return GradCheckReport(
            name=self.name,
            max_abs_err=max(self.max_abs_err, other.max_abs_err),
            max_rel_err=worst.max_rel_err,
            num_params_checked=self.num_params_checked + other.num_params_checked,
            worst_index=worst.worst_index,
        )

    def format_line(self) -> str:
        status = "ok" if self.passed() else "FAIL"
        return (
            f"{self.name:<10} | params={self.num_params_checked:<6} | "
            f"max_abs={self.max_abs_err:.3e} | max_rel={self.max_rel_err:.3e} | "
            f"worst={self.worst_index} | {status}"
        )


def compare_gradients(
    analytic: np.ndarray,
    numeric: np.ndarray,
    name: str = "",
    floor: float = REL_ERR_FLOOR,
) -> GradCheckReport:
    """按 |a-n| / max(|a|, |n|, floor) 计算逐坐标相对误差"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.shape != numeric.shape:
        raise ShapeMismatchError(
            f"gradient shape mismatch: {analytic.shape} vs {numeric.shape}",
            (analytic.shape, numeric.shape),
        )
    if analytic.size == 0:
        raise ValueError("nothing to check")
    abs_err = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel_err = abs_err / denom
    worst = int(np.argmax(rel_err))
    return GradCheckReport(
        name=name,
        max_abs_err=float(abs_err.max()),
        max_rel_err=float(rel_err.flat[worst]),
        num_params_checked=int(analytic.size),
        worst_index=tuple(int(c) for c in np.unravel_index(worst, analytic.shape)),
    )


def check_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    analytic: np.ndarray,
    name: str = "",
    h: float = DEFAULT_STEP,
) -> GradCheckReport:
    """解析梯度与中心差分对比"""
    numeric = finite_diff_grad(f, x, h)
    return compare_gradients(analytic, numeric, name)


def merge_reports(reports: Sequence[GradCheckReport], name: Optional[str] = None) -> GradCheckReport:
    """合并一组报告"""
    if not reports:
        raise ValueError("no reports to merge")
    merged = reports[0]
    for report in reports[1:]:
        merged = merged.merge(report)
    if name is not None:
        merged = GradCheckReport(
            name=name,
            max_abs_err=merged.max_abs_err,
            max_rel_err=merged.max_rel_err,
            num_params_checked=merged.num_params_checked,
            worst_index=merged.worst_index,
        )
    return merged
