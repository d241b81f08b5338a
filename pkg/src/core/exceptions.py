#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
VLAD-VSA 异常体系
包含：
1. 形状/数值异常
2. 训练与评估异常
3. 文件格式与配置异常
"""

from typing import Dict, Optional, Tuple


class VladVsaError(Exception):
    """系统基础异常"""
    pass


class ShapeMismatchError(VladVsaError, ValueError):
    """矩阵形状不匹配"""

    def __init__(self, message: str, shapes: Tuple = ()):
        super().__init__(message)
        self.shapes = shapes


class NumericalError(VladVsaError, ArithmeticError):
    """数值异常基类 (CLI 退出码 2)"""
    pass


class NonFiniteError(NumericalError):
    """出现 NaN/Inf"""

    def __init__(self, message: str, where: Optional[object] = None):
        super().__init__(message)
        self.where = where


class NonFiniteGradientError(NumericalError):
    """梯度非有限, SGD 步被拒绝"""

    def __init__(self, message: str, tensor_name: str = ""):
        super().__init__(message)
        self.tensor_name = tensor_name


class TrainingDivergedError(NumericalError):
    """训练损失非有限"""

    def __init__(self, iteration: int, breakdown: Dict[str, float]):
        parts = ", ".join(f"{k}={v!r}" for k, v in breakdown.items())
        super().__init__(f"non-finite loss at iteration {iteration}: {parts}")
        self.iteration = iteration
        self.breakdown = dict(breakdown)


class GradientCheckFailed(NumericalError):
    """有限差分校验未通过"""
    pass


class AssignmentModeError(VladVsaError, ValueError):
    """硬分配缓存不可反向传播"""
    pass


class VocabularyError(VladVsaError, ValueError):
    """词表参数非法"""
    pass


class LabelRangeError(VladVsaError, ValueError):
    """标签越界"""
    pass


class SingleDomainError(VladVsaError, ValueError):
    """对抗损失需要至少两个域"""
    pass


class SingleClassError(VladVsaError, ValueError):
    """评估集只含一个类别"""
    pass


class InsufficientSamplesError(VladVsaError, ValueError):
    """某个域/类别样本不足"""
    pass


class SyntheticSpecError(VladVsaError, ValueError):
    """合成数据参数非法"""
    pass


class DescriptorFormatError(VladVsaError):
    """二进制文件格式错误"""
    pass


class BadMagicError(DescriptorFormatError):
    """文件魔数错误"""
    pass


class TruncatedFileError(DescriptorFormatError):
    """文件被截断"""
    pass


class DimensionOverflowError(DescriptorFormatError):
    """维度溢出"""
    pass


class ConfigError(VladVsaError, ValueError):
    """配置错误 (消息格式 path:line: ...)"""

    def __init__(self, message: str, source: str = "", line: Optional[int] = None):
        location = source
        if line is not None:
            location = f"{source}:{line}"
        super().__init__(f"{location}: {message}" if location else message)
        self.source = source
        self.line = line
