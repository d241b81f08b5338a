#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
SGD 优化器
功能：
1. 动量 SGD, 词表与其它参数一样更新
2. 分段学习率 (到达 drop_iter 后降为 dropped_lr)
3. 非有限梯度拒绝更新
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..exceptions import NonFiniteGradientError, ShapeMismatchError
from ..model.params import ModelParams

logger = logging.getLogger('optimizer')


@dataclass
class OptimState:
    """优化器状态"""
    learning_rate: float = 0.01
    momentum: float = 0.9
    iteration: int = 0
    drop_iter: Optional[int] = None
    dropped_lr: Optional[float] = None
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")

    def current_lr(self) -> float:
        """当前迭代使用的学习率"""
        if self.drop_iter is not None and self.dropped_lr is not None and self.iteration >= self.drop_iter:
            return self.dropped_lr
        return self.learning_rate


def sgd_step(params: ModelParams, grads: Dict[str, np.ndarray], opt: OptimState) -> ModelParams:
    """
    p <- p - lr * v, v <- momentum * v + g
    未给出梯度的张量保持不变
    Raises:
        NonFiniteGradientError: 任一梯度非有限, 此时状态不变
    """
    tensors = params.tensors()
    for name, grad in grads.items():
        if name not in tensors:
            raise KeyError(f"gradient for unknown tensor: {name}")
        if grad.shape != tensors[name].shape:
            raise ShapeMismatchError(
                f"gradient shape {grad.shape} != parameter shape {tensors[name].shape} for {name}",
                (grad.shape, tensors[name].shape),
            )
        if not np.all(np.isfinite(grad)):
            logger.error(f"梯度非有限, 拒绝更新 | tensor={name} | iteration={opt.iteration}")
            raise NonFiniteGradientError(f"non-finite gradient for {name}", tensor_name=name)

    lr = opt.current_lr()
    if opt.drop_iter is not None and opt.iteration == opt.drop_iter:
        logger.info(f"学习率下调 | iteration={opt.iteration} | lr={lr}")

    updated: Dict[str, np.ndarray] = {}
    for name, grad in grads.items():
        prev = opt.velocity.get(name)
        v = grad.copy() if prev is None else opt.momentum * prev + grad
        opt.velocity[name] = v
        updated[name] = tensors[name] - lr * v
    opt.iteration += 1
    return params.with_tensors(updated)
