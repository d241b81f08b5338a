#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
稠密层 (手写前向/反向)
包含：
1. Linear: y = x W + b
2. TwoLayerMLP: x -> act(x W1 + b1) W2 + b2
"""

from dataclasses import dataclass, replace
from typing import Dict, Tuple

import numpy as np

from ..exceptions import ShapeMismatchError

ACTIVATIONS = ('relu', 'identity', 'tanh')


def activate(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == 'relu':
        return np.maximum(x, 0.0)
    if kind == 'tanh':
        return np.tanh(x)
    if kind == 'identity':
        return x
    raise ValueError(f"unknown activation: {kind}")


def activate_backward(pre: np.ndarray, post: np.ndarray, upstream: np.ndarray, kind: str) -> np.ndarray:
    """relu 在 0 处取次梯度 0"""
    if kind == 'relu':
        return upstream * (pre > 0.0)
    if kind == 'tanh':
        return upstream * (1.0 - post ** 2)
    if kind == 'identity':
        return upstream
    raise ValueError(f"unknown activation: {kind}")


@dataclass(frozen=True)
class Linear:
    """线性层"""
    w: np.ndarray   # in×out
    b: np.ndarray   # out

    @property
    def in_width(self) -> int:
        return self.w.shape[0]

    @property
    def out_width(self) -> int:
        return self.w.shape[1]

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if x.shape[-1] != self.in_width:
            raise ShapeMismatchError(
                f"linear input width {x.shape[-1]} != {self.in_width}", (x.shape, self.w.shape)
            )
        return x @ self.w + self.b, x

    def backward(self, cache: np.ndarray, upstream: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        x = cache
        grads = {'w': x.T @ upstream, 'b': upstream.sum(axis=0)}
        return upstream @ self.w.T, grads

    def tensors(self) -> Dict[str, np.ndarray]:
        return {'w': self.w, 'b': self.b}

    def with_tensors(self, tensors: Dict[str, np.ndarray]) -> "Linear":
        return replace(self, **tensors)

    @classmethod
    def init(cls, rng: np.random.Generator, in_width: int, out_width: int, scale: float = 1.0) -> "Linear":
        w = rng.standard_normal((in_width, out_width)) * scale / np.sqrt(in_width)
        return cls(w=w, b=np.zeros(out_width))


@dataclass(frozen=True)
class TwoLayerMLP:
    """两层感知机, 隐层带激活, 输出层线性"""
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = 'relu'

    @property
    def in_width(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def out_width(self) -> int:
        return self.w2.shape[1]

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, Tuple[np.ndarray, ...]]:
        if x.shape[-1] != self.in_width:
            raise ShapeMismatchError(
                f"mlp input width {x.shape[-1]} != {self.in_width}", (x.shape, self.w1.shape)
            )
        pre = x @ self.w1 + self.b1
        hid = activate(pre, self.activation)
        out = hid @ self.w2 + self.b2
        return out, (x, pre, hid)

    def backward(self, cache: Tuple[np.ndarray, ...], upstream: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        x, pre, hid = cache
        d_hid = upstream @ self.w2.T
        d_pre = activate_backward(pre, hid, d_hid, self.activation)
        grads = {
            'w1': x.T @ d_pre,
            'b1': d_pre.sum(axis=0),
            'w2': hid.T @ upstream,
            'b2': upstream.sum(axis=0),
        }
        return d_pre @ self.w1.T, grads

    def tensors(self) -> Dict[str, np.ndarray]:
        return {'w1': self.w1, 'b1': self.b1, 'w2': self.w2, 'b2': self.b2}

    def with_tensors(self, tensors: Dict[str, np.ndarray]) -> "TwoLayerMLP":
        return replace(self, **tensors)

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        in_width: int,
        hidden: int,
        out_width: int,
        activation: str = 'relu',
    ) -> "TwoLayerMLP":
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation: {activation}")
        gain = np.sqrt(2.0) if activation == 'relu' else 1.0
        return cls(
            w1=rng.standard_normal((in_width, hidden)) * gain / np.sqrt(in_width),
            b1=np.zeros(hidden),
            w2=rng.standard_normal((hidden, out_width)) / np.sqrt(hidden),
            b2=np.zeros(out_width),
            activation=activation,
        )

    @classmethod
    def identity(cls, width: int) -> "TwoLayerMLP":
        """恒等配置 (单位权重, 零偏置, 恒等激活)"""
        eye = np.eye(width)
        return cls(w1=eye.copy(), b1=np.zeros(width), w2=eye.copy(), b2=np.zeros(width),
                   activation='identity')
