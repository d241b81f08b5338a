#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
任务损失与总目标
功能：
1. 交叉熵 (分类 / 域判别)
2. 两类三元组损失 (batch-all, 带 hinge)
3. 梯度反转层实现的对抗域对齐 (只看共享表示)
4. 加权总目标
"""

import logging
from dataclasses import dataclass, field, fields
from typing import Dict, Mapping, Protocol, Tuple

import numpy as np

from ..exceptions import LabelRangeError, NonFiniteError, ShapeMismatchError, SingleDomainError
from ..numkernel import softmax_rows

logger = logging.getLogger('objective')

# 总目标中各项的名称与对应权重字段
TERM_WEIGHTS = {
    'cls': None,
    'triplet': 'lambda1',
    'adv': 'lambda2',
    'ortho': 'lambda3',
    'c_adapt': 'lambda4',
    'intra': 'lambda5',
}


@dataclass(frozen=True)
class LossWeights:
    """总目标的标量超参数"""
    lambda1: float = 0.1    # triplet
    lambda2: float = 0.1    # adversarial
    lambda3: float = 0.1    # ortho
    lambda4: float = 0.1    # c_adapt
    lambda5: float = 0.1    # intra
    temperature: float = 3.0
    margin: float = 0.1
    grl_coeff: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if not np.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} must be finite")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.margin < 0:
            raise ValueError(f"margin must be non-negative, got {self.margin}")

    def weight_of(self, term: str) -> float:
        attr = TERM_WEIGHTS[term]
        return 1.0 if attr is None else float(getattr(self, attr))


@dataclass(frozen=True)
class LabeledEmbeddingBatch:
    """带类别/域标签的描述子批"""
    embeddings: np.ndarray      # B×D
    class_labels: np.ndarray    # 0 真 / 1 假
    domain_labels: np.ndarray   # 1..S

    def __post_init__(self):
        b = self.embeddings.shape[0]
        if b < 2:
            raise ShapeMismatchError(f"batch needs >= 2 rows, got {b}", (self.embeddings.shape,))
        if len(self.class_labels) != b or len(self.domain_labels) != b:
            raise ShapeMismatchError(
                f"label arrays must have length {b}",
                (self.embeddings.shape, np.shape(self.class_labels), np.shape(self.domain_labels)),
            )


@dataclass
class TripletResult:
    loss: float
    grad: np.ndarray
    num_valid: int
    num_active: int
    no_valid_triplet: bool = False


class Discriminator(Protocol):
    """判别器接口: forward 返回 (logits, cache), backward 返回 (输入梯度, 参数梯度)"""

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, object]: ...

    def backward(self, cache: object, upstream: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]: ...


@dataclass
class AdversarialResult:
    domain_loss: float
    grad_generator: np.ndarray              # 已反转, -grl_coeff * grad_input
    grad_input: np.ndarray                  # 判别器输入梯度 (未反转)
    grad_discriminator: Dict[str, np.ndarray]
    domain_logits: np.ndarray


@dataclass
class LossTerm:
    """单项损失值与其对各命名量的梯度"""
    value: float
    grads: Dict[str, np.ndarray] = field(default_factory=dict)


def cross_entropy_and_grad(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """batch 平均的 -log softmax[label]; 梯度 (softmax - onehot)/B"""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    if labels.shape != (b,):
        raise ShapeMismatchError(f"{labels.shape} labels for {b} rows", (logits.shape, labels.shape))
    if np.any(labels < 0) or np.any(labels >= c):
        raise LabelRangeError(f"labels must lie in [0, {c}), got {labels.min()}..{labels.max()}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = float(-log_probs[np.arange(b), labels].mean())
    grad = softmax_rows(logits)
    grad[np.arange(b), labels] -= 1.0
    return loss, grad / b


def triplet_loss_and_grad(batch: LabeledEmbeddingBatch, m: float = 0.1) -> TripletResult:
    """
    batch-all 三元组: 对所有 (a, p, n) 满足 y_a=y_p, a≠p, y_a≠y_n
    求 max(0, ||e_a-e_p||² - ||e_a-e_n||² + m) 的均值
    """
    emb = np.asarray(batch.embeddings, dtype=np.float64)
    labels = np.asarray(batch.class_labels)
    b = emb.shape[0]
    # 直接差分, 对角线严格为 0
    dist = np.sum((emb[:, None, :] - emb[None, :, :]) ** 2, axis=2)

    same = labels[:, None] == labels[None, :]
    not_self = ~np.eye(b, dtype=bool)
    pos = same & not_self
    neg = ~same
    valid = pos[:, :, None] & neg[:, None, :]        # a×p×n
    num_valid = int(valid.sum())
    if num_valid == 0:
        logger.warning("batch 内没有有效三元组, triplet 损失记为 0")
        return TripletResult(loss=0.0, grad=np.zeros_like(emb), num_valid=0, num_active=0,
                             no_valid_triplet=True)

    margins = dist[:, :, None] - dist[:, None, :] + m
    active = valid & (margins > 0)
    loss = float(np.sum(np.where(active, margins, 0.0)) / num_valid)

    w = active.astype(np.float64) / num_valid
    # Σ M_ij D_ij, M = C_ap - C_an
    coef = w.sum(axis=2) - w.sum(axis=1)
    sym = coef + coef.T
    grad = 2.0 * (np.diag(sym.sum(axis=1)) - sym) @ emb
    return TripletResult(loss=loss, grad=grad, num_valid=num_valid, num_active=int(active.sum()))


def grl_forward(x: np.ndarray) -> np.ndarray:
    """梯度反转层前向为恒等"""
    return np.array(x, copy=True)


def grl_backward(upstream: np.ndarray, grl_coeff: float = 1.0) -> np.ndarray:
    """反向: g -> -grl_coeff * g"""
    return -grl_coeff * upstream


def adversarial_grl(
    shared_embeddings: np.ndarray,
    domain_labels: np.ndarray,
    discriminator: Discriminator,
    grl_coeff: float = 1.0,
) -> AdversarialResult:
    """
    判别器只读共享表示; 域交叉熵的输入梯度经 GRL 反转后交给生成器,
    判别器参数拿未反转的梯度
    Args:
        domain_labels: 1..S
    """
    labels = np.asarray(domain_labels, dtype=np.int64)
    if np.unique(labels).size < 2:
        raise SingleDomainError(f"adversarial loss needs >= 2 domains, batch has {np.unique(labels)}")
    x = grl_forward(shared_embeddings)
    logits, cache = discriminator.forward(x)
    loss, d_logits = cross_entropy_and_grad(logits, labels - 1)
    grad_input, disc_grads = discriminator.backward(cache, d_logits)
    return AdversarialResult(
        domain_loss=loss,
        grad_generator=grl_backward(grad_input, grl_coeff),
        grad_input=grad_input,
        grad_discriminator=disc_grads,
        domain_logits=logits,
    )


def total_objective(
    parts: Mapping[str, LossTerm], w: LossWeights
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    L = L_cls + λ1 L_tri + λ2 L_adv + λ3 L_ortho + λ4 L_c_adapt + λ5 L_intra
    梯度按同样的权重逐键累加 (对抗项的生成器梯度已反转)
    """
    total = 0.0
    combined: Dict[str, np.ndarray] = {}
    for name, term in parts.items():
        if name not in TERM_WEIGHTS:
            raise KeyError(f"unknown loss term: {name}")
        if not np.isfinite(term.value):
            raise NonFiniteError(f"loss term '{name}' is non-finite: {term.value}", where=name)
        weight = w.weight_of(name)
        total += weight * term.value
        for key, grad in term.grads.items():
            if not np.all(np.isfinite(grad)):
                raise NonFiniteError(f"gradient '{key}' of loss term '{name}' is non-finite", where=name)
            if key in combined:
                combined[key] = combined[key] + weight * grad
            else:
                combined[key] = weight * grad
    return total, combined
