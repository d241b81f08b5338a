#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
单个训练批的前向与反向
功能：
1. 编码 -> VLAD / GAP 聚合 -> 分类头, 计算六项损失
2. 按权重合并后一次反向, 得到全部参数张量的梯度
3. 推理用的描述子与真脸概率
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..exceptions import ShapeMismatchError
from ..model.params import ModelParams, classifier_backward, encode_batch, encode_batch_backward, heads_apply
from ..numkernel import softmax_rows
from ..vlad.aggregation import (
    gap_backward_batch,
    gap_pool_batch,
    vlad_backward_batch,
    vlad_forward_batch,
)
from ..vlad.base import AssignmentMode, ClusterStats, LocalFeatureSet
from ..vlad.vocabulary import (
    centroid_adapt_from_stats,
    centroid_adapt_loss_and_grad,
    intra_cluster_loss_and_grad,
    ortho_loss_and_grad,
)
from .objective import (
    LabeledEmbeddingBatch,
    LossTerm,
    LossWeights,
    adversarial_grl,
    cross_entropy_and_grad,
    total_objective,
    triplet_loss_and_grad,
)

logger = logging.getLogger('step')

LOSS_TERMS = ('cls', 'triplet', 'adv', 'ortho', 'c_adapt', 'intra')


@dataclass(frozen=True)
class TrainingBatch:
    """一个训练批: 原始局部特征与标签"""
    raw: np.ndarray             # B×N×d_raw
    class_labels: np.ndarray    # 0 真 / 1 假
    domain_labels: np.ndarray   # 1..S_train

    def __post_init__(self):
        if self.raw.ndim != 3:
            raise ShapeMismatchError(f"raw batch must be B×N×d_raw, got {self.raw.shape}", (self.raw.shape,))
        b = self.raw.shape[0]
        if len(self.class_labels) != b or len(self.domain_labels) != b:
            raise ShapeMismatchError(
                f"label arrays must have length {b}",
                (self.raw.shape, np.shape(self.class_labels), np.shape(self.domain_labels)),
            )

    @property
    def size(self) -> int:
        return self.raw.shape[0]

    @property
    def n_locals(self) -> int:
        return self.raw.shape[1]


@dataclass
class StepResult:
    total: float
    breakdown: Dict[str, float]
    grads: Dict[str, np.ndarray] = field(default_factory=dict)
    no_valid_triplet: bool = False
    centroid_stats: Optional[ClusterStats] = None


@dataclass
class _ForwardState:
    parts: Dict[str, LossTerm]
    encoded: np.ndarray
    encoder_cache: tuple
    vlad_cache: Optional[object]
    no_valid_triplet: bool
    centroid_stats: Optional[ClusterStats] = None


def embed_batch(params: ModelParams, raw: np.ndarray, temperature: float = 3.0) -> np.ndarray:
    """B×N×d_raw -> B×D 描述子 (VLAD 或 GAP)"""
    encoded, _ = encode_batch(np.asarray(raw, dtype=np.float64), params)
    if params.aggregation == 'gap':
        return gap_pool_batch(encoded)
    flat, _ = vlad_forward_batch(encoded, params.vocabulary.words, temperature, AssignmentMode.SOFT)
    return flat


def real_probability(params: ModelParams, raw: np.ndarray, temperature: float = 3.0) -> np.ndarray:
    """分类头 softmax 中 "真" 类的概率, 用作检测分数"""
    heads = heads_apply(embed_batch(params, raw, temperature), params, with_domain=False)
    return softmax_rows(heads.class_logits)[:, 0]


def _evaluate_parts(
    params: ModelParams,
    batch: TrainingBatch,
    weights: LossWeights,
    normalize_intra: bool,
    centroid_targets: Optional[ClusterStats] = None,
) -> _ForwardState:
    encoded, enc_cache = encode_batch(np.asarray(batch.raw, dtype=np.float64), params)
    b, n, d = encoded.shape
    vlad_cache = None
    centroid_stats = None
    if params.aggregation == 'gap':
        flat = gap_pool_batch(encoded)
    else:
        flat, vlad_cache = vlad_forward_batch(encoded, params.vocabulary.words, weights.temperature)

    parts: Dict[str, LossTerm] = {}

    heads = heads_apply(flat, params, with_domain=False)
    cls_loss, d_logits = cross_entropy_and_grad(heads.class_logits, batch.class_labels)
    d_flat_cls, cls_grads = classifier_backward(heads, d_logits, params)
    parts['cls'] = LossTerm(cls_loss, {'flat': d_flat_cls, **{f"classifier.{k}": v for k, v in cls_grads.items()}})

    triplet = triplet_loss_and_grad(
        LabeledEmbeddingBatch(flat, batch.class_labels, batch.domain_labels), weights.margin
    )
    parts['triplet'] = LossTerm(triplet.loss, {'flat': triplet.grad})

    sw = params.shared_width
    adv = adversarial_grl(flat[:, :sw], batch.domain_labels, params.discriminator, weights.grl_coeff)
    d_flat_adv = np.zeros_like(flat)
    d_flat_adv[:, :sw] = adv.grad_generator
    parts['adv'] = LossTerm(
        adv.domain_loss,
        {'flat': d_flat_adv, **{f"discriminator.{k}": v for k, v in adv.grad_discriminator.items()}},
    )

    if params.aggregation == 'vlad':
        vocab = params.vocabulary
        locals_flat = encoded.reshape(b * n, d)
        local_labels = np.repeat(np.asarray(batch.class_labels, dtype=np.int64), n)

        ortho_loss, ortho_grad = ortho_loss_and_grad(vocab)
        parts['ortho'] = LossTerm(ortho_loss, {'vocabulary.words': ortho_grad})

        # 给定冻结目标时只有词参与, 特征中心与分配不随参数变化
        if centroid_targets is None:
            ca_loss, ca_grad, centroid_stats = centroid_adapt_loss_and_grad(
                LocalFeatureSet(locals_flat), vocab
            )
        else:
            centroid_stats = centroid_targets
            ca_loss, ca_grad = centroid_adapt_from_stats(vocab, centroid_targets)
        parts['c_adapt'] = LossTerm(ca_loss, {'vocabulary.words': ca_grad})

        intra = intra_cluster_loss_and_grad(locals_flat, local_labels, vocab, normalize=normalize_intra)
        parts['intra'] = LossTerm(
            intra.loss,
            {'features': intra.grad_features.reshape(b, n, d), 'vocabulary.words': intra.grad_words},
        )

    return _ForwardState(
        parts=parts,
        encoded=encoded,
        encoder_cache=enc_cache,
        vlad_cache=vlad_cache,
        no_valid_triplet=triplet.no_valid_triplet,
        centroid_stats=centroid_stats,
    )


def loss_breakdown(
    params: ModelParams,
    batch: TrainingBatch,
    weights: LossWeights,
    normalize_intra: bool = True,
    centroid_targets: Optional[ClusterStats] = None,
) -> Dict[str, float]:
    """只做前向, 返回各项损失 (GAP 下没有词表相关的三项)"""
    state = _evaluate_parts(params, batch, weights, normalize_intra, centroid_targets)
    return {name: term.value for name, term in state.parts.items()}


def forward_backward(
    params: ModelParams,
    batch: TrainingBatch,
    weights: LossWeights,
    normalize_intra: bool = True,
) -> StepResult:
    """
    L = L_cls + λ1 L_tri + λ2 L_adv + λ3 L_ortho + λ4 L_c_adapt + λ5 L_intra
    判别器参数拿未反转的域损失梯度, 其余参数拿经 GRL 反转后的梯度
    """
    state = _evaluate_parts(params, batch, weights, normalize_intra)
    total, combined = total_objective(state.parts, weights)

    d_flat = combined.pop('flat')
    d_features = combined.pop('features', None)
    if params.aggregation == 'gap':
        grad_features = gap_backward_batch(d_flat, batch.n_locals)
    else:
        grad_features, grad_words = vlad_backward_batch(state.vlad_cache, d_flat)
        combined['vocabulary.words'] = combined.get('vocabulary.words', 0.0) + grad_words
    if d_features is not None:
        grad_features = grad_features + d_features

    _, enc_grads = encode_batch_backward(state.encoder_cache, grad_features, params)
    for key, grad in enc_grads.items():
        combined[f"encoder.{key}"] = grad

    grads = {
        name: combined.get(name, np.zeros_like(tensor))
        for name, tensor in params.tensors().items()
    }
    breakdown = {name: term.value for name, term in state.parts.items()}
    return StepResult(
        total=total,
        breakdown=breakdown,
        grads=grads,
        no_valid_triplet=state.no_valid_triplet,
        centroid_stats=state.centroid_stats,
    )


def generator_surrogate(breakdown: Dict[str, float], weights: LossWeights) -> float:
    """
    生成器侧的等效目标: 对抗项系数为 -grl_coeff·λ2
    其有限差分应与经 GRL 反转后的生成器梯度一致
    """
    total = 0.0
    for name, value in breakdown.items():
        weight = weights.weight_of(name)
        if name == 'adv':
            weight = -weights.grl_coeff * weight
        total += weight * value
    return total


def plain_total(breakdown: Dict[str, float], weights: LossWeights) -> float:
    return float(sum(weights.weight_of(name) * value for name, value in breakdown.items()))
