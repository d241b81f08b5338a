#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
可训练参数
功能：
1. 逐描述子编码器 G (两层 MLP, 代替卷积主干)
2. 词表、二分类头、域判别器 D
3. 命名张量视图 (优化器与检查点共用)
"""

from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple, Union

import numpy as np

from ..exceptions import ShapeMismatchError
from ..numkernel import make_rng
from ..vlad.base import LocalFeatureSet, VladDescriptor, Vocabulary
from ..vlad.vocabulary import init_vocabulary
from .layers import Linear, TwoLayerMLP

AGGREGATIONS = ('vlad', 'gap')
NUM_CLASSES = 2
PARAM_GROUPS = ('encoder', 'vocabulary', 'classifier', 'discriminator')


@dataclass(frozen=True)
class ModelParams:
    """完整的可训练状态"""
    encoder: TwoLayerMLP
    classifier: Linear
    discriminator: TwoLayerMLP
    vocabulary: Optional[Vocabulary] = None
    aggregation: str = 'vlad'
    use_specific: bool = True

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation: {self.aggregation}")
        if self.aggregation == 'vlad' and self.vocabulary is None:
            raise ShapeMismatchError("vlad aggregation needs a vocabulary")
        if self.vocabulary is not None and self.vocabulary.d != self.encoder.out_width:
            raise ShapeMismatchError(
                f"vocabulary width {self.vocabulary.d} != encoder output {self.encoder.out_width}",
                (self.vocabulary.words.shape, self.encoder.w2.shape),
            )
        if self.classifier.in_width != self.classifier_width:
            raise ShapeMismatchError(
                f"classifier input {self.classifier.in_width} != {self.classifier_width}",
                (self.classifier.w.shape,),
            )
        if self.discriminator.in_width != self.shared_width:
            raise ShapeMismatchError(
                f"discriminator input {self.discriminator.in_width} != shared width {self.shared_width}",
                (self.discriminator.w1.shape,),
            )

    @property
    def d(self) -> int:
        return self.encoder.out_width

    @property
    def d_raw(self) -> int:
        return self.encoder.in_width

    @property
    def num_domains(self) -> int:
        return self.discriminator.out_width

    @property
    def embedding_width(self) -> int:
        if self.aggregation == 'gap':
            return self.d
        return self.vocabulary.k * self.d

    @property
    def shared_width(self) -> int:
        """判别器只看共享切片; K₂=0 或 GAP 时即完整向量"""
        if self.aggregation == 'gap':
            return self.d
        return self.vocabulary.k_shared * self.d

    @property
    def classifier_width(self) -> int:
        return self.embedding_width if self.use_specific else self.shared_width

    def tensors(self) -> Dict[str, np.ndarray]:
        """按 group.name 命名的参数张量"""
        out: Dict[str, np.ndarray] = {}
        for name, arr in self.encoder.tensors().items():
            out[f"encoder.{name}"] = arr
        if self.vocabulary is not None:
            out["vocabulary.words"] = self.vocabulary.words
        for name, arr in self.classifier.tensors().items():
            out[f"classifier.{name}"] = arr
        for name, arr in self.discriminator.tensors().items():
            out[f"discriminator.{name}"] = arr
        return out

    def with_tensors(self, tensors: Dict[str, np.ndarray]) -> "ModelParams":
        """用同名张量替换, 未给出的保持不变"""
        groups: Dict[str, Dict[str, np.ndarray]] = {g: {} for g in PARAM_GROUPS}
        for key, arr in tensors.items():
            group, _, name = key.partition('.')
            if group not in groups:
                raise KeyError(f"unknown parameter tensor: {key}")
            groups[group][name] = arr
        vocab = self.vocabulary
        if groups['vocabulary']:
            vocab = vocab.with_words(groups['vocabulary']['words'])
        return replace(
            self,
            encoder=self.encoder.with_tensors(groups['encoder']),
            vocabulary=vocab,
            classifier=self.classifier.with_tensors(groups['classifier']),
            discriminator=self.discriminator.with_tensors(groups['discriminator']),
        )


@dataclass(frozen=True)
class HeadsCache:
    class_input: np.ndarray
    domain_cache: Optional[Tuple[np.ndarray, ...]]


@dataclass(frozen=True)
class HeadsOutput:
    class_logits: np.ndarray        # B×2
    domain_logits: Optional[np.ndarray]   # B×S
    cache: HeadsCache


def init_params(
    seed: int,
    d_raw: int,
    hidden: int,
    d: int,
    k: int,
    k_specific: int,
    num_domains: int,
    disc_hidden: int = 16,
    aggregation: str = 'vlad',
    use_specific: bool = True,
    activation: str = 'relu',
    vocabulary: Optional[Vocabulary] = None,
) -> ModelParams:
    """按种子初始化全部参数; 词表默认随机初始化"""
    rng_enc, rng_vocab, rng_cls, rng_disc = (make_rng(seed + offset) for offset in range(4))
    encoder = TwoLayerMLP.init(rng_enc, d_raw, hidden, d, activation)
    if aggregation == 'vlad':
        if vocabulary is None:
            vocab_seed = int(rng_vocab.integers(2 ** 31))
            vocabulary = init_vocabulary('random', k, k_specific, d, vocab_seed)
        embed = vocabulary.k * d
        shared = vocabulary.k_shared * d
    else:
        vocabulary = None
        embed = shared = d
    cls_width = embed if use_specific else shared
    return ModelParams(
        encoder=encoder,
        vocabulary=vocabulary,
        classifier=Linear.init(rng_cls, cls_width, NUM_CLASSES),
        discriminator=TwoLayerMLP.init(rng_disc, shared, disc_hidden, num_domains),
        aggregation=aggregation,
        use_specific=use_specific,
    )


def encode_batch(raw: np.ndarray, params: ModelParams) -> Tuple[np.ndarray, Tuple[np.ndarray, ...]]:
    """B×N×d_raw -> B×N×d, 每行独立同映射"""
    if raw.ndim != 3 or raw.shape[2] != params.d_raw:
        raise ShapeMismatchError(
            f"raw batch must be B×N×{params.d_raw}, got {raw.shape}", (raw.shape,)
        )
    b, n, _ = raw.shape
    out, cache = params.encoder.forward(raw.reshape(b * n, -1))
    return out.reshape(b, n, -1), cache


def encode_batch_backward(
    cache: Tuple[np.ndarray, ...], upstream: np.ndarray, params: ModelParams
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    b, n, d = upstream.shape
    grad_raw, grads = params.encoder.backward(cache, upstream.reshape(b * n, d))
    return grad_raw.reshape(b, n, -1), grads


def encoder_apply(raw: LocalFeatureSet, params: ModelParams) -> Tuple[LocalFeatureSet, Tuple[np.ndarray, ...]]:
    """单个样本的编码"""
    if raw.d != params.d_raw:
        raise ShapeMismatchError(f"raw width {raw.d} != encoder input {params.d_raw}", (raw.features.shape,))
    out, cache = params.encoder.forward(raw.features)
    return LocalFeatureSet(out), cache


def heads_apply(
    descriptor: Union[VladDescriptor, np.ndarray],
    params: ModelParams,
    with_domain: bool = True,
) -> HeadsOutput:
    """
    分类头读完整描述子 (或仅共享切片), 判别器只读共享切片
    Args:
        descriptor: 单个描述子或 B×D 描述子矩阵
    """
    emb = descriptor.flat[None] if isinstance(descriptor, VladDescriptor) else np.atleast_2d(descriptor)
    if emb.shape[1] != params.embedding_width:
        raise ShapeMismatchError(
            f"descriptor width {emb.shape[1]} != {params.embedding_width}", (emb.shape,)
        )
    shared = emb[:, :params.shared_width]
    class_input = emb if params.use_specific else shared
    class_logits, _ = params.classifier.forward(class_input)
    domain_logits = None
    domain_cache = None
    if with_domain:
        domain_logits, domain_cache = params.discriminator.forward(shared)
    return HeadsOutput(
        class_logits=class_logits,
        domain_logits=domain_logits,
        cache=HeadsCache(class_input=class_input, domain_cache=domain_cache),
    )


def classifier_backward(
    heads: HeadsOutput, d_class_logits: np.ndarray, params: ModelParams
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """分类头反向, 返回 (对描述子的梯度 B×D, 分类头参数梯度)"""
    d_input, grads = params.classifier.backward(heads.cache.class_input, d_class_logits)
    if params.use_specific:
        return d_input, grads
    d_emb = np.zeros((d_input.shape[0], params.embedding_width))
    d_emb[:, :params.shared_width] = d_input
    return d_emb, grads
