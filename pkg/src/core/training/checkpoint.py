#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
检查点二进制格式 (小端)
    magic  b"VVSA0001"
    重复直到文件结束:
        u32 名称长度, 名称 (utf-8), u32 rank, rank × u32 维度, float64 原始数据
元信息 (K₂、聚合方式、激活函数等) 以 meta.* 标量张量保存
"""

import logging
import math
from typing import Dict

import numpy as np

from ..exceptions import BadMagicError, DescriptorFormatError, DimensionOverflowError, TruncatedFileError
from ..model.layers import ACTIVATIONS, Linear, TwoLayerMLP
from ..model.params import AGGREGATIONS, ModelParams
from ..vlad.base import Vocabulary

logger = logging.getLogger('checkpoint')

MAGIC = b"VVSA0001"
MAX_RANK = 8
MAX_ELEMENTS = 1 << 31


def _meta(params: ModelParams) -> Dict[str, np.ndarray]:
    k_specific = params.vocabulary.k_specific if params.vocabulary is not None else 0
    return {
        'meta.k_specific': np.array([float(k_specific)]),
        'meta.aggregation': np.array([float(AGGREGATIONS.index(params.aggregation))]),
        'meta.use_specific': np.array([1.0 if params.use_specific else 0.0]),
        'meta.encoder_activation': np.array([float(ACTIVATIONS.index(params.encoder.activation))]),
        'meta.discriminator_activation': np.array([float(ACTIVATIONS.index(params.discriminator.activation))]),
    }


def encode_tensors(tensors: Dict[str, np.ndarray]) -> bytes:
    """按插入顺序编码命名张量"""
    chunks = [MAGIC]
    for name, arr in tensors.items():
        raw_name = name.encode('utf-8')
        arr = np.ascontiguousarray(arr, dtype='<f8')
        chunks.append(np.array([len(raw_name)], dtype='<u4').tobytes())
        chunks.append(raw_name)
        chunks.append(np.array([arr.ndim], dtype='<u4').tobytes())
        chunks.append(np.array(arr.shape, dtype='<u4').tobytes())
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def decode_tensors(blob: bytes) -> Dict[str, np.ndarray]:
    """解码命名张量, 格式错误时给出区分的诊断"""
    if blob[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic: expected {MAGIC!r}, got {blob[:len(MAGIC)]!r}")
    pos = len(MAGIC)
    out: Dict[str, np.ndarray] = {}

    def take(count: int) -> bytes:
        nonlocal pos
        if pos + count > len(blob):
            raise TruncatedFileError(f"truncated file at byte {pos}: need {count} more bytes")
        chunk = blob[pos:pos + count]
        pos += count
        return chunk

    while pos < len(blob):
        name_len = int(np.frombuffer(take(4), dtype='<u4')[0])
        raw_name = take(name_len)
        try:
            name = raw_name.decode('utf-8')
        except UnicodeDecodeError as e:
            raise DescriptorFormatError(f"malformed tensor name at byte {pos - name_len}: {raw_name!r}") from e
        rank = int(np.frombuffer(take(4), dtype='<u4')[0])
        if rank > MAX_RANK:
            raise DimensionOverflowError(f"dimension overflow: tensor {name} has rank {rank}")
        dims = tuple(int(x) for x in np.frombuffer(take(4 * rank), dtype='<u4'))
        count = math.prod(dims)
        if count > MAX_ELEMENTS:
            raise DimensionOverflowError(f"dimension overflow: tensor {name} has shape {dims}")
        data = np.frombuffer(take(8 * count), dtype='<f8').astype(np.float64)
        out[name] = data.reshape(dims)
    return out


def params_from_tensors(tensors: Dict[str, np.ndarray]) -> ModelParams:
    """由命名张量重建 ModelParams"""
    try:
        k_specific = int(tensors['meta.k_specific'][0])
        aggregation = AGGREGATIONS[int(tensors['meta.aggregation'][0])]
        use_specific = bool(tensors['meta.use_specific'][0])
        enc_act = ACTIVATIONS[int(tensors['meta.encoder_activation'][0])]
        disc_act = ACTIVATIONS[int(tensors['meta.discriminator_activation'][0])]
        encoder = TwoLayerMLP(
            w1=tensors['encoder.w1'], b1=tensors['encoder.b1'],
            w2=tensors['encoder.w2'], b2=tensors['encoder.b2'], activation=enc_act,
        )
        classifier = Linear(w=tensors['classifier.w'], b=tensors['classifier.b'])
        discriminator = TwoLayerMLP(
            w1=tensors['discriminator.w1'], b1=tensors['discriminator.b1'],
            w2=tensors['discriminator.w2'], b2=tensors['discriminator.b2'], activation=disc_act,
        )
    except KeyError as e:
        raise DescriptorFormatError(f"checkpoint is missing tensor {e}") from e
    vocabulary = None
    if 'vocabulary.words' in tensors:
        vocabulary = Vocabulary(words=tensors['vocabulary.words'], k_specific=k_specific)
    return ModelParams(
        encoder=encoder,
        classifier=classifier,
        discriminator=discriminator,
        vocabulary=vocabulary,
        aggregation=aggregation,
        use_specific=use_specific,
    )


def save_checkpoint(path: str, params: ModelParams) -> None:
    """写出检查点, 重读可逐位还原"""
    tensors = dict(params.tensors())
    tensors.update(_meta(params))
    with open(path, 'wb') as f:
        f.write(encode_tensors(tensors))
    logger.info(f"检查点已写出 | path={path} | tensors={len(tensors)}")


def load_checkpoint(path: str) -> ModelParams:
    with open(path, 'rb') as f:
        blob = f.read()
    return params_from_tensors(decode_tensors(blob))
