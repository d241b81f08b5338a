#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
局部特征集文件
功能：
1. VVSAFEAT 二进制读写 (小端)
       magic b"VVSAFEAT", u32 样本数, u32 N, u32 d_raw,
       每个样本: u8 类别, u8 域, N·d_raw 个 float32 (行优先)
2. CSV 导出 (sample_id, domain, class, local_index, f0..f{d-1}), 首行为配置注释
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from ..core.exceptions import BadMagicError, DimensionOverflowError, TruncatedFileError
from ..core.vlad.base import LocalFeatureSet
from .synthetic import Sample

logger = logging.getLogger('descriptor_io')

MAGIC = b"VVSAFEAT"
HEADER = np.dtype([('count', '<u4'), ('n', '<u4'), ('d', '<u4')])
MAX_ELEMENTS_PER_SAMPLE = 1 << 28
U32_MAX = (1 << 32) - 1


def encode_samples(samples: Sequence[Sample]) -> bytes:
    """样本列表 -> VVSAFEAT 字节串; 空列表只有文件头"""
    if samples:
        n, d = samples[0].raw_features.n, samples[0].raw_features.d
    else:
        n = d = 0
    for s in samples:
        if (s.raw_features.n, s.raw_features.d) != (n, d):
            raise DimensionOverflowError(
                f"dimension overflow: sample shape {s.raw_features.features.shape} != ({n}, {d})"
            )
        if s.domain_label > 255:
            raise DimensionOverflowError(f"dimension overflow: domain label {s.domain_label} exceeds u8")
    if len(samples) > U32_MAX:
        raise DimensionOverflowError(f"dimension overflow: {len(samples)} samples exceed u32")

    header = np.array([(len(samples), n, d)], dtype=HEADER)
    if not samples:
        return MAGIC + header.tobytes()
    record = np.dtype([('cls', 'u1'), ('dom', 'u1'), ('feat', '<f4', (n * d,))])
    body = np.zeros(len(samples), dtype=record)
    for i, s in enumerate(samples):
        body[i]['cls'] = s.class_label
        body[i]['dom'] = s.domain_label
        body[i]['feat'] = s.raw_features.features.astype('<f4').ravel()
    return MAGIC + header.tobytes() + body.tobytes()


def decode_samples(blob: bytes) -> List[Sample]:
    """
    VVSAFEAT 字节串 -> 样本列表 (特征转回 float64)
    Raises:
        BadMagicError / TruncatedFileError / DimensionOverflowError
    """
    if blob[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic: expected {MAGIC!r}, got {blob[:len(MAGIC)]!r}")
    start = len(MAGIC)
    if len(blob) < start + HEADER.itemsize:
        raise TruncatedFileError(f"truncated file: header needs {start + HEADER.itemsize} bytes, got {len(blob)}")
    header = np.frombuffer(blob, dtype=HEADER, count=1, offset=start)[0]
    count, n, d = int(header['count']), int(header['n']), int(header['d'])
    if n * d > MAX_ELEMENTS_PER_SAMPLE:
        raise DimensionOverflowError(f"dimension overflow: N={n}, d_raw={d}")
    if count > 0 and n * d == 0:
        raise DimensionOverflowError(f"dimension overflow: {count} samples with empty feature block N={n}, d_raw={d}")

    if count == 0:
        return []
    record = np.dtype([('cls', 'u1'), ('dom', 'u1'), ('feat', '<f4', (n * d,))])
    offset = start + HEADER.itemsize
    need = offset + count * record.itemsize
    if len(blob) < need:
        raise TruncatedFileError(f"truncated file: expected {need} bytes for {count} samples, got {len(blob)}")
    body = np.frombuffer(blob, dtype=record, count=count, offset=offset)
    return [
        Sample(
            raw_features=LocalFeatureSet(row['feat'].reshape(n, d).astype(np.float64)),
            class_label=int(row['cls']),
            domain_label=int(row['dom']),
        )
        for row in body
    ]


def write_samples(path: str, samples: Sequence[Sample]) -> None:
    with open(path, 'wb') as f:
        f.write(encode_samples(samples))
    logger.info(f"特征文件已写出 | path={path} | samples={len(samples)}")


def read_samples(path: str) -> List[Sample]:
    with open(path, 'rb') as f:
        blob = f.read()
    samples = decode_samples(blob)
    logger.debug(f"特征文件已读取 | path={path} | samples={len(samples)}")
    return samples


def samples_to_frame(samples: Sequence[Sample]) -> pd.DataFrame:
    """每个局部特征一行"""
    if not samples:
        return pd.DataFrame(columns=['sample_id', 'domain', 'class', 'local_index'])
    n, d = samples[0].raw_features.n, samples[0].raw_features.d
    feats = np.concatenate([s.raw_features.features for s in samples])
    frame = pd.DataFrame(feats, columns=[f"f{j}" for j in range(d)])
    frame.insert(0, 'local_index', np.tile(np.arange(n), len(samples)))
    frame.insert(0, 'class', np.repeat([s.class_label for s in samples], n))
    frame.insert(0, 'domain', np.repeat([s.domain_label for s in samples], n))
    frame.insert(0, 'sample_id', np.repeat(np.arange(len(samples)), n))
    return frame


def write_frame(path: str, frame: pd.DataFrame, config_line: Optional[str] = None) -> None:
    """CSV 写出; 给定配置时首行写 '# config: ...'"""
    with open(path, 'w', encoding='utf-8', newline='') as f:
        if config_line is not None:
            f.write(f"# config: {config_line}\n")
        frame.to_csv(f, index=False)


def read_frame(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment='#')


def export_csv(path: str, samples: Sequence[Sample], config_line: Optional[str] = None) -> None:
    write_frame(path, samples_to_frame(samples), config_line)
    logger.info(f"特征 CSV 已写出 | path={path} | samples={len(samples)}")
