#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
合成多域数据
功能：
1. 每个域一个平移向量, 与共享欺骗线索正交
2. 假样本中 ceil(rho_cue·N) 个局部特征带线索; 每个样本以 1/2 概率改用该域特有的攻击向量
3. 按域派生独立随机流, 同一种子逐位可复现
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import SyntheticSpecError
from ..core.numkernel import make_rng, spawn_rngs
from ..core.vlad.base import LocalFeatureSet

logger = logging.getLogger('synthetic')

REAL = 0
FAKE = 1


@dataclass(frozen=True)
class Sample:
    """一个样本: N×d_raw 局部特征与标签"""
    raw_features: LocalFeatureSet
    class_label: int        # 0 真 / 1 假
    domain_label: int       # 1..S

    def __post_init__(self):
        if self.class_label not in (REAL, FAKE):
            raise SyntheticSpecError(f"class label must be 0 or 1, got {self.class_label}")
        if self.domain_label < 1:
            raise SyntheticSpecError(f"domain label must be >= 1, got {self.domain_label}")


@dataclass(frozen=True)
class SyntheticSpec:
    """合成数据参数; 向量按域逐行存放"""
    num_domains: int
    n_locals: int
    d_raw: int
    rho_cue: float
    shared_cue_vector: np.ndarray           # d_raw
    domain_shifts: np.ndarray               # S×d_raw
    specific_attack_vectors: np.ndarray     # S×d_raw
    noise_sigmas: np.ndarray                # S
    samples_per_domain_per_class: int
    seed: int = 0

    def __post_init__(self):
        s, d = self.num_domains, self.d_raw
        if s < 1 or self.n_locals < 1 or d < 1:
            raise SyntheticSpecError(f"need S, N, d_raw >= 1, got S={s}, N={self.n_locals}, d_raw={d}")
        if not 0.0 < self.rho_cue <= 1.0:
            raise SyntheticSpecError(f"rho_cue must lie in (0, 1], got {self.rho_cue}")
        if self.samples_per_domain_per_class < 1:
            raise SyntheticSpecError(
                f"samples_per_domain_per_class must be >= 1, got {self.samples_per_domain_per_class}"
            )
        expected = {
            'shared_cue_vector': (d,),
            'domain_shifts': (s, d),
            'specific_attack_vectors': (s, d),
            'noise_sigmas': (s,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if np.shape(arr) != shape:
                raise SyntheticSpecError(f"{name} must have shape {shape}, got {np.shape(arr)}")
            if not np.all(np.isfinite(arr)):
                raise SyntheticSpecError(f"{name} contains non-finite values")
        if np.any(self.noise_sigmas <= 0):
            raise SyntheticSpecError(f"noise_sigma must be positive, got {self.noise_sigmas}")
        if np.linalg.norm(self.shared_cue_vector) == 0:
            raise SyntheticSpecError("shared cue vector must be nonzero")
        if np.any(np.linalg.norm(self.specific_attack_vectors, axis=1) == 0):
            raise SyntheticSpecError("every specific attack vector must be nonzero")

    @property
    def cue_count(self) -> int:
        """每个假样本中带线索的局部特征个数"""
        return math.ceil(self.rho_cue * self.n_locals)


def make_synthetic_spec(
    num_domains: int = 4,
    n_locals: int = 16,
    d_raw: int = 8,
    rho_cue: float = 0.2,
    noise_sigma: float = 0.5,
    samples_per_domain_per_class: int = 200,
    seed: int = 0,
    shift_scale: float = 2.0,
    cue_scale: float = 2.0,
    attack_scale: float = 2.0,
) -> SyntheticSpec:
    """
    按种子抽取线索与各域向量
    域平移先投影掉共享线索方向, 保证与其正交
    """
    if d_raw < 2:
        raise SyntheticSpecError(f"d_raw must be >= 2 to keep shifts orthogonal to the cue, got {d_raw}")
    rng = make_rng(seed)
    cue = rng.standard_normal(d_raw)
    cue = cue_scale * cue / np.linalg.norm(cue)

    unit_cue = cue / np.linalg.norm(cue)
    shifts = rng.standard_normal((num_domains, d_raw))
    shifts -= np.outer(shifts @ unit_cue, unit_cue)
    shifts = shift_scale * shifts / np.linalg.norm(shifts, axis=1, keepdims=True)

    attacks = rng.standard_normal((num_domains, d_raw))
    attacks = attack_scale * attacks / np.linalg.norm(attacks, axis=1, keepdims=True)

    return SyntheticSpec(
        num_domains=num_domains,
        n_locals=n_locals,
        d_raw=d_raw,
        rho_cue=rho_cue,
        shared_cue_vector=cue,
        domain_shifts=shifts,
        specific_attack_vectors=attacks,
        noise_sigmas=np.full(num_domains, float(noise_sigma)),
        samples_per_domain_per_class=samples_per_domain_per_class,
        seed=seed,
    )


def _generate_domain(spec: SyntheticSpec, domain: int, rng: np.random.Generator) -> List[Sample]:
    idx = domain - 1
    shift = spec.domain_shifts[idx]
    sigma = spec.noise_sigmas[idx]
    n, d = spec.n_locals, spec.d_raw
    samples: List[Sample] = []
    for label in (REAL, FAKE):
        for _ in range(spec.samples_per_domain_per_class):
            feats = shift + sigma * rng.standard_normal((n, d))
            if label == FAKE:
                carriers = rng.choice(n, size=spec.cue_count, replace=False)
                use_specific = rng.random() < 0.5
                cue = spec.specific_attack_vectors[idx] if use_specific else spec.shared_cue_vector
                feats[carriers] += cue
            samples.append(Sample(raw_features=LocalFeatureSet(feats), class_label=label, domain_label=domain))
    return samples


def generate_synthetic(spec: SyntheticSpec) -> Dict[int, List[Sample]]:
    """
    生成全部域的数据
    Returns:
        {域标签 1..S: 样本列表 (先真后假, 各 samples_per_domain_per_class 个)}
    """
    rngs = spawn_rngs(spec.seed, spec.num_domains)
    datasets = {
        domain: _generate_domain(spec, domain, rng)
        for domain, rng in zip(range(1, spec.num_domains + 1), rngs)
    }
    logger.info(
        f"合成数据已生成 | S={spec.num_domains} | N={spec.n_locals} | d_raw={spec.d_raw} | "
        f"每域每类={spec.samples_per_domain_per_class} | seed={spec.seed}"
    )
    return datasets


def stack_samples(samples: Sequence[Sample]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """样本列表 -> (B×N×d_raw, 类别, 域标签)"""
    if not samples:
        raise SyntheticSpecError("cannot stack an empty sample list")
    raw = np.stack([s.raw_features.features for s in samples])
    classes = np.array([s.class_label for s in samples], dtype=np.int64)
    domains = np.array([s.domain_label for s in samples], dtype=np.int64)
    return raw, classes, domains


def split_by_class(samples: Sequence[Sample]) -> Dict[int, List[Sample]]:
    out: Dict[int, List[Sample]] = {REAL: [], FAKE: []}
    for s in samples:
        out[s.class_label].append(s)
    return out


def select_domains(
    datasets: Dict[int, List[Sample]], domains: Optional[Sequence[int]] = None
) -> Dict[int, List[Sample]]:
    """按域标签升序取子集"""
    keys = sorted(datasets) if domains is None else sorted(domains)
    missing = [k for k in keys if k not in datasets]
    if missing:
        raise SyntheticSpecError(f"unknown domains: {missing}")
    return {k: datasets[k] for k in keys}
