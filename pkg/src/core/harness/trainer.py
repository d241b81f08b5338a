#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
训练循环
功能：
1. 按 TrainConfig 初始化参数 (词表随机或 k-means 初始化)
2. 每次迭代: 采样 -> 前向/反向 -> SGD 更新, 记录各项损失
3. 损失非有限时中止并给出迭代号与分项
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from ...data.synthetic import Sample
from ..exceptions import NonFiniteError, NumericalError, SingleDomainError, TrainingDivergedError
from ..model.params import ModelParams, encode_batch, init_params
from ..numkernel import spawn_rngs
from ..training.objective import LossWeights
from ..training.optimizer import OptimState, sgd_step
from ..training.step import LOSS_TERMS, forward_backward, loss_breakdown
from ..vlad.base import LocalFeatureSet
from ..vlad.vocabulary import init_vocabulary
from .sampler import sample_batch

TRACE_COLUMNS = ['iteration', *LOSS_TERMS, 'total', 'lr']
VOCAB_INITS = ('random', 'kmeans')


@dataclass(frozen=True)
class TrainConfig:
    """训练配置; 批大小 = S_train × (per_domain_real + per_domain_fake)"""
    per_domain_real: int = 10
    per_domain_fake: int = 10
    iterations: int = 500
    learning_rate: float = 0.01
    lr_drop_iter: Optional[int] = 300
    lr_dropped: Optional[float] = 0.001
    momentum: float = 0.9
    weights: LossWeights = field(default_factory=LossWeights)
    k: int = 32
    k_specific: int = 4
    hidden: int = 16
    d: int = 8
    disc_hidden: int = 16
    activation: str = 'relu'
    aggregation: str = 'vlad'
    use_specific: bool = True
    vocab_init: str = 'random'
    kmeans_n_init: int = 3
    normalize_intra: bool = True
    seed: int = 0
    eval_every: int = 50

    def __post_init__(self):
        if self.per_domain_real < 1 or self.per_domain_fake < 1:
            raise ValueError("per-domain counts must be >= 1")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.vocab_init not in VOCAB_INITS:
            raise ValueError(f"unknown vocab_init: {self.vocab_init}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")

    @property
    def k_shared(self) -> int:
        return self.k - self.k_specific

    @property
    def temperature(self) -> float:
        return self.weights.temperature

    @property
    def margin(self) -> float:
        return self.weights.margin

    def batch_size(self, num_sources: int) -> int:
        return num_sources * (self.per_domain_real + self.per_domain_fake)


@dataclass
class TrainingResult:
    params: ModelParams
    trace: pd.DataFrame
    source_domains: tuple
    no_valid_triplet_batches: int = 0


class Trainer:
    """单次训练运行; 参数更新串行进行"""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.logger = logging.getLogger('trainer')

    def init_model(self, sources: Dict[int, List[Sample]], rng: np.random.Generator) -> ModelParams:
        cfg = self.cfg
        first = next(iter(sources.values()))[0]
        params = init_params(
            seed=cfg.seed,
            d_raw=first.raw_features.d,
            hidden=cfg.hidden,
            d=cfg.d,
            k=cfg.k,
            k_specific=cfg.k_specific,
            num_domains=len(sources),
            disc_hidden=cfg.disc_hidden,
            aggregation=cfg.aggregation,
            use_specific=cfg.use_specific,
            activation=cfg.activation,
        )
        if cfg.aggregation == 'vlad' and cfg.vocab_init == 'kmeans':
            raw = np.stack([s.raw_features.features for samples in sources.values() for s in samples])
            encoded, _ = encode_batch(raw, params)
            pool = LocalFeatureSet(encoded.reshape(-1, cfg.d))
            vocab = init_vocabulary(
                'kmeans', cfg.k, cfg.k_specific, cfg.d, int(rng.integers(2 ** 31)),
                features=pool, n_init=cfg.kmeans_n_init,
            )
            params = replace(params, vocabulary=vocab)
        return params

    def run(
        self,
        sources: Dict[int, List[Sample]],
        params: Optional[ModelParams] = None,
    ) -> TrainingResult:
        cfg = self.cfg
        if len(sources) < 2:
            raise SingleDomainError(f"training needs >= 2 source domains, got {sorted(sources)}")
        sampler_rng, init_rng = spawn_rngs(cfg.seed, 2)
        if params is None:
            params = self.init_model(sources, init_rng)

        opt = OptimState(
            learning_rate=cfg.learning_rate,
            momentum=cfg.momentum,
            drop_iter=cfg.lr_drop_iter,
            dropped_lr=cfg.lr_dropped,
        )
        self.logger.info(
            f"训练开始 | sources={sorted(sources)} | batch={cfg.batch_size(len(sources))} | "
            f"iterations={cfg.iterations} | aggregation={cfg.aggregation} | K={cfg.k} | K2={cfg.k_specific}"
        )

        rows = []
        no_triplet = 0
        for it in range(cfg.iterations):
            batch = sample_batch(sources, cfg, sampler_rng)
            lr = opt.current_lr()
            try:
                result = forward_backward(params, batch, cfg.weights, cfg.normalize_intra)
            except NonFiniteError as e:
                breakdown = self._safe_breakdown(params, batch, e)
                self.logger.error(f"损失非有限, 训练中止 | 迭代 {it} | {breakdown}", exc_info=True)
                raise TrainingDivergedError(it, breakdown) from e
            if not np.isfinite(result.total):
                self.logger.error(f"损失非有限, 训练中止 | 迭代 {it} | {result.breakdown}")
                raise TrainingDivergedError(it, result.breakdown)
            no_triplet += int(result.no_valid_triplet)

            try:
                params = sgd_step(params, result.grads, opt)
            except NumericalError:
                self.logger.error(f"参数更新被拒绝 | 迭代 {it}", exc_info=True)
                raise

            row = {'iteration': it, **{name: result.breakdown.get(name, 0.0) for name in LOSS_TERMS},
                   'total': result.total, 'lr': lr}
            rows.append(row)
            message = (
                f"迭代 {it} | " + " | ".join(f"{name}={row[name]:.4f}" for name in LOSS_TERMS)
                + f" | total={result.total:.4f} | lr={lr:.4f}"
            )
            if (it + 1) % cfg.eval_every == 0 or it == cfg.iterations - 1:
                self.logger.info(message)
            else:
                self.logger.debug(message)

        trace = pd.DataFrame(rows, columns=TRACE_COLUMNS)
        self.logger.info(f"训练结束 | iterations={cfg.iterations} | 无有效三元组的批={no_triplet}")
        return TrainingResult(
            params=params,
            trace=trace,
            source_domains=tuple(sorted(sources)),
            no_valid_triplet_batches=no_triplet,
        )

    def _safe_breakdown(self, params, batch, error: NonFiniteError) -> Dict[str, float]:
        try:
            return loss_breakdown(params, batch, self.cfg.weights, self.cfg.normalize_intra)
        except NonFiniteError:
            return {str(error.where): float('nan')}


def run_training(
    sources: Dict[int, List[Sample]],
    cfg: TrainConfig,
    params: Optional[ModelParams] = None,
) -> TrainingResult:
    """在给定源域上训练, 返回参数与损失轨迹"""
    return Trainer(cfg).run(sources, params)
