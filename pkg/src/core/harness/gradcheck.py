#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
有限差分梯度校验套件
功能：
1. VLAD 前向、正交、中心适应、簇内判别、三元组各自的解析梯度对比中心差分
2. 小配置下的端到端校验 (覆盖编码器、词表、分类头、判别器)
3. 实例按种子抽取, 跳过靠近不可导点 (ReLU 拐点、硬分配并列、hinge 边界) 的实例
"""

import logging
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from ..exceptions import GradientCheckFailed
from ..model.params import ModelParams, init_params
from ..numkernel import DEFAULT_STEP, GradCheckReport, check_gradient, merge_reports, spawn_rngs
from ..training.objective import LabeledEmbeddingBatch, LossWeights, triplet_loss_and_grad
from ..training.step import TrainingBatch, forward_backward, generator_surrogate, loss_breakdown, plain_total
from ..vlad.aggregation import vlad_backward_batch, vlad_forward_batch
from ..vlad.base import LocalFeatureSet, Vocabulary
from ..vlad.vocabulary import centroid_adapt_loss_and_grad, intra_cluster_loss_and_grad, ortho_loss_and_grad

GRADCHECK_TOL = 1e-4
CHECK_NAMES = ('vlad', 'ortho', 'c_adapt', 'intra', 'triplet', 'end-to-end')


@dataclass(frozen=True)
class GradCheckConfig:
    instances: int = 20
    seed: int = 0
    step: float = DEFAULT_STEP
    tol: float = GRADCHECK_TOL
    clearance: float = 1e-3         # 与不可导点的最小距离
    max_attempts: int = 50          # 每个实例最多重抽次数
    # 端到端小配置
    batch: int = 8
    n_locals: int = 6
    d_raw: int = 5
    hidden: int = 6
    d: int = 4
    k: int = 4
    k_specific: int = 1
    num_domains: int = 3
    disc_hidden: int = 5


def assignment_gap(features: np.ndarray, words: np.ndarray) -> float:
    """每行最高与次高点积之差的最小值"""
    scores = np.sort(features @ words.T, axis=1)
    return float(np.min(scores[:, -1] - scores[:, -2]))


def triplet_clearance(emb: np.ndarray, labels: np.ndarray, m: float) -> float:
    """有效三元组的 hinge 参数离 0 的最小距离"""
    dist = np.sum((emb[:, None, :] - emb[None, :, :]) ** 2, axis=2)
    same = labels[:, None] == labels[None, :]
    pos = same & ~np.eye(len(labels), dtype=bool)
    valid = pos[:, :, None] & ~same[:, None, :]
    margins = dist[:, :, None] - dist[:, None, :] + m
    return float(np.min(np.abs(margins[valid])))


class GradientChecker:
    """逐项运行梯度校验, 每项合并为一行报告"""

    def __init__(self, cfg: GradCheckConfig = GradCheckConfig()):
        self.cfg = cfg
        self.logger = logging.getLogger('gradcheck')

    def _collect(self, name: str, rng: np.random.Generator, draw: Callable) -> GradCheckReport:
        """draw(rng) 返回一个报告, 或在实例不够光滑时返回 None"""
        reports: List[GradCheckReport] = []
        attempts = 0
        while len(reports) < self.cfg.instances:
            attempts += 1
            if attempts > self.cfg.instances * self.cfg.max_attempts:
                raise GradientCheckFailed(f"{name}: could not draw {self.cfg.instances} smooth instances")
            report = draw(rng)
            if report is not None:
                reports.append(report)
        merged = merge_reports(reports, name)
        self.logger.debug(f"校验完成 | {name} | instances={len(reports)} | attempts={attempts}")
        return merged

    def _check(self, f, x, analytic, name) -> GradCheckReport:
        return check_gradient(f, x, analytic, name, self.cfg.step)

    def vlad(self, rng: np.random.Generator) -> GradCheckReport:
        def draw(rng):
            feats = rng.standard_normal((6, 4))
            words = rng.standard_normal((4, 4))
            upstream = rng.standard_normal(words.size)
            _, cache = vlad_forward_batch(feats[None], words)
            grad_l, grad_v = vlad_backward_batch(cache, upstream[None])

            def f_l(x):
                return float(vlad_forward_batch(x[None], words)[0][0] @ upstream)

            def f_v(x):
                return float(vlad_forward_batch(feats[None], x)[0][0] @ upstream)

            return self._check(f_l, feats, grad_l[0], 'vlad').merge(self._check(f_v, words, grad_v, 'vlad'))
        return self._collect('vlad', rng, draw)

    def ortho(self, rng: np.random.Generator) -> GradCheckReport:
        def draw(rng):
            vocab = Vocabulary(rng.standard_normal((5, 3)), k_specific=2)
            _, grad = ortho_loss_and_grad(vocab)
            return self._check(lambda x: ortho_loss_and_grad(Vocabulary(x, 2))[0], vocab.words, grad, 'ortho')
        return self._collect('ortho', rng, draw)

    def c_adapt(self, rng: np.random.Generator) -> GradCheckReport:
        def draw(rng):
            feats = rng.standard_normal((12, 3))
            words = rng.standard_normal((4, 3))
            if assignment_gap(feats, words) < self.cfg.clearance:
                return None
            pool = LocalFeatureSet(feats)
            _, grad, _ = centroid_adapt_loss_and_grad(pool, Vocabulary(words))
            return self._check(lambda x: centroid_adapt_loss_and_grad(pool, Vocabulary(x))[0],
                               words, grad, 'c_adapt')
        return self._collect('c_adapt', rng, draw)

    def intra(self, rng: np.random.Generator) -> GradCheckReport:
        def draw(rng):
            feats = rng.standard_normal((24, 3))
            words = rng.standard_normal((3, 3))
            labels = rng.permutation(np.repeat([0, 1], 12))
            if assignment_gap(feats, words) < self.cfg.clearance:
                return None
            result = intra_cluster_loss_and_grad(feats, labels, Vocabulary(words))
            if not result.contributing.any():
                return None
            f_feat = lambda x: intra_cluster_loss_and_grad(x, labels, Vocabulary(words)).loss
            f_words = lambda x: intra_cluster_loss_and_grad(feats, labels, Vocabulary(x)).loss
            return (self._check(f_feat, feats, result.grad_features, 'intra')
                    .merge(self._check(f_words, words, result.grad_words, 'intra')))
        return self._collect('intra', rng, draw)

    def triplet(self, rng: np.random.Generator) -> GradCheckReport:
        margin = LossWeights().margin

        def draw(rng):
            emb = rng.standard_normal((8, 5))
            labels = rng.permutation(np.repeat([0, 1], 4))
            if triplet_clearance(emb, labels, margin) < self.cfg.clearance:
                return None
            domains = np.ones(8, dtype=np.int64)
            grad = triplet_loss_and_grad(LabeledEmbeddingBatch(emb, labels, domains), margin).grad
            f = lambda x: triplet_loss_and_grad(LabeledEmbeddingBatch(x, labels, domains), margin).loss
            return self._check(f, emb, grad, 'triplet')
        return self._collect('triplet', rng, draw)

    def _tiny_instance(self, rng: np.random.Generator):
        cfg = self.cfg
        params = init_params(
            seed=int(rng.integers(2 ** 31)),
            d_raw=cfg.d_raw,
            hidden=cfg.hidden,
            d=cfg.d,
            k=cfg.k,
            k_specific=cfg.k_specific,
            num_domains=cfg.num_domains,
            disc_hidden=cfg.disc_hidden,
        )
        raw = rng.standard_normal((cfg.batch, cfg.n_locals, cfg.d_raw))
        classes = np.arange(cfg.batch) % 2
        domains = np.arange(cfg.batch) * cfg.num_domains // cfg.batch + 1
        return params, TrainingBatch(raw=raw, class_labels=classes, domain_labels=domains)

    def _is_smooth(self, params: ModelParams, batch: TrainingBatch, weights: LossWeights) -> bool:
        cfg = self.cfg
        enc_out, (_, enc_pre, _) = params.encoder.forward(batch.raw.reshape(-1, cfg.d_raw))
        if np.min(np.abs(enc_pre)) < cfg.clearance:
            return False
        if assignment_gap(enc_out, params.vocabulary.words) < cfg.clearance:
            return False
        flat, _ = vlad_forward_batch(enc_out.reshape(batch.raw.shape[:2] + (cfg.d,)),
                                     params.vocabulary.words, weights.temperature)
        if triplet_clearance(flat, batch.class_labels, weights.margin) < cfg.clearance:
            return False
        _, (_, disc_pre, _) = params.discriminator.forward(flat[:, :params.shared_width])
        return bool(np.min(np.abs(disc_pre)) >= cfg.clearance)

    def end_to_end(self, rng: np.random.Generator) -> GradCheckReport:
        """
        生成器参数对比等效目标 (对抗项系数 -grl_coeff·λ2) 的差分,
        判别器参数对比原始总目标的差分; 中心适应项的特征中心固定在基点
        """
        weights = LossWeights()

        def draw(rng):
            params, batch = self._tiny_instance(rng)
            if not self._is_smooth(params, batch, weights):
                return None
            result = forward_backward(params, batch, weights)
            targets = result.centroid_stats
            merged = None
            for name, tensor in params.tensors().items():
                objective = plain_total if name.startswith('discriminator.') else generator_surrogate

                def f(x, name=name, objective=objective):
                    breakdown = loss_breakdown(params.with_tensors({name: x}), batch, weights,
                                               centroid_targets=targets)
                    return objective(breakdown, weights)

                report = self._check(f, tensor, result.grads[name], 'end-to-end')
                merged = report if merged is None else merged.merge(report)
            return merged
        return self._collect('end-to-end', rng, draw)

    def run(self) -> List[GradCheckReport]:
        rngs = spawn_rngs(self.cfg.seed, len(CHECK_NAMES))
        checks = [self.vlad, self.ortho, self.c_adapt, self.intra, self.triplet, self.end_to_end]
        reports = [check(rng) for check, rng in zip(checks, rngs)]
        for report in reports:
            level = logging.INFO if report.passed(self.cfg.tol) else logging.ERROR
            self.logger.log(level, report.format_line())
        return reports


def run_gradcheck(seed: int = 0, instances: int = 20) -> List[GradCheckReport]:
    """完整套件, 每项一份报告"""
    return GradientChecker(GradCheckConfig(instances=instances, seed=seed)).run()


def all_passed(reports: List[GradCheckReport], tol: float = GRADCHECK_TOL) -> bool:
    return all(report.passed(tol) for report in reports)
