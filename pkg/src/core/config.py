#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行配置
功能：
1. 扁平 key = value 文本 (.cfg) 与扁平 JSON (.json) 两种格式
2. 未知键、格式错误给出 "文件:行号: 原因"
3. 渲染后重新解析得到完全相同的配置
4. 转换为 SyntheticSpec / LossWeights / TrainConfig
"""

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, List, Mapping, Optional, Tuple

from ..data.synthetic import SyntheticSpec, make_synthetic_spec
from .exceptions import ConfigError
from .harness.trainer import TrainConfig
from .training.objective import LossWeights

TRUE_WORDS = ('true', 'yes', 'on', '1')
FALSE_WORDS = ('false', 'no', 'off', '0')


@dataclass(frozen=True)
class CliConfig:
    """全部可配置项; 默认值即桌面规模的缺省设置"""
    # 数据
    num_domains: int = 4
    n_locals: int = 16
    d_raw: int = 8
    rho_cue: float = 0.2
    noise_sigma: float = 0.5
    samples_per_domain_per_class: int = 200
    data_seed: int = 0
    shift_scale: float = 2.0
    cue_scale: float = 2.0
    attack_scale: float = 2.0
    # 训练
    per_domain_real: int = 10
    per_domain_fake: int = 10
    iterations: int = 500
    learning_rate: float = 0.01
    lr_drop_iter: int = 300         # <= 0 表示不下调
    lr_dropped: float = 0.001
    momentum: float = 0.9
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
    # 损失权重
    lambda1: float = 0.1
    lambda2: float = 0.1
    lambda3: float = 0.1
    lambda4: float = 0.1
    lambda5: float = 0.1
    temperature: float = 3.0
    margin: float = 0.1
    grl_coeff: float = 1.0
    # 评估与实验
    threshold_mode: str = 'eer'
    fixed_threshold: float = 0.5
    holdout: int = 4
    seeds: str = '0,1,2,3,4'
    source_domains: str = ''        # 空表示留一域
    extended: bool = False
    k2_values: str = '0,2,4,6,10'
    stats_samples: int = 0          # 0 表示按每域每类抽样
    per_domain_per_class: int = 70
    gradcheck_instances: int = 20
    # 路径
    data_dir: str = 'data'
    out_dir: str = 'out'
    checkpoint: str = ''            # 空表示 out_dir/model.bin

    @property
    def checkpoint_path(self) -> str:
        return self.checkpoint or os.path.join(self.out_dir, 'model.bin')

    @property
    def seed_list(self) -> List[int]:
        return parse_int_list(self.seeds, 'seeds')

    @property
    def source_list(self) -> Optional[List[int]]:
        return parse_int_list(self.source_domains, 'source_domains') or None

    @property
    def k2_list(self) -> List[int]:
        return parse_int_list(self.k2_values, 'k2_values')


FIELD_TYPES = {f.name: f.type for f in fields(CliConfig)}


def parse_int_list(text: str, key: str = '') -> List[int]:
    """'0,1, 2' -> [0, 1, 2]"""
    try:
        return [int(part) for part in text.replace(' ', ',').split(',') if part]
    except ValueError as e:
        raise ConfigError(f"{key}: expected a comma separated list of integers, got {text!r}") from e


def convert_value(key: str, text: str, source: str = '', line: Optional[int] = None):
    """按字段类型解析文本值"""
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown key '{key}'", source, line)
    kind = FIELD_TYPES[key]
    text = text.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in TRUE_WORDS:
                return True
            if lowered in FALSE_WORDS:
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"malformed value for '{key}' ({kind.__name__}): {text!r}", source, line) from None
    return text


def format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_entries(text: str, source: str = '<string>') -> Dict[str, Tuple[str, int]]:
    """key = value 行 -> {key: (原始值, 行号)}; '#' 开头为注释"""
    entries: Dict[str, Tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        key, sep, value = line.partition('=')
        if not sep:
            raise ConfigError(f"expected 'key = value', got {line!r}", source, lineno)
        key = key.strip()
        if not key:
            raise ConfigError("missing key before '='", source, lineno)
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown key '{key}'", source, lineno)
        entries[key] = (value.strip(), lineno)
    return entries


def apply_entries(
    cfg: CliConfig, entries: Mapping[str, Tuple[str, Optional[int]]], source: str = ''
) -> CliConfig:
    changes = {key: convert_value(key, value, source, line) for key, (value, line) in entries.items()}
    return replace(cfg, **changes)


def parse_config(text: str, source: str = '<string>', base: CliConfig = CliConfig()) -> CliConfig:
    return apply_entries(base, parse_entries(text, source), source)


def parse_json_config(text: str, source: str = '<string>', base: CliConfig = CliConfig()) -> CliConfig:
    """扁平 JSON 对象, 键与 .cfg 相同"""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", source, e.lineno) from e
    if not isinstance(data, dict):
        raise ConfigError("JSON config must be a flat object", source)
    entries: Dict[str, Tuple[str, Optional[int]]] = {}
    for key, value in data.items():
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown key '{key}'", source)
        if isinstance(value, (dict, list)):
            raise ConfigError(f"'{key}' must be a scalar", source)
        entries[key] = (format_value(value), None)
    return apply_entries(base, entries, source)


def load_config(path: str, base: CliConfig = CliConfig()) -> CliConfig:
    """按扩展名选择格式读取配置文件"""
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    if path.endswith('.json'):
        return parse_json_config(text, path, base)
    return parse_config(text, path, base)


def render_config(cfg: CliConfig) -> str:
    """按键排序输出 key = value, 浮点数用 repr"""
    return "".join(f"{key} = {format_value(value)}\n" for key, value in sorted(asdict(cfg).items()))


def config_line(cfg: CliConfig) -> str:
    """单行形式, 用于输出文件的首行注释"""
    return " ".join(f"{key}={format_value(value)}" for key, value in sorted(asdict(cfg).items()))


def to_synthetic_spec(cfg: CliConfig) -> SyntheticSpec:
    return make_synthetic_spec(
        num_domains=cfg.num_domains,
        n_locals=cfg.n_locals,
        d_raw=cfg.d_raw,
        rho_cue=cfg.rho_cue,
        noise_sigma=cfg.noise_sigma,
        samples_per_domain_per_class=cfg.samples_per_domain_per_class,
        seed=cfg.data_seed,
        shift_scale=cfg.shift_scale,
        cue_scale=cfg.cue_scale,
        attack_scale=cfg.attack_scale,
    )


def to_loss_weights(cfg: CliConfig) -> LossWeights:
    return LossWeights(
        lambda1=cfg.lambda1,
        lambda2=cfg.lambda2,
        lambda3=cfg.lambda3,
        lambda4=cfg.lambda4,
        lambda5=cfg.lambda5,
        temperature=cfg.temperature,
        margin=cfg.margin,
        grl_coeff=cfg.grl_coeff,
    )


def to_train_config(cfg: CliConfig) -> TrainConfig:
    drop = cfg.lr_drop_iter > 0
    return TrainConfig(
        per_domain_real=cfg.per_domain_real,
        per_domain_fake=cfg.per_domain_fake,
        iterations=cfg.iterations,
        learning_rate=cfg.learning_rate,
        lr_drop_iter=cfg.lr_drop_iter if drop else None,
        lr_dropped=cfg.lr_dropped if drop else None,
        momentum=cfg.momentum,
        weights=to_loss_weights(cfg),
        k=cfg.k,
        k_specific=cfg.k_specific,
        hidden=cfg.hidden,
        d=cfg.d,
        disc_hidden=cfg.disc_hidden,
        activation=cfg.activation,
        aggregation=cfg.aggregation,
        use_specific=cfg.use_specific,
        vocab_init=cfg.vocab_init,
        kmeans_n_init=cfg.kmeans_n_init,
        normalize_intra=cfg.normalize_intra,
        seed=cfg.seed,
        eval_every=cfg.eval_every,
    )
