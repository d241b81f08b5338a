from .ablation import AblationResult, run_ablation, run_k2_sweep
from .gradcheck import GradCheckConfig, GradientChecker, run_gradcheck
from .metrics import Metrics, compute_metrics, evaluate_metrics
from .stats import assignment_stats, residual_dump
from .trainer import TrainConfig, Trainer, TrainingResult, run_training
