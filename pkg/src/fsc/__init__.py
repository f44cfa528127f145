"""Fixed sub-center classification head, training harness, and evaluation."""

from .backbone import MlpBackbone, OptimizerState, cosine_lr, sgd_step
from .data import LabeledDataset, MixtureSpec, generate_mixture, load_feature_csv
from .heads import CenterLossHead, SoftmaxHead, SubCenterHead, build_head
from .metrics import EvalReport, embedding_export, recall_at_k, top1_accuracy
from .numerics import ContractViolation, RandomStream, logsumexp, matmul, pca_project
from .subcenter import (
    FeatureBatch,
    HeadOutput,
    LossBreakdown,
    SubCenterBank,
    build_bank,
    compactness_loss,
    dispersion_stats,
    forward,
    fsc_loss,
    init_centers,
    loss_grad_features,
    sample_subcenters,
)
from .train import TrainConfig, build_model, evaluate, train_model

__version__ = "0.1.0"
