"""Robust set representation learning with a sliced-Wasserstein encoder."""

from .adversary import (AdversaryConfig, NeighborPool, SimplexWeights,
                        adversary_ablation, build_pool, inner_maximize, mix,
                        project_simplex)
from .corruption import CorruptionSpec, SplitPlan, assign_splits, corrupt
from .encoder import (EncoderParams, SetEmbedding, encode, encode_backward,
                      encode_meanpool, init_encoder, quantile_index)
from .estimator import SlicedWassersteinSetTransformer, SWDRSOClassifier
from .head import ClassifierHead, RankingHead, classify_loss, triplet_loss
from .measures import (DirectionSet, ProjectedMeasure, SetInstance, project,
                       sample_directions, sliced_wasserstein, wasserstein_1d)
from .metrics import EvalReport, evaluate, ndcg_at_k, recall_at_k, roc_auc
from .trainer import (AdamState, Model, TrainConfig, adam_step, init_model,
                      load_checkpoint, save_checkpoint, train, train_epoch)

__version__ = "0.1.0"
