"""Detection of binary polarized groups in attributed social graphs.

The pipeline: twin graph-convolutional encoders produce a polarized and
an invariant embedding per node, trained with two contrastive
objectives (interaction-level, with silence-driven negative sampling,
and feature-level decoupling).  Soft two-way clustering of the
polarized embeddings yields the groups, with neutral and irrelevant
nodes filtered, and polarization indices summarize the result.
"""

from .clustering import (Centroids, NodeFlags, SoftAssignment,
                         centers_from_assignment, centers_from_labels,
                         cluster_and_flag, clustering_accuracy,
                         flag_irrelevant, flag_neutral, soft_assign,
                         soft_kmeans)
from .config import RunConfig, load_config
from .encoder import (EmbeddingPair, EncoderParams, encode, grad_check,
                      init_params, load_params, save_params)
from .errors import (ConfigError, DegenerateDataError, DipoleError,
                     EvaluationError, FitError, GraphParseError,
                     TrainingError, ValidationError)
from .evaluation import run_eval_suite, run_pipeline
from .graph import (AttributedGraph, EdgeRecord, build_graph, load_graph,
                    normalized_adjacency, save_graph)
from .index import IndexReport, classic_index, normalize_index, unified_index
from .objectives import (ContrastiveSampleSet, LossConfig, Supervision,
                         TrainConfig, feature_loss, interaction_loss,
                         supervised_anchor_loss, assignment_anchor_loss, train)
from .sampler import (Adaptor, AugmentationSpec, ConnectModel, SamplerConfig,
                      SamplerThresholds, augment, fit_connect,
                      sample_negatives_exact, sample_negatives_fast,
                      sample_positives)
from .supervision import (LinearClassifier, PromptSet, attach_prompts,
                          choose_supervision_path, make_prompts, prompt_tune,
                          train_classifier)
from .synthgen import SynthConfig, generate, generate_unpolarized

__version__ = "0.1.0"
