"""Feature aggregation around mixed pivots, a frozen orthogonal head, attacks and OOD scoring."""

from dfa.errors import (
    CapacityError,
    ConfigError,
    DataError,
    DegenerateInputError,
    DFAError,
    DimensionError,
    FormatError,
    MetricUndefinedError,
    NumericError,
    ParameterError,
)
from dfa.mixing import MixCoefficient, MixedTriple, mix, sample_lambda
from dfa.ortho_head import OrthogonalHead, ScoreVector, cosine_scores, init_orthogonal
from dfa.aggregation import (
    AggregationLossConfig,
    LossReport,
    aggregation_loss,
    aggregation_residual,
)
from dfa.models import (
    Classifier,
    FeatureExtractor,
    LinearExtractor,
    ModelSnapshot,
    SmallCNN,
    build_extractor,
    build_model,
    forward,
    manifold_mix_forward,
)
from dfa.trainer import TrainConfig, classification_loss, train, train_step
from dfa.attacks import AttackConfig, cw, evaluate_robustness, fgsm, pgd, run_attack
from dfa.ood import (
    ClassPrototypeSet,
    OODReport,
    compute_prototypes,
    evaluate_ood,
    f1_sweep,
    ood_score,
)
from dfa.analysis import CompactnessReport, LipschitzProbe, compactness, lipschitz_residual
from dfa.data import LabeledDataset

__version__ = "0.1.0"
