"""Hierarchical relational graph embedding for multi-view shape
recognition and retrieval, on a small numpy autodiff core."""

from .autograd import (
    Tensor,
    l2_normalize,
    maxpool_rows,
    softmax_cross_entropy,
)
from .data import (
    FeatureDataset,
    ShapeRecord,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split,
)
from .graph import (
    GlobalDescriptor,
    HrgeModel,
    LevelParams,
    VariantSpec,
    ViewGraph,
    apply_variant,
    coarsen,
    hrge_forward,
    level_descriptor,
    neighboring_relation,
    pairwise_relation,
)
from .layers import LinearLayer, Mlp, linear_forward, mlp_forward
from .optim import Adam, LrSchedule, lr_at_epoch
from .retrieval import (
    DescriptorIndex,
    MetricsReport,
    RankedList,
    aggregate,
    average_precision,
    build_index,
    evaluate_retrieval,
    extract_descriptor,
    ndcg,
    precision_recall_f1_at_n,
    retrieve,
)
from .training import (
    Classifier,
    TrainConfig,
    TrainLog,
    evaluate_accuracy,
    predict,
    train,
)

__version__ = "0.1.0"
