"""Python bindings for the csanet C++ library."""

from ._core import (
    Aggregation,
    DataError,
    Dataset,
    DistanceKind,
    Error,
    Index,
    InputError,
    IntegrityError,
    Item,
    LossConfig,
    LossObjective,
    ModelConfig,
    ModelParams,
    NumericalError,
    SearchMode,
    SyntheticSpec,
    TrainConfig,
    auc,
    build_index,
    compatibility_score,
    embed_item,
    fitb_accuracy,
    fitb_answer,
    generate_synthetic,
    init_params,
    load_checkpoint,
    load_dataset,
    load_index,
    outfit_distance,
    outfit_ranking_loss,
    retrieve,
    save_checkpoint,
    train,
    triplet_loss,
)

__all__ = [name for name in dir() if not name.startswith("_")]
