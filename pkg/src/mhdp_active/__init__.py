"""Multimodal HDP object categorization and information-gain active perception."""

__version__ = "0.1.0"

from .corpus import (
    ConfigError,
    DataFormatError,
    Dataset,
    DimensionError,
    ModalitySpec,
    ObjectRecord,
    SyntheticConfig,
    default_alpha_schedule,
    generate_synthetic,
    load_dataset,
    mix_parameters,
    resample_bof,
    save_dataset,
)
from .model import (
    NEW_TOPIC,
    ModelConfig,
    TrainedModel,
    default_config,
    load_model,
    predictive_token_prob,
    save_model,
    train,
)
from .recognition import (
    LatentSample,
    ObservationError,
    RecognitionState,
    category_posterior,
    dish_posterior,
    joint_modality_likelihood,
    modality_predictive,
    recognize,
    sample_latent,
    sample_latents,
    sample_modality,
    table_posterior,
)
from .enumeration import (
    EnumerationBudgetError,
    canonical_key,
    exact_ig,
    exact_posterior,
    expected_final_kl,
)
from .planners import (
    ActionPlan,
    IGEstimate,
    PlannerStats,
    brute_force_select,
    estimate_ig_mc,
    exact_evaluator,
    greedy_select,
    lazy_greedy_select,
    random_select,
)
from .experiment import (
    ExperimentReport,
    ExperimentRow,
    PlannerRecord,
    SweepRow,
    emit_report,
    emit_sweep,
    ig_variance_sweep,
    kl_divergence,
    load_report,
    run_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
