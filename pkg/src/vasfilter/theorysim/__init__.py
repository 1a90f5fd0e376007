"""Linear latent-variable simulator for checking data-selection theory at desk scale."""

from .analysis import (
    STRATEGIES,
    BoundReport,
    FaceoffReport,
    Lemma1Report,
    TeacherErrorReport,
    best_subset_additive,
    best_subset_oracle,
    bound_csv,
    bound_report,
    bound_trials,
    calibrate_noise_constant,
    measure_teacher_error,
    noise_shape,
    proxy_prior,
    select_subset,
    strategy_faceoff,
    subset_cross_moment,
    verify_lemma1,
)
from .model import SynthConfig, SynthWorld, calibrate_mixture, derive_seed, gen_world, save_world
from .training import (
    ClassSpec,
    TestLoss,
    TrainedMap,
    axis_classes,
    classification_accuracy,
    closed_form_train,
    gamma_matrix,
    gradient_descent_oracle,
    p_terms,
    product_loss,
    regularized_loss,
    test_loss,
)

__all__ = [
    "STRATEGIES",
    "BoundReport",
    "ClassSpec",
    "FaceoffReport",
    "Lemma1Report",
    "SynthConfig",
    "SynthWorld",
    "TeacherErrorReport",
    "TestLoss",
    "TrainedMap",
    "axis_classes",
    "best_subset_additive",
    "best_subset_oracle",
    "bound_csv",
    "bound_report",
    "bound_trials",
    "calibrate_mixture",
    "calibrate_noise_constant",
    "classification_accuracy",
    "closed_form_train",
    "derive_seed",
    "gamma_matrix",
    "gen_world",
    "gradient_descent_oracle",
    "measure_teacher_error",
    "noise_shape",
    "p_terms",
    "product_loss",
    "proxy_prior",
    "regularized_loss",
    "save_world",
    "select_subset",
    "strategy_faceoff",
    "subset_cross_moment",
    "test_loss",
    "verify_lemma1",
]
