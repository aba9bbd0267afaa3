"""Randomized ensemble classifiers under adversarial attack.

Exact risk evaluation over configuration models, optimal sampling
probabilities (closed forms and projected subgradients), tight fundamental
bounds with achieving constructions, adaptive attacks on toy classifiers,
and a desk-scale boosted training loop.
"""

__version__ = "0.1.0"

from .bounds import (
    bat_bound,
    lower_bound,
    lower_bound_achiever,
    lower_envelope_risk,
    model_bounds,
    thumb_rule_range,
    tight_model,
    two_classifier_limit,
    upper_bound,
)
from .errors import (
    CapacityError,
    DegenerateModelError,
    InvalidInputError,
    SchemaError,
    TrainingError,
)
from .kernels import BACKEND
from .risk import (
    ConfigurationModel,
    ProfileSet,
    as_profile,
    basis_alpha,
    canonicalize_profile_set,
    configuration_from_errors,
    enumerate_reduced_configurations,
    individual_risks,
    model_subgradient,
    per_config_risk,
    random_model,
    risk_eval,
    uniform_alpha,
    validate_alpha,
)
from .simplexopt import (
    OspParams,
    OspTrace,
    covering_radius,
    grid_min,
    osp,
    osp_for_model,
    osp_gap_bound,
    project_simplex,
    simplex_lattice,
    solve_three,
    solve_two,
    two_member_masses,
)
from .toys import (
    LabeledDataset,
    LinearClassifier,
    PerturbationSet,
    SmallMlp,
    binary_linear,
    classify,
    deterministic_ensemble_classify,
    linear_margin,
    linear_optimal_l2_attack,
    make_counterexample,
    mlp_forward_backward,
    sample_gaussian_mixture,
)
from .attacks import (
    AttackBudget,
    AttackResult,
    AttackSpec,
    apgd_loss,
    apgd_softmax,
    empirical_configuration_model,
    empirical_risk,
    exact_attack_grid,
    pgd,
    randomized_order_schedule,
)
from .train import (
    ArchSpec,
    EvalReport,
    TrainConfig,
    TrainedRec,
    adversarial_train,
    barre,
    evaluate_rec,
    iat,
)
