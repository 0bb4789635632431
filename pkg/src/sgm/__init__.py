"""Second-order information quantities for Gaussian mixtures, and the
stochastic training loops that fit mixture models by maximizing the
associated variational costs."""

__version__ = "0.1.0"

from .errors import (
    DegenerateModelError,
    DimensionMismatchError,
    OracleConvergenceError,
    SupportViolationError,
    TrainingDivergedError,
    UsageError,
)
from .mixture import (
    FiniteMixture,
    GaussianComponent,
    cross_inner,
    cs_qmi,
    eval_density,
    from_json,
    load_mixture,
    marginalize,
    normalize,
    pairwise_overlap,
    product_mixture,
    quadratic_norm,
    renyi2_entropy,
    sample,
    save_mixture,
    to_json,
)
from .quadrature import (
    grid_integrate,
    oracle_conditional_norm,
    oracle_d2,
    qmc_integrate,
)
from .costs import (
    AdpFilter,
    adp_update,
    conditional_stats,
    density_stats,
    divergence_stats,
    h2_estimate,
    variance_reduced_grad,
    write_telemetry,
)
from .network import (
    GeneratorNetwork,
    ImogNetwork,
    RatioNetwork,
    ScanInput,
    load_checkpoint,
    param_vector,
    save_checkpoint,
    set_param_vector,
)
from .training import (
    TrainConfig,
    TrainReport,
    materialize_conditional,
    materialize_mixture,
    mi_pipeline,
    train_adversarial,
    train_conditional,
    train_density,
    train_ratio,
)
from .metrics import (
    EvalReport,
    auprc,
    auroc,
    ce_score,
    conditional_ce_score,
    fpr_at_tpr,
    validation_rate,
)
from .baselines import em_fit, gmm_conditional
from .datagen import (
    MarkovSpec,
    MixtureSpec,
    gen_generalized,
    gen_markov,
    gen_mog,
    load_samples,
    load_spec,
    ring,
    save_samples,
    save_spec,
    two_moons,
)

__all__ = [name for name in dir() if not name.startswith("_")]
