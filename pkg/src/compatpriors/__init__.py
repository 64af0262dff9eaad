"""Compatible g-priors across nested Gaussian linear models."""

from .compat import (
    DerivedPrior,
    Procedure,
    derive,
    derive_jc,
    derive_kl_conditional,
    derive_kl_conjugate,
    derive_standard,
    derive_uc,
    kl_divergence,
    kl_project,
    lemma_a1_expectations,
)
from .core_model import Dataset, Design, ModelId, enumerate_models
from .errors import (
    BracketingError,
    CompatPriorError,
    DataError,
    DomainError,
    ImproperPriorError,
    NumericalError,
    SingularDesignError,
)
from .experiments import hald_dataset, load_dataset
from .priors import NigPrior, PriorMeanChoice, log_marginal_likelihood, posterior_update
from .selection import (
    bayes_factor,
    compare_models,
    gelfand_ghosh,
    info_paradox_probe,
    posterior_model_probs,
    savage_ratio,
)

__version__ = "0.1.0"
