"""Bayesian multinomial logit models with class-hierarchy priors.

Three related classifiers share this package: a flat multinomial logit
(MNL), a tree of nested multinomial logits fitted independently per
hierarchy node (treeMNL), and a flat multinomial logit whose class
coefficient vectors are sums of per-branch vectors along the hierarchy
paths (corMNL), which correlates the coefficients of nearby classes a
priori. Fitting is by MCMC: univariate slice sampling or Hamiltonian
dynamics for the regression coefficients, conjugate Gibbs or slice
updates for the variance hyperparameters.

The usual entry points are :func:`parse_hierarchy`, :func:`fit`,
:func:`predict_matrix`, and :func:`evaluate`; the experiments module
wraps the canned synthetic protocols behind :func:`run_table` and
:func:`run_surrogate`.
"""

from hiermnl.datagen import (
    CsvError,
    Dataset,
    SimSpec,
    draw_prior_state,
    generate_replication,
    load_csv,
    sample_labels,
    standardize,
    subsample_splits,
    write_csv,
)
from hiermnl.evaluation import (
    ComparisonTable,
    EvalResult,
    TTestResult,
    build_comparison,
    evaluate,
    evaluate_probs,
    format_table,
    paired_t_test,
    table_to_csv,
)
from hiermnl.experiments import (
    MODEL_ORDER,
    PROTOCOLS,
    SurrogateResult,
    prior_table,
    run_surrogate,
    run_table,
)
from hiermnl.hierarchy import (
    Branch,
    ClassHierarchy,
    HierarchyError,
    flat_hierarchy,
    is_flat,
    leaf_path,
    parse_hierarchy,
    serialize_hierarchy,
)
from hiermnl.inference import (
    FitConfig,
    PosteriorChain,
    fit,
    load_chain,
    predict,
    predict_matrix,
    save_chain,
)
from hiermnl.models import (
    CorMnlState,
    GammaPrior,
    HierPriors,
    MnlPriors,
    MnlState,
    TreeMnlState,
    class_probs_matrix,
    gamma_tau_cdf,
    gamma_tau_percentiles,
    log_likelihood,
)
from hiermnl.samplers import (
    HmcConfig,
    RngStream,
    SliceConfig,
    gibbs_precision_update,
    hmc_update,
    slice_update,
)

__all__ = [
    "Branch",
    "ClassHierarchy",
    "ComparisonTable",
    "CorMnlState",
    "CsvError",
    "Dataset",
    "EvalResult",
    "FitConfig",
    "GammaPrior",
    "HierPriors",
    "HierarchyError",
    "HmcConfig",
    "MnlPriors",
    "MnlState",
    "MODEL_ORDER",
    "PROTOCOLS",
    "PosteriorChain",
    "RngStream",
    "SimSpec",
    "SliceConfig",
    "SurrogateResult",
    "TTestResult",
    "TreeMnlState",
    "build_comparison",
    "class_probs_matrix",
    "draw_prior_state",
    "evaluate",
    "evaluate_probs",
    "fit",
    "flat_hierarchy",
    "format_table",
    "gamma_tau_cdf",
    "gamma_tau_percentiles",
    "generate_replication",
    "gibbs_precision_update",
    "hmc_update",
    "is_flat",
    "leaf_path",
    "load_chain",
    "load_csv",
    "log_likelihood",
    "paired_t_test",
    "parse_hierarchy",
    "predict",
    "predict_matrix",
    "prior_table",
    "run_surrogate",
    "run_table",
    "sample_labels",
    "save_chain",
    "serialize_hierarchy",
    "slice_update",
    "standardize",
    "subsample_splits",
    "table_to_csv",
    "write_csv",
]

__version__ = "0.1.0"
