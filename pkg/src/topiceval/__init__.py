"""Topic model training and quality scoring toolkit.

Trains LDA with collapsed Gibbs sampling, scores topics with posterior
variability and word co-occurrence metrics, combines the metrics with a
kernel SVR estimator, and evaluates everything against human ratings.
"""

__version__ = "0.1.0"

from .corpus import EncodedCorpus, PreprocessConfig, Vocabulary, preprocess, tokenize
from .sampler import (
    ChainResult,
    LdaConfig,
    LdaState,
    PhiSampleStore,
    PosteriorSummary,
    TopicReport,
    build_topic_reports,
    init_state,
    run_chain,
)
from .posterior_metrics import (
    TopicScoreVector,
    mu_variability,
    sigma_variability,
    stability,
    variability,
)
from .cooccurrence import (
    CooccurrenceCounts,
    coherence_topic,
    count_units,
    npmi_topic,
    pmi_topic,
)
from .estimator import (
    FeatureMatrix,
    SvrModel,
    cross_domain_fit_eval,
    grid_search_svr,
    predict,
    rbf_kernel,
    standardize,
    train_svr,
)
from .evaluation import (
    RatingsTable,
    ablate,
    export_scatter,
    krippendorff_alpha_weighted,
    pearson_r,
)

__all__ = [
    "EncodedCorpus", "PreprocessConfig", "Vocabulary", "preprocess", "tokenize",
    "ChainResult", "LdaConfig", "LdaState", "PhiSampleStore", "PosteriorSummary",
    "TopicReport", "build_topic_reports", "init_state", "run_chain",
    "TopicScoreVector", "mu_variability", "sigma_variability", "stability", "variability",
    "CooccurrenceCounts", "coherence_topic", "count_units", "npmi_topic", "pmi_topic",
    "FeatureMatrix", "SvrModel", "cross_domain_fit_eval", "grid_search_svr",
    "predict", "rbf_kernel", "standardize", "train_svr",
    "RatingsTable", "ablate", "export_scatter", "krippendorff_alpha_weighted", "pearson_r",
]
