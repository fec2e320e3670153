//! Probabilistic use of a trained model: the κ factorization of the label
//! likelihood, maximum-likelihood classification from encoded features,
//! full-shape retrieval and retrieval metrics.

mod classify;
mod features;
mod kappa;
mod metrics;

pub use classify::{argmax_first, classify_view, mle_classify, retrieve, Classification, MleMode};
pub use features::{encode_feature, encode_features, gaussian_logpdf, EncodedFeature, PriorTable};
pub use kappa::{
    bernoulli_log_likelihood, gaussian_entropy, kappa_terms, log_kappa_e, log_kappa_kl_vt, log_sum_exp,
    neg_kl_joint, neg_kl_joint_factored, random_feature, KappaTerms,
};
pub use metrics::{
    average_precision, evaluate, evaluate_features, interpolated_pr, prior_separation, roc_auc, MetricsReport,
    PR_LEVELS,
};
