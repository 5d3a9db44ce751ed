//! Logistic regression on the biomarker vector, leave-one-out evaluation
//! and backward feature elimination.

mod dataset;
mod eval;
mod model;

use thiserror::Error;

pub use dataset::{canonical_subset, label_from_score, CaseRecord, Dataset, Feature};
pub use eval::{
    ablate, auc, loo_evaluate, roc_curve, write_grid_csv, write_roc_csv, Ablation, AblationStep, Confusion, EvalReport,
    RocPoint, ELIMINATION_RULE,
};
pub use model::{fit, fit_with_trace, sigmoid, FitOptions, FitTrace, LogisticModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("leave-one-out needs at least two records")]
    SingleRecord,
    #[error("no active features")]
    NoFeatures,
    #[error("ablation needs at least two features")]
    TooFewFeatures,
    #[error("case {case_id}: feature {feature} is not finite")]
    NonFiniteFeature { case_id: String, feature: &'static str },
    #[error("feature keys do not match the model")]
    FeatureKeyMismatch,
    #[error("duplicate case id {0}")]
    DuplicateCaseId(String),
    #[error("case {case_id}: label {label} is not 0 or 1")]
    InvalidLabel { case_id: String, label: u8 },
    #[error("case {case_id}: raw score {score} outside 1..=10")]
    InvalidRawScore { case_id: String, score: u8 },
    #[error("case {0}: label disagrees with raw score")]
    LabelMismatch(String),
    #[error("case {0}: neither label nor raw score given")]
    MissingLabel(String),
    #[error("csv: {0}")]
    Csv(String),
}
