//! Metrics, explanation quality, counterfactuals, baselines and ablations.

mod baselines;
mod counterfactual;
mod metrics;
mod sensitivity;
mod sweep;

pub use baselines::{
    baseline_logreg, baseline_tree, BaselineData, ConceptInputs, DecisionTree, LogRegConfig, LogisticRegression, TreeNode,
};
pub use counterfactual::{
    counterfactual_report, counterfactual_search, flip_all_falsifies, CounterfactualRecord, CounterfactualReport,
    CounterfactualRow,
};
pub use metrics::{accuracy, linspace, roc_auc, roc_auc_macro, trapezoid};
pub use sensitivity::{
    explanation_from_trace, explanation_vector, normalized_distance, sensitivity, Explained, ExplanationModel,
    SensitivityConfig, SensitivityReport,
};
pub use sweep::{tau_sweep, SweepRow};
