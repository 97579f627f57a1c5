//! Sparse modeling of spectral blocks (SMSB) for hyperspectral image classification.
//!
//! The image is tiled into `m x m` pixel groups and the spectrum into `B`
//! equal-width blocks. One sub-dictionary `D` is learned over all block
//! observations; each group is then coded jointly under an `ℓ2,1` penalty, one
//! block at a time, and the codes of the high-variance blocks become per-pixel
//! features for an SVM.

pub mod cube;
pub mod dict;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod presets;
pub mod select;
pub mod solver;
pub mod svm;
pub mod synth;

pub use cube::{
    build_stacked_observations, extract_group, extract_group_block, plan_partition, plan_partition_dims, HsiCube,
    LabelMap, PartitionPlan, StackedObservations, DEFAULT_STACK_CAP_BYTES,
};
pub use dict::{train_subdictionary, ColumnSource, DictLearnConfig, SubDictionary};
pub use error::{ErrorFamily, Result, SmsbError};
pub use metrics::{compute_metrics, mean_std, ConfusionMatrix, Metrics};
pub use select::{build_mask, compute_block_variances, BlockMask, MaskMode};
pub use solver::{
    code_group_blockwise, code_group_blockwise_with, code_l1, code_l21, prox_l21, BlockPenalty, Regularizer,
    SolverConfig, SparseCodeResult,
};
pub use svm::{cross_validate, svm_predict, svm_train, CvGrid, CvResult, Kernel, Standardizer, SvmModel, SvmParams};
pub use pipeline::{
    baseline_svm_raw, encode, fit, run_experiment, stratified_split, Classifier, ClassifierParams, CodeMu,
    ExperimentParams, ExperimentReport, FitParams, Normalization, SmsbModel, SparseFeatureSet, SplitSpec,
};
pub use io::{read_cube, read_features, read_labels, read_model, write_cube, write_features, write_labels, write_model};
pub use synth::{generate, oracle_global_solve, SynthData, SynthSpec};
