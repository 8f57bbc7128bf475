//! Training loops for both stages, the two-stage inference path and
//! evaluation.

mod data;
mod eval;
mod infer;
mod train;

pub use data::{load_smt, load_smt_reference, load_wb, SmtExample, SmtReference, WbExample, WbInput};
pub use eval::{evaluate_manifest, evaluate_pairs, load_pairs, normalize_text, EvalOptions, PairEntry};
pub use infer::{
    decompose, infer, load_smtnet, load_wbnet, write_preview, Decomposition, DecompositionIndex, OracleSeparator,
    OracleWhiteBalancer, Separator, WhiteBalancer,
};
pub use train::{
    audit_firewall, quiet, train_smtnet, train_wbnet, Progress, TrainConfig, TrainSummary, Validation,
    MAX_NONFINITE_STREAK, WITHHELD_TAGS,
};
