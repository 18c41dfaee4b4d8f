//! Chain post-processing: relabeling, summaries, and the design-based variance adjustment.

pub mod adjust;
pub mod relabel;
pub mod summary;
pub mod transform;

pub use adjust::{apply_rescaling, sandwich_adjust, AdjustDiagnostics, AdjustedChain};
pub use relabel::{modal_classes, relabel, RelabeledChain};
pub use summary::{outcome_probability, summarize, ChainSummary, Interval};
pub use transform::{alr, alr_inverse, from_unconstrained, to_unconstrained, UnconstrainedLayout};
