//! Connectionist temporal classification and its Bayes-risk extension,
//! computed as log-domain lattice programs with exact gradients.
//!
//! * [`lattice`]: label types, the forward-backward tables, CTC loss and
//!   gradient.
//! * [`risk`]: grouping by token end frame, the down-sampling and
//!   early-emission objectives.
//! * [`oracle`]: exhaustive path enumeration for tiny instances.
//! * [`compare`]: lattice results checked against the oracle.
//! * [`gradcheck`]: finite-difference checks of the logit gradients.
//! * [`align`]: best-path alignment and trailing-blank trimming.
//! * [`latency`]: drift, data-collecting and computational latency.
//! * [`toy`]: a synthetic transduction task and a small trainable model.
//! * [`records`]: JSON-lines record formats used by the `brctc` binary.

pub mod align;
pub mod compare;
pub mod error;
pub mod gradcheck;
pub mod latency;
pub mod lattice;
pub mod oracle;
pub mod records;
pub mod risk;
pub mod toy;

pub use error::{Error, Result};
pub use lattice::{ctc_loss, ctc_loss_with_grad, Grid, LabelSeq, Lattice, LossResult, PosteriorGrid};
pub use risk::{brctc_grad, brctc_loss, RiskKind, RiskSpec};
