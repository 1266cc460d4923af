//! PID-controlled tensor wheel decomposition (PTWD) for completing sparse
//! third-order tensors built from dynamic weighted networks.
//!
//! The pieces, bottom-up:
//!
//! * [`tensor_store`]: COO observations, log normalization, seeded splits.
//! * [`twd`]: wheel factors, element and full reconstruction, checkpoints.
//! * [`pid_sgd`]: the regularized loss and PID-guided SGD trainer.
//! * [`metrics`]: RMSE and MAE.
//! * [`synthgen`]: planted-model synthetic data.
//! * [`cli`]: the reproducible runs behind the `ptwd` binary.

pub mod cli;
pub mod error;
pub mod metrics;
pub mod pid_sgd;
pub mod synthgen;
pub mod tensor_store;
pub mod twd;

pub use error::{Error, Result};
pub use metrics::{evaluate, EvalReport};
pub use pid_sgd::{compute_loss, sgd_step, train, HyperParams, PidState, TrainReport, Trainer};
pub use synthgen::{generate, SynthSpec};
pub use tensor_store::{ingest, Entry, SparseTensor, SplitSpec};
pub use twd::{oracle_entry, Ranks, TwdFactors};
