//! Reduce a large set of local surrogate explanations of a closed-box model
//! to a small proxy set of simple models.
//!
//! The pipeline is: generate local linear explanations ([`explainers`]),
//! evaluate every model on every item ([`data::build_loss_matrix`]), select a
//! subset by coverage or loss ([`reduce`]), map items to the selected proxies
//! ([`procedure`]) and score the result ([`metrics`]). [`synth`] provides a
//! clustered synthetic testbed with known generating models and
//! [`experiment`] runs parameter sweeps over the whole pipeline.

pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod explainers;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod procedure;
pub mod reduce;
pub mod synth;
pub mod util;

pub use data::{build_loss_matrix, Dataset, LocalModelSet, LossKind, LossMatrix, ModelKind, Task};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use procedure::{
    explain_reduce, explain_reduce_with_loss, map_new_item, ItemModelMap, ProxySet, Reduction,
    ReductionConfig,
};
pub use reduce::{ExactBudget, ReductionMethod, ReductionTrace};
