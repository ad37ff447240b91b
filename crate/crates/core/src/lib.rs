//! Multi-echelon inventory simulation on bill-of-materials networks, with
//! pathwise gradients of total cost in the base-stock levels and stochastic
//! first-order optimizers that use them.

pub mod error;
pub mod grad;
pub mod network;
pub mod opt;
pub mod sim;
pub mod stochastic;

pub use error::{Error, Result};
