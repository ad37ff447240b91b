//! Pathwise gradients of the total cost with respect to the base-stock levels.
//!
//! [`grad_ipa`] pushes dense `n × n` Jacobians forward through the period
//! recursion. [`grad_bp`] records the branch decisions of a forward run on a
//! tape and sweeps adjoint vectors backward, which costs about as much as a
//! second simulation. Both differentiate the same piecewise-linear map, so
//! away from kinks they agree to rounding. [`grad_fd`] is the central
//! difference reference.

mod bp;
mod fd;
mod ipa;

pub use bp::{backward_sweep, grad_bp, record_forward, Arrival, Tape, TapePeriod};
pub use fd::{branch_report, fd_branch_stable, grad_fd, BranchReport};
pub use ipa::grad_ipa;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradMethod {
    Ipa,
    Bp,
    Fd,
}

impl std::fmt::Display for GradMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GradMethod::Ipa => "ipa",
            GradMethod::Bp => "bp",
            GradMethod::Fd => "fd",
        })
    }
}

impl std::str::FromStr for GradMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ipa" => Ok(GradMethod::Ipa),
            "bp" => Ok(GradMethod::Bp),
            "fd" => Ok(GradMethod::Fd),
            other => Err(Error::InvalidConfig(format!("unknown gradient method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientResult {
    pub method: GradMethod,
    pub grad: Vec<f64>,
    pub total_cost: f64,
    pub seed: u64,
    /// Simulations run, base run included (finite differences only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulations: Option<usize>,
}

impl GradientResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gradient serializes")
    }
}

/// `max_i |a_i - b_i| / max(1, |b_i|)`.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub(crate) fn check_finite(grad: &[f64], what: &'static str, t: usize) -> Result<()> {
    if grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteJacobian { what, t })
    }
}
