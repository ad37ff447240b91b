use rayon::prelude::*;

use super::{GradMethod, GradientResult};
use crate::error::{Error, Result};
use crate::network::BomNetwork;
use crate::sim::{run_observed, simulate_cost, PeriodObserver, PeriodView, PolicyVector, SimInput, NO_COMPONENT};
use crate::stochastic::ScenarioPath;

/// Central differences on a fixed path with step `step * (1 + S_i)` in
/// coordinate `i`. Where `S_i` is smaller than the step the difference is
/// one-sided (forward) so the policy stays non-negative. Runs `2n`
/// perturbed simulations on the current rayon pool; `simulations` counts
/// those and leaves out the run that reports `total_cost`.
pub fn grad_fd(net: &BomNetwork, path: &ScenarioPath, input: SimInput<'_>, step: f64) -> Result<GradientResult> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {step}")));
    }
    let n = net.n();
    input.policy.validate(n)?;
    let total_cost = simulate_cost(net, path, input)?;
    let s = input.policy.as_slice();

    let eval = |i: usize, x: f64| -> Result<f64> {
        let mut shifted = s.to_vec();
        shifted[i] = x;
        let policy = PolicyVector(shifted);
        simulate_cost(net, path, SimInput { policy: &policy, ..input })
    };
    let grad = (0..n)
        .into_par_iter()
        .map(|i| {
            let h = step * (1.0 + s[i].abs());
            if s[i] >= h {
                Ok((eval(i, s[i] + h)? - eval(i, s[i] - h)?) / (2.0 * h))
            } else {
                Ok((eval(i, s[i] + h)? - eval(i, s[i])?) / h)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GradientResult {
        method: GradMethod::Fd,
        grad,
        total_cost,
        seed: path.seed(),
        simulations: Some(2 * n),
    })
}

/// How far a run sits from the nearest branch switch, and which branches it took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchReport {
    /// Smallest distance of any branch quantity to its threshold.
    pub margin: f64,
    /// Hash of every branch decision; equal signatures mean the same linear piece.
    pub signature: u64,
}

struct BranchProbe<'a> {
    net: &'a BomNetwork,
    margin: f64,
    hash: u64,
}

impl BranchProbe<'_> {
    fn feed(&mut self, bits: u64) {
        for b in bits.to_le_bytes() {
            self.hash ^= b as u64;
            self.hash = self.hash.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

impl PeriodObserver for BranchProbe<'_> {
    fn observe(&mut self, v: &PeriodView<'_>) -> Result<()> {
        let n = v.ip.len();
        for gaps in v.order_gaps {
            for &g in gaps {
                self.margin = self.margin.min(g.abs());
                self.feed((g < 0.0) as u64);
            }
        }
        for i in 0..n {
            self.margin = self.margin.min(v.i_temp[i].abs());
            self.feed((v.i_temp[i] > 0.0) as u64);
            if v.need[i] > 0.0 {
                self.margin = self.margin.min((v.start_on_hand[i] - v.need[i]).abs());
            }
            self.feed(v.fill_active[i] as u64);
            self.feed(if v.scarcest[i] == NO_COMPONENT { u64::MAX } else { v.scarcest[i] as u64 });
            // distance between the scarcest and the runner-up component; a
            // tie of stock-outs stays a tie under small perturbations
            let comps = self.net.upstream(i).0;
            if comps.len() > 1 && v.scarcity[i] < 1.0 {
                let runner_up = comps
                    .iter()
                    .filter(|&&j| j != v.scarcest[i])
                    .map(|&j| v.fill_rate[j])
                    .fold(f64::INFINITY, f64::min);
                if runner_up > 0.0 {
                    self.margin = self.margin.min(runner_up - v.scarcity[i]);
                }
            }
        }
        Ok(())
    }
}

/// Whether every `S ± h_i e_i` perturbation used by [`grad_fd`] with this
/// `step` stays on the base run's branch signature.
pub fn fd_branch_stable(net: &BomNetwork, path: &ScenarioPath, input: SimInput<'_>, step: f64) -> Result<bool> {
    let base = branch_report(net, path, input)?.signature;
    let s = input.policy.as_slice();
    (0..net.n()).into_par_iter().try_fold(
        || true,
        |ok, i| {
            if !ok {
                return Ok(false);
            }
            let h = step * (1.0 + s[i].abs());
            let low = if s[i] >= h { s[i] - h } else { s[i] };
            for x in [s[i] + h, low] {
                let mut shifted = s.to_vec();
                shifted[i] = x;
                let policy = PolicyVector(shifted);
                if branch_report(net, path, SimInput { policy: &policy, ..input })?.signature != base {
                    return Ok(false);
                }
            }
            Ok(true)
        },
    )
    .try_reduce(|| true, |a, b| Ok(a && b))
}

pub fn branch_report(net: &BomNetwork, path: &ScenarioPath, input: SimInput<'_>) -> Result<BranchReport> {
    let mut probe = BranchProbe {
        net,
        margin: f64::INFINITY,
        hash: 0xcbf2_9ce4_8422_2325,
    };
    run_observed(net, path, input, &mut probe)?;
    Ok(BranchReport {
        margin: probe.margin,
        signature: probe.hash,
    })
}
