use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_observed, SimInput};
use crate::error::{Error, Result};
use crate::network::BomNetwork;
use crate::stochastic::{sample_path, ScenarioModels, ScenarioPath};

/// Total cost of one run without keeping any history.
pub fn simulate_cost(net: &BomNetwork, path: &ScenarioPath, input: SimInput<'_>) -> Result<f64> {
    Ok(run_observed(net, path, input, &mut ())?.total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub mean: f64,
    /// Standard error of the mean (0 for a single replication).
    pub std_err: f64,
    /// Per-replication totals, in seed order.
    pub totals: Vec<f64>,
}

impl CostSummary {
    pub fn from_totals(totals: Vec<f64>) -> Result<Self> {
        if totals.is_empty() {
            return Err(Error::InvalidConfig("at least one replication is required".into()));
        }
        let k = totals.len() as f64;
        let mean = totals.iter().sum::<f64>() / k;
        let std_err = if totals.len() > 1 {
            let var = totals.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, std_err, totals })
    }
}

/// Mean total cost over independently sampled paths, one per seed. Runs on
/// the current rayon pool; totals are reduced in seed order.
pub fn evaluate_policy(
    net: &BomNetwork,
    models: &ScenarioModels,
    horizon: usize,
    input: SimInput<'_>,
    seeds: &[u64],
) -> Result<CostSummary> {
    let n = net.n();
    let totals = seeds
        .par_iter()
        .map(|&seed| {
            let path = sample_path(&models.demand, &models.lead_time, horizon, n, seed)?;
            simulate_cost(net, &path, input)
        })
        .collect::<Result<Vec<f64>>>()?;
    CostSummary::from_totals(totals)
}
