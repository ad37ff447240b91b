//! Checked-in networks.
//!
//! The Kodak camera chain lives in `fixtures/kodak.json` as named items and a
//! named adjacency list. That file is the single source of truth for the
//! fixture; it is parsed strictly and validated on every load.

use std::collections::HashMap;

use invopt_core::network::BomNetwork;
use invopt_core::sim::{CostParams, PolicyVector};
use invopt_core::stochastic::LeadTimeModel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

const KODAK_JSON: &str = include_str!("../fixtures/kodak.json");

/// Base-stock levels of the guaranteed-service benchmark solution, items A..J.
pub const KODAK_GS_POLICY: [f64; 10] = [109.70, 0.0, 202.00, 156.37, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];

/// Default shortage penalty as a multiple of holding cost.
pub const DEFAULT_PENALTY_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureName {
    Kodak,
    KodakModified,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    #[allow(dead_code)]
    name: String,
    #[allow(dead_code)]
    description: String,
    items: Vec<FixtureItem>,
    arcs: Vec<(String, String, f64)>,
    modified_extra_arcs: Vec<(String, String, f64)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureItem {
    name: String,
    lead_time: u32,
    holding_cost: f64,
}

#[derive(Debug)]
pub struct Fixture {
    pub names: Vec<String>,
    pub net: BomNetwork,
    pub lead_times: Vec<u32>,
    pub holding: Vec<f64>,
}

impl Fixture {
    pub fn lead_time_model(&self) -> LeadTimeModel {
        LeadTimeModel::per_item(&self.lead_times)
    }

    pub fn costs(&self, penalty_ratio: f64) -> CostParams {
        CostParams {
            holding: self.holding.clone(),
            penalty: self.holding.iter().map(|h| penalty_ratio * h).collect(),
        }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

pub fn load(which: FixtureName) -> CliResult<Fixture> {
    let file: FixtureFile =
        serde_json::from_str(KODAK_JSON).map_err(|e| CliError::Config(format!("kodak fixture: {e}")))?;
    let mut index = HashMap::new();
    for (k, item) in file.items.iter().enumerate() {
        if index.insert(item.name.as_str(), k).is_some() {
            return Err(CliError::Config(format!("kodak fixture: duplicate item {}", item.name)));
        }
        if item.lead_time == 0 || !(item.holding_cost.is_finite() && item.holding_cost >= 0.0) {
            return Err(CliError::Config(format!("kodak fixture: bad parameters for item {}", item.name)));
        }
    }
    let mut arcs = file.arcs.clone();
    if which == FixtureName::KodakModified {
        arcs.extend(file.modified_extra_arcs.iter().cloned());
    }
    let resolved = arcs
        .iter()
        .map(|(from, to, a)| match (index.get(from.as_str()), index.get(to.as_str())) {
            (Some(&i), Some(&j)) => Ok((i, j, *a)),
            _ => Err(CliError::Config(format!("kodak fixture: arc {from} -> {to} names an unknown item"))),
        })
        .collect::<CliResult<Vec<_>>>()?;
    let net = BomNetwork::new(file.items.len(), resolved)?;
    Ok(Fixture {
        names: file.items.iter().map(|i| i.name.clone()).collect(),
        net,
        lead_times: file.items.iter().map(|i| i.lead_time).collect(),
        holding: file.items.iter().map(|i| i.holding_cost).collect(),
    })
}

/// Network, costs with `p = 10 h`, and per-item lead times.
pub fn fixture_kodak(which: FixtureName) -> CliResult<(BomNetwork, CostParams, LeadTimeModel)> {
    let f = load(which)?;
    let costs = f.costs(DEFAULT_PENALTY_RATIO);
    let lead = f.lead_time_model();
    Ok((f.net, costs, lead))
}

pub fn kodak_gs_policy() -> PolicyVector {
    PolicyVector(KODAK_GS_POLICY.to_vec())
}
