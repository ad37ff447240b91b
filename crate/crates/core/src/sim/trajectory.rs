use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{PeriodObserver, PeriodView, PolicyVector, RunCosts};
use crate::error::{Error, Result};
use crate::network::BomNetwork;

/// State at the end of one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodState {
    pub t: usize,
    pub demand: Vec<f64>,
    pub ip: Vec<f64>,
    pub order: Vec<f64>,
    pub arrivals: Vec<f64>,
    pub on_hand: Vec<f64>,
    pub backlog: Vec<f64>,
    pub production_backlog: Vec<f64>,
    pub production: Vec<f64>,
    pub fill_rate: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub policy: PolicyVector,
    /// `I_0`.
    pub initial_on_hand: Vec<f64>,
    /// `periods[t - 1]` is period `t`.
    pub periods: Vec<PeriodState>,
    pub total_cost: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    total_cost: f64,
    seed: u64,
    policy_hash: &'a str,
    horizon: usize,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    /// Period `t` (1-based).
    pub fn state(&self, t: usize) -> &PeriodState {
        &self.periods[t - 1]
    }

    pub fn period_costs(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.cost).collect()
    }

    pub fn cumulative_costs(&self) -> Vec<f64> {
        self.periods
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p.cost;
                Some(*acc)
            })
            .collect()
    }

    /// One row per `(t, item)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,item,IP,O,I,B_out,O_b,M,r,C_t\n");
        for st in &self.periods {
            for i in 0..st.ip.len() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    st.t,
                    i,
                    st.ip[i],
                    st.order[i],
                    st.on_hand[i],
                    st.backlog[i],
                    st.production_backlog[i],
                    st.production[i],
                    st.fill_rate[i],
                    st.cost
                )
                .expect("writing to a String");
            }
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&Summary {
            total_cost: self.total_cost,
            seed: self.seed,
            policy_hash: &self.policy.fingerprint(),
            horizon: self.horizon(),
        })
        .expect("summary serializes")
    }
}

/// Observer that keeps the full state history.
#[derive(Debug, Default)]
pub struct TrajectoryRecorder {
    periods: Vec<PeriodState>,
}

impl TrajectoryRecorder {
    pub fn new(horizon: usize) -> Self {
        Self {
            periods: Vec::with_capacity(horizon),
        }
    }

    pub fn periods(&self) -> &[PeriodState] {
        &self.periods
    }

    pub(crate) fn finish(self, initial_on_hand: Vec<f64>, costs: RunCosts, seed: u64, policy: PolicyVector) -> Trajectory {
        Trajectory {
            seed,
            policy,
            initial_on_hand,
            periods: self.periods,
            total_cost: costs.total,
        }
    }
}

impl PeriodObserver for TrajectoryRecorder {
    fn observe(&mut self, v: &PeriodView<'_>) -> Result<()> {
        self.periods.push(PeriodState {
            t: v.t,
            demand: v.demand.to_vec(),
            ip: v.ip.to_vec(),
            order: v.order.to_vec(),
            arrivals: v.arrivals.to_vec(),
            on_hand: v.on_hand.to_vec(),
            backlog: v.backlog.to_vec(),
            production_backlog: v.production_backlog.to_vec(),
            production: v.production.to_vec(),
            fill_rate: v.fill_rate.to_vec(),
            cost: v.cost,
        });
        Ok(())
    }
}

/// Inventory position of `item` in period `t`, rebuilt from its definition:
/// on hand, plus everything ordered and not yet received, minus own backlog,
/// minus the components still owed to unfinished downstream production.
pub fn ip_definitional(traj: &Trajectory, net: &BomNetwork, t: usize, item: usize) -> Result<f64> {
    if t == 0 || t > traj.horizon() {
        return Err(Error::OutOfRange(format!("period {t} outside 1..={}", traj.horizon())));
    }
    if item >= net.n() {
        return Err(Error::OutOfRange(format!("item {item} outside 0..{}", net.n())));
    }
    let (on_hand, backlog) = if t == 1 {
        (traj.initial_on_hand[item], 0.0)
    } else {
        let prev = traj.state(t - 1);
        (prev.on_hand[item], prev.backlog[item])
    };
    let outstanding: f64 = traj.periods[..t - 1]
        .iter()
        .map(|st| st.order[item] - st.arrivals[item])
        .sum();
    let owed: f64 = if t == 1 {
        0.0
    } else {
        let prev = traj.state(t - 1);
        let (consumers, qty) = net.downstream(item);
        consumers.iter().zip(qty).map(|(&j, &a)| a * prev.production_backlog[j]).sum()
    };
    Ok(on_hand + outstanding - backlog - owed)
}
