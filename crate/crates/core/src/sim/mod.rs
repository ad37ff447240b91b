//! Periodic-review base-stock simulation on a BOM network.
//!
//! Each period runs, in order: inventory-position update, the order pass
//! plus `n_l - 1` internal-demand passes, receipt and outside-demand
//! fulfilment, fill rates under proportional allocation, production limited
//! by the scarcest component, and holding/backlog cost.
//!
//! Branch conventions shared with both gradient engines:
//! * an order is placed only when `gap = position - S < 0` (ties order nothing);
//! * `I0 = max(0, x)` and `B = -min(0, x)` treat `x = 0` as the backlog side;
//! * the fill rate is `min(I0 / need, 1)`, set to 1 when `need == 0`, and is
//!   only sensitive when the ratio is strictly below 1;
//! * the scarcest component is the lowest id among ties;
//! * items without components produce everything requested (`k = 1`).

mod evaluate;
mod trajectory;

pub use evaluate::{evaluate_policy, simulate_cost, CostSummary};
pub use trajectory::{ip_definitional, PeriodState, Trajectory, TrajectoryRecorder};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{check_len, BomNetwork, Kernel};
use crate::stochastic::ScenarioPath;

/// Base-stock levels `S`, one per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyVector(pub Vec<f64>);

impl PolicyVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|&&s| s > 0.0).count()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("policy", n, self.0.len())?;
        match self.0.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            Some(item) => Err(Error::InvalidPolicy {
                item,
                value: self.0[item],
            }),
            None => Ok(()),
        }
    }

    /// FNV-1a hash over the exact bit patterns, as 16 hex digits.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for s in &self.0 {
            for b in s.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

impl From<Vec<f64>> for PolicyVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub holding: Vec<f64>,
    pub penalty: Vec<f64>,
}

impl CostParams {
    pub fn uniform(n: usize, holding: f64, penalty: f64) -> Self {
        Self {
            holding: vec![holding; n],
            penalty: vec![penalty; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("holding costs", n, self.holding.len())?;
        check_len("penalty costs", n, self.penalty.len())?;
        for (what, v) in [("holding cost", &self.holding), ("penalty cost", &self.penalty)] {
            if let Some(i) = v.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(Error::InvalidConfig(format!("{what} of item {i} is {}", v[i])));
            }
        }
        Ok(())
    }
}

/// Starting on-hand inventory `I_0` (which is also `IP_0`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum InitialInventory {
    /// `I_0 = S`; gradients then carry the dependence of `I_0` on `S`.
    #[default]
    AtBaseStock,
    Explicit(Vec<f64>),
}

impl InitialInventory {
    pub(crate) fn resolve(&self, policy: &PolicyVector) -> Result<Vec<f64>> {
        match self {
            InitialInventory::AtBaseStock => Ok(policy.0.clone()),
            InitialInventory::Explicit(v) => {
                check_len("initial inventory", policy.len(), v.len())?;
                if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::InvalidConfig(format!("initial inventory of item {i} is {}", v[i])));
                }
                Ok(v.clone())
            }
        }
    }

    pub fn tracks_policy(&self) -> bool {
        matches!(self, InitialInventory::AtBaseStock)
    }
}

/// Everything a single simulation needs besides the network and the path.
#[derive(Debug, Clone, Copy)]
pub struct SimInput<'a> {
    pub policy: &'a PolicyVector,
    pub costs: &'a CostParams,
    pub init: &'a InitialInventory,
    pub kernel: Kernel,
}

impl<'a> SimInput<'a> {
    pub fn new(policy: &'a PolicyVector, costs: &'a CostParams, init: &'a InitialInventory) -> Self {
        Self {
            policy,
            costs,
            init,
            kernel: Kernel::Sparse,
        }
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }
}

/// Marker for "no scarcest component" (items without inputs).
pub const NO_COMPONENT: usize = usize::MAX;

/// Read-only view of one simulated period, handed to observers right after
/// the period's cost is known. All slices have length `n`.
pub struct PeriodView<'a> {
    pub t: usize,
    pub horizon: usize,
    pub demand: &'a [f64],
    pub lead_times: &'a [u32],
    pub ip: &'a [f64],
    /// Signed gaps of each order pass: `IP - D - S` for the first pass,
    /// `IP_temp - S` for the internal-demand passes. An order is placed iff gap < 0.
    pub order_gaps: &'a [Vec<f64>],
    /// `IP - D - O Aᵀ` from the last internal-demand pass (equals `IP - D` if none).
    pub ip_temp: &'a [f64],
    pub order: &'a [f64],
    /// `O_t + O^b_{t-1}`, the production requested this period.
    pub requested: &'a [f64],
    pub arrivals: &'a [f64],
    /// `I_{t-1} + P_t - B_{t-1} - D_t`.
    pub i_temp: &'a [f64],
    pub start_on_hand: &'a [f64],
    pub backlog: &'a [f64],
    /// `(O_t + O^b_{t-1}) Aᵀ`.
    pub need: &'a [f64],
    pub fill_rate: &'a [f64],
    /// Whether the fill rate sits on its ratio branch (`I0 / need < 1`).
    pub fill_active: &'a [bool],
    pub scarcity: &'a [f64],
    pub scarcest: &'a [usize],
    pub production: &'a [f64],
    pub production_backlog: &'a [f64],
    pub on_hand: &'a [f64],
    pub cost: f64,
}

pub trait PeriodObserver {
    fn observe(&mut self, view: &PeriodView<'_>) -> Result<()>;
}

impl PeriodObserver for () {
    fn observe(&mut self, _: &PeriodView<'_>) -> Result<()> {
        Ok(())
    }
}

/// Cost series of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCosts {
    pub period_costs: Vec<f64>,
    pub total: f64,
}

/// Runs the simulation, calling `observer` once per period.
pub fn run_observed<O: PeriodObserver>(
    net: &BomNetwork,
    path: &ScenarioPath,
    input: SimInput<'_>,
    observer: &mut O,
) -> Result<RunCosts> {
    run_with_passes(net, path, input, net.layer_count() - 1, observer)
}

pub(crate) fn check_inputs(net: &BomNetwork, path: &ScenarioPath, input: &SimInput<'_>) -> Result<()> {
    let n = net.n();
    check_len("scenario items", n, path.n())?;
    input.policy.validate(n)?;
    input.costs.validate(n)?;
    Ok(())
}

pub(crate) fn run_with_passes<O: PeriodObserver>(
    net: &BomNetwork,
    path: &ScenarioPath,
    input: SimInput<'_>,
    inner_passes: usize,
    observer: &mut O,
) -> Result<RunCosts> {
    check_inputs(net, path, &input)?;
    let n = net.n();
    let horizon = path.horizon();
    let adj = net.adjacency(input.kernel);
    let s = input.policy.as_slice();
    let (h, p) = (&input.costs.holding, &input.costs.penalty);
    let initial = input.init.resolve(input.policy)?;

    let mut ip = initial.clone();
    let mut on_hand = initial;
    let mut order_prev = vec![0.0; n];
    let mut demand_prev = vec![0.0; n];
    let mut backlog_prev = vec![0.0; n];
    let mut prod_backlog_prev = vec![0.0; n];
    // pipeline[t] holds receipts landing in period t; later ones are dropped
    let mut pipeline = vec![0.0; (horizon + 1) * n];

    let mut demand = vec![0.0; n];
    let mut order = vec![0.0; n];
    let mut gaps = vec![vec![0.0; n]; inner_passes + 1];
    let mut ip_temp = vec![0.0; n];
    let mut requested = vec![0.0; n];
    let mut i_temp = vec![0.0; n];
    let mut start_on_hand = vec![0.0; n];
    let mut backlog = vec![0.0; n];
    let mut need = vec![0.0; n];
    let mut fill = vec![0.0; n];
    let mut fill_active = vec![false; n];
    let mut scarcity = vec![0.0; n];
    let mut scarcest = vec![NO_COMPONENT; n];
    let mut production = vec![0.0; n];
    let mut prod_backlog = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    let mut period_costs = Vec::with_capacity(horizon);
    let mut total = 0.0;

    for t in 1..=horizon {
        for (d, &raw) in demand.iter_mut().zip(path.demands(t)) {
            *d = raw as f64;
        }
        let leads = path.lead_times(t);

        // inventory position
        adj.mul_vec_into(&order_prev, &mut scratch);
        for i in 0..n {
            ip[i] += order_prev[i] - scratch[i] - demand_prev[i];
        }

        // first order pass ignores internal demand
        for i in 0..n {
            let gap = ip[i] - demand[i] - s[i];
            gaps[0][i] = gap;
            order[i] = if gap < 0.0 { -gap } else { 0.0 };
            ip_temp[i] = ip[i] - demand[i];
        }
        // each further pass settles one more layer of internal demand
        for gap_row in gaps.iter_mut().skip(1) {
            adj.mul_vec_into(&order, &mut scratch);
            for i in 0..n {
                ip_temp[i] = ip[i] - demand[i] - scratch[i];
                let gap = ip_temp[i] - s[i];
                gap_row[i] = gap;
                order[i] = if gap < 0.0 { -gap } else { 0.0 };
            }
        }

        // receipts and outside demand
        let arrivals = &pipeline[t * n..(t + 1) * n];
        for i in 0..n {
            let x = on_hand[i] + arrivals[i] - backlog_prev[i] - demand[i];
            i_temp[i] = x;
            start_on_hand[i] = if x > 0.0 { x } else { 0.0 };
            backlog[i] = if x > 0.0 { 0.0 } else { 0.0 - x }; // +0, not -0, at x = 0
            requested[i] = order[i] + prod_backlog_prev[i];
        }

        // proportional allocation
        adj.mul_vec_into(&requested, &mut need);
        for i in 0..n {
            let (rate, active) = fill_rate(start_on_hand[i], need[i]);
            fill[i] = rate;
            fill_active[i] = active;
        }

        // production, limited by the scarcest component
        for i in 0..n {
            let (k, j) = scarcest_component(net.upstream(i).0, &fill);
            scarcity[i] = k;
            scarcest[i] = j;
            production[i] = k * requested[i];
            prod_backlog[i] = requested[i] - production[i];
            let landing = t + leads[i] as usize;
            if landing <= horizon {
                pipeline[landing * n + i] += production[i];
            }
        }

        adj.mul_vec_into(&production, &mut scratch);
        let mut cost = 0.0;
        for i in 0..n {
            on_hand[i] = start_on_hand[i] - scratch[i];
            cost += h[i] * on_hand[i] + p[i] * backlog[i];
        }
        if !cost.is_finite() {
            let item = (0..n)
                .find(|&i| !(on_hand[i].is_finite() && backlog[i].is_finite()))
                .unwrap_or(0);
            return Err(Error::NonFiniteState { what: "cost", t, item });
        }
        period_costs.push(cost);
        total += cost;

        observer.observe(&PeriodView {
            t,
            horizon,
            demand: &demand,
            lead_times: leads,
            ip: &ip,
            order_gaps: &gaps,
            ip_temp: &ip_temp,
            order: &order,
            requested: &requested,
            arrivals: &pipeline[t * n..(t + 1) * n],
            i_temp: &i_temp,
            start_on_hand: &start_on_hand,
            backlog: &backlog,
            need: &need,
            fill_rate: &fill,
            fill_active: &fill_active,
            scarcity: &scarcity,
            scarcest: &scarcest,
            production: &production,
            production_backlog: &prod_backlog,
            on_hand: &on_hand,
            cost,
        })?;

        std::mem::swap(&mut order_prev, &mut order);
        std::mem::swap(&mut demand_prev, &mut demand);
        std::mem::swap(&mut backlog_prev, &mut backlog);
        std::mem::swap(&mut prod_backlog_prev, &mut prod_backlog);
    }

    Ok(RunCosts { period_costs, total })
}

/// `(min(stock / need, 1), ratio branch active)`, with `need == 0` giving full availability.
#[inline]
pub(crate) fn fill_rate(stock: f64, need: f64) -> (f64, bool) {
    if need > 0.0 {
        let q = stock / need;
        if q < 1.0 {
            return (q, true);
        }
    }
    (1.0, false)
}

/// Lowest fill rate among `components` (ids ascending) and the first id attaining it.
#[inline]
pub(crate) fn scarcest_component(components: &[usize], fill: &[f64]) -> (f64, usize) {
    let mut best = (1.0, NO_COMPONENT);
    let mut first = true;
    for &j in components {
        let r = fill[j];
        if first || r < best.0 {
            best = (r, j);
            first = false;
        }
    }
    best
}

/// Full trajectory of one run.
pub fn simulate(net: &BomNetwork, path: &ScenarioPath, input: SimInput<'_>) -> Result<Trajectory> {
    let initial = input.init.resolve(input.policy)?;
    let mut recorder = TrajectoryRecorder::new(path.horizon());
    let costs = run_observed(net, path, input, &mut recorder)?;
    Ok(recorder.finish(initial, costs, path.seed(), input.policy.clone()))
}
