//! Scenario paths: integer outside demands and integer lead times.
//!
//! Every `(purpose, item)` pair draws from its own ChaCha stream under the
//! path seed, so the demand array does not move when the lead-time model
//! changes (and vice versa), and adding items does not disturb existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEMAND_STREAM: u64 = 1 << 40;
const LEAD_STREAM: u64 = 2 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandDist {
    /// `max(0, round(N(mean, std)))`.
    Normal { mean: f64, std: f64 },
    Constant { value: u64 },
    /// Replayed verbatim; `values[t - 1]` is the demand in period `t`.
    Sequence { values: Vec<u64> },
}

impl DemandDist {
    pub fn mean(&self) -> f64 {
        match self {
            DemandDist::Normal { mean, .. } => mean.max(0.0),
            DemandDist::Constant { value } => *value as f64,
            DemandDist::Sequence { values } if values.is_empty() => 0.0,
            DemandDist::Sequence { values } => values.iter().sum::<u64>() as f64 / values.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    pub items: Vec<DemandDist>,
}

impl DemandModel {
    pub fn constant(n: usize, value: u64) -> Self {
        Self {
            items: vec![DemandDist::Constant { value }; n],
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(n, 0)
    }

    pub fn normal(means: &[f64], stds: &[f64]) -> Self {
        Self {
            items: means
                .iter()
                .zip(stds)
                .map(|(&mean, &std)| DemandDist::Normal { mean, std })
                .collect(),
        }
    }

    pub fn means(&self) -> Vec<f64> {
        self.items.iter().map(DemandDist::mean).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeadTimeDist {
    Constant { periods: u32 },
    /// `max(1, round(N(mean, cv * mean)))`.
    RoundedNormal { mean: f64, cv: f64 },
}

impl LeadTimeDist {
    pub fn mean(&self) -> f64 {
        match self {
            LeadTimeDist::Constant { periods } => *periods as f64,
            LeadTimeDist::RoundedNormal { mean, .. } => mean.max(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeModel {
    pub items: Vec<LeadTimeDist>,
}

impl LeadTimeModel {
    pub fn constant(n: usize, periods: u32) -> Self {
        Self {
            items: vec![LeadTimeDist::Constant { periods }; n],
        }
    }

    pub fn per_item(periods: &[u32]) -> Self {
        Self {
            items: periods.iter().map(|&periods| LeadTimeDist::Constant { periods }).collect(),
        }
    }

    pub fn means(&self) -> Vec<f64> {
        self.items.iter().map(LeadTimeDist::mean).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioModels {
    pub demand: DemandModel,
    pub lead_time: LeadTimeModel,
}

/// One sampled realization over periods `1..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPath {
    horizon: usize,
    n: usize,
    seed: u64,
    demands: Vec<u64>,
    lead_times: Vec<u32>,
}

impl ScenarioPath {
    /// Builds a path from explicit `horizon × n` arrays (row `t - 1` is period `t`).
    pub fn from_arrays(horizon: usize, n: usize, seed: u64, demands: Vec<u64>, lead_times: Vec<u32>) -> Result<Self> {
        crate::network::check_len("demands", horizon * n, demands.len())?;
        crate::network::check_len("lead_times", horizon * n, lead_times.len())?;
        if horizon == 0 {
            return Err(Error::OutOfRange("scenario horizon must be at least 1".into()));
        }
        if let Some(pos) = lead_times.iter().position(|&l| l == 0) {
            return Err(Error::UnsupportedDistribution(format!(
                "lead time 0 at period {}, item {}",
                pos / n + 1,
                pos % n
            )));
        }
        Ok(Self {
            horizon,
            n,
            seed,
            demands,
            lead_times,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Outside demands of period `t` (1-based).
    pub fn demands(&self, t: usize) -> &[u64] {
        &self.demands[(t - 1) * self.n..t * self.n]
    }

    /// Lead times of orders placed in period `t` (1-based).
    pub fn lead_times(&self, t: usize) -> &[u32] {
        &self.lead_times[(t - 1) * self.n..t * self.n]
    }

    pub fn max_lead_time(&self) -> u32 {
        self.lead_times.iter().copied().max().unwrap_or(1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ScenarioDocument::from(self)).expect("scenario serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ScenarioDocument =
            serde_json::from_str(s).map_err(|e| Error::InvalidConfig(format!("scenario json: {e}")))?;
        doc.try_into()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDocument {
    horizon: usize,
    n: usize,
    seed: u64,
    demands: Vec<Vec<u64>>,
    lead_times: Vec<Vec<u32>>,
}

impl From<&ScenarioPath> for ScenarioDocument {
    fn from(p: &ScenarioPath) -> Self {
        Self {
            horizon: p.horizon,
            n: p.n,
            seed: p.seed,
            demands: p.demands.chunks(p.n.max(1)).map(<[u64]>::to_vec).collect(),
            lead_times: p.lead_times.chunks(p.n.max(1)).map(<[u32]>::to_vec).collect(),
        }
    }
}

impl TryFrom<ScenarioDocument> for ScenarioPath {
    type Error = Error;

    fn try_from(d: ScenarioDocument) -> Result<Self> {
        for row in &d.demands {
            crate::network::check_len("demand row", d.n, row.len())?;
        }
        for row in &d.lead_times {
            crate::network::check_len("lead-time row", d.n, row.len())?;
        }
        ScenarioPath::from_arrays(
            d.horizon,
            d.n,
            d.seed,
            d.demands.concat(),
            d.lead_times.concat(),
        )
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for replication `k` under `base`.
pub fn derive_seed(base: u64, k: u64) -> u64 {
    mix64(mix64(base) ^ k.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

pub fn sample_path(demand: &DemandModel, lead: &LeadTimeModel, horizon: usize, n: usize, seed: u64) -> Result<ScenarioPath> {
    crate::network::check_len("demand model", n, demand.items.len())?;
    crate::network::check_len("lead-time model", n, lead.items.len())?;
    if horizon == 0 {
        return Err(Error::OutOfRange("scenario horizon must be at least 1".into()));
    }
    let mut demands = vec![0u64; horizon * n];
    let mut lead_times = vec![1u32; horizon * n];

    for (i, dist) in demand.items.iter().enumerate() {
        let mut rng = stream_rng(seed, DEMAND_STREAM | i as u64);
        let column = (0..horizon).map(|t| t * n + i);
        match dist {
            DemandDist::Normal { mean, std } => {
                let normal = Normal::new(*mean, *std).map_err(|e| {
                    Error::UnsupportedDistribution(format!("item {i}: Normal({mean}, {std}): {e}"))
                })?;
                if !mean.is_finite() {
                    return Err(Error::UnsupportedDistribution(format!("item {i}: non-finite mean")));
                }
                for idx in column {
                    demands[idx] = normal.sample(&mut rng).round().max(0.0) as u64;
                }
            }
            DemandDist::Constant { value } => column.for_each(|idx| demands[idx] = *value),
            DemandDist::Sequence { values } => {
                if values.len() < horizon {
                    return Err(Error::UnsupportedDistribution(format!(
                        "item {i}: sequence of length {} is shorter than horizon {horizon}",
                        values.len()
                    )));
                }
                for (t, idx) in column.enumerate() {
                    demands[idx] = values[t];
                }
            }
        }
    }

    let cap = horizon as u32;
    for (i, dist) in lead.items.iter().enumerate() {
        let mut rng = stream_rng(seed, LEAD_STREAM | i as u64);
        let column = (0..horizon).map(|t| t * n + i);
        match dist {
            LeadTimeDist::Constant { periods } => {
                if *periods == 0 {
                    return Err(Error::UnsupportedDistribution(format!("item {i}: lead time must be >= 1")));
                }
                column.for_each(|idx| lead_times[idx] = (*periods).min(cap));
            }
            LeadTimeDist::RoundedNormal { mean, cv } => {
                let normal = Normal::new(*mean, cv * mean).map_err(|e| {
                    Error::UnsupportedDistribution(format!("item {i}: lead N({mean}, {cv}*{mean}): {e}"))
                })?;
                for idx in column {
                    let draw = normal.sample(&mut rng).round().max(1.0);
                    lead_times[idx] = (draw.min(cap as f64)) as u32;
                }
            }
        }
    }

    ScenarioPath::from_arrays(horizon, n, seed, demands, lead_times)
}

/// Path `k` of the batch uses seed `derive_seed(base_seed, k)`.
pub fn batch_paths(models: &ScenarioModels, horizon: usize, n: usize, base_seed: u64, count: usize) -> Result<Vec<ScenarioPath>> {
    (0..count as u64)
        .map(|k| sample_path(&models.demand, &models.lead_time, horizon, n, derive_seed(base_seed, k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_demand_and_constant_lead() {
        let p = sample_path(&DemandModel::zero(3), &LeadTimeModel::constant(3, 2), 5, 3, 1).unwrap();
        assert!((1..=5).all(|t| p.demands(t) == [0, 0, 0]));
        assert!((1..=5).all(|t| p.lead_times(t) == [2, 2, 2]));
    }

    #[test]
    fn normal_sample_mean() {
        let model = DemandModel::normal(&[100.0], &[10.0]);
        let p = sample_path(&model, &LeadTimeModel::constant(1, 1), 10_000, 1, 2024).unwrap();
        let mean = (1..=10_000).map(|t| p.demands(t)[0] as f64).sum::<f64>() / 10_000.0;
        assert!((mean - 100.0).abs() < 1.0, "mean {mean}");
    }

    #[test]
    fn truncation_is_rare_when_mean_is_five_sigma() {
        let model = DemandModel::normal(&[50.0], &[10.0]);
        let p = sample_path(&model, &LeadTimeModel::constant(1, 1), 50_000, 1, 5).unwrap();
        let zeros = (1..=50_000).filter(|&t| p.demands(t)[0] == 0).count();
        assert!((zeros as f64) / 50_000.0 < 1e-4);
    }

    #[test]
    fn sequence_replays_and_short_sequence_errors() {
        let model = DemandModel {
            items: vec![DemandDist::Sequence { values: vec![4, 0, 7] }],
        };
        let p = sample_path(&model, &LeadTimeModel::constant(1, 1), 3, 1, 0).unwrap();
        assert_eq!([p.demands(1)[0], p.demands(2)[0], p.demands(3)[0]], [4, 0, 7]);
        assert!(matches!(
            sample_path(&model, &LeadTimeModel::constant(1, 1), 4, 1, 0),
            Err(Error::UnsupportedDistribution(_))
        ));
    }

    #[test]
    fn lead_time_stream_is_independent_of_demand() {
        let demand = DemandModel::normal(&[20.0, 30.0], &[5.0, 3.0]);
        let a = sample_path(&demand, &LeadTimeModel::constant(2, 1), 50, 2, 77).unwrap();
        let random_lead = LeadTimeModel {
            items: vec![LeadTimeDist::RoundedNormal { mean: 4.0, cv: 0.3 }; 2],
        };
        let b = sample_path(&demand, &random_lead, 50, 2, 77).unwrap();
        assert_eq!(a.demands, b.demands);
        assert_ne!(a.lead_times, b.lead_times);
        assert!(b.lead_times.iter().all(|&l| l >= 1));
    }

    #[test]
    fn lead_times_are_capped_at_horizon() {
        let p = sample_path(&DemandModel::zero(1), &LeadTimeModel::constant(1, 9), 4, 1, 0).unwrap();
        assert_eq!(p.lead_times(1), [4]);
    }

    #[test]
    fn batches_are_reproducible_and_distinct() {
        let models = ScenarioModels {
            demand: DemandModel::normal(&[40.0; 4], &[8.0; 4]),
            lead_time: LeadTimeModel::constant(4, 2),
        };
        let a = batch_paths(&models, 20, 4, 9, 10).unwrap();
        let b = batch_paths(&models, 20, 4, 9, 10).unwrap();
        assert_eq!(a, b);
        for i in 0..10 {
            for j in i + 1..10 {
                assert_ne!(a[i].demands, a[j].demands);
            }
        }
        let single = batch_paths(&models, 20, 4, 9, 1).unwrap();
        let direct = sample_path(&models.demand, &models.lead_time, 20, 4, derive_seed(9, 0)).unwrap();
        assert_eq!(single[0], direct);
    }

    #[test]
    fn json_dump_round_trips() {
        let models = ScenarioModels {
            demand: DemandModel::normal(&[10.0, 3.0], &[2.0, 1.0]),
            lead_time: LeadTimeModel::per_item(&[1, 3]),
        };
        let p = batch_paths(&models, 6, 2, 1, 1).unwrap().remove(0);
        assert_eq!(ScenarioPath::from_json(&p.to_json()).unwrap(), p);
    }
}
