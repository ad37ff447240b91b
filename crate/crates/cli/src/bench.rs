//! Wall-clock scaling benchmarks.
//!
//! Each size gets one generated instance (layered DAG, fixed average degree)
//! and one pre-sampled path, so repetitions time only the kernel under test.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use invopt_core::grad::{grad_bp, grad_ipa};
use invopt_core::network::{generate, BomNetwork, GeneratorSpec, Kernel, Topology};
use invopt_core::opt::initial_policy;
use invopt_core::sim::{simulate_cost, CostParams, InitialInventory, PolicyVector, SimInput};
use invopt_core::stochastic::{derive_seed, sample_path, DemandModel, LeadTimeModel, ScenarioModels, ScenarioPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "sim-dense")]
    SimDense,
    #[serde(rename = "sim-sparse")]
    SimSparse,
    #[serde(rename = "ipa-dense")]
    IpaDense,
    #[serde(rename = "ipa-sparse")]
    IpaSparse,
    #[serde(rename = "bp-dense")]
    BpDense,
    #[serde(rename = "bp-sparse")]
    BpSparse,
    /// Ten sparse simulations on the current pool.
    #[serde(rename = "batch-10")]
    Batch10,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::SimDense,
        Variant::SimSparse,
        Variant::IpaDense,
        Variant::IpaSparse,
        Variant::BpDense,
        Variant::BpSparse,
        Variant::Batch10,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SimDense => "sim-dense",
            Variant::SimSparse => "sim-sparse",
            Variant::IpaDense => "ipa-dense",
            Variant::IpaSparse => "ipa-sparse",
            Variant::BpDense => "bp-dense",
            Variant::BpSparse => "bp-sparse",
            Variant::Batch10 => "batch-10",
        }
    }

    fn kernel(self) -> Kernel {
        match self {
            Variant::SimDense | Variant::IpaDense | Variant::BpDense => Kernel::Dense,
            _ => Kernel::Sparse,
        }
    }

    /// Rough peak working set in bytes, used to skip cells that would not fit.
    pub fn memory_estimate(self, n: usize, arcs: usize, horizon: usize, max_lead: usize) -> f64 {
        let (n, m, t, l) = (n as f64, arcs as f64, horizon as f64, max_lead as f64);
        let dense = if self.kernel() == Kernel::Dense { 8.0 * n * n } else { 0.0 };
        let graph = 32.0 * m + 64.0 * n;
        let run = match self {
            Variant::SimDense | Variant::SimSparse => 8.0 * 24.0 * n,
            Variant::Batch10 => 10.0 * 8.0 * 24.0 * n,
            // state Jacobians plus one per receipt in flight
            Variant::IpaDense | Variant::IpaSparse => 8.0 * n * n * (14.0 + l),
            Variant::BpDense | Variant::BpSparse => 48.0 * t * n + 8.0 * t * n,
        };
        dense + graph + run
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown benchmark variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
    pub variants: Vec<Variant>,
    pub reps: usize,
    pub horizon: usize,
    pub avg_degree: f64,
    pub layers: usize,
    pub seed: u64,
    /// Cells whose estimated working set exceeds this are reported as "/".
    pub mem_limit_mb: f64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            sizes: vec![500, 1000, 2000, 4000],
            variants: vec![Variant::SimSparse, Variant::BpSparse],
            reps: 5,
            horizon: 100,
            avg_degree: 10.0,
            layers: 4,
            seed: 0,
            mem_limit_mb: 4096.0,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> CliResult<()> {
        if self.reps < 5 {
            return Err(CliError::Config(format!("benchmarks need at least 5 repetitions, got {}", self.reps)));
        }
        if self.sizes.is_empty() || self.variants.is_empty() || self.horizon == 0 {
            return Err(CliError::Config("benchmarks need sizes, variants and a positive horizon".into()));
        }
        if self.sizes.iter().any(|&n| n < 2) {
            return Err(CliError::Config("benchmark sizes must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub variant: Variant,
    /// Wall seconds per repetition; empty when skipped.
    pub times: Vec<f64>,
    pub median: Option<f64>,
    /// Median absolute deviation of `times`.
    pub mad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub variant: Variant,
    /// Least-squares slope of `ln(median)` against `ln(n)`.
    pub slope: Option<f64>,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub spec: BenchSpec,
    pub workers: usize,
    pub cells: Vec<Cell>,
    pub fits: Vec<Fit>,
}

impl BenchmarkReport {
    pub fn median(&self, variant: Variant, n: usize) -> Option<f64> {
        self.cells.iter().find(|c| c.variant == variant && c.n == n).and_then(|c| c.median)
    }

    pub fn slope(&self, variant: Variant) -> Option<f64> {
        self.fits.iter().find(|f| f.variant == variant).and_then(|f| f.slope)
    }

    /// `n,variant,median_s,mad_s,reps`, with "/" for skipped cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,variant,median_s,mad_s,reps\n");
        for c in &self.cells {
            match (c.median, c.mad) {
                (Some(m), Some(d)) => s.push_str(&format!("{},{},{m:.6e},{d:.6e},{}\n", c.n, c.variant, c.times.len())),
                _ => s.push_str(&format!("{},{},/,/,0\n", c.n, c.variant)),
            }
        }
        s
    }
}

struct Setup {
    net: BomNetwork,
    costs: CostParams,
    policy: PolicyVector,
    paths: Vec<ScenarioPath>,
}

fn setup(spec: &BenchSpec, n: usize, paths: usize) -> CliResult<Setup> {
    let seed = derive_seed(spec.seed, n as u64);
    let net = generate(
        &GeneratorSpec {
            n,
            avg_degree: spec.avg_degree,
            topology: Topology::GeneralDag,
            layers: Some(spec.layers),
            max_weight: 2,
        },
        seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let means: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..100.0)).collect();
    let stds: Vec<f64> = means.iter().map(|m| 0.1 * m).collect();
    let holding: Vec<f64> = (0..n).map(|_| rng.random_range(1..=10) as f64).collect();
    let costs = CostParams {
        penalty: holding.iter().map(|h| 10.0 * h).collect(),
        holding,
    };
    let models = ScenarioModels {
        demand: DemandModel::normal(&means, &stds),
        lead_time: LeadTimeModel::constant(n, 2),
    };
    let policy = initial_policy(&net, &models)?;
    let paths = (0..paths as u64)
        .map(|r| sample_path(&models.demand, &models.lead_time, spec.horizon, n, derive_seed(seed, r)))
        .collect::<invopt_core::Result<Vec<_>>>()?;
    Ok(Setup { net, costs, policy, paths })
}

fn time_once(variant: Variant, s: &Setup) -> CliResult<f64> {
    let init = InitialInventory::AtBaseStock;
    let input = SimInput::new(&s.policy, &s.costs, &init).with_kernel(variant.kernel());
    let start = Instant::now();
    match variant {
        Variant::SimDense | Variant::SimSparse => {
            std::hint::black_box(simulate_cost(&s.net, &s.paths[0], input)?);
        }
        Variant::IpaDense | Variant::IpaSparse => {
            std::hint::black_box(grad_ipa(&s.net, &s.paths[0], input)?);
        }
        Variant::BpDense | Variant::BpSparse => {
            std::hint::black_box(grad_bp(&s.net, &s.paths[0], input)?);
        }
        Variant::Batch10 => {
            let total: f64 = s
                .paths
                .par_iter()
                .map(|p| simulate_cost(&s.net, p, input))
                .collect::<invopt_core::Result<Vec<f64>>>()?
                .into_iter()
                .sum();
            std::hint::black_box(total);
        }
    }
    Ok(start.elapsed().as_secs_f64())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() / 2;
    if s.len() % 2 == 1 {
        s[k]
    } else {
        0.5 * (s[k - 1] + s[k])
    }
}

fn mad(v: &[f64]) -> f64 {
    let m = median(v);
    median(&v.iter().map(|x| (x - m).abs()).collect::<Vec<_>>())
}

/// Least-squares slope of `ln y` on `ln x`; needs at least 3 points.
pub fn fit_slope(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 3 || points.iter().any(|&(_, y)| y <= 0.0) {
        return None;
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(x, _)| (x as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, y)| y.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Times one cell outside a report, with any repetition count. Used for
/// point comparisons between variants where no slope is fitted.
pub fn measure_cell(spec: &BenchSpec, n: usize, variant: Variant, reps: usize) -> CliResult<Cell> {
    let s = setup(spec, n, if variant == Variant::Batch10 { 10 } else { 1 })?;
    if variant.kernel() == Kernel::Dense {
        s.net.dense();
    }
    let times = (0..reps.max(1)).map(|_| time_once(variant, &s)).collect::<CliResult<Vec<f64>>>()?;
    Ok(Cell {
        n,
        variant,
        median: Some(median(&times)),
        mad: Some(mad(&times)),
        times,
        skipped: None,
    })
}

/// Runs every `(size, variant)` cell on the current rayon pool. `progress`
/// is called after each finished cell.
pub fn run_benchmark(spec: &BenchSpec, progress: &mut dyn FnMut(&Cell)) -> CliResult<BenchmarkReport> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &n in &spec.sizes {
        let paths = if spec.variants.contains(&Variant::Batch10) { 10 } else { 1 };
        let s = setup(spec, n, paths)?;
        let max_lead = s.paths[0].max_lead_time() as usize;
        for &variant in &spec.variants {
            let need = variant.memory_estimate(n, s.net.arc_count(), spec.horizon, max_lead);
            let cell = if need > spec.mem_limit_mb * 1024.0 * 1024.0 {
                Cell {
                    n,
                    variant,
                    times: Vec::new(),
                    median: None,
                    mad: None,
                    skipped: Some(format!(
                        "estimated {:.0} MiB exceeds the {} MiB limit",
                        need / (1024.0 * 1024.0),
                        spec.mem_limit_mb
                    )),
                }
            } else {
                if variant.kernel() == Kernel::Dense {
                    s.net.dense();
                }
                let times = (0..spec.reps).map(|_| time_once(variant, &s)).collect::<CliResult<Vec<f64>>>()?;
                Cell {
                    n,
                    variant,
                    median: Some(median(&times)),
                    mad: Some(mad(&times)),
                    times,
                    skipped: None,
                }
            };
            progress(&cell);
            cells.push(cell);
        }
    }
    let fits = spec
        .variants
        .iter()
        .map(|&variant| {
            let points: Vec<(usize, f64)> = cells
                .iter()
                .filter(|c| c.variant == variant)
                .filter_map(|c| c.median.map(|m| (c.n, m)))
                .collect();
            Fit {
                variant,
                slope: fit_slope(&points),
                sizes: points.iter().map(|p| p.0).collect(),
            }
        })
        .collect();
    Ok(BenchmarkReport {
        spec: spec.clone(),
        workers: rayon::current_num_threads(),
        cells,
        fits,
    })
}
