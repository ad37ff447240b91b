//! Run configuration: parsed strictly, validated before any work, and copied
//! into every output folder in resolved form.

use std::path::{Path, PathBuf};

use invopt_core::network::{generate, BomNetwork, GeneratorSpec, Kernel};
use invopt_core::opt::{Method, OptConfig};
use invopt_core::sim::{CostParams, InitialInventory, PolicyVector};
use invopt_core::stochastic::{derive_seed, DemandDist, DemandModel, LeadTimeDist, LeadTimeModel, ScenarioModels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::fixture::{self, Fixture, FixtureName};

const DEMAND_STREAM: u64 = 0x64656d;
const LEAD_STREAM: u64 = 0x6c6561;
const COST_STREAM: u64 = 0x636f73;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkSource,
    #[serde(default)]
    pub demand: DemandSpec,
    #[serde(default)]
    pub lead_time: LeadTimeSpec,
    pub costs: CostSpec,
    pub horizon: usize,
    /// Seeds scenario paths and the optimizer.
    #[serde(default)]
    pub seed: u64,
    /// Seeds the random parts of the instance (generated network, drawn
    /// means and costs), so changing `seed` keeps the instance fixed.
    #[serde(default)]
    pub instance_seed: u64,
    /// Paths used by `evaluate`.
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub init: InitialInventory,
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default)]
    pub policy: PolicySource,
    #[serde(default)]
    pub optimizer: Option<OptimizerBlock>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_replications() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    File { path: PathBuf },
    Generate { spec: GeneratorSpec },
    Fixture { name: FixtureName },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandSpec {
    #[default]
    Zero,
    Constant {
        value: u64,
    },
    /// `N(mean, std)` on the listed items (all items when absent), zero elsewhere.
    Normal {
        mean: f64,
        std: f64,
        #[serde(default)]
        items: Option<Vec<usize>>,
    },
    /// Per-item mean drawn uniformly from `[mean_low, mean_high)`, std `cv * mean`.
    /// With `finished_only`, items that feed others get no outside demand.
    RandomNormal {
        mean_low: f64,
        mean_high: f64,
        cv: f64,
        #[serde(default)]
        finished_only: bool,
    },
    Explicit {
        items: Vec<DemandDist>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeadTimeSpec {
    Constant { periods: u32 },
    /// Per-item constant lead time drawn uniformly from `low..=high`.
    Uniform { low: u32, high: u32 },
    Explicit { items: Vec<LeadTimeDist> },
    /// Lead times stored with a fixture network.
    Fixture,
}

impl Default for LeadTimeSpec {
    fn default() -> Self {
        LeadTimeSpec::Constant { periods: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    Uniform { holding: f64, penalty: f64 },
    /// Integer holding cost drawn from `holding_low..=holding_high`, penalty `ratio * h`.
    Random { holding_low: u32, holding_high: u32, penalty_ratio: f64 },
    Explicit { holding: Vec<f64>, penalty: Vec<f64> },
    /// Holding costs stored with a fixture network.
    Fixture { penalty_ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySource {
    /// Echelon mean demand times mean lead time.
    #[default]
    Initial,
    Values {
        values: Vec<f64>,
    },
    /// A JSON array, or an object with a `policy` array (such as `policy.json`).
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeMode {
    #[default]
    TwoStage,
    Fista,
    Ssgd,
    Sgd,
}

impl OptimizeMode {
    pub fn single_method(self) -> Option<Method> {
        match self {
            OptimizeMode::TwoStage => None,
            OptimizeMode::Fista => Some(Method::Fista),
            OptimizeMode::Ssgd => Some(Method::Ssgd),
            OptimizeMode::Sgd => Some(Method::Sgd),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerBlock {
    #[serde(default)]
    pub mode: OptimizeMode,
    #[serde(default)]
    pub config: OptConfig,
    /// Common-random-number paths for comparing policies after the run.
    #[serde(default = "default_eval_seeds")]
    pub evaluation_seeds: usize,
}

fn default_eval_seeds() -> usize {
    50
}

/// Everything a command needs, built from a [`RunConfig`].
#[derive(Debug)]
pub struct Instance {
    pub net: BomNetwork,
    pub models: ScenarioModels,
    pub costs: CostParams,
    pub names: Option<Vec<String>>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let NetworkSource::File { path } = &mut cfg.network {
            *path = rebase(base, path);
        }
        if let PolicySource::File { path } = &mut cfg.policy {
            *path = rebase(base, path);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        if let Some(opt) = &self.optimizer {
            opt.config.validate()?;
            if opt.evaluation_seeds == 0 {
                return bad("optimizer.evaluation_seeds must be at least 1");
            }
        }
        match &self.demand {
            DemandSpec::Normal { mean, std, .. } if !(mean.is_finite() && std.is_finite() && *std >= 0.0) => {
                return bad("normal demand needs finite mean and std >= 0")
            }
            DemandSpec::RandomNormal { mean_low, mean_high, cv, .. }
                if !(mean_low.is_finite() && mean_high > mean_low && *cv >= 0.0) =>
            {
                return bad("random_normal demand needs mean_low < mean_high and cv >= 0")
            }
            _ => {}
        }
        match &self.lead_time {
            LeadTimeSpec::Constant { periods: 0 } => return bad("lead times must be at least 1 period"),
            LeadTimeSpec::Uniform { low, high } if *low == 0 || high < low => {
                return bad("uniform lead times need 1 <= low <= high")
            }
            _ => {}
        }
        if let CostSpec::Random { holding_low, holding_high, penalty_ratio } = &self.costs {
            if holding_high < holding_low || !(penalty_ratio.is_finite() && *penalty_ratio >= 0.0) {
                return bad("random costs need holding_low <= holding_high and penalty_ratio >= 0");
            }
        }
        let fixture_net = matches!(self.network, NetworkSource::Fixture { .. });
        if !fixture_net && (self.lead_time == LeadTimeSpec::Fixture || matches!(self.costs, CostSpec::Fixture { .. })) {
            return bad("fixture lead times and costs need a fixture network");
        }
        Ok(())
    }

    pub fn instance(&self) -> CliResult<Instance> {
        let (net, fixture) = match &self.network {
            NetworkSource::File { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read network {}: {e}", path.display())))?;
                (BomNetwork::from_json(&text)?, None)
            }
            NetworkSource::Generate { spec } => (generate(spec, self.instance_seed)?, None),
            NetworkSource::Fixture { name } => {
                let Fixture { names, net, lead_times, holding } = fixture::load(*name)?;
                (net, Some((names, lead_times, holding)))
            }
        };
        let n = net.n();
        let demand = self.demand_model(&net)?;
        let lead_time = match &self.lead_time {
            LeadTimeSpec::Constant { periods } => LeadTimeModel::constant(n, *periods),
            LeadTimeSpec::Uniform { low, high } => {
                let mut rng = self.rng(LEAD_STREAM);
                let periods: Vec<u32> = (0..n).map(|_| rng.random_range(*low..=*high)).collect();
                LeadTimeModel::per_item(&periods)
            }
            LeadTimeSpec::Explicit { items } => LeadTimeModel { items: items.clone() },
            LeadTimeSpec::Fixture => LeadTimeModel::per_item(&fixture.as_ref().expect("validated").1),
        };
        let costs = match &self.costs {
            CostSpec::Uniform { holding, penalty } => CostParams::uniform(n, *holding, *penalty),
            CostSpec::Random { holding_low, holding_high, penalty_ratio } => {
                let mut rng = self.rng(COST_STREAM);
                let holding: Vec<f64> = (0..n).map(|_| rng.random_range(*holding_low..=*holding_high) as f64).collect();
                let penalty = holding.iter().map(|h| penalty_ratio * h).collect();
                CostParams { holding, penalty }
            }
            CostSpec::Explicit { holding, penalty } => CostParams {
                holding: holding.clone(),
                penalty: penalty.clone(),
            },
            CostSpec::Fixture { penalty_ratio } => {
                let holding = fixture.as_ref().expect("validated").2.clone();
                let penalty = holding.iter().map(|h| penalty_ratio * h).collect();
                CostParams { holding, penalty }
            }
        };
        costs.validate(n)?;
        let models = ScenarioModels { demand, lead_time };
        for (what, got) in [("demand model", models.demand.items.len()), ("lead-time model", models.lead_time.items.len())] {
            if got != n {
                return Err(CliError::Validation(invopt_core::Error::DimensionMismatch { what, expected: n, got }));
            }
        }
        Ok(Instance {
            net,
            models,
            costs,
            names: fixture.map(|f| f.0),
        })
    }

    fn demand_model(&self, net: &BomNetwork) -> CliResult<DemandModel> {
        let n = net.n();
        Ok(match &self.demand {
            DemandSpec::Zero => DemandModel::zero(n),
            DemandSpec::Constant { value } => DemandModel::constant(n, *value),
            DemandSpec::Normal { mean, std, items } => {
                let mut model = DemandModel::zero(n);
                let all: Vec<usize> = (0..n).collect();
                for &i in items.as_deref().unwrap_or(&all) {
                    if i >= n {
                        return Err(CliError::Config(format!("demand item {i} out of range for {n} items")));
                    }
                    model.items[i] = DemandDist::Normal { mean: *mean, std: *std };
                }
                model
            }
            DemandSpec::RandomNormal { mean_low, mean_high, cv, finished_only } => {
                let mut rng = self.rng(DEMAND_STREAM);
                let means: Vec<f64> = (0..n)
                    .map(|i| {
                        let m = rng.random_range(*mean_low..*mean_high);
                        if *finished_only && net.out_degree(i) > 0 {
                            0.0
                        } else {
                            m
                        }
                    })
                    .collect();
                let stds: Vec<f64> = means.iter().map(|m| cv * m).collect();
                DemandModel::normal(&means, &stds)
            }
            DemandSpec::Explicit { items } => DemandModel { items: items.clone() },
        })
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.instance_seed, stream));
        rng.set_stream(stream);
        rng
    }

    /// The policy named by the config, or by `override_path` when given.
    pub fn policy(&self, inst: &Instance, override_path: Option<&Path>) -> CliResult<PolicyVector> {
        let source = match override_path {
            Some(p) => PolicySource::File { path: p.to_path_buf() },
            None => self.policy.clone(),
        };
        let policy = match source {
            PolicySource::Initial => invopt_core::opt::initial_policy(&inst.net, &inst.models)?,
            PolicySource::Values { values } => PolicyVector(values),
            PolicySource::File { path } => read_policy(&path)?,
        };
        policy.validate(inst.net.n())?;
        Ok(policy)
    }
}

fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_policy(path: &Path) -> CliResult<PolicyVector> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read policy {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("policy file: {e}")))?;
    let arr = match &value {
        serde_json::Value::Object(map) => map.get("policy").cloned().unwrap_or(serde_json::Value::Null),
        other => other.clone(),
    };
    serde_json::from_value::<Vec<f64>>(arr)
        .map(PolicyVector)
        .map_err(|_| CliError::Config(format!("{}: expected an array of levels or an object with `policy`", path.display())))
}
