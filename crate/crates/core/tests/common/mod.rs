#![allow(dead_code)]

use invopt_core::network::{generate, BomNetwork, GeneratorSpec, Topology};
use invopt_core::sim::{CostParams, InitialInventory, PolicyVector};
use invopt_core::stochastic::{sample_path, DemandModel, LeadTimeDist, LeadTimeModel, ScenarioPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub net: BomNetwork,
    pub path: ScenarioPath,
    pub policy: PolicyVector,
    pub costs: CostParams,
    pub init: InitialInventory,
}

/// Random network, path, policy and costs. `explicit_init` draws a random
/// starting inventory instead of starting at the base-stock levels.
pub fn random_instance(seed: u64, n: usize, horizon: usize, explicit_init: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topology = match seed % 3 {
        0 => Topology::SpanningTree,
        1 => Topology::GeneralDag,
        _ => Topology::SharedComponentDag,
    };
    let mut spec = GeneratorSpec {
        n,
        avg_degree: rng.random_range(1.0..2.5),
        topology,
        layers: Some(rng.random_range(3..=5)),
        max_weight: 3,
    };
    // small n cannot hold every requested density; thin out, then fall back to a tree
    let net = loop {
        match generate(&spec, seed) {
            Ok(net) => break net,
            Err(_) if spec.avg_degree > 0.3 => spec.avg_degree *= 0.7,
            Err(_) => {
                spec.topology = Topology::SpanningTree;
                break generate(&spec, seed).expect("tree generator");
            }
        }
    };
    let means: Vec<f64> = (0..n).map(|_| rng.random_range(3.0..15.0)).collect();
    let stds: Vec<f64> = means.iter().map(|m| 0.4 * m).collect();
    let lead = LeadTimeModel {
        items: (0..n)
            .map(|_| LeadTimeDist::RoundedNormal {
                mean: rng.random_range(1.0..3.5),
                cv: 0.3,
            })
            .collect(),
    };
    let path = sample_path(&DemandModel::normal(&means, &stds), &lead, horizon, n, seed).expect("path");
    let policy = PolicyVector((0..n).map(|_| rng.random_range(0.0..80.0)).collect());
    let costs = CostParams {
        holding: (0..n).map(|_| rng.random_range(0.5..5.0)).collect(),
        penalty: (0..n).map(|_| rng.random_range(1.0..40.0)).collect(),
    };
    let init = if explicit_init {
        InitialInventory::Explicit((0..n).map(|_| rng.random_range(0.0..60.0)).collect())
    } else {
        InitialInventory::AtBaseStock
    };
    Instance {
        net,
        path,
        policy,
        costs,
        init,
    }
}

/// Straightforward per-item transcription of the period recursion on a
/// dense weight table. Returns per-period `(IP, O, I, B, Ob, M, cost)`.
pub struct NaivePeriod {
    pub ip: Vec<f64>,
    pub order: Vec<f64>,
    pub on_hand: Vec<f64>,
    pub backlog: Vec<f64>,
    pub ob: Vec<f64>,
    pub m: Vec<f64>,
    pub cost: f64,
}

pub fn naive_simulate(inst: &Instance) -> Vec<NaivePeriod> {
    let net = &inst.net;
    let n = net.n();
    let tt = inst.path.horizon();
    let a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| net.weight(i, j)).collect()).collect();
    let s = &inst.policy.0;
    let init = match &inst.init {
        InitialInventory::AtBaseStock => s.clone(),
        InitialInventory::Explicit(v) => v.clone(),
    };
    let mut ip = init.clone();
    let mut inv = init;
    let mut o_prev = vec![0.0; n];
    let mut d_prev = vec![0.0; n];
    let mut b_prev = vec![0.0; n];
    let mut ob_prev = vec![0.0; n];
    let mut arrivals = vec![vec![0.0; n]; tt + 2];
    let mut out = Vec::new();
    for t in 1..=tt {
        let d: Vec<f64> = inst.path.demands(t).iter().map(|&x| x as f64).collect();
        let l = inst.path.lead_times(t);
        for i in 0..n {
            let mut internal = 0.0;
            for j in 0..n {
                internal += a[i][j] * o_prev[j];
            }
            ip[i] += o_prev[i] - internal - d_prev[i];
        }
        let mut o: Vec<f64> = (0..n).map(|i| (s[i] - (ip[i] - d[i])).max(0.0)).collect();
        for _ in 1..net.layer_count() {
            let mut next = vec![0.0; n];
            for i in 0..n {
                let mut internal = 0.0;
                for j in 0..n {
                    internal += a[i][j] * o[j];
                }
                next[i] = (s[i] - (ip[i] - d[i] - internal)).max(0.0);
            }
            o = next;
        }
        let mut i0 = vec![0.0; n];
        let mut b = vec![0.0; n];
        for i in 0..n {
            let x = inv[i] + arrivals[t][i] - b_prev[i] - d[i];
            i0[i] = x.max(0.0);
            b[i] = (-x).max(0.0);
        }
        let op: Vec<f64> = (0..n).map(|i| o[i] + ob_prev[i]).collect();
        let r: Vec<f64> = (0..n)
            .map(|i| {
                let need: f64 = (0..n).map(|j| a[i][j] * op[j]).sum();
                if need > 0.0 { (i0[i] / need).min(1.0) } else { 1.0 }
            })
            .collect();
        let mut m = vec![0.0; n];
        for i in 0..n {
            let k = (0..n).filter(|&j| a[j][i] != 0.0).map(|j| r[j]).fold(1.0, f64::min);
            m[i] = k * op[i];
            let land = t + l[i] as usize;
            if land <= tt {
                arrivals[land][i] += m[i];
            }
        }
        let ob: Vec<f64> = (0..n).map(|i| op[i] - m[i]).collect();
        let mut cost = 0.0;
        for i in 0..n {
            let used: f64 = (0..n).map(|j| a[i][j] * m[j]).sum();
            inv[i] = i0[i] - used;
            cost += inst.costs.holding[i] * inv[i] + inst.costs.penalty[i] * b[i];
        }
        out.push(NaivePeriod {
            ip: ip.clone(),
            order: o.clone(),
            on_hand: inv.clone(),
            backlog: b.clone(),
            ob: ob.clone(),
            m,
            cost,
        });
        o_prev = o;
        d_prev = d;
        b_prev = b;
        ob_prev = ob;
    }
    out
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
