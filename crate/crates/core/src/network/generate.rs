use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BomNetwork;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Assembly tree: every item feeds at most one successor.
    SpanningTree,
    /// Layered DAG with arcs from any earlier layer.
    GeneralDag,
    /// Spanning tree plus extra arcs, so some components are shared by
    /// several products (undirected cycles, still a DAG).
    SharedComponentDag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    /// Target average in-degree `<k> = m / n`. Ignored for spanning trees.
    pub avg_degree: f64,
    pub topology: Topology,
    /// Upper bound on `n_l`; the layered generator attains it.
    #[serde(default)]
    pub layers: Option<usize>,
    /// Arc quantities are drawn uniformly from `1..=max_weight`.
    #[serde(default = "default_max_weight")]
    pub max_weight: u32,
}

fn default_max_weight() -> u32 {
    3
}

const DEFAULT_LAYERS: usize = 4;
const GENERATOR_STREAM: u64 = 0x006e_6574_776f_726b;

/// Deterministic in `(spec, seed)`.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<BomNetwork> {
    let n = spec.n;
    if n == 0 {
        return Err(Error::InfeasibleSpec("n must be at least 1".into()));
    }
    if !spec.avg_degree.is_finite() || spec.avg_degree < 0.0 {
        return Err(Error::InfeasibleSpec(format!(
            "average degree k = {} must be finite and non-negative",
            spec.avg_degree
        )));
    }
    if n > 1 && spec.avg_degree >= n as f64 {
        return Err(Error::InfeasibleSpec(format!(
            "average degree k = {} must be less than n = {n}",
            spec.avg_degree
        )));
    }
    if spec.max_weight == 0 {
        return Err(Error::InfeasibleSpec("max_weight must be at least 1".into()));
    }
    if spec.layers == Some(0) {
        return Err(Error::InfeasibleSpec("layer count must be at least 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(GENERATOR_STREAM);
    let arcs = match spec.topology {
        Topology::SpanningTree => spanning_tree(n, spec.layers, &mut rng)?.0,
        Topology::GeneralDag => layered_dag(n, spec.avg_degree, spec.layers, &mut rng)?,
        Topology::SharedComponentDag => shared_component_dag(n, spec.avg_degree, spec.layers, &mut rng)?,
    };
    let arcs = arcs
        .into_iter()
        .map(|(i, j)| (i, j, rng.random_range(1..=spec.max_weight) as f64))
        .collect();
    BomNetwork::new(n, arcs)
}

/// Node 0 is the root product; node `i` attaches to a parent drawn among
/// nodes whose depth leaves room under the layer cap. Returns arcs
/// `(child, parent)` and each node's depth below the root.
fn spanning_tree(n: usize, layers: Option<usize>, rng: &mut ChaCha8Rng) -> Result<(Vec<(usize, usize)>, Vec<usize>)> {
    let max_depth = layers.map_or(usize::MAX, |l| l - 1);
    if n > 1 && max_depth == 0 {
        return Err(Error::InfeasibleSpec("a connected tree with n > 1 needs at least 2 layers".into()));
    }
    let mut depth = vec![0usize; n];
    // nodes that may still take children
    let mut open = vec![0usize];
    let mut arcs = Vec::with_capacity(n.saturating_sub(1));
    for child in 1..n {
        let parent = open[rng.random_range(0..open.len())];
        depth[child] = depth[parent] + 1;
        arcs.push((child, parent));
        if depth[child] < max_depth {
            open.push(child);
        }
    }
    Ok((arcs, depth))
}

fn layered_dag(n: usize, k: f64, layers: Option<usize>, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    let layers = layers.unwrap_or(DEFAULT_LAYERS).min(n);
    let m = (k * n as f64).round() as usize;
    if m == 0 {
        return Ok(Vec::new());
    }
    if layers < 2 {
        return Err(Error::InfeasibleSpec("a DAG with arcs needs at least 2 layers".into()));
    }
    // layer l holds ids [start[l], start[l + 1]); layer 0 is raw material
    let start: Vec<usize> = (0..=layers).map(|l| l * n / layers).collect();
    let layer_of = |v: usize| start.partition_point(|&s| s <= v) - 1;
    let capacity: usize = (start[1]..n).map(|v| start[layer_of(v)]).sum();
    if m > capacity {
        return Err(Error::InfeasibleSpec(format!(
            "{m} arcs requested but a {layers}-layer DAG on {n} nodes holds at most {capacity}"
        )));
    }

    let mut arcs = Vec::with_capacity(m);
    let mut present = HashSet::with_capacity(m);
    let mut in_degree = vec![0usize; n];
    // one arc from the previous layer pins every product at its layer depth
    let producers: Vec<usize> = (start[1]..n).collect();
    for &v in producers.iter().take(m) {
        let l = layer_of(v);
        let u = rng.random_range(start[l - 1]..start[l]);
        arcs.push((u, v));
        present.insert((u, v));
        in_degree[v] += 1;
    }
    while arcs.len() < m {
        let v = producers[rng.random_range(0..producers.len())];
        let cap = start[layer_of(v)];
        if in_degree[v] >= cap {
            continue;
        }
        let u = rng.random_range(0..cap);
        if present.insert((u, v)) {
            arcs.push((u, v));
            in_degree[v] += 1;
        }
    }
    Ok(arcs)
}

fn shared_component_dag(n: usize, k: f64, layers: Option<usize>, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    let (mut arcs, depth) = spanning_tree(n, layers, rng)?;
    if n < 3 {
        return Ok(arcs);
    }
    let target = ((k * n as f64).round() as usize).max(n);
    let extra = target - (n - 1);
    let mut present: HashSet<(usize, usize)> = arcs.iter().copied().collect();
    // an extra arc u -> v needs depth(v) < depth(u), which keeps the graph
    // acyclic and the layer cap intact
    let mut by_depth: Vec<Vec<usize>> = Vec::new();
    for (v, &d) in depth.iter().enumerate() {
        if by_depth.len() <= d {
            by_depth.resize(d + 1, Vec::new());
        }
        by_depth[d].push(v);
    }
    let shallower: Vec<usize> = by_depth.iter().scan(0, |acc, level| {
        *acc += level.len();
        Some(*acc)
    }).collect();
    let mut sorted_by_depth: Vec<usize> = (0..n).collect();
    sorted_by_depth.sort_by_key(|&v| (depth[v], v));

    let mut added = 0;
    let mut misses = 0usize;
    let miss_limit = 100 * (extra + n);
    while added < extra {
        let u = rng.random_range(1..n);
        let pool = shallower[depth[u] - 1];
        let v = sorted_by_depth[rng.random_range(0..pool)];
        if present.insert((u, v)) {
            arcs.push((u, v));
            added += 1;
        } else {
            misses += 1;
            if misses > miss_limit {
                return Err(Error::InfeasibleSpec(format!(
                    "could not place {extra} shared-component arcs on {n} nodes"
                )));
            }
        }
    }
    Ok(arcs)
}
