//! Bill-of-materials networks.
//!
//! A network with `n` items is a weighted DAG stored as the adjacency matrix
//! `A`, where `a_ij > 0` means `a_ij` units of component `i` go into one
//! unit of item `j`. Both `A` and `Aᵀ` are kept in CSR form; a dense copy is
//! built on first request.

mod generate;
mod matrix;

pub use generate::{generate, GeneratorSpec, Topology};
pub use matrix::{Adjacency, CsrMatrix, DenseMatrix, Kernel, SparseAdjacency};

use std::collections::{HashSet, VecDeque};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemClass {
    RawMaterial,
    /// Sub-assemblies and final products.
    Production,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub id: usize,
    pub class: ItemClass,
}

/// Serialized network: `{n, items: [{id, class}], arcs: [[i, j, a_ij]]}`.
///
/// This is the unvalidated form; [`BomNetwork::from_document`] checks it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub n: usize,
    #[serde(default)]
    pub items: Vec<ItemSpec>,
    pub arcs: Vec<(usize, usize, f64)>,
}

/// Outcome of [`validate`]. Any recorded issue blocks construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<Error>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    /// First issue as an error, if any.
    pub fn into_result(self) -> Result<()> {
        match self.issues.into_iter().next() {
            None => Ok(()),
            Some(e) => Err(e),
        }
    }
}

/// Checks ids, weights, duplicate arcs, raw-material in-degree and
/// acyclicity. Cycle detection only runs once ids are in range.
pub fn validate(doc: &NetworkDocument) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = doc.n;
    let mut ids_ok = true;
    let mut seen = HashSet::new();
    for &(i, j, w) in &doc.arcs {
        for id in [i, j] {
            if id >= n {
                report.issues.push(Error::DanglingNodeId { id, n });
                ids_ok = false;
            }
        }
        if !(w > 0.0 && w.is_finite()) {
            report.issues.push(Error::NegativeWeight {
                from: i,
                to: j,
                weight: w,
            });
        }
        if !seen.insert((i, j)) {
            report.issues.push(Error::DuplicateArc { from: i, to: j });
        }
    }
    for item in &doc.items {
        if item.id >= n {
            report.issues.push(Error::DanglingNodeId { id: item.id, n });
            ids_ok = false;
        }
    }
    if !ids_ok {
        return report;
    }

    let mut in_degree = vec![0usize; n];
    for &(_, j, _) in &doc.arcs {
        in_degree[j] += 1;
    }
    for item in &doc.items {
        if item.class == ItemClass::RawMaterial && in_degree[item.id] > 0 {
            report.issues.push(Error::RawMaterialHasInputs {
                id: item.id,
                in_degree: in_degree[item.id],
            });
        }
    }
    if let Some(cycle) = find_cycle(n, &doc.arcs) {
        report.issues.push(Error::CycleDetected { cycle });
    }
    report
}

/// Returns one directed cycle (as a node sequence) if the graph has any.
fn find_cycle(n: usize, arcs: &[(usize, usize, f64)]) -> Option<Vec<usize>> {
    let mut succ = vec![Vec::new(); n];
    for &(i, j, _) in arcs {
        succ[i].push(j);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = vec![0u8; n];
    let mut parent = vec![usize::MAX; n];
    for root in 0..n {
        if color[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        color[root] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < succ[v].len() {
                let w = succ[v][*next];
                *next += 1;
                match color[w] {
                    0 => {
                        color[w] = 1;
                        parent[w] = v;
                        stack.push((w, 0));
                    }
                    1 => {
                        let mut cycle = vec![v];
                        let mut u = v;
                        while u != w {
                            u = parent[u];
                            cycle.push(u);
                        }
                        cycle.reverse();
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                color[v] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Validated, immutable production network.
#[derive(Debug)]
pub struct BomNetwork {
    n: usize,
    classes: Vec<ItemClass>,
    sparse: SparseAdjacency,
    topo: Vec<usize>,
    layers: usize,
    dense: OnceLock<DenseMatrix>,
}

impl Clone for BomNetwork {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            classes: self.classes.clone(),
            sparse: self.sparse.clone(),
            topo: self.topo.clone(),
            layers: self.layers,
            dense: OnceLock::new(),
        }
    }
}

impl PartialEq for BomNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.classes == other.classes && self.sparse == other.sparse
    }
}

impl BomNetwork {
    /// Builds a network from arcs, inferring item classes from in-degree.
    pub fn new(n: usize, arcs: Vec<(usize, usize, f64)>) -> Result<Self> {
        Self::from_document(&NetworkDocument {
            n,
            items: Vec::new(),
            arcs,
        })
    }

    /// Validates and builds. Items missing from `doc.items` get their class
    /// from in-degree (no inputs means raw material).
    pub fn from_document(doc: &NetworkDocument) -> Result<Self> {
        validate(doc).into_result()?;
        let n = doc.n;
        let a = CsrMatrix::from_triplets(n, n, &doc.arcs);
        let at = a.transpose();
        let mut classes: Vec<ItemClass> = (0..n)
            .map(|j| {
                if at.row(j).0.is_empty() {
                    ItemClass::RawMaterial
                } else {
                    ItemClass::Production
                }
            })
            .collect();
        for item in &doc.items {
            classes[item.id] = item.class;
        }
        let topo = topological_order(&a, &at);
        let layers = longest_path_layers(&at, &topo);
        Ok(Self {
            n,
            classes,
            sparse: SparseAdjacency { a, at },
            topo,
            layers,
            dense: OnceLock::new(),
        })
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            n: self.n,
            items: self
                .classes
                .iter()
                .enumerate()
                .map(|(id, &class)| ItemSpec { id, class })
                .collect(),
            arcs: self.arcs().collect(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: NetworkDocument =
            serde_json::from_str(s).map_err(|e| Error::InvalidConfig(format!("network json: {e}")))?;
        Self::from_document(&doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("network document serializes")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arc_count(&self) -> usize {
        self.sparse.a.nnz()
    }

    /// Arcs as `(component, product, quantity)`, sorted by component then product.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.sparse.a.iter()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.sparse.a.get(i, j)
    }

    pub fn class(&self, i: usize) -> ItemClass {
        self.classes[i]
    }

    pub fn classes(&self) -> &[ItemClass] {
        &self.classes
    }

    /// Upstream components of `item` with their quantities, ids ascending.
    pub fn upstream(&self, item: usize) -> (&[usize], &[f64]) {
        self.sparse.at.row(item)
    }

    /// Downstream consumers of `item` with their quantities, ids ascending.
    pub fn downstream(&self, item: usize) -> (&[usize], &[f64]) {
        self.sparse.a.row(item)
    }

    pub fn in_degree(&self, item: usize) -> usize {
        self.upstream(item).0.len()
    }

    pub fn out_degree(&self, item: usize) -> usize {
        self.downstream(item).0.len()
    }

    /// Items ordered so every component precedes the products it feeds.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// `n_l`: longest directed path length (in arcs) plus one.
    pub fn layer_count(&self) -> usize {
        self.layers
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.sparse.a
    }

    pub fn csr_transpose(&self) -> &CsrMatrix {
        &self.sparse.at
    }

    pub fn dense(&self) -> &DenseMatrix {
        self.dense.get_or_init(|| self.sparse.a.to_dense())
    }

    pub fn adjacency(&self, kernel: Kernel) -> &dyn Adjacency {
        match kernel {
            Kernel::Sparse => &self.sparse,
            Kernel::Dense => self.dense(),
        }
    }

    /// `x Aᵀ`, the internal demand each component sees from orders `x`.
    pub fn spmv_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("x", self.n, x.len())?;
        let mut out = vec![0.0; self.n];
        self.sparse.a.mul_vec_into(x, &mut out);
        Ok(out)
    }

    pub fn stats(&self) -> NetworkStats {
        network_stats(self)
    }
}

fn topological_order(a: &CsrMatrix, at: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut indeg: Vec<usize> = (0..n).map(|j| at.row(j).0.len()).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&j| indeg[j] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &w in a.row(v).0 {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    debug_assert_eq!(order.len(), n, "validated network must be acyclic");
    order
}

fn longest_path_layers(at: &CsrMatrix, topo: &[usize]) -> usize {
    let mut depth = vec![0usize; at.nrows()];
    for &v in topo {
        depth[v] = at.row(v).0.iter().map(|&u| depth[u] + 1).max().unwrap_or(0);
    }
    depth.into_iter().max().map_or(1, |d| d + 1)
}

/// Layer count `n_l` of a validated network.
pub fn layer_count(net: &BomNetwork) -> usize {
    net.layer_count()
}

/// `x Aᵀ` on the sparse storage.
pub fn spmv_t(net: &BomNetwork, x: &[f64]) -> Result<Vec<f64>> {
    net.spmv_t(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub n: usize,
    pub m: usize,
    /// `m / (n (n - 1))`; `None` when `n < 2`.
    pub rho: Option<f64>,
    pub k_avg: f64,
    pub n_l: usize,
}

impl NetworkStats {
    pub fn density(&self) -> Result<f64> {
        self.rho.ok_or(Error::DegenerateSize { n: self.n })
    }
}

pub fn network_stats(net: &BomNetwork) -> NetworkStats {
    let n = net.n();
    let m = net.arc_count();
    NetworkStats {
        n,
        m,
        rho: (n >= 2).then(|| m as f64 / (n as f64 * (n as f64 - 1.0))),
        k_avg: if n == 0 { 0.0 } else { m as f64 / n as f64 },
        n_l: net.layer_count(),
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> BomNetwork {
        BomNetwork::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    /// Literal definition: sup{r : A^r has a positive entry} + 1, with
    /// boolean powers iterated until the support vanishes.
    fn layers_by_matrix_power(net: &BomNetwork) -> usize {
        let n = net.n();
        let a: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| net.weight(i, j) > 0.0).collect())
            .collect();
        let mut power = a.clone();
        let mut sup = 0;
        for r in 1..=n {
            if !power.iter().flatten().any(|&b| b) {
                break;
            }
            sup = r;
            let mut next = vec![vec![false; n]; n];
            for i in 0..n {
                for k in 0..n {
                    if power[i][k] {
                        for j in 0..n {
                            next[i][j] |= a[k][j];
                        }
                    }
                }
            }
            power = next;
        }
        sup + 1
    }

    #[test]
    fn chain_is_valid_with_three_layers() {
        let net = chain3();
        assert_eq!(net.layer_count(), 3);
        assert_eq!(net.class(0), ItemClass::RawMaterial);
        assert_eq!(net.class(2), ItemClass::Production);
    }

    #[test]
    fn isolated_node_has_one_layer() {
        let net = BomNetwork::new(1, vec![]).unwrap();
        assert_eq!(layer_count(&net), 1);
        let stats = net.stats();
        assert_eq!(stats.n_l, 1);
        assert_eq!(stats.density(), Err(Error::DegenerateSize { n: 1 }));
    }

    #[test]
    fn two_cycle_is_rejected() {
        let doc = NetworkDocument {
            n: 2,
            items: vec![],
            arcs: vec![(0, 1, 1.0), (1, 0, 1.0)],
        };
        let report = validate(&doc);
        assert!(!report.is_valid());
        match &report.issues[0] {
            Error::CycleDetected { cycle } => {
                let mut c = cycle.clone();
                c.sort();
                assert_eq!(c, vec![0, 1]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn longer_cycle_is_named() {
        let doc = NetworkDocument {
            n: 4,
            items: vec![],
            arcs: vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)],
        };
        let err = BomNetwork::from_document(&doc).unwrap_err();
        assert_eq!(err, Error::CycleDetected { cycle: vec![1, 2, 3] });
        assert!(err.to_string().contains("1 -> 2 -> 3 -> 1"));
    }

    #[test]
    fn negative_weight_and_dangling_id_are_rejected() {
        let err = BomNetwork::new(2, vec![(0, 1, -1.0)]).unwrap_err();
        assert!(matches!(err, Error::NegativeWeight { .. }));
        let err = BomNetwork::new(2, vec![(0, 5, 1.0)]).unwrap_err();
        assert_eq!(err, Error::DanglingNodeId { id: 5, n: 2 });
    }

    #[test]
    fn raw_material_with_inputs_is_rejected() {
        let doc = NetworkDocument {
            n: 2,
            items: vec![ItemSpec {
                id: 1,
                class: ItemClass::RawMaterial,
            }],
            arcs: vec![(0, 1, 1.0)],
        };
        assert!(matches!(
            BomNetwork::from_document(&doc),
            Err(Error::RawMaterialHasInputs { id: 1, .. })
        ));
    }

    #[test]
    fn stats_from_definition() {
        // n = 5, m = 4
        let net = BomNetwork::new(5, vec![(0, 4, 1.0), (1, 4, 1.0), (2, 4, 1.0), (3, 4, 1.0)]).unwrap();
        let s = network_stats(&net);
        assert_eq!(s.m, 4);
        assert!((s.rho.unwrap() - 0.2).abs() < 1e-15);
        assert!((s.k_avg - 0.8).abs() < 1e-15);

        let full = BomNetwork::new(3, vec![(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(full.stats().rho, Some(0.5));
    }

    #[test]
    fn spmv_single_arc() {
        let net = BomNetwork::new(2, vec![(0, 1, 2.0)]).unwrap();
        assert_eq!(spmv_t(&net, &[0.0, 3.0]).unwrap(), vec![6.0, 0.0]);
        let empty = BomNetwork::new(3, vec![]).unwrap();
        assert_eq!(empty.spmv_t(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
        assert!(matches!(
            net.spmv_t(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip_is_exact_for_integer_weights() {
        let net = BomNetwork::new(4, vec![(0, 2, 3.0), (1, 2, 1.0), (2, 3, 2.0)]).unwrap();
        let s = net.to_json();
        let back = BomNetwork::from_json(&s).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_json(), s);
    }

    #[test]
    fn layer_count_matches_matrix_powers_on_generated_nets() {
        let mut checked = 0;
        for seed in 0..30u64 {
            for topology in [Topology::SpanningTree, Topology::GeneralDag, Topology::SharedComponentDag] {
                let spec = GeneratorSpec {
                    n: 5 + (seed as usize % 45),
                    avg_degree: 1.2,
                    topology,
                    layers: Some(2 + seed as usize % 5),
                    max_weight: 3,
                };
                // a two-layer tree is a star with no room for shared components
                let net = match generate(&spec, seed) {
                    Ok(net) => net,
                    Err(Error::InfeasibleSpec(_)) if spec.layers == Some(2) => continue,
                    Err(e) => panic!("{spec:?}: {e}"),
                };
                assert_eq!(net.layer_count(), layers_by_matrix_power(&net), "{spec:?} seed {seed}");
                checked += 1;
            }
        }
        assert!(checked >= 80);
    }
}
