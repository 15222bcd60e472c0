//! Fixed-stop path diversity: a directional DAG over geolocated nodes, the K
//! geographically shortest source→target paths with a given number of
//! intermediate stops, an L^p product feature metric on those paths, and
//! its peel.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{
    classify_negative_type, spherical_distance_matrix, validate_metric_merging, MergeReport, MetricMatrix,
    NegativeType, NegativeTypeClass, DEFAULT_TOL_EIG, DEFAULT_TOL_TRI,
};
use crate::peeling::{scale_zero_argmax_diversity_with, PeelLayer, PeelOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub label: String,
    pub lon: f64,
    pub lat: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
}

impl NodeTable {
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        let dim = nodes.first().map_or(0, |n| n.features.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(Error::DuplicateNode(node.id.clone()));
            }
            if !(node.lon.is_finite() && node.lat.is_finite()) {
                return Err(Error::NonFiniteEntry { row: i, col: 0 });
            }
            if node.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: node.features.len(),
                });
            }
            if let Some(col) = node.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteEntry { row: i, col });
            }
            if node.features.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroVector(i));
            }
        }
        Ok(Self { nodes, index })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn position(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownNode(id.to_owned()))
    }

    fn coords(&self, i: usize) -> [f64; 2] {
        [self.nodes[i].lon, self.nodes[i].lat]
    }

    fn leg(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.coords(a), self.coords(b));
        (q[0] - p[0]).hypot(q[1] - p[1])
    }
}

/// Arcs point "forward": `⟨c(v′) − c(v), c(target) − c(source)⟩ > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    pub source: usize,
    pub target: usize,
    /// Table indices kept after restriction, in table order.
    pub nodes: Vec<usize>,
    /// Successor lists by table index; empty for dropped nodes.
    pub succ: Vec<Vec<usize>>,
    pub pred: Vec<Vec<usize>>,
}

impl Dag {
    pub fn arc_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn has_arc(&self, a: usize, b: usize) -> bool {
        self.succ[a].contains(&b)
    }
}

/// Builds the forward-arc DAG and keeps only nodes lying on some
/// source→target path. Nodes behind the source or past the target have
/// incident arcs but can never be visited, so they are dropped too.
pub fn build_directional_dag(table: &NodeTable, source: &str, target: &str) -> Result<Dag> {
    if source == target {
        return Err(Error::SourceTargetCoincide(source.to_owned()));
    }
    let s = table.position(source)?;
    let t = table.position(target)?;
    let (cs, ct) = (table.coords(s), table.coords(t));
    let dir = [ct[0] - cs[0], ct[1] - cs[1]];
    let n = table.len();
    let all_succ: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let ca = table.coords(a);
            (0..n)
                .filter(|&b| {
                    let cb = table.coords(b);
                    (cb[0] - ca[0]) * dir[0] + (cb[1] - ca[1]) * dir[1] > 0.0
                })
                .collect()
        })
        .collect();
    let mut all_pred = vec![Vec::new(); n];
    for (a, succ) in all_succ.iter().enumerate() {
        for &b in succ {
            all_pred[b].push(a);
        }
    }
    let forward = reach(s, &all_succ);
    let backward = reach(t, &all_pred);
    if !forward[t] {
        return Err(Error::DisconnectedSourceTarget {
            source_id: source.to_owned(),
            target_id: target.to_owned(),
        });
    }
    let keep: Vec<bool> = (0..n).map(|i| forward[i] && backward[i]).collect();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|a| {
            if keep[a] {
                all_succ[a].iter().copied().filter(|&b| keep[b]).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let mut pred = vec![Vec::new(); n];
    for (a, list) in succ.iter().enumerate() {
        for &b in list {
            pred[b].push(a);
        }
    }
    debug_assert!(pred[s].is_empty() && succ[t].is_empty());
    Ok(Dag {
        source: s,
        target: t,
        nodes: (0..n).filter(|&i| keep[i]).collect(),
        succ,
        pred,
    })
}

fn reach(start: usize, adj: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(a) = stack.pop() {
        for &b in &adj[a] {
            if !seen[b] {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    seen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCandidate {
    /// Node ids, source first and target last.
    pub nodes: Vec<String>,
    /// Table indices aligned with `nodes`.
    pub node_indices: Vec<usize>,
    /// Planar Euclidean length over (lon, lat).
    pub geo_length: f64,
}

impl PathCandidate {
    /// Table indices of the intermediate stops.
    pub fn stops(&self) -> &[usize] {
        &self.node_indices[1..self.node_indices.len() - 1]
    }
}

#[derive(Debug, Clone)]
struct Partial {
    length: f64,
    seq: Vec<usize>,
}

fn cmp_partial(table: &NodeTable, a: &Partial, b: &Partial) -> Ordering {
    a.length.total_cmp(&b.length).then_with(|| {
        let ids = |p: &Partial| p.seq.iter().map(|&i| table.nodes[i].id.as_str()).collect::<Vec<_>>();
        ids(a).cmp(&ids(b))
    })
}

/// The `k` shortest source→target paths with exactly `stops` intermediate
/// nodes, ordered by length and then by node-id sequence.
///
/// Keeps the `k` best prefixes per (node, hop count): every completion of a
/// prefix ending at `v` adds the same legs, so the ranking of prefixes with
/// a common endpoint carries over to their completions.
pub fn k_shortest_fixed_stops(dag: &Dag, table: &NodeTable, stops: usize, k: usize) -> Result<Vec<PathCandidate>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let n = table.len();
    let (s, t) = (dag.source, dag.target);
    let mut frontier: Vec<Vec<Partial>> = vec![Vec::new(); n];
    frontier[s].push(Partial {
        length: 0.0,
        seq: vec![s],
    });
    for _ in 0..stops {
        let next: Vec<Vec<Partial>> = (0..n)
            .into_par_iter()
            .map(|v| {
                if v == t || v == s {
                    return Vec::new();
                }
                let mut cands: Vec<Partial> = dag.pred[v]
                    .iter()
                    .flat_map(|&u| {
                        frontier[u].iter().map(move |p| {
                            let mut seq = p.seq.clone();
                            seq.push(v);
                            Partial {
                                length: p.length + table.leg(u, v),
                                seq,
                            }
                        })
                    })
                    .collect();
                cands.sort_by(|a, b| cmp_partial(table, a, b));
                cands.truncate(k);
                cands
            })
            .collect();
        frontier = next;
    }
    let mut complete: Vec<Partial> = dag.pred[t]
        .iter()
        .flat_map(|&u| {
            frontier[u].iter().map(move |p| {
                let mut seq = p.seq.clone();
                seq.push(t);
                Partial {
                    length: p.length + table.leg(u, t),
                    seq,
                }
            })
        })
        .collect();
    if complete.is_empty() {
        return Err(Error::NoPathsWithStops(stops));
    }
    complete.sort_by(|a, b| cmp_partial(table, a, b));
    complete.truncate(k);
    Ok(complete
        .into_iter()
        .map(|p| PathCandidate {
            nodes: p.seq.iter().map(|&i| table.nodes[i].id.clone()).collect(),
            node_indices: p.seq,
            geo_length: p.length,
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct PathMetric {
    /// Metric on distinct projected stop tuples.
    pub metric: MetricMatrix,
    /// Groups of candidate indices sharing a projected tuple.
    pub merge: MergeReport,
    pub antipodes_present: bool,
    /// Antipodal node pairs, as table indices.
    pub antipodal_pairs: Vec<(usize, usize)>,
}

/// Distance between paths = ℓ^p combination of the spherical feature
/// distances at each stop position. Endpoints are shared and drop out.
pub fn path_feature_metric(paths: &[PathCandidate], table: &NodeTable, p_exponent: f64) -> Result<PathMetric> {
    if !(p_exponent > 1.0 && p_exponent.is_finite()) {
        return Err(Error::InvalidExponent(p_exponent));
    }
    let first = paths.first().ok_or(Error::EmptyInput)?;
    let len = first.node_indices.len();
    for path in paths {
        if path.node_indices.len() != len
            || path.node_indices[0] != first.node_indices[0]
            || path.node_indices[len - 1] != first.node_indices[len - 1]
        {
            return Err(Error::InvalidConfig(
                "paths must share source, target and number of stops".into(),
            ));
        }
    }
    // Spherical metric over the nodes that occur as stops.
    let mut used: Vec<usize> = paths.iter().flat_map(|p| p.stops().iter().copied()).collect();
    used.sort_unstable();
    used.dedup();
    let local: HashMap<usize, usize> = used.iter().enumerate().map(|(a, &i)| (i, a)).collect();
    let vectors: Vec<Vec<f64>> = used.iter().map(|&i| table.nodes[i].features.clone()).collect();
    let (node_d, antipodal_pairs) = if used.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let sph = spherical_node_distances(&vectors)?;
        let pairs = sph.1.iter().map(|&(a, b)| (used[a], used[b])).collect();
        (sph.0, pairs)
    };
    let tuples: Vec<Vec<usize>> = paths
        .iter()
        .map(|p| p.stops().iter().map(|i| local[i]).collect())
        .collect();
    let raw: Vec<Vec<f64>> = tuples
        .par_iter()
        .map(|a| {
            tuples
                .iter()
                .map(|b| {
                    let terms = a.iter().zip(b).map(|(&x, &y)| node_d[x][y]);
                    if p_exponent == 2.0 {
                        terms.map(|v| v * v).sum::<f64>().sqrt()
                    } else {
                        terms.map(|v| v.powf(p_exponent)).sum::<f64>().powf(p_exponent.recip())
                    }
                })
                .collect()
        })
        .collect();
    let (metric, _, merge) = validate_metric_merging(&raw, DEFAULT_TOL_TRI)?;
    Ok(PathMetric {
        metric,
        merge,
        antipodes_present: !antipodal_pairs.is_empty(),
        antipodal_pairs,
    })
}

/// Spherical distances that tolerate repeated feature vectors (which the
/// caller merges), plus antipodal pairs.
fn spherical_node_distances(vectors: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<(usize, usize)>)> {
    match spherical_distance_matrix(vectors, crate::metric::DEFAULT_ANTIPODE_TOL) {
        Ok(sph) => Ok((sph.metric.to_rows(), sph.antipodal_pairs)),
        Err(Error::DuplicatePoints(..)) => {
            // Collapse identical directions, then expand back.
            let units = crate::metric::normalize_rows(vectors)?;
            let mut reps: Vec<usize> = Vec::new();
            let mut assign = Vec::with_capacity(units.len());
            for (i, u) in units.iter().enumerate() {
                match reps.iter().position(|&r| crate::metric::unit_angle(&units[r], u) == 0.0) {
                    Some(g) => assign.push(g),
                    None => {
                        assign.push(reps.len());
                        reps.push(i);
                    }
                }
            }
            let rep_vectors: Vec<Vec<f64>> = reps.iter().map(|&r| units[r].clone()).collect();
            let sph = spherical_distance_matrix(&rep_vectors, crate::metric::DEFAULT_ANTIPODE_TOL)?;
            let rows = (0..units.len())
                .map(|a| (0..units.len()).map(|b| sph.metric.get(assign[a], assign[b])).collect())
                .collect();
            let mut pairs = Vec::new();
            for a in 0..units.len() {
                for b in a + 1..units.len() {
                    if sph.antipodal_pairs.contains(&(assign[a].min(assign[b]), assign[a].max(assign[b]))) {
                        pairs.push((a, b));
                    }
                }
            }
            Ok((rows, pairs))
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeelRow {
    /// Node ids of the representative path.
    pub nodes: Vec<String>,
    pub labels: Vec<String>,
    pub geo_length: f64,
    pub weight: f64,
    /// `weight / max weight`; the top row is exactly 1.
    pub relative_weighting: f64,
    /// Candidate indices (in length order) sharing this projected tuple.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPeel {
    pub rows: Vec<PeelRow>,
    pub layer: PeelLayer,
    pub classification: Option<NegativeTypeClass>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPeelOptions {
    /// Classify the path metric before peeling. When off, strict negative
    /// type is assumed.
    pub certify: bool,
    pub tol_eig: f64,
    pub peel: PeelOptions,
}

impl Default for PathPeelOptions {
    fn default() -> Self {
        Self {
            certify: true,
            tol_eig: DEFAULT_TOL_EIG,
            peel: PeelOptions::default(),
        }
    }
}

/// Peels the path metric and ranks the support by weight (ties by
/// candidate order).
pub fn peel_paths(
    metric: &PathMetric,
    paths: &[PathCandidate],
    table: &NodeTable,
    opts: &PathPeelOptions,
) -> Result<PathPeel> {
    let classification = if opts.certify && metric.metric.len() >= 2 {
        Some(classify_negative_type(&metric.metric, opts.tol_eig)?)
    } else {
        None
    };
    if let Some(c) = classification {
        if c.class == NegativeType::NotNegativeType {
            return Err(if metric.antipodes_present {
                Error::AntipodesPresent
            } else {
                Error::NotNegativeType {
                    min_eigenvalue: c.min_eigenvalue,
                }
            });
        }
    }
    let mut layer = scale_zero_argmax_diversity_with(&metric.metric, &opts.peel)?;
    if opts.certify && !classification.is_none_or(|c| c.is_strict()) {
        layer.heuristic = true;
        layer.ratio_bound = crate::peeling::diversity_ratio_bound(&metric.metric, &layer.p_star).ok();
    }
    let p = layer.p_star.as_slice();
    let mut order: Vec<usize> = layer.support.clone();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let top = order.first().map_or(1.0, |&g| p[g]);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); metric.metric.len()];
    for (i, &g) in metric.merge.assignment.iter().enumerate() {
        members[g].push(i);
    }
    let rows = order
        .iter()
        .map(|&g| {
            let rep = &paths[metric.merge.representatives[g]];
            PeelRow {
                nodes: rep.nodes.clone(),
                labels: rep.node_indices.iter().map(|&i| table.nodes[i].label.clone()).collect(),
                geo_length: rep.geo_length,
                weight: p[g],
                relative_weighting: if g == order[0] { 1.0 } else { p[g] / top },
                members: members[g].clone(),
            }
        })
        .collect();
    Ok(PathPeel {
        rows,
        layer,
        classification,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub source: String,
    pub target: String,
    pub stops: usize,
    pub k: usize,
    pub p_exponent: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    SYNTHETIC_SEED
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub dag: Dag,
    pub paths: Vec<PathCandidate>,
    pub metric: PathMetric,
    pub peel: PathPeel,
}

pub fn run_pipeline(table: &NodeTable, config: &PipelineConfig, opts: &PathPeelOptions) -> Result<PipelineRun> {
    let dag = build_directional_dag(table, &config.source, &config.target)?;
    let paths = k_shortest_fixed_stops(&dag, table, config.stops, config.k)?;
    let metric = path_feature_metric(&paths, table, config.p_exponent)?;
    let peel = peel_paths(&metric, &paths, table, opts)?;
    Ok(PipelineRun {
        dag,
        paths,
        metric,
        peel,
    })
}

pub const SYNTHETIC_SEED: u64 = 20_240_601;
pub const SYNTHETIC_NODES: usize = 80;
pub const SYNTHETIC_DIM: usize = 16;
pub const SYNTHETIC_CLUSTERS: usize = 5;

/// Seeded stand-in for a geolocated, embedded node set: `n` nodes in a
/// continental-US-like box, with unit feature vectors drawn around one of
/// five cluster directions. Node `east` sits at the east end and `west`
/// at the west end.
pub fn synthetic_dataset(seed: u64) -> NodeTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..SYNTHETIC_CLUSTERS)
        .map(|_| (0..SYNTHETIC_DIM).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let lon = Uniform::new(-122.0, -72.0).expect("valid range");
    let lat = Uniform::new(27.0, 48.0).expect("valid range");
    let cluster = Uniform::new(0, SYNTHETIC_CLUSTERS).expect("valid range");
    let mut nodes = Vec::with_capacity(SYNTHETIC_NODES);
    for i in 0..SYNTHETIC_NODES {
        let (id, label, x, y) = match i {
            0 => ("east".to_owned(), "East terminal".to_owned(), -71.0, 41.0),
            1 => ("west".to_owned(), "West terminal".to_owned(), -123.0, 35.0),
            _ => (
                format!("n{i:02}"),
                format!("Node {i:02}"),
                lon.sample(&mut rng),
                lat.sample(&mut rng),
            ),
        };
        let c = &centers[cluster.sample(&mut rng)];
        let raw: Vec<f64> = c
            .iter()
            .map(|&m| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                m + 0.45 * noise
            })
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        nodes.push(Node {
            id,
            label,
            lon: round6(x),
            lat: round6(y),
            features: raw.iter().map(|v| v / norm).collect(),
        });
    }
    NodeTable::new(nodes).expect("synthetic nodes are valid")
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub fn synthetic_config() -> PipelineConfig {
    PipelineConfig {
        source: "east".into(),
        target: "west".into(),
        stops: 2,
        k: 500,
        p_exponent: 2.0,
        seed: SYNTHETIC_SEED,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peeling::qp_oracle;

    fn node(id: &str, lon: f64, lat: f64, f: &[f64]) -> Node {
        Node {
            id: id.into(),
            label: id.to_uppercase(),
            lon,
            lat,
            features: f.to_vec(),
        }
    }

    fn brute_force(dag: &Dag, table: &NodeTable, stops: usize) -> Vec<PathCandidate> {
        fn walk(dag: &Dag, table: &NodeTable, left: usize, seq: &mut Vec<usize>, out: &mut Vec<PathCandidate>) {
            let last = *seq.last().unwrap();
            if left == 0 {
                if dag.has_arc(last, dag.target) {
                    seq.push(dag.target);
                    let geo_length = seq.windows(2).fold(0.0, |acc, w| acc + table.leg(w[0], w[1]));
                    out.push(PathCandidate {
                        nodes: seq.iter().map(|&i| table.nodes()[i].id.clone()).collect(),
                        node_indices: seq.clone(),
                        geo_length,
                    });
                    seq.pop();
                }
                return;
            }
            for &b in &dag.succ[last] {
                if b != dag.target {
                    seq.push(b);
                    walk(dag, table, left - 1, seq, out);
                    seq.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(dag, table, stops, &mut vec![dag.source], &mut out);
        out.sort_by(|a, b| a.geo_length.total_cmp(&b.geo_length).then_with(|| a.nodes.cmp(&b.nodes)));
        out
    }

    #[test]
    fn collinear_nodes_get_all_forward_arcs() {
        let t = NodeTable::new(vec![
            node("a", 0.0, 0.0, &[1.0]),
            node("b", 1.0, 0.0, &[1.0]),
            node("c", 2.0, 0.0, &[1.0]),
        ])
        .unwrap();
        let dag = build_directional_dag(&t, "a", "c").unwrap();
        assert_eq!(dag.arc_count(), 3);
        assert!(dag.has_arc(0, 1) && dag.has_arc(1, 2) && dag.has_arc(0, 2));
    }

    #[test]
    fn node_behind_source_is_dropped() {
        let t = NodeTable::new(vec![
            node("s", 0.0, 0.0, &[1.0]),
            node("back", -1.0, 0.5, &[1.0]),
            node("mid", 1.0, 0.2, &[1.0]),
            node("t", 2.0, 0.0, &[1.0]),
        ])
        .unwrap();
        let dag = build_directional_dag(&t, "s", "t").unwrap();
        assert_eq!(dag.nodes, vec![0, 2, 3]);
        assert!(dag.succ[1].is_empty() && dag.pred[1].is_empty());
    }

    #[test]
    fn orthogonal_pair_has_no_arc() {
        let t = NodeTable::new(vec![
            node("s", 0.0, 0.0, &[1.0]),
            node("u", 1.0, 1.0, &[1.0]),
            node("v", 1.0, -1.0, &[1.0]),
            node("t", 2.0, 0.0, &[1.0]),
        ])
        .unwrap();
        let dag = build_directional_dag(&t, "s", "t").unwrap();
        assert!(!dag.has_arc(1, 2) && !dag.has_arc(2, 1));
    }

    #[test]
    fn dag_errors() {
        let t = NodeTable::new(vec![node("s", 0.0, 0.0, &[1.0]), node("t", 0.0, 0.0, &[1.0])]).unwrap();
        assert!(matches!(build_directional_dag(&t, "s", "s"), Err(Error::SourceTargetCoincide(_))));
        assert!(matches!(build_directional_dag(&t, "s", "x"), Err(Error::UnknownNode(_))));
        assert!(matches!(
            build_directional_dag(&t, "s", "t"),
            Err(Error::DisconnectedSourceTarget { .. })
        ));
        let dup = NodeTable::new(vec![node("s", 0.0, 0.0, &[1.0]), node("s", 1.0, 0.0, &[1.0])]);
        assert!(matches!(dup, Err(Error::DuplicateNode(_))));
        let zero = NodeTable::new(vec![node("s", 0.0, 0.0, &[0.0, 0.0])]);
        assert!(matches!(zero, Err(Error::ZeroVector(0))));
    }

    #[test]
    fn forward_complete_dag_has_one_two_stop_path() {
        let t = NodeTable::new(vec![
            node("s", 0.0, 0.0, &[1.0]),
            node("x", 1.0, 0.3, &[1.0]),
            node("y", 2.0, -0.3, &[1.0]),
            node("t", 3.0, 0.0, &[1.0]),
        ])
        .unwrap();
        let dag = build_directional_dag(&t, "s", "t").unwrap();
        let paths = k_shortest_fixed_stops(&dag, &t, 2, usize::MAX).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].nodes, vec!["s", "x", "y", "t"]);
        let direct = k_shortest_fixed_stops(&dag, &t, 0, 10).unwrap();
        assert_eq!(direct[0].nodes, vec!["s", "t"]);
        assert!(matches!(k_shortest_fixed_stops(&dag, &t, 3, 10), Err(Error::NoPathsWithStops(3))));
        assert_eq!(k_shortest_fixed_stops(&dag, &t, 1, 100).unwrap().len(), 2);
    }

    #[test]
    fn k_best_matches_brute_force_on_synthetic_data() {
        let table = synthetic_dataset(7);
        let dag = build_directional_dag(&table, "east", "west").unwrap();
        for stops in [1, 2, 3] {
            let all = brute_force(&dag, &table, stops);
            for k in [1, 17, 500] {
                let got = k_shortest_fixed_stops(&dag, &table, stops, k).unwrap();
                let want = &all[..k.min(all.len())];
                assert_eq!(got.len(), want.len());
                for (g, w) in got.iter().zip(want) {
                    assert_eq!(g.nodes, w.nodes);
                    assert_eq!(g.geo_length.to_bits(), w.geo_length.to_bits());
                }
            }
        }
    }

    fn small_paths() -> (NodeTable, Vec<PathCandidate>) {
        let table = NodeTable::new(vec![
            node("s", 0.0, 0.0, &[1.0, 0.0, 0.0]),
            node("a", 1.0, 0.1, &[1.0, 0.0, 0.0]),
            node("b", 1.0, -0.1, &[0.0, 1.0, 0.0]),
            node("c", 2.0, 0.1, &[0.0, 0.0, 1.0]),
            node("d", 2.0, -0.1, &[1.0, 0.0, 1.0]),
            node("t", 3.0, 0.0, &[1.0, 0.0, 0.0]),
        ])
        .unwrap();
        let dag = build_directional_dag(&table, "s", "t").unwrap();
        let paths = k_shortest_fixed_stops(&dag, &table, 2, 100).unwrap();
        (table, paths)
    }

    #[test]
    fn path_distances() {
        let (table, paths) = small_paths();
        assert_eq!(paths.len(), 4);
        let m = path_feature_metric(&paths, &table, 2.0).unwrap();
        let find = |a: &str, b: &str| {
            paths.iter().position(|p| p.nodes[1] == a && p.nodes[2] == b).unwrap()
        };
        let row = |i: usize| m.merge.assignment[i];
        let (half_pi, quarter_pi) = (std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_4);
        // One stop differs: distance is that stop's angle, for any p.
        let (ac, bd) = (row(find("a", "c")), row(find("b", "d")));
        assert!((m.metric.get(ac, row(find("b", "c"))) - half_pi).abs() < 1e-15);
        assert!((m.metric.get(ac, row(find("a", "d"))) - quarter_pi).abs() < 1e-15);
        // Both differ: √(d_a² + d_b²) at p = 2.
        let expect = (half_pi * half_pi + quarter_pi * quarter_pi).sqrt();
        assert!((m.metric.get(ac, bd) - expect).abs() < 1e-15);
        let m3 = path_feature_metric(&paths, &table, 3.0).unwrap();
        let row3 = |i: usize| m3.merge.assignment[i];
        let expect3 = (half_pi.powi(3) + quarter_pi.powi(3)).cbrt();
        assert!((m3.metric.get(row3(find("b", "c")), row3(find("a", "d"))) - expect3).abs() < 1e-14);
        assert!((m3.metric.get(row3(find("a", "c")), row3(find("a", "d"))) - quarter_pi).abs() < 1e-15);
        assert!(matches!(path_feature_metric(&paths, &table, 1.0), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn identical_projections_merge() {
        let table = NodeTable::new(vec![
            node("s", 0.0, 0.0, &[1.0, 0.0]),
            node("a", 1.0, 0.1, &[1.0, 1.0]),
            node("a2", 1.0, -0.1, &[2.0, 2.0]),
            node("c", 2.0, 0.0, &[0.0, 1.0]),
            node("t", 3.0, 0.0, &[1.0, 0.0]),
        ])
        .unwrap();
        let dag = build_directional_dag(&table, "s", "t").unwrap();
        let paths = k_shortest_fixed_stops(&dag, &table, 2, 100).unwrap();
        assert_eq!(paths.len(), 2);
        let m = path_feature_metric(&paths, &table, 2.0).unwrap();
        assert_eq!(m.metric.len(), 1);
        assert_eq!(m.merge.multiplicities, vec![2]);
        let peel = peel_paths(&m, &paths, &table, &PathPeelOptions::default()).unwrap();
        assert_eq!(peel.rows.len(), 1);
        assert_eq!(peel.rows[0].weight, 1.0);
        assert_eq!(peel.rows[0].members, vec![0, 1]);
    }

    #[test]
    fn merging_preserves_aggregated_weights() {
        // Give two first stops that share a second stop identical feature
        // vectors, so their paths project to the same tuple.
        let base = synthetic_dataset(11);
        let dag = build_directional_dag(&base, "east", "west").unwrap();
        let paths = k_shortest_fixed_stops(&dag, &base, 2, 150).unwrap();
        let (x, y) = paths
            .iter()
            .enumerate()
            .find_map(|(i, a)| {
                paths[i + 1..]
                    .iter()
                    .find(|b| b.stops()[1] == a.stops()[1] && b.stops()[0] != a.stops()[0])
                    .map(|b| (a.stops()[0], b.stops()[0]))
            })
            .unwrap();
        let mut nodes = base.nodes().to_vec();
        nodes[y].features = nodes[x].features.clone();
        let table = NodeTable::new(nodes).unwrap();
        let paths = k_shortest_fixed_stops(&dag, &table, 2, 150).unwrap();
        let m = path_feature_metric(&paths, &table, 2.0).unwrap();
        assert!(m.merge.multiplicities.iter().any(|&c| c > 1));
        let peel = peel_paths(&m, &paths, &table, &PathPeelOptions::default()).unwrap();
        // Unmerged metric: duplicate rows, so only the QP oracle applies.
        let raw: Vec<Vec<f64>> = (0..paths.len())
            .map(|i| {
                (0..paths.len())
                    .map(|j| m.metric.get(m.merge.assignment[i], m.merge.assignment[j]))
                    .collect()
            })
            .collect();
        let unmerged = crate::metric::MetricMatrix::from_trusted_allowing_duplicates(raw);
        let qp = qp_oracle(&unmerged, 1e-12, 200_000).unwrap();
        let mut aggregated = vec![0.0; m.metric.len()];
        for (i, &g) in m.merge.assignment.iter().enumerate() {
            aggregated[g] += qp.p[i];
        }
        for (g, agg) in aggregated.iter().enumerate() {
            assert!((agg - peel.layer.p_star.as_slice()[g]).abs() < 1e-8, "{g}: {agg}");
        }
    }

    #[test]
    fn feature_isolated_stop_enters_the_peel() {
        let config = PipelineConfig {
            k: 200,
            ..synthetic_config()
        };
        let base = synthetic_dataset(5);
        let dag = build_directional_dag(&base, "east", "west").unwrap();
        let paths = k_shortest_fixed_stops(&dag, &base, 2, config.k).unwrap();
        let odd = paths[paths.len() / 2].stops()[0];
        let mut nodes = base.nodes().to_vec();
        let mut f = vec![0.0; SYNTHETIC_DIM];
        f[0] = -1.0;
        f[SYNTHETIC_DIM - 1] = 1.0;
        nodes[odd].features = f;
        let table = NodeTable::new(nodes).unwrap();
        let run = run_pipeline(&table, &config, &PathPeelOptions::default()).unwrap();
        let through_odd: Vec<usize> =
            (0..run.paths.len()).filter(|&i| run.paths[i].stops().contains(&odd)).collect();
        assert!(!through_odd.is_empty());
        assert!(run
            .peel
            .rows
            .iter()
            .any(|r| r.members.iter().any(|m| through_odd.contains(m))));
        // Cross-check the support with the independent oracle.
        let qp = qp_oracle(&run.metric.metric, 1e-10, 200_000).unwrap();
        for (g, &w) in run.peel.layer.p_star.as_slice().iter().enumerate() {
            assert!((w - qp.p[g]).abs() < 1e-6);
        }
    }

    #[test]
    fn synthetic_pipeline_is_strict_and_normalized() {
        let table = synthetic_dataset(SYNTHETIC_SEED);
        assert_eq!(table.len(), SYNTHETIC_NODES);
        let run = run_pipeline(&table, &synthetic_config(), &PathPeelOptions::default()).unwrap();
        assert_eq!(run.paths.len(), 500);
        assert!(run.peel.classification.unwrap().is_strict());
        assert_eq!(run.peel.rows[0].relative_weighting, 1.0);
        assert!(run.peel.rows.windows(2).all(|w| w[0].weight >= w[1].weight));
        assert!(run.peel.layer.kkt_ok);
    }
}
