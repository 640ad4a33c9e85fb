//! The deterministic directed graph `𝒢` on principal-submatrix index sets:
//! construction, terminal classification, the dyadic threshold ladder,
//! enumeration of descent data structures, and the single-step
//! deconstruction witness check.
//!
//! Vertices are canonical (sorted, deduplicated) index subsets `J ⊆ [n]`. A
//! non-terminal vertex splits its columns into sparse (`J'`) and dense
//! (`J''`) by the `L²` rule on `V_J`; every dense column `j` contributes a
//! labeled edge to `J ∖ (U_j ∪ {j})` where `U_j` is the support of column `j`
//! in the thresholded profile, and a non-empty `J'` contributes one unlabeled
//! edge. The edge structure depends only on the profile pattern and the
//! parameters, never on a realization of `W`.

use std::collections::HashMap;

use num_complex::Complex64;
use serde_json::json;
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::profile::{ProfileError, ThresholdedProfile, VarianceProfile};
use crate::sampler::SpectralSample;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("kappa must lie in (0, 1], got {0}")]
    BadKappa(f64),
    #[error("dimension mismatch: profile has n = {profile_n}, params have n = {params_n}")]
    DimensionMismatch { profile_n: usize, params_n: usize },
    #[error("construction assumes sigma* <= |z| (got sigma* = {sigma_star}, |z| = {z_abs}); use a raw override to bypass")]
    ShiftBelowSigmaStar { sigma_star: f64, z_abs: f64 },
    #[error("shift must be non-zero")]
    ZeroShift,
    #[error("parameter must be positive: {0}")]
    NonPositiveParam(&'static str),
    #[error("n must be at least {min}, got {got}")]
    TooSmall { min: usize, got: usize },
    #[error("longest source-terminal path {found} exceeds the bound {bound}; the construction's regime assumptions fail here")]
    PathLengthExceeded { found: usize, bound: usize },
    #[error("graph is truncated (vertex cap {cap} hit); probabilistic conclusions are invalid on partial graphs")]
    Truncated { cap: usize },
    #[error("r0 = {0} outside {{-1..n}}")]
    BadR0(i64),
    #[error("q = {0} outside {{0..n}}")]
    BadQ(i64),
    #[error("structure count exceeds u128 range")]
    CountOverflow,
    #[error("vertex {0} is a terminal; the deconstruction step applies to non-terminals only")]
    TerminalVertex(usize),
    #[error("unknown vertex id {0}")]
    UnknownVertex(usize),
    #[error("precondition s_min <= t_q |z| fails: s_min = {smin}, t_q |z| = {threshold}")]
    SminPrecondition { smin: f64, threshold: f64 },
    #[error("sample shift {sample_z} does not match graph shift {graph_z}")]
    ShiftMismatch { sample_z: Complex64, graph_z: Complex64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Parameters of the construction. Without a raw override they are tied to
/// the shift by `δ = |z|/n`, `L = n^{−κ}|z|`, `β = n^{−3}`.
#[derive(Debug, Clone, Copy)]
pub struct GraphParams {
    pub n: usize,
    pub z: Complex64,
    pub kappa: f64,
    pub delta: f64,
    pub ell: f64,
    pub beta: f64,
    pub raw: bool,
}

impl GraphParams {
    pub fn from_shift(n: usize, z: Complex64, kappa: f64) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::TooSmall { min: 1, got: 0 });
        }
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(GraphError::BadKappa(kappa));
        }
        if z.norm() == 0.0 {
            return Err(GraphError::ZeroShift);
        }
        let nf = n as f64;
        Ok(Self {
            n,
            z,
            kappa,
            delta: z.norm() / nf,
            ell: nf.powf(-kappa) * z.norm(),
            beta: nf.powi(-3),
            raw: false,
        })
    }

    /// Fixes `δ` and `L` directly, without a shift. Used to reproduce the
    /// worked graph examples where `L² = 2` is set by hand.
    pub fn raw_override(n: usize, delta: f64, ell: f64) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::TooSmall { min: 1, got: 0 });
        }
        if !(delta >= 0.0) {
            return Err(GraphError::NonPositiveParam("delta"));
        }
        if !(ell > 0.0) {
            return Err(GraphError::NonPositiveParam("L"));
        }
        Ok(Self {
            n,
            z: Complex64::new(0.0, 0.0),
            kappa: 0.0,
            delta,
            ell,
            beta: (n as f64).powi(-3),
            raw: true,
        })
    }

    pub fn z_abs(&self) -> f64 {
        self.z.norm()
    }
}

pub type VertexId = usize;

/// One vertex: a canonical index subset together with its column
/// classification under the `L²` rule.
#[derive(Debug, Clone)]
pub struct Vertex {
    pub subset: Vec<usize>,
    /// `J'`: columns with `Σ_{i∈J} (V_J)²_{i,j} ≤ L²`.
    pub sparse_cols: Vec<usize>,
    /// `J''`: the complement of `J'` in `J`.
    pub dense_cols: Vec<usize>,
    pub is_terminal: bool,
}

impl Vertex {
    pub fn is_empty(&self) -> bool {
        self.subset.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    /// Column label for dense-column edges; `None` for the unlabeled edge to
    /// `J'`.
    pub label: Option<usize>,
}

pub const DEFAULT_VERTEX_CAP: usize = 100_000;

/// The built graph. Immutable and shareable; all randomness lives in the
/// samples evaluated against it.
#[derive(Debug)]
pub struct SubmatrixGraph {
    params: GraphParams,
    sigma_star: f64,
    vtilde: ThresholdedProfile,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<usize>>,
    truncated: bool,
    vertex_cap: usize,
    max_path_length: usize,
}

impl SubmatrixGraph {
    pub fn params(&self) -> &GraphParams {
        &self.params
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn source(&self) -> VertexId {
        0
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn vertex_cap(&self) -> usize {
        self.vertex_cap
    }

    pub fn out_edges(&self, v: VertexId) -> impl Iterator<Item = &Edge> {
        self.out_edges[v].iter().map(|&e| &self.edges[e])
    }

    pub fn out_edge_indices(&self, v: VertexId) -> &[usize] {
        &self.out_edges[v]
    }

    pub fn vertex_by_subset(&self, subset: &[usize]) -> Option<VertexId> {
        self.vertices.iter().position(|v| v.subset == subset)
    }

    pub fn terminal_ids(&self) -> Vec<VertexId> {
        (0..self.vertices.len())
            .filter(|&v| self.vertices[v].is_terminal)
            .collect()
    }

    pub fn empty_terminal(&self) -> Option<VertexId> {
        (0..self.vertices.len()).find(|&v| self.vertices[v].is_empty())
    }

    pub fn non_empty_terminals(&self) -> Vec<VertexId> {
        (0..self.vertices.len())
            .filter(|&v| self.vertices[v].is_terminal && !self.vertices[v].is_empty())
            .collect()
    }

    /// `U_j` for a vertex: the support of column `j` of the thresholded
    /// profile restricted to the vertex subset.
    pub fn u_set(&self, v: VertexId, j: usize) -> Vec<usize> {
        self.vertices[v]
            .subset
            .iter()
            .copied()
            .filter(|&i| self.vtilde.get(i, j) != 0.0)
            .collect()
    }

    /// Path-length bound `⌈2n(σ*)²/L²⌉` for source-terminal paths.
    pub fn path_length_bound(&self) -> usize {
        path_bound(self.params.n, self.sigma_star, self.params.ell)
    }

    pub fn max_path_length(&self) -> usize {
        self.max_path_length
    }

    pub fn sigma_star(&self) -> f64 {
        self.sigma_star
    }

    /// Re-checks the structural invariants: in-degrees, proper-subset edges,
    /// terminal column rule, the path-length bound, and the dense-column
    /// support bound `|U_j| > L²/(2(σ*)²)` on labeled edges.
    pub fn validate(&self) -> Result<(), String> {
        let mut indeg = vec![0usize; self.vertices.len()];
        for e in &self.edges {
            let from = &self.vertices[e.from].subset;
            let to = &self.vertices[e.to].subset;
            if to.len() >= from.len() || !to.iter().all(|i| from.contains(i)) {
                return Err(format!("edge {e:?} target is not a proper subset"));
            }
            indeg[e.to] += 1;
        }
        if indeg[0] != 0 {
            return Err("source has an in-edge".into());
        }
        for (v, &d) in indeg.iter().enumerate().skip(1) {
            if d == 0 {
                return Err(format!("vertex {v} unreachable"));
            }
        }
        let l_sq = self.params.ell * self.params.ell;
        for v in self.non_empty_terminals() {
            let subset = &self.vertices[v].subset;
            for &j in subset {
                let c = self.vtilde.base().column_sq_norm_on(subset, j);
                if c > l_sq {
                    return Err(format!("terminal {v} violates the column rule at {j}"));
                }
            }
        }
        if self.sigma_star > 0.0 {
            let support_bound = l_sq / (2.0 * self.sigma_star * self.sigma_star);
            for e in &self.edges {
                if let Some(j) = e.label {
                    let u = self.u_set(e.from, j);
                    if !(u.len() as f64 > support_bound) {
                        return Err(format!(
                            "labeled edge {e:?} has |U_j| = {} <= L^2/(2 sigma*^2) = {support_bound}",
                            u.len()
                        ));
                    }
                }
            }
        }
        if !self.truncated && self.max_path_length > self.path_length_bound() {
            return Err("path length bound violated".into());
        }
        Ok(())
    }

    /// DOT export; vertices carry 1-based subsets, edges carry the 1-based
    /// column label or `ε`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph submatrix_graph {\n  rankdir=LR;\n");
        for (id, v) in self.vertices.iter().enumerate() {
            let label = subset_label(&v.subset);
            let shape = if v.is_terminal { ", peripheries=2" } else { "" };
            out.push_str(&format!("  v{id} [label=\"{label}\"{shape}];\n"));
        }
        for e in &self.edges {
            let label = match e.label {
                Some(j) => format!("{}", j + 1),
                None => "ε".to_string(),
            };
            out.push_str(&format!("  v{} -> v{} [label=\"{label}\"];\n", e.from, e.to));
        }
        out.push_str("}\n");
        out
    }

    /// JSON export with 1-based subsets and labels.
    pub fn to_json(&self) -> serde_json::Value {
        let vertices: Vec<_> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(id, v)| {
                json!({
                    "id": id,
                    "subset": one_based(&v.subset),
                    "terminal": v.is_terminal,
                })
            })
            .collect();
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                json!({
                    "from": e.from,
                    "to": e.to,
                    "label": e.label.map(|j| j + 1),
                })
            })
            .collect();
        let non_empty: Vec<_> = self
            .non_empty_terminals()
            .into_iter()
            .map(|v| one_based(&self.vertices[v].subset))
            .collect();
        json!({
            "n": self.params.n,
            "delta": self.params.delta,
            "lSq": self.params.ell * self.params.ell,
            "truncated": self.truncated,
            "vertices": vertices,
            "edges": edges,
            "terminals": {
                "empty": self.empty_terminal().is_some(),
                "nonEmpty": non_empty,
            },
        })
    }
}

fn one_based(subset: &[usize]) -> Vec<usize> {
    subset.iter().map(|&i| i + 1).collect()
}

fn subset_label(subset: &[usize]) -> String {
    if subset.is_empty() {
        return "∅".to_string();
    }
    let inner: Vec<String> = subset.iter().map(|&i| format!("{}", i + 1)).collect();
    format!("{{{}}}", inner.join(","))
}

fn path_bound(n: usize, sigma_star: f64, ell: f64) -> usize {
    (2.0 * n as f64 * sigma_star * sigma_star / (ell * ell)).ceil() as usize
}

/// Breadth-first construction from the source `[n]`, with hash-consed
/// vertex deduplication. A vertex count beyond `cap` returns the partial
/// graph with the truncation flag set.
pub fn build_graph(
    profile: &VarianceProfile,
    params: &GraphParams,
    cap: usize,
) -> Result<SubmatrixGraph, GraphError> {
    if profile.n() != params.n {
        return Err(GraphError::DimensionMismatch {
            profile_n: profile.n(),
            params_n: params.n,
        });
    }
    let stats = profile.stats();
    if !params.raw && stats.sigma_star > params.z_abs() {
        return Err(GraphError::ShiftBelowSigmaStar {
            sigma_star: stats.sigma_star,
            z_abs: params.z_abs(),
        });
    }
    let vtilde = profile.threshold(params.delta)?;
    let l_sq = params.ell * params.ell;
    let n = params.n;

    let classify = |subset: &[usize]| -> Vertex {
        let mut sparse = Vec::new();
        let mut dense = Vec::new();
        for &j in subset {
            if profile.column_sq_norm_on(subset, j) <= l_sq {
                sparse.push(j);
            } else {
                dense.push(j);
            }
        }
        let is_terminal = dense.is_empty();
        Vertex {
            subset: subset.to_vec(),
            sparse_cols: sparse,
            dense_cols: dense,
            is_terminal,
        }
    };

    let mut vertices: Vec<Vertex> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut out_edges: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<Vec<usize>, VertexId> = HashMap::new();
    let mut truncated = false;

    let source: Vec<usize> = (0..n).collect();
    vertices.push(classify(&source));
    out_edges.push(Vec::new());
    index.insert(source, 0);

    let mut queue: std::collections::VecDeque<VertexId> = std::collections::VecDeque::new();
    queue.push_back(0);

    'bfs: while let Some(vid) = queue.pop_front() {
        if vertices[vid].is_terminal {
            continue;
        }
        let subset = vertices[vid].subset.clone();
        let dense = vertices[vid].dense_cols.clone();
        let sparse = vertices[vid].sparse_cols.clone();
        for &j in &dense {
            let target: Vec<usize> = subset
                .iter()
                .copied()
                .filter(|&i| i != j && vtilde.get(i, j) == 0.0)
                .collect();
            let to = match index.get(&target) {
                Some(&id) => id,
                None => {
                    if vertices.len() >= cap {
                        truncated = true;
                        break 'bfs;
                    }
                    let id = vertices.len();
                    vertices.push(classify(&target));
                    out_edges.push(Vec::new());
                    index.insert(target, id);
                    queue.push_back(id);
                    id
                }
            };
            edges.push(Edge {
                from: vid,
                to,
                label: Some(j),
            });
            out_edges[vid].push(edges.len() - 1);
        }
        if !sparse.is_empty() {
            let target = sparse.clone();
            let to = match index.get(&target) {
                Some(&id) => id,
                None => {
                    if vertices.len() >= cap {
                        truncated = true;
                        break 'bfs;
                    }
                    let id = vertices.len();
                    vertices.push(classify(&target));
                    out_edges.push(Vec::new());
                    index.insert(target, id);
                    queue.push_back(id);
                    id
                }
            };
            // the unlabeled edge is only drawn if no edge to J' exists yet
            let already = out_edges[vid].iter().any(|&e| edges[e].to == to);
            if !already {
                edges.push(Edge {
                    from: vid,
                    to,
                    label: None,
                });
                out_edges[vid].push(edges.len() - 1);
            }
        }
    }

    // longest source-terminal path via the dimension ordering (every edge
    // strictly shrinks the subset, so this order is topological)
    let mut order: Vec<VertexId> = (0..vertices.len()).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(vertices[v].subset.len()));
    let mut dist = vec![0usize; vertices.len()];
    let mut max_path_length = 0usize;
    for &v in &order {
        if vertices[v].is_terminal {
            max_path_length = max_path_length.max(dist[v]);
        }
        for &e in &out_edges[v] {
            let to = edges[e].to;
            dist[to] = dist[to].max(dist[v] + 1);
        }
    }

    let graph = SubmatrixGraph {
        params: *params,
        sigma_star: stats.sigma_star,
        vtilde,
        vertices,
        edges,
        out_edges,
        truncated,
        vertex_cap: cap,
        max_path_length,
    };
    if !graph.truncated {
        let bound = graph.path_length_bound();
        if graph.max_path_length > bound {
            return Err(GraphError::PathLengthExceeded {
                found: graph.max_path_length,
                bound,
            });
        }
    }
    Ok(graph)
}

/// Dyadic thresholds `t_p = 2^{−p}` with the sentinel `t_{−1} = +∞`, and the
/// two cutoffs `p₀` (largest `p ∈ {0..n}` with `t_p ≥ β·n²`) and `p̃₀`
/// (smallest `p ∈ {0..n}` with `t_p ≤ β/(32n³)`). When no index in `{0..n}`
/// satisfies the defining inequality the value clamps to the nearest end of
/// the range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicLadder {
    pub n: usize,
    pub p0: i64,
    pub p0_tilde: i64,
}

/// `t_p`; negative `p` returns the `+∞` sentinel.
pub fn t(p: i64) -> f64 {
    if p < 0 {
        f64::INFINITY
    } else if p > 1100 {
        0.0
    } else {
        2.0f64.powi(-(p as i32))
    }
}

pub fn dyadic_ladder(n: usize, params: &GraphParams) -> Result<DyadicLadder, GraphError> {
    if n < 2 {
        return Err(GraphError::TooSmall { min: 2, got: n });
    }
    let beta = params.beta;
    let nf = n as f64;
    let low = beta * nf * nf;
    let mut p0 = 0i64;
    for p in (0..=n as i64).rev() {
        if t(p) >= low {
            p0 = p;
            break;
        }
    }
    let high = beta / (32.0 * nf.powi(3));
    let mut p0_tilde = n as i64;
    for p in 0..=n as i64 {
        if t(p) <= high {
            p0_tilde = p;
            break;
        }
    }
    Ok(DyadicLadder { n, p0, p0_tilde })
}

/// A source-to-terminal path paired with its integer sequence `r₀..r_d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataStructure {
    pub path: Vec<VertexId>,
    pub r_sequence: Vec<i64>,
}

#[derive(Debug)]
pub struct StructureEnumeration {
    pub path_count: u64,
    /// Exact number of data structures with `r₀` fixed.
    pub count: u128,
    /// The counting bound `(n(n+2))^{⌈2n(σ*)²/L²⌉}`.
    pub count_bound: f64,
    /// Present only when `count ≤ cap`.
    pub structures: Option<Vec<DataStructure>>,
}

pub const DEFAULT_STRUCTURE_CAP: usize = 1_000_000;

/// Exhaustively enumerates source-to-terminal paths crossed with
/// `r`-assignments (`r₀` fixed, the rest free over `{−1..n}`). Beyond `cap`
/// only counts are produced.
pub fn enumerate_structures(
    graph: &SubmatrixGraph,
    r0: i64,
    cap: usize,
) -> Result<StructureEnumeration, GraphError> {
    if graph.truncated() {
        return Err(GraphError::Truncated {
            cap: graph.vertex_cap(),
        });
    }
    let n = graph.params().n as i64;
    if r0 < -1 || r0 > n {
        return Err(GraphError::BadR0(r0));
    }
    // parallel labeled edges share a vertex sequence; paths are vertex
    // sequences, so deduplicate out-neighbors
    let neighbor_sets: Vec<Vec<VertexId>> = (0..graph.vertices().len())
        .map(|v| {
            let mut targets: Vec<VertexId> = graph.out_edges(v).map(|e| e.to).collect();
            targets.sort_unstable();
            targets.dedup();
            targets
        })
        .collect();

    let mut paths: Vec<Vec<VertexId>> = Vec::new();
    let mut stack: Vec<VertexId> = vec![graph.source()];
    collect_paths(graph, &neighbor_sets, &mut stack, &mut paths);

    let choices = (n + 2) as u128;
    let mut count: u128 = 0;
    for p in &paths {
        let d = (p.len() - 1) as u32;
        let combos = choices.checked_pow(d).ok_or(GraphError::CountOverflow)?;
        count = count.checked_add(combos).ok_or(GraphError::CountOverflow)?;
    }

    let nf = graph.params().n as f64;
    let count_bound = (nf * (nf + 2.0)).powf(graph.path_length_bound() as f64);

    let structures = if count <= cap as u128 {
        let mut all = Vec::with_capacity(count as usize);
        for p in &paths {
            let d = p.len() - 1;
            let mut rs = vec![-1i64; d];
            loop {
                let mut r_sequence = Vec::with_capacity(d + 1);
                r_sequence.push(r0);
                r_sequence.extend_from_slice(&rs);
                all.push(DataStructure {
                    path: p.clone(),
                    r_sequence,
                });
                // mixed-radix increment over {-1..n}^d
                let mut pos = d as i64 - 1;
                while pos >= 0 && rs[pos as usize] == n {
                    rs[pos as usize] = -1;
                    pos -= 1;
                }
                if pos < 0 {
                    break;
                }
                rs[pos as usize] += 1;
            }
        }
        Some(all)
    } else {
        None
    };

    Ok(StructureEnumeration {
        path_count: paths.len() as u64,
        count,
        count_bound,
        structures,
    })
}

fn collect_paths(
    graph: &SubmatrixGraph,
    neighbors: &[Vec<VertexId>],
    stack: &mut Vec<VertexId>,
    paths: &mut Vec<Vec<VertexId>>,
) {
    let v = *stack.last().unwrap();
    if graph.vertex(v).is_terminal {
        paths.push(stack.clone());
        return;
    }
    for &to in &neighbors[v] {
        stack.push(to);
        collect_paths(graph, neighbors, stack, paths);
        stack.pop();
    }
}

/// Per-edge record of the deconstruction search.
#[derive(Debug, Clone)]
pub struct EdgeCheck {
    pub edge_index: usize,
    pub label: Option<usize>,
    /// `s_min` of the out-neighbor (`+∞` for the empty matrix).
    pub target_smin: f64,
    /// For labeled edges, the `r` used in the comparison; for the unlabeled
    /// edge, `p₀`.
    pub r: i64,
    pub pairing_ratio: Option<f64>,
    pub threshold: f64,
    pub zero_denominator: bool,
    pub satisfied: bool,
}

#[derive(Debug, Clone)]
pub enum WitnessOutcome {
    /// Case (i): labeled edge `j` with some `r` so that the out-neighbor is
    /// `t_r`-small and the normalized pairing is below `t_{max(q−r−p̃₀,−1)}`.
    LabeledEdge {
        edge_index: usize,
        label: usize,
        r: i64,
        vacuous: bool,
    },
    /// Case (ii): unlabeled edge to a non-empty terminal with
    /// `s_min < t_{p₀}·|z|`.
    TerminalEdge { edge_index: usize },
}

#[derive(Debug)]
pub struct WitnessReport {
    pub vertex: VertexId,
    pub q: i64,
    pub smin_vertex: f64,
    /// `None` means violation: no out-edge satisfies either branch. Expected
    /// only off the good events.
    pub outcome: Option<WitnessOutcome>,
    pub checks: Vec<EdgeCheck>,
}

impl WitnessReport {
    pub fn is_violation(&self) -> bool {
        self.outcome.is_none()
    }
}

/// `s_min(A_J − z·Id)` with the `s_min([]) = +∞` convention for the empty
/// subset.
pub fn smin_of_subset(sample: &SpectralSample, subset: &[usize]) -> Result<f64, LinalgError> {
    if subset.is_empty() {
        return Ok(f64::INFINITY);
    }
    let m = sample.shifted_principal_submatrix(subset);
    Ok(*linalg::singular_values(&m)?.last().unwrap())
}

fn largest_r_for(smin: f64, z_abs: f64, n: i64) -> i64 {
    if smin.is_infinite() {
        return -1;
    }
    if smin <= 0.0 {
        return n;
    }
    let mut r = (-(smin / z_abs).log2()).floor() as i64;
    r = r.clamp(-1, n);
    while r > -1 && smin > t(r) * z_abs {
        r -= 1;
    }
    while r < n && smin <= t(r + 1) * z_abs {
        r += 1;
    }
    r
}

/// Runs the single-step deconstruction search at a non-terminal vertex with
/// `s_min(A_J − z·Id) ≤ t_q·|z|`: scans the out-edges for a case-(i) labeled
/// witness or the case-(ii) terminal witness, returning the first found or a
/// violation record. A vanishing pairing denominator is reported as a
/// distinct outcome on the edge record, never a crash.
pub fn deconstruction_witness(
    sample: &SpectralSample,
    graph: &SubmatrixGraph,
    vertex: VertexId,
    q: i64,
    ladder: &DyadicLadder,
) -> Result<WitnessReport, GraphError> {
    if vertex >= graph.vertices().len() {
        return Err(GraphError::UnknownVertex(vertex));
    }
    if graph.vertex(vertex).is_terminal {
        return Err(GraphError::TerminalVertex(vertex));
    }
    let n = graph.params().n as i64;
    if q < 0 || q > n {
        return Err(GraphError::BadQ(q));
    }
    if !graph.params().raw && sample.shift() != graph.params().z {
        return Err(GraphError::ShiftMismatch {
            sample_z: sample.shift(),
            graph_z: graph.params().z,
        });
    }
    let z_abs = sample.shift().norm();
    if z_abs == 0.0 {
        return Err(GraphError::ZeroShift);
    }
    let subset = graph.vertex(vertex).subset.clone();
    let smin_vertex = smin_of_subset(sample, &subset)?;
    if smin_vertex > t(q) * z_abs {
        return Err(GraphError::SminPrecondition {
            smin: smin_vertex,
            threshold: t(q) * z_abs,
        });
    }

    let profile = sample.profile();
    let shifted = sample.shifted_principal_submatrix(&subset);
    let mut checks = Vec::new();
    let mut outcome = None;

    for &ei in graph.out_edge_indices(vertex) {
        let edge = graph.edges()[ei];
        let target_subset = &graph.vertex(edge.to).subset;
        let target_smin = smin_of_subset(sample, target_subset)?;
        match edge.label {
            Some(j) => {
                let r = largest_r_for(target_smin, z_abs, n);
                let threshold = t((q - r - ladder.p0_tilde).max(-1));
                // the r = -1 escape: an infinite threshold satisfies the
                // branch regardless of the measured pairing
                let fallback = t((q + 1 - ladder.p0_tilde).max(-1));
                let nv = linalg::normal_vector(sample, &subset, j)?;
                let col_pos = subset.iter().position(|&x| x == j).unwrap();
                let col: Vec<Complex64> =
                    (0..subset.len()).map(|i| shifted[(i, col_pos)]).collect();
                let numerator = linalg::bilinear_pairing(nv.components(), &col).norm();
                let denom_sq: f64 = subset
                    .iter()
                    .enumerate()
                    .map(|(pos, &i)| nv.components()[pos].norm_sqr() * profile.get(i, j).powi(2))
                    .sum();
                let denominator = denom_sq.sqrt();
                let zero_denominator = denominator == 0.0;
                let pairing_ratio = if zero_denominator {
                    None
                } else {
                    Some(numerator / denominator)
                };
                let direct = pairing_ratio.map(|rr| rr <= threshold).unwrap_or(false);
                let vacuous = fallback.is_infinite();
                let satisfied = direct || vacuous;
                checks.push(EdgeCheck {
                    edge_index: ei,
                    label: Some(j),
                    target_smin,
                    r: if direct { r } else { -1 },
                    pairing_ratio,
                    threshold: if direct { threshold } else { fallback },
                    zero_denominator,
                    satisfied,
                });
                if satisfied && outcome.is_none() {
                    outcome = Some(WitnessOutcome::LabeledEdge {
                        edge_index: ei,
                        label: j,
                        r: if direct { r } else { -1 },
                        vacuous: !direct,
                    });
                }
            }
            None => {
                let threshold = t(ladder.p0) * z_abs;
                let satisfied = target_smin < threshold;
                checks.push(EdgeCheck {
                    edge_index: ei,
                    label: None,
                    target_smin,
                    r: ladder.p0,
                    pairing_ratio: None,
                    threshold,
                    zero_denominator: false,
                    satisfied,
                });
                if satisfied && outcome.is_none() {
                    outcome = Some(WitnessOutcome::TerminalEdge { edge_index: ei });
                }
            }
        }
    }

    Ok(WitnessReport {
        vertex,
        q,
        smin_vertex,
        outcome,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{make_profile, ProfileFamily};
    use crate::sampler::{sample, EntryDistribution};

    fn figure_one_graph() -> SubmatrixGraph {
        let profile = make_profile(&ProfileFamily::LowerTriangular { n: 4 }).unwrap();
        let params = GraphParams::raw_override(4, 0.5, 2.0f64.sqrt()).unwrap();
        build_graph(&profile, &params, DEFAULT_VERTEX_CAP).unwrap()
    }

    fn figure_two_graph() -> SubmatrixGraph {
        let profile = make_profile(&ProfileFamily::PeriodicBand { n: 6, w: 1 }).unwrap();
        let params = GraphParams::raw_override(6, 0.5, 2.0f64.sqrt()).unwrap();
        build_graph(&profile, &params, DEFAULT_VERTEX_CAP).unwrap()
    }

    #[test]
    fn figure_one_source_classification_and_neighbors() {
        let g = figure_one_graph();
        let src = g.vertex(g.source());
        assert_eq!(src.sparse_cols, vec![2, 3]); // J' = {3, 4} one-based
        assert_eq!(src.dense_cols, vec![0, 1]); // J'' = {1, 2} one-based
        assert_eq!(g.u_set(g.source(), 0), vec![0, 1, 2, 3]);
        assert_eq!(g.u_set(g.source(), 1), vec![1, 2, 3]);

        let out: Vec<_> = g.out_edges(g.source()).collect();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].label, Some(0));
        assert!(g.vertex(out[0].to).subset.is_empty());
        assert_eq!(out[1].label, Some(1));
        assert_eq!(g.vertex(out[1].to).subset, vec![0]);
        assert_eq!(out[2].label, None);
        assert_eq!(g.vertex(out[2].to).subset, vec![2, 3]);

        assert!(g.vertex(out[1].to).is_terminal);
        assert!(g.vertex(out[2].to).is_terminal);
        assert_eq!(g.vertices().len(), 4);
        g.validate().unwrap();
    }

    #[test]
    fn figure_two_has_seven_terminals() {
        let g = figure_two_graph();
        let terminals = g.terminal_ids();
        assert_eq!(terminals.len(), 7);
        assert!(g.empty_terminal().is_some());
        let mut pairs: Vec<Vec<usize>> = g
            .non_empty_terminals()
            .into_iter()
            .map(|v| g.vertex(v).subset.clone())
            .collect();
        pairs.sort();
        let mut expected = vec![
            vec![0, 2],
            vec![1, 3],
            vec![2, 4],
            vec![3, 5],
            vec![0, 4],
            vec![1, 5],
        ];
        expected.sort();
        assert_eq!(pairs, expected);
        assert_eq!(g.vertices().len(), 14); // source + 6 triples + 6 pairs + empty
        g.validate().unwrap();
    }

    #[test]
    fn all_sparse_profile_is_a_single_terminal() {
        let profile = make_profile(&ProfileFamily::Diagonal { n: 5 }).unwrap();
        let params = GraphParams::raw_override(5, 0.5, 2.0).unwrap();
        let g = build_graph(&profile, &params, DEFAULT_VERTEX_CAP).unwrap();
        assert_eq!(g.vertices().len(), 1);
        assert!(g.vertex(g.source()).is_terminal);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn shift_gate_requires_sigma_star_below_z() {
        let profile = make_profile(&ProfileFamily::Full { n: 4 }).unwrap();
        let params = GraphParams::from_shift(4, Complex64::new(0.5, 0.0), 0.5).unwrap();
        assert!(matches!(
            build_graph(&profile, &params, DEFAULT_VERTEX_CAP),
            Err(GraphError::ShiftBelowSigmaStar { .. })
        ));
    }

    #[test]
    fn truncation_is_flagged() {
        let profile = make_profile(&ProfileFamily::PeriodicBand { n: 6, w: 1 }).unwrap();
        let params = GraphParams::raw_override(6, 0.5, 2.0f64.sqrt()).unwrap();
        let g = build_graph(&profile, &params, 3).unwrap();
        assert!(g.truncated());
        assert!(enumerate_structures(&g, 0, 10).is_err());
    }

    #[test]
    fn ladder_matches_defining_inequalities() {
        let params = GraphParams::raw_override(10, 0.1, 1.0).unwrap();
        let ladder = dyadic_ladder(10, &params).unwrap();
        // beta = 10^-3, beta n^2 = 0.1: largest p with 2^-p >= 0.1 is 3
        assert_eq!(ladder.p0, 3);
        // beta/(32 n^3) = 3.125e-8 is below 2^-10: clamp to n
        assert_eq!(ladder.p0_tilde, 10);
        assert!(t(-1).is_infinite());

        let params = GraphParams::raw_override(100, 0.1, 1.0).unwrap();
        let ladder = dyadic_ladder(100, &params).unwrap();
        let high = params.beta / (32.0 * 100.0f64.powi(3));
        assert!(t(ladder.p0_tilde) <= high && high < t(ladder.p0_tilde - 1));
        let low = params.beta * 100.0 * 100.0;
        assert!(t(ladder.p0) >= low && t(ladder.p0 + 1) < low);
    }

    #[test]
    fn enumeration_on_single_vertex_graph() {
        let profile = make_profile(&ProfileFamily::Diagonal { n: 3 }).unwrap();
        let params = GraphParams::raw_override(3, 0.5, 2.0).unwrap();
        let g = build_graph(&profile, &params, DEFAULT_VERTEX_CAP).unwrap();
        let e = enumerate_structures(&g, 2, 100).unwrap();
        assert_eq!(e.path_count, 1);
        assert_eq!(e.count, 1);
        let s = e.structures.unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].path, vec![0]);
        assert_eq!(s[0].r_sequence, vec![2]);
    }

    #[test]
    fn enumeration_on_figure_one() {
        let g = figure_one_graph();
        let e = enumerate_structures(&g, 0, 1000).unwrap();
        assert_eq!(e.path_count, 3);
        assert_eq!(e.count, 3 * (4 + 2)); // three length-1 paths, one free r in {-1..4}
        let s = e.structures.unwrap();
        assert_eq!(s.len(), 18);
        // every r value appears once per path
        for path_target in 1..=3usize {
            let rs: Vec<i64> = s
                .iter()
                .filter(|d| d.path.len() == 2 && d.path[1] == path_target)
                .map(|d| d.r_sequence[1])
                .collect();
            assert_eq!(rs, vec![-1, 0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn enumeration_count_respects_lemma_bound() {
        let g = figure_two_graph();
        let e = enumerate_structures(&g, 0, 0).unwrap();
        assert_eq!(e.path_count, 12); // six triples, each with two continuations
        assert_eq!(e.count, 12 * 8 * 8); // two free r values per path
        assert!(e.structures.is_none()); // cap 0 forces count-only mode
        assert!((e.count as f64) <= e.count_bound);
    }

    #[test]
    fn witness_rejects_terminal_vertices_and_bad_preconditions() {
        let profile = make_profile(&ProfileFamily::PeriodicBand { n: 6, w: 1 }).unwrap();
        let z = Complex64::new(2.0, 0.0);
        let params = GraphParams::from_shift(6, z, 0.5).unwrap();
        let g = build_graph(&profile, &params, DEFAULT_VERTEX_CAP).unwrap();
        let s = sample(&profile, &EntryDistribution::real_gaussian(), z, 40);
        let ladder = dyadic_ladder(6, &params).unwrap();
        let terminal = g.terminal_ids()[0];
        assert!(matches!(
            deconstruction_witness(&s, &g, terminal, 0, &ladder),
            Err(GraphError::TerminalVertex(_))
        ));
        // q = n makes t_q |z| tiny; the source precondition must fail
        assert!(matches!(
            deconstruction_witness(&s, &g, g.source(), 6, &ladder),
            Err(GraphError::SminPrecondition { .. })
        ));
    }

    #[test]
    fn witness_found_on_band_sample() {
        // small n clamps p0_tilde to n, so any q <= n - 2 admits the r = -1
        // escape; the search must report a witness
        let profile = make_profile(&ProfileFamily::PeriodicBand { n: 6, w: 1 }).unwrap();
        let z = Complex64::new(2.0, 0.0);
        let params = GraphParams::from_shift(6, z, 0.5).unwrap();
        let g = build_graph(&profile, &params, DEFAULT_VERTEX_CAP).unwrap();
        let ladder = dyadic_ladder(6, &params).unwrap();
        let s = sample(&profile, &EntryDistribution::real_gaussian(), z, 11);
        let smin = smin_of_subset(&s, &g.vertex(g.source()).subset).unwrap();
        let q = largest_r_for(smin, z.norm(), 6).max(0);
        let report = deconstruction_witness(&s, &g, g.source(), q, &ladder).unwrap();
        assert!(!report.is_violation());
        assert!(!report.checks.is_empty());
    }

    #[test]
    fn witness_runs_near_singular_shift() {
        // shifting by an eigenvalue drives s_min(A - z Id) to zero, so large
        // q preconditions hold and the full search path runs
        let profile = make_profile(&ProfileFamily::Full { n: 16 }).unwrap();
        let base = sample(
            &profile,
            &EntryDistribution::real_gaussian(),
            Complex64::new(0.0, 0.0),
            77,
        );
        let ev = base.eigenvalues().unwrap();
        let z = ev
            .iter()
            .copied()
            .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
            .unwrap();
        assert!(z.norm() > 1.0);
        let params = GraphParams::from_shift(16, z, 0.5).unwrap();
        let g = build_graph(&profile, &params, DEFAULT_VERTEX_CAP).unwrap();
        let ladder = dyadic_ladder(16, &params).unwrap();
        let s = sample(&profile, &EntryDistribution::real_gaussian(), z, 77);
        let smin = smin_of_subset(&s, &g.vertex(g.source()).subset).unwrap();
        assert!(smin < 1e-8 * z.norm(), "shifted matrix should be near singular");
        let report = deconstruction_witness(&s, &g, g.source(), 16, &ladder).unwrap();
        assert!(!report.is_violation());
    }

    #[test]
    fn edge_structure_is_independent_of_realization() {
        let profile = make_profile(&ProfileFamily::PeriodicBand { n: 8, w: 2 }).unwrap();
        let z = Complex64::new(3.0, 0.0);
        let params = GraphParams::from_shift(8, z, 0.4).unwrap();
        let g1 = build_graph(&profile, &params, DEFAULT_VERTEX_CAP).unwrap();
        let g2 = build_graph(&profile, &params, DEFAULT_VERTEX_CAP).unwrap();
        assert_eq!(g1.edges(), g2.edges());
        let subsets1: Vec<_> = g1.vertices().iter().map(|v| v.subset.clone()).collect();
        let subsets2: Vec<_> = g2.vertices().iter().map(|v| v.subset.clone()).collect();
        assert_eq!(subsets1, subsets2);
    }

    #[test]
    fn dot_and_json_exports_are_one_based() {
        let g = figure_one_graph();
        let dot = g.to_dot();
        assert!(dot.contains("{1,2,3,4}"));
        assert!(dot.contains("∅"));
        assert!(dot.contains("label=\"ε\""));
        let j = g.to_json();
        assert_eq!(j["terminals"]["empty"], serde_json::json!(true));
        assert_eq!(j["vertices"][0]["subset"], serde_json::json!([1, 2, 3, 4]));
    }
}
