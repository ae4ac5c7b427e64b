//! Undirected graphs, random instance generators (Barabási–Albert and
//! clique-structured RB graphs) and exhaustive combinatorial-optimization
//! oracles for small instances.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{co_energy, CoProblem};
use crate::error::{check_dim, Error, Result};
use crate::state::{index_to_bits, BitState};

/// Default hard cap on exhaustive CO search.
pub const BRUTE_FORCE_CAP: usize = 14;
/// Absolute cap, reachable only with an explicit override.
pub const BRUTE_FORCE_MAX: usize = 26;

/// Simple undirected graph. Edges are stored once as `(i, j)` with `i < j`,
/// sorted lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Rejects self-loops, duplicate edges (in either orientation) and
    /// out-of-range indices.
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n_nodes || b >= n_nodes {
                return Err(Error::Parse(format!(
                    "edge ({a}, {b}) out of range for {n_nodes} nodes"
                )));
            }
            if a == b {
                return Err(Error::Parse(format!("self-loop on node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::Parse(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(Self::from_sorted(n_nodes, set))
    }

    fn from_sorted(n_nodes: usize, set: BTreeSet<(usize, usize)>) -> Self {
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n_nodes];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Self {
            n_nodes,
            edges,
            neighbors,
        }
    }

    pub fn empty(n_nodes: usize) -> Self {
        Self::from_sorted(n_nodes, BTreeSet::new())
    }

    pub fn complete(n_nodes: usize) -> Self {
        let set = (0..n_nodes)
            .flat_map(|i| (i + 1..n_nodes).map(move |j| (i, j)))
            .collect();
        Self::from_sorted(n_nodes, set)
    }

    /// Star with node 0 at the center.
    pub fn star(leaves: usize) -> Self {
        Self::from_sorted(leaves + 1, (1..=leaves).map(|j| (0, j)).collect())
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let set = self
            .edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (perm[a], perm[b]);
                (x.min(y), x.max(y))
            })
            .collect();
        Self::from_sorted(self.n_nodes, set)
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaConfig {
    pub n_nodes: usize,
    pub attachment: usize,
    pub seed: u64,
}

impl BaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.attachment < 1 || self.n_nodes <= self.attachment {
            return Err(Error::InvalidConfig(format!(
                "BA graph needs m >= 1 and n > m (n = {}, m = {})",
                self.n_nodes, self.attachment
            )));
        }
        Ok(())
    }
}

/// Preferential attachment: a clique on `m + 1` seed nodes, then every new
/// node attaches to `m` distinct existing nodes drawn with probability
/// proportional to their degree. Edge count is `C(m+1, 2) + m (n - m - 1)`.
pub fn gen_ba(cfg: &BaConfig) -> Result<Graph> {
    cfg.validate()?;
    let m = cfg.attachment;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut set = BTreeSet::new();
    // every edge contributes both endpoints, so uniform draws are degree-weighted
    let mut endpoints = Vec::with_capacity(2 * m * cfg.n_nodes);
    for i in 0..=m {
        for j in i + 1..=m {
            set.insert((i, j));
            endpoints.push(i);
            endpoints.push(j);
        }
    }
    for v in m + 1..cfg.n_nodes {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            let pick = endpoints[rng.random_range(0..endpoints.len())];
            targets.insert(pick);
        }
        for &u in &targets {
            set.insert((u, v));
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    Ok(Graph::from_sorted(cfg.n_nodes, set))
}

/// Default cross-edge density constant for RB graphs.
pub const RB_DENSITY: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbConfig {
    pub n_cliques: usize,
    pub clique_size: usize,
    pub p: f64,
    #[serde(default = "default_rb_density")]
    pub density: f64,
    pub seed: u64,
}

fn default_rb_density() -> f64 {
    RB_DENSITY
}

impl RbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cliques < 2 || self.clique_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "RB graph needs n >= 2 and k >= 2 (n = {}, k = {})",
                self.n_cliques, self.clique_size
            )));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "RB interconnect p = {} outside (0, 1]",
                self.p
            )));
        }
        if !(self.density >= 0.0 && self.density.is_finite()) {
            return Err(Error::InvalidConfig("RB density must be >= 0".into()));
        }
        Ok(())
    }

    /// Cross edges drawn for each ordered clique pair.
    pub fn cross_edges_per_pair(&self) -> usize {
        let k2 = self.clique_size * self.clique_size;
        ((self.density * (1.0 - self.p) * k2 as f64).round() as usize).min(k2)
    }
}

/// `n` disjoint `k`-cliques plus, for every ordered clique pair, a fixed
/// number of distinct random cross edges that shrinks to zero at `p = 1`.
pub fn gen_rb(cfg: &RbConfig) -> Result<Graph> {
    cfg.validate()?;
    let (n, k) = (cfg.n_cliques, cfg.clique_size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut set = BTreeSet::new();
    for c in 0..n {
        for a in 0..k {
            for b in a + 1..k {
                set.insert((c * k + a, c * k + b));
            }
        }
    }
    let per_pair = cfg.cross_edges_per_pair();
    if per_pair > 0 {
        for ca in 0..n {
            for cb in 0..n {
                if ca == cb {
                    continue;
                }
                for flat in index::sample(&mut rng, k * k, per_pair) {
                    let u = ca * k + flat / k;
                    let v = cb * k + flat % k;
                    set.insert((u.min(v), u.max(v)));
                }
            }
        }
    }
    Ok(Graph::from_sorted(n * k, set))
}

/// Lattice graph of an `L × L` periodic grid: right and down bond per site.
pub fn periodic_grid(side: usize) -> Result<Graph> {
    if side < 3 {
        return Err(Error::InvalidLattice(format!(
            "periodic side length {side} < 3 duplicates bonds"
        )));
    }
    let mut set = BTreeSet::new();
    for (a, b) in grid_bonds(side) {
        set.insert((a.min(b), a.max(b)));
    }
    Ok(Graph::from_sorted(side * side, set))
}

/// Bond list in the canonical order used by lattice couplings: for each
/// site `(r, c)` in row-major order, its right neighbour then its down
/// neighbour, both with periodic wrap.
pub fn grid_bonds(side: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..side * side).flat_map(move |i| {
        let (r, c) = (i / side, i % side);
        let right = r * side + (c + 1) % side;
        let down = ((r + 1) % side) * side + c;
        [(i, right), (i, down)]
    })
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Random-graph family with node-count bounds; instances outside the
/// bounds are redrawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GraphFamily {
    Ba {
        attachment: usize,
        min_nodes: usize,
        max_nodes: usize,
    },
    Rb {
        n_cliques: (usize, usize),
        clique_size: (usize, usize),
        p: (f64, f64),
        min_nodes: usize,
        max_nodes: usize,
        #[serde(default = "default_rb_density")]
        density: f64,
    },
}

impl GraphFamily {
    pub fn ba_default() -> Self {
        GraphFamily::Ba {
            attachment: 4,
            min_nodes: 10,
            max_nodes: 14,
        }
    }

    pub fn rb_default() -> Self {
        GraphFamily::Rb {
            n_cliques: (2, 4),
            clique_size: (3, 5),
            p: (0.3, 1.0),
            min_nodes: 10,
            max_nodes: 14,
            density: RB_DENSITY,
        }
    }

    /// Draws one instance; `seed` fully determines the result.
    pub fn sample(&self, seed: u64) -> Result<Graph> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            GraphFamily::Ba {
                attachment,
                min_nodes,
                max_nodes,
            } => {
                if min_nodes > max_nodes {
                    return Err(Error::InvalidConfig("min_nodes > max_nodes".into()));
                }
                let n = rng.random_range(min_nodes..=max_nodes);
                gen_ba(&BaConfig {
                    n_nodes: n,
                    attachment,
                    seed: rng.random(),
                })
            }
            GraphFamily::Rb {
                n_cliques,
                clique_size,
                p,
                min_nodes,
                max_nodes,
                density,
            } => {
                let feasible = (n_cliques.0..=n_cliques.1).any(|n| {
                    (clique_size.0..=clique_size.1)
                        .any(|k| (min_nodes..=max_nodes).contains(&(n * k)))
                });
                if !feasible {
                    return Err(Error::InvalidConfig(
                        "no RB clique layout fits the node bounds".into(),
                    ));
                }
                loop {
                    let n = rng.random_range(n_cliques.0..=n_cliques.1);
                    let k = rng.random_range(clique_size.0..=clique_size.1);
                    let pv = if p.0 < p.1 {
                        rng.random_range(p.0..=p.1)
                    } else {
                        p.0
                    };
                    let seed = rng.random();
                    if !(min_nodes..=max_nodes).contains(&(n * k)) {
                        continue;
                    }
                    return gen_rb(&RbConfig {
                        n_cliques: n,
                        clique_size: k,
                        p: pv,
                        density,
                        seed,
                    });
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Constraint checkers and brute-force oracle
// ---------------------------------------------------------------------------

pub fn is_independent_set(graph: &Graph, x: &[u8]) -> bool {
    graph
        .edges()
        .iter()
        .all(|&(a, b)| !(x[a] == 1 && x[b] == 1))
}

pub fn is_dominating_set(graph: &Graph, x: &[u8]) -> bool {
    (0..graph.n_nodes()).all(|i| x[i] == 1 || graph.neighbors(i).iter().any(|&j| x[j] == 1))
}

pub fn is_clique(graph: &Graph, x: &[u8]) -> bool {
    let members: Vec<usize> = (0..x.len()).filter(|&i| x[i] == 1).collect();
    members
        .iter()
        .enumerate()
        .all(|(k, &a)| members[k + 1..].iter().all(|&b| graph.has_edge(a, b)))
}

pub fn cut_size(graph: &Graph, x: &[u8]) -> usize {
    graph.edges().iter().filter(|&&(a, b)| x[a] != x[b]).count()
}

/// Whether `x` satisfies the problem's hard constraints.
pub fn is_feasible(problem: CoProblem, graph: &Graph, x: &[u8]) -> bool {
    match problem {
        CoProblem::Mis => is_independent_set(graph, x),
        CoProblem::Mds => is_dominating_set(graph, x),
        CoProblem::MaxCl => is_clique(graph, x),
        CoProblem::MaxCut => true,
    }
}

/// The combinatorial quantity of a feasible solution: set size for
/// MIS/MDS/MaxCl, cut size for MaxCut. `None` when infeasible.
pub fn solution_quantity(problem: CoProblem, graph: &Graph, x: &[u8]) -> Option<usize> {
    if !is_feasible(problem, graph, x) {
        return None;
    }
    Some(match problem {
        CoProblem::MaxCut => cut_size(graph, x),
        _ => x.iter().filter(|&&b| b == 1).count(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoOptimum {
    pub energy: f64,
    pub states: Vec<BitState>,
    /// Constraint-checked quantity of the optimal states.
    pub quantity: usize,
}

/// Exhaustive search over all `2^N` states. Graphs above
/// [`BRUTE_FORCE_CAP`] nodes need `allow_up_to` (at most
/// [`BRUTE_FORCE_MAX`]).
pub fn brute_force_co(
    problem: CoProblem,
    graph: &Graph,
    a: f64,
    b: f64,
    allow_up_to: Option<usize>,
) -> Result<CoOptimum> {
    let n = graph.n_nodes();
    let cap = allow_up_to.unwrap_or(BRUTE_FORCE_CAP).min(BRUTE_FORCE_MAX);
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    let mut best = f64::INFINITY;
    let mut states = Vec::new();
    let mut x = vec![0u8; n];
    for idx in 0..(1u64 << n) {
        index_to_bits(idx, &mut x);
        let e = co_energy(problem, graph, &x, a, b)?;
        if e < best - 1e-9 {
            best = e;
            states.clear();
            states.push(BitState::from_index(idx, n));
        } else if (e - best).abs() <= 1e-9 {
            states.push(BitState::from_index(idx, n));
        }
    }
    let quantity = states
        .iter()
        .filter_map(|s| solution_quantity(problem, graph, s.bits()))
        .max()
        .ok_or_else(|| Error::Degenerate("no feasible energy minimizer".into()))?;
    Ok(CoOptimum {
        energy: best,
        states,
        quantity,
    })
}

pub(crate) fn check_graph_dim(graph: &Graph, x: &[u8]) -> Result<()> {
    check_dim(graph.n_nodes(), x.len())
}
