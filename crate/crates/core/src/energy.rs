//! Energy functions over binary states and the Boltzmann target built on
//! top of them.
//!
//! Every pairwise sum visits each undirected edge exactly once. QUBO
//! coefficients given in the double-index form `Σ_{i,j} Q_ij X_i X_j` are
//! folded into a diagonal plus an upper-triangular part on construction.
//!
//! Each model also exposes a multilinear extension ([`EnergyModel::relaxed_energy`])
//! that accepts real values in `[0, 1]` in place of bits. For product
//! distributions it equals the expected energy, which is what conditional
//! expectation decoding relies on.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::graphs::{check_graph_dim, grid_bonds, periodic_grid, Graph};
use crate::state::spin;

/// Penalty weights used throughout the CO experiments.
pub const DEFAULT_PENALTY_A: f64 = 1.0;
pub const DEFAULT_PENALTY_B: f64 = 1.1;

// ---------------------------------------------------------------------------
// Ising lattice
// ---------------------------------------------------------------------------

/// Ferromagnetic Ising model on a periodic `L × L` grid:
/// `H(σ) = −J Σ_⟨ij⟩ σ_i σ_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingLattice2D {
    side: usize,
    coupling: f64,
}

impl IsingLattice2D {
    pub fn new(side: usize, coupling: f64) -> Result<Self> {
        if side < 3 {
            return Err(Error::InvalidLattice(format!(
                "periodic side length {side} < 3 duplicates bonds"
            )));
        }
        if !coupling.is_finite() {
            return Err(Error::NonFinite("Ising coupling".into()));
        }
        Ok(Self { side, coupling })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn n_sites(&self) -> usize {
        self.side * self.side
    }

    pub fn energy(&self, x: &[u8]) -> Result<f64> {
        check_dim(self.n_sites(), x.len())?;
        Ok(self.energy_unchecked(x))
    }

    fn energy_unchecked(&self, x: &[u8]) -> f64 {
        let aligned: i64 = grid_bonds(self.side)
            .map(|(a, b)| if x[a] == x[b] { 1 } else { -1 })
            .sum();
        -self.coupling * aligned as f64
    }

    fn relaxed(&self, v: &[f64]) -> f64 {
        let s: f64 = grid_bonds(self.side)
            .map(|(a, b)| (2.0 * v[a] - 1.0) * (2.0 * v[b] - 1.0))
            .sum();
        -self.coupling * s
    }
}

// ---------------------------------------------------------------------------
// Edwards–Anderson spin glass
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingDistribution {
    /// Standard normal couplings.
    Normal,
    /// Uniform couplings on `[-1, 1)`.
    Uniform,
}

/// Edwards–Anderson model on a periodic grid with one random coupling per
/// bond, ordered as in [`grid_bonds`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EaInstance {
    side: usize,
    couplings: Vec<f64>,
    seed: Option<u64>,
}

impl EaInstance {
    pub fn generate(side: usize, dist: CouplingDistribution, seed: u64) -> Result<Self> {
        if side < 3 {
            return Err(Error::InvalidLattice(format!(
                "periodic side length {side} < 3 duplicates bonds"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_bonds = 2 * side * side;
        let couplings = match dist {
            CouplingDistribution::Normal => {
                let d = Normal::new(0.0, 1.0).expect("valid normal");
                (0..n_bonds).map(|_| d.sample(&mut rng)).collect()
            }
            CouplingDistribution::Uniform => {
                let d = Uniform::new(-1.0, 1.0).expect("valid uniform");
                (0..n_bonds).map(|_| d.sample(&mut rng)).collect()
            }
        };
        Ok(Self {
            side,
            couplings,
            seed: Some(seed),
        })
    }

    pub fn from_couplings(side: usize, couplings: Vec<f64>) -> Result<Self> {
        if side < 3 {
            return Err(Error::InvalidLattice(format!(
                "periodic side length {side} < 3 duplicates bonds"
            )));
        }
        check_dim(2 * side * side, couplings.len())?;
        if couplings.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("EA coupling".into()));
        }
        Ok(Self {
            side,
            couplings,
            seed: None,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_sites(&self) -> usize {
        self.side * self.side
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn energy(&self, x: &[u8]) -> Result<f64> {
        check_dim(self.n_sites(), x.len())?;
        Ok(self.energy_unchecked(x))
    }

    fn energy_unchecked(&self, x: &[u8]) -> f64 {
        -grid_bonds(self.side)
            .zip(&self.couplings)
            .map(|((a, b), j)| j * spin(x[a]) * spin(x[b]))
            .sum::<f64>()
    }

    fn relaxed(&self, v: &[f64]) -> f64 {
        -grid_bonds(self.side)
            .zip(&self.couplings)
            .map(|((a, b), j)| j * (2.0 * v[a] - 1.0) * (2.0 * v[b] - 1.0))
            .sum::<f64>()
    }
}

// ---------------------------------------------------------------------------
// QUBO
// ---------------------------------------------------------------------------

/// `H(X) = Σ_i d_i X_i + Σ_{i<j} U_ij X_i X_j`, folded from arbitrary
/// `(i, j, w)` terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuboInstance {
    n: usize,
    diag: Vec<f64>,
    upper: Vec<(usize, usize, f64)>,
    penalty_a: f64,
    penalty_b: f64,
}

impl QuboInstance {
    /// Each entry contributes `w X_i X_j`; entries on the same unordered
    /// pair are summed.
    pub fn from_terms(
        n: usize,
        terms: impl IntoIterator<Item = (usize, usize, f64)>,
        penalty_a: f64,
        penalty_b: f64,
    ) -> Result<Self> {
        if !(penalty_a < penalty_b) {
            return Err(Error::InvalidConfig(format!(
                "QUBO penalties need A < B (A = {penalty_a}, B = {penalty_b})"
            )));
        }
        let mut diag = vec![0.0; n];
        let mut upper = BTreeMap::new();
        for (i, j, w) in terms {
            if i >= n || j >= n {
                return Err(Error::Parse(format!("QUBO term ({i}, {j}) out of range")));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("QUBO coefficient ({i}, {j})")));
            }
            if i == j {
                diag[i] += w;
            } else {
                *upper.entry((i.min(j), i.max(j))).or_insert(0.0) += w;
            }
        }
        Ok(Self {
            n,
            diag,
            upper: upper.into_iter().map(|((i, j), w)| (i, j, w)).collect(),
            penalty_a,
            penalty_b,
        })
    }

    /// QUBO encoding of the quadratic CO problems (MIS, MaxCl, MaxCut).
    pub fn from_co(problem: CoProblem, graph: &Graph, a: f64, b: f64) -> Result<Self> {
        let n = graph.n_nodes();
        let mut terms = Vec::new();
        match problem {
            CoProblem::Mis => {
                terms.extend((0..n).map(|i| (i, i, -a)));
                terms.extend(graph.edges().iter().map(|&(i, j)| (i, j, b)));
            }
            CoProblem::MaxCl => {
                terms.extend((0..n).map(|i| (i, i, -a)));
                for i in 0..n {
                    for j in i + 1..n {
                        if !graph.has_edge(i, j) {
                            terms.push((i, j, b));
                        }
                    }
                }
            }
            CoProblem::MaxCut => {
                // −(1 − σ_i σ_j)/2 = −(x_i + x_j − 2 x_i x_j)
                for &(i, j) in graph.edges() {
                    terms.push((i, i, -1.0));
                    terms.push((j, j, -1.0));
                    terms.push((i, j, 2.0));
                }
            }
            CoProblem::Mds => {
                return Err(Error::InvalidConfig(
                    "MDS energy is not quadratic; use the CO model directly".into(),
                ))
            }
        }
        Self::from_terms(n, terms, a, b)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn penalties(&self) -> (f64, f64) {
        (self.penalty_a, self.penalty_b)
    }

    /// `(i, j, w)` terms of the folded form, diagonal first.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.diag
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, &w)| (i, i, w))
            .chain(self.upper.iter().copied())
    }

    pub fn energy(&self, x: &[u8]) -> Result<f64> {
        check_dim(self.n, x.len())?;
        Ok(self.energy_unchecked(x))
    }

    fn energy_unchecked(&self, x: &[u8]) -> f64 {
        let d: f64 = self
            .diag
            .iter()
            .zip(x)
            .map(|(w, &b)| if b == 1 { *w } else { 0.0 })
            .sum();
        let u: f64 = self
            .upper
            .iter()
            .map(|&(i, j, w)| if x[i] == 1 && x[j] == 1 { w } else { 0.0 })
            .sum();
        d + u
    }

    fn relaxed(&self, v: &[f64]) -> f64 {
        let d: f64 = self.diag.iter().zip(v).map(|(w, x)| w * x).sum();
        let u: f64 = self.upper.iter().map(|&(i, j, w)| w * v[i] * v[j]).sum();
        d + u
    }
}

// ---------------------------------------------------------------------------
// CO problems
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoProblem {
    Mis,
    Mds,
    MaxCl,
    MaxCut,
}

impl CoProblem {
    /// Whether the combinatorial quantity is maximized (MIS, MaxCl, MaxCut)
    /// or minimized (MDS).
    pub fn maximizes(self) -> bool {
        !matches!(self, CoProblem::Mds)
    }

    pub fn name(self) -> &'static str {
        match self {
            CoProblem::Mis => "mis",
            CoProblem::Mds => "mds",
            CoProblem::MaxCl => "maxcl",
            CoProblem::MaxCut => "maxcut",
        }
    }
}

impl fmt::Display for CoProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CoProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mis" => Ok(CoProblem::Mis),
            "mds" => Ok(CoProblem::Mds),
            "maxcl" => Ok(CoProblem::MaxCl),
            "maxcut" => Ok(CoProblem::MaxCut),
            other => Err(Error::Parse(format!("unknown CO problem '{other}'"))),
        }
    }
}

fn check_penalties(problem: CoProblem, a: f64, b: f64) -> Result<()> {
    if problem != CoProblem::MaxCut && !(a < b) {
        return Err(Error::InvalidConfig(format!(
            "{problem} needs penalty A < B (A = {a}, B = {b})"
        )));
    }
    Ok(())
}

/// Penalty-form CO energy on a graph:
///
/// * MIS:    `−A Σ X_i + B Σ_{(i,j)∈E} X_i X_j`
/// * MDS:    `A Σ X_i + B Σ_i (1 − X_i) Π_{j∈N(i)} (1 − X_j)`
/// * MaxCl:  `−A Σ X_i + B Σ_{(i,j)∉E, i<j} X_i X_j`
/// * MaxCut: `−Σ_{(i,j)∈E} (1 − σ_i σ_j)/2`
pub fn co_energy(problem: CoProblem, graph: &Graph, x: &[u8], a: f64, b: f64) -> Result<f64> {
    check_graph_dim(graph, x)?;
    check_penalties(problem, a, b)?;
    let v: Vec<f64> = x.iter().map(|&b| b as f64).collect();
    Ok(co_relaxed_energy(problem, graph, &v, a, b))
}

/// Multilinear extension of [`co_energy`]; exact for binary inputs.
pub fn co_relaxed_energy(problem: CoProblem, graph: &Graph, v: &[f64], a: f64, b: f64) -> f64 {
    let n = graph.n_nodes();
    match problem {
        CoProblem::Mis => {
            let ones: f64 = v.iter().sum();
            let pen: f64 = graph.edges().iter().map(|&(i, j)| v[i] * v[j]).sum();
            -a * ones + b * pen
        }
        CoProblem::Mds => {
            let ones: f64 = v.iter().sum();
            let pen: f64 = (0..n)
                .map(|i| {
                    (1.0 - v[i])
                        * graph
                            .neighbors(i)
                            .iter()
                            .map(|&j| 1.0 - v[j])
                            .product::<f64>()
                })
                .sum();
            a * ones + b * pen
        }
        CoProblem::MaxCl => {
            let ones: f64 = v.iter().sum();
            let mut pen = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    if !graph.has_edge(i, j) {
                        pen += v[i] * v[j];
                    }
                }
            }
            -a * ones + b * pen
        }
        CoProblem::MaxCut => -graph
            .edges()
            .iter()
            .map(|&(i, j)| (1.0 - (2.0 * v[i] - 1.0) * (2.0 * v[j] - 1.0)) / 2.0)
            .sum::<f64>(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoInstance {
    pub problem: CoProblem,
    pub graph: Graph,
    pub penalty_a: f64,
    pub penalty_b: f64,
}

impl CoInstance {
    pub fn new(problem: CoProblem, graph: Graph) -> Self {
        Self {
            problem,
            graph,
            penalty_a: DEFAULT_PENALTY_A,
            penalty_b: DEFAULT_PENALTY_B,
        }
    }

    pub fn with_penalties(problem: CoProblem, graph: Graph, a: f64, b: f64) -> Result<Self> {
        check_penalties(problem, a, b)?;
        Ok(Self {
            problem,
            graph,
            penalty_a: a,
            penalty_b: b,
        })
    }
}

// ---------------------------------------------------------------------------
// Energy model and Boltzmann target
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum EnergyModel {
    Ising(IsingLattice2D),
    EdwardsAnderson(EaInstance),
    Qubo(QuboInstance),
    Co(CoInstance),
}

impl EnergyModel {
    pub fn n_bits(&self) -> usize {
        match self {
            EnergyModel::Ising(m) => m.n_sites(),
            EnergyModel::EdwardsAnderson(m) => m.n_sites(),
            EnergyModel::Qubo(m) => m.n(),
            EnergyModel::Co(c) => c.graph.n_nodes(),
        }
    }

    pub fn energy(&self, x: &[u8]) -> Result<f64> {
        check_dim(self.n_bits(), x.len())?;
        Ok(self.energy_unchecked(x))
    }

    /// Caller guarantees `x.len() == self.n_bits()`.
    pub fn energy_unchecked(&self, x: &[u8]) -> f64 {
        match self {
            EnergyModel::Ising(m) => m.energy_unchecked(x),
            EnergyModel::EdwardsAnderson(m) => m.energy_unchecked(x),
            EnergyModel::Qubo(m) => m.energy_unchecked(x),
            EnergyModel::Co(c) => {
                let v: Vec<f64> = x.iter().map(|&b| b as f64).collect();
                co_relaxed_energy(c.problem, &c.graph, &v, c.penalty_a, c.penalty_b)
            }
        }
    }

    /// Multilinear extension over `[0, 1]^N`.
    pub fn relaxed_energy(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.n_bits(), v.len())?;
        Ok(match self {
            EnergyModel::Ising(m) => m.relaxed(v),
            EnergyModel::EdwardsAnderson(m) => m.relaxed(v),
            EnergyModel::Qubo(m) => m.relaxed(v),
            EnergyModel::Co(c) => {
                co_relaxed_energy(c.problem, &c.graph, v, c.penalty_a, c.penalty_b)
            }
        })
    }

    /// Interaction graph fed to graph networks.
    pub fn interaction_graph(&self) -> Graph {
        match self {
            EnergyModel::Ising(m) => periodic_grid(m.side()).expect("validated lattice"),
            EnergyModel::EdwardsAnderson(m) => periodic_grid(m.side()).expect("validated lattice"),
            EnergyModel::Qubo(q) => Graph::new(q.n, q.upper.iter().map(|&(i, j, _)| (i, j)))
                .expect("folded QUBO pairs are unique"),
            EnergyModel::Co(c) => c.graph.clone(),
        }
    }
}

/// `p_B(X) ∝ exp(−β H(X))`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoltzmannTarget {
    pub model: EnergyModel,
    pub beta: f64,
}

impl BoltzmannTarget {
    pub fn new(model: EnergyModel, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidConfig(format!("inverse temperature {beta}")));
        }
        Ok(Self { model, beta })
    }

    pub fn n_bits(&self) -> usize {
        self.model.n_bits()
    }

    /// `−β H(X)`, i.e. `log p_B(X) + log Z`.
    pub fn log_unnormalized(&self, x: &[u8]) -> Result<f64> {
        let h = self.model.energy(x)?;
        if !h.is_finite() {
            return Err(Error::NonFinite("energy".into()));
        }
        Ok(self.log_weight_of_energy(h))
    }

    pub fn log_weight_of_energy(&self, h: f64) -> f64 {
        if self.beta == 0.0 {
            0.0
        } else {
            -self.beta * h
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{brute_force_co, is_feasible};
    use crate::state::BitState;
    use proptest::prelude::*;

    fn edge() -> Graph {
        Graph::new(2, [(0, 1)]).unwrap()
    }

    #[test]
    fn ising_examples() {
        let l3 = IsingLattice2D::new(3, 1.0).unwrap();
        let mut x = vec![1u8; 9];
        assert_eq!(l3.energy(&x).unwrap(), -18.0);
        x[4] = 0;
        assert_eq!(l3.energy(&x).unwrap(), -10.0);

        let l4 = IsingLattice2D::new(4, 1.0).unwrap();
        let checker: Vec<u8> = (0..16).map(|i| (((i / 4) + (i % 4)) % 2) as u8).collect();
        assert_eq!(l4.energy(&checker).unwrap(), 32.0);
    }

    #[test]
    fn ising_errors() {
        assert!(matches!(
            IsingLattice2D::new(2, 1.0),
            Err(Error::InvalidLattice(_))
        ));
        let l3 = IsingLattice2D::new(3, 1.0).unwrap();
        assert!(matches!(
            l3.energy(&[1; 8]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ea_unit_couplings_match_ising() {
        let ea = EaInstance::from_couplings(3, vec![1.0; 18]).unwrap();
        let is = IsingLattice2D::new(3, 1.0).unwrap();
        for idx in 0..512u64 {
            let s = BitState::from_index(idx, 9);
            assert_eq!(ea.energy(s.bits()).unwrap(), is.energy(s.bits()).unwrap());
        }
    }

    #[test]
    fn ea_negated_couplings_negate_energy() {
        let ea = EaInstance::generate(3, CouplingDistribution::Normal, 4).unwrap();
        let neg =
            EaInstance::from_couplings(3, ea.couplings().iter().map(|c| -c).collect()).unwrap();
        for idx in (0..512u64).step_by(7) {
            let s = BitState::from_index(idx, 9);
            let (a, b) = (ea.energy(s.bits()).unwrap(), neg.energy(s.bits()).unwrap());
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn ea_minimum_matches_exhaustive_search() {
        let ea = EaInstance::generate(3, CouplingDistribution::Uniform, 21).unwrap();
        // independent brute force straight from the bond definition
        let mut best = f64::INFINITY;
        for idx in 0..512u64 {
            let s: Vec<f64> = (0..9)
                .map(|i| if (idx >> i) & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            let mut e = 0.0;
            let mut k = 0;
            for r in 0..3 {
                for c in 0..3 {
                    let i = r * 3 + c;
                    e -= ea.couplings()[k] * s[i] * s[r * 3 + (c + 1) % 3];
                    e -= ea.couplings()[k + 1] * s[i] * s[((r + 1) % 3) * 3 + c];
                    k += 2;
                }
            }
            best = best.min(e);
        }
        let model = EnergyModel::EdwardsAnderson(ea);
        let min = (0..512u64)
            .map(|i| model.energy(BitState::from_index(i, 9).bits()).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!((min - best).abs() < 1e-12);
    }

    #[test]
    fn co_examples() {
        let g = edge();
        let e = |p, x: &[u8]| co_energy(p, &g, x, 1.0, 1.1).unwrap();
        assert!((e(CoProblem::Mis, &[1, 0]) + 1.0).abs() < 1e-12);
        assert!((e(CoProblem::Mis, &[1, 1]) + 0.9).abs() < 1e-12);
        assert!((e(CoProblem::MaxCut, &[1, 0]) + 1.0).abs() < 1e-12);
        assert_eq!(e(CoProblem::MaxCut, &[0, 0]), 0.0);
        assert!((e(CoProblem::Mds, &[0, 0]) - 2.2).abs() < 1e-12);
        assert!((e(CoProblem::Mds, &[1, 0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn co_errors() {
        let g = edge();
        assert!(co_energy(CoProblem::Mis, &g, &[1, 0, 0], 1.0, 1.1).is_err());
        assert!(co_energy(CoProblem::Mis, &g, &[1, 0], 1.2, 1.1).is_err());
        assert!("maxflow".parse::<CoProblem>().is_err());
    }

    #[test]
    fn maxcl_excludes_self_pairs() {
        // a single selected node has no non-edge partner
        let g = Graph::empty(3);
        let e = co_energy(CoProblem::MaxCl, &g, &[0, 1, 0], 1.0, 1.1).unwrap();
        assert!((e + 1.0).abs() < 1e-12);
    }

    #[test]
    fn qubo_matches_co_energy() {
        let g = crate::graphs::gen_ba(&crate::graphs::BaConfig {
            n_nodes: 8,
            attachment: 2,
            seed: 1,
        })
        .unwrap();
        for p in [CoProblem::Mis, CoProblem::MaxCl, CoProblem::MaxCut] {
            let q = QuboInstance::from_co(p, &g, 1.0, 1.1).unwrap();
            for idx in 0..256u64 {
                let s = BitState::from_index(idx, 8);
                let a = q.energy(s.bits()).unwrap();
                let b = co_energy(p, &g, s.bits(), 1.0, 1.1).unwrap();
                assert!((a - b).abs() < 1e-12, "{p}");
            }
        }
    }

    #[test]
    fn qubo_folds_double_index() {
        let q =
            QuboInstance::from_terms(2, [(0, 1, 0.5), (1, 0, 0.5), (0, 0, 2.0)], 1.0, 1.1).unwrap();
        assert_eq!(q.energy(&[1, 1]).unwrap(), 3.0);
        assert!(QuboInstance::from_terms(2, [], 1.1, 1.0).is_err());
    }

    #[test]
    fn boltzmann_log_weight() {
        let l3 = IsingLattice2D::new(3, 1.0).unwrap();
        let t0 = BoltzmannTarget::new(EnergyModel::Ising(l3.clone()), 0.0).unwrap();
        assert_eq!(t0.log_unnormalized(&[1; 9]).unwrap(), 0.0);
        assert_eq!(t0.log_unnormalized(&[0; 9]).unwrap(), 0.0);
        let t1 = BoltzmannTarget::new(EnergyModel::Ising(l3), 1.0).unwrap();
        assert_eq!(t1.log_unnormalized(&[1; 9]).unwrap(), 18.0);
        let mut x = vec![1u8; 9];
        x[0] = 0;
        assert!(t1.log_unnormalized(&[1; 9]).unwrap() > t1.log_unnormalized(&x).unwrap());
        assert!(BoltzmannTarget::new(t1.model.clone(), f64::NAN).is_err());
    }

    #[test]
    fn minima_are_feasible() {
        for seed in 0..20 {
            let g = crate::graphs::GraphFamily::Ba {
                attachment: 2,
                min_nodes: 6,
                max_nodes: 10,
            }
            .sample(seed)
            .unwrap();
            for p in [CoProblem::Mis, CoProblem::Mds, CoProblem::MaxCl] {
                let opt = brute_force_co(p, &g, 1.0, 1.1, None).unwrap();
                for s in &opt.states {
                    assert!(is_feasible(p, &g, s.bits()));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn ising_global_flip_symmetry(idx in 0u64..(1 << 16)) {
            let l4 = IsingLattice2D::new(4, 1.3).unwrap();
            let s = BitState::from_index(idx, 16);
            prop_assert_eq!(l4.energy(s.bits()).unwrap(), l4.energy(s.flipped().bits()).unwrap());
        }

        #[test]
        fn relaxed_energy_matches_on_binary(idx in 0u64..(1 << 9), seed in 0u64..50) {
            let g = crate::graphs::GraphFamily::Ba { attachment: 2, min_nodes: 9, max_nodes: 9 }
                .sample(seed).unwrap();
            let s = BitState::from_index(idx, 9);
            let v: Vec<f64> = s.bits().iter().map(|&b| b as f64).collect();
            for p in [CoProblem::Mis, CoProblem::Mds, CoProblem::MaxCl, CoProblem::MaxCut] {
                let m = EnergyModel::Co(CoInstance::new(p, g.clone()));
                prop_assert!((m.energy(s.bits()).unwrap() - m.relaxed_energy(&v).unwrap()).abs() < 1e-12);
            }
        }
    }
}
