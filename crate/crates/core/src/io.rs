//! Text formats for problem instances.
//!
//! Graphs and QUBOs use a whitespace edge list: a `N M` header followed by
//! `M` lines of `i j w` with 0-based indices (the weight is optional for
//! graphs). Lines starting with `#` are ignored. Lattice models are stored
//! as small TOML documents.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{CouplingDistribution, EaInstance, EnergyModel, IsingLattice2D, QuboInstance};
use crate::error::{Error, Result};
use crate::graphs::Graph;

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeList {
    pub n_nodes: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

pub fn parse_edge_list(text: &str) -> Result<EdgeList> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty edge list".into()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(Error::Parse(format!("header '{header}' is not 'N M'")));
    }
    let n_nodes = parse_num::<usize>(head[0], 1)?;
    let n_entries = parse_num::<usize>(head[1], 1)?;

    let mut entries = Vec::with_capacity(n_entries);
    for (line_no, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&f.len()) {
            return Err(Error::Parse(format!("line {line_no}: expected 'i j [w]'")));
        }
        let i = parse_num::<usize>(f[0], line_no)?;
        let j = parse_num::<usize>(f[1], line_no)?;
        let w = match f.get(2) {
            Some(s) => parse_num::<f64>(s, line_no)?,
            None => 1.0,
        };
        if i >= n_nodes || j >= n_nodes {
            return Err(Error::Parse(format!(
                "line {line_no}: index out of range for N = {n_nodes}"
            )));
        }
        entries.push((i, j, w));
    }
    if entries.len() != n_entries {
        return Err(Error::Parse(format!(
            "header declares {n_entries} entries, found {}",
            entries.len()
        )));
    }
    Ok(EdgeList { n_nodes, entries })
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse '{s}'")))
}

pub fn graph_from_edge_list(list: &EdgeList) -> Result<Graph> {
    Graph::new(list.n_nodes, list.entries.iter().map(|&(i, j, _)| (i, j)))
}

pub fn format_graph(graph: &Graph) -> String {
    let mut out = format!("{} {}\n", graph.n_nodes(), graph.n_edges());
    for &(i, j) in graph.edges() {
        writeln!(out, "{i} {j} 1").expect("writing to a String");
    }
    out
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    graph_from_edge_list(&parse_edge_list(&fs::read_to_string(path)?)?)
}

pub fn write_graph(path: &Path, graph: &Graph) -> Result<()> {
    Ok(fs::write(path, format_graph(graph))?)
}

pub fn read_qubo(path: &Path, penalty_a: f64, penalty_b: f64) -> Result<QuboInstance> {
    let list = parse_edge_list(&fs::read_to_string(path)?)?;
    QuboInstance::from_terms(list.n_nodes, list.entries, penalty_a, penalty_b)
}

pub fn format_qubo(q: &QuboInstance) -> String {
    let terms: Vec<_> = q.terms().collect();
    let mut out = format!("{} {}\n", q.n(), terms.len());
    for (i, j, w) in terms {
        writeln!(out, "{i} {j} {w:?}").expect("writing to a String");
    }
    out
}

/// Serialized lattice instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeFile {
    Ising {
        side: usize,
        #[serde(default = "unit_coupling")]
        coupling: f64,
    },
    /// Either an explicit coupling list or a seed plus distribution to draw it.
    Ea {
        side: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        distribution: Option<CouplingDistribution>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        couplings: Option<Vec<f64>>,
    },
}

fn unit_coupling() -> f64 {
    1.0
}

impl LatticeFile {
    pub fn to_model(&self) -> Result<EnergyModel> {
        match self {
            LatticeFile::Ising { side, coupling } => {
                Ok(EnergyModel::Ising(IsingLattice2D::new(*side, *coupling)?))
            }
            LatticeFile::Ea {
                side,
                seed,
                distribution,
                couplings,
            } => {
                let inst = match (couplings, seed) {
                    (Some(c), _) => EaInstance::from_couplings(*side, c.clone())?,
                    (None, Some(s)) => EaInstance::generate(
                        *side,
                        distribution.unwrap_or(CouplingDistribution::Normal),
                        *s,
                    )?,
                    (None, None) => {
                        return Err(Error::InvalidConfig(
                            "EA instance needs either couplings or a seed".into(),
                        ))
                    }
                };
                Ok(EnergyModel::EdwardsAnderson(inst))
            }
        }
    }

    pub fn from_ea(inst: &EaInstance) -> Self {
        LatticeFile::Ea {
            side: inst.side(),
            seed: inst.seed(),
            distribution: None,
            couplings: Some(inst.couplings().to_vec()),
        }
    }
}

pub fn read_lattice(path: &Path) -> Result<LatticeFile> {
    toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_lattice(path: &Path, file: &LatticeFile) -> Result<()> {
    let text = toml::to_string(file).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(fs::write(path, text)?)
}
