//! Graph datasets on disk: one edge-list file per graph plus `manifest.json`.

use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{Graph, GraphFamily};
use crate::io::{read_graph, write_graph};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub family: GraphFamily,
    pub seed: u64,
    pub files: Vec<String>,
    /// Per-graph generator seeds, in file order.
    pub graph_seeds: Vec<u64>,
}

/// Samples `n_graphs` graphs; graph `k` depends only on `seed` and `k`.
pub fn generate_graphs(
    family: &GraphFamily,
    n_graphs: usize,
    seed: u64,
) -> Result<(Vec<Graph>, Vec<u64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n_graphs).map(|_| rng.next_u64()).collect();
    let graphs = seeds
        .iter()
        .map(|&s| family.sample(s))
        .collect::<Result<Vec<_>>>()?;
    Ok((graphs, seeds))
}

pub fn write_dataset(
    dir: &Path,
    family: &GraphFamily,
    n_graphs: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    let (graphs, graph_seeds) = generate_graphs(family, n_graphs, seed)?;
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(graphs.len());
    for (k, g) in graphs.iter().enumerate() {
        let name = format!("graph_{k:05}.txt");
        write_graph(&dir.join(&name), g)?;
        files.push(name);
    }
    let manifest = DatasetManifest {
        family: family.clone(),
        seed,
        files,
        graph_seeds,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(dir.join(MANIFEST), text)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST))
        .map_err(|e| Error::InvalidConfig(format!("dataset {}: {e}", dir.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_dataset(dir: &Path) -> Result<Vec<Graph>> {
    let manifest = read_manifest(dir)?;
    if manifest.files.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "dataset {} is empty",
            dir.display()
        )));
    }
    manifest
        .files
        .iter()
        .map(|f| read_graph(&dir.join(f)))
        .collect()
}
