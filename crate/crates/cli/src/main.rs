use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sdds::energy::{CoProblem, EnergyModel, IsingLattice2D, DEFAULT_PENALTY_A, DEFAULT_PENALTY_B};
use sdds::graphs::GraphFamily;
use sdds::io::{parse_edge_list, read_graph, read_lattice, read_qubo};
use sdds::nets::Checkpoint;
use sdds::pipeline::dataset::write_dataset;
use sdds::pipeline::estimate::{estimate, EstimateMethod};
use sdds::pipeline::solve::{solve, SolveOptions};
use sdds::pipeline::{
    oracle_co, oracle_ising_graph, oracle_model, run_training, ProblemSpec, RunConfig, Trainer,
};
use sdds::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sdds",
    version,
    about = "Discrete diffusion samplers for binary Boltzmann targets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a graph dataset with a manifest.
    GenGraphs(GenGraphs),
    /// Train a sampler from a TOML run configuration.
    Train(Train),
    /// Sample solutions for every graph of a dataset.
    Solve(Solve),
    /// Estimate lattice observables with importance sampling or neural MCMC.
    Estimate(Estimate),
    /// Exact reference values by exhaustive enumeration.
    Oracle(Oracle),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Ba,
    Rb,
}

#[derive(Args)]
struct GenGraphs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long)]
    n_graphs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_nodes: Option<usize>,
    #[arg(long)]
    max_nodes: Option<usize>,
    /// Edges per new node of BA graphs.
    #[arg(long)]
    attachment: Option<usize>,
}

#[derive(Args)]
struct Train {
    #[arg(long, required_unless_present = "resume")]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` of the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct Solve {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory; defaults to the training dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    n_samples: usize,
    /// Decode the last step by conditional expectation.
    #[arg(long)]
    ce: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    step_factor: usize,
    /// Also report the exhaustive optimum of each graph.
    #[arg(long)]
    optimum: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Snis,
    Nmcmc,
}

#[derive(Args)]
struct Estimate {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 1000)]
    chunk: usize,
    #[arg(long, default_value_t = 256)]
    chains: usize,
    #[arg(long, default_value_t = 2000)]
    chain_steps: usize,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Clamp proposal probabilities to `[ε, 1 − ε]`.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Include enumerated reference values.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Oracle {
    /// Periodic ferromagnet of this side length.
    #[arg(long, group = "source")]
    ising_side: Option<usize>,
    /// Lattice description in TOML.
    #[arg(long, group = "source")]
    lattice: Option<PathBuf>,
    /// Weighted edge list read as `H = −Σ w σ_i σ_j`.
    #[arg(long, group = "source")]
    ising_graph: Option<PathBuf>,
    /// QUBO edge list.
    #[arg(long, group = "source")]
    qubo: Option<PathBuf>,
    /// Graph for a combinatorial problem; needs `--problem`.
    #[arg(long, group = "source", requires = "problem")]
    graph: Option<PathBuf>,
    #[arg(long)]
    problem: Option<CoProblem>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    coupling: f64,
    #[arg(long, default_value_t = DEFAULT_PENALTY_A)]
    penalty_a: f64,
    #[arg(long, default_value_t = DEFAULT_PENALTY_B)]
    penalty_b: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn gen_graphs(a: GenGraphs) -> Result<()> {
    let mut family = match a.family {
        Family::Ba => GraphFamily::ba_default(),
        Family::Rb => GraphFamily::rb_default(),
    };
    match &mut family {
        GraphFamily::Ba {
            attachment,
            min_nodes,
            max_nodes,
        } => {
            *attachment = a.attachment.unwrap_or(*attachment);
            *min_nodes = a.min_nodes.unwrap_or(*min_nodes);
            *max_nodes = a.max_nodes.unwrap_or(*max_nodes);
        }
        GraphFamily::Rb {
            min_nodes,
            max_nodes,
            ..
        } => {
            if a.attachment.is_some() {
                return Err(Error::InvalidConfig(
                    "--attachment applies to BA graphs only".into(),
                ));
            }
            *min_nodes = a.min_nodes.unwrap_or(*min_nodes);
            *max_nodes = a.max_nodes.unwrap_or(*max_nodes);
        }
    }
    let manifest = write_dataset(&a.out, &family, a.n_graphs, a.seed)?;
    emit(&manifest, None)
}

fn train(a: Train) -> Result<()> {
    let (mut trainer, resumed) = match (&a.resume, &a.config) {
        (Some(ck), _) => (Trainer::from_checkpoint(&Checkpoint::load(ck)?)?, true),
        (None, Some(cfg)) => (Trainer::new(RunConfig::load(cfg)?)?, false),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let out = a
        .out
        .or_else(|| trainer.config().out_dir.clone())
        .ok_or_else(|| Error::InvalidConfig("no output directory (set out_dir or --out)".into()))?;
    let outcome = run_training(&mut trainer, &out, resumed)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        checkpoint: &'a Path,
        epochs: u64,
        last: Option<&'a sdds::pipeline::EpochMetrics>,
    }
    emit(
        &Summary {
            checkpoint: &outcome.checkpoint,
            epochs: trainer.epoch(),
            last: outcome.metrics.last(),
        },
        None,
    )
}

fn solve_cmd(a: Solve) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let trainer = Trainer::from_checkpoint(&ck)?;
    let cfg = trainer.config();
    let mut spec = cfg.problem.clone();
    let ProblemSpec::Co {
        problem, dataset, ..
    } = &mut spec
    else {
        return Err(Error::InvalidConfig(
            "checkpoint was not trained on a graph problem".into(),
        ));
    };
    if let Some(d) = a.dataset {
        *dataset = d;
    }
    let problem = *problem;
    let models = spec.models()?;
    let opts = SolveOptions {
        n_samples: a.n_samples,
        conditional_expectation: a.ce,
        seed: a.seed,
        step_factor: a.step_factor,
        with_optimum: a.optimum,
    };
    let report = solve(
        trainer.network(),
        trainer.theta(),
        cfg.n_steps,
        problem,
        &models,
        &opts,
    )?;
    emit(&report, a.out.as_deref())
}

fn estimate_cmd(a: Estimate) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let trainer = Trainer::from_checkpoint(&ck)?;
    let cfg = trainer.config();
    let beta = cfg
        .problem
        .beta()
        .ok_or_else(|| Error::InvalidConfig("estimate needs a lattice checkpoint".into()))?;
    let model = cfg.problem.lattice_model()?.expect("lattice problem");
    let method = match a.method {
        Method::Snis => EstimateMethod::Snis {
            samples: a.samples,
            chunk: a.chunk,
        },
        Method::Nmcmc => EstimateMethod::Nmcmc {
            chains: a.chains,
            steps: a.chain_steps,
        },
    };
    let report = estimate(
        trainer.network(),
        trainer.theta(),
        model,
        beta,
        cfg.n_steps,
        &method,
        &a.seeds,
        a.epsilon,
        a.exact,
    )?;
    emit(&report, a.out.as_deref())
}

fn oracle_cmd(a: Oracle) -> Result<()> {
    let need_beta = || {
        a.beta
            .ok_or_else(|| Error::InvalidConfig("--beta is required".into()))
    };
    let report = if let Some(side) = a.ising_side {
        oracle_model(
            EnergyModel::Ising(IsingLattice2D::new(side, a.coupling)?),
            need_beta()?,
        )?
    } else if let Some(p) = &a.lattice {
        oracle_model(read_lattice(p)?.to_model()?, need_beta()?)?
    } else if let Some(p) = &a.ising_graph {
        oracle_ising_graph(&parse_edge_list(&fs::read_to_string(p)?)?, need_beta()?)?
    } else if let Some(p) = &a.qubo {
        oracle_model(
            EnergyModel::Qubo(read_qubo(p, a.penalty_a, a.penalty_b)?),
            need_beta()?,
        )?
    } else if let Some(p) = &a.graph {
        oracle_co(
            a.problem.expect("clap requires it"),
            &read_graph(p)?,
            a.penalty_a,
            a.penalty_b,
        )?
    } else {
        return Err(Error::InvalidConfig(
            "give one of --ising-side, --lattice, --ising-graph, --qubo, --graph".into(),
        ));
    };
    emit(&report, a.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenGraphs(a) => gen_graphs(a),
        Command::Train(a) => train(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Oracle(a) => oracle_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
