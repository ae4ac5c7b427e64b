//! Time-conditioned policy networks with an optional value head.
//!
//! Both variants read `σ = 2X − 1` and the scalar time `t/T`. The MLP
//! acts on the whole configuration, so its size is tied to `N`. The GNN
//! works per node on the interaction graph and can be conditioned on
//! graphs of any size.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffusion::Policy;
use crate::error::{check_dim, Error, Result};
use crate::graphs::Graph;
use crate::nets::tape::{clipped_sigmoid, AggPlan, Tape, Var};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    Mlp {
        n_bits: usize,
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(default = "default_mlp_layers")]
        layers: usize,
        #[serde(default)]
        value_head: bool,
    },
    Gnn {
        #[serde(default = "default_hidden")]
        hidden: usize,
        /// Message-passing steps.
        #[serde(default = "default_gnn_layers")]
        layers: usize,
        #[serde(default)]
        value_head: bool,
    },
}

fn default_hidden() -> usize {
    64
}

fn default_mlp_layers() -> usize {
    2
}

fn default_gnn_layers() -> usize {
    3
}

impl Architecture {
    pub fn has_value_head(&self) -> bool {
        match self {
            Architecture::Mlp { value_head, .. } | Architecture::Gnn { value_head, .. } => {
                *value_head
            }
        }
    }

    pub fn with_value_head(mut self, on: bool) -> Self {
        match &mut self {
            Architecture::Mlp { value_head, .. } | Architecture::Gnn { value_head, .. } => {
                *value_head = on
            }
        }
        self
    }

    pub fn is_conditional(&self) -> bool {
        matches!(self, Architecture::Gnn { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let (hidden, layers) = match self {
            Architecture::Mlp {
                n_bits,
                hidden,
                layers,
                ..
            } => {
                if *n_bits == 0 {
                    return Err(Error::InvalidConfig("MLP needs n_bits ≥ 1".into()));
                }
                (*hidden, *layers)
            }
            Architecture::Gnn { hidden, layers, .. } => (*hidden, *layers),
        };
        if hidden == 0 || layers == 0 {
            return Err(Error::InvalidConfig(
                "network needs at least one hidden layer of width ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    FanIn,
    Zero,
}

#[derive(Clone, Copy, Debug)]
struct Block {
    offset: usize,
    rows: usize,
    cols: usize,
    init: Init,
}

/// Weight and bias of one affine layer.
#[derive(Clone, Copy, Debug)]
struct Dense {
    w: Block,
    b: Block,
}

#[derive(Default)]
struct LayoutBuilder {
    blocks: Vec<Block>,
    size: usize,
}

impl LayoutBuilder {
    fn dense(&mut self, fan_in: usize, fan_out: usize, init: Init) -> Dense {
        let w = self.block(fan_in, fan_out, init);
        let b = self.block(1, fan_out, Init::Zero);
        Dense { w, b }
    }

    fn block(&mut self, rows: usize, cols: usize, init: Init) -> Block {
        let b = Block {
            offset: self.size,
            rows,
            cols,
            init,
        };
        self.size += rows * cols;
        self.blocks.push(b);
        b
    }
}

#[derive(Clone, Debug)]
struct MessageLayer {
    self_w: Block,
    msg_w: Block,
    bias: Block,
}

#[derive(Clone, Debug)]
enum Body {
    Mlp {
        n_bits: usize,
        trunk: Vec<Dense>,
        out: Dense,
    },
    Gnn {
        embed: Dense,
        layers: Vec<MessageLayer>,
        head: [Dense; 3],
    },
}

/// A network architecture with its parameter layout.
#[derive(Clone, Debug)]
pub struct Network {
    arch: Architecture,
    body: Body,
    value: Option<[Dense; 3]>,
    blocks: Vec<Block>,
    n_params: usize,
}

/// Tape handles of a forward pass.
pub struct Outputs {
    /// `rows × N`
    pub logits: Var,
    /// `rows × 1`
    pub value: Option<Var>,
}

impl Network {
    pub fn new(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let mut lb = LayoutBuilder::default();
        let (body, hidden) = match &arch {
            Architecture::Mlp {
                n_bits,
                hidden,
                layers,
                ..
            } => {
                let mut trunk = vec![lb.dense(n_bits + 1, *hidden, Init::FanIn)];
                for _ in 1..*layers {
                    trunk.push(lb.dense(*hidden, *hidden, Init::FanIn));
                }
                let out = lb.dense(*hidden, *n_bits, Init::Zero);
                (
                    Body::Mlp {
                        n_bits: *n_bits,
                        trunk,
                        out,
                    },
                    *hidden,
                )
            }
            Architecture::Gnn { hidden, layers, .. } => {
                let h = *hidden;
                let embed = lb.dense(2, h, Init::FanIn);
                let layers = (0..*layers)
                    .map(|_| MessageLayer {
                        self_w: lb.block(h, h, Init::FanIn),
                        msg_w: lb.block(h, h, Init::FanIn),
                        bias: lb.block(1, h, Init::Zero),
                    })
                    .collect();
                let head = [
                    lb.dense(h, h, Init::FanIn),
                    lb.dense(h, h, Init::FanIn),
                    lb.dense(h, 1, Init::Zero),
                ];
                (
                    Body::Gnn {
                        embed,
                        layers,
                        head,
                    },
                    h,
                )
            }
        };
        let value = arch.has_value_head().then(|| {
            [
                lb.dense(hidden, hidden, Init::FanIn),
                lb.dense(hidden, hidden, Init::FanIn),
                lb.dense(hidden, 1, Init::Zero),
            ]
        });
        Ok(Self {
            arch,
            body,
            value,
            n_params: lb.size,
            blocks: lb.blocks,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Fan-in scaled normal weights, zero biases and zero output layers.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; self.n_params];
        for b in &self.blocks {
            if b.init == Init::FanIn {
                let d = Normal::new(0.0, 1.0 / (b.rows as f64).sqrt()).expect("valid normal");
                for v in &mut theta[b.offset..b.offset + b.rows * b.cols] {
                    *v = d.sample(&mut rng);
                }
            }
        }
        theta
    }

    /// Like [`Network::init_params`] but without zeroed output layers, so
    /// every parameter influences the outputs. Used for gradient checks.
    pub fn random_params(&self, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; self.n_params];
        for b in &self.blocks {
            let d = Normal::new(0.0, scale / (b.rows as f64).sqrt()).expect("valid normal");
            for v in &mut theta[b.offset..b.offset + b.rows * b.cols] {
                *v = d.sample(&mut rng);
            }
        }
        theta
    }

    /// Number of bits the network acts on, given the conditioning graph.
    pub fn n_bits(&self, graph: Option<&Graph>) -> Result<usize> {
        match (&self.body, graph) {
            (Body::Mlp { n_bits, .. }, _) => Ok(*n_bits),
            (Body::Gnn { .. }, Some(g)) => Ok(g.n_nodes()),
            (Body::Gnn { .. }, None) => Err(Error::InvalidConfig(
                "graph network needs a conditioning graph".into(),
            )),
        }
    }

    /// Records the forward pass for a row-major batch of states `X_t` with
    /// per-row times `t/T`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        theta: &[f64],
        states: &[u8],
        times: &[f64],
        graph: Option<&Graph>,
        with_value: bool,
    ) -> Result<Outputs> {
        check_dim(self.n_params, theta.len())?;
        let n = self.n_bits(graph)?;
        let rows = times.len();
        check_dim(rows * n, states.len())?;
        if with_value && self.value.is_none() {
            return Err(Error::InvalidConfig("network has no value head".into()));
        }
        let dense = |tape: &mut Tape, x: Var, d: &Dense| {
            let w = tape.param(theta, d.w.offset, d.w.rows, d.w.cols);
            let b = tape.param(theta, d.b.offset, d.b.rows, d.b.cols);
            let y = tape.matmul(x, w);
            tape.add_row(y, b)
        };

        let (logits, features) = match &self.body {
            Body::Mlp { trunk, out, .. } => {
                let mut input = Array2::zeros((rows, n + 1));
                for (r, mut row) in input.rows_mut().into_iter().enumerate() {
                    for i in 0..n {
                        row[i] = 2.0 * states[r * n + i] as f64 - 1.0;
                    }
                    row[n] = times[r];
                }
                let mut h = tape.constant(input);
                for d in trunk {
                    let a = dense(tape, h, d);
                    let a = tape.silu(a);
                    h = tape.layer_norm(a);
                }
                (dense(tape, h, out), h)
            }
            Body::Gnn {
                embed,
                layers,
                head,
            } => {
                let graph = graph.expect("checked by n_bits");
                let plan = AggPlan::new(graph);
                let mut input = Array2::zeros((rows * n, 2));
                for (k, mut row) in input.rows_mut().into_iter().enumerate() {
                    row[0] = 2.0 * states[k] as f64 - 1.0;
                    row[1] = times[k / n.max(1)];
                }
                let x = tape.constant(input);
                let mut h = dense(tape, x, embed);
                for l in layers {
                    let ws = tape.param(theta, l.self_w.offset, l.self_w.rows, l.self_w.cols);
                    let wm = tape.param(theta, l.msg_w.offset, l.msg_w.rows, l.msg_w.cols);
                    let b = tape.param(theta, l.bias.offset, l.bias.rows, l.bias.cols);
                    let own = tape.matmul(h, ws);
                    let agg = tape.aggregate(h, &plan);
                    let msg = tape.matmul(agg, wm);
                    let pre = tape.add(own, msg);
                    let pre = tape.add_row(pre, b);
                    let act = tape.silu(pre);
                    let norm = tape.layer_norm(act);
                    h = tape.add(h, norm);
                }
                let a = dense(tape, h, &head[0]);
                let a = tape.silu(a);
                let a = dense(tape, a, &head[1]);
                let a = tape.silu(a);
                let node_logits = dense(tape, a, &head[2]);
                let logits = tape.reshape(node_logits, rows, n);
                let readout = tape.group_sum(h, n, 1.0 / (n as f64).sqrt());
                (logits, readout)
            }
        };

        let value = match (&self.value, with_value) {
            (Some(v), true) => {
                let a = dense(tape, features, &v[0]);
                let a = tape.silu(a);
                let a = dense(tape, a, &v[1]);
                let a = tape.silu(a);
                Some(dense(tape, a, &v[2]))
            }
            _ => None,
        };

        if tape.value(logits).iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("policy logits".into()));
        }
        Ok(Outputs { logits, value })
    }

    /// Clipped per-bit probabilities `q̂`, row-major.
    pub fn probs(
        &self,
        theta: &[f64],
        states: &[u8],
        times: &[f64],
        graph: Option<&Graph>,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, theta, states, times, graph, false)?;
        Ok(tape
            .value(out.logits)
            .iter()
            .map(|&z| clipped_sigmoid(z).0)
            .collect())
    }

    /// `V(X_t)` per row.
    pub fn values(
        &self,
        theta: &[f64],
        states: &[u8],
        times: &[f64],
        graph: Option<&Graph>,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, theta, states, times, graph, true)?;
        let v = tape.value(out.value.expect("requested value"));
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("value head".into()));
        }
        Ok(v.iter().copied().collect())
    }

    pub fn policy<'a>(
        &'a self,
        theta: &'a [f64],
        graph: Option<&'a Graph>,
    ) -> Result<NetworkPolicy<'a>> {
        let n_bits = self.n_bits(graph)?;
        Ok(NetworkPolicy {
            net: self,
            theta,
            graph,
            n_bits,
        })
    }
}

/// A network with fixed parameters and conditioning graph.
pub struct NetworkPolicy<'a> {
    net: &'a Network,
    theta: &'a [f64],
    graph: Option<&'a Graph>,
    n_bits: usize,
}

impl Policy for NetworkPolicy<'_> {
    fn n_bits(&self) -> usize {
        self.n_bits
    }

    fn probs(&self, states: &[u8], t: usize, n_steps: usize) -> Result<Vec<f64>> {
        let rows = states.len() / self.n_bits.max(1);
        let times = vec![t as f64 / n_steps as f64; rows];
        self.net.probs(self.theta, states, &times, self.graph)
    }
}
