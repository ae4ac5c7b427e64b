//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every intermediate value. Parameters are slices of a
//! flat vector `θ`; [`Tape::backward`] returns `∂root/∂θ` in the same
//! layout. Only the operations the policy networks and training losses need
//! are supported.

use std::rc::Rc;

use ndarray::{Array2, Axis, Zip};

use crate::diffusion::PROB_CLIP;
use crate::graphs::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Neighbor lists with `deg^{−1/2}` weights, shared by all aggregation
/// nodes of one forward pass.
#[derive(Debug)]
pub struct AggPlan {
    n_nodes: usize,
    neighbors: Vec<Vec<usize>>,
    scale: Vec<f64>,
}

impl AggPlan {
    pub fn new(graph: &Graph) -> Rc<Self> {
        let n = graph.n_nodes();
        let neighbors: Vec<Vec<usize>> = (0..n).map(|i| graph.neighbors(i).to_vec()).collect();
        let scale = neighbors
            .iter()
            .map(|nb| {
                if nb.is_empty() {
                    0.0
                } else {
                    1.0 / (nb.len() as f64).sqrt()
                }
            })
            .collect();
        Rc::new(Self {
            n_nodes: n,
            neighbors,
            scale,
        })
    }
}

enum Op {
    Const,
    Param {
        offset: usize,
    },
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    Tanh(Var),
    LayerNorm {
        x: Var,
        inv_std: Vec<f64>,
    },
    Aggregate {
        x: Var,
        plan: Rc<AggPlan>,
    },
    GroupSum {
        x: Var,
        group: usize,
        scale: f64,
    },
    Reshape(Var),
    SumAll(Var),
    Dot {
        x: Var,
        weights: Vec<f64>,
    },
    BernoulliLogProb {
        logits: Var,
        bits: Vec<u8>,
    },
    BernoulliEntropy(Var),
    PpoClip {
        logq: Var,
        ratio: Vec<f64>,
        adv: Vec<f64>,
        active: Vec<bool>,
    },
    HalfSqErr {
        v: Var,
        target: Vec<f64>,
    },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Clipped Bernoulli parameter of a logit. The flag is false when the value
/// was clipped, in which case its derivative is zero.
#[inline]
pub fn clipped_sigmoid(z: f64) -> (f64, bool) {
    let q = sigmoid(z);
    if q < PROB_CLIP {
        (PROB_CLIP, false)
    } else if q > 1.0 - PROB_CLIP {
        (1.0 - PROB_CLIP, false)
    } else {
        (q, true)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of stored activation elements, i.e. every recorded value
    /// except the parameters themselves.
    pub fn activation_elements(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| !matches!(n.op, Op::Param { .. }))
            .map(|n| n.value.len())
            .sum()
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Const)
    }

    /// `rows × cols` block of `θ` starting at `offset`, row-major.
    pub fn param(&mut self, theta: &[f64], offset: usize, rows: usize, cols: usize) -> Var {
        let value =
            Array2::from_shape_vec((rows, cols), theta[offset..offset + rows * cols].to_vec())
                .expect("parameter block shape");
        self.push(value, Op::Param { offset })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// Adds a `1 × m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let v = self.value(a) + self.value(bias);
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * sigmoid(x));
        self.push(v, Op::Silu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// Row-wise standardization without affine parameters.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = x.ncols() as f64;
        let mut out = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in out.rows_mut() {
            let mean = row.sum() / m;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / m;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|v| v * inv);
            inv_std.push(inv);
        }
        self.push(out, Op::LayerNorm { x: a, inv_std })
    }

    /// `out_i = deg_i^{−1/2} Σ_{j∈N(i)} x_j`, applied independently to each
    /// consecutive block of `n_nodes` rows.
    pub fn aggregate(&mut self, a: Var, plan: &Rc<AggPlan>) -> Var {
        let x = self.value(a);
        let n = plan.n_nodes;
        assert_eq!(x.nrows() % n.max(1), 0, "aggregate rows");
        let mut out = Array2::zeros(x.raw_dim());
        for b in 0..x.nrows() / n.max(1) {
            let base = b * n;
            for i in 0..n {
                let mut row = out.row_mut(base + i);
                for &j in &plan.neighbors[i] {
                    row += &x.row(base + j);
                }
                row *= plan.scale[i];
            }
        }
        self.push(
            out,
            Op::Aggregate {
                x: a,
                plan: Rc::clone(plan),
            },
        )
    }

    /// Sums consecutive groups of `group` rows, times `scale`.
    pub fn group_sum(&mut self, a: Var, group: usize, scale: f64) -> Var {
        let x = self.value(a);
        assert_eq!(x.nrows() % group, 0, "group_sum rows");
        let mut out = Array2::zeros((x.nrows() / group, x.ncols()));
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            for r in 0..group {
                row += &x.row(k * group + r);
            }
            row *= scale;
        }
        self.push(out, Op::GroupSum { x: a, group, scale })
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self
            .value(a)
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((rows, cols))
            .expect("reshape preserves size");
        self.push(v, Op::Reshape(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a))
    }

    /// `Σ_r w_r x_r` for a column `x`.
    pub fn dot(&mut self, a: Var, weights: Vec<f64>) -> Var {
        let x = self.value(a);
        assert_eq!(x.len(), weights.len(), "dot length");
        let s = x.iter().zip(&weights).map(|(x, w)| x * w).sum();
        self.push(Array2::from_elem((1, 1), s), Op::Dot { x: a, weights })
    }

    /// Per-row `log Π_i Bernoulli(x_i; clip(σ(z_i)))`, returned as a column.
    pub fn bernoulli_logprob(&mut self, logits: Var, bits: Vec<u8>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.len(), bits.len(), "bernoulli_logprob size");
        let n = z.ncols();
        let zs = z.as_standard_layout();
        let out: Vec<f64> = zs
            .as_slice()
            .expect("standard layout")
            .chunks(n)
            .zip(bits.chunks(n))
            .map(|(zr, xr)| {
                zr.iter()
                    .zip(xr)
                    .map(|(&z, &x)| {
                        let q = clipped_sigmoid(z).0;
                        if x == 1 {
                            q.ln()
                        } else {
                            (1.0 - q).ln()
                        }
                    })
                    .sum()
            })
            .collect();
        let rows = out.len();
        self.push(
            Array2::from_shape_vec((rows, 1), out).expect("column"),
            Op::BernoulliLogProb { logits, bits },
        )
    }

    /// Per-row entropy of the clipped product Bernoulli, as a column.
    pub fn bernoulli_entropy(&mut self, logits: Var) -> Var {
        let z = self.value(logits);
        let out: Vec<f64> = z
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .map(|&z| {
                        let q = clipped_sigmoid(z).0;
                        -(q * q.ln() + (1.0 - q) * (1.0 - q).ln())
                    })
                    .sum()
            })
            .collect();
        let rows = out.len();
        self.push(
            Array2::from_shape_vec((rows, 1), out).expect("column"),
            Op::BernoulliEntropy(logits),
        )
    }

    /// `min(r Â, clip(r, 1−κ, 1+κ) Â)` with `r = exp(logq − old)`, per row.
    pub fn ppo_clip(&mut self, logq: Var, old: &[f64], adv: &[f64], kappa: f64) -> Var {
        let lq = self.value(logq);
        assert_eq!(lq.len(), old.len(), "ppo_clip size");
        let mut out = Vec::with_capacity(old.len());
        let mut ratio = Vec::with_capacity(old.len());
        let mut active = Vec::with_capacity(old.len());
        for ((&l, &o), &a) in lq.iter().zip(old).zip(adv) {
            let r = (l - o).exp();
            let u = r * a;
            let c = r.clamp(1.0 - kappa, 1.0 + kappa) * a;
            out.push(u.min(c));
            ratio.push(r);
            active.push(u <= c);
        }
        let rows = out.len();
        self.push(
            Array2::from_shape_vec((rows, 1), out).expect("column"),
            Op::PpoClip {
                logq,
                ratio,
                adv: adv.to_vec(),
                active,
            },
        )
    }

    /// `½ (v − G)²` per row.
    pub fn half_sq_err(&mut self, v: Var, target: &[f64]) -> Var {
        let x = self.value(v);
        assert_eq!(x.len(), target.len(), "half_sq_err size");
        let out: Vec<f64> = x
            .iter()
            .zip(target)
            .map(|(v, g)| 0.5 * (v - g) * (v - g))
            .collect();
        let rows = out.len();
        self.push(
            Array2::from_shape_vec((rows, 1), out).expect("column"),
            Op::HalfSqErr {
                v,
                target: target.to_vec(),
            },
        )
    }

    /// Gradient of the scalar `root` with respect to `θ` (length `n_params`).
    pub fn backward(&self, root: Var, n_params: usize) -> Vec<f64> {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        self.backward_seeded(root, Array2::from_elem((1, 1), 1.0), n_params)
    }

    /// Vector-Jacobian product `seedᵀ ∂root/∂θ`.
    pub fn backward_seeded(&self, root: Var, seed: Array2<f64>, n_params: usize) -> Vec<f64> {
        assert_eq!(seed.raw_dim(), self.value(root).raw_dim(), "seed shape");
        let mut grads: Vec<Option<Array2<f64>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(seed);
        let mut theta_grad = vec![0.0; n_params];

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Const => {}
                Op::Param { offset } => {
                    let gs = g.as_standard_layout();
                    let flat = gs.as_slice().expect("standard layout");
                    for (t, d) in theta_grad[*offset..*offset + flat.len()]
                        .iter_mut()
                        .zip(flat)
                    {
                        *t += d;
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::Silu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|g, &x| {
                        let s = sigmoid(x);
                        *g *= s * (1.0 + x * (1.0 - s));
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|g, &y| *g *= 1.0 - y * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::LayerNorm { x, inv_std } => {
                    let y = &node.value;
                    let m = y.ncols() as f64;
                    let mut gx = g;
                    for ((mut gr, yr), inv) in gx.rows_mut().into_iter().zip(y.rows()).zip(inv_std)
                    {
                        let mean_g = gr.sum() / m;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / m;
                        Zip::from(&mut gr)
                            .and(&yr)
                            .for_each(|g, &y| *g = inv * (*g - mean_g - y * mean_gy));
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Aggregate { x, plan } => {
                    let n = plan.n_nodes;
                    let mut gx = Array2::zeros(g.raw_dim());
                    for b in 0..g.nrows() / n.max(1) {
                        let base = b * n;
                        for i in 0..n {
                            let gi = g.row(base + i);
                            for &j in &plan.neighbors[i] {
                                gx.row_mut(base + j).scaled_add(plan.scale[i], &gi);
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::GroupSum { x, group, scale } => {
                    let rows = self.value(*x).nrows();
                    let mut gx = Array2::zeros((rows, g.ncols()));
                    for (r, mut row) in gx.rows_mut().into_iter().enumerate() {
                        row.scaled_add(*scale, &g.row(r / group));
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).raw_dim();
                    let ga = g
                        .as_standard_layout()
                        .into_owned()
                        .into_shape_with_order(shape)
                        .expect("reshape back");
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let s = g[[0, 0]];
                    accumulate(
                        &mut grads,
                        *a,
                        Array2::from_elem(self.value(*a).raw_dim(), s),
                    );
                }
                Op::Dot { x, weights } => {
                    let s = g[[0, 0]];
                    let shape = self.value(*x).raw_dim();
                    let gx = Array2::from_shape_vec(shape, weights.iter().map(|w| w * s).collect())
                        .expect("dot shape");
                    accumulate(&mut grads, *x, gx);
                }
                Op::BernoulliLogProb { logits, bits } => {
                    let z = self.value(*logits);
                    let n = z.ncols();
                    let mut gz = Array2::zeros(z.raw_dim());
                    for (r, mut row) in gz.rows_mut().into_iter().enumerate() {
                        let gr = g[[r, 0]];
                        for (c, out) in row.iter_mut().enumerate() {
                            let (q, live) = clipped_sigmoid(z[[r, c]]);
                            if live {
                                *out = gr * (bits[r * n + c] as f64 - q);
                            }
                        }
                    }
                    accumulate(&mut grads, *logits, gz);
                }
                Op::BernoulliEntropy(logits) => {
                    let z = self.value(*logits);
                    let mut gz = Array2::zeros(z.raw_dim());
                    for (r, mut row) in gz.rows_mut().into_iter().enumerate() {
                        let gr = g[[r, 0]];
                        for (c, out) in row.iter_mut().enumerate() {
                            let zz = z[[r, c]];
                            let (q, live) = clipped_sigmoid(zz);
                            if live {
                                *out = -gr * zz * q * (1.0 - q);
                            }
                        }
                    }
                    accumulate(&mut grads, *logits, gz);
                }
                Op::PpoClip {
                    logq,
                    ratio,
                    adv,
                    active,
                } => {
                    let gl: Vec<f64> = (0..ratio.len())
                        .map(|r| {
                            if active[r] {
                                g[[r, 0]] * ratio[r] * adv[r]
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let shape = self.value(*logq).raw_dim();
                    accumulate(
                        &mut grads,
                        *logq,
                        Array2::from_shape_vec(shape, gl).expect("column"),
                    );
                }
                Op::HalfSqErr { v, target } => {
                    let x = self.value(*v);
                    let gv: Vec<f64> = x
                        .iter()
                        .zip(target)
                        .enumerate()
                        .map(|(r, (x, t))| g[[r, 0]] * (x - t))
                        .collect();
                    accumulate(
                        &mut grads,
                        *v,
                        Array2::from_shape_vec(x.raw_dim(), gv).expect("column"),
                    );
                }
            }
        }
        theta_grad
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Central differences of `f` at `theta`.
    fn numeric_grad(theta: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-5;
        let mut th = theta.to_vec();
        (0..theta.len())
            .map(|i| {
                th[i] = theta[i] + h;
                let up = f(&th);
                th[i] = theta[i] - h;
                let down = f(&th);
                th[i] = theta[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    fn check(theta: &[f64], build: &dyn Fn(&mut Tape, &[f64]) -> Var) {
        let mut tape = Tape::new();
        let root = build(&mut tape, theta);
        let analytic = tape.backward(root, theta.len());
        let numeric = numeric_grad(theta, &|th| {
            let mut t = Tape::new();
            let r = build(&mut t, th);
            t.scalar(r)
        });
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn sum_of_squares() {
        let theta = vec![0.5, -1.5, 2.0];
        let mut tape = Tape::new();
        let p = tape.param(&theta, 0, 1, 3);
        let sq = tape.mul(p, p);
        let s = tape.sum_all(sq);
        assert_eq!(tape.backward(s, 3), vec![1.0, -3.0, 4.0]);
    }

    #[test]
    fn dense_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta = rand_vec(&mut rng, 3 * 4 + 4 + 4);
        let x = Array2::from_shape_vec((5, 3), rand_vec(&mut rng, 15)).unwrap();
        let w = rand_vec(&mut rng, 5);
        check(&theta, &|t, th| {
            let xi = t.constant(x.clone());
            let wm = t.param(th, 0, 3, 4);
            let b = t.param(th, 12, 1, 4);
            let h = t.matmul(xi, wm);
            let h = t.add_row(h, b);
            let a = t.silu(h);
            let c = t.tanh(h);
            let m = t.mul(a, c);
            let m = t.add(m, a);
            let n = t.layer_norm(m);
            let s = t.scale(n, 0.7);
            let v = t.param(th, 16, 4, 1);
            let col = t.matmul(s, v);
            t.dot(col, w.clone())
        });
    }

    #[test]
    fn graph_ops() {
        let g = Graph::new(4, [(0, 1), (1, 2), (1, 3)]).unwrap();
        let plan = AggPlan::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta = rand_vec(&mut rng, 8 * 3 + 3);
        let wts = rand_vec(&mut rng, 2 * 3);
        check(&theta, &|t, th| {
            let x = t.param(th, 0, 8, 3);
            let a = t.aggregate(x, &plan);
            let a = t.silu(a);
            let s = t.group_sum(a, 4, 0.5);
            let r = t.reshape(s, 1, 6);
            let r = t.reshape(r, 6, 1);
            t.dot(r, wts.clone())
        });
    }

    #[test]
    fn bernoulli_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = rand_vec(&mut rng, 12);
        let bits: Vec<u8> = (0..12).map(|_| rng.random_range(0..2)).collect();
        check(&theta, &|t, th| {
            let z = t.param(th, 0, 3, 4);
            let z = t.scale(z, 3.0);
            let lp = t.bernoulli_logprob(z, bits.clone());
            let h = t.bernoulli_entropy(z);
            let both = t.add(lp, h);
            t.dot(both, vec![0.3, -1.0, 2.0])
        });
    }

    #[test]
    fn clipped_logits_have_zero_gradient() {
        let theta = vec![40.0, -40.0];
        let mut t = Tape::new();
        let z = t.param(&theta, 0, 1, 2);
        let lp = t.bernoulli_logprob(z, vec![0, 1]);
        let s = t.sum_all(lp);
        assert_eq!(t.backward(s, 2), vec![0.0, 0.0]);
        assert!((t.scalar(s) - 2.0 * PROB_CLIP.ln()).abs() < 1e-8);
    }

    #[test]
    fn ppo_and_value_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = rand_vec(&mut rng, 6);
        // old log-probs far enough from the current ones that some rows clip
        let old: Vec<f64> = theta
            .iter()
            .map(|v| v + rng.random_range(-0.6..0.6))
            .collect();
        let adv = rand_vec(&mut rng, 6);
        let target = rand_vec(&mut rng, 6);
        let weights = rand_vec(&mut rng, 6);
        check(&theta, &|t, th| {
            let l = t.param(th, 0, 6, 1);
            let p = t.ppo_clip(l, &old, &adv, 0.2);
            let v = t.half_sq_err(l, &target);
            let s = t.add(p, v);
            t.dot(s, weights.clone())
        });
    }

    #[test]
    fn ppo_matches_unclipped_gradient_inside_trust_region() {
        let theta = vec![-0.3];
        let mut t = Tape::new();
        let l = t.param(&theta, 0, 1, 1);
        let p = t.ppo_clip(l, &[-0.3], &[2.0], 0.2);
        let s = t.sum_all(p);
        assert_eq!(t.scalar(s), 2.0);
        assert_eq!(t.backward(s, 1), vec![2.0]);
    }

    #[test]
    fn activation_counter() {
        let theta = vec![0.0; 4];
        let mut t = Tape::new();
        let p = t.param(&theta, 0, 2, 2);
        assert_eq!(t.activation_elements(), 0);
        let s = t.silu(p);
        t.sum_all(s);
        assert_eq!(t.activation_elements(), 5);
    }
}
