//! Bernoulli noising process, reverse-path sampling and exact path
//! log-likelihoods.
//!
//! Times run over `t ∈ {1..T}`. A path stores `X_0..X_T` indexed by `t`;
//! `step_logq[t − 1]` is `log q_θ(X_{t−1} | X_t)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::BoltzmannTarget;
use crate::error::{check_dim, Error, Result};

/// Policy probabilities are clipped to `[PROB_CLIP, 1 − PROB_CLIP]`.
pub const PROB_CLIP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
}

impl NoiseSchedule {
    /// `β_t = ½ exp(−6 ln2 (1 − t/T))`, evaluated as a power of two so that
    /// dyadic points come out exact.
    pub fn exponential(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidConfig(
                "diffusion needs at least one step".into(),
            ));
        }
        let t_max = n_steps as f64;
        let betas = (1..=n_steps)
            .map(|t| 0.5 * (-6.0 * (1.0 - t as f64 / t_max)).exp2())
            .collect();
        Ok(Self { betas })
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidConfig(
                "diffusion needs at least one step".into(),
            ));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b <= 0.5)) {
            return Err(Error::InvalidConfig(format!(
                "flip probability {b} outside (0, 0.5]"
            )));
        }
        Ok(Self { betas })
    }

    pub fn n_steps(&self) -> usize {
        self.betas.len()
    }

    /// Flip probability of step `t ∈ {1..T}`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }
}

/// `log p(x_t | x_prev)` under independent bit flips with probability `β`.
pub fn forward_kernel_logprob(x_t: &[u8], x_prev: &[u8], beta: f64) -> Result<f64> {
    check_dim(x_prev.len(), x_t.len())?;
    Ok(kernel_logprob(x_t, x_prev, beta))
}

fn kernel_logprob(x_t: &[u8], x_prev: &[u8], beta: f64) -> f64 {
    let flips = x_t.iter().zip(x_prev).filter(|(a, b)| a != b).count();
    let kept = x_t.len() - flips;
    kept as f64 * (1.0 - beta).ln() + flips as f64 * beta.ln()
}

/// Log density of the uniform stationary distribution over `n` bits.
pub fn stationary_logprob(n: usize) -> f64 {
    n as f64 * 0.5f64.ln()
}

/// Samples `X_1..X_T` from `X_0`; returns the states `X_0..X_T` and
/// `log p(X_{1:T} | X_0)`.
pub fn sample_forward_path<R: Rng>(
    schedule: &NoiseSchedule,
    x0: &[u8],
    rng: &mut R,
) -> (Vec<Vec<u8>>, f64) {
    let mut states = vec![x0.to_vec()];
    let mut log_p = 0.0;
    for t in 1..=schedule.n_steps() {
        let beta = schedule.beta(t);
        let prev = &states[t - 1];
        let next: Vec<u8> = prev
            .iter()
            .map(|&b| if rng.random::<f64>() < beta { 1 - b } else { b })
            .collect();
        log_p += kernel_logprob(&next, prev, beta);
        states.push(next);
    }
    (states, log_p)
}

/// A reverse-process conditional `q(X_{t−1} | X_t) = Π_i Bernoulli(q̂_i)`.
pub trait Policy {
    fn n_bits(&self) -> usize;

    /// `q̂ = q(X_{t−1,i} = 1 | X_t)` for a row-major batch of states `X_t`.
    fn probs(&self, states: &[u8], t: usize, n_steps: usize) -> Result<Vec<f64>>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn n_bits(&self) -> usize {
        (**self).n_bits()
    }

    fn probs(&self, states: &[u8], t: usize, n_steps: usize) -> Result<Vec<f64>> {
        (**self).probs(states, t, n_steps)
    }
}

/// Emits the same probability for every bit and step.
#[derive(Clone, Debug)]
pub struct ConstantPolicy {
    pub n_bits: usize,
    pub q: f64,
}

impl Policy for ConstantPolicy {
    fn n_bits(&self) -> usize {
        self.n_bits
    }

    fn probs(&self, states: &[u8], _t: usize, _n_steps: usize) -> Result<Vec<f64>> {
        check_dim(0, states.len() % self.n_bits)?;
        Ok(vec![self.q; states.len()])
    }
}

/// Reverses each step with the forward kernel itself: keep a bit with
/// probability `1 − β_t`.
#[derive(Clone, Debug)]
pub struct KernelMatchedPolicy {
    pub n_bits: usize,
    pub schedule: NoiseSchedule,
}

impl Policy for KernelMatchedPolicy {
    fn n_bits(&self) -> usize {
        self.n_bits
    }

    fn probs(&self, states: &[u8], t: usize, _n_steps: usize) -> Result<Vec<f64>> {
        check_dim(0, states.len() % self.n_bits)?;
        let beta = self.schedule.beta(t);
        Ok(states
            .iter()
            .map(|&b| if b == 1 { 1.0 - beta } else { beta })
            .collect())
    }
}

/// Wraps a closure `(state, t, T) -> q̂` applied to one state at a time.
pub struct FnPolicy<F> {
    pub n_bits: usize,
    pub f: F,
}

impl<F: Fn(&[u8], usize, usize) -> Vec<f64>> Policy for FnPolicy<F> {
    fn n_bits(&self) -> usize {
        self.n_bits
    }

    fn probs(&self, states: &[u8], t: usize, n_steps: usize) -> Result<Vec<f64>> {
        check_dim(0, states.len() % self.n_bits)?;
        Ok(states
            .chunks(self.n_bits)
            .flat_map(|x| (self.f)(x, t, n_steps))
            .collect())
    }
}

/// Sampled reverse trajectory `X_T → X_0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionPath {
    n_bits: usize,
    /// `(T + 1) × N`, row `t` holds `X_t`.
    states: Vec<u8>,
    pub step_logq: Vec<f64>,
    pub prior_logq: f64,
}

impl DiffusionPath {
    pub fn from_states(states: Vec<Vec<u8>>, step_logq: Vec<f64>) -> Result<Self> {
        let n = states.first().map_or(0, Vec::len);
        check_dim(states.len(), step_logq.len() + 1)?;
        let mut flat = Vec::with_capacity(n * states.len());
        for s in &states {
            check_dim(n, s.len())?;
            flat.extend_from_slice(s);
        }
        Ok(Self {
            n_bits: n,
            states: flat,
            step_logq,
            prior_logq: stationary_logprob(n),
        })
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn n_steps(&self) -> usize {
        self.step_logq.len()
    }

    /// `X_t` for `t ∈ {0..T}`.
    pub fn state(&self, t: usize) -> &[u8] {
        &self.states[t * self.n_bits..(t + 1) * self.n_bits]
    }

    pub fn x0(&self) -> &[u8] {
        self.state(0)
    }

    /// `log q_θ(X_{0:T})`.
    pub fn log_q(&self) -> f64 {
        self.prior_logq + self.step_logq.iter().sum::<f64>()
    }
}

/// Log-likelihood of `x` under independent Bernoulli(q̂) bits.
pub fn bernoulli_logprob(x: &[u8], q: &[f64]) -> f64 {
    x.iter()
        .zip(q)
        .map(|(&b, &p)| if b == 1 { p.ln() } else { (1.0 - p).ln() })
        .sum()
}

fn check_probs(q: &[f64]) -> Result<()> {
    match q.iter().position(|p| !(*p > 0.0 && *p < 1.0)) {
        Some(index) => Err(Error::ProbabilityOutOfRange {
            index,
            value: q[index],
        }),
        None => Ok(()),
    }
}

/// RNG stream owned by path `index` of a batch drawn with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Output of a batched reverse sampling run.
#[derive(Clone, Debug)]
pub struct SampledBatch {
    pub paths: Vec<DiffusionPath>,
    /// `q̂` of the last step, `X_0 ~ Π Bernoulli(q̂)`, one row per path.
    pub final_probs: Vec<Vec<f64>>,
}

/// Draws `n_paths` reverse trajectories. Path `k` uses only the stream
/// `path_rng(seed, first_index + k)`, so results do not depend on batching.
pub fn sample_reverse_paths<P: Policy + ?Sized>(
    policy: &P,
    schedule: &NoiseSchedule,
    n_paths: usize,
    seed: u64,
    first_index: u64,
) -> Result<SampledBatch> {
    let n = policy.n_bits();
    let t_max = schedule.n_steps();
    let mut rngs: Vec<_> = (0..n_paths as u64)
        .map(|k| path_rng(seed, first_index + k))
        .collect();

    let mut current: Vec<u8> = Vec::with_capacity(n_paths * n);
    for rng in rngs.iter_mut() {
        current.extend((0..n).map(|_| rng.random::<bool>() as u8));
    }
    // per path, states from X_T down to X_0
    let mut rev_states: Vec<Vec<u8>> = (0..n_paths)
        .map(|k| {
            let mut v = Vec::with_capacity((t_max + 1) * n);
            v.extend_from_slice(&current[k * n..(k + 1) * n]);
            v
        })
        .collect();
    let mut step_logq = vec![vec![0.0; t_max]; n_paths];
    let mut final_probs = Vec::new();

    for t in (1..=t_max).rev() {
        let q = policy.probs(&current, t, t_max)?;
        check_dim(current.len(), q.len())?;
        check_probs(&q)?;
        for (k, rng) in rngs.iter_mut().enumerate() {
            let qk = &q[k * n..(k + 1) * n];
            let next: Vec<u8> = qk
                .iter()
                .map(|&p| (rng.random::<f64>() < p) as u8)
                .collect();
            step_logq[k][t - 1] = bernoulli_logprob(&next, qk);
            current[k * n..(k + 1) * n].copy_from_slice(&next);
            rev_states[k].extend_from_slice(&next);
        }
        if t == 1 {
            final_probs = q.chunks(n.max(1)).map(<[f64]>::to_vec).collect();
        }
    }

    let paths = rev_states
        .into_iter()
        .zip(step_logq)
        .map(|(rev, logq)| {
            let mut states = Vec::with_capacity(rev.len());
            for t in 0..=t_max {
                let r = t_max - t;
                states.extend_from_slice(&rev[r * n..(r + 1) * n]);
            }
            DiffusionPath {
                n_bits: n,
                states,
                step_logq: logq,
                prior_logq: stationary_logprob(n),
            }
        })
        .collect();
    Ok(SampledBatch { paths, final_probs })
}

/// Teacher-forced `log q(X_{t−1} | X_t)` for every step of `path`.
pub fn path_step_logq<P: Policy + ?Sized>(
    policy: &P,
    schedule: &NoiseSchedule,
    path: &DiffusionPath,
) -> Result<Vec<f64>> {
    check_dim(policy.n_bits(), path.n_bits())?;
    check_dim(schedule.n_steps(), path.n_steps())?;
    (1..=path.n_steps())
        .map(|t| {
            let q = policy.probs(path.state(t), t, path.n_steps())?;
            check_probs(&q)?;
            Ok(bernoulli_logprob(path.state(t - 1), &q))
        })
        .collect()
}

/// Exact `log q_θ(X_{0:T})` of a stored path.
pub fn path_log_q<P: Policy + ?Sized>(
    policy: &P,
    schedule: &NoiseSchedule,
    path: &DiffusionPath,
) -> Result<f64> {
    Ok(path.prior_logq + path_step_logq(policy, schedule, path)?.iter().sum::<f64>())
}

/// `Σ_t log p(X_t | X_{t−1})`.
pub fn path_log_forward(schedule: &NoiseSchedule, path: &DiffusionPath) -> Result<f64> {
    check_dim(schedule.n_steps(), path.n_steps())?;
    Ok((1..=path.n_steps())
        .map(|t| kernel_logprob(path.state(t), path.state(t - 1), schedule.beta(t)))
        .sum())
}

/// `log p̂(X_{0:T}) = −β H(X_0) + Σ_t log p(X_t | X_{t−1})`, with no factor
/// for the stationary density of `X_T`.
pub fn path_log_p_hat(
    target: &BoltzmannTarget,
    schedule: &NoiseSchedule,
    path: &DiffusionPath,
) -> Result<f64> {
    Ok(target.log_unnormalized(path.x0())? + path_log_forward(schedule, path)?)
}

// ---------------------------------------------------------------------------
// Binary path records
// ---------------------------------------------------------------------------

const PATH_MAGIC: &[u8; 4] = b"SDDP";
const PATH_VERSION: u32 = 1;

fn pack_bits(bits: &[u8], out: &mut Vec<u8>) {
    for chunk in bits.chunks(8) {
        out.push(
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (b << i)),
        );
    }
}

/// Packs paths as `magic, version, N, T, count`, then per path the bit
/// planes of `X_0..X_T`, `prior_logq` and `step_logq`, all little-endian.
pub fn encode_paths(paths: &[DiffusionPath]) -> Result<Vec<u8>> {
    let (n, t) = paths.first().map_or((0, 0), |p| (p.n_bits, p.n_steps()));
    let mut out = Vec::new();
    out.extend_from_slice(PATH_MAGIC);
    for v in [PATH_VERSION, n as u32, t as u32, paths.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in paths {
        check_dim(n, p.n_bits)?;
        check_dim(t, p.n_steps())?;
        for s in 0..=t {
            pack_bits(p.state(s), &mut out);
        }
        out.extend_from_slice(&p.prior_logq.to_le_bytes());
        for l in &p.step_logq {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.buf.len() < k {
            return Err(Error::Parse("truncated path record".into()));
        }
        let (head, rest) = self.buf.split_at(k);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn decode_paths(buf: &[u8]) -> Result<Vec<DiffusionPath>> {
    let mut r = Reader { buf };
    if r.take(4)? != PATH_MAGIC {
        return Err(Error::Parse("not a path record".into()));
    }
    let version = r.u32()?;
    if version != PATH_VERSION {
        return Err(Error::Parse(format!(
            "unsupported path record version {version}"
        )));
    }
    let n = r.u32()? as usize;
    let t = r.u32()? as usize;
    let count = r.u32()? as usize;
    let plane = n.div_ceil(8);
    let mut paths = Vec::with_capacity(count);
    for _ in 0..count {
        let mut states = Vec::with_capacity((t + 1) * n);
        for _ in 0..=t {
            let packed = r.take(plane)?;
            states.extend((0..n).map(|i| (packed[i / 8] >> (i % 8)) & 1));
        }
        let prior_logq = r.f64()?;
        let step_logq = (0..t).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        paths.push(DiffusionPath {
            n_bits: n,
            states,
            step_logq,
            prior_logq,
        });
    }
    if !r.buf.is_empty() {
        return Err(Error::Parse("trailing bytes in path record".into()));
    }
    Ok(paths)
}
