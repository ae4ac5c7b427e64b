//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `SDDC`, format version, the architecture
//! as length-prefixed JSON, `θ`, the optimizer state, the RNG state and a
//! length-prefixed JSON blob owned by the training driver.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nets::model::Architecture;
use crate::nets::optim::{Adam, LrSchedule};

const MAGIC: &[u8; 4] = b"SDDC";
pub const FORMAT_VERSION: u32 = 1;

/// Exact position of a ChaCha stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: Architecture,
    pub theta: Vec<f64>,
    pub optimizer: Adam,
    pub rng: RngState,
    /// Driver-defined JSON (run configuration, counters, running stats).
    pub trainer: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.bytes(
            serde_json::to_string(&self.arch)
                .expect("architecture serializes")
                .as_bytes(),
        );
        w.f64s(&self.theta);
        let o = &self.optimizer;
        for v in [o.beta1, o.beta2, o.eps, o.schedule.peak] {
            w.f64(v);
        }
        w.u64(o.schedule.total_steps);
        w.u64(o.step);
        w.f64s(&o.m);
        w.f64s(&o.v);
        w.buf.extend_from_slice(&self.rng.seed);
        w.u64(self.rng.stream);
        w.buf.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        w.bytes(self.trainer.as_bytes());
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf };
        if r.take(4)? != MAGIC {
            return Err(Error::Parse("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let arch: Architecture = serde_json::from_slice(r.bytes()?)
            .map_err(|e| Error::Parse(format!("checkpoint architecture: {e}")))?;
        let theta = r.f64s()?;
        let (beta1, beta2, eps, peak) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let total_steps = r.u64()?;
        let step = r.u64()?;
        let m = r.f64s()?;
        let v = r.f64s()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let trainer = String::from_utf8(r.bytes()?.to_vec())
            .map_err(|_| Error::Parse("checkpoint trainer state is not UTF-8".into()))?;
        if !r.buf.is_empty() {
            return Err(Error::Parse("trailing bytes in checkpoint".into()));
        }
        if m.len() != theta.len() || v.len() != theta.len() {
            return Err(Error::Parse(
                "optimizer state does not match parameters".into(),
            ));
        }
        Ok(Self {
            arch,
            theta,
            optimizer: Adam {
                beta1,
                beta2,
                eps,
                schedule: LrSchedule { peak, total_steps },
                step,
                m,
                v,
            },
            rng: RngState {
                seed,
                stream,
                word_pos,
            },
            trainer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // write-then-rename so an interrupted save keeps the previous file
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.buf.len() < k {
            return Err(Error::Parse("truncated checkpoint".into()));
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

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()? as usize;
        if n > self.buf.len() {
            return Err(Error::Parse("truncated checkpoint".into()));
        }
        Ok(n)
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len()?;
        self.take(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        rng.set_stream(3);
        for _ in 0..5 {
            rng.next_u64();
        }
        let mut opt = Adam::new(
            3,
            LrSchedule {
                peak: 1e-3,
                total_steps: 100,
            },
        );
        let mut theta = vec![0.1, -0.2, 0.3];
        opt.update(&mut theta, &[1.0, 2.0, -3.0]).unwrap();
        Checkpoint {
            arch: Architecture::Mlp {
                n_bits: 3,
                hidden: 4,
                layers: 1,
                value_head: true,
            },
            theta,
            optimizer: opt,
            rng: RngState::capture(&rng),
            trainer: "{\"epoch\":3}".into(),
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rng_resumes_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        rng.next_u32();
        let state = RngState::capture(&rng);
        let mut resumed = state.restore();
        for _ in 0..10 {
            assert_eq!(rng.next_u64(), resumed.next_u64());
        }
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        let c = sample();
        c.save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), c);
        let bytes = c.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(b"nope").is_err());
    }
}
