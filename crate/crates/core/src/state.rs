//! Binary configurations `X ∈ {0,1}^N` and their spin view `σ = 2X − 1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary configuration of `N` variables.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BitState(Vec<u8>);

impl BitState {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(i) = bits.iter().position(|&b| b > 1) {
            return Err(Error::Parse(format!("bit {i} has value {}", bits[i])));
        }
        Ok(Self(bits))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1; n])
    }

    /// Bit `i` of the returned state is bit `i` of `index`.
    pub fn from_index(index: u64, n: usize) -> Self {
        Self((0..n).map(|i| ((index >> i) & 1) as u8).collect())
    }

    pub fn to_index(&self) -> u64 {
        bits_to_index(&self.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bits(self) -> Vec<u8> {
        self.0
    }

    pub fn spin(&self, i: usize) -> f64 {
        spin(self.0[i])
    }

    pub fn spins(&self) -> Vec<f64> {
        self.0.iter().map(|&b| spin(b)).collect()
    }

    pub fn flipped(&self) -> Self {
        Self(self.0.iter().map(|&b| 1 - b).collect())
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }
}

impl fmt::Debug for BitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitState(")?;
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        write!(f, ")")
    }
}

impl AsRef<[u8]> for BitState {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

#[inline]
pub fn spin(bit: u8) -> f64 {
    2.0 * bit as f64 - 1.0
}

pub fn bits_to_index(bits: &[u8]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i))
}

pub fn index_to_bits(index: u64, out: &mut [u8]) {
    for (i, b) in out.iter_mut().enumerate() {
        *b = ((index >> i) & 1) as u8;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let s = BitState::from_index(0b1011, 5);
        assert_eq!(s.bits(), &[1, 1, 0, 1, 0]);
        assert_eq!(s.to_index(), 0b1011);
    }

    #[test]
    fn rejects_non_binary() {
        assert!(BitState::new(vec![0, 2]).is_err());
    }

    #[test]
    fn spin_view() {
        let s = BitState::new(vec![0, 1]).unwrap();
        assert_eq!(s.spins(), vec![-1.0, 1.0]);
    }
}
