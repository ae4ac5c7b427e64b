//! Rounding a product distribution to a binary solution by conditional
//! expectation.

use crate::energy::EnergyModel;
use crate::error::{check_dim, Error, Result};

/// Independent Bernoulli probabilities, one per bit.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductDistribution(Vec<f64>);

impl ProductDistribution {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if let Some(index) = v.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::ProbabilityOutOfRange {
                index,
                value: v[index],
            });
        }
        Ok(Self(v))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Visits coordinates by descending probability (lower index first on
/// ties) and fixes each to the bit with the lower relaxed energy, keeping 1
/// on ties.
pub fn conditional_expectation(
    v: &ProductDistribution,
    energy: impl Fn(&[f64]) -> f64,
) -> Result<Vec<u8>> {
    let mut x = v.probs().to_vec();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]));
    for i in order {
        x[i] = 1.0;
        let h1 = energy(&x);
        x[i] = 0.0;
        let h0 = energy(&x);
        if !h0.is_finite() || !h1.is_finite() {
            return Err(Error::NonFinite(format!(
                "relaxed energy while fixing bit {i}"
            )));
        }
        x[i] = if h1 <= h0 { 1.0 } else { 0.0 };
    }
    Ok(x.iter().map(|&b| b as u8).collect())
}

/// [`conditional_expectation`] against the multilinear extension of `model`.
pub fn decode_with_model(v: &ProductDistribution, model: &EnergyModel) -> Result<Vec<u8>> {
    check_dim(model.n_bits(), v.len())?;
    conditional_expectation(v, |x| model.relaxed_energy(x).unwrap_or(f64::NAN))
}
