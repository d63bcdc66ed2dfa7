//! Finite mixtures of von Mises components.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circmath::Angle;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::vonmises::VonMises;

/// Weight sums further than this from one are rejected.
const WEIGHT_SUM_REJECT: f64 = 1e-6;
/// Weight sums between this and [`WEIGHT_SUM_REJECT`] away from one are
/// renormalized; closer sums are kept as given.
const WEIGHT_SUM_RENORMALIZE: f64 = 1e-9;

/// `log Σ exp(vᵢ)` with the max shifted out. Returns `−∞` for an empty slice
/// or when every entry is `−∞`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `Σ_j π_j vM(φ; μ_j, κ_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureParams", into = "MixtureParams")]
pub struct VonMisesMixture {
    components: Vec<VonMises>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MixtureParams {
    components: Vec<VonMises>,
    weights: Vec<f64>,
}

impl TryFrom<MixtureParams> for VonMisesMixture {
    type Error = Error;
    fn try_from(p: MixtureParams) -> Result<Self> {
        VonMisesMixture::new(p.components, p.weights)
    }
}

impl From<VonMisesMixture> for MixtureParams {
    fn from(m: VonMisesMixture) -> Self {
        MixtureParams {
            components: m.components,
            weights: m.weights,
        }
    }
}

impl VonMisesMixture {
    pub fn new(components: Vec<VonMises>, mut weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput);
        }
        if components.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: components.len(),
                right: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidWeights(format!("{weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        let drift = (total - 1.0).abs();
        if drift > WEIGHT_SUM_REJECT {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        if drift > WEIGHT_SUM_RENORMALIZE {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(VonMisesMixture {
            components,
            weights,
            log_weights,
        })
    }

    /// Equal-weight mixture, as produced by Monte Carlo over latent draws.
    pub fn equal_weights(components: Vec<VonMises>) -> Result<Self> {
        let k = components.len();
        Self::new(components, vec![1.0 / k as f64; k])
    }

    pub fn components(&self) -> &[VonMises] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    #[doc(alias = "mix_log_pdf")]
    pub fn log_pdf(&self, phi: Angle) -> f64 {
        self.log_pdf_radians(phi.radians())
    }

    pub fn log_pdf_radians(&self, phi: f64) -> f64 {
        // single-pass log-sum-exp, rescaling whenever the running max moves
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for (c, lw) in self.components.iter().zip(&self.log_weights) {
            let t = lw + c.log_pdf_radians(phi);
            if t == f64::NEG_INFINITY {
                continue;
            }
            if t > max {
                sum = sum * (max - t).exp() + 1.0;
                max = t;
            } else {
                sum += (t - max).exp();
            }
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + sum.ln()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Angle {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc && *w > 0.0 {
                chosen = j;
                break;
            }
        }
        // float drift can leave u ≥ acc; fall back to the last live component
        if self.weights[chosen] == 0.0 {
            chosen = self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(chosen);
        }
        self.components[chosen].sample_one(rng)
    }

    /// Ancestral sampling: categorical over weights, then the component.
    #[doc(alias = "mix_sample")]
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Angle> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }

    /// Grid argmax of the density, ties going to the smallest angle.
    #[doc(alias = "mix_mode_grid")]
    pub fn mode_grid(&self, grid_size: usize) -> Result<Angle> {
        if grid_size < 16 {
            return Err(Error::InvalidParameter(format!(
                "grid size {grid_size} is below the minimum of 16"
            )));
        }
        let h = TAU / grid_size as f64;
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..grid_size {
            let phi = i as f64 * h;
            let v = self.log_pdf_radians(phi);
            if v > best.1 {
                best = (phi, v);
            }
        }
        Ok(Angle::new(best.0))
    }
}
