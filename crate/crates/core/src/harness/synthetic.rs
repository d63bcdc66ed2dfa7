//! Synthetic regression tasks with a known conditional density `p(φ | x)`.
//!
//! Features are uniform on `[−1, 1]^d`. For seed-fixed random directions
//! `w₁, w₂, w₃`:
//!
//! * `μ(x) = 2·atan2(w₂ᵀx, w₁ᵀx)` (mod 2π),
//! * `κ(x) = softplus(w₃ᵀx + 1.5) + 0.5`, with `w₃` scaled so that `w₃ᵀx`
//!   has standard deviation 1.5.
//!
//! `Unimodal` uses a constant κ (5 unless overridden), `Heteroscedastic`
//! uses `κ(x)`, and `Bimodal` mixes `vM(μ(x), κ(x))` with `vM(μ(x) + π, κ(x))`
//! under weights `(0.6, 0.4)`. A κ override replaces `κ(x)` for any kind.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::data::{Dataset, Split, Targets};
use crate::circmath::{Angle, KAPPA_MAX};
use crate::decision::{mean_and_sem, MeanWithError};
use crate::error::{Error, Result};
use crate::heads::PredictiveDensity;
use crate::mixture::VonMisesMixture;
use crate::neuralnet::Tensor;
use crate::rng::{derive_seed, rng_from_seed};
use crate::vonmises::VonMises;

pub const DEFAULT_UNIMODAL_KAPPA: f64 = 5.0;
const KAPPA_OFFSET: f64 = 1.5;
const KAPPA_SPREAD: f64 = 1.5;
const ENTROPY_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Unimodal,
    Heteroscedastic,
    Bimodal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub dim: usize,
    /// Fixes the random directions `w₁, w₂, w₃`.
    pub seed: u64,
    pub kappa: Option<f64>,
    pub bimodal_weights: [f64; 2],
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, seed: u64) -> Self {
        SyntheticSpec {
            kind,
            dim: 8,
            seed,
            kappa: None,
            bimodal_weights: [0.6, 0.4],
        }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = Some(kappa);
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn with_weights(mut self, weights: [f64; 2]) -> Self {
        self.bimodal_weights = weights;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("feature dimension must be positive".into()));
        }
        if let Some(k) = self.kappa {
            if !(0.0..=KAPPA_MAX).contains(&k) {
                return Err(Error::InvalidParameter(format!("κ override out of range: {k}")));
            }
        }
        let [a, b] = self.bimodal_weights;
        if !(a >= 0.0 && b >= 0.0 && (a + b - 1.0).abs() <= 1e-9) {
            return Err(Error::InvalidWeights(format!("bimodal weights {:?} are not on the simplex", self.bimodal_weights)));
        }
        Ok(())
    }
}

/// A synthetic spec with its random directions drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    spec: SyntheticSpec,
    w1: Vec<f64>,
    w2: Vec<f64>,
    w3: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

impl SyntheticTask {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from_seed(derive_seed(spec.seed, 0));
        let mut draw = || -> Vec<f64> { (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect() };
        let (w1, w2, mut w3) = (draw(), draw(), draw());
        // Var(w₃ᵀx) = ‖w₃‖²/3 for x uniform on [−1, 1]^d
        let scale = KAPPA_SPREAD * 3f64.sqrt() / dot(&w3, &w3).sqrt();
        w3.iter_mut().for_each(|w| *w *= scale);
        Ok(SyntheticTask { spec, w1, w2, w3 })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn mean_direction(&self, x: &[f64]) -> Angle {
        Angle::new(2.0 * dot(&self.w2, x).atan2(dot(&self.w1, x)))
    }

    pub fn concentration(&self, x: &[f64]) -> f64 {
        match (self.spec.kappa, self.spec.kind) {
            (Some(k), _) => k,
            (None, SyntheticKind::Unimodal) => DEFAULT_UNIMODAL_KAPPA,
            (None, _) => (softplus(dot(&self.w3, x) + KAPPA_OFFSET) + 0.5).min(KAPPA_MAX),
        }
    }

    /// The true conditional density `p(φ | x)`.
    pub fn density(&self, x: &[f64]) -> Result<PredictiveDensity> {
        let mu = self.mean_direction(x);
        let kappa = self.concentration(x);
        let main = VonMises::new(mu, kappa)?;
        Ok(match self.spec.kind {
            SyntheticKind::Bimodal => {
                let flipped = VonMises::new(Angle::new(mu.radians() + PI), kappa)?;
                VonMisesMixture::new(vec![main, flipped], self.spec.bimodal_weights.to_vec())?.into()
            }
            _ => main.into(),
        })
    }

    pub fn log_density(&self, x: &[f64], phi: Angle) -> Result<f64> {
        Ok(self.density(x)?.log_pdf(phi))
    }

    /// `n` rows: `x` uniform on the cube, then `φ ~ p(φ | x)`.
    pub fn generate(&self, n: usize, seed: u64, split: Split) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let d = self.spec.dim;
        let mut rng = rng_from_seed(seed);
        let mut features = Vec::with_capacity(n * d);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let start = features.len();
            features.extend((0..d).map(|_| rng.random_range(-1.0..1.0)));
            targets.push(self.density(&features[start..])?.sample_one(&mut rng));
        }
        Dataset::new(Tensor::matrix(n, d, features)?, Targets::Single(targets), split)
    }

    /// Mean true log-density over the rows of `data`.
    pub fn bayes_log_likelihood(&self, data: &Dataset) -> Result<MeanWithError> {
        let x = data.features();
        let values = data
            .angles()?
            .iter()
            .enumerate()
            .map(|(r, phi)| self.log_density(x.row(r), *phi))
            .collect::<Result<Vec<_>>>()?;
        mean_and_sem(&values)
    }

    /// `E_φ[log p(φ | x)]` for one `x`: the negated conditional entropy,
    /// closed form for a single von Mises and by quadrature otherwise.
    pub fn negative_entropy(&self, x: &[f64]) -> Result<f64> {
        Ok(match self.density(x)? {
            PredictiveDensity::VonMises(d) => -d.entropy(),
            mix => mixture_negative_entropy(&mix),
        })
    }

    /// Mean of [`negative_entropy`](Self::negative_entropy) over the rows of `x`:
    /// the expected Bayes log-likelihood for those inputs.
    pub fn expected_bayes_log_likelihood(&self, x: &Tensor) -> Result<f64> {
        let mut total = 0.0;
        for r in 0..x.rows() {
            total += self.negative_entropy(x.row(r))?;
        }
        Ok(total / x.rows() as f64)
    }
}

fn mixture_negative_entropy(d: &PredictiveDensity) -> f64 {
    let h = std::f64::consts::TAU / ENTROPY_GRID as f64;
    (0..ENTROPY_GRID)
        .map(|i| {
            let lp = d.log_pdf_radians(i as f64 * h);
            lp.exp() * lp
        })
        .sum::<f64>()
        * h
}

/// Three independent synthetic tasks, one per (azimuth, elevation, tilt).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiAngleTask {
    tasks: [SyntheticTask; 3],
}

impl MultiAngleTask {
    /// Per-angle specs share `spec`'s settings, with seeds derived per angle.
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        let make = |i: u64| {
            SyntheticTask::new(SyntheticSpec {
                seed: derive_seed(spec.seed, 100 + i),
                ..spec
            })
        };
        Ok(MultiAngleTask {
            tasks: [make(0)?, make(1)?, make(2)?],
        })
    }

    pub fn tasks(&self) -> &[SyntheticTask; 3] {
        &self.tasks
    }

    pub fn generate(&self, n: usize, seed: u64, split: Split) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let d = self.tasks[0].spec.dim;
        let mut rng = rng_from_seed(seed);
        let mut features = Vec::with_capacity(n * d);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let start = features.len();
            features.extend((0..d).map(|_| rng.random_range(-1.0..1.0)));
            let x = &features[start..];
            let mut t = [Angle::ZERO; 3];
            for (slot, task) in t.iter_mut().zip(&self.tasks) {
                *slot = task.density(x)?.sample_one(&mut rng);
            }
            targets.push(t);
        }
        Dataset::new(Tensor::matrix(n, d, features)?, Targets::Triple(targets), split)
    }
}
